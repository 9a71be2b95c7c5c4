"""High-order covariance matrices, their local standard form, and separability decisions.

Local transforms act on the (q_k, p_k) and (q_lm, p_lm) blocks separately.  A
2x2 real S preserves the block commutator ``J = adiag(f, -f)`` iff det S = 1,
so the local group is SL(2, R) on each side.

Reduction to the sparse standard form

    [[n1, 0, s1, 0], [0, n2, 0, s2], [s1, 0, m1, 0], [0, s2, 0, m2]]

with ``(2 n2 - f_k)/(2 n1 - f_k) = (2 m2 - f_lm)/(2 m1 - f_lm)`` and
``2(|s1| - |s2|) = sqrt(nn1 mm1) - sqrt(nn2 mm2)`` proceeds in three steps:

1. per-block Williamson: ``S A S^T = sqrt(det A) I``;
2. proper rotations from the SVD of the transformed correlation block;
3. a squeeze pair ``diag(r, 1/r)``, ``diag(r', 1/r')``: ``r'`` follows in
   closed form from the ratio condition, ``r`` from 1-D root-finding on the
   second condition.

Canonical output: ``|s1| >= |s2|`` and ``s1 >= 0``.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass

import numpy as np
from scipy.optimize import brentq

from .criteria import uncertainty_matrix
from .moments import MomentTable, pair_of

PHYS_TOL = 1e-8
BOUNDARY_TOL = 1e-9
DEGENERATE_TOL = 1e-13
SQUEEZE_BRACKET = (1e-3, 1e3)

ROT90 = np.array([[0.0, 1.0], [-1.0, 0.0]])


class StandardFormError(RuntimeError):
    pass


class UnphysicalCovarianceError(ValueError):
    pass


class Separability(enum.Enum):
    SEPARABLE = "separable"
    ENTANGLED = "entangled"
    INDETERMINATE = "indeterminate"


@dataclass(frozen=True, eq=False)
class CovarianceMatrixN:
    n: int
    k: int
    V: np.ndarray
    f_k: float
    f_lm: float

    def __post_init__(self):
        v = np.asarray(self.V, dtype=float)
        if v.shape != (4, 4):
            raise ValueError(f"covariance matrix must be 4x4, got {v.shape}")
        if np.max(np.abs(v - v.T)) > 1e-10 * max(1.0, np.max(np.abs(v))):
            raise ValueError("covariance matrix is not symmetric")
        v = 0.5 * (v + v.T)
        if np.linalg.eigvalsh(v)[0] <= 0:
            raise UnphysicalCovarianceError("covariance matrix is not positive definite")
        object.__setattr__(self, "V", v)

    @property
    def A(self) -> np.ndarray:
        return self.V[:2, :2]

    @property
    def B(self) -> np.ndarray:
        return self.V[2:, 2:]

    @property
    def C(self) -> np.ndarray:
        return self.V[:2, 2:]

    @property
    def scale(self) -> float:
        return max(1.0, abs(self.f_k), abs(self.f_lm))

    def uncertainty_min_eigenvalue(self) -> float:
        return float(np.linalg.eigvalsh(uncertainty_matrix(self.V, self.f_k, self.f_lm))[0])

    def transformed(self, s_k: np.ndarray, s_lm: np.ndarray) -> CovarianceMatrixN:
        s = np.zeros((4, 4))
        s[:2, :2] = s_k
        s[2:, 2:] = s_lm
        return CovarianceMatrixN(self.n, self.k, s @ self.V @ s.T, self.f_k, self.f_lm)


def covariance_matrix(table: MomentTable, n: int, k: int) -> CovarianceMatrixN:
    pair_of(k)
    b = table.block(n, k)
    return CovarianceMatrixN(n, k, b.cov, b.f_k, b.f_lm)


@dataclass(frozen=True, eq=False)
class StandardForm:
    """Standard-form parameters; ``excess_*`` hold 2 n_i - f_k and 2 m_i - f_lm."""

    n1: float
    n2: float
    m1: float
    m2: float
    s1: float
    s2: float
    f_k: float
    f_lm: float
    excess_k: tuple[float, float]
    excess_lm: tuple[float, float]
    S_k: np.ndarray
    S_lm: np.ndarray
    symplectic_residual: tuple[float, float] = (0.0, 0.0)
    pattern_residual: float = 0.0
    n: int | None = None
    k: int | None = None

    @classmethod
    def from_parameters(cls, n1, n2, m1, m2, s1, s2, f_k, f_lm, **kw) -> StandardForm:
        return cls(n1, n2, m1, m2, s1, s2, f_k, f_lm, (2 * n1 - f_k, 2 * n2 - f_k), (2 * m1 - f_lm, 2 * m2 - f_lm),
                   kw.pop("S_k", np.eye(2)), kw.pop("S_lm", np.eye(2)), **kw)

    @property
    def params(self) -> np.ndarray:
        return np.array([self.n1, self.n2, self.m1, self.m2, self.s1, self.s2])

    @property
    def matrix(self) -> np.ndarray:
        return np.array(
            [
                [self.n1, 0, self.s1, 0],
                [0, self.n2, 0, self.s2],
                [self.s1, 0, self.m1, 0],
                [0, self.s2, 0, self.m2],
            ]
        )

    def constraint_residuals(self) -> tuple[float, float]:
        """Residuals of the ratio relation and the |s| relation."""
        nn1, nn2 = self.excess_k
        mm1, mm2 = self.excess_lm
        if nn1 > 0 and mm1 > 0:
            ratio = abs(nn2 / nn1 - mm2 / mm1)
        else:
            ratio = abs(nn2 * mm1 - mm2 * nn1)
        root = math.sqrt(max(nn1 * mm1, 0.0)) - math.sqrt(max(nn2 * mm2, 0.0))
        return ratio, abs(2 * (abs(self.s1) - abs(self.s2)) - root)

    def to_row(self) -> dict:
        r1, r2 = self.constraint_residuals()
        return {
            "n": self.n, "k": self.k,
            "n1": self.n1, "n2": self.n2, "m1": self.m1, "m2": self.m2, "s1": self.s1, "s2": self.s2,
            "f_k": self.f_k, "f_lm": self.f_lm, "ratio_residual": r1, "s_residual": r2,
        }


def _proper(u: np.ndarray) -> tuple[np.ndarray, float]:
    if np.linalg.det(u) < 0:
        u = u.copy()
        u[:, 1] *= -1
        return u, -1.0
    return u, 1.0


def williamson_2x2(a: np.ndarray) -> np.ndarray:
    """S in SL(2, R) with S a S^T = sqrt(det a) I, for positive-definite a."""
    lam, rot = np.linalg.eigh(a)
    rot, _ = _proper(rot)
    d = np.diag([(lam[1] / lam[0]) ** 0.25, (lam[0] / lam[1]) ** 0.25])
    return d @ rot.T


def _excess(det: float, f: float) -> float:
    """2 sqrt(det) - f, rationalized."""
    return (4 * det - f * f) / (2 * math.sqrt(det) + f)


def _squeezed_excess(e0: float, f: float, z: float) -> tuple[float, float]:
    """(2 d r^2 - f, 2 d / r^2 - f) where 2d = f + e0 and r^2 = 1 + z."""
    e1 = e0 + (f + e0) * z
    e2 = (e0 - f * z) / (1 + z)
    return max(e1, 0.0), max(e2, 0.0)


def _partner_z(nn1: float, nn2: float, mm0: float, F: float) -> float:
    """z' = r'^2 - 1 solving mm2 / mm1 = nn2 / nn1 on the lm block."""
    qa = nn2 * (F + mm0)
    qb = nn2 * (F + 2 * mm0) + F * nn1
    qc = mm0 * (nn2 - nn1)
    if qb <= 0:
        return 0.0
    disc = max(qb * qb - 4 * qa * qc, 0.0)
    return -2 * qc / (qb + math.sqrt(disc))


def reduce_to_standard_form(cov: CovarianceMatrixN, tol: float = PHYS_TOL) -> StandardForm:
    f, F = cov.f_k, cov.f_lm
    if f <= 0 or F <= 0:
        raise UnphysicalCovarianceError(f"commutator expectations must be positive, got f_k={f}, f_lm={F}")
    lam = cov.uncertainty_min_eigenvalue()
    if lam < -tol * cov.scale:
        raise UnphysicalCovarianceError(f"covariance violates the uncertainty relation (min eigenvalue {lam:.3e})")

    # 1. Williamson on each local block
    w_k = williamson_2x2(cov.A)
    w_lm = williamson_2x2(cov.B)
    det_a, det_b = np.linalg.det(cov.A), np.linalg.det(cov.B)
    a, b = math.sqrt(det_a), math.sqrt(det_b)

    # 2. proper rotations diagonalizing the correlation block
    c1 = w_k @ cov.C @ w_lm.T
    u, sig, vt = np.linalg.svd(c1)
    u, su = _proper(u)
    v, sv = _proper(vt.T)
    c_diag = (sig[0], sig[1] * su * sv)
    t_k = u.T @ w_k
    t_lm = v.T @ w_lm

    # 3. constraint-fixing squeeze pair
    nn0, mm0 = _excess(det_a, f), _excess(det_b, F)
    degenerate = nn0 <= DEGENERATE_TOL * cov.scale or mm0 <= DEGENERATE_TOL * cov.scale
    if degenerate:
        nn0, mm0 = max(nn0, 0.0), max(mm0, 0.0)
        u_k = u_lm = 0.0
        nn = (nn0, nn0)
        mm = (mm0, mm0)
    else:
        half_width = min(0.5 * math.log1p(nn0 / f), math.log(SQUEEZE_BRACKET[1]))

        def state(t):
            uk = t * half_width
            nn1, nn2 = _squeezed_excess(nn0, f, math.expm1(2 * uk))
            zm = _partner_z(nn1, nn2, mm0, F)
            mm1, mm2 = _squeezed_excess(mm0, F, zm)
            return uk, 0.5 * math.log1p(zm), (nn1, nn2), (mm1, mm2)

        def gap(t):
            uk, ulm, (nn1, nn2), (mm1, mm2) = state(t)
            rs = math.exp(uk + ulm)
            return 2 * (abs(c_diag[0]) * rs - abs(c_diag[1]) / rs) - (math.sqrt(nn1 * mm1) - math.sqrt(nn2 * mm2))

        g_lo, g_hi = gap(-1.0), gap(1.0)
        if g_lo == 0:
            t_root = -1.0
        elif g_hi == 0:
            t_root = 1.0
        elif g_lo * g_hi > 0:
            raise StandardFormError(
                f"squeeze root not bracketed: gap({-half_width:.3e}) = {g_lo:.3e}, gap({half_width:.3e}) = {g_hi:.3e}; "
                f"best residual {min(abs(g_lo), abs(g_hi)):.3e}"
            )
        else:
            t_root = brentq(gap, -1.0, 1.0, xtol=1e-15, rtol=4 * np.finfo(float).eps, maxiter=500)
        u_k, u_lm, nn, mm = state(t_root)

    r_k, r_lm = math.exp(u_k), math.exp(u_lm)
    s_k = np.diag([r_k, 1 / r_k]) @ t_k
    s_lm = np.diag([r_lm, 1 / r_lm]) @ t_lm
    n1, n2 = a * r_k**2, a / r_k**2
    m1, m2 = b * r_lm**2, b / r_lm**2
    s1, s2 = c_diag[0] * r_k * r_lm, c_diag[1] / (r_k * r_lm)

    # canonical ordering |s1| >= |s2| (ties broken by n1 >= n2), then s1 >= 0
    swap = abs(s2) > abs(s1) * (1 + 1e-12) or (abs(abs(s2) - abs(s1)) <= 1e-12 * abs(s1) and n2 > n1 * (1 + 1e-12))
    if swap:
        n1, n2, m1, m2, s1, s2 = n2, n1, m2, m1, s2, s1
        nn, mm = nn[::-1], mm[::-1]
        s_k, s_lm = ROT90 @ s_k, ROT90 @ s_lm
    if s1 < 0:
        s1, s2 = -s1, -s2
        s_lm = -s_lm
    if np.trace(s_k) < 0:
        s_k, s_lm = -s_k, -s_lm

    out = cov.transformed(s_k, s_lm).V
    pattern = np.array([out[0, 1], out[0, 3], out[1, 2], out[2, 3]])
    return StandardForm(
        n1, n2, m1, m2, s1, s2, f, F, tuple(nn), tuple(mm), s_k, s_lm,
        symplectic_residual=(abs(np.linalg.det(s_k) - 1), abs(np.linalg.det(s_lm) - 1)),
        pattern_residual=float(np.max(np.abs(pattern))),
        n=cov.n,
        k=cov.k,
    )


@dataclass(frozen=True)
class Theorem2Decision:
    decision: Separability
    margin: float
    witness: float
    gain: float
    boundary: bool = False
    degenerate: bool = False

    @property
    def witness_entangled(self) -> bool:
        # in standard form the dressed witness equals twice the margin
        return self.witness < -2 * BOUNDARY_TOL


def dressed_witness(sf: StandardForm, g: float) -> float:
    """F for u = g q_k - sgn(s1) q_lm / g, v = g p_k - sgn(s2) p_lm / g on the standard form.

    With s1 > 0 > s2 this is the plain combination u = g q - q/g, v = g p + p/g.
    """
    sign1 = 1.0 if sf.s1 >= 0 else -1.0
    dress2 = 1.0 if sf.s2 == 0 else -math.copysign(1.0, sf.s2)
    cu = np.array([g, 0.0, -sign1 / g, 0.0])
    cv = np.array([0.0, g, 0.0, dress2 / g])
    v = sf.matrix
    return float(cu @ v @ cu + cv @ v @ cv - g * g * sf.f_k - sf.f_lm / (g * g))


def theorem2_decide(sf: StandardForm, tol: float = BOUNDARY_TOL) -> Theorem2Decision:
    nn1, nn2 = sf.excess_k
    mm1, mm2 = sf.excess_lm
    scale = max(1.0, abs(sf.f_k), abs(sf.f_lm))
    if min(nn1, nn2, mm1, mm2) < -PHYS_TOL * scale:
        raise UnphysicalCovarianceError(f"negative standard-form excess: {sf.excess_k}, {sf.excess_lm}")
    p1 = math.sqrt(max(nn1 * mm1, 0.0))
    p2 = math.sqrt(max(nn2 * mm2, 0.0))
    margin = min(p1 - 2 * abs(sf.s1), p2 - 2 * abs(sf.s2))
    if nn1 <= DEGENERATE_TOL * scale or mm1 <= DEGENERATE_TOL * scale:
        # optimal gain diverges; only an uncorrelated block is decidable
        decision = Separability.SEPARABLE if max(abs(sf.s1), abs(sf.s2)) <= tol else Separability.INDETERMINATE
        return Theorem2Decision(decision, margin, dressed_witness(sf, 1.0), 1.0, abs(margin) < tol, True)
    g = (mm1 / nn1) ** 0.25
    decision = Separability.SEPARABLE if margin >= -tol else Separability.ENTANGLED
    return Theorem2Decision(decision, margin, dressed_witness(sf, g), g, abs(margin) < tol)


def gaussian_analog(sf: StandardForm) -> np.ndarray:
    """Standard form rescaled to unit commutators: a Gaussian covariance with vacuum 1/2."""
    if sf.f_k <= 0 or sf.f_lm <= 0:
        raise ValueError(f"need positive commutator expectations, got f_k={sf.f_k}, f_lm={sf.f_lm}")
    d = np.diag(1 / np.sqrt([sf.f_k, sf.f_k, sf.f_lm, sf.f_lm]))
    return d @ sf.matrix @ d


_OMEGA = np.array([[0, 1, 0, 0], [-1, 0, 0, 0], [0, 0, 0, 1], [0, 0, -1, 0]], dtype=float)


def simon_ppt_oracle(v_g: np.ndarray, tol: float = BOUNDARY_TOL) -> Separability:
    """Two-mode Gaussian PPT test: flip the second momentum, re-check V + (i/2) Omega >= 0."""
    v_g = np.asarray(v_g, dtype=float)
    if np.linalg.eigvalsh(v_g + 0.5j * _OMEGA)[0] < -tol:
        raise UnphysicalCovarianceError("Gaussian covariance violates the uncertainty relation")
    flip = np.diag([1.0, 1.0, 1.0, -1.0])
    pt = flip @ v_g @ flip
    lam = np.linalg.eigvalsh(pt + 0.5j * _OMEGA)[0]
    return Separability.SEPARABLE if lam >= -tol else Separability.ENTANGLED


def random_sl2(rng: np.random.Generator, max_squeeze: float = 1.0) -> np.ndarray:
    """Random local transform R(a) diag(e^r, e^-r) R(b)."""

    def rot(t):
        return np.array([[math.cos(t), -math.sin(t)], [math.sin(t), math.cos(t)]])

    r = rng.uniform(-max_squeeze, max_squeeze)
    return rot(rng.uniform(0, 2 * math.pi)) @ np.diag([math.exp(r), math.exp(-r)]) @ rot(rng.uniform(0, 2 * math.pi))
