"""Full-inseparability and genuine-entanglement witnesses over a moment table.

For bipartition ``k | lm`` and gain ``g`` the combinations are
``u = g q_k - q_lm / g`` and ``v = g p_k + p_lm / g``; the witness

    F = Var(u) + Var(v) - g^2 <f_k> - <f_lm> / g^2

is non-negative for every state separable across ``k | lm``.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field
from typing import Mapping

import numpy as np
from scipy.optimize import minimize_scalar

from .moments import BIPARTITIONS, MomentTable, pair_of

PSD_TOL = 1e-8
ROUND_TOL = 1e-12  # relative to the size of the bound terms


class WitnessKind(enum.Enum):
    FULL_INSEPARABILITY = "F"
    GENUINE = "W"


@dataclass(frozen=True)
class GainVector:
    """Gains g_{k,n}; unlisted (k, n) pairs fall back to ``default``."""

    gains: Mapping[tuple[int, int], float] = field(default_factory=dict)
    default: float = 1.0

    def __post_init__(self):
        for key, g in {**dict(self.gains), "default": self.default}.items():
            if g == 0 or not math.isfinite(g):
                raise ValueError(f"gain {key} must be a finite nonzero real, got {g}")

    def get(self, k: int, n: int) -> float:
        return float(self.gains.get((k, n), self.default))

    @classmethod
    def uniform(cls, g: float) -> GainVector:
        return cls({}, g)


def _gain(g, k: int, n: int) -> float:
    if isinstance(g, GainVector):
        return g.get(k, n)
    g = float(g)
    if g == 0 or not math.isfinite(g):
        raise ValueError(f"gain must be a finite nonzero real, got {g}")
    return g


@dataclass(frozen=True)
class WitnessResult:
    kind: WitnessKind
    n: int
    value: float
    k: int | None = None
    gains: tuple[float, ...] = ()
    label: object = None
    extra: Mapping[str, object] = field(default_factory=dict)
    scale: float = 1.0

    @property
    def violated(self) -> bool:
        """Negative beyond rounding noise of the bound terms."""
        return self.value < -ROUND_TOL * self.scale

    def to_row(self) -> dict:
        row = {"kind": self.kind.value, "n": self.n, "k": self.k, "value": self.value, "gains": list(self.gains)}
        if self.label is not None:
            row["label"] = self.label
        row.update({key: val for key, val in self.extra.items()})
        return row


def _f_value(table: MomentTable, n: int, k: int, g: float) -> float:
    b = table.block(n, k)
    v = b.cov
    g2 = g * g
    return (
        g2 * (v[0, 0] + v[1, 1])
        + (v[2, 2] + v[3, 3]) / g2
        - 2 * v[0, 2]
        + 2 * v[1, 3]
        - g2 * b.f_k
        - b.f_lm / g2
    )


def _bound_scale(table: MomentTable, n: int, k: int, g: float) -> float:
    b = table.block(n, k)
    return max(1.0, abs(g * g * b.f_k) + abs(b.f_lm / (g * g)))


def witness_F(table: MomentTable, n: int, k: int, g=1.0, label=None) -> WitnessResult:
    """F^n_k; a negative value rules out separability across ``k | lm``."""
    pair_of(k)
    gk = _gain(g, k, n)
    value = float(_f_value(table, n, k, gk))
    if not math.isfinite(value):
        raise ValueError(f"non-finite witness F^{n}_{k}")
    return WitnessResult(WitnessKind.FULL_INSEPARABILITY, n, value, k=k, gains=(gk,), label=label,
                         scale=_bound_scale(table, n, k, gk))


@dataclass(frozen=True)
class FullInseparability:
    results: tuple[WitnessResult, WitnessResult, WitnessResult]

    @property
    def certified(self) -> bool:
        """All three bipartitions violated: the state is fully inseparable."""
        return all(r.violated for r in self.results)

    @property
    def values(self) -> tuple[float, float, float]:
        return tuple(r.value for r in self.results)


def witness_F_all(table: MomentTable, n: int, g=1.0, label=None) -> FullInseparability:
    return FullInseparability(tuple(witness_F(table, n, k, g, label) for k in BIPARTITIONS))


def _w_value(table: MomentTable, n: int, g, first: int) -> float:
    """W with the cross term and photon term anchored on mode ``first``."""
    f_sum = sum(_f_value(table, n, k, _gain(g, k, n)) for k in BIPARTITIONS)
    second = table.block(n, first).second
    photons = table.photon_moments(n)
    l, m = pair_of(first)
    return (
        f_sum
        + 4 * second[0, 2]
        - 4 * second[1, 3]
        + 2 * (photons[first - 1] + photons[l - 1] * photons[m - 1])
    )


def witness_W(table: MomentTable, n: int, g=1.0, label=None) -> WitnessResult:
    """Genuine tripartite entanglement witness; negative certifies genuine entanglement.

    ``value`` uses the printed form anchored on mode 1: cross terms
    ``4<q_1 q_23> - 4<p_1 p_23>`` and ``2(<N_1^(n)> + <N_2^(n)><N_3^(n)>)``.
    ``extra["variants"]`` also reports the forms anchored on modes 2 and 3.
    """
    variants = {k: float(_w_value(table, n, g, k)) for k in BIPARTITIONS}
    gains = tuple(_gain(g, k, n) for k in BIPARTITIONS)
    scale = sum(_bound_scale(table, n, k, gk) for k, gk in zip(BIPARTITIONS, gains))
    return WitnessResult(WitnessKind.GENUINE, n, variants[1], gains=gains, label=label,
                         extra={"variants": variants}, scale=scale)


@dataclass(frozen=True)
class GainOptimum:
    closed_form_gain: float
    closed_form_value: float
    numeric_gain: float
    numeric_value: float
    degenerate: bool = False
    denominator_flag: bool = False

    @property
    def best(self) -> str:
        return "numeric" if self.numeric_value < self.closed_form_value else "closed_form"

    @property
    def gain(self) -> float:
        return self.numeric_gain if self.best == "numeric" else self.closed_form_gain


def optimize_gain(table: MomentTable, n: int, k: int, tol: float = 1e-12) -> GainOptimum:
    """Closed-form standard-form gain versus a bounded numerical minimization of F."""
    from .stdform import covariance_matrix, reduce_to_standard_form

    b = table.block(n, k)
    v = b.cov
    # F(g) = a g^2 + c / g^2 + const; both coefficients must be positive for a finite optimum
    a = v[0, 0] + v[1, 1] - b.f_k
    c = v[2, 2] + v[3, 3] - b.f_lm
    scale = max(1.0, abs(b.f_k), abs(b.f_lm))
    if a <= tol * scale or c <= tol * scale:
        f1 = witness_F(table, n, k, 1.0).value
        return GainOptimum(1.0, f1, 1.0, f1, degenerate=True)

    sf = reduce_to_standard_form(covariance_matrix(table, n, k))
    nn1, mm1 = sf.excess_k[0], sf.excess_lm[0]
    flag = nn1 <= tol * scale or mm1 <= tol * scale
    g_cf = 1.0 if flag else (mm1 / nn1) ** 0.25
    f_cf = witness_F(table, n, k, g_cf).value

    # log-grid search then bounded refinement in log g
    log_g = np.linspace(math.log(1e-3), math.log(1e3), 241)
    values = np.array([_f_value(table, n, k, math.exp(x)) for x in log_g])
    i = int(np.argmin(values))
    lo, hi = log_g[max(i - 1, 0)], log_g[min(i + 1, len(log_g) - 1)]
    res = minimize_scalar(lambda x: _f_value(table, n, k, math.exp(x)), bounds=(lo, hi), method="bounded",
                          options={"xatol": 1e-12})
    x_best, f_best = (res.x, float(res.fun)) if res.fun <= values[i] else (log_g[i], float(values[i]))
    return GainOptimum(g_cf, f_cf, math.exp(x_best), f_best, degenerate=False, denominator_flag=flag)


@dataclass(frozen=True)
class UncertaintyCheck:
    min_eigenvalue: float
    passed: bool
    matrix: np.ndarray


def uncertainty_matrix(cov: np.ndarray, f_k: float, f_lm: float) -> np.ndarray:
    """V + (i/2)<Omega> with Omega = diag(adiag(f_k, -f_k), adiag(f_lm, -f_lm))."""
    omega = np.zeros((4, 4))
    omega[0, 1], omega[1, 0] = f_k, -f_k
    omega[2, 3], omega[3, 2] = f_lm, -f_lm
    return np.asarray(cov, dtype=float) + 0.5j * omega


def uncertainty_check(table: MomentTable, n: int, k: int, tol: float = PSD_TOL) -> UncertaintyCheck:
    b = table.block(n, k)
    m = uncertainty_matrix(b.cov, b.f_k, b.f_lm)
    lam = float(np.linalg.eigvalsh(m)[0])
    return UncertaintyCheck(lam, lam >= -tol, m)
