"""Order-n quadratures, their commutator operators, and moment tables.

Bipartitions are labelled by the single mode ``k`` in {1, 2, 3}; the pair
``(l, m)`` is the other two triplet modes in increasing order.  Quadrature
vectors are ordered ``R = (q_k, p_k, q_lm, p_lm)``.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np
import scipy.sparse as sp

from .fock import ModeLayout, QuantumState, SparseOperator, annihilation, extended_lowering

R_LABELS = ("q_k", "p_k", "q_lm", "p_lm")
BIPARTITIONS = (1, 2, 3)
IMAG_TOL = 1e-8


class MissingMomentError(KeyError):
    pass


def pair_of(k: int) -> tuple[int, int]:
    if k not in BIPARTITIONS:
        raise ValueError(f"bipartition label must be 1, 2 or 3, got {k}")
    l, m = (j for j in BIPARTITIONS if j != k)
    return l, m


def _f_from_lowering(x: sp.csr_matrix) -> sp.csr_matrix:
    """-i[q, p] for q = (X+ + X)/2, p = i(X+ - X)/2, in the precision of ``x``."""
    xd = x.conj().T.tocsr()
    q = (xd + x) * 0.5
    p = (xd - x) * 0.5j
    f = (q @ p - p @ q) * -1j
    # Hermitian up to rounding; enforce it exactly
    return ((f + f.conj().T) * 0.5).astype(complex)


def quadratures(
    lowering: SparseOperator, extended: sp.csr_matrix | None = None
) -> tuple[SparseOperator, SparseOperator, SparseOperator]:
    """(q, p, f) for ``q = (X+ + X)/2``, ``p = i(X+ - X)/2`` and ``f = -i[q, p]``.

    If ``extended`` holds the same X in extended precision, the commutator is
    formed there and rounded once, which keeps the large entries of high-order
    f exact.
    """
    raising = lowering.dag()
    q = (raising + lowering) * 0.5
    p = (raising - lowering) * 0.5j
    x = lowering.matrix if extended is None else extended
    if x.shape != lowering.shape:
        raise ValueError("extended-precision operator does not match the lowering operator")
    f = SparseOperator(lowering.layout, _f_from_lowering(x))
    return q, p, f


@dataclass(frozen=True, eq=False)
class QuadratureSet:
    n: int
    k: int
    q_k: SparseOperator
    p_k: SparseOperator
    q_lm: SparseOperator
    p_lm: SparseOperator
    f_k: SparseOperator
    f_lm: SparseOperator

    @property
    def vector(self) -> tuple[SparseOperator, ...]:
        return (self.q_k, self.p_k, self.q_lm, self.p_lm)


def check_order(layout: ModeLayout, n: int, modes: Iterable[int]) -> None:
    if n < 1:
        raise ValueError(f"hierarchy index must be >= 1, got {n}")
    for mode in modes:
        if layout.cutoff(mode) <= n:
            raise ValueError(f"cutoff too small for order {n}: mode {mode + 1} has cutoff {layout.cutoff(mode)}")


def build_quadrature_set(layout: ModeLayout, n: int, k: int) -> QuadratureSet:
    if layout.n_modes < 3:
        raise ValueError("quadrature sets need at least three modes")
    l, m = pair_of(k)
    check_order(layout, n, (k - 1, l - 1, m - 1))
    a_k = annihilation(layout, k - 1, n)
    pair = annihilation(layout, l - 1, n) @ annihilation(layout, m - 1, n)
    q_k, p_k, f_k = quadratures(a_k, extended_lowering(layout, {k - 1: n}))
    q_lm, p_lm, f_lm = quadratures(pair, extended_lowering(layout, {l - 1: n, m - 1: n}))
    return QuadratureSet(n, k, q_k, p_k, q_lm, p_lm, f_k, f_lm)


def _check_dims(state: QuantumState, op: SparseOperator) -> None:
    if op.shape[0] != state.layout.dim:
        raise ValueError(f"operator dimension {op.shape[0]} != state dimension {state.layout.dim}")


def expectation(state: QuantumState, op: SparseOperator) -> complex:
    _check_dims(state, op)
    if state.is_pure:
        return complex(np.vdot(state.data, op.matrix @ state.data))
    # tr(rho A) = sum_ij rho_ij A_ji
    return complex((op.matrix.multiply(state.data.T)).sum())


def sym_covariance(state: QuantumState, a: SparseOperator, b: SparseOperator) -> float:
    """<(AB + BA)/2> - <A><B> for Hermitian A, B."""
    _check_dims(state, a)
    _check_dims(state, b)
    ab = _sym_second_moments(state, [a, b])
    ea, eb = expectation(state, a).real, expectation(state, b).real
    return float(ab[0, 1] - ea * eb)


def variance(state: QuantumState, op: SparseOperator) -> float:
    return sym_covariance(state, op, op)


def _sym_second_moments(state: QuantumState, ops: Sequence[SparseOperator]) -> np.ndarray:
    """Matrix of Re<A_i A_j> = <(A_i A_j + A_j A_i)/2> for Hermitian A_i."""
    return raw_second_moments(state, ops).real


def raw_second_moments(state: QuantumState, ops: Sequence[SparseOperator]) -> np.ndarray:
    """Complex matrix <A_i A_j> (no symmetrization)."""
    if state.is_pure:
        vecs = np.column_stack([op.matrix @ state.data for op in ops])
        return vecs.conj().T @ vecs
    out = np.zeros((len(ops), len(ops)), dtype=complex)
    applied = [op.matrix @ state.data for op in ops]  # A_j rho
    for i, ai in enumerate(ops):
        for j, rj in enumerate(applied):
            # tr(A_i A_j rho) = sum_ab (A_i)_ab (A_j rho)_ba
            out[i, j] = ai.matrix.multiply(rj.T).sum()
    return out


@dataclass(frozen=True, eq=False)
class BipartitionMoments:
    """First and symmetrized second moments of R for one (n, k)."""

    n: int
    k: int
    mean: np.ndarray
    second: np.ndarray
    f_k: float
    f_lm: float

    def __post_init__(self):
        mean = np.asarray(self.mean, dtype=float).reshape(4)
        second = np.asarray(self.second, dtype=float).reshape(4, 4)
        second = 0.5 * (second + second.T)
        object.__setattr__(self, "mean", mean)
        object.__setattr__(self, "second", second)

    @property
    def cov(self) -> np.ndarray:
        return self.second - np.outer(self.mean, self.mean)

    def to_dict(self) -> dict:
        out = {f"<{lab}>": float(self.mean[i]) for i, lab in enumerate(R_LABELS)}
        for i in range(4):
            for j in range(i, 4):
                out[f"<{R_LABELS[i]} {R_LABELS[j]}>"] = float(self.second[i, j])
        out["f_k"] = float(self.f_k)
        out["f_lm"] = float(self.f_lm)
        return out

    @classmethod
    def from_dict(cls, n: int, k: int, d: dict) -> BipartitionMoments:
        try:
            mean = [d[f"<{lab}>"] for lab in R_LABELS]
            second = np.zeros((4, 4))
            for i in range(4):
                for j in range(i, 4):
                    second[i, j] = second[j, i] = d[f"<{R_LABELS[i]} {R_LABELS[j]}>"]
            return cls(n, k, mean, second, d["f_k"], d["f_lm"])
        except KeyError as exc:
            raise MissingMomentError(f"order {n}, bipartition {k}: missing {exc.args[0]}") from None


@dataclass(frozen=True, eq=False)
class MomentTable:
    """Everything the witnesses and standard forms need, detached from the state.

    ``photon[n][k-1]`` is ``<a_k+^n a_k^n>``; ``mean_photons[k-1]`` is ``<N_k>``.
    """

    blocks: dict[tuple[int, int], BipartitionMoments]
    photon: dict[int, np.ndarray]
    mean_photons: np.ndarray = field(default_factory=lambda: np.zeros(3))

    @property
    def orders(self) -> tuple[int, ...]:
        return tuple(sorted({n for n, _ in self.blocks}))

    def block(self, n: int, k: int) -> BipartitionMoments:
        try:
            return self.blocks[(n, k)]
        except KeyError:
            raise MissingMomentError(f"moment table has no order-{n} entries for bipartition {k}") from None

    def photon_moments(self, n: int) -> np.ndarray:
        try:
            return self.photon[n]
        except KeyError:
            raise MissingMomentError(f"moment table has no order-{n} photon-number moments") from None

    @classmethod
    def from_covariance(cls, n: int, k: int, cov, f_k: float, f_lm: float, mean=None, photon=None) -> MomentTable:
        """Table holding a single externally supplied covariance block."""
        mean = np.zeros(4) if mean is None else np.asarray(mean, dtype=float)
        second = np.asarray(cov, dtype=float) + np.outer(mean, mean)
        blocks = {(n, k): BipartitionMoments(n, k, mean, second, f_k, f_lm)}
        photons = {} if photon is None else {n: np.asarray(photon, dtype=float)}
        return cls(blocks, photons)

    def to_dict(self) -> dict:
        out: dict = {"mean_photons": [float(x) for x in self.mean_photons], "orders": {}}
        for n in self.orders:
            entry: dict = {"bipartitions": {}}
            for k in BIPARTITIONS:
                if (n, k) in self.blocks:
                    entry["bipartitions"][str(k)] = self.blocks[(n, k)].to_dict()
            if n in self.photon:
                entry["photon"] = {str(k): float(self.photon[n][k - 1]) for k in BIPARTITIONS}
            out["orders"][str(n)] = entry
        return out

    @classmethod
    def from_dict(cls, d: dict) -> MomentTable:
        blocks = {}
        photon = {}
        for n_str, entry in d["orders"].items():
            n = int(n_str)
            for k_str, moments in entry.get("bipartitions", {}).items():
                blocks[(n, int(k_str))] = BipartitionMoments.from_dict(n, int(k_str), moments)
            if "photon" in entry:
                photon[n] = np.array([entry["photon"][str(k)] for k in BIPARTITIONS], dtype=float)
        return cls(blocks, photon, np.asarray(d.get("mean_photons", [0.0, 0.0, 0.0]), dtype=float))

    def to_json(self, **kwargs) -> str:
        return json.dumps(self.to_dict(), **kwargs)

    @classmethod
    def from_json(cls, text: str) -> MomentTable:
        return cls.from_dict(json.loads(text))


def _real(value: complex, scale: float, what: str) -> float:
    if abs(value.imag) > IMAG_TOL * max(1.0, scale):
        raise ValueError(f"{what} has a non-negligible imaginary part {value.imag:.3e}")
    return float(value.real)


def operator_cache(layout: ModeLayout, orders: Iterable[int]) -> dict[tuple[int, int], QuadratureSet]:
    """Quadrature sets for every (n, k); build once and reuse across states."""
    return {(n, k): build_quadrature_set(layout, n, k) for n in orders for k in BIPARTITIONS}


def moment_table(
    state: QuantumState,
    orders: Sequence[int] | int,
    operators: dict[tuple[int, int], QuadratureSet] | None = None,
) -> MomentTable:
    if isinstance(orders, int):
        orders = [orders]
    orders = sorted(set(orders))
    layout = state.layout
    if operators is None:
        operators = operator_cache(layout, orders)
    blocks = {}
    photon = {}
    for n in orders:
        for k in BIPARTITIONS:
            qs = operators[(n, k)]
            vec = qs.vector
            mean = np.array([_real(expectation(state, r), 1.0, f"<{lab}>") for r, lab in zip(vec, R_LABELS)])
            second = _sym_second_moments(state, vec)
            f_k = _real(expectation(state, qs.f_k), 1.0, "<f_k>")
            f_lm = _real(expectation(state, qs.f_lm), 1.0, "<f_lm>")
            blocks[(n, k)] = BipartitionMoments(n, k, mean, second, f_k, f_lm)
        photon[n] = np.array(
            [
                _real(expectation(state, _power_number(layout, k, n)), 1.0, f"<a{k + 1}+^{n} a{k + 1}^{n}>")
                for k in range(3)
            ]
        )
    mean_n = photon[1] if 1 in photon else np.array([expectation(state, _power_number(layout, k, 1)).real for k in range(3)])
    return MomentTable(blocks, photon, mean_n)


def _power_number(layout: ModeLayout, mode: int, n: int) -> SparseOperator:
    an = annihilation(layout, mode, n)
    return an.dag() @ an
