"""Truncated multimode Fock space.

Basis ordering: mode 0 is the slowest-varying index, so a product operator
``A0 (x) A1 (x) A2`` is ``kron(kron(A0, A1), A2)`` and the basis index of the
multi-index ``(m0, m1, m2)`` is ``(m0 * d1 + m1) * d2 + m2``.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass
from functools import reduce
from typing import Iterable, Mapping, Sequence

import numpy as np
import scipy.sparse as sp

STATE_TOL = 1e-10


@dataclass(frozen=True)
class ModeLayout:
    """Per-mode truncation dimensions (photon-number cutoff + 1)."""

    dims: tuple[int, ...]

    def __init__(self, dims: Iterable[int]):
        dims = tuple(int(d) for d in dims)
        if not dims:
            raise ValueError("layout needs at least one mode")
        if any(d < 2 for d in dims):
            raise ValueError(f"every mode dimension must be >= 2, got {dims}")
        object.__setattr__(self, "dims", dims)

    @property
    def n_modes(self) -> int:
        return len(self.dims)

    @property
    def dim(self) -> int:
        return math.prod(self.dims)

    def cutoff(self, mode: int) -> int:
        return self.dims[mode] - 1

    def index(self, occupation: Sequence[int]) -> int:
        return int(np.ravel_multi_index(tuple(occupation), self.dims))

    def occupation(self, index: int) -> tuple[int, ...]:
        return tuple(int(m) for m in np.unravel_index(index, self.dims))

    def occupations(self) -> np.ndarray:
        """(dim, n_modes) array of photon numbers for every basis index."""
        grids = np.indices(self.dims).reshape(self.n_modes, -1)
        return grids.T

    def check_mode(self, mode: int) -> None:
        if not 0 <= mode < self.n_modes:
            raise IndexError(f"mode {mode} out of range for {self.n_modes}-mode layout")


def interior_indices(layout: ModeLayout, modes: Sequence[int], margin: int) -> np.ndarray:
    """Basis indices where every mode in ``modes`` has <= cutoff - margin photons."""
    occ = layout.occupations()
    keep = np.ones(layout.dim, dtype=bool)
    for k in modes:
        keep &= occ[:, k] <= layout.cutoff(k) - margin
    return np.flatnonzero(keep)


def _as_csr(matrix) -> sp.csr_matrix:
    if isinstance(matrix, SparseOperator):
        return matrix.matrix
    return sp.csr_matrix(matrix, dtype=complex)


@dataclass(frozen=True, eq=False)
class SparseOperator:
    """Complex sparse matrix acting on the composite space of ``layout``."""

    layout: ModeLayout
    matrix: sp.csr_matrix

    def __post_init__(self):
        m = sp.csr_matrix(self.matrix, dtype=complex)
        if m.shape != (self.layout.dim, self.layout.dim):
            raise ValueError(f"operator shape {m.shape} does not match layout dimension {self.layout.dim}")
        m.sum_duplicates()
        object.__setattr__(self, "matrix", m)

    @property
    def shape(self) -> tuple[int, int]:
        return self.matrix.shape

    def _check(self, other: SparseOperator) -> None:
        if other.layout != self.layout:
            raise ValueError(f"layout mismatch: {self.layout.dims} vs {other.layout.dims}")

    def __add__(self, other: SparseOperator) -> SparseOperator:
        self._check(other)
        return SparseOperator(self.layout, self.matrix + other.matrix)

    def __sub__(self, other: SparseOperator) -> SparseOperator:
        self._check(other)
        return SparseOperator(self.layout, self.matrix - other.matrix)

    def __neg__(self) -> SparseOperator:
        return SparseOperator(self.layout, -self.matrix)

    def __mul__(self, scalar) -> SparseOperator:
        return SparseOperator(self.layout, self.matrix * complex(scalar))

    __rmul__ = __mul__

    def __truediv__(self, scalar) -> SparseOperator:
        return SparseOperator(self.layout, self.matrix / complex(scalar))

    def __matmul__(self, other):
        if isinstance(other, SparseOperator):
            self._check(other)
            return SparseOperator(self.layout, self.matrix @ other.matrix)
        other = np.asarray(other)
        if other.shape[0] != self.layout.dim:
            raise ValueError(f"cannot apply {self.shape} operator to array of shape {other.shape}")
        return self.matrix @ other

    def dag(self) -> SparseOperator:
        return SparseOperator(self.layout, self.matrix.conj().T)

    def power(self, n: int) -> SparseOperator:
        if n < 0:
            raise ValueError("negative operator power")
        out = identity(self.layout)
        for _ in range(n):
            out = out @ self
        return out

    def toarray(self) -> np.ndarray:
        return self.matrix.toarray()

    def is_hermitian(self, tol: float = 1e-12) -> bool:
        diff = self.matrix - self.matrix.conj().T
        return diff.nnz == 0 or float(np.max(np.abs(diff.data))) <= tol


def identity(layout: ModeLayout) -> SparseOperator:
    return SparseOperator(layout, sp.identity(layout.dim, dtype=complex, format="csr"))


def commutator(a: SparseOperator, b: SparseOperator) -> SparseOperator:
    return a @ b - b @ a


def hermitian_part(a: SparseOperator) -> SparseOperator:
    return (a + a.dag()) * 0.5


def antihermitian_part(a: SparseOperator) -> SparseOperator:
    return (a - a.dag()) * 0.5


def single_mode_annihilation(dim: int, power: int = 1) -> sp.csr_matrix:
    """``a^n|m> = sqrt(m!/(m-n)!)|m-n>`` on a ``dim``-level mode.

    Each entry is one square root of an exact integer, which keeps high powers
    accurate to a single rounding instead of ``n`` accumulated ones.
    """
    if power < 0:
        raise ValueError("negative operator power")
    if power == 0:
        return sp.identity(dim, dtype=complex, format="csr")
    if power >= dim:
        return sp.csr_matrix((dim, dim), dtype=complex)
    vals = [math.sqrt(math.perm(m, power)) for m in range(power, dim)]
    return sp.diags(vals, power, shape=(dim, dim), format="csr", dtype=complex)


def compose(ops: Sequence[tuple[int, object]], layout: ModeLayout) -> SparseOperator:
    """Embed single-mode factors into the composite space (identity elsewhere)."""
    factors: dict[int, sp.csr_matrix] = {}
    for mode, op in ops:
        layout.check_mode(mode)
        if mode in factors:
            raise ValueError(f"duplicate factor for mode {mode}")
        m = _as_csr(op)
        d = layout.dims[mode]
        if m.shape != (d, d):
            raise ValueError(f"factor for mode {mode} has shape {m.shape}, layout expects ({d}, {d})")
        factors[mode] = m
    mats = [factors.get(k, sp.identity(d, dtype=complex, format="csr")) for k, d in enumerate(layout.dims)]
    return SparseOperator(layout, reduce(lambda x, y: sp.kron(x, y, format="csr"), mats))


def extended_lowering(layout: ModeLayout, powers: Mapping[int, int]) -> sp.csr_matrix:
    """Product of ``a_mode^power`` factors as a bare extended-precision (complex256) matrix.

    Used where products of large ladder entries must be exact to well below one
    double-precision ulp before the final rounding.
    """
    mats = []
    for mode, d in enumerate(layout.dims):
        n = powers.get(mode, 0)
        m = np.arange(n, d)
        vals = np.sqrt(np.array([math.perm(int(k), n) for k in m], dtype=np.longdouble))
        mats.append(sp.diags(vals, n, shape=(d, d), format="csr").astype(np.clongdouble))
    return reduce(lambda x, y: sp.kron(x, y, format="csr"), mats)


def annihilation(layout: ModeLayout, mode: int, power: int = 1) -> SparseOperator:
    """``a_mode^power`` embedded in the composite space."""
    layout.check_mode(mode)
    return compose([(mode, single_mode_annihilation(layout.dims[mode], power))], layout)


def creation(layout: ModeLayout, mode: int) -> SparseOperator:
    return annihilation(layout, mode).dag()


def number(layout: ModeLayout, mode: int) -> SparseOperator:
    layout.check_mode(mode)
    occ = layout.occupations()[:, mode].astype(complex)
    return SparseOperator(layout, sp.diags(occ, format="csr"))


@dataclass(frozen=True, eq=False)
class QuantumState:
    """Pure state vector (1-D data) or density matrix (2-D data)."""

    layout: ModeLayout
    data: np.ndarray

    def __post_init__(self):
        data = np.array(self.data, dtype=complex)
        dim = self.layout.dim
        if data.ndim == 1:
            if data.shape != (dim,):
                raise ValueError(f"state vector length {data.shape[0]} != layout dimension {dim}")
            norm = np.linalg.norm(data)
            if abs(norm**2 - 1.0) > STATE_TOL:
                raise ValueError(f"state vector not normalized: |psi|^2 = {norm**2!r}")
        elif data.ndim == 2:
            if data.shape != (dim, dim):
                raise ValueError(f"density matrix shape {data.shape} != ({dim}, {dim})")
            if np.max(np.abs(data - data.conj().T)) > STATE_TOL:
                raise ValueError("density matrix is not Hermitian")
            if abs(np.trace(data) - 1.0) > STATE_TOL:
                raise ValueError(f"density matrix trace {np.trace(data).real!r} != 1")
            if np.linalg.eigvalsh(data)[0] < -STATE_TOL:
                raise ValueError("density matrix has negative eigenvalues")
        else:
            raise ValueError("state data must be a vector or a square matrix")
        data.setflags(write=False)
        object.__setattr__(self, "data", data)

    @property
    def is_pure(self) -> bool:
        return self.data.ndim == 1

    def density_matrix(self) -> np.ndarray:
        if self.is_pure:
            return np.outer(self.data, self.data.conj())
        return self.data

    def norm_error(self) -> float:
        """|‖psi‖ - 1| for vectors, |tr rho - 1| for density matrices."""
        if self.is_pure:
            return abs(float(np.linalg.norm(self.data)) - 1.0)
        return abs(float(np.trace(self.data).real) - 1.0)


def vacuum(layout: ModeLayout) -> QuantumState:
    psi = np.zeros(layout.dim, dtype=complex)
    psi[0] = 1.0
    return QuantumState(layout, psi)


def coherent_amplitudes(dim: int, alpha: complex) -> np.ndarray:
    """Truncated coherent-state amplitudes, renormalized to unit norm."""
    alpha = complex(alpha)
    if dim < abs(alpha) ** 2 + 6 * math.sqrt(abs(alpha) ** 2 + 1):
        warnings.warn(
            f"mode dimension {dim} is small for |alpha|^2 = {abs(alpha)**2:.3g}; coherent state is truncated",
            stacklevel=3,
        )
    m = np.arange(dim)
    # log-space to avoid overflow of alpha**m / sqrt(m!) at large cutoffs
    log_mag = m * np.log(abs(alpha)) if alpha != 0 else np.where(m == 0, 0.0, -np.inf)
    log_mag = log_mag - 0.5 * np.array([math.lgamma(k + 1) for k in m]) - abs(alpha) ** 2 / 2
    c = np.exp(log_mag) * np.exp(1j * np.angle(alpha) * m)
    return c / np.linalg.norm(c)


def product_state(layout: ModeLayout, factors: Sequence[np.ndarray]) -> QuantumState:
    """Tensor product of per-mode vectors (pure) or density matrices (mixed if any is 2-D)."""
    if len(factors) != layout.n_modes:
        raise ValueError(f"need {layout.n_modes} factors, got {len(factors)}")
    factors = [np.asarray(f, dtype=complex) for f in factors]
    for k, f in enumerate(factors):
        if f.shape[0] != layout.dims[k]:
            raise ValueError(f"factor {k} has dimension {f.shape[0]}, layout expects {layout.dims[k]}")
    if all(f.ndim == 1 for f in factors):
        return QuantumState(layout, reduce(np.kron, factors))
    mats = [np.outer(f, f.conj()) if f.ndim == 1 else f for f in factors]
    return QuantumState(layout, reduce(np.kron, mats))


def coherent(layout: ModeLayout, mode: int, alpha: complex) -> QuantumState:
    """Coherent state ``alpha`` on ``mode``, vacuum on every other mode."""
    layout.check_mode(mode)
    factors = []
    for k, d in enumerate(layout.dims):
        if k == mode:
            factors.append(coherent_amplitudes(d, alpha))
        else:
            v = np.zeros(d, dtype=complex)
            v[0] = 1.0
            factors.append(v)
    return product_state(layout, factors)


def permute_modes(state: QuantumState, order: Sequence[int]) -> QuantumState:
    """Reorder tensor factors: mode ``j`` of the result is mode ``order[j]`` of ``state``."""
    order = list(order)
    if sorted(order) != list(range(state.layout.n_modes)):
        raise ValueError(f"{order} is not a permutation of the modes")
    dims = state.layout.dims
    new_layout = ModeLayout(dims[k] for k in order)
    if state.is_pure:
        data = state.data.reshape(dims).transpose(order).reshape(-1)
    else:
        nm = len(dims)
        axes = order + [nm + k for k in order]
        data = state.data.reshape(dims + dims).transpose(axes).reshape(new_layout.dim, new_layout.dim)
    return QuantumState(new_layout, data)
