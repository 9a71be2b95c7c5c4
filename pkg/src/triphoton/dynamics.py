"""Three-mode down-conversion Hamiltonians and unitary time evolution (hbar = 1).

Two pump treatments are supported:

* ``PumpTreatment.QUANTUM``: four modes, ``H = i k (a1+ a2+ a3+ a4 - a1 a2 a3 a4+)``.
* ``PumpTreatment.PARAMETRIC``: three modes, the pump replaced by its real
  coherent amplitude, ``H = i k alpha_p (a1+ a2+ a3+ - a1 a2 a3)``.

In both cases the interaction strength is ``xi = kappa * alpha_p * t``.
"""

from __future__ import annotations

import enum
import logging
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Sequence

import numpy as np
import scipy.linalg as la
import scipy.sparse as sp
from scipy.integrate import solve_ivp
from scipy.sparse.csgraph import connected_components

from .fock import ModeLayout, QuantumState, SparseOperator, annihilation, coherent_amplitudes, product_state

log = logging.getLogger(__name__)

NORM_TOL = 1e-8
ED_MAX_DIM = 4096


class PumpTreatment(enum.Enum):
    QUANTUM = "quantum"
    PARAMETRIC = "parametric"


class Integrator(enum.Enum):
    EXACT = "exact"
    KRYLOV = "krylov"
    ODE = "ode"


class EvolutionError(RuntimeError):
    """Integrator failed to reach the requested accuracy."""

    def __init__(self, message: str, residual: float):
        super().__init__(f"{message} (achieved residual {residual:.3e})")
        self.residual = residual


def default_pump_dim(alpha_p: float) -> int:
    """Pump cutoff ceil(|a|^2 + 6|a|), returned as a dimension (cutoff + 1)."""
    a = abs(alpha_p)
    return math.ceil(a * a + 6 * a) + 1


@dataclass(frozen=True)
class HamiltonianSpec:
    treatment: PumpTreatment
    kappa: float
    layout: ModeLayout
    alpha_p: float = math.sqrt(10)

    def __post_init__(self):
        expected = 4 if self.treatment is PumpTreatment.QUANTUM else 3
        if self.layout.n_modes != expected:
            raise ValueError(
                f"{self.treatment.value} pump needs a {expected}-mode layout, got {self.layout.n_modes} modes"
            )
        if not self.kappa >= 0:
            raise ValueError(f"kappa must be non-negative, got {self.kappa}")

    @property
    def rate(self) -> float:
        """d(xi)/dt."""
        return self.kappa * self.alpha_p

    def initial_state(self) -> QuantumState:
        """Vacuum triplets, plus a coherent pump for the quantum treatment."""
        factors = []
        for k, d in enumerate(self.layout.dims):
            if k == 3:
                factors.append(coherent_amplitudes(d, self.alpha_p))
            else:
                v = np.zeros(d, dtype=complex)
                v[0] = 1.0
                factors.append(v)
        return product_state(self.layout, factors)


@dataclass(frozen=True)
class EvolutionConfig:
    integrator: Integrator | None = None  # None: exact below ED_MAX_DIM, Krylov above
    tolerance: float = 1e-10
    max_step: float = math.inf
    krylov_dim: int = 40

    def __post_init__(self):
        if not self.tolerance > 0:
            raise ValueError("tolerance must be positive")

    def resolve(self, dim: int) -> Integrator:
        if self.integrator is not None:
            return self.integrator
        return Integrator.EXACT if dim < ED_MAX_DIM else Integrator.KRYLOV


def build_hamiltonian(spec: HamiltonianSpec) -> SparseOperator:
    a = [annihilation(spec.layout, k) for k in range(3)]
    lower = a[0] @ a[1] @ a[2]
    if spec.treatment is PumpTreatment.QUANTUM:
        lower = lower @ annihilation(spec.layout, 3).dag()
        coupling = spec.kappa
    else:
        coupling = spec.kappa * spec.alpha_p
    return (lower.dag() - lower) * (1j * coupling)


class _Eigenblocks:
    """Exact propagator from eigendecompositions of the disconnected blocks of H.

    Both Hamiltonians conserve photon-number differences, so H splits into
    many small chains; each connected component is diagonalized densely.
    """

    def __init__(self, h: sp.csr_matrix):
        n_comp, labels = connected_components(abs(h) > 0, directed=False)
        order = np.argsort(labels, kind="stable")
        bounds = np.flatnonzero(np.diff(labels[order])) + 1
        self.blocks = []
        for idx in np.split(order, bounds):
            if idx.size == 1:
                e = np.array([h[idx[0], idx[0]].real])
                v = np.ones((1, 1), dtype=complex)
            else:
                e, v = la.eigh(h[idx][:, idx].toarray())
            self.blocks.append((idx, e, v))
        log.debug("exact propagator: %d blocks, largest %d", n_comp, max(b[0].size for b in self.blocks))

    def apply(self, psi: np.ndarray, t: float) -> np.ndarray:
        out = np.zeros_like(psi)
        for idx, e, v in self.blocks:
            x = psi[idx]
            if not np.any(x):
                continue
            phase = np.exp(-1j * e * t)
            coeff = v.conj().T @ x
            coeff = phase[:, None] * coeff if coeff.ndim == 2 else phase * coeff
            out[idx] = v @ coeff
        return out


def _krylov_expmv(h: sp.csr_matrix, psi: np.ndarray, t: float, tol: float, m_max: int, max_step: float) -> np.ndarray:
    """exp(-i h t) psi by Lanczos projection with adaptive substeps."""
    n = psi.shape[0]
    m_max = min(m_max, n)
    w = psi.astype(complex)
    done = 0.0
    dt = min(t, max_step)
    while done < t:
        beta = np.linalg.norm(w)
        if beta == 0:
            return w
        basis = np.zeros((n, m_max + 1), dtype=complex)
        alpha = np.zeros(m_max)
        off = np.zeros(m_max)
        basis[:, 0] = w / beta
        m = m_max
        breakdown = False
        for j in range(m_max):
            v = h @ basis[:, j]
            alpha[j] = np.vdot(basis[:, j], v).real
            # full reorthogonalization; m_max is small
            v -= basis[:, : j + 1] @ (basis[:, : j + 1].conj().T @ v)
            v -= basis[:, : j + 1] @ (basis[:, : j + 1].conj().T @ v)
            off[j] = np.linalg.norm(v)
            if off[j] < 1e-13 * max(1.0, abs(alpha[j])):
                m = j + 1
                breakdown = True
                break
            basis[:, j + 1] = v / off[j]
        evals, evecs = la.eigh_tridiagonal(alpha[:m], off[: m - 1])
        first = evecs[0, :].conj()
        remaining = t - done
        dt = min(dt, remaining, max_step)
        while True:
            y = evecs @ (np.exp(-1j * evals * dt) * first)
            err = 0.0 if breakdown else beta * off[m - 1] * abs(y[m - 1])
            if err <= tol * dt / t:
                break
            dt *= 0.5 * (tol * dt / t / err) ** (1.0 / m) if err > 0 else 0.5
            if dt < 1e-14 * t:
                raise EvolutionError("Krylov step size underflow", err)
        w = beta * (basis[:, :m] @ y)
        done += dt
        # grow the step again after success
        dt = min(2 * dt, max_step)
        if t - done < 1e-15 * t:
            break
    return w


def _propagate_vector(h: sp.csr_matrix, psi: np.ndarray, t: float, method: Integrator, cfg: EvolutionConfig, eig=None):
    if method is Integrator.EXACT:
        eig = eig or _Eigenblocks(h)
        return eig.apply(psi, t)
    if method is Integrator.KRYLOV:
        return _krylov_expmv(h, psi, t, cfg.tolerance, cfg.krylov_dim, cfg.max_step)
    sol = solve_ivp(
        lambda _, y: -1j * (h @ y),
        (0.0, t),
        psi.astype(complex),
        method="DOP853",
        rtol=cfg.tolerance,
        atol=cfg.tolerance * 1e-2,
        max_step=cfg.max_step,
    )
    if not sol.success:
        residual = abs(np.linalg.norm(sol.y[:, -1]) - np.linalg.norm(psi))
        raise EvolutionError(f"ODE integrator failed: {sol.message}", residual)
    return sol.y[:, -1]


def _propagate(state: QuantumState, h: sp.csr_matrix, t: float, cfg: EvolutionConfig, eig=None) -> QuantumState:
    method = cfg.resolve(state.layout.dim)
    if state.is_pure:
        data = _propagate_vector(h, state.data, t, method, cfg, eig)
        err = abs(np.linalg.norm(data) - 1.0)
    else:
        if method is Integrator.EXACT:
            eig = eig or _Eigenblocks(h)
            x = eig.apply(np.array(state.data), t)  # U rho
            data = eig.apply(x.conj().T, t).conj().T  # (U (U rho)^+)^+ = U rho U^+
        else:
            cols = lambda m: np.column_stack([_propagate_vector(h, m[:, j], t, method, cfg) for j in range(m.shape[1])])
            x = cols(np.array(state.data))
            data = cols(x.conj().T).conj().T
        data = 0.5 * (data + data.conj().T)
        err = abs(np.trace(data).real - 1.0)
    if err > NORM_TOL:
        raise EvolutionError(f"{method.value} evolution did not conserve the norm", err)
    if not state.is_pure:
        data = data / np.trace(data).real
    return QuantumState(state.layout, data)


def evolve(state: QuantumState, spec: HamiltonianSpec, cfg: EvolutionConfig, t: float) -> QuantumState:
    """psi(t) = exp(-iHt) psi, or rho(t) = U rho U^+ for density matrices."""
    if t < 0:
        raise ValueError("evolution time must be non-negative")
    if state.layout != spec.layout:
        raise ValueError(f"state layout {state.layout.dims} != Hamiltonian layout {spec.layout.dims}")
    if t == 0 or spec.kappa == 0:
        return state
    h = build_hamiltonian(spec).matrix
    return _propagate(state, h, t, cfg)


def xi_to_time(spec: HamiltonianSpec, xi: float) -> float:
    if spec.rate <= 0:
        raise ValueError("xi sweep needs kappa * alpha_p > 0")
    return xi / spec.rate


def sweep_xi(
    spec: HamiltonianSpec,
    cfg: EvolutionConfig,
    xi_grid: Sequence[float],
    initial: QuantumState | None = None,
    threads: int | None = None,
) -> list[tuple[float, QuantumState]]:
    """Evolve ``initial`` (default: ``spec.initial_state()``) to every grid point.

    Each grid point is an independent evolution from t = 0; results keep grid order.
    """
    grid = [float(x) for x in xi_grid]
    if any(b < a for a, b in zip(grid, grid[1:])):
        raise ValueError("xi grid must be sorted ascending")
    if any(x < 0 for x in grid):
        raise ValueError("xi must be non-negative")
    psi0 = initial if initial is not None else spec.initial_state()
    if all(x == 0 for x in grid):
        return [(x, psi0) for x in grid]
    times = [xi_to_time(spec, x) for x in grid]
    h = build_hamiltonian(spec).matrix
    eig = _Eigenblocks(h) if cfg.resolve(spec.layout.dim) is Integrator.EXACT else None

    def one(t: float) -> QuantumState:
        return psi0 if t == 0 else _propagate(psi0, h, t, cfg, eig)

    if threads == 1 or len(grid) == 1:
        states = [one(t) for t in times]
    else:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            states = list(pool.map(one, times))
    return list(zip(grid, states))
