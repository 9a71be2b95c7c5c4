"""Independent reference constructions used by the tests.

Everything here is built from dense numpy arrays and closed-form expressions,
without going through the package's sparse operator layer.
"""

from __future__ import annotations

import math

import numpy as np

from triphoton.stdform import CovarianceMatrixN, StandardForm


def dense_lowering(dim: int) -> np.ndarray:
    return np.diag(np.sqrt(np.arange(1, dim)), 1).astype(complex)


def dense_mode_operator(dims, mode: int, single: np.ndarray) -> np.ndarray:
    """I (x) ... (x) single (x) ... (x) I with mode 0 as the left-most factor."""
    out = np.ones((1, 1), dtype=complex)
    for j, d in enumerate(dims):
        out = np.kron(out, single if j == mode else np.eye(d))
    return out


def rising(m, n):
    """prod_{j=1..n} (m + j): diagonal of a^n a+^n."""
    return np.prod([m + j for j in range(1, n + 1)], axis=0)


def falling(m, n):
    """prod_{j=0..n-1} (m - j): diagonal of a+^n a^n."""
    return np.prod([m - j for j in range(n)], axis=0)


def f_single_diag(occ: np.ndarray, n: int) -> np.ndarray:
    """Normal-ordering oracle for f = (X X+ - X+ X) / 2 with X = a^n."""
    m = occ.astype(float)
    return 0.5 * (rising(m, n) - falling(m, n))


def f_pair_diag(occ_l: np.ndarray, occ_m: np.ndarray, n: int) -> np.ndarray:
    """Same oracle for X = a_l^n a_m^n."""
    l, m = occ_l.astype(float), occ_m.astype(float)
    return 0.5 * (rising(l, n) * rising(m, n) - falling(l, n) * falling(m, n))


def poisson_mean(alpha: float, dim: int) -> float:
    """<N> of a coherent state truncated to ``dim`` levels and renormalized."""
    m = np.arange(dim)
    logw = m * math.log(alpha * alpha) - np.array([math.lgamma(k + 1) for k in m])
    w = np.exp(logw - logw.max())
    return float((m * w).sum() / w.sum())


def random_pure(rng: np.random.Generator, dim: int, support: int) -> np.ndarray:
    v = np.zeros(dim, dtype=complex)
    v[:support] = rng.normal(size=support) + 1j * rng.normal(size=support)
    return v / np.linalg.norm(v)


def random_density(rng: np.random.Generator, dim: int, support: int, rank: int = 2) -> np.ndarray:
    vs = [random_pure(rng, dim, support) for _ in range(rank)]
    w = rng.dirichlet(np.ones(rank))
    return sum(p * np.outer(v, v.conj()) for p, v in zip(w, vs))


def coherent_vector(dim: int, alpha: complex) -> np.ndarray:
    m = np.arange(dim)
    v = np.array([alpha**k / math.sqrt(math.factorial(k)) for k in m], dtype=complex)
    return v / np.linalg.norm(v)


def squeezed_toy(dim: int, r: float) -> np.ndarray:
    """Two-mode squeezed-like vector sum_m t^m |m, m>, flattened with the first mode slowest."""
    t = math.tanh(r)
    v = np.zeros((dim, dim), dtype=complex)
    for m in range(dim):
        v[m, m] = t**m
    v = v.ravel()
    return v / np.linalg.norm(v)


def product_density(rho_k: np.ndarray, rho_lm: np.ndarray, k: int, d: int) -> np.ndarray:
    """rho_k (x) rho_lm placed on modes (k, l, m) and reordered to (1, 2, 3)."""
    full = np.kron(rho_k, rho_lm).reshape((d,) * 6)
    source = [k - 1] + [j for j in range(3) if j != k - 1]  # mode held by each tensor axis
    perm = [source.index(j) for j in range(3)]
    full = full.transpose(perm + [p + 3 for p in perm])
    return full.reshape(d**3, d**3)


def random_standard_form(rng: np.random.Generator, margin: float = 1e-6) -> StandardForm:
    """A standard form that satisfies the constraint relations and the uncertainty bound.

    Both entangled and separable forms are produced, with either sign of s2.
    """
    while True:
        f = rng.uniform(0.3, 5)
        F = rng.uniform(0.3, 20)
        nn1 = rng.uniform(0.05, 3) * f
        rho = rng.uniform(0.05, 1)
        mm1 = rng.uniform(0.05, 3) * F
        p = math.sqrt(nn1 * mm1)
        gap = p * (1 - rho) / 2  # |s1| - |s2| fixed by the constraint
        a1 = rng.uniform(gap, gap + 1.5 * p)
        s2 = (a1 - gap) * rng.choice([-1, 1])
        sf = StandardForm.from_parameters((nn1 + f) / 2, (rho * nn1 + f) / 2, (mm1 + F) / 2, (rho * mm1 + F) / 2,
                                          a1, s2, f, F)
        try:
            cov = CovarianceMatrixN(1, 1, sf.matrix, f, F)
        except ValueError:
            continue
        if cov.uncertainty_min_eigenvalue() > margin:
            return sf
