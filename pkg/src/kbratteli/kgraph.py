"""Vertex matrices of a finite k-graph and their Perron-Frobenius data."""

from dataclasses import dataclass, field

import numpy as np

from .errors import (
    DimensionMismatch,
    NoConvergence,
    NotCommuting,
    NotIrreducible,
    SpectralRadiusAtMostOne,
)

POWER_TOL = 1e-14
POWER_MAXITER = 100_000
DENSE_FALLBACK_MAX_N = 64


@dataclass(frozen=True)
class KGraphSpec:
    """k commuting N x N nonnegative integer vertex matrices A_1..A_k."""

    matrices: tuple

    def __init__(self, matrices):
        object.__setattr__(self, "matrices", tuple(_as_int_matrix(m) for m in matrices))

    @property
    def k(self):
        return len(self.matrices)

    @property
    def N(self):
        return self.matrices[0].shape[0] if self.matrices else 0

    def to_lists(self):
        return [m.tolist() for m in self.matrices]


@dataclass(frozen=True)
class PerronData:
    rho: tuple
    kappa: np.ndarray = field(repr=False)

    @property
    def rho_product(self):
        return float(np.prod(self.rho))

    def to_dict(self):
        return {
            "rho": [float(r) for r in self.rho],
            "kappa": [float(x) for x in self.kappa],
            "rho_product": self.rho_product,
        }


@dataclass(frozen=True)
class ValidatedKGraph:
    spec: KGraphSpec
    perron: PerronData

    @property
    def k(self):
        return self.spec.k

    @property
    def N(self):
        return self.spec.N

    @property
    def matrices(self):
        return self.spec.matrices


def _as_int_matrix(m):
    a = np.asarray(m)
    if a.ndim != 2:
        raise DimensionMismatch(f"vertex matrix must be 2-d, got shape {a.shape}")
    if a.size and not np.all(np.equal(np.mod(a, 1), 0)):
        raise DimensionMismatch("vertex matrix entries must be integers")
    a = a.astype(np.int64)
    if np.any(a < 0):
        raise DimensionMismatch("vertex matrix entries must be nonnegative")
    return a


def _exact(m):
    return np.array(m.tolist(), dtype=object)


def commutes(a, b):
    """Exact integer test of a @ b == b @ a."""
    ea, eb = _exact(a), _exact(b)
    return bool(np.all(ea.dot(eb) == eb.dot(ea)))


def is_irreducible(matrices):
    """True iff (I + sum A_i)^N is entrywise positive.

    Computed on the boolean adjacency pattern so entries cannot overflow.
    """
    n = matrices[0].shape[0]
    adj = np.eye(n, dtype=bool)
    for a in matrices:
        adj |= a > 0
    reach = adj.copy()
    # repeated squaring: reach^(2^j) covers all walks of length <= N once 2^j >= N
    steps = 1
    while steps < n:
        reach = (reach.astype(np.int64) @ reach.astype(np.int64)) > 0
        steps *= 2
    return bool(reach.all())


def _power_iteration(b, tol=POWER_TOL, maxiter=POWER_MAXITER):
    n = b.shape[0]
    x = np.full(n, 1.0 / n)
    for _ in range(maxiter):
        y = b @ x
        y /= y.sum()
        change = np.max(np.abs(y - x)) / np.max(y)
        x = y
        if change < tol:
            return x, True
    return x, False


def _residual_ok(matrices, kappa, rho, tol=1e-10):
    for a, r in zip(matrices, rho):
        if np.max(np.abs(a @ kappa - r * kappa)) > tol * r:
            return False
    return True


def compute_perron(matrices):
    """Common positive eigenvector kappa (sum 1) and spectral radii rho_i.

    kappa is the Perron vector of B = I + sum_i A_i. B is primitive for an
    irreducible family and commutes with every A_i, so its simple Perron
    eigenspace is invariant under each A_i.
    """
    fmats = [a.astype(float) for a in matrices]
    n = fmats[0].shape[0]
    b = np.eye(n) + sum(fmats)
    kappa, converged = _power_iteration(b)
    rho = tuple(float(np.sum(a @ kappa)) for a in fmats)
    if converged and np.all(kappa > 0) and _residual_ok(fmats, kappa, rho):
        return PerronData(rho=rho, kappa=kappa)
    if n > DENSE_FALLBACK_MAX_N:
        raise NoConvergence("power iteration did not converge")
    vals, vecs = np.linalg.eig(b)
    idx = int(np.argmax(vals.real))
    kappa = np.abs(vecs[:, idx].real)
    kappa /= kappa.sum()
    rho = tuple(float(np.sum(a @ kappa)) for a in fmats)
    if not (np.all(kappa > 0) and _residual_ok(fmats, kappa, rho)):
        raise NoConvergence("no common positive eigenvector within tolerance")
    return PerronData(rho=rho, kappa=kappa)


def validate(spec):
    """Check commutation, irreducibility and rho_i > 1; return a ValidatedKGraph."""
    if not isinstance(spec, KGraphSpec):
        spec = KGraphSpec(spec)
    mats = spec.matrices
    if not mats:
        raise DimensionMismatch("need at least one vertex matrix")
    n = mats[0].shape[0]
    for a in mats:
        if a.shape != (n, n):
            raise DimensionMismatch(f"expected {n}x{n} matrices, got {a.shape}")
    if n == 0:
        raise DimensionMismatch("empty vertex set")
    for i in range(len(mats)):
        for j in range(i + 1, len(mats)):
            if not commutes(mats[i], mats[j]):
                raise NotCommuting(i + 1, j + 1)
    if not is_irreducible(mats):
        raise NotIrreducible("union digraph of the vertex matrices is not strongly connected")
    perron = compute_perron(mats)
    for i, r in enumerate(perron.rho):
        if not r > 1.0:
            raise SpectralRadiusAtMostOne(i + 1, r)
    return ValidatedKGraph(spec=spec, perron=perron)


def perron_data(vk):
    return compute_perron(vk.matrices)
