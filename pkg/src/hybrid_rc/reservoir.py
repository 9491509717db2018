"""Echo-state reservoir core: random matrices, state update and ridge readout."""
from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np
import scipy.linalg
from scipy import sparse

__all__ = [
    "ConvergenceError",
    "SingularSystemError",
    "ZeroSpectralRadiusError",
    "ReservoirSpec",
    "ReservoirMatrices",
    "Readout",
    "spectral_radius",
    "scale_to_spectral_radius",
    "build_adjacency",
    "build_input_matrix",
    "build_matrices",
    "advance",
    "augment",
    "ridge_solve",
    "train_readout",
    "drive_open_loop",
]

# stream tags keep the adjacency and input draws independent for one seed
_ADJACENCY_STREAM = 0
_INPUT_STREAM = 1


class ConvergenceError(RuntimeError):
    pass


class SingularSystemError(np.linalg.LinAlgError):
    """The unregularized ridge system is (numerically) singular."""


class ZeroSpectralRadiusError(ValueError):
    """The drawn adjacency matrix is nilpotent; reseed and try again."""


@dataclass(frozen=True)
class ReservoirSpec:
    """Reservoir hyperparameters.

    Defaults follow the tuned values (``r_dim=400, rho=0.5, beta=1e-6``) with
    an average degree of 3.
    """

    r_dim: int = 400
    kappa: float = 3.0
    rho: float = 0.5
    beta: float = 1e-6
    seed: int = 0

    def __post_init__(self):
        if self.r_dim < 1:
            raise ValueError("r_dim must be >= 1")
        if not (1 <= self.kappa < self.r_dim):
            raise ValueError("kappa must satisfy 1 <= kappa < r_dim")
        if not self.rho > 0:
            raise ValueError("rho must be positive")
        if self.beta < 0:
            raise ValueError("beta must be >= 0")
        if self.seed < 0:
            raise ValueError("seed must be non-negative")


@dataclass(frozen=True)
class ReservoirMatrices:
    a: sparse.csr_matrix
    w_in: sparse.csr_matrix

    @property
    def r_dim(self) -> int:
        return self.a.shape[0]

    @property
    def x_dim(self) -> int:
        return self.w_in.shape[1]


@dataclass(frozen=True)
class Readout:
    w_out: np.ndarray

    def __call__(self, h: np.ndarray) -> np.ndarray:
        return self.w_out @ h


def spectral_radius(m, tol: float = 1e-10, max_iter: int = 10_000, block: int = 12,
                    seed: int = 12345) -> float:
    """Largest eigenvalue modulus of a square matrix by block power iteration.

    A block of ``block`` vectors is iterated and re-orthonormalized each step;
    the estimate is the largest modulus among the Ritz values of the block.
    Using a block rather than a single vector lets complex-conjugate leading
    pairs converge too.  Stops once the estimate changes by less than ``tol``
    (relative) on three consecutive iterations.
    """
    shape = m.shape
    if len(shape) != 2 or shape[0] != shape[1]:
        raise ValueError(f"matrix must be square, got shape {shape}")
    n = shape[0]
    if sparse.issparse(m):
        m = m.tocsr()
        if not np.isfinite(m.data).all():
            raise ValueError("matrix contains non-finite entries")
        if m.count_nonzero() == 0:
            return 0.0
    else:
        m = np.asarray(m, dtype=float)
        if not np.isfinite(m).all():
            raise ValueError("matrix contains non-finite entries")
        if not m.any():
            return 0.0
    if n <= block:
        dense = m.toarray() if sparse.issparse(m) else m
        return float(np.max(np.abs(np.linalg.eigvals(dense))))

    rng = np.random.default_rng(seed)
    q, _ = np.linalg.qr(rng.standard_normal((n, block)))
    prev = None
    stable = 0
    for _ in range(max_iter):
        z = m @ q
        ritz = np.linalg.eigvals(q.T @ z)
        est = float(np.max(np.abs(ritz)))
        if not np.any(z):
            return 0.0
        if prev is not None and abs(est - prev) <= tol * max(est, np.finfo(float).tiny):
            stable += 1
            if stable >= 3:
                return est
        else:
            stable = 0
        prev = est
        q, _ = np.linalg.qr(z)
    raise ConvergenceError(f"power iteration did not converge within {max_iter} iterations")


def scale_to_spectral_radius(m, rho: float):
    """Rescale ``m`` so its spectral radius equals ``rho``; sign pattern is kept."""
    current = spectral_radius(m)
    if current == 0.0:
        raise ZeroSpectralRadiusError("matrix has spectral radius 0 and cannot be rescaled")
    return m * (rho / current)


def build_adjacency(spec: ReservoirSpec) -> sparse.csr_matrix:
    """Sparse random adjacency matrix rescaled to spectral radius ``spec.rho``.

    Every entry is nonzero independently with probability ``kappa / r_dim``,
    with weights uniform in [-1, 1].
    """
    r = spec.r_dim
    rng = np.random.default_rng((spec.seed, _ADJACENCY_STREAM))
    mask = rng.random((r, r)) < spec.kappa / r
    weights = rng.uniform(-1.0, 1.0, size=(r, r))
    a = sparse.csr_matrix(np.where(mask, weights, 0.0))
    a.eliminate_zeros()
    return sparse.csr_matrix(scale_to_spectral_radius(a, spec.rho))


def build_input_matrix(r_dim: int, x_dim: int, seed: int) -> sparse.csr_matrix:
    """Input matrix with exactly one uniform [-1, 1] weight per row."""
    if r_dim < 1 or x_dim < 1:
        raise ValueError("r_dim and x_dim must be >= 1")
    rng = np.random.default_rng((seed, _INPUT_STREAM))
    cols = rng.integers(0, x_dim, size=r_dim)
    vals = rng.uniform(-1.0, 1.0, size=r_dim)
    return sparse.csr_matrix((vals, (np.arange(r_dim), cols)), shape=(r_dim, x_dim))


def build_matrices(spec: ReservoirSpec, x_dim: int) -> ReservoirMatrices:
    return ReservoirMatrices(build_adjacency(spec), build_input_matrix(spec.r_dim, x_dim, spec.seed))


def advance(r: np.ndarray, m: ReservoirMatrices, x: np.ndarray) -> np.ndarray:
    """``tanh(A r + W_in x)``."""
    r = np.asarray(r, dtype=float)
    x = np.asarray(x, dtype=float)
    if r.shape != (m.r_dim,):
        raise ValueError(f"state has shape {r.shape}, expected ({m.r_dim},)")
    if x.shape != (m.x_dim,):
        raise ValueError(f"input has shape {x.shape}, expected ({m.x_dim},)")
    return np.tanh(m.a @ r + m.w_in @ x)


def augment(r: np.ndarray) -> np.ndarray:
    """Append the elementwise square: ``[r, r**2]`` along the last axis."""
    r = np.asarray(r, dtype=float)
    return np.concatenate([r, r * r], axis=-1)


def ridge_solve(gram: np.ndarray, cross: np.ndarray, beta: float) -> np.ndarray:
    """Solve ``W (G + beta I) = C`` for ``W`` with a Cholesky factorization.

    ``gram`` is ``H H^T`` (only its lower triangle is read) and ``cross`` is
    ``Y H^T``.  With ``beta == 0`` a (numerically) rank-deficient ``gram``
    raises :class:`SingularSystemError`.
    """
    gram = np.asarray(gram, dtype=float)
    n = gram.shape[0]
    system = gram + beta * np.eye(n) if beta else gram
    try:
        factor = scipy.linalg.cho_factor(system, lower=True, check_finite=False)
        if beta == 0:
            pivots = np.diag(factor[0]) ** 2
            if pivots.min() <= n * np.finfo(float).eps * np.abs(np.diag(gram)).max():
                raise np.linalg.LinAlgError("unregularized ridge system is rank-deficient")
    except np.linalg.LinAlgError as exc:
        raise SingularSystemError(str(exc)) from exc
    return scipy.linalg.cho_solve(factor, np.asarray(cross, dtype=float).T, check_finite=False).T


def train_readout(features: np.ndarray, targets: np.ndarray, beta: float) -> Readout:
    """Ridge regression ``W = Y H^T (H H^T + beta I)^-1``.

    ``features`` is ``h_dim x T`` and ``targets`` is ``y_dim x T``.
    """
    h = np.atleast_2d(np.asarray(features, dtype=float))
    y = np.atleast_2d(np.asarray(targets, dtype=float))
    if h.shape[1] != y.shape[1] or h.shape[1] < 1:
        raise ValueError(f"features {h.shape} and targets {y.shape} need the same T >= 1")
    if beta < 0:
        raise ValueError("beta must be >= 0")
    return Readout(ridge_solve(h @ h.T, y @ h.T, beta))


def drive_open_loop(m: ReservoirMatrices, inputs: Sequence[np.ndarray], r0: np.ndarray) -> list[np.ndarray]:
    """Teacher-forced driving; returns the state after each input."""
    states = []
    r = np.asarray(r0, dtype=float)
    for x in inputs:
        r = advance(r, m, x)
        states.append(r)
    return states
