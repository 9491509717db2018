"""Explicit finite-difference simulator for the cubic Barkley model.

The state of the medium is an activator ``u`` and an inhibitor ``v`` on an
``nx x ny`` grid.  Trajectories are stored as arrays of shape
``(n_frames, 2, nx, ny)`` (time-major, variable-major, row-major), which is
also the on-disk layout used by :mod:`hybrid_rc.io`.

The same integrator, run with a perturbed ``eps``, serves as the imperfect
knowledge-based model (see :func:`make_epsilon_model` and
:class:`KnowledgeModel`).
"""
from __future__ import annotations

import dataclasses
from dataclasses import dataclass
from typing import Iterator, Optional

import numpy as np

__all__ = [
    "BlowUpError",
    "FieldPair",
    "BarkleyParams",
    "KnowledgeModel",
    "laplacian_no_flux",
    "barkley_step",
    "step_fields",
    "simulate",
    "iter_simulate",
    "make_epsilon_model",
    "default_initial_condition",
]


class BlowUpError(FloatingPointError):
    """Raised when an integration step produces NaN or Inf values."""

    def __init__(self, message: str, step: Optional[int] = None):
        super().__init__(message)
        self.step = step


@dataclass(frozen=True, eq=False)
class FieldPair:
    """Activator and inhibitor fields at a single instant."""

    u: np.ndarray
    v: np.ndarray

    def __post_init__(self):
        u = np.asarray(self.u, dtype=float)
        v = np.asarray(self.v, dtype=float)
        if u.ndim != 2 or u.shape != v.shape:
            raise ValueError(f"u and v must be 2D grids of equal shape, got {u.shape} and {v.shape}")
        if min(u.shape) < 1:
            raise ValueError("grid dimensions must be >= 1")
        object.__setattr__(self, "u", u)
        object.__setattr__(self, "v", v)

    @property
    def shape(self) -> tuple[int, int]:
        return self.u.shape

    def as_array(self) -> np.ndarray:
        """Stack into a ``(2, nx, ny)`` array."""
        return np.stack([self.u, self.v])

    @classmethod
    def from_array(cls, arr: np.ndarray) -> "FieldPair":
        arr = np.asarray(arr, dtype=float)
        if arr.ndim != 3 or arr.shape[0] != 2:
            raise ValueError(f"expected an array of shape (2, nx, ny), got {arr.shape}")
        return cls(arr[0].copy(), arr[1].copy())

    def __eq__(self, other):
        if not isinstance(other, FieldPair):
            return NotImplemented
        return np.array_equal(self.u, other.u) and np.array_equal(self.v, other.v)


@dataclass(frozen=True)
class BarkleyParams:
    """PDE coefficients and discretization.

    Defaults are the coefficients used throughout the experiments:
    ``D=0.02, a=0.75, b=0.06, eps=0.08`` with ``dt=0.01`` and ``dx=0.1`` on
    an 80 x 80 grid.
    """

    d: float = 0.02
    a: float = 0.75
    b: float = 0.06
    eps: float = 0.08
    dt: float = 0.01
    dx: float = 0.1
    nx: int = 80
    ny: int = 80

    def __post_init__(self):
        if not self.dt > 0:
            raise ValueError("dt must be positive")
        if not self.dx > 0:
            raise ValueError("dx must be positive")
        if not self.eps > 0:
            raise ValueError("eps must be positive")
        if self.a == 0:
            raise ValueError("a must be nonzero")
        if self.nx < 3 or self.ny < 3:
            raise ValueError("grid must be at least 3 x 3")


def laplacian_no_flux(field: np.ndarray, dx: float) -> np.ndarray:
    """Five-point Laplacian with zero-normal-derivative boundaries.

    Out-of-grid neighbors take the value of the nearest edge cell (clamped
    index), so the stencil weights along every row and column sum to zero and
    pure diffusion conserves the grid sum.  Operates on the last two axes, so
    stacks of fields are handled in one call.
    """
    f = np.asarray(field, dtype=float)
    if f.ndim < 2 or f.shape[-1] < 3 or f.shape[-2] < 3:
        raise ValueError(f"Laplacian needs a grid of at least 3 x 3, got shape {f.shape}")
    if not dx > 0:
        raise ValueError("dx must be positive")
    lap = -4.0 * f
    lap[..., 1:, :] += f[..., :-1, :]
    lap[..., :1, :] += f[..., :1, :]
    lap[..., :-1, :] += f[..., 1:, :]
    lap[..., -1:, :] += f[..., -1:, :]
    lap[..., :, 1:] += f[..., :, :-1]
    lap[..., :, :1] += f[..., :, :1]
    lap[..., :, :-1] += f[..., :, 1:]
    lap[..., :, -1:] += f[..., :, -1:]
    return lap / (dx * dx)


def step_fields(x: np.ndarray, p: BarkleyParams, *, reaction: bool = True) -> np.ndarray:
    """One Euler step on an array of shape ``(..., 2, nx, ny)``.

    Every leading index is an independent state; the result is elementwise
    identical to stepping each state separately.  ``reaction=False`` drops the
    reaction term of the activator equation (used to check mass conservation
    of the diffusion stencil).
    """
    x = np.asarray(x, dtype=float)
    u = x[..., 0, :, :]
    v = x[..., 1, :, :]
    out = np.empty_like(x)
    # overflow is reported below as BlowUpError, not as a numpy warning
    with np.errstate(over="ignore", invalid="ignore"):
        du = p.d * laplacian_no_flux(u, p.dx)
        if reaction:
            du += (1.0 / p.eps) * u * (1.0 - u) * (u - (v + p.b) / p.a)
        out[..., 0, :, :] = u + p.dt * du
        out[..., 1, :, :] = v + p.dt * (u * u * u - v)
    if not np.isfinite(out).all():
        raise BlowUpError("non-finite value produced by Barkley step")
    return out


def barkley_step(state: FieldPair, p: BarkleyParams, *, reaction: bool = True) -> FieldPair:
    """Advance ``state`` by one explicit Euler step of size ``p.dt``."""
    if state.shape != (p.nx, p.ny):
        raise ValueError(f"state shape {state.shape} does not match params ({p.nx}, {p.ny})")
    return FieldPair.from_array(step_fields(state.as_array(), p, reaction=reaction))


def iter_simulate(p: BarkleyParams, init: FieldPair, n_steps: int) -> Iterator[np.ndarray]:
    """Yield ``n_steps + 1`` frames of shape ``(2, nx, ny)``, starting with ``init``."""
    if n_steps < 1:
        raise ValueError("n_steps must be >= 1")
    if init.shape != (p.nx, p.ny):
        raise ValueError(f"initial state shape {init.shape} does not match params ({p.nx}, {p.ny})")
    x = init.as_array()
    if not np.isfinite(x).all():
        raise ValueError("initial state contains non-finite values")
    yield x
    for k in range(n_steps):
        try:
            x = step_fields(x, p)
        except BlowUpError as exc:
            raise BlowUpError(f"simulation blew up at step {k + 1}", step=k + 1) from exc
        yield x


def simulate(p: BarkleyParams, init: FieldPair, n_steps: int) -> np.ndarray:
    """Integrate ``n_steps`` steps; returns an array ``(n_steps + 1, 2, nx, ny)``.

    Frame 0 is ``init``.  Raises :class:`BlowUpError` carrying the index of
    the first non-finite step.
    """
    if n_steps < 1:
        raise ValueError("n_steps must be >= 1")
    out = np.empty((n_steps + 1, 2, p.nx, p.ny))
    for k, frame in enumerate(iter_simulate(p, init, n_steps)):
        out[k] = frame
    return out


def make_epsilon_model(p: BarkleyParams, e: float) -> BarkleyParams:
    """Return ``p`` with ``eps`` multiplied by ``(1 + e)``.

    ``e`` is the model error of the knowledge-based model; ``e = -1`` would
    zero ``eps`` and is rejected.
    """
    if e == -1:
        raise ValueError("model error e = -1 gives a degenerate model (eps = 0)")
    if e == 0:
        return p
    return dataclasses.replace(p, eps=p.eps * (1.0 + e))


def default_initial_condition(nx: int, ny: int, seed: int, a: float = 0.75) -> FieldPair:
    """Crossed half-plane start that develops into rotating waves.

    ``u`` is 1 on the left half and 0 elsewhere, ``v`` is ``a/2`` on the
    bottom half.  Seeded uniform noise of amplitude 0.01 is added; on the
    activator it is folded inward (``|block - noise|``) so ``u`` stays in
    [0, 1], since ``u > 1`` next to large ``v`` diverges under the cubic
    inhibitor kinetics.
    """
    if nx < 3 or ny < 3:
        raise ValueError("grid must be at least 3 x 3")
    rng = np.random.default_rng(seed)
    block_u = np.zeros((nx, ny))
    block_u[:, : ny // 2] = 1.0
    v = np.zeros((nx, ny))
    v[nx // 2 :, :] = a / 2.0
    u = np.abs(block_u - rng.uniform(0.0, 0.01, size=(nx, ny)))
    v = v + rng.uniform(0.0, 0.01, size=(nx, ny))
    return FieldPair(u, v)


class KnowledgeModel:
    """One-step predictor ``K(u) ~ u(t + dt)`` backed by the Barkley integrator.

    Counts every evaluated frame in :attr:`calls`, so callers can verify that
    a configuration never touches the model.
    """

    def __init__(self, params: BarkleyParams):
        self.params = params
        self.calls = 0

    @classmethod
    def with_error(cls, params: BarkleyParams, e: float) -> "KnowledgeModel":
        return cls(make_epsilon_model(params, e))

    def __call__(self, x: np.ndarray, chunk: int = 512) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        if x.ndim == 3:
            self.calls += 1
            return step_fields(x, self.params)
        out = np.empty_like(x)
        for s in range(0, x.shape[0], chunk):
            out[s : s + chunk] = step_fields(x[s : s + chunk], self.params)
        self.calls += x.shape[0]
        return out
