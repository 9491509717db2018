"""Local-states prediction: one reservoir per grid point fed by a sigma x sigma patch.

Grid points are numbered row-major (``p = i * ny + j``).  All per-point work
is vectorized over fixed blocks of consecutive points; worker threads only
decide which block is processed when, so results do not depend on the
thread count.
"""
from __future__ import annotations

import functools
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence

import numpy as np
from scipy import sparse
from scipy.linalg.blas import dsyrk

from .barkley import BlowUpError, FieldPair, KnowledgeModel
from .hybrid import DimPlan, HybridMode, plan_dims
from .reservoir import (
    Readout,
    ReservoirMatrices,
    ReservoirSpec,
    SingularSystemError,
    ZeroSpectralRadiusError,
    build_adjacency,
    build_input_matrix,
    ridge_solve,
)

__all__ = [
    "PatchSpec",
    "PredictionBlowUpError",
    "LocalDataset",
    "MatrixBank",
    "ReservoirGrid",
    "patch_indices",
    "extract_patch",
    "gather_patches",
    "add_input_noise",
    "build_local_dataset",
    "point_seed",
    "train_all",
    "predict_closed_loop",
]

DEFAULT_BLOCK_SIZE = 64
# time steps per Gram-matrix update; fixed so the summation order never changes
GRAM_CHUNK = 256


class PredictionBlowUpError(BlowUpError):
    """The closed loop produced non-finite values; ``partial`` holds the frames emitted so far."""

    def __init__(self, message: str, step: int, partial: np.ndarray):
        super().__init__(message, step=step)
        self.partial = partial


@dataclass(frozen=True)
class PatchSpec:
    sigma: int = 3

    def __post_init__(self):
        if self.sigma < 1 or self.sigma % 2 == 0:
            raise ValueError(f"sigma must be a positive odd integer, got {self.sigma}")

    @property
    def size(self) -> int:
        """Length of a patch vector (both variables)."""
        return 2 * self.sigma * self.sigma


@functools.lru_cache(maxsize=32)
def patch_indices(nx: int, ny: int, sigma: int) -> np.ndarray:
    """Flat neighborhood indices, shape ``(nx * ny, sigma**2)``.

    Row ``p`` lists the row-major sigma x sigma square around point ``p``;
    neighbors outside the grid are clamped to the nearest edge cell.
    """
    half = sigma // 2
    offsets = np.arange(-half, half + 1)
    ii = np.clip(np.arange(nx)[:, None] + offsets[None, :], 0, nx - 1)  # (nx, sigma)
    jj = np.clip(np.arange(ny)[:, None] + offsets[None, :], 0, ny - 1)  # (ny, sigma)
    flat = ii[:, None, :, None] * ny + jj[None, :, None, :]  # (nx, ny, sigma, sigma)
    idx = flat.reshape(nx * ny, sigma * sigma)
    idx.setflags(write=False)
    return idx


def gather_patches(fields: np.ndarray, idx: np.ndarray) -> np.ndarray:
    """Patch vectors for a set of points.

    ``fields`` has shape ``(..., 2, nx, ny)`` and ``idx`` is a block of rows
    from :func:`patch_indices`; the result has shape ``(..., P, 2 * sigma**2)``
    with all ``u`` values first, then all ``v`` values.
    """
    fields = np.asarray(fields)
    lead = fields.shape[:-3]
    flat = fields.reshape(lead + (2, -1))
    patches = flat[..., idx]  # (..., 2, P, s2)
    patches = np.moveaxis(patches, -3, -2)  # (..., P, 2, s2)
    return patches.reshape(lead + (idx.shape[0], 2 * idx.shape[1]))


def extract_patch(state: FieldPair, i: int, j: int, spec: PatchSpec) -> np.ndarray:
    """``u`` then ``v`` values over the sigma x sigma square centered at ``(i, j)``."""
    nx, ny = state.shape
    if not (0 <= i < nx and 0 <= j < ny):
        raise IndexError(f"point ({i}, {j}) lies outside the {nx} x {ny} grid")
    idx = patch_indices(nx, ny, spec.sigma)[i * ny + j][None, :]
    return gather_patches(state.as_array(), idx)[0]


def add_input_noise(data: np.ndarray, alpha: float, seed: int) -> np.ndarray:
    """Add Gaussian noise scaled per variable to ``alpha`` times its standard deviation.

    ``data`` is a trajectory ``(T, 2, nx, ny)``; the standard deviation of each
    variable is taken over the whole sequence.
    """
    data = np.asarray(data, dtype=float)
    if alpha < 0:
        raise ValueError("alpha must be >= 0")
    if alpha == 0:
        return data.copy()
    scale = alpha * data.std(axis=(0, 2, 3))
    rng = np.random.default_rng(seed)
    noise = rng.standard_normal(data.shape)
    return data + noise * scale[None, :, None, None]


@dataclass
class LocalDataset:
    """Training pairs for all grid points, kept as global fields.

    ``inputs[t]`` (noise-added) drives every reservoir at step ``t``,
    ``kbm[t]`` is the model's one-step prediction from the noise-free field,
    and ``targets[t]`` is the true field one step later.  Per-point views are
    cut out on demand to keep memory proportional to the grid.
    """

    inputs: np.ndarray
    targets: np.ndarray
    kbm: Optional[np.ndarray]
    patch: PatchSpec

    def __post_init__(self):
        if self.inputs.shape != self.targets.shape:
            raise ValueError("inputs and targets must have identical shapes")
        if self.kbm is not None and self.kbm.shape != self.inputs.shape:
            raise ValueError("KBM predictions must match the input shape")

    def __len__(self) -> int:
        return self.inputs.shape[0]

    @property
    def grid_shape(self) -> tuple[int, int]:
        return self.inputs.shape[-2:]

    def _idx(self, points) -> np.ndarray:
        nx, ny = self.grid_shape
        return patch_indices(nx, ny, self.patch.sigma)[np.asarray(points)]

    def input_patches(self, points, mode) -> np.ndarray:
        """Reservoir inputs, shape ``(T, P, x_dim)``."""
        mode = HybridMode.parse(mode)
        idx = self._idx(points)
        x = gather_patches(self.inputs, idx)
        if mode.kbm_in_input:
            x = np.concatenate([x, gather_patches(self._need_kbm(mode), idx)], axis=-1)
        return x

    def kbm_block(self, points, kbm_readout: str = "patch") -> np.ndarray:
        """KBM readout features, shape ``(T, P, kbm_feat)``."""
        kbm = self._need_kbm(HybridMode.OUTPUT)
        if kbm_readout == "center":
            flat = kbm.reshape(kbm.shape[0], 2, -1)
            return np.moveaxis(flat[:, :, np.asarray(points)], 1, 2)
        return gather_patches(kbm, self._idx(points))

    def point_targets(self, points) -> np.ndarray:
        """Targets, shape ``(T, P, 2)``."""
        flat = self.targets.reshape(self.targets.shape[0], 2, -1)
        return np.moveaxis(flat[:, :, np.asarray(points)], 1, 2)

    def _need_kbm(self, mode) -> np.ndarray:
        if self.kbm is None:
            raise ValueError(f"mode {mode} needs KBM predictions but the dataset has none")
        return self.kbm


def build_local_dataset(truth: np.ndarray, kbm_params, mode, spec: PatchSpec, alpha: float,
                        seed: int) -> LocalDataset:
    """Assemble training data from a true trajectory ``(L, 2, nx, ny)``.

    The KBM (``kbm_params`` or a :class:`KnowledgeModel`) is applied to the
    noise-free fields; noise only enters the reservoir input copy.  The
    plain reservoir mode skips the KBM entirely.
    """
    truth = np.asarray(truth, dtype=float)
    if truth.ndim != 4 or truth.shape[0] < 2 or truth.shape[1] != 2:
        raise ValueError("truth must be a trajectory (L >= 2, 2, nx, ny)")
    mode = HybridMode.parse(mode)
    kbm = None
    if mode.uses_kbm:
        model = kbm_params if isinstance(kbm_params, KnowledgeModel) else KnowledgeModel(kbm_params)
        kbm = model(truth[:-1])
    inputs = add_input_noise(truth[:-1], alpha, seed)
    return LocalDataset(inputs=inputs, targets=truth[1:], kbm=kbm, patch=spec)


def point_seed(base_seed: int, i: int, j: int, attempt: int = 0) -> int:
    """Seed for the reservoir at ``(i, j)``; depends only on its arguments."""
    return int(np.random.SeedSequence((base_seed, i, j, attempt)).generate_state(1)[0])


class _BlockOps:
    """Batched reservoir update for one block of points."""

    def __init__(self, a, cols: np.ndarray, vals: np.ndarray, per_point: bool):
        self.a = a
        self.cols = cols
        self.vals = vals
        self.per_point = per_point
        self._rows = np.arange(cols.shape[0])[:, None] if per_point else None

    def advance(self, r: np.ndarray, x: np.ndarray) -> np.ndarray:
        """``r`` is ``(P, r_dim)``, ``x`` is ``(P, x_dim)``."""
        if self.per_point:
            lin = (self.a @ r.ravel()).reshape(r.shape)
            lin += x[self._rows, self.cols] * self.vals
        else:
            lin = (self.a @ r.T).T
            lin += x[:, self.cols] * self.vals
        return np.tanh(lin)


def _input_columns(w_in: sparse.csr_matrix) -> tuple[np.ndarray, np.ndarray]:
    w_in = sparse.csr_matrix(w_in)
    w_in.sort_indices()
    if not np.array_equal(w_in.indptr, np.arange(w_in.shape[0] + 1)):
        raise ValueError("input matrix must have exactly one entry per row")
    return w_in.indices.copy(), w_in.data.copy()


@dataclass
class MatrixBank:
    """Fixed reservoir matrices for a whole grid.

    ``sharing="shared"`` uses one adjacency/input pair for every point;
    ``"per-point"`` draws an independent pair for each point from
    :func:`point_seed`.
    """

    spec: ReservoirSpec
    x_dim: int
    nx: int
    ny: int
    sharing: str = "shared"
    shared: Optional[ReservoirMatrices] = None
    per_point: Optional[list] = None

    @classmethod
    def build(cls, spec: ReservoirSpec, x_dim: int, nx: int, ny: int, sharing: str = "shared") -> "MatrixBank":
        if sharing == "shared":
            m = ReservoirMatrices(build_adjacency(spec), build_input_matrix(spec.r_dim, x_dim, spec.seed))
            return cls(spec, x_dim, nx, ny, sharing, shared=m)
        if sharing != "per-point":
            raise ValueError(f"unknown matrix sharing {sharing!r}; expected 'shared' or 'per-point'")
        mats = []
        for i in range(nx):
            for j in range(ny):
                mats.append(_draw_point_matrices(spec, x_dim, i, j))
        return cls(spec, x_dim, nx, ny, sharing, per_point=mats)

    def matrices(self, i: int, j: int) -> ReservoirMatrices:
        if self.shared is not None:
            return self.shared
        return self.per_point[i * self.ny + j]

    def block_ops(self, points: np.ndarray) -> _BlockOps:
        if self.shared is not None:
            cols, vals = _input_columns(self.shared.w_in)
            return _BlockOps(self.shared.a, cols, vals, per_point=False)
        mats = [self.per_point[p] for p in points]
        a = sparse.block_diag([m.a for m in mats], format="csr")
        cv = [_input_columns(m.w_in) for m in mats]
        cols = np.stack([c for c, _ in cv])
        vals = np.stack([v for _, v in cv])
        return _BlockOps(a, cols, vals, per_point=True)


def _draw_point_matrices(spec: ReservoirSpec, x_dim: int, i: int, j: int) -> ReservoirMatrices:
    for attempt in range(100):
        seed = point_seed(spec.seed, i, j, attempt)
        try:
            a = build_adjacency(ReservoirSpec(spec.r_dim, spec.kappa, spec.rho, spec.beta, seed))
        except ZeroSpectralRadiusError:
            continue
        return ReservoirMatrices(a, build_input_matrix(spec.r_dim, x_dim, seed))
    raise ZeroSpectralRadiusError(f"no usable adjacency matrix for point ({i}, {j})")


@dataclass
class ReservoirGrid:
    """Trained reservoirs for every grid point.

    ``w_out`` has shape ``(nx * ny, 2, h_dim)``; ``feature_ms`` holds the
    mean square of every readout feature over the training data (used for
    activity-weighted contribution analysis).
    """

    nx: int
    ny: int
    mode: HybridMode
    patch: PatchSpec
    plan: DimPlan
    bank: MatrixBank
    w_out: np.ndarray
    feature_ms: np.ndarray
    kbm_readout: str = "patch"
    readout_state: str = "augmented"
    block_size: int = DEFAULT_BLOCK_SIZE
    _ops: dict = field(default_factory=dict, repr=False)

    @property
    def n_points(self) -> int:
        return self.nx * self.ny

    def readout(self, i: int, j: int) -> Readout:
        return Readout(self.w_out[i * self.ny + j])

    def blocks(self) -> list[np.ndarray]:
        return _blocks(self.n_points, self.block_size)

    def ops(self, b: int, points: np.ndarray) -> _BlockOps:
        if b not in self._ops:
            self._ops[b] = self.bank.block_ops(points)
        return self._ops[b]


def _blocks(n_points: int, block_size: int) -> list[np.ndarray]:
    if block_size < 1:
        raise ValueError("block_size must be >= 1")
    return [np.arange(s, min(s + block_size, n_points)) for s in range(0, n_points, block_size)]


def _pmap(fn: Callable, items: Sequence, threads: int) -> list:
    if threads <= 1 or len(items) <= 1:
        return [fn(it) for it in items]
    with ThreadPoolExecutor(max_workers=threads) as pool:
        return list(pool.map(fn, items))


def _write_features(buf: np.ndarray, r: np.ndarray, kfeat, plan: DimPlan) -> None:
    rd = r.shape[1]
    buf[:, :rd] = r
    if plan.r_feat == 2 * rd:
        np.multiply(r, r, out=buf[:, rd : 2 * rd])
    if kfeat is not None:
        buf[:, plan.r_feat :] = kfeat


def _accumulate(gram: np.ndarray, cross: np.ndarray, buf: np.ndarray, ybuf: np.ndarray, n: int) -> None:
    # dsyrk fills the upper triangle of gram[b].T, i.e. the lower triangle of gram[b]
    for b in range(buf.shape[0]):
        dsyrk(1.0, buf[b, :n].T, beta=1.0, c=gram[b].T, trans=0, lower=0, overwrite_c=1)
    cross += np.matmul(ybuf[:, :n].transpose(0, 2, 1), buf[:, :n])


def _qr_accumulate(tri: np.ndarray, buf: np.ndarray, ybuf: np.ndarray, n: int) -> None:
    # tri[b] is the triangular factor of [H^T | Y^T] over all rows seen so far
    m = tri.shape[1]
    work = np.empty((m + n, m))
    for b in range(buf.shape[0]):
        work[:m] = tri[b]
        work[m:, : buf.shape[2]] = buf[b, :n]
        work[m:, buf.shape[2] :] = ybuf[b, :n]
        tri[b] = np.linalg.qr(work, mode="r")


def _min_norm_from_factor(tri: np.ndarray, h_dim: int, n_rows: int) -> np.ndarray:
    """Minimum-norm least-squares readout from the factor built by :func:`_qr_accumulate`.

    Singular values below ``eps * max(n_rows, h_dim)`` relative to the
    largest are dropped, the same cutoff :func:`numpy.linalg.lstsq` applies.
    """
    r = tri[:h_dim, :h_dim]
    z = tri[:h_dim, h_dim:]
    u, s, vt = np.linalg.svd(r)
    keep = s > np.finfo(float).eps * max(n_rows, h_dim) * s[0] if s[0] > 0 else np.zeros_like(s, bool)
    coef = (u[:, keep].T @ z) / s[keep, None]
    return (vt[keep].T @ coef).T


def train_all(dataset: LocalDataset, spec: ReservoirSpec, mode, sync_steps: int, *,
              bank: Optional[MatrixBank] = None, sharing: str = "shared", kbm_readout: str = "patch",
              readout_state: str = "augmented", threads: int = 1,
              block_size: int = DEFAULT_BLOCK_SIZE) -> ReservoirGrid:
    """Train one readout per grid point.

    Each reservoir starts from the zero state, is driven through the first
    ``sync_steps`` inputs with features discarded, and its readout is
    ridge-fitted on the remaining steps.  Pass ``bank`` to reuse matrices
    from an earlier training section.

    With ``spec.beta > 0`` the Gram matrix is accumulated and solved by
    Cholesky.  With ``beta == 0`` forming the Gram matrix would square an
    already huge condition number (edge patches repeat cells, so some
    feature columns are exact duplicates), so the feature matrix is instead
    reduced by a streaming QR factorization and the minimum-norm
    least-squares readout is returned.
    """
    mode = HybridMode.parse(mode)
    n_total = len(dataset)
    if n_total <= sync_steps:
        raise ValueError(f"dataset has {n_total} steps, needs more than sync_steps={sync_steps}")
    nx, ny = dataset.grid_shape
    plan = plan_dims(mode, spec.r_dim, dataset.patch.sigma, kbm_readout=kbm_readout,
                     readout_state=readout_state)
    if bank is None:
        bank = MatrixBank.build(spec, plan.x_dim, nx, ny, sharing)
    elif bank.x_dim != plan.x_dim or bank.spec.r_dim != spec.r_dim or (bank.nx, bank.ny) != (nx, ny):
        raise ValueError("matrix bank does not match the requested reservoir layout")
    grid = ReservoirGrid(nx, ny, mode, dataset.patch, plan, bank,
                         w_out=np.empty((nx * ny, 2, plan.h_dim)),
                         feature_ms=np.empty((nx * ny, plan.h_dim)),
                         kbm_readout=kbm_readout, readout_state=readout_state, block_size=block_size)
    n_feat = n_total - sync_steps

    def train_block(item):
        b, points = item
        ops = grid.ops(b, points)
        x = dataset.input_patches(points, mode)
        kf = dataset.kbm_block(points, kbm_readout) if mode.kbm_in_readout else None
        y = dataset.point_targets(points)
        pb = len(points)
        r = np.zeros((pb, spec.r_dim))
        buf = np.empty((pb, min(GRAM_CHUNK, n_feat), plan.h_dim))
        ybuf = np.empty((pb, buf.shape[1], 2))
        exact = spec.beta == 0
        if exact:
            tri = np.zeros((pb, plan.h_dim + 2, plan.h_dim + 2))
        else:
            gram = np.zeros((pb, plan.h_dim, plan.h_dim))
            cross = np.zeros((pb, 2, plan.h_dim))

        def flush(n):
            if exact:
                _qr_accumulate(tri, buf, ybuf, n)
            else:
                _accumulate(gram, cross, buf, ybuf, n)

        fill = 0
        for t in range(n_total):
            r = ops.advance(r, x[t])
            if t < sync_steps:
                continue
            _write_features(buf[:, fill], r, None if kf is None else kf[t], plan)
            ybuf[:, fill] = y[t]
            fill += 1
            if fill == buf.shape[1]:
                flush(fill)
                fill = 0
        if fill:
            flush(fill)
        for k, p in enumerate(points):
            if exact:
                grid.w_out[p] = _min_norm_from_factor(tri[k], plan.h_dim, n_feat)
                fac = tri[k][:, : plan.h_dim]
                grid.feature_ms[p] = np.einsum("ij,ij->j", fac, fac) / n_feat
                continue
            try:
                grid.w_out[p] = ridge_solve(gram[k], cross[k], spec.beta)
            except SingularSystemError as exc:
                i, j = divmod(int(p), ny)
                err = SingularSystemError(f"ridge system singular at point ({i}, {j}): {exc}")
                err.point = (i, j)
                raise err from exc
            grid.feature_ms[p] = np.diagonal(gram[k]) / n_feat

    _pmap(train_block, list(enumerate(grid.blocks())), threads)
    return grid


def predict_closed_loop(grid: ReservoirGrid, sync_data: np.ndarray, kbm, n_steps: int, *,
                        threads: int = 1, noise_alpha: float = 0.0, noise_seed: int = 0) -> np.ndarray:
    """Synchronize on ``sync_data`` then forecast ``n_steps`` frames autonomously.

    ``kbm`` is a :class:`BarkleyParams`, a :class:`KnowledgeModel` (whose call
    counter is updated) or ``None`` for the plain reservoir mode.  Each step
    emits every point's ``(u, v)``, assembles the global field, runs one
    global KBM step on it when the mode needs one, and feeds each reservoir
    its patches of both fields.  Returns ``(n_steps, 2, nx, ny)``; frame 0
    predicts the step right after the last synchronization frame.
    """
    mode = grid.mode
    sync = np.asarray(sync_data, dtype=float)
    if sync.ndim != 4 or sync.shape[0] < 1 or sync.shape[2:] != (grid.nx, grid.ny):
        raise ValueError("sync_data must be a trajectory (S >= 1, 2, nx, ny) on the grid")
    if n_steps < 0:
        raise ValueError("n_steps must be >= 0")
    model = None
    if mode.uses_kbm:
        if kbm is None:
            raise ValueError(f"mode {mode} needs a knowledge-based model")
        model = kbm if isinstance(kbm, KnowledgeModel) else KnowledgeModel(kbm)
    plan = grid.plan
    nx, ny = grid.nx, grid.ny
    idx_all = patch_indices(nx, ny, grid.patch.sigma)
    blocks = grid.blocks()
    items = list(enumerate(blocks))
    ops = [grid.ops(b, pts) for b, pts in items]

    inputs = add_input_noise(sync, noise_alpha, noise_seed) if noise_alpha else sync
    k_sync = model(sync) if mode.kbm_in_input else None
    k_last = None
    if mode.kbm_in_readout:
        k_last = k_sync[-1] if k_sync is not None else model(sync[-1])

    def sync_block(item):
        b, pts = item
        idx = idx_all[pts]
        x = gather_patches(inputs, idx)
        if k_sync is not None:
            x = np.concatenate([x, gather_patches(k_sync, idx)], axis=-1)
        r = np.zeros((len(pts), plan.r_dim))
        for s in range(x.shape[0]):
            r = ops[b].advance(r, x[s])
        return r

    states = _pmap(sync_block, items, threads)
    out = np.empty((n_steps, 2, nx, ny))
    w_blocks = [grid.w_out[pts] for pts in blocks]

    def kbm_features(pts, kfield):
        if grid.kbm_readout == "center":
            return kfield.reshape(2, -1)[:, pts].T
        return gather_patches(kfield, idx_all[pts])

    def emit_block(item):
        b, pts = item
        feats = np.empty((len(pts), plan.h_dim))
        kf = kbm_features(pts, k_last) if mode.kbm_in_readout else None
        _write_features(feats, states[b], kf, plan)
        return np.matmul(w_blocks[b], feats[:, :, None])[:, :, 0]

    def advance_block(item):
        b, pts = item
        idx = idx_all[pts]
        x = gather_patches(frame, idx)
        if mode.kbm_in_input:
            x = np.concatenate([x, gather_patches(k_last, idx)], axis=-1)
        return ops[b].advance(states[b], x)

    for n in range(n_steps):
        y = np.concatenate(_pmap(emit_block, items, threads), axis=0)  # (P, 2)
        frame = np.ascontiguousarray(y.T).reshape(2, nx, ny)
        if not np.isfinite(frame).all():
            raise PredictionBlowUpError(f"non-finite prediction at step {n}", step=n, partial=out[:n].copy())
        out[n] = frame
        if n == n_steps - 1:
            break
        if model is not None:
            try:
                k_last = model(frame)
            except BlowUpError as exc:
                raise PredictionBlowUpError(f"KBM blew up at prediction step {n}", step=n,
                                            partial=out[: n + 1].copy()) from exc
        states = _pmap(advance_block, items, threads)
    return out
