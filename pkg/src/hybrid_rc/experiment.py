"""Experiment orchestration: trajectory sectioning, ensembles, sweeps and readout studies.

All studies consume a ground-truth trajectory that starts after the
simulation transient.  Results are plain dataclass records; turning them
into files is left to :mod:`hybrid_rc.cli`.
"""
from __future__ import annotations

import dataclasses
import math
import time
from dataclasses import dataclass, field
from typing import Iterable, Optional, Sequence

import numpy as np

from .barkley import BlowUpError, KnowledgeModel, default_initial_condition, iter_simulate
from .config import RunConfig
from .hybrid import HybridMode, plan_dims
from .local_states import (
    MatrixBank,
    PatchSpec,
    PredictionBlowUpError,
    build_local_dataset,
    predict_closed_loop,
    train_all,
)
from .metrics import ErrorSeries, ValidTime, grid_contribution, normalized_error, valid_time

__all__ = [
    "InsufficientDataError",
    "EnsembleConfig",
    "PredictionSection",
    "TrainingSection",
    "RunRecord",
    "SummaryRow",
    "SweepConfig",
    "SweepRow",
    "WoutConfig",
    "WoutRecord",
    "WoutSummaryRow",
    "TABLE_I_GRID",
    "TABLE_I_INITIAL",
    "derive_seed",
    "nearest_rank",
    "generate_truth",
    "partition_sections",
    "SingleRun",
    "run_single",
    "run_ensemble",
    "run_study",
    "aggregate",
    "run_sweep",
    "run_wout",
    "summarize_wout",
]

# examined values and initial values of the hyperparameter study
TABLE_I_GRID = {
    "r_dim": [200, 400, 500, 600],
    "rho": [0.1, 0.3, 0.5, 0.6, 0.7, 0.8, 1.0, 1.2, 1.5],
    "sigma": [3, 5, 7],
    "alpha": [1e-4, 1e-5, 1e-6],
    "beta": [1e-2, 1e-3, 1e-4, 1e-5, 1e-6, 1e-7, 1e-8],
}
TABLE_I_INITIAL = {"r_dim": 500, "rho": 1.0, "sigma": 5, "alpha": 1e-4, "beta": 1e-6}

# tags separating the derived random streams of one base seed
_NOISE_TAG = 1
_MATRIX_TAG = 2
_SYNC_NOISE_TAG = 3


class InsufficientDataError(ValueError):
    pass


def derive_seed(base: int, *tags: int) -> int:
    return int(np.random.SeedSequence((base, *tags)).generate_state(1)[0])


def nearest_rank(values: Sequence[float], q: float):
    """Nearest-rank quantile: the ``ceil(q * n)``-th smallest value."""
    if not 0 < q <= 1:
        raise ValueError("q must lie in (0, 1]")
    v = sorted(values)
    if not v:
        raise ValueError("no values")
    return v[max(math.ceil(q * len(v)) - 1, 0)]


# ---------------------------------------------------------------------------
# sectioning


@dataclass(frozen=True)
class EnsembleConfig:
    """Section counts and per-section step counts.

    A training section is ``[discard n_td | sync n_ts | train n_tr]`` and is
    followed by ``n_p`` prediction sections ``[discard n_pd | sync n_ps |
    predict n_pr]``.
    """

    n_t: int = 1
    n_p: int = 1
    n_td: int = 0
    n_ts: int = 200
    n_tr: int = 5000
    n_pd: int = 0
    n_ps: int = 200
    n_pr: int = 2000

    def __post_init__(self):
        for f in dataclasses.fields(self):
            if getattr(self, f.name) < 0:
                raise ValueError(f"{f.name} must be >= 0")
        if self.n_t < 1 or self.n_tr < 1 or self.n_pr < 1:
            raise ValueError("n_t, n_tr and n_pr must be >= 1")

    @classmethod
    def from_config(cls, cfg: RunConfig, n_t: Optional[int] = None, n_p: Optional[int] = None) -> "EnsembleConfig":
        return cls(n_t=cfg["ensemble.n_t"] if n_t is None else n_t,
                   n_p=cfg["ensemble.n_p"] if n_p is None else n_p,
                   n_td=cfg["data.train_discard"], n_ts=cfg["data.train_sync"], n_tr=cfg["data.train"],
                   n_pd=cfg["data.pred_discard"], n_ps=cfg["data.pred_sync"], n_pr=cfg["data.pred"])

    @property
    def training_length(self) -> int:
        return self.n_td + self.n_ts + self.n_tr

    @property
    def prediction_length(self) -> int:
        return self.n_pd + self.n_ps + self.n_pr

    @property
    def required_length(self) -> int:
        return self.n_t * (self.training_length + self.n_p * self.prediction_length)


@dataclass(frozen=True)
class PredictionSection:
    index: int
    discard: range
    sync: range
    predict: range


@dataclass(frozen=True)
class TrainingSection:
    index: int
    discard: range
    sync: range
    train: range
    predictions: tuple[PredictionSection, ...]

    @property
    def frames(self) -> range:
        """Frames handed to the dataset builder (synchronization plus training)."""
        return range(self.sync.start, self.train.stop)


def partition_sections(total_steps: int, cfg: EnsembleConfig) -> list[TrainingSection]:
    """Lay the sections out back to back from index 0.

    Raises :class:`InsufficientDataError` when ``total_steps`` is shorter
    than ``cfg.required_length``.
    """
    need = cfg.required_length
    if total_steps < need:
        raise InsufficientDataError(f"need {need} steps but only {total_steps} are available "
                                    f"(short by {need - total_steps})")
    out = []
    pos = 0

    def take(n):
        nonlocal pos
        r = range(pos, pos + n)
        pos += n
        return r

    for i in range(cfg.n_t):
        discard, sync, train = take(cfg.n_td), take(cfg.n_ts), take(cfg.n_tr)
        preds = tuple(PredictionSection(k, take(cfg.n_pd), take(cfg.n_ps), take(cfg.n_pr))
                      for k in range(cfg.n_p))
        out.append(TrainingSection(i, discard, sync, train, preds))
    return out


def generate_truth(base: RunConfig, n_frames: int) -> np.ndarray:
    """Simulate and keep ``n_frames`` frames after the transient."""
    p = base.barkley_params()
    init = default_initial_condition(p.nx, p.ny, base["run.seed"], p.a)
    skip = base["data.transient"]
    out = np.empty((n_frames, 2, p.nx, p.ny))
    for k, frame in enumerate(iter_simulate(p, init, skip + n_frames - 1)):
        if k >= skip:
            out[k - skip] = frame
    return out


# ---------------------------------------------------------------------------
# ensembles


@dataclass(frozen=True)
class RunRecord:
    """One closed-loop prediction.

    ``status`` is ``"ok"``, ``"blowup"`` (the forecast diverged; the valid
    time counts the steps before divergence) or ``"failed: ..."`` (training
    or prediction raised; times are NaN).  Contribution shares are NaN for
    modes without a KBM readout block.
    """

    mode: str
    r_dim: int
    model_error: float
    train_section: int
    pred_section: int
    train_start: int
    train_stop: int
    pred_start: int
    pred_stop: int
    seed: int
    noise_seed: int
    config_hash: str
    valid_time: float
    valid_index: int
    censored: bool
    status: str
    reservoir_share_u: float = math.nan
    reservoir_share_v: float = math.nan
    train_seconds: float = math.nan
    predict_seconds: float = math.nan

    @property
    def total_seconds(self) -> float:
        return self.train_seconds + self.predict_seconds


RECORD_COLUMNS = ("mode", "r_dim", "model_error", "train_section", "pred_section", "train_start", "train_stop",
                  "pred_start", "pred_stop", "seed", "noise_seed", "config_hash", "valid_time", "valid_index",
                  "censored", "status", "reservoir_share_u", "reservoir_share_v")
TIMING_COLUMNS = ("mode", "r_dim", "model_error", "train_section", "pred_section", "train_seconds",
                  "predict_seconds", "total_seconds")


def record_row(rec: RunRecord) -> list:
    return [getattr(rec, c) for c in RECORD_COLUMNS]


def timing_row(rec: RunRecord) -> list:
    return [getattr(rec, c) for c in TIMING_COLUMNS]


@dataclass
class _Setup:
    """Resolved knobs of one ensemble cell."""

    mode: HybridMode
    r_dim: int
    model_error: float
    rho: float
    beta: float
    sigma: int
    alpha: float
    seed: int


def _setup(base: RunConfig, mode=None, r_dim=None, model_error=None, **changes) -> _Setup:
    s = _Setup(mode=HybridMode.parse(mode if mode is not None else base["hybrid.mode"]),
               r_dim=int(r_dim if r_dim is not None else base["reservoir.r_dim"]),
               model_error=float(model_error if model_error is not None else base["hybrid.model_error"]),
               rho=base["reservoir.rho"], beta=base["reservoir.beta"], sigma=base["local.sigma"],
               alpha=base["local.alpha"], seed=base["run.seed"])
    for k, v in changes.items():
        setattr(s, k, v)
    return s


def _train_section(base: RunConfig, s: _Setup, truth, section: TrainingSection, bank: Optional[MatrixBank],
                   kbm: Optional[KnowledgeModel], noise_seed: int):
    spec = base.reservoir_spec(r_dim=s.r_dim, rho=s.rho, beta=s.beta, seed=s.seed)
    patch = PatchSpec(s.sigma)
    if bank is None:
        bank = _bank_for(base, s)
    seg = np.asarray(truth[section.frames.start : section.frames.stop], dtype=float)
    t0 = time.perf_counter()
    ds = build_local_dataset(seg, kbm, s.mode, patch, s.alpha, noise_seed)
    grid = train_all(ds, spec, s.mode, len(section.sync), bank=bank, kbm_readout=base["hybrid.kbm_readout"],
                     readout_state=base["reservoir.readout_state"], threads=base["run.threads"],
                     block_size=base["local.block_size"])
    return grid, bank, time.perf_counter() - t0


def _predict(base: RunConfig, grid, truth, ps: PredictionSection, kbm, s: _Setup, train_index: int = 0):
    """Closed-loop forecast for one prediction section.

    Returns ``(valid time, status, seconds, prediction)``.
    """
    sync = np.asarray(truth[ps.sync.start : ps.sync.stop], dtype=float)
    future = np.asarray(truth[ps.predict.start : ps.predict.stop], dtype=float)
    dt = base["sim.dt"]
    status = "ok"
    noise = s.alpha if base["local.pred_sync_noise"] else 0.0
    noise_seed = derive_seed(s.seed, _SYNC_NOISE_TAG, train_index, ps.index)
    t0 = time.perf_counter()
    try:
        pred = predict_closed_loop(grid, sync, kbm, len(ps.predict), threads=base["run.threads"],
                                   noise_alpha=noise, noise_seed=noise_seed)
    except PredictionBlowUpError as exc:
        pred = exc.partial
        status = "blowup"
    seconds = time.perf_counter() - t0
    if len(pred) == 0:
        return ValidTime(0.0, 0, False), status, seconds, pred
    vt = valid_time(normalized_error(future[: len(pred)], pred, dt), base["eval.e_max"])
    if status == "blowup":
        vt = dataclasses.replace(vt, censored=False)
    return vt, status, seconds, pred


def _shares(base: RunConfig, grid, mode: HybridMode) -> tuple[float, float]:
    if not mode.kbm_in_readout:
        return math.nan, math.nan
    rep = grid_contribution(grid, base["wout.metric"])
    return float(rep.reservoir_share[0]), float(rep.reservoir_share[1])


def run_ensemble(base: RunConfig, cfg: EnsembleConfig, truth=None, *, mode=None, r_dim=None,
                 model_error=None) -> list[RunRecord]:
    """Train on each training section and forecast each of its prediction sections.

    Reservoir matrices are drawn once, before the first training section,
    and reused for all later sections.  ``truth`` is indexable by frame
    (array or memory map) and starts after the transient; it is simulated
    from ``base`` when omitted.  Failures are recorded, never raised.
    """
    if cfg.n_tr < 2:
        raise ValueError("n_tr must be >= 2 to leave at least one training pair")
    if cfg.n_p and cfg.n_ps < 1:
        raise ValueError("n_ps must be >= 1")
    if truth is None:
        truth = generate_truth(base, cfg.required_length)
    sections = partition_sections(len(truth), cfg)
    s = _setup(base, mode, r_dim, model_error)
    kbm = KnowledgeModel.with_error(base.barkley_params(), s.model_error) if s.mode.uses_kbm else None
    records = []
    bank = None
    for sec in sections:
        noise_seed = derive_seed(s.seed, _NOISE_TAG, sec.index)

        def rec(ps, **kw):
            return RunRecord(mode=s.mode.value, r_dim=s.r_dim, model_error=s.model_error,
                             train_section=sec.index, pred_section=ps.index, train_start=sec.frames.start,
                             train_stop=sec.frames.stop, pred_start=ps.sync.start, pred_stop=ps.predict.stop,
                             seed=s.seed, noise_seed=noise_seed, config_hash=base.hash, **kw)

        try:
            if bank is None:
                bank = _bank_for(base, s)
            grid, bank, train_s = _train_section(base, s, truth, sec, bank, kbm, noise_seed)
        except (np.linalg.LinAlgError, BlowUpError, ValueError) as exc:
            for ps in sec.predictions:
                records.append(rec(ps, valid_time=math.nan, valid_index=-1, censored=False,
                                   status=f"failed: {exc}"))
            continue
        share_u, share_v = _shares(base, grid, s.mode)
        for ps in sec.predictions:
            try:
                vt, status, pred_s, _ = _predict(base, grid, truth, ps, kbm, s, sec.index)
            except (np.linalg.LinAlgError, BlowUpError, ValueError) as exc:
                records.append(rec(ps, valid_time=math.nan, valid_index=-1, censored=False,
                                   status=f"failed: {exc}", train_seconds=train_s))
                continue
            records.append(rec(ps, valid_time=vt.time, valid_index=vt.index, censored=vt.censored, status=status,
                               reservoir_share_u=share_u, reservoir_share_v=share_v, train_seconds=train_s,
                               predict_seconds=pred_s))
    return records


def _bank_for(base: RunConfig, s: _Setup) -> MatrixBank:
    spec = base.reservoir_spec(r_dim=s.r_dim, rho=s.rho, beta=s.beta, seed=s.seed)
    plan = plan_dims(s.mode, s.r_dim, s.sigma, kbm_readout=base["hybrid.kbm_readout"],
                     readout_state=base["reservoir.readout_state"])
    return MatrixBank.build(spec, plan.x_dim, base["sim.nx"], base["sim.ny"], base["reservoir.sharing"])


def run_study(base: RunConfig, cfg: EnsembleConfig, truth=None, *, modes=None, r_dims=None,
              model_errors=None) -> list[RunRecord]:
    """Ensembles over every (mode, r_dim, model error) cell.

    The plain reservoir never sees the KBM, so it is run once per ``r_dim``
    and its records are repeated under each model error.
    """
    modes = [HybridMode.parse(m) for m in (modes if modes is not None else base.ensemble_modes())]
    r_dims = list(r_dims if r_dims is not None else base.ensemble_r_dims())
    errors = list(model_errors if model_errors is not None else base.ensemble_model_errors())
    if truth is None:
        truth = generate_truth(base, cfg.required_length)
    out = []
    for mode in modes:
        for r in r_dims:
            if not mode.uses_kbm:
                recs = run_ensemble(base, cfg, truth, mode=mode, r_dim=r, model_error=errors[0])
                for e in errors:
                    out.extend(dataclasses.replace(x, model_error=float(e)) for x in recs)
                continue
            for e in errors:
                out.extend(run_ensemble(base, cfg, truth, mode=mode, r_dim=r, model_error=e))
    return out


@dataclass
class SingleRun:
    """Outcome of one training plus one forecast, with the arrays behind it."""

    record: RunRecord
    prediction: np.ndarray
    truth: np.ndarray
    errors: Optional[ErrorSeries]
    kbm_evaluations: int


def run_single(base: RunConfig, truth=None) -> SingleRun:
    """Train on one section and forecast the following one, keeping the forecast."""
    cfg = EnsembleConfig.from_config(base, n_t=1, n_p=1)
    if cfg.n_tr < 2:
        raise ValueError("data.train must be >= 2")
    if truth is None:
        truth = generate_truth(base, cfg.required_length)
    (sec,) = partition_sections(len(truth), cfg)
    (ps,) = sec.predictions
    s = _setup(base)
    kbm = KnowledgeModel.with_error(base.barkley_params(), s.model_error) if s.mode.uses_kbm else None
    noise_seed = derive_seed(s.seed, _NOISE_TAG, sec.index)
    grid, _, train_s = _train_section(base, s, truth, sec, None, kbm, noise_seed)
    vt, status, pred_s, pred = _predict(base, grid, truth, ps, kbm, s)
    future = np.asarray(truth[ps.predict.start : ps.predict.stop], dtype=float)
    errors = normalized_error(future[: len(pred)], pred, base["sim.dt"]) if len(pred) else None
    share_u, share_v = _shares(base, grid, s.mode)
    rec = RunRecord(mode=s.mode.value, r_dim=s.r_dim, model_error=s.model_error, train_section=0, pred_section=0,
                    train_start=sec.frames.start, train_stop=sec.frames.stop, pred_start=ps.sync.start,
                    pred_stop=ps.predict.stop, seed=s.seed, noise_seed=noise_seed, config_hash=base.hash,
                    valid_time=vt.time, valid_index=vt.index, censored=vt.censored, status=status,
                    reservoir_share_u=share_u, reservoir_share_v=share_v, train_seconds=train_s,
                    predict_seconds=pred_s)
    return SingleRun(rec, pred, future, errors, 0 if kbm is None else kbm.calls)


# ---------------------------------------------------------------------------
# aggregation


@dataclass(frozen=True)
class SummaryRow:
    key: tuple
    n_records: int
    n_censored: int
    n_failed: int
    vt_median: float
    vt_q1: float
    vt_q3: float
    median_censored: bool
    reservoir_share_u_median: float
    reservoir_share_v_median: float
    train_seconds_median: float
    predict_seconds_median: float
    total_seconds_median: float


SUMMARY_STAT_COLUMNS = ("n_records", "n_censored", "n_failed", "vt_median", "vt_q1", "vt_q3",
                        "median_censored", "reservoir_share_u_median", "reservoir_share_v_median")
TIMING_SUMMARY_COLUMNS = ("n_records", "train_seconds_median", "predict_seconds_median", "total_seconds_median")


def _median_or_nan(values) -> float:
    v = [x for x in values if not math.isnan(x)]
    return nearest_rank(v, 0.5) if v else math.nan


def aggregate(records: Iterable[RunRecord], group_by: Sequence[str] = ("mode", "r_dim", "model_error")) -> list[SummaryRow]:
    """Median and nearest-rank quartiles of the valid time per group.

    Censored records enter at the horizon value and are counted; failed
    records (NaN valid time) are counted and left out of every statistic.
    Groups appear in order of first occurrence.  The result does not depend
    on the order of records within a group.
    """
    groups: dict[tuple, list[RunRecord]] = {}
    for r in records:
        groups.setdefault(tuple(getattr(r, k) for k in group_by), []).append(r)
    if not groups:
        raise ValueError("cannot aggregate an empty record collection")
    rows = []
    for key, recs in groups.items():
        ok = [r for r in recs if not math.isnan(r.valid_time)]
        if ok:
            # ties at the horizon sort censored last, so a censored median means the median saturated
            ranked = sorted(ok, key=lambda r: (r.valid_time, r.censored))
            med = ranked[max(math.ceil(0.5 * len(ranked)) - 1, 0)]
            q1 = nearest_rank([r.valid_time for r in ok], 0.25)
            q3 = nearest_rank([r.valid_time for r in ok], 0.75)
            vt_med, med_c = med.valid_time, med.censored
        else:
            vt_med = q1 = q3 = math.nan
            med_c = False
        rows.append(SummaryRow(
            key=key, n_records=len(recs), n_censored=sum(r.censored for r in recs),
            n_failed=len(recs) - len(ok), vt_median=vt_med, vt_q1=q1, vt_q3=q3, median_censored=med_c,
            reservoir_share_u_median=_median_or_nan([r.reservoir_share_u for r in ok]),
            reservoir_share_v_median=_median_or_nan([r.reservoir_share_v for r in ok]),
            train_seconds_median=_median_or_nan([r.train_seconds for r in recs]),
            predict_seconds_median=_median_or_nan([r.predict_seconds for r in recs]),
            total_seconds_median=_median_or_nan([r.total_seconds for r in recs]),
        ))
    return rows


# ---------------------------------------------------------------------------
# hyperparameter sweep


@dataclass(frozen=True)
class SweepConfig:
    """One-at-a-time sweep of ``param`` over ``values``; everything else stays at ``fixed``."""

    param: str
    values: tuple = ()
    fixed: dict = field(default_factory=lambda: dict(TABLE_I_INITIAL))
    train_steps: int = 10000

    def __post_init__(self):
        if self.param not in TABLE_I_GRID:
            raise ValueError(f"sweep parameter must be one of {sorted(TABLE_I_GRID)}, got {self.param!r}")
        values = tuple(self.values) or tuple(TABLE_I_GRID[self.param])
        object.__setattr__(self, "values", values)
        if set(self.fixed) != set(TABLE_I_INITIAL):
            raise ValueError(f"fixed values must cover exactly {sorted(TABLE_I_INITIAL)}")
        if self.train_steps < 2:
            raise ValueError("train_steps must be >= 2")

    @classmethod
    def from_config(cls, cfg: RunConfig) -> "SweepConfig":
        return cls(param=cfg["sweep.param"], values=tuple(cfg["sweep.values"]),
                   fixed={k: cfg[f"sweep.{k}"] for k in TABLE_I_INITIAL}, train_steps=cfg["sweep.train"])

    def settings(self, value) -> dict:
        s = dict(self.fixed)
        s[self.param] = value
        return s


@dataclass(frozen=True)
class SweepRow:
    param: str
    value: float
    r_dim: int
    rho: float
    sigma: int
    alpha: float
    beta: float
    valid_time: float
    valid_index: int
    censored: bool
    status: str
    train_seconds: float = math.nan
    predict_seconds: float = math.nan


SWEEP_COLUMNS = ("param", "value", "r_dim", "rho", "sigma", "alpha", "beta", "valid_time", "valid_index",
                 "censored", "status")


def run_sweep(sweep: SweepConfig, base: RunConfig, truth=None) -> list[SweepRow]:
    """Single training and single prediction per examined value.

    Every value sees the same data and the same base seed, so the random
    draws behind the reservoir matrices are shared across the sweep.
    """
    cfg = EnsembleConfig(n_t=1, n_p=1, n_td=base["data.train_discard"], n_ts=base["data.train_sync"],
                         n_tr=sweep.train_steps, n_pd=base["data.pred_discard"], n_ps=base["data.pred_sync"],
                         n_pr=base["data.pred"])
    if truth is None:
        truth = generate_truth(base, cfg.required_length)
    (sec,) = partition_sections(len(truth), cfg)
    (ps,) = sec.predictions
    noise_seed = derive_seed(base["run.seed"], _NOISE_TAG, 0)
    rows = []
    for value in sweep.values:
        st = sweep.settings(value)
        s = _setup(base, r_dim=int(st["r_dim"]), rho=float(st["rho"]), beta=float(st["beta"]),
                   sigma=int(st["sigma"]), alpha=float(st["alpha"]))
        kbm = KnowledgeModel.with_error(base.barkley_params(), s.model_error) if s.mode.uses_kbm else None
        common = dict(param=sweep.param, value=value, r_dim=s.r_dim, rho=s.rho, sigma=s.sigma, alpha=s.alpha,
                      beta=s.beta)
        try:
            grid, _, train_s = _train_section(base, s, truth, sec, None, kbm, noise_seed)
            vt, status, pred_s, _ = _predict(base, grid, truth, ps, kbm, s)
        except (np.linalg.LinAlgError, BlowUpError, ValueError) as exc:
            rows.append(SweepRow(**common, valid_time=math.nan, valid_index=-1, censored=False,
                                 status=f"failed: {exc}"))
            continue
        rows.append(SweepRow(**common, valid_time=vt.time, valid_index=vt.index, censored=vt.censored,
                             status=status, train_seconds=train_s, predict_seconds=pred_s))
    return rows


# ---------------------------------------------------------------------------
# readout contribution study


@dataclass(frozen=True)
class WoutConfig:
    """``n_a`` independent matrix draws, each trained on ``n_t`` consecutive sections.

    With ``exact_at_zero`` the runs at model error 0 use no input noise and
    no regularization, so a perfect KBM can be reproduced exactly.
    """

    model_errors: tuple = (0.0, 0.1, 1.0, 5.0, 10.0, 100.0)
    n_a: int = 4
    n_t: int = 5
    metric: str = "weight"
    exact_at_zero: bool = True

    def __post_init__(self):
        if self.n_a < 1 or self.n_t < 1:
            raise ValueError("n_a and n_t must be >= 1")
        if not self.model_errors:
            raise ValueError("model_errors must not be empty")
        if self.metric not in ("weight", "activity"):
            raise ValueError("metric must be 'weight' or 'activity'")

    @classmethod
    def from_config(cls, cfg: RunConfig) -> "WoutConfig":
        return cls(model_errors=tuple(float(e) for e in cfg["wout.model_errors"]), n_a=cfg["wout.n_a"],
                   n_t=cfg["wout.n_t"], metric=cfg["wout.metric"], exact_at_zero=cfg["wout.exact_at_zero"])


@dataclass(frozen=True)
class WoutRecord:
    model_error: float
    a_index: int
    t_index: int
    matrix_seed: int
    alpha: float
    beta: float
    reservoir_share_u: float
    reservoir_share_v: float
    kbm_share_u: float
    kbm_share_v: float
    status: str


WOUT_COLUMNS = ("model_error", "a_index", "t_index", "matrix_seed", "alpha", "beta", "reservoir_share_u",
                "reservoir_share_v", "kbm_share_u", "kbm_share_v", "status")


def run_wout(base: RunConfig, wcfg: WoutConfig, truth=None, *, mode=None) -> list[WoutRecord]:
    """Readout contribution shares for every model error, matrix draw and training section.

    Each record holds the median share over all grid points.
    """
    s0 = _setup(base, mode)
    if not s0.mode.kbm_in_readout:
        raise ValueError(f"mode {s0.mode} has no KBM block in the readout; use 'oh' or 'fh'")
    cfg = EnsembleConfig(n_t=wcfg.n_t, n_p=0, n_td=base["data.train_discard"], n_ts=base["data.train_sync"],
                         n_tr=base["data.train"])
    if truth is None:
        truth = generate_truth(base, cfg.required_length)
    sections = partition_sections(len(truth), cfg)
    out = []
    for e in wcfg.model_errors:
        exact = wcfg.exact_at_zero and e == 0
        alpha = 0.0 if exact else s0.alpha
        beta = 0.0 if exact else s0.beta
        kbm = KnowledgeModel.with_error(base.barkley_params(), e)
        for a in range(wcfg.n_a):
            mseed = derive_seed(base["run.seed"], _MATRIX_TAG, a)
            s = _setup(base, mode, model_error=e, alpha=alpha, beta=beta, seed=mseed)
            bank = None
            for sec in sections:
                noise_seed = derive_seed(mseed, _NOISE_TAG, sec.index)
                common = dict(model_error=float(e), a_index=a, t_index=sec.index, matrix_seed=mseed, alpha=alpha,
                              beta=beta)
                try:
                    grid, bank, _ = _train_section(base, s, truth, sec, bank, kbm, noise_seed)
                    rep = grid_contribution(grid, wcfg.metric)
                except (np.linalg.LinAlgError, BlowUpError, ValueError) as exc:
                    out.append(WoutRecord(**common, reservoir_share_u=math.nan, reservoir_share_v=math.nan,
                                          kbm_share_u=math.nan, kbm_share_v=math.nan, status=f"failed: {exc}"))
                    continue
                res, kb = rep.reservoir_share, rep.kbm_share
                out.append(WoutRecord(**common, reservoir_share_u=float(res[0]), reservoir_share_v=float(res[1]),
                                      kbm_share_u=float(kb[0]), kbm_share_v=float(kb[1]), status="ok"))
    return out


@dataclass(frozen=True)
class WoutSummaryRow:
    model_error: float
    n_records: int
    n_failed: int
    reservoir_share_u: tuple  # (q1, median, q3)
    reservoir_share_v: tuple
    kbm_share_u: tuple
    kbm_share_v: tuple


WOUT_SUMMARY_COLUMNS = ("model_error", "n_records", "n_failed",
                        "reservoir_share_u_q1", "reservoir_share_u_median", "reservoir_share_u_q3",
                        "reservoir_share_v_q1", "reservoir_share_v_median", "reservoir_share_v_q3",
                        "kbm_share_u_q1", "kbm_share_u_median", "kbm_share_u_q3",
                        "kbm_share_v_q1", "kbm_share_v_median", "kbm_share_v_q3")


def summarize_wout(records: Iterable[WoutRecord]) -> list[WoutSummaryRow]:
    groups: dict[float, list[WoutRecord]] = {}
    for r in records:
        groups.setdefault(r.model_error, []).append(r)
    if not groups:
        raise ValueError("cannot summarize an empty record collection")

    def q3(vals):
        v = [x for x in vals if not math.isnan(x)]
        if not v:
            return (math.nan, math.nan, math.nan)
        return (nearest_rank(v, 0.25), nearest_rank(v, 0.5), nearest_rank(v, 0.75))

    rows = []
    for e, recs in groups.items():
        rows.append(WoutSummaryRow(
            model_error=e, n_records=len(recs), n_failed=sum(r.status != "ok" for r in recs),
            reservoir_share_u=q3(r.reservoir_share_u for r in recs),
            reservoir_share_v=q3(r.reservoir_share_v for r in recs),
            kbm_share_u=q3(r.kbm_share_u for r in recs),
            kbm_share_v=q3(r.kbm_share_v for r in recs)))
    return rows


def wout_summary_row(row: WoutSummaryRow) -> list:
    return [row.model_error, row.n_records, row.n_failed, *row.reservoir_share_u, *row.reservoir_share_v,
            *row.kbm_share_u, *row.kbm_share_v]
