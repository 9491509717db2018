"""Batch command-line front end.

Usage::

    hybrid-rc {simulate,run,ensemble,sweep,wout,render} [--config PATH] [--preset {paper,desk}]
              [--seed N] [--threads N] [--out DIR] [--mode MODE] [--set KEY=VALUE ...]

Every file written carries the config hash.  Re-running a command with the
same configuration reproduces every CSV, PGM and trajectory byte for byte
(``timing*.csv`` excepted), whatever ``--threads`` is.
"""
from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path
from typing import Optional, Sequence

import numpy as np

from . import experiment as ex
from . import io
from .barkley import BlowUpError, default_initial_condition
from .config import ConfigError, RunConfig
from .hybrid import HybridMode

__all__ = ["main", "build_parser", "resolve_config", "load_truth"]

COMMANDS = ("simulate", "run", "ensemble", "sweep", "wout", "render")
TRUTH_FILE = "truth.bkrc"


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="hybrid-rc",
                                     description="Local-states reservoir forecasting of Barkley dynamics.")
    parser.add_argument("command", choices=COMMANDS)
    parser.add_argument("--config", type=Path, help="JSON file with flat config keys")
    parser.add_argument("--preset", choices=("paper", "desk"))
    parser.add_argument("--seed", type=int, help="base seed (run.seed)")
    parser.add_argument("--threads", type=int, help="worker threads (run.threads)")
    parser.add_argument("--out", type=Path, help="output directory (run.out)")
    parser.add_argument("--mode", choices=[m.value for m in HybridMode],
                        help="hybrid mode; for ensembles, restricts the study to this mode")
    parser.add_argument("--set", dest="assignments", action="append", default=[], metavar="KEY=VALUE",
                        help="override any config key; VALUE is parsed as JSON when possible")
    return parser


def resolve_config(args: argparse.Namespace) -> RunConfig:
    overrides = dict(RunConfig.parse_assignment(a) for a in args.assignments)
    if args.seed is not None:
        overrides["run.seed"] = args.seed
    if args.threads is not None:
        overrides["run.threads"] = args.threads
    if args.out is not None:
        overrides["run.out"] = str(args.out)
    if args.mode is not None:
        overrides["hybrid.mode"] = args.mode
        overrides["ensemble.modes"] = [args.mode]
    return RunConfig.load(args.config, preset=args.preset, overrides=overrides)


def _say(msg: str) -> None:
    print(msg, flush=True)


def load_truth(cfg: RunConfig, n_frames: int, out: Path):
    """Frames ``[transient, transient + n_frames)`` of the ground truth.

    Uses ``run.trajectory`` when set, otherwise simulates into
    ``out/truth.bkrc``.  The result is a read-only memory map.
    """
    skip = cfg["data.transient"]
    path = cfg["run.trajectory"]
    if path is None:
        p = cfg.barkley_params()
        path = out / TRUTH_FILE
        init = default_initial_condition(p.nx, p.ny, cfg["run.seed"], p.a)
        io.simulate_to_file(path, p, init, skip + n_frames, cfg.hash)
    header, data = io.read_trajectory(path)
    if (header.nx, header.ny) != (cfg["sim.nx"], cfg["sim.ny"]):
        raise ConfigError(f"trajectory grid {header.nx}x{header.ny} does not match the configured grid")
    if header.dt != cfg["sim.dt"]:
        raise ConfigError(f"trajectory dt {header.dt} does not match sim.dt {cfg['sim.dt']}")
    if header.n_steps < skip + n_frames:
        raise ex.InsufficientDataError(f"trajectory has {header.n_steps} frames, need {skip + n_frames} "
                                       f"(short by {skip + n_frames - header.n_steps})")
    return data[skip : skip + n_frames]


def _write_info(out: Path, cfg: RunConfig, **extra) -> None:
    info = {"config_hash": cfg.hash, "config": {k: v for k, v in cfg.to_dict().items()
                                                 if k not in ("run.threads", "run.out")}}
    info.update(extra)
    (out / "run_info.json").write_text(json.dumps(info, indent=2, sort_keys=True) + "\n", encoding="utf-8")


# ---------------------------------------------------------------------------
# commands


def cmd_simulate(cfg: RunConfig, out: Path) -> int:
    p = cfg.barkley_params()
    n = cfg.simulate_frames()
    path = Path(cfg["run.trajectory"]) if cfg["run.trajectory"] else out / TRUTH_FILE
    init = default_initial_condition(p.nx, p.ny, cfg["run.seed"], p.a)
    header = io.simulate_to_file(path, p, init, n, cfg.hash)
    _, data = io.read_trajectory(path)
    _say(f"wrote {path} ({header.n_steps} frames, {p.nx}x{p.ny}, hash {cfg.hash})")
    for k, name in enumerate("uv"):
        lo = hi = None
        s = s2 = 0.0
        for start in range(0, n, 1024):
            block = np.asarray(data[start : start + 1024, k])
            lo = block.min() if lo is None else min(lo, block.min())
            hi = block.max() if hi is None else max(hi, block.max())
            s += block.sum()
            s2 += np.square(block).sum()
        count = n * p.nx * p.ny
        std = np.sqrt(max(s2 / count - (s / count) ** 2, 0.0))
        _say(f"{name}: min={lo:.6g} max={hi:.6g} std={std:.6g}")
    return 0


def _lyap(cfg: RunConfig):
    lam = cfg["eval.lyapunov_max"]
    return None if lam is None else float(lam)


def cmd_run(cfg: RunConfig, out: Path) -> int:
    n = ex.EnsembleConfig.from_config(cfg, n_t=1, n_p=1).required_length
    truth = load_truth(cfg, n, out)
    res = ex.run_single(cfg, truth)
    rec = res.record
    lam = _lyap(cfg)
    dt = cfg["sim.dt"]
    cols = ["step", "time", "error"] + (["lyapunov_time"] if lam else [])
    rows = []
    if res.errors is not None:
        for k, e in enumerate(res.errors.values):
            row = [k, k * dt, float(e)]
            if lam:
                row.append(k * dt * lam)
            rows.append(row)
    io.write_csv(out / "error.csv", cols, rows, cfg.hash)
    scols = ["mode", "r_dim", "model_error", "valid_time", "valid_index", "censored", "status",
             "reservoir_share_u", "reservoir_share_v"] + (["valid_lyapunov_time"] if lam else [])
    srow = [rec.mode, rec.r_dim, rec.model_error, rec.valid_time, rec.valid_index, rec.censored, rec.status,
            rec.reservoir_share_u, rec.reservoir_share_v] + ([rec.valid_time * lam] if lam else [])
    io.write_csv(out / "summary.csv", scols, [srow], cfg.hash)
    io.write_csv(out / "timing.csv", ["train_seconds", "predict_seconds", "total_seconds"],
                 [[rec.train_seconds, rec.predict_seconds, rec.total_seconds]], cfg.hash)
    _render_snapshots(cfg, out, res)
    if cfg["run.save_prediction"] and len(res.prediction):
        io.write_trajectory(out / "prediction.bkrc", res.prediction, nx=cfg["sim.nx"], ny=cfg["sim.ny"],
                            n_steps=len(res.prediction), dt=dt, config_hash=cfg.hash)
    _write_info(out, cfg, kbm_evaluations=res.kbm_evaluations, valid_time=rec.valid_time,
                censored=rec.censored, status=rec.status)
    _say(f"mode={rec.mode} r_dim={rec.r_dim} e={rec.model_error} valid_time={rec.valid_time:.4g}"
         f"{' (censored)' if rec.censored else ''} status={rec.status} kbm_evaluations={res.kbm_evaluations}")
    return 0


def _render_snapshots(cfg: RunConfig, out: Path, res: "ex.SingleRun") -> None:
    ranges = {"u": cfg["eval.range_u"], "v": cfg["eval.range_v"]}
    for s in cfg["eval.snapshots"]:
        s = int(s)
        if s >= len(res.prediction):
            continue
        for k, name in enumerate("uv"):
            lo, hi = ranges[name]
            t, p = res.truth[s, k], res.prediction[s, k]
            comment = f"config_hash={cfg.hash} step={s} var={name}"
            io.render_heatmap(t, lo, hi, out / f"truth_{name}_{s:06d}.pgm", comment)
            io.render_heatmap(p, lo, hi, out / f"pred_{name}_{s:06d}.pgm", comment)
            io.render_heatmap(np.abs(t - p), 0.0, hi - lo, out / f"diff_{name}_{s:06d}.pgm", comment)


def cmd_ensemble(cfg: RunConfig, out: Path) -> int:
    ecfg = ex.EnsembleConfig.from_config(cfg)
    truth = load_truth(cfg, ecfg.required_length, out)
    records = ex.run_study(cfg, ecfg, truth)
    lam = _lyap(cfg)
    io.write_csv(out / "records.csv", ex.RECORD_COLUMNS, [ex.record_row(r) for r in records], cfg.hash)
    io.write_csv(out / "timing.csv", ex.TIMING_COLUMNS, [ex.timing_row(r) for r in records], cfg.hash)
    keys = ("mode", "r_dim", "model_error")
    summary = ex.aggregate(records, keys)
    extra = ["vt_median_lyapunov"] if lam else []
    io.write_csv(out / "summary.csv", keys + ex.SUMMARY_STAT_COLUMNS + tuple(extra),
                 [list(row.key) + [getattr(row, c) for c in ex.SUMMARY_STAT_COLUMNS]
                  + ([row.vt_median * lam] if lam else []) for row in summary], cfg.hash)
    io.write_csv(out / "timing_summary.csv", keys + ex.TIMING_SUMMARY_COLUMNS,
                 [list(row.key) + [getattr(row, c) for c in ex.TIMING_SUMMARY_COLUMNS] for row in summary],
                 cfg.hash)
    for row in summary:
        flag = " (censored)" if row.median_censored else ""
        _say(f"{row.key[0]:>9} r_dim={row.key[1]} e={row.key[2]}: median t_v={row.vt_median:.4g}{flag} "
             f"[{row.vt_q1:.4g}, {row.vt_q3:.4g}] n={row.n_records} failed={row.n_failed}")
    return 0


def cmd_sweep(cfg: RunConfig, out: Path) -> int:
    sweep = ex.SweepConfig.from_config(cfg)
    n = ex.EnsembleConfig(n_t=1, n_p=1, n_td=cfg["data.train_discard"], n_ts=cfg["data.train_sync"],
                          n_tr=sweep.train_steps, n_pd=cfg["data.pred_discard"], n_ps=cfg["data.pred_sync"],
                          n_pr=cfg["data.pred"]).required_length
    truth = load_truth(cfg, n, out)
    rows = ex.run_sweep(sweep, cfg, truth)
    io.write_csv(out / "sweep.csv", ex.SWEEP_COLUMNS, [[getattr(r, c) for c in ex.SWEEP_COLUMNS] for r in rows],
                 cfg.hash)
    io.write_csv(out / "timing.csv", ("param", "value", "train_seconds", "predict_seconds"),
                 [[r.param, r.value, r.train_seconds, r.predict_seconds] for r in rows], cfg.hash)
    for r in rows:
        _say(f"{r.param}={r.value}: valid_time={r.valid_time:.4g}{' (censored)' if r.censored else ''} "
             f"status={r.status}")
    return 0


def cmd_wout(cfg: RunConfig, out: Path) -> int:
    wcfg = ex.WoutConfig.from_config(cfg)
    n = ex.EnsembleConfig.from_config(cfg, n_t=wcfg.n_t, n_p=0).required_length
    truth = load_truth(cfg, n, out)
    records = ex.run_wout(cfg, wcfg, truth)
    io.write_csv(out / "wout.csv", ex.WOUT_COLUMNS, [[getattr(r, c) for c in ex.WOUT_COLUMNS] for r in records],
                 cfg.hash)
    summary = ex.summarize_wout(records)
    io.write_csv(out / "wout_summary.csv", ex.WOUT_SUMMARY_COLUMNS, [ex.wout_summary_row(r) for r in summary],
                 cfg.hash)
    for r in summary:
        _say(f"e={r.model_error}: reservoir share u={r.reservoir_share_u[1]:.4g} v={r.reservoir_share_v[1]:.4g}, "
             f"kbm share u={r.kbm_share_u[1]:.4g} v={r.kbm_share_v[1]:.4g}")
    return 0


def cmd_render(cfg: RunConfig, out: Path) -> int:
    path = cfg["run.trajectory"]
    if path is None:
        raise ConfigError("render needs run.trajectory (use --set run.trajectory=PATH)")
    header, data = io.read_trajectory(path)
    ranges = {"u": cfg["eval.range_u"], "v": cfg["eval.range_v"]}
    for s in cfg["eval.snapshots"]:
        s = int(s)
        if s >= header.n_steps:
            raise ConfigError(f"snapshot {s} is beyond the {header.n_steps} stored frames")
        for k, name in enumerate("uv"):
            lo, hi = ranges[name]
            target = out / f"{name}_{s:06d}.pgm"
            io.render_heatmap(np.asarray(data[s, k]), lo, hi, target,
                              f"config_hash={cfg.hash} trajectory_hash={header.config_hash} frame={s} var={name}")
            _say(f"wrote {target}")
    return 0


_HANDLERS = {"simulate": cmd_simulate, "run": cmd_run, "ensemble": cmd_ensemble, "sweep": cmd_sweep,
             "wout": cmd_wout, "render": cmd_render}


def main(argv: Optional[Sequence[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        cfg = resolve_config(args)
        out = Path(cfg["run.out"])
        out.mkdir(parents=True, exist_ok=True)
        return _HANDLERS[args.command](cfg, out)
    except BlowUpError as exc:
        print(f"error: {exc} (step {exc.step})", file=sys.stderr)
        return 1
    except (ConfigError, ValueError, OSError, np.linalg.LinAlgError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
