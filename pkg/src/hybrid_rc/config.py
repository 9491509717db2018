"""Run configuration: a flat, namespaced key set stored as JSON.

Values are resolved in this order, later sources winning: built-in
defaults, a preset (``paper`` or ``desk``), the config file, then command
line overrides.  Unknown keys are rejected everywhere.

The config hash covers every key except ``run.threads`` and ``run.out``,
which affect neither results nor file contents.
"""
from __future__ import annotations

import copy
import hashlib
import json
from pathlib import Path
from typing import Any, Mapping, Optional

from .barkley import BarkleyParams
from .hybrid import HybridMode
from .reservoir import ReservoirSpec

__all__ = ["DEFAULTS", "PRESETS", "HASH_EXCLUDED", "RunConfig", "ConfigError"]


class ConfigError(ValueError):
    pass


DEFAULTS: dict[str, Any] = {
    # simulator
    "sim.nx": 80,
    "sim.ny": 80,
    "sim.d": 0.02,
    "sim.a": 0.75,
    "sim.b": 0.06,
    "sim.eps": 0.08,
    "sim.dt": 0.01,
    "sim.dx": 0.1,
    # frames written by `simulate`; 0 means transient plus one training and one prediction section
    "sim.steps": 0,
    # data lengths in time steps
    "data.transient": 2000,
    "data.train_discard": 0,
    "data.train_sync": 200,
    "data.train": 30000,
    "data.pred_discard": 0,
    "data.pred_sync": 200,
    "data.pred": 8000,
    # reservoir
    "reservoir.r_dim": 400,
    "reservoir.kappa": 3.0,
    "reservoir.rho": 0.5,
    "reservoir.beta": 1e-6,
    "reservoir.sharing": "shared",
    "reservoir.readout_state": "augmented",
    # hybrid
    "hybrid.mode": "oh",
    "hybrid.model_error": 0.1,
    "hybrid.kbm_readout": "patch",
    # local states
    "local.sigma": 3,
    "local.alpha": 1e-6,
    "local.block_size": 64,
    # add input noise (at level local.alpha) to the prediction synchronization as well
    "local.pred_sync_noise": False,
    # ensemble study; empty lists fall back to the single-run values
    "ensemble.n_t": 3,
    "ensemble.n_p": 6,
    "ensemble.modes": ["reservoir", "ih", "oh", "fh"],
    "ensemble.r_dims": [],
    "ensemble.model_errors": [],
    # hyperparameter sweep; the fixed values are used for every parameter not being swept
    "sweep.param": "rho",
    "sweep.values": [],
    "sweep.train": 10000,
    "sweep.r_dim": 500,
    "sweep.rho": 1.0,
    "sweep.sigma": 5,
    "sweep.alpha": 1e-4,
    "sweep.beta": 1e-6,
    # readout contribution study
    "wout.n_a": 4,
    "wout.n_t": 5,
    "wout.model_errors": [0.0, 0.1, 1.0, 5.0, 10.0, 100.0],
    "wout.metric": "weight",
    "wout.exact_at_zero": True,
    # evaluation and figures
    "eval.e_max": 0.2,
    "eval.lyapunov_max": None,
    "eval.snapshots": [0],
    "eval.range_u": [0.0, 1.0],
    "eval.range_v": [0.0, 1.0],
    # run control
    "run.seed": 0,
    "run.threads": 1,
    "run.out": "out",
    "run.trajectory": None,
    "run.save_prediction": False,
}

PRESETS: dict[str, dict[str, Any]] = {
    "paper": {},
    "desk": {
        "sim.nx": 40,
        "sim.ny": 40,
        "data.train": 5000,
        "data.pred": 2000,
        "reservoir.r_dim": 100,
        "ensemble.n_t": 2,
        "ensemble.n_p": 3,
        "sweep.train": 5000,
        "sweep.r_dim": 100,
        "wout.n_a": 2,
        "wout.n_t": 2,
        "wout.model_errors": [0.0, 0.1, 5.0, 100.0],
    },
}

HASH_EXCLUDED = frozenset({"run.threads", "run.out"})

_CHOICES = {
    "reservoir.sharing": ("shared", "per-point"),
    "reservoir.readout_state": ("augmented", "raw"),
    "hybrid.kbm_readout": ("patch", "center"),
    "wout.metric": ("weight", "activity"),
    "sweep.param": ("r_dim", "rho", "sigma", "alpha", "beta"),
}


def _coerce(key: str, value: Any) -> Any:
    default = DEFAULTS[key]
    if default is None or value is None:
        return value
    if isinstance(default, bool):
        if not isinstance(value, bool):
            raise ConfigError(f"{key} must be a boolean, got {value!r}")
        return value
    if isinstance(default, int):
        if isinstance(value, bool) or not isinstance(value, (int, float)) or not float(value).is_integer():
            raise ConfigError(f"{key} must be an integer, got {value!r}")
        return int(value)
    if isinstance(default, float):
        if isinstance(value, bool) or not isinstance(value, (int, float)):
            raise ConfigError(f"{key} must be a number, got {value!r}")
        return float(value)
    if isinstance(default, list):
        if not isinstance(value, (list, tuple)):
            raise ConfigError(f"{key} must be a list, got {value!r}")
        return list(value)
    if isinstance(default, str):
        if not isinstance(value, str):
            raise ConfigError(f"{key} must be a string, got {value!r}")
    return value


def _parse_literal(text: str) -> Any:
    try:
        return json.loads(text)
    except json.JSONDecodeError:
        return text


class RunConfig:
    """Validated flat configuration mapping."""

    def __init__(self, values: Optional[Mapping[str, Any]] = None, preset: Optional[str] = None):
        self._values = copy.deepcopy(DEFAULTS)
        self.preset = preset
        if preset is not None:
            if preset not in PRESETS:
                raise ConfigError(f"unknown preset {preset!r}; expected one of {sorted(PRESETS)}")
            self._values.update(copy.deepcopy(PRESETS[preset]))
        if values:
            self.update(values)
        self.validate()

    # construction -------------------------------------------------------

    @classmethod
    def load(cls, path=None, preset: Optional[str] = None,
             overrides: Optional[Mapping[str, Any]] = None) -> "RunConfig":
        """Defaults, then preset, then the file at ``path``, then ``overrides``.

        A ``"preset"`` entry in the file is used unless ``preset`` is given.
        """
        file_values: dict[str, Any] = {}
        if path is not None:
            with open(path, encoding="utf-8") as fh:
                raw = json.load(fh)
            if not isinstance(raw, dict):
                raise ConfigError("config file must contain a JSON object")
            file_values = dict(raw)
        file_preset = file_values.pop("preset", None)
        cfg = cls(preset=preset if preset is not None else file_preset)
        cfg.update(file_values)
        if overrides:
            cfg.update(overrides)
        cfg.validate()
        return cfg

    def update(self, values: Mapping[str, Any]) -> None:
        unknown = sorted(set(values) - set(DEFAULTS))
        if unknown:
            raise ConfigError(f"unknown config keys: {', '.join(unknown)}")
        for key, value in values.items():
            self._values[key] = _coerce(key, value)

    def with_overrides(self, values: Mapping[str, Any]) -> "RunConfig":
        new = copy.copy(self)
        new._values = copy.deepcopy(self._values)
        new.update(values)
        new.validate()
        return new

    @staticmethod
    def parse_assignment(text: str) -> tuple[str, Any]:
        """Parse ``KEY=VALUE``; the value is read as JSON when possible."""
        if "=" not in text:
            raise ConfigError(f"expected KEY=VALUE, got {text!r}")
        key, raw = text.split("=", 1)
        return key.strip(), _parse_literal(raw.strip())

    # access -------------------------------------------------------------

    def __getitem__(self, key: str) -> Any:
        return self._values[key]

    def to_dict(self) -> dict[str, Any]:
        return copy.deepcopy(self._values)

    def dump(self, path) -> None:
        Path(path).write_text(json.dumps(self._values, indent=2, sort_keys=True) + "\n", encoding="utf-8")

    @property
    def hash(self) -> str:
        """32 hex characters identifying every result-relevant setting."""
        payload = {k: v for k, v in self._values.items() if k not in HASH_EXCLUDED}
        text = json.dumps(payload, sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(text.encode("utf-8")).hexdigest()[:32]

    # validation ---------------------------------------------------------

    def validate(self) -> None:
        v = self._values
        for key, choices in _CHOICES.items():
            if v[key] not in choices:
                raise ConfigError(f"{key} must be one of {choices}, got {v[key]!r}")
        HybridMode.parse(v["hybrid.mode"])
        for m in v["ensemble.modes"]:
            HybridMode.parse(m)
        if not v["ensemble.modes"]:
            raise ConfigError("ensemble.modes must not be empty")
        for key in ("data.transient", "data.train_discard", "data.train_sync", "data.pred_discard",
                    "data.pred_sync", "sim.steps", "ensemble.n_p"):
            if v[key] < 0:
                raise ConfigError(f"{key} must be >= 0")
        for key in ("data.train", "data.pred", "ensemble.n_t", "sweep.train", "wout.n_a", "wout.n_t",
                    "run.threads", "local.block_size"):
            if v[key] < 1:
                raise ConfigError(f"{key} must be >= 1")
        if v["data.pred_sync"] < 1:
            raise ConfigError("data.pred_sync must be >= 1 (the closed loop starts from synchronized states)")
        if v["run.seed"] < 0:
            raise ConfigError("run.seed must be non-negative")
        if not v["eval.e_max"] > 0:
            raise ConfigError("eval.e_max must be positive")
        for key in ("eval.range_u", "eval.range_v"):
            lo_hi = v[key]
            if len(lo_hi) != 2 or not lo_hi[0] < lo_hi[1]:
                raise ConfigError(f"{key} must be [lo, hi] with lo < hi")
        if any(int(s) != s or s < 0 for s in v["eval.snapshots"]):
            raise ConfigError("eval.snapshots must be non-negative step indices")
        # surface parameter errors early
        self.barkley_params()
        self.reservoir_spec()

    # typed views --------------------------------------------------------

    def barkley_params(self) -> BarkleyParams:
        v = self._values
        return BarkleyParams(d=v["sim.d"], a=v["sim.a"], b=v["sim.b"], eps=v["sim.eps"], dt=v["sim.dt"],
                             dx=v["sim.dx"], nx=v["sim.nx"], ny=v["sim.ny"])

    def reservoir_spec(self, **changes) -> ReservoirSpec:
        v = self._values
        base = dict(r_dim=v["reservoir.r_dim"], kappa=v["reservoir.kappa"], rho=v["reservoir.rho"],
                    beta=v["reservoir.beta"], seed=v["run.seed"])
        base.update(changes)
        return ReservoirSpec(**base)

    @property
    def mode(self) -> HybridMode:
        return HybridMode.parse(self._values["hybrid.mode"])

    def ensemble_modes(self) -> list[HybridMode]:
        return [HybridMode.parse(m) for m in self._values["ensemble.modes"]]

    def ensemble_r_dims(self) -> list[int]:
        return [int(r) for r in self._values["ensemble.r_dims"]] or [self._values["reservoir.r_dim"]]

    def ensemble_model_errors(self) -> list[float]:
        return [float(e) for e in self._values["ensemble.model_errors"]] or [self._values["hybrid.model_error"]]

    def single_run_frames(self) -> int:
        """Frames after the transient for one training and one prediction section."""
        v = self._values
        return (v["data.train_discard"] + v["data.train_sync"] + v["data.train"]
                + v["data.pred_discard"] + v["data.pred_sync"] + v["data.pred"])

    def simulate_frames(self) -> int:
        return self._values["sim.steps"] or self._values["data.transient"] + self.single_run_frames()

    def __repr__(self):
        return f"RunConfig(preset={self.preset!r}, hash={self.hash})"
