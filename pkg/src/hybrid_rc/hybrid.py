"""Wiring of the knowledge-based model (KBM) into the reservoir pipeline.

Four variants are supported:

``reservoir``  plain reservoir, no model knowledge
``ih``         input hybrid: KBM prediction appended to the reservoir input
``oh``         output hybrid: KBM prediction appended to the readout features
``fh``         full hybrid: both of the above

Concatenations always put the data/reservoir block first and the KBM block
last; :mod:`hybrid_rc.metrics` relies on that layout.
"""
from __future__ import annotations

import enum
from dataclasses import dataclass

import numpy as np

__all__ = ["HybridMode", "DimPlan", "plan_dims", "assemble_input", "assemble_features"]

KBM_READOUTS = ("patch", "center")
READOUT_STATES = ("augmented", "raw")


class HybridMode(str, enum.Enum):
    NONE = "reservoir"
    INPUT = "ih"
    OUTPUT = "oh"
    FULL = "fh"

    @classmethod
    def parse(cls, value) -> "HybridMode":
        if isinstance(value, cls):
            return value
        aliases = {"none": cls.NONE, "input_hybrid": cls.INPUT,
                   "output_hybrid": cls.OUTPUT, "full_hybrid": cls.FULL}
        key = str(value).lower()
        if key in aliases:
            return aliases[key]
        try:
            return cls(key)
        except ValueError:
            raise ValueError(f"unknown hybrid mode {value!r}; expected one of "
                             f"{[m.value for m in cls]}") from None

    @property
    def kbm_in_input(self) -> bool:
        return self in (HybridMode.INPUT, HybridMode.FULL)

    @property
    def kbm_in_readout(self) -> bool:
        return self in (HybridMode.OUTPUT, HybridMode.FULL)

    @property
    def uses_kbm(self) -> bool:
        return self is not HybridMode.NONE

    def __str__(self):
        return self.value


@dataclass(frozen=True)
class DimPlan:
    """Per-reservoir dimensions for one mode.

    ``r_feat`` is the width of the reservoir block of the readout features
    and ``kbm_feat`` the width of the KBM block (0 unless OH/FH), so
    ``h_dim == r_feat + kbm_feat``.
    """

    mode: HybridMode
    r_dim: int
    sigma: int
    u_dim: int
    k_dim: int
    x_dim: int
    h_dim: int
    y_dim: int
    r_feat: int
    kbm_feat: int


def plan_dims(mode, r_dim: int, sigma: int, *, kbm_readout: str = "patch",
              readout_state: str = "augmented") -> DimPlan:
    """Dimension bookkeeping for ``mode`` with ``r_dim`` nodes and ``sigma x sigma`` patches.

    >>> plan_dims("fh", 100, 3).x_dim, plan_dims("fh", 100, 3).h_dim
    (36, 218)
    """
    mode = HybridMode.parse(mode)
    if sigma < 1 or sigma % 2 == 0:
        raise ValueError(f"sigma must be a positive odd integer, got {sigma}")
    if r_dim < 1:
        raise ValueError("r_dim must be >= 1")
    if kbm_readout not in KBM_READOUTS:
        raise ValueError(f"kbm_readout must be one of {KBM_READOUTS}")
    if readout_state not in READOUT_STATES:
        raise ValueError(f"readout_state must be one of {READOUT_STATES}")
    u_dim = k_dim = 2 * sigma * sigma
    x_dim = u_dim + k_dim if mode.kbm_in_input else u_dim
    r_feat = 2 * r_dim if readout_state == "augmented" else r_dim
    if mode.kbm_in_readout:
        kbm_feat = k_dim if kbm_readout == "patch" else 2
    else:
        kbm_feat = 0
    return DimPlan(mode, r_dim, sigma, u_dim, k_dim, x_dim, r_feat + kbm_feat, 2, r_feat, kbm_feat)


def assemble_input(mode, u_patch: np.ndarray, k_patch=None) -> np.ndarray:
    """Reservoir input: ``u_patch`` alone, or ``[u_patch, k_patch]`` for IH/FH.

    Works on the last axis, so batches of patches may be passed.
    """
    mode = HybridMode.parse(mode)
    u_patch = np.asarray(u_patch, dtype=float)
    if not mode.kbm_in_input:
        return u_patch
    if k_patch is None:
        raise ValueError(f"mode {mode} needs a KBM patch for the input")
    k_patch = np.asarray(k_patch, dtype=float)
    if k_patch.shape != u_patch.shape:
        raise ValueError(f"KBM patch shape {k_patch.shape} does not match input patch {u_patch.shape}")
    return np.concatenate([u_patch, k_patch], axis=-1)


def assemble_features(mode, r_aug: np.ndarray, k_patch=None, plan: DimPlan | None = None) -> np.ndarray:
    """Readout features: the reservoir state, plus the KBM block for OH/FH."""
    mode = HybridMode.parse(mode)
    r_aug = np.asarray(r_aug, dtype=float)
    if plan is not None and r_aug.shape[-1] != plan.r_feat:
        raise ValueError(f"reservoir block has width {r_aug.shape[-1]}, expected {plan.r_feat}")
    if not mode.kbm_in_readout:
        return r_aug
    if k_patch is None:
        raise ValueError(f"mode {mode} needs a KBM block for the readout")
    k_patch = np.asarray(k_patch, dtype=float)
    if k_patch.shape[:-1] != r_aug.shape[:-1]:
        raise ValueError("batch shapes of reservoir state and KBM block differ")
    if plan is not None and k_patch.shape[-1] != plan.kbm_feat:
        raise ValueError(f"KBM block has width {k_patch.shape[-1]}, expected {plan.kbm_feat}")
    return np.concatenate([r_aug, k_patch], axis=-1)
