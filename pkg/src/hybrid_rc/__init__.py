"""Local-states reservoir computing with knowledge-based hybrids for Barkley dynamics.

Modules
-------
barkley       explicit simulator and the perturbed-coefficient knowledge-based model
reservoir     echo-state reservoir matrices, state update and ridge readout
hybrid        input/output/full hybrid wiring and dimension bookkeeping
local_states  one reservoir per grid point: training and closed-loop prediction
metrics       normalized error, valid time and readout contribution shares
experiment    sectioning, ensembles, hyperparameter sweeps and readout studies
config, io    run configuration and file formats
cli           the ``hybrid-rc`` command-line front end
"""
from .barkley import (
    BarkleyParams,
    BlowUpError,
    FieldPair,
    KnowledgeModel,
    barkley_step,
    default_initial_condition,
    make_epsilon_model,
    simulate,
)
from .hybrid import DimPlan, HybridMode, plan_dims
from .local_states import PatchSpec, ReservoirGrid, build_local_dataset, predict_closed_loop, train_all
from .metrics import normalized_error, valid_time, wout_contribution
from .reservoir import ReservoirSpec, build_matrices, train_readout

__version__ = "0.1.0"

__all__ = [
    "BarkleyParams",
    "BlowUpError",
    "FieldPair",
    "KnowledgeModel",
    "barkley_step",
    "default_initial_condition",
    "make_epsilon_model",
    "simulate",
    "DimPlan",
    "HybridMode",
    "plan_dims",
    "PatchSpec",
    "ReservoirGrid",
    "build_local_dataset",
    "predict_closed_loop",
    "train_all",
    "normalized_error",
    "valid_time",
    "wout_contribution",
    "ReservoirSpec",
    "build_matrices",
    "train_readout",
]
