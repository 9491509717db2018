"""Forecast the medium with a plain reservoir and with an output hybrid.

Both models see the same data and the same reservoir draws; the hybrid
additionally reads one step of an imperfect knowledge-based model (KBM).
Small sizes keep this to a minute or two on a laptop.
"""
import numpy as np

from hybrid_rc.barkley import BarkleyParams, KnowledgeModel, default_initial_condition, simulate
from hybrid_rc.local_states import PatchSpec, build_local_dataset, predict_closed_loop, train_all
from hybrid_rc.metrics import normalized_error, valid_time
from hybrid_rc.reservoir import ReservoirSpec

# %% Ground truth: 20 x 20 grid, transient dropped.
p = BarkleyParams(nx=20, ny=20)
traj = simulate(p, default_initial_condition(p.nx, p.ny, seed=1, a=p.a), 1000 + 3000)[1000:]
train, sync, future = traj[:2200], traj[2200:2400], traj[2400:3000]

# %% A KBM whose time scale parameter is off by 10 %.
kbm = KnowledgeModel.with_error(p, 0.1)
spec = ReservoirSpec(r_dim=60, rho=0.5, beta=1e-6, seed=0)

results = {}
for mode in ("reservoir", "oh"):
    model = kbm if mode != "reservoir" else None
    ds = build_local_dataset(train, model, mode, PatchSpec(3), alpha=1e-6, seed=0)
    grid = train_all(ds, spec, mode, 200)
    pred = predict_closed_loop(grid, sync, model, len(future))
    err = normalized_error(future, pred, p.dt)
    results[mode] = (valid_time(err), err)

# %% Compare how long each forecast stays below the error threshold.
for mode, (vt, err) in results.items():
    flag = " (never crossed)" if vt.censored else ""
    print(f"{mode:>9}: valid time {vt.time:.2f}{flag}, error after 100 steps {err.values[100]:.3f}")

# %% The KBM alone, stepped from the last synchronization frame, for reference.
x = sync[-1]
alone = []
for _ in range(len(future)):
    x = kbm(x)
    alone.append(x)
print(f"      kbm: valid time {valid_time(normalized_error(future, np.array(alone), p.dt)).time:.2f}")
