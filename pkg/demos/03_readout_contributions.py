"""How much of the readout relies on the reservoir versus the KBM.

With a perfect KBM, no input noise and no regularization, the least-squares
readout simply copies the KBM's own prediction.  As the KBM degrades, the
reservoir block carries more of the weight.
"""
import numpy as np

from hybrid_rc.barkley import BarkleyParams, KnowledgeModel, default_initial_condition, simulate
from hybrid_rc.local_states import PatchSpec, build_local_dataset, train_all
from hybrid_rc.metrics import grid_contribution
from hybrid_rc.reservoir import ReservoirSpec

p = BarkleyParams(nx=16, ny=16)
traj = simulate(p, default_initial_condition(p.nx, p.ny, seed=2, a=p.a), 800 + 1500)[800:]

# %% Train an output hybrid for a range of model errors.
print(" error   reservoir share U   reservoir share V")
for e in (0.0, 0.1, 1.0, 10.0):
    exact = e == 0
    alpha, beta = (0.0, 0.0) if exact else (1e-6, 1e-6)
    kbm = KnowledgeModel.with_error(p, e)
    ds = build_local_dataset(traj, kbm, "oh", PatchSpec(3), alpha=alpha, seed=0)
    grid = train_all(ds, ReservoirSpec(r_dim=40, beta=beta, seed=0), "oh", 100)
    rep = grid_contribution(grid)
    print(f"{e:6g}   {rep.reservoir_share[0]:17.3g}   {rep.reservoir_share[1]:17.3g}")

# %% Medians hide the spread between points; the per-point weight share is also available.
share = grid.w_out[:, 0, : grid.plan.r_feat]
frac = np.abs(share).sum(axis=1) / np.abs(grid.w_out[:, 0]).sum(axis=1)
print(f"e=10 U reservoir share over points: min {frac.min():.3f}, max {frac.max():.3f}")
