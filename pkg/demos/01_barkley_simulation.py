"""Simulate the Barkley medium and look at a few frames.

Run with ``python demos/01_barkley_simulation.py [outdir]``.  Frames are
written as plain PGM images that any image viewer opens.
"""
import sys
from pathlib import Path

import numpy as np

from hybrid_rc.barkley import BarkleyParams, default_initial_condition, iter_simulate
from hybrid_rc.io import render_heatmap

out = Path(sys.argv[1] if len(sys.argv) > 1 else "demo_out/simulation")
out.mkdir(parents=True, exist_ok=True)

# %% A 40 x 40 medium with the standard parameters.
p = BarkleyParams(nx=40, ny=40)
init = default_initial_condition(p.nx, p.ny, seed=0, a=p.a)
print(p)

# %% Integrate 4000 steps and keep every 500th frame.
# The initial block breaks up into rotating waves after a few hundred steps.
snapshots = {}
for k, frame in enumerate(iter_simulate(p, init, 4000)):
    if k % 500 == 0:
        snapshots[k] = frame.copy()

for k, frame in snapshots.items():
    u, v = frame
    print(f"step {k:5d}  U in [{u.min():.3f}, {u.max():.3f}]  U variance {u.var():.4f}  mean V {v.mean():.3f}")
    render_heatmap(u, 0.0, 1.0, out / f"u_{k:06d}.pgm", comment=f"step={k}")

# %% Excited area over time: the fraction of cells with U above one half.
active = np.array([(f[0] > 0.5).mean() for f in snapshots.values()])
print("excited fraction:", np.round(active, 3))
print(f"images in {out}")
