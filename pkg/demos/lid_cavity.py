"""Lid-driven cavity; prints u1 along the vertical centre line.

    python demos/lid_cavity.py --n 16 --re 100
"""
import argparse

import numpy as np

from vemflow.benchmarks import cavity
from vemflow.postprocess import sample_velocity_grid
from vemflow.study import build_mesh, make_params, solve_case

ap = argparse.ArgumentParser()
ap.add_argument("--n", type=int, default=16, help="triangle:NxN mesh")
ap.add_argument("--re", type=float, default=100.0)
args = ap.parse_args()

case = cavity(Re=args.re)
res = solve_case(case, build_mesh(f"triangle:{args.n}x{args.n}", case), make_params(case, max_iter=10000))
print(f"iterations {res.state.n}, converged {res.state.converged}, {res.seconds:.1f}s")

f = sample_velocity_grid(res.system, res.state.chi, 2, 10)
mid = np.isclose(f.x, 0.5)
for y, u in zip(f.y[mid], f.u1[mid]):
    print(f"y={y:.2f}  u1={u:+.4f}")
