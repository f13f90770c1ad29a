"""Backward Euler with dt = h^2 for the time-dependent manufactured case."""
import argparse

from vemflow.benchmarks import example4
from vemflow.study import build_mesh, convergence_table, solve_unsteady

ap = argparse.ArgumentParser()
ap.add_argument("--nu", type=float, default=1.0)
ap.add_argument("--cells", type=int, nargs="+", default=[32, 64])
ap.add_argument("--t-end", type=float, default=1.0)
args = ap.parse_args()

case = example4(nu=args.nu, t_end=args.t_end)
runs = [solve_unsteady(case, build_mesh(f"voronoi:{n}", case)) for n in args.cells]
rows, rates = convergence_table(runs)
for n, r, res in zip(args.cells, rows, runs):
    print(f"{n:4d} cells  steps {res.errors['steps']:4d}  erruH1 {r['erruH1']:.4e}  errpL2 {r['errpL2']:.4e}")
if rates["erruH1"] is not None:
    print(f"slopes: {rates['erruH1']:.3f} / {rates['errpL2']:.3f}")
