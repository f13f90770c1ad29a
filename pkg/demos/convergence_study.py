"""Error table and fitted slopes for the manufactured steady solution.

    python demos/convergence_study.py --nu 1 --cells 32 64 128 256
"""
import argparse

from vemflow.benchmarks import example1
from vemflow.study import build_mesh, contraction_ratio, convergence_table, make_params, solve_case


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--nu", type=float, default=1.0)
    ap.add_argument("--cells", type=int, nargs="+", default=[32, 64, 128, 256])
    args = ap.parse_args()

    case = example1(nu=args.nu)
    runs = []
    for n in args.cells:
        res = solve_case(case, build_mesh(f"voronoi:{n}", case), make_params(case))
        runs.append(res)
        print(f"{n:5d} cells  {res.seconds:6.1f}s  contraction {contraction_ratio(res.state.increments):.3f}")
    rows, rates = convergence_table(runs)
    print(f"{'dof':>6} {'h':>10} {'erruH1':>12} {'errpL2':>12} {'its':>5}")
    for r in rows:
        print(f"{r['dof']:6d} {r['h']:10.3e} {r['erruH1']:12.5e} {r['errpL2']:12.5e} {r['iterations']:5d}")
    if len(rows) > 1:
        print(f"slopes: velocity H1 {rates['erruH1']:.3f}, pressure L2 {rates['errpL2']:.3f}")


if __name__ == "__main__":
    main()
