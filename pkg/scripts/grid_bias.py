"""First-order grid bias of the simulated variance for a singular covariance.

Prints the exact variance of the grid scheme divided by the continuum second
moment for growing grids.
"""
import argparse

from convecta.covariance import PowerLaw
from convecta.geometry import FlowConfig
from convecta.quadrature import second_moment
from convecta.simulator import Discretization, simulate_ensemble


def main():
    p = argparse.ArgumentParser(description=__doc__)
    p.add_argument("--alpha-f", type=float, default=1.0)
    p.add_argument("--mach", type=float, nargs="+", default=[0.0, 0.5, 0.9])
    p.add_argument("--n", type=int, nargs="+", default=[32, 64, 128])
    a = p.parse_args()
    model = PowerLaw(a.alpha_f)
    print(f"{'m':>5} " + " ".join(f"{'n=' + str(n):>9}" for n in a.n))
    for m in a.mach:
        cfg = FlowConfig(m, 1.0)
        exact = second_moment(1.0, cfg, model).value
        ratios = []
        for n in a.n:
            ens = simulate_ensemble([(1.0, 0.0, 0.0)], cfg, model, Discretization.for_flow(cfg, n, 2))
            ratios.append(ens.manifest["scheme_variance"][0] / exact)
        print(f"{m:5.2f} " + " ".join(f"{r:9.4f}" for r in ratios))


if __name__ == "__main__":
    main()
