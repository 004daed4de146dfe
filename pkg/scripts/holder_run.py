"""Time structure function of the solution and its log-log slope.

Compares the Monte Carlo S2(h) with the quadrature increment moment at each h.
"""
import argparse

from convecta.covariance import model_from_json
from convecta.estimators import holder_fit, structure_function, structure_points
from convecta.geometry import FlowConfig
from convecta.quadrature import TIME_SHIFT, IncrementSpec, increment_moment
from convecta.simulator import Discretization, simulate_ensemble


def main():
    p = argparse.ArgumentParser(description=__doc__)
    p.add_argument("--alpha-f", type=float, default=1.0, help="power-law covariance exponent")
    p.add_argument("--mach", type=float, default=0.5)
    p.add_argument("--t", type=float, default=0.5)
    p.add_argument("--replicates", type=int, default=4000)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--threads", type=int, default=1)
    a = p.parse_args()
    model = model_from_json({"kind": "power_law", "alpha_f": a.alpha_f})
    h = [2.0**-k for k in range(7, 2, -1)]
    base = (a.t, 0.0, 0.0)
    cfg = FlowConfig(a.mach, a.t + max(h))
    ens = simulate_ensemble(structure_points(base, "TimeShift", h), cfg, model,
                            Discretization.for_flow(cfg, 16, a.replicates, a.seed),
                            sampler="spectral", threads=a.threads)
    tab = structure_function(ens, base, "TimeShift", h)
    print(f"{'h':>10} {'S2 (MC)':>12} {'SE':>10} {'quadrature':>12} {'z':>6}")
    for hh, s, se in zip(tab.h, tab.s2, tab.se):
        exact = increment_moment(IncrementSpec(TIME_SHIFT, hh, a.t), cfg, model).value
        print(f"{hh:10.6f} {s:12.6e} {se:10.2e} {exact:12.6e} {(s - exact) / se:6.2f}")
    fit = holder_fit(tab, model)
    print(f"slope {fit.slope:.4f} +- {fit.half_width:.4f}, guaranteed band {fit.band_predicted}")


if __name__ == "__main__":
    main()
