"""Second moment of the solution at the origin over Mach numbers and covariance models."""
import argparse

from convecta.covariance import Constant, Exponential, PowerLaw
from convecta.geometry import FlowConfig
from convecta.quadrature import second_moment


def main():
    p = argparse.ArgumentParser(description=__doc__)
    p.add_argument("--t", type=float, default=1.0)
    p.add_argument("--mach", type=float, nargs="+", default=[0.0, 0.3, 0.6, 0.9])
    a = p.parse_args()
    models = {"constant": Constant(1.0), "exponential(0.5)": Exponential(0.5),
              "power_law(0.5)": PowerLaw(0.5), "power_law(1)": PowerLaw(1.0), "power_law(1.5)": PowerLaw(1.5)}
    print(f"{'model':>18} " + " ".join(f"{'m=' + str(m):>14}" for m in a.mach))
    for name, model in models.items():
        vals = [second_moment(a.t, FlowConfig(m, a.t), model).value for m in a.mach]
        print(f"{name:>18} " + " ".join(f"{v:14.10f}" for v in vals))


if __name__ == "__main__":
    main()
