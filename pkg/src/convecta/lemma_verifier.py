"""Randomised numeric checks of the auxiliary inequalities and bound claims.

Each suite draws parameters log-uniformly on ``[1e-3, 1]`` per coordinate,
keeps the admissible ones and counts inequality violations at a relative slack
of ``1e-12``.
"""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np
from scipy import integrate

from .covariance import CovarianceModel
from .estimators import KINDS
from .geometry import FlowConfig
from .noise import stream
from .quadrature import (IncrementSpec, fit_modulus_constants, increment_moment, modulus_bound,
                         require_existence, second_moment, theorem1_lower, theorem1_upper,
                         time_kernel_exact)

__all__ = [
    "VerificationReport",
    "SLACK",
    "shift_inequality_sides",
    "shift_constant",
    "log_inequality_sides",
    "log_antiderivative",
    "check_lemma_2_2",
    "check_lemma_3_1",
    "check_theorem1_sandwich",
    "check_remark2_limit",
    "increment_target",
    "REMARK2_STEPS",
]

SLACK = 1e-12
LOG_RANGE = (1e-3, 1.0)
LEMMA_TAG = 0x1E01
_QUAD = dict(epsabs=0.0, epsrel=1e-13, limit=400)
REMARK2_STEPS = tuple(0.2 * 4.0 ** -k for k in range(6))


@dataclass
class VerificationReport:
    suite: str
    draws: int
    violations: int
    worst_margin: float
    parameter_ranges: dict
    seed: int | None
    details: dict = field(default_factory=dict)

    @property
    def passed(self) -> bool:
        return self.violations == 0

    def to_json(self):
        return {
            "suite": self.suite,
            "draws": self.draws,
            "violations": self.violations,
            "worst_margin": self.worst_margin,
            "parameter_ranges": self.parameter_ranges,
            "seed": self.seed,
            "passed": self.passed,
            "details": self.details,
        }


def _log_uniform(rng, size, dim):
    lo, hi = math.log(LOG_RANGE[0]), math.log(LOG_RANGE[1])
    return np.exp(rng.uniform(lo, hi, size=(size, dim)))


def _admissible(rng, draws, dim, accept):
    """``draws`` rows of log-uniform parameters satisfying ``accept`` (vectorised)."""
    out = []
    have = 0
    while have < draws:
        x = _log_uniform(rng, 4 * draws + 64, dim)
        x = x[accept(x)]
        out.append(x)
        have += x.shape[0]
    return np.concatenate(out)[:draws]


def _map(fn, rows, threads):
    with ThreadPoolExecutor(max_workers=max(1, threads)) as ex:
        return list(ex.map(fn, rows))


# -- shifted-kernel inequality ---------------------------------------------------

def shift_constant(c: float, eps: float) -> float:
    """``max(sqrt 2, sqrt((c + eps)/c))``, from the pointwise factor ``min(1/2, c/(c + eps))``."""
    return max(math.sqrt(2.0), math.sqrt((c + eps) / c))


def shift_inequality_sides(a: float, b: float, c: float, eps: float):
    """Both integrals of the shifted-kernel inequality, ``0 < c + eps < a < b``.

    ``lhs = int_a^{b+eps} ((t-eps)^2 - c^2)^-1/2 (t^2 - a^2)^-1/2 dt``, done in
    ``t = a cosh u`` where the integrand is bounded;
    ``rhs = int_a^{b+eps} (t^2 - (c+eps)^2)^-1/2 (t^2 - a^2)^-1/2 dt``.
    """
    if not (0.0 < c and 0.0 <= eps and c + eps < a < b):
        raise ValueError("need 0 < c + eps < a < b")
    U = math.acosh((b + eps) / a)
    gap = a - eps - c

    def g(u):
        lo = gap + 2.0 * a * math.sinh(0.5 * u) ** 2
        return 1.0 / math.sqrt(lo * (lo + 2.0 * c))

    knee = math.sqrt(2.0 * gap / a)
    pts = [knee] if knee < U else None
    lhs, lerr = integrate.quad(g, 0.0, U, points=pts, **_QUAD)
    rhs = time_kernel_exact(c + eps, a, a, b + eps)
    return lhs, rhs.value, lerr + rhs.abs_err


def check_lemma_2_2(draws: int = 10_000, seed: int = 0, threads: int = 1, t_per_draw: int = 4) -> VerificationReport:
    """Pointwise factor inequality and the integral inequality with the proof's constant."""
    if draws < 1000:
        raise ValueError("at least 1000 draws are required")
    rng = stream(seed, LEMMA_TAG, 22)
    # columns a, b, c, eps
    P = _admissible(rng, draws, 4, lambda x: (x[:, 2] + x[:, 3] < x[:, 0]) & (x[:, 0] < x[:, 1]))
    a, b, c, eps = P.T
    # pointwise: t in (a, b + eps), biased towards a where the factor is tight
    u = rng.random((draws, t_per_draw))
    t = a[:, None] + (b + eps - a)[:, None] * u**3
    t = np.maximum(t, np.nextafter(a, np.inf)[:, None])
    ce = (c + eps)[:, None]
    lhs_pt = (t - eps[:, None] - c[:, None]) * (t - eps[:, None] + c[:, None])
    fac = np.minimum(0.5, (c / (c + eps)))[:, None]
    rhs_pt = fac * (t - ce) * (t + ce)
    pt_margin = (lhs_pt - rhs_pt) / np.abs(lhs_pt)
    pt_viol = int(np.sum(pt_margin < -SLACK))

    def one(row):
        ai, bi, ci, ei = row
        lhs, rhs, err = shift_inequality_sides(ai, bi, ci, ei)
        C = shift_constant(ci, ei)
        return (C * rhs - lhs) / (C * rhs), err / lhs

    res = _map(one, P, threads)
    margins = np.array([r[0] for r in res])
    int_viol = int(np.sum(margins < -SLACK))
    return VerificationReport(
        "lemma_2_2", draws, pt_viol + int_viol, float(min(margins.min(), pt_margin.min())),
        {"a": LOG_RANGE, "b": LOG_RANGE, "c": LOG_RANGE, "eps": LOG_RANGE,
         "constraint": "0 < c + eps < a < b"},
        seed,
        {"pointwise_checks": int(t.size), "pointwise_violations": pt_viol,
         "pointwise_worst_margin": float(pt_margin.min()),
         "integral_violations": int_viol, "integral_worst_margin": float(margins.min()),
         "max_relative_quadrature_error": float(max(r[1] for r in res)),
         "constant": "max(sqrt(2), sqrt((c + eps)/c))"},
    )


# -- logarithmic difference inequality ---------------------------------------------

def log_inequality_sides(a: float, b: float, c: float, t: float):
    """Both sides of the log bound, ``0 < c < b``, ``a <= b < t^2`` (``a = b`` gives ``0 <= 0``).

    ``lhs = int_{sqrt b}^t ((s^2-b)^-1/2 - (s^2-a)^-1/2)(s^2-c)^-1/2 ds`` in
    ``s = sqrt(b) cosh u``, where the bracket times ``ds`` becomes
    ``(b-a) / (sqrt(s^2-a) (sqrt(s^2-a) + sqrt(s^2-b))) du`` with no cancellation;
    ``rhs = ln(1 + q + 2 sqrt q) / (2 sqrt b)``, ``q = (b-a)/(b-c)``.
    """
    if not (0.0 < c < b and a <= b < t * t):
        raise ValueError("need 0 < c < b and a <= b < t^2")
    if a == b:
        return 0.0, 0.0, 0.0
    sb = math.sqrt(b)
    U = math.acosh(t / sb)
    dba, dbc = b - a, b - c

    def g(u):
        sh2 = b * math.sinh(u) ** 2
        pa = math.sqrt(sh2 + dba)
        return dba / (pa * (pa + math.sqrt(sh2)) * math.sqrt(sh2 + dbc))

    knee = math.asinh(math.sqrt(min(dba, dbc) / b))
    pts = [knee] if knee < U else None
    lhs, err = integrate.quad(g, 0.0, U, points=pts, **_QUAD)
    q = dba / dbc
    rhs = math.log1p(q + 2.0 * math.sqrt(q)) / (2.0 * sb)
    return lhs, rhs, err


def log_antiderivative(s, a1, a2):
    """``ln(a1 + 2 s + 2 sqrt(s^2 + a1 s + a2))``, whose derivative is ``(s^2 + a1 s + a2)^-1/2``."""
    return np.log(a1 + 2.0 * s + 2.0 * np.sqrt(s * s + a1 * s + a2))


def _antiderivative_errors(rng, n=100):
    a1 = rng.uniform(-2.0, 2.0, n)
    a2 = rng.uniform(-1.0, 1.0, n)
    # keep s right of the larger root and of -a1/2 so both logs and roots are real
    disc = np.maximum(a1 * a1 / 4.0 - a2, 0.0)
    s = np.maximum(-a1 / 2.0 + np.sqrt(disc), -a1 / 2.0) + rng.uniform(0.3, 2.0, n)
    h = 1e-3 * (1.0 + np.abs(s))
    F = lambda x: log_antiderivative(x, a1, a2)  # noqa: E731
    d = (-F(s + 2 * h) + 8 * F(s + h) - 8 * F(s - h) + F(s - 2 * h)) / (12.0 * h)
    exact = 1.0 / np.sqrt(s * s + a1 * s + a2)
    return np.abs(d - exact) / exact


def check_lemma_3_1(draws: int = 10_000, seed: int = 0, threads: int = 1,
                    derivative_tol: float = 1e-8) -> VerificationReport:
    """The log bound on random admissible draws plus the antiderivative at 100 points."""
    if draws < 1000:
        raise ValueError("at least 1000 draws are required")
    rng = stream(seed, LEMMA_TAG, 31)
    # columns a, b, c, t
    P = _admissible(rng, draws, 4, lambda x: (x[:, 2] < x[:, 1]) & (x[:, 0] < x[:, 1]) & (x[:, 1] < x[:, 3] ** 2))

    def one(row):
        lhs, rhs, err = log_inequality_sides(*row)
        return (rhs - lhs) / rhs, err

    res = _map(one, P, threads)
    margins = np.array([r[0] for r in res])
    viol = int(np.sum(margins < -SLACK))
    deriv = _antiderivative_errors(rng)
    d_viol = int(np.sum(deriv > derivative_tol))
    return VerificationReport(
        "lemma_3_1", draws, viol + d_viol, float(margins.min()),
        {"a": LOG_RANGE, "b": LOG_RANGE, "c": LOG_RANGE, "t": LOG_RANGE,
         "constraint": "0 < c < b, a < b < t^2"},
        seed,
        {"inequality_violations": viol, "antiderivative_points": int(deriv.size),
         "antiderivative_violations": d_viol, "antiderivative_max_rel_err": float(deriv.max()),
         "max_quadrature_error": float(max(r[1] for r in res))},
    )


# -- second-moment sandwich ----------------------------------------------------------

def check_theorem1_sandwich(models, t: float = 0.25, cfg: FlowConfig | None = None,
                            k_max: float | None = None) -> VerificationReport:
    """Ratios of the second moment to the lower and upper comparison integrals.

    ``K`` is the smallest number with every ratio in ``[1/K, K]``. The check
    fails on a non-finite or non-positive ratio, or when ``K > k_max``.
    """
    cfg = cfg or FlowConfig(0.0, 1.0)
    if t > 0.25:
        raise ValueError("the comparison integrals are a small-time statement; use t <= 0.25")
    rows = []
    for model in models:
        require_existence(model)
        mom = second_moment(t, cfg, model).value
        lo = theorem1_lower(t, cfg, model).value
        hi = theorem1_upper(t, cfg, model).value
        rows.append({"model": model.to_json(), "second_moment": mom, "lower": lo, "upper": hi,
                     "ratio_lower": mom / lo, "ratio_upper": mom / hi})
    ratios = np.array([[r["ratio_lower"], r["ratio_upper"]] for r in rows]).ravel()
    good = np.isfinite(ratios) & (ratios > 0.0)
    K = float(np.max(np.maximum(ratios[good], 1.0 / ratios[good]))) if good.all() else math.inf
    viol = int(np.sum(~good))
    if k_max is not None and K > k_max:
        viol += 1
    return VerificationReport("theorem1_sandwich", len(rows), viol, float(math.log(k_max / K)) if k_max else -K,
                              {"t": t, "m": cfg.m}, None, {"K": K, "k_max": k_max, "rows": rows})


# -- modulus bound limit ----------------------------------------------------------------

def increment_target(cfg: FlowConfig, model: CovarianceModel, t_base: float | None = None):
    """``h -> max`` over the three increment kinds of the mean squared increment at ``t_base``."""
    t_base = 0.5 * cfg.t0 if t_base is None else t_base
    specs = {"TimeShift": ("time", "x1"), "SpaceShift-x1": ("space", "x1"), "SpaceShift-x2": ("space", "x2")}

    def target(h):
        return max(increment_moment(IncrementSpec(specs[k][0], h, t_base, specs[k][1]), cfg, model).value
                   for k in KINDS)

    return target


def check_remark2_limit(model: CovarianceModel, cfg: FlowConfig, C1: float | None = None,
                        C2: float | None = None, h_list=REMARK2_STEPS, ratio: float = 0.05) -> VerificationReport:
    """The modulus bound decreases strictly along ``h_list`` and ends below ``ratio`` times its first value.

    Without constants, ``(C1, C2)`` are fitted to the increment target at the
    first step.
    """
    require_existence(model)
    h_list = [float(h) for h in h_list]
    fit = None
    if C1 is None or C2 is None:
        fit = fit_modulus_constants(cfg, model, increment_target(cfg, model), h_fit=h_list[0])
        C1, C2 = fit["C1"], fit["C2"]
    vals = [modulus_bound(cfg.t0, h, cfg, model, C1, C2).value for h in h_list]
    steps = [vals[i] - vals[i + 1] for i in range(len(vals) - 1)]
    viol = sum(1 for d in steps if not d > 0.0)
    final = vals[-1] / vals[0]
    if not final < ratio:
        viol += 1
    return VerificationReport("remark2_limit", len(h_list), viol, float(ratio - final),
                              {"h": h_list, "m": cfg.m, "t0": cfg.t0}, None,
                              {"C1": C1, "C2": C2, "bound": vals, "final_ratio": final, "fit": fit})
