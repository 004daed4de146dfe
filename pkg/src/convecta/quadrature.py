"""Deterministic moment oracles and bound integrals.

Second moments of the mild solution reduce, after the moving-frame shift, to
integrals of the classical kernel. Two classical kernels of radii ``t1`` and
``t2`` whose centres are ``rho`` apart overlap with mass

    c(t1, t2, rho) = (1/4pi) [acosh+((t1+t2)/rho) - acosh+(|t1-t2|/rho)],

``acosh+(v) = acosh(max(v, 1))``. Integrating over the common time lag gives
the pair kernel ``pair_kernel(rho, t1, delta)`` in closed form, so

    E[X(t1, x) X(t1+delta, x+dx)] = int f(|w|) pair_kernel(|w + d|, t1, delta) dw,
    d = dx - m delta e1.

The remaining 1-D or 2-D integral is done by dyadic shells towards ``r = 0``
with breakpoints at every kink of the kernel. :func:`time_kernel_exact` and
:func:`pair_kernel_numeric` give an independent route to the same numbers.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy import integrate

from .covariance import CovarianceModel, classify_dalang
from .geometry import FlowConfig, eta, eta_inverse

__all__ = [
    "QuadratureValue",
    "IncrementSpec",
    "ExistenceError",
    "QuadratureError",
    "TIME_SHIFT",
    "SPACE_SHIFT",
    "time_kernel_exact",
    "time_kernel_log_bounds",
    "pair_kernel",
    "pair_kernel_numeric",
    "second_moment",
    "cross_moment",
    "increment_moment",
    "modulus_bound",
    "fit_modulus_constants",
    "theorem1_lower",
    "theorem1_upper",
    "require_existence",
]

TIME_SHIFT = "time"
SPACE_SHIFT = "space"

EVAL_CAP = 1_000_000
N_SHELLS = 40
_QUAD = dict(limit=200, full_output=1)


class ExistenceError(ValueError):
    """The covariance violates the existence condition; no real-valued solution."""


class QuadratureError(RuntimeError):
    """A quadrature did not reach the requested tolerance."""


@dataclass(frozen=True)
class QuadratureValue:
    value: float
    abs_err: float
    evals: int = 0
    converged: bool = True
    diagnostics: dict = field(default_factory=dict, compare=False)

    def __post_init__(self):
        if not self.abs_err >= 0.0:
            raise ValueError("abs_err must be non-negative")

    def to_json(self) -> dict:
        return {
            "value": self.value,
            "abs_err": self.abs_err,
            "evals": self.evals,
            "converged": self.converged,
            **({"diagnostics": self.diagnostics} if self.diagnostics else {}),
        }


@dataclass(frozen=True)
class IncrementSpec:
    """Increment ``X(t, x) - X(t+h, x)`` (time) or ``X(t, x) - X(t, x + h e_axis)`` (space)."""

    kind: str
    h: float
    t: float
    axis: str = "x1"

    def __post_init__(self):
        if self.kind not in (TIME_SHIFT, SPACE_SHIFT):
            raise ValueError(f"kind must be {TIME_SHIFT!r} or {SPACE_SHIFT!r}, got {self.kind!r}")
        if self.axis not in ("x1", "x2"):
            raise ValueError(f"axis must be 'x1' or 'x2', got {self.axis!r}")
        if not (self.h > 0.0 and self.t > 0.0):
            raise ValueError("increment needs h > 0 and t > 0")

    def check(self, cfg: FlowConfig):
        if not self.h < cfg.t0:
            raise ValueError(f"h must lie in (0, t0={cfg.t0}), got {self.h}")
        t_end = self.t + self.h if self.kind == TIME_SHIFT else self.t
        if t_end > cfg.t0 * (1.0 + 1e-12):
            raise ValueError(f"increment reaches t={t_end} beyond t0={cfg.t0}")

    def endpoints(self):
        """``(t1, t2, dx1, dx2)`` of the two evaluation points."""
        if self.kind == TIME_SHIFT:
            return self.t, self.t + self.h, 0.0, 0.0
        if self.axis == "x1":
            return self.t, self.t, self.h, 0.0
        return self.t, self.t, 0.0, self.h


def require_existence(model: CovarianceModel):
    """Raise :class:`ExistenceError` unless ``int r ln(1/r) f(r) dr`` converges."""
    c = classify_dalang(model)
    if not c.convergent:
        raise ExistenceError(
            f"no real-valued solution: int_0+ r ln(1/r) f(r) dr is {c.verdict.lower()} "
            f"for {type(model).__name__}"
        )
    return c


# -- 1-D plumbing ------------------------------------------------------------

def _quad(g, lo, hi, points=None, epsabs=1e-14, epsrel=1e-12):
    pts = None
    if points:
        pts = sorted(p for p in set(points) if lo < p < hi)
    res = integrate.quad(g, lo, hi, points=pts or None, epsabs=epsabs, epsrel=epsrel, **_QUAD)
    val, err, info = res[0], res[1], res[2]
    return val, err, info["neval"]


def _shells(g, hi, points=(), n_shells=N_SHELLS, lo_break=None, epsabs=1e-14, epsrel=1e-12):
    """``int_0^hi g`` with dyadic shells below the first breakpoint.

    Pieces are integrated in a fixed order and summed with ``math.fsum`` so the
    result is reproducible bit for bit.
    """
    bps = sorted(p for p in set(points) if 0.0 < p < hi)
    first = bps[0] if bps else hi
    if lo_break is not None:
        first = min(first, lo_break)
    edges = [first * 2.0 ** (-k) for k in range(n_shells, -1, -1)]
    edges = [0.0] + edges + [p for p in bps if p > first] + [hi]
    edges = sorted(set(edges))
    vals, errs, evals = [], [], 0
    for a, b in zip(edges[:-1], edges[1:]):
        v, e, n = _quad(g, a, b, epsabs=epsabs, epsrel=epsrel)
        vals.append(v)
        errs.append(e)
        evals += n
    return math.fsum(vals), math.fsum(errs), evals


# -- inner time integral ------------------------------------------------------

def time_kernel_exact(a: float, b: float, s0: float, s1: float, tol: float = 1e-12) -> QuadratureValue:
    """``int_{s0}^{s1} ds / sqrt((s^2 - a^2)(s^2 - b^2))`` for ``0 <= a <= b <= s0 < s1``.

    With ``s = b cosh u`` and then ``sinh u = k sinh v``, ``k = sqrt(b^2-a^2)/b``,
    the integral becomes ``(1/b) int dv / sqrt(1 + k^2 sinh^2 v)`` whose integrand
    is analytic and bounded by 1; the endpoint singularity at ``s = b`` and the
    near-singularity as ``a -> b`` are both gone.
    """
    a, b, s0, s1 = float(a), float(b), float(s0), float(s1)
    if not (0.0 <= a <= b <= s0):
        raise ValueError(f"need 0 <= a <= b <= s0, got a={a}, b={b}, s0={s0}")
    if not s1 > s0:
        raise ValueError(f"need s1 > s0, got s0={s0}, s1={s1}")
    if b == 0.0:
        if s0 == 0.0:
            raise ValueError("integral diverges at s = 0 when a = b = s0 = 0")
        return QuadratureValue(1.0 / s0 - 1.0 / s1, 0.0, 0, True, {"method": "closed form"})
    if a == b:
        if s0 == b:
            raise ValueError("integral diverges logarithmically when a = b = s0")
        val = (math.log((s1 - b) / (s1 + b)) - math.log((s0 - b) / (s0 + b))) / (2.0 * b)
        return QuadratureValue(val, 0.0, 0, True, {"method": "closed form"})
    gap = math.sqrt((b - a) * (b + a))
    k = gap / b

    def vlim(s):
        return math.asinh(math.sqrt(max((s - b) * (s + b), 0.0)) / gap)

    v0, v1 = vlim(s0), vlim(s1)
    g = lambda v: 1.0 / math.sqrt(1.0 + (k * math.sinh(v)) ** 2)  # noqa: E731
    knee = math.asinh(1.0 / k)
    val, err, n = _quad(g, v0, v1, points=[knee], epsabs=0.0, epsrel=1e-13)
    val /= b
    err /= b
    return QuadratureValue(val, err, n, err <= tol, {"method": "cosh-sinh substitution"})


def time_kernel_log_bounds(a: float, b: float, s1: float):
    """Elementary bounds ``(lower, upper)`` on ``time_kernel_exact(a, b, b, s1)``.

    With ``tau = s^2`` the integrand is ``1/(2 sqrt(tau))`` times a kernel whose
    integral ``L = ln((sqrt(s1^2-b^2) + sqrt(s1^2-a^2))^2 / (b^2-a^2))`` is
    elementary; ``1/(2 sqrt(tau))`` lies between ``1/(2 s1)`` and ``1/(2 b)``.
    """
    a, b, s1 = float(a), float(b), float(s1)
    if not (0.0 <= a < b < s1):
        raise ValueError(f"need 0 <= a < b < s1, got a={a}, b={b}, s1={s1}")
    num = math.sqrt((s1 - b) * (s1 + b)) + math.sqrt((s1 - a) * (s1 + a))
    L = 2.0 * math.log(num) - math.log((b - a) * (b + a))
    return L / (2.0 * s1), L / (2.0 * b)


# -- pair kernel ---------------------------------------------------------------

def _acosh_plus(v):
    return math.acosh(v) if v > 1.0 else 0.0


def _p_plus(v):
    # antiderivative of acosh: v acosh v - sqrt(v^2 - 1), zero at v = 1
    if v <= 1.0:
        return 0.0
    return v * math.acosh(v) - math.sqrt((v - 1.0) * (v + 1.0))


def pair_kernel(rho: float, t1: float, delta: float = 0.0) -> float:
    """``int_0^{t1} c(tau, tau + delta, rho) dtau`` for ``rho > 0``.

    Vanishes for ``rho >= 2 t1 + delta``; log-singular at ``rho = 0`` only when
    ``delta = 0``.
    """
    if rho <= 0.0:
        raise ValueError("pair kernel is evaluated at positive separations")
    big = 0.5 * rho * (_p_plus((2.0 * t1 + delta) / rho) - _p_plus(delta / rho))
    return (big - t1 * _acosh_plus(delta / rho)) / (4.0 * math.pi)


def pair_kernel_numeric(rho: float, t: float, tol: float = 1e-9) -> QuadratureValue:
    """Equal-time pair kernel from the inner time integral.

    ``(1/4pi^2) int_{|y|,|y+w|<t} time_kernel(|y|, |y+w|) dy`` with ``|w| = rho``,
    where ``time_kernel(a, b) = int_{max}^{t} ds / sqrt((s^2-a^2)(s^2-b^2))``.
    Slow; used as an independent check on :func:`pair_kernel`.
    """
    evals = 0

    def inner(r1):
        nonlocal evals

        def g(psi):
            nonlocal evals
            r2 = math.sqrt(max(r1 * r1 + rho * rho + 2.0 * r1 * rho * math.cos(psi), 0.0))
            if r2 >= t:
                return 0.0
            lo, hi = min(r1, r2), max(r1, r2)
            if hi == lo:
                return 0.0
            q = time_kernel_exact(lo, hi, hi, t, tol=1e-10)
            evals += q.evals
            return q.value

        pts = []
        c = -rho / (2.0 * r1)  # r2 == r1
        if -1.0 < c < 1.0:
            pts.append(math.acos(c))
        c = (t * t - r1 * r1 - rho * rho) / (2.0 * r1 * rho)  # r2 == t
        if -1.0 < c < 1.0:
            pts.append(math.acos(c))
        v, _, _ = _quad(g, 0.0, math.pi, points=pts, epsabs=1e-12, epsrel=1e-10)
        return 2.0 * r1 * v

    bps = [rho / 2.0, abs(t - rho)]
    val, err, n = _quad(inner, 0.0, t, points=bps, epsabs=1e-11, epsrel=1e-9)
    val /= 4.0 * math.pi**2
    err /= 4.0 * math.pi**2
    return QuadratureValue(val, err, n + evals, err <= tol)


# -- second moment ---------------------------------------------------------------

def _radial(model):
    return lambda r: float(model(r))


def _second_moment_reduced(t, model, tol):
    f = _radial(model)
    T = 2.0 * t

    def g(r):
        # 2 pi r f(r) pair_kernel(r, t) written out: r f(r)/4 * (2t acosh(2t/r) - sqrt(4t^2 - r^2))
        if r >= T:
            return 0.0
        return 0.25 * r * f(r) * (T * math.acosh(T / r) - math.sqrt((T - r) * (T + r)))

    val, err, n = _shells(g, T, points=(t,))
    return QuadratureValue(val, err, n, err <= tol * abs(val) and n < EVAL_CAP,
                           {"method": "reduced", "kernel": "closed-form pair kernel"})


def _sigma_pair(y1, y2, m):
    """Wavefront arrival time ``sigma`` and companion root ``sigma'`` of each point."""
    b = 1.0 - m * m
    r = np.sqrt(y1 * y1 / (b * b) + y2 * y2 / b)
    c = m * y1 / b
    return r - c, r + c


# 8 panels of 12-point Gauss-Legendre on [0, 1]
_GL_X, _GL_W = np.polynomial.legendre.leggauss(12)
_PANELS = 8
_NODES = ((np.arange(_PANELS)[:, None] + 0.5 * (_GL_X[None, :] + 1.0)) / _PANELS).ravel()
_WEIGHTS = np.tile(0.5 * _GL_W / _PANELS, _PANELS)


def convected_time_kernel(y1, y2, z1, z2, t, m):
    """``int ds / sqrt(Q_y(s) Q_z(s))`` over the common support up to ``t``.

    ``Q_y(s) = (s + m y1/(1-m^2))^2 - rho(y)^2 = (s - sigma_y)(s + sigma'_y)``
    is the square-root argument of the convected kernel, used as-is without the
    moving-frame shift. With ``s = sigma_max + d sinh^2 v``, ``d`` the gap between
    the two arrival times, the two inverse square roots at the lower end merge
    into ``2 dv`` and the rest is smooth.
    """
    sy, sy2 = _sigma_pair(y1, y2, m)
    sz, sz2 = _sigma_pair(z1, z2, m)
    smax = np.maximum(sy, sz)
    d = np.maximum(np.abs(sy - sz), 1e-300)
    live = smax < t
    span = np.where(live, t - smax, 0.0)
    v1 = np.arcsinh(np.sqrt(span / d))
    v = v1[:, None] * _NODES[None, :]
    s = smax[:, None] + d[:, None] * np.sinh(v) ** 2
    g = 1.0 / np.sqrt((s + sy2[:, None]) * (s + sz2[:, None]))
    return np.where(live, 2.0 * v1 * (g @ _WEIGHTS), 0.0)


def _second_moment_direct(t, cfg, model, samples, seed, chunk=250_000):
    """Importance-sampled integral of ``G_m G_m f`` in the convected coordinates."""
    m = cfg.m
    b = 1.0 - m * m
    a = min(max(model.singularity, 0.0), 1.9)
    R = 2.0 * t
    box = ((-(1.0 - m) * t, (1.0 + m) * t), (-t, t))
    area = (box[0][1] - box[0][0]) * (box[1][1] - box[1][0])
    rng = np.random.Generator(np.random.Philox(np.random.SeedSequence([seed, 0x5EC0])))
    s1 = s2 = 0.0
    n_done = 0
    while n_done < samples:
        n = min(chunk, samples - n_done)
        u = rng.random((n, 5))
        # separation radius with density proportional to r^(1-a) on (0, 2t)
        r = R * u[:, 0] ** (1.0 / (2.0 - a))
        ang = 2.0 * np.pi * u[:, 1]
        y1 = box[0][0] + (box[0][1] - box[0][0]) * u[:, 2]
        y2 = box[1][0] + (box[1][1] - box[1][0]) * u[:, 3]
        pdf_r = (2.0 - a) * r ** (1.0 - a) / R ** (2.0 - a)
        weight = 2.0 * np.pi * r * model(r) / pdf_r
        T = convected_time_kernel(y1, y2, y1 + r * np.cos(ang), y2 + r * np.sin(ang), t, m)
        z = weight * area * T / (4.0 * np.pi**2 * b)
        s1 += math.fsum(z)
        s2 += math.fsum(z * z)
        n_done += n
    mean = s1 / n_done
    var = max(s2 / n_done - mean * mean, 0.0) * n_done / (n_done - 1)
    se = math.sqrt(var / n_done)
    # three standard errors: a bound that holds with high probability
    return QuadratureValue(mean, 3.0 * se, n_done * _NODES.size, True,
                           {"method": "direct", "samples": n_done, "standard_error": se, "seed": seed})


def second_moment(t: float, cfg: FlowConfig, model: CovarianceModel, tol: float = 1e-8,
                  method: str = "reduced", samples: int = 2_000_000, seed: int = 0) -> QuadratureValue:
    """``E[X(t, x)^2]``, independent of ``x`` and, after the frame shift, of ``m``.

    ``method="reduced"`` integrates the closed-form pair kernel radially (``tol``
    relative). ``method="direct"`` samples the convected integrand itself without
    the frame shift; its ``abs_err`` is three standard errors.
    """
    if not (0.0 < t <= cfg.t0 * (1.0 + 1e-12)):
        raise ValueError(f"t must lie in (0, t0={cfg.t0}], got {t}")
    require_existence(model)
    if method == "reduced":
        return _second_moment_reduced(t, model, tol)
    if method == "direct":
        return _second_moment_direct(t, cfg, model, samples, seed)
    raise ValueError(f"unknown method {method!r}")


# -- cross and increment moments ------------------------------------------------

def _polar_moment(model, t1, delta, D, weights, tol):
    """``int f(|w|) [sum_i c_i K_i(|w|) + c_x pair_kernel(|w + d|, t1, delta)] dw``.

    ``weights = (c11, c22, cx)`` multiply the equal-time kernels at ``t1`` and
    ``t1 + delta`` and the shifted cross kernel. Outer radius by shells and
    breakpoints, inner angle (cross term only) by adaptive quadrature split
    where ``|w + d|`` crosses a kink of the kernel.
    """
    f = _radial(model)
    t2 = t1 + delta
    c11, c22, cx = weights
    kinks = [delta, 2.0 * t1 + delta] if delta > 0.0 else [2.0 * t1]
    inner_err = [0.0]
    inner_evals = [0]

    def cross_angle(r):
        if D == 0.0:
            return 2.0 * math.pi * pair_kernel(r, t1, delta) if r < 2.0 * t1 + delta else 0.0

        def g(th):
            rho = math.sqrt(max(r * r + D * D + 2.0 * r * D * math.cos(th), 0.0))
            if rho == 0.0 or rho >= 2.0 * t1 + delta:
                return 0.0
            return pair_kernel(rho, t1, delta)

        pts = []
        for k in kinks:
            c = (k * k - r * r - D * D) / (2.0 * r * D)
            if -1.0 < c < 1.0:
                pts.append(math.acos(c))
        v, e, n = _quad(g, 0.0, math.pi, points=pts, epsabs=1e-15, epsrel=1e-11)
        inner_err[0] = max(inner_err[0], 2.0 * e)
        inner_evals[0] += n
        return 2.0 * v

    def eq_kernel(r, t):
        if r >= 2.0 * t:
            return 0.0
        T = 2.0 * t
        return (T * math.acosh(T / r) - math.sqrt((T - r) * (T + r))) / (8.0 * math.pi)

    def g(r):
        tot = 0.0
        if c11:
            tot += c11 * 2.0 * math.pi * eq_kernel(r, t1)
        if c22:
            tot += c22 * 2.0 * math.pi * eq_kernel(r, t2)
        if cx:
            tot += cx * cross_angle(r)
        return r * f(r) * tot

    hi = max(2.0 * t2, 2.0 * t1 + delta + D)
    pts = [2.0 * t1, 2.0 * t2]
    if D > 0.0:
        pts += [D] + [abs(k - D) for k in kinks] + [k + D for k in kinks]
    val, err, n = _shells(g, hi, points=pts, epsabs=1e-15, epsrel=1e-10)
    err += inner_err[0] * hi * hi
    evals = n + inner_evals[0]
    return val, err, evals


def cross_moment(t1: float, t2: float, dx, cfg: FlowConfig, model: CovarianceModel,
                 tol: float = 1e-6) -> QuadratureValue:
    """``E[X(t1, x) X(t2, x + dx)]`` for ``0 < t1 <= t2 <= t0`` (``tol`` relative)."""
    if not (0.0 < t1 <= t2 <= cfg.t0 * (1.0 + 1e-12)):
        raise ValueError(f"need 0 < t1 <= t2 <= t0, got t1={t1}, t2={t2}, t0={cfg.t0}")
    require_existence(model)
    dx1, dx2 = float(dx[0]), float(dx[1])
    delta = t2 - t1
    d1, d2 = dx1 - cfg.m * delta, dx2
    D = math.hypot(d1, d2)
    val, err, n = _polar_moment(model, t1, delta, D, (0.0, 0.0, 1.0), tol)
    return QuadratureValue(val, err, n, err <= tol * abs(val) and n < EVAL_CAP,
                           {"shift": [d1, d2]})


def increment_moment(spec: IncrementSpec, cfg: FlowConfig, model: CovarianceModel,
                     tol: float = 1e-6) -> QuadratureValue:
    """``E[|X(t1, x) - X(t2, x + dx)|^2]`` assembled in one integrand.

    The two variances and the cross term share a single radial integral so the
    large equal parts cancel inside the integrand, not after it.
    """
    spec.check(cfg)
    require_existence(model)
    t1, t2, dx1, dx2 = spec.endpoints()
    delta = t2 - t1
    D = math.hypot(dx1 - cfg.m * delta, dx2)
    val, err, n = _polar_moment(model, t1, delta, D, (1.0, 1.0, -2.0), tol)
    val = max(val, 0.0)
    return QuadratureValue(val, err, n, err <= tol * max(abs(val), 1e-300) and n < EVAL_CAP,
                           {"t1": t1, "t2": t2, "shift": [dx1 - cfg.m * delta, dx2]})


# -- modulus-of-continuity bound -------------------------------------------------

# log-scale rule for the innermost integral: 4 panels of 24 Gauss nodes over 40 e-folds
_LX, _LW = np.polynomial.legendre.leggauss(24)
_LOG_SPAN = 40.0
_LOG_NODES = ((np.arange(4)[:, None] + 0.5 * (_LX[None, :] + 1.0)) / 4.0).ravel() * _LOG_SPAN
_LOG_WEIGHTS = np.tile(0.5 * _LW / 4.0, 4) * _LOG_SPAN


def _gauss01(n):
    x, w = np.polynomial.legendre.leggauss(n)
    return 0.5 * (x + 1.0), 0.5 * w


def _modulus_radial(r, A, W, m, n_theta):
    """Inner double integral at each radius in ``r`` (1-D array).

    ``int dtheta int_{b r eta}^{W} ln(1 + A b/(r eta (w - b r eta))) ln(W/w) dw``.
    For each angle, ``u = w - b r eta`` runs over ``(0, W - b r eta)``; the log
    singularity at ``u = 0`` is absorbed by integrating in ``ln u``.
    """
    b = 1.0 - m * m
    lo = np.asarray(eta_inverse(W / (b * r), m), dtype=float)  # below lo the w-range is empty
    x, wt = _gauss01(n_theta)
    span = 0.5 * np.pi - lo
    th = lo[:, None] + span[:, None] * x[None, :]
    e = eta(th, m)
    c = b * r[:, None] * e
    U = np.maximum(W - c, 0.0)
    lam = A * b / (r[:, None] * e)
    u = U[..., None] * np.exp(-_LOG_NODES)
    w = c[..., None] + u
    with np.errstate(divide="ignore", invalid="ignore"):
        integrand = np.where(u > 0.0, np.log1p(lam[..., None] / u) * np.log(W / w) * u, 0.0)
    inner = integrand @ _LOG_WEIGHTS
    return (inner @ wt) * span


def _modulus_integral(R, W, A, m, model, n_r, n_theta, n_shells=48):
    """``int_0^R r f(r) (inner)(r) dr`` on dyadic shells below ``min(W, R)``."""
    first = min(W, R)
    edges = [first * 2.0 ** (-k) for k in range(n_shells, -1, -1)]
    if R > first:
        edges.append(R)
    x, wt = _gauss01(n_r)
    pieces = []
    for a, b in zip(edges[:-1], edges[1:]):
        r = a + (b - a) * x
        pieces.append(float(((r * model(r) * _modulus_radial(r, A, W, m, n_theta)) @ wt) * (b - a)))
    # innermost piece [0, edges[0]]: shells shrink geometrically, extrapolate their sum
    q = pieces[0] / pieces[1] if pieces[1] > 0.0 else 0.0
    tail = pieces[0] * q / (1.0 - q) if 0.0 <= q < 1.0 else 0.0
    return math.fsum(pieces) + tail, tail, len(edges) * n_r * n_theta * _LOG_NODES.size


def modulus_bound(t0: float, h: float, cfg: FlowConfig, model: CovarianceModel,
                  C1: float, C2: float, tol: float = 1e-4, n_theta: int = 48) -> QuadratureValue:
    """Modulus-of-continuity bound

        C1 int_0^R r f(r) int_{r sqrt(b)}^{W} int_{theta_lo}^{pi/2}
           ln(1 + C2 t0 sqrt(h) / (w r eta/b - r^2 eta^2)) (ln W - ln w) dtheta dw dr

    with ``b = 1 - m^2``, ``R = 2 sqrt((1+m)/(1-m)) t0``, ``W = 2 (1+m) t0`` and
    ``theta_lo = eta^-1(w/(b r))`` (0 above the range of ``eta``, ``pi/2`` below).
    The region is integrated with the angle outside and ``w`` inside, which is
    the same set: ``theta >= theta_lo`` iff ``w >= b r eta(theta)``. Tensor
    Gauss rules at two resolutions; their difference is the error estimate.
    """
    if not (0.0 < h < t0):
        raise ValueError(f"h must lie in (0, t0={t0}), got {h}")
    if not (C1 > 0.0 and C2 > 0.0):
        raise ValueError("C1 and C2 must be positive")
    m = cfg.m
    R = 2.0 * math.sqrt((1.0 + m) / (1.0 - m)) * t0
    W = 2.0 * (1.0 + m) * t0
    A = C2 * t0 * math.sqrt(h)
    coarse, _, n1 = _modulus_integral(R, W, A, m, model, 12, n_theta // 2)
    fine, tail, n2 = _modulus_integral(R, W, A, m, model, 16, n_theta)
    err = C1 * (abs(fine - coarse) + abs(tail))
    val = C1 * fine
    return QuadratureValue(val, err, n1 + n2, err <= tol * abs(val), {"C1": C1, "C2": C2, "h": h})


def fit_modulus_constants(cfg: FlowConfig, model: CovarianceModel, target, h_fit: float = 0.2,
                          dh: float = 0.9, grid=None):
    """Calibrate ``(C1, C2)`` so the bound touches ``target(h)`` at ``h_fit``.

    ``C2`` is picked from a log-grid on ``[1e-8, 1e2]`` to match the local
    log-slope of ``target`` between ``dh h_fit`` and ``h_fit``; ``C1`` then makes
    the bound equal to ``target(h_fit)``. ``target`` maps ``h`` to a float.
    """
    t0 = cfg.t0
    y0, y1 = target(h_fit), target(dh * h_fit)
    slope_t = math.log(y0 / y1) / math.log(1.0 / dh)
    grid = np.logspace(-8, 2, 21) if grid is None else np.asarray(grid)
    best = None
    for C2 in grid:
        b0 = modulus_bound(t0, h_fit, cfg, model, 1.0, C2).value
        b1 = modulus_bound(t0, dh * h_fit, cfg, model, 1.0, C2).value
        slope_b = math.log(b0 / b1) / math.log(1.0 / dh)
        score = abs(slope_b - slope_t)
        if best is None or score < best[0]:
            best = (score, float(C2), b0, slope_b)
    _, C2, b0, slope_b = best
    return {"C1": y0 / b0, "C2": C2, "target_slope": slope_t, "bound_slope": slope_b, "h_fit": h_fit}


# -- existence sandwich integrals -----------------------------------------------

def theorem1_lower(t: float, cfg: FlowConfig, model: CovarianceModel) -> QuadratureValue:
    """``int_0^t r f(r) ln(1/r) dr``: the lower comparison integral."""
    f = _radial(model)
    val, err, n = _shells(lambda r: r * f(r) * math.log(1.0 / r), t)
    return QuadratureValue(val, err, n, True)


def theorem1_upper(t: float, cfg: FlowConfig, model: CovarianceModel, C4: float = 1.0) -> QuadratureValue:
    """``int_0^{2 sqrt((1+m)/(1-m)) t} r f(r) (ln(1/r) + C4) dr``: the upper comparison integral."""
    f = _radial(model)
    m = cfg.m
    hi = 2.0 * math.sqrt((1.0 + m) / (1.0 - m)) * t
    val, err, n = _shells(lambda r: r * f(r) * (math.log(1.0 / r) + C4), hi)
    return QuadratureValue(val, err, n, True)
