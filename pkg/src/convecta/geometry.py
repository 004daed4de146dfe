"""Convected Green's function of the 2-D wave operator and its geometry.

For a uniform subsonic flow ``M = (m, 0)`` the fundamental solution is

    G(t, x, m) = 1{t >= rho(x) - m x1/(1-m^2)}
                 / (2 pi sqrt(1-m^2) sqrt((t + m x1/(1-m^2))^2 - rho(x)^2))

with the anisotropic radius ``rho(x) = sqrt(x1^2/(1-m^2)^2 + x2^2/(1-m^2))``.
Clearing denominators, the discriminant equals ``(t^2 - |x - m t e1|^2)/(1-m^2)``,
so ``G`` is the classical kernel ``1/(2 pi sqrt(t^2 - |y|^2))`` seen from the
point ``y = x - m t e1`` (the moving frame).

All functions accept floats or numpy arrays and broadcast.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import NamedTuple

import numpy as np

__all__ = [
    "FlowConfig",
    "SpacePoint",
    "GreenValue",
    "WAVEFRONT_RTOL",
    "rho",
    "eta",
    "eta_inverse",
    "support_contains",
    "green",
    "green_array",
    "classical_green",
    "moving_frame",
]

# Discriminant below this fraction of (t + rho)^2 counts as "on the wavefront".
WAVEFRONT_RTOL = 1e-12


@dataclass(frozen=True)
class FlowConfig:
    """Mach number ``m`` of the mean flow along x1 and time horizon ``t0``."""

    m: float = 0.0
    t0: float = 1.0

    def __post_init__(self):
        if not (0.0 <= self.m < 1.0) or not math.isfinite(self.m):
            raise ValueError(f"Mach number must lie in [0, 1), got {self.m}")
        if not (self.t0 > 0.0) or not math.isfinite(self.t0):
            raise ValueError(f"time horizon must be positive, got {self.t0}")

    @property
    def beta(self) -> float:
        """``1 - m^2``."""
        return 1.0 - self.m * self.m

    @property
    def reach(self) -> float:
        """Largest distance from the source the wavefront reaches by ``t0``."""
        return self.t0 / (1.0 - self.m)


class SpacePoint(NamedTuple):
    x1: float
    x2: float


class GreenValue(NamedTuple):
    value: float
    on_support: bool
    singular: bool = False


def _mach(cfg) -> float:
    return cfg.m if isinstance(cfg, FlowConfig) else float(cfg)


def _mach_array(cfg):
    return cfg.m if isinstance(cfg, FlowConfig) else np.asarray(cfg, dtype=float)


def rho(x1, x2, m):
    """Anisotropic radius; reduces to the Euclidean norm when ``m = 0``."""
    m = _mach_array(m)
    b = 1.0 - m * m
    return np.sqrt(np.square(x1) / (b * b) + np.square(x2) / b)


def eta(theta, m):
    """Angular kernel ``sqrt(cos^2/(1-m^2)^2 + sin^2/(1-m^2))``.

    pi-periodic, decreasing on ``[0, pi/2]`` from ``1/(1-m^2)`` to ``1/sqrt(1-m^2)``.
    """
    m = _mach_array(m)
    b = 1.0 - m * m
    return np.sqrt(np.cos(theta) ** 2 / (b * b) + np.sin(theta) ** 2 / b)


def eta_inverse(value, m):
    """Inverse of ``eta`` on ``[0, pi/2]``, clamped outside the range of ``eta``.

    Values above ``max eta`` map to 0 (every angle satisfies ``eta < value``),
    values below ``min eta`` map to ``pi/2`` (empty angular range).
    """
    m = _mach(m)
    b = 1.0 - m * m
    value = np.asarray(value, dtype=float)
    if m == 0.0:
        return np.where(value >= 1.0, 0.0, 0.5 * np.pi)
    # eta^2 = 1/b^2 - sin^2(1/b^2 - 1/b)  =>  sin^2 = (1 - b^2 eta^2) / (1 - b)
    s2 = (1.0 - b * b * value * value) / (1.0 - b)
    return np.arcsin(np.sqrt(np.clip(s2, 0.0, 1.0)))


def moving_frame(t, x1, x2, m):
    """Point at which the classical kernel reproduces ``G(t, x, m)``."""
    m = _mach(m)
    return x1 - m * t, x2


def support_contains(t, x1, x2, m):
    """Indicator ``t - (rho(x) - m x1/(1-m^2)) >= 0``.

    Evaluated as ``(1-m^2) t + m x1 >= 0`` and ``((1-m^2) t + m x1)^2 >= x1^2 +
    (1-m^2) x2^2`` so it agrees exactly with the support flag of :func:`green`.
    """
    q, lead = _scaled_discriminant(t, x1, x2, _mach(m))
    return (q >= 0.0) & (lead >= 0.0)


# -- error-free transformations ---------------------------------------------
# The discriminant cancels catastrophically near the wavefront; it is evaluated
# in double-double so the only remaining error is the rounding of the inputs.

_SPLIT = 134217729.0  # 2**27 + 1


def _two_sum(a, b):
    s = a + b
    bb = s - a
    return s, (a - (s - bb)) + (b - bb)


def _split(a):
    c = _SPLIT * a
    hi = c - (c - a)
    return hi, a - hi


def _two_prod(a, b):
    p = a * b
    ah, al = _split(a)
    bh, bl = _split(b)
    return p, ((ah * bh - p) + ah * bl + al * bh) + al * bl


def _dd_add(a, b):
    s, e = _two_sum(a[0], b[0])
    e = e + a[1] + b[1]
    return _two_sum(s, e)


def _dd_mul(a, b):
    p, e = _two_prod(a[0], b[0])
    e = e + (a[0] * b[1] + a[1] * b[0])
    return _two_sum(p, e)


def _dd(x):
    x = np.asarray(x, dtype=float)
    return x, np.zeros_like(x)


def _neg(a):
    return -a[0], -a[1]


def _scaled_discriminant(t, x1, x2, m):
    """``(1-m^2)^2 [(t + m x1/(1-m^2))^2 - rho^2]`` and ``(1-m^2) t + m x1``.

    The polynomial form ``((1-m^2) t + m x1)^2 - x1^2 - (1-m^2) x2^2`` is the
    denominator-free version of the square-root argument in the kernel.
    """
    T, X1, X2, M = _dd(t), _dd(x1), _dd(x2), _dd(m)
    beta = _dd_add(_dd(1.0), _neg(_dd_mul(M, M)))
    lead = _dd_add(_dd_mul(beta, T), _dd_mul(M, X1))
    # factored so the front cancellation happens among small terms:
    # lead - x1 = (t - x1) + m (x1 - m t)
    gap = _dd_add(_two_sum(T[0], -X1[0]), _dd_mul(M, _dd_add(X1, _neg(_dd_mul(M, T)))))
    q = _dd_mul(gap, _dd_add(lead, X1))
    q = _dd_add(q, _neg(_dd_mul(beta, _dd_mul(X2, X2))))
    return q[0] + q[1], lead[0] + lead[1]


def green_array(t, x1, x2, m):
    """Vectorised kernel values and flags.

    Returns ``(value, on_support, singular)`` arrays. ``t`` must be positive.
    """
    m = _mach_array(m)
    t = np.asarray(t, dtype=float)
    if np.any(t <= 0.0):
        raise ValueError("Green's function is evaluated at positive times only")
    if np.any(np.abs(m) >= 1.0):
        raise ValueError("flow must be subsonic, |m| < 1")
    b = 1.0 - m * m
    q, lead = _scaled_discriminant(t, x1, x2, m)
    on_support = (q >= 0.0) & (lead >= 0.0)
    # q = b^2 * disc; compare disc against the relative wavefront band
    r = rho(x1, x2, m)
    singular = on_support & (q < WAVEFRONT_RTOL * (b * (t + r)) ** 2)
    good = on_support & ~singular
    with np.errstate(divide="ignore", invalid="ignore"):
        # 1/(2 pi sqrt(b) sqrt(q / b^2)) = sqrt(b) / (2 pi sqrt(q))
        value = np.where(good, np.sqrt(b) / (2.0 * np.pi * np.sqrt(np.where(good, q, 1.0))), 0.0)
    return value, on_support, singular


def green(t: float, x1: float, x2: float, m) -> GreenValue:
    """Kernel value at a single point.

    Off the support the value is 0 with ``on_support=False``. Within the
    wavefront band the kernel would overflow; the value is reported as 0 with
    ``on_support=True, singular=True`` so that no caller consumes it.
    """
    if not t > 0.0:
        raise ValueError(f"t must be positive, got {t}")
    v, s, sing = green_array(float(t), float(x1), float(x2), m)
    return GreenValue(float(v), bool(s), bool(sing))


def classical_green(t, r):
    """``1/(2 pi sqrt(t^2 - r^2))`` on ``r < t``, zero outside."""
    t = np.asarray(t, dtype=float)
    r = np.asarray(r, dtype=float)
    inside = r < t
    with np.errstate(invalid="ignore", divide="ignore"):
        d = np.where(inside, (t - r) * (t + r), 1.0)
        return np.where(inside, 1.0 / (2.0 * np.pi * np.sqrt(d)), 0.0)
