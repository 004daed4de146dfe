"""Moment statistics, structure functions and log-log slope fits."""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy import stats

from .covariance import CovarianceModel, max_holder_band

__all__ = [
    "KINDS",
    "MomentEstimate",
    "StructureTable",
    "HolderFit",
    "moments",
    "shifted_point",
    "structure_points",
    "structure_function",
    "holder_fit",
    "fit_window",
]

KINDS = ("TimeShift", "SpaceShift-x1", "SpaceShift-x2")


@dataclass(frozen=True)
class MomentEstimate:
    mean: float
    var: float
    se_mean: float
    se_var: float

    def __iter__(self):
        return iter((self.mean, self.var, self.se_mean, self.se_var))

    def to_json(self):
        return {"mean": self.mean, "var": self.var, "se_mean": self.se_mean, "se_var": self.se_var}


def _moments(x) -> MomentEstimate:
    x = np.asarray(x, float)
    n = x.size
    if n < 2:
        raise ValueError("moments need at least two replicates")
    mean = math.fsum(x) / n
    var = math.fsum((x - mean) ** 2) / (n - 1)
    # Gaussian fourth moment: Var(s^2) = 2 sigma^4 / (n - 1)
    return MomentEstimate(mean, var, math.sqrt(var / n), var * math.sqrt(2.0 / (n - 1)))


def moments(ens, point=None) -> MomentEstimate:
    """Unbiased mean and variance at one evaluation point with their standard errors.

    ``ens`` is an :class:`~convecta.simulator.EnsembleResult` (``point`` selects
    the column) or a 1-D array of samples.
    """
    if point is None:
        return _moments(ens)
    return _moments(ens.column(point))


def shifted_point(base, kind: str, h: float):
    t, x1, x2 = (float(v) for v in base)
    if kind == "TimeShift":
        return (t + h, x1, x2)
    if kind == "SpaceShift-x1":
        return (t, x1 + h, x2)
    if kind == "SpaceShift-x2":
        return (t, x1, x2 + h)
    raise ValueError(f"unknown increment kind {kind!r}; expected one of {KINDS}")


def structure_points(base, kind: str, h_list):
    """Base point followed by its shifts, the point list an ensemble needs."""
    pts = [tuple(float(v) for v in base)]
    for h in h_list:
        p = shifted_point(base, kind, h)
        if p not in pts:
            pts.append(p)
    return pts


@dataclass
class StructureTable:
    kind: str
    h: np.ndarray
    s2: np.ndarray
    se: np.ndarray
    n: np.ndarray

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValueError(f"unknown increment kind {self.kind!r}")
        self.h = np.asarray(self.h, float)
        self.s2 = np.asarray(self.s2, float)
        self.se = np.asarray(self.se, float)
        self.n = np.asarray(self.n, int)
        if not (self.h.shape == self.s2.shape == self.se.shape == self.n.shape):
            raise ValueError("rows must have matching lengths")
        if np.any(np.diff(self.h) <= 0.0):
            raise ValueError("h must be strictly increasing")
        if np.any(self.s2 < 0.0):
            raise ValueError("structure function values must be non-negative")

    def rows(self):
        return [(float(h), float(s), float(e), int(n)) for h, s, e, n in zip(self.h, self.s2, self.se, self.n)]

    def to_json(self):
        return {"kind": self.kind, "rows": [dict(zip(("h", "s2", "se", "n"), r)) for r in self.rows()]}


def structure_function(ens, base_point, kind: str, h_list) -> StructureTable:
    """Mean squared increment between the base point and each shifted point.

    Every replicate shares its noise across points, so the increments are
    realisations of ``X(shifted) - X(base)``.
    """
    h_arr = np.asarray(sorted(float(h) for h in h_list))
    if h_arr.size == 0 or np.any(h_arr < 0.0):
        raise ValueError("h list must be non-empty and non-negative")
    try:
        x0 = ens.column(base_point)
    except KeyError as exc:
        raise ValueError(f"base point missing from ensemble: {exc}") from None
    s2, se, n = [], [], []
    for h in h_arr:
        if h == 0.0:
            s2.append(0.0)
            se.append(0.0)
            n.append(x0.size)
            continue
        try:
            x1 = ens.column(shifted_point(base_point, kind, h))
        except KeyError as exc:
            raise ValueError(f"shifted point missing from ensemble: {exc}") from None
        d2 = (x1 - x0) ** 2
        m = math.fsum(d2) / d2.size
        s2.append(m)
        se.append(math.sqrt(math.fsum((d2 - m) ** 2) / (d2.size - 1) / d2.size))
        n.append(d2.size)
    return StructureTable(kind, h_arr, np.array(s2), np.array(se), np.array(n))


def fit_window(h_candidates, dt: float, size: int = 5):
    """The ``size`` smallest candidates above ``4 dt``."""
    h = sorted(float(v) for v in h_candidates if v > 4.0 * dt)
    if len(h) < size:
        raise ValueError(f"only {len(h)} step sizes above 4 dt={4 * dt}")
    return h[:size]


@dataclass(frozen=True)
class HolderFit:
    slope: float
    slope_ci: tuple
    intercept: float
    holder_estimate: float
    band_predicted: tuple | None
    window: tuple = field(default=())

    @property
    def half_width(self) -> float:
        return 0.5 * (self.slope_ci[1] - self.slope_ci[0])

    def to_json(self):
        return {
            "slope": self.slope,
            "slope_ci": list(self.slope_ci),
            "intercept": self.intercept,
            "holder_estimate": self.holder_estimate,
            "band_predicted": None if self.band_predicted is None else list(self.band_predicted),
            "window": list(self.window),
        }


def holder_fit(tab: StructureTable, model: CovarianceModel | None = None, level: float = 0.95) -> HolderFit:
    """Weighted least squares of ``ln S2`` on ``ln h``.

    Weights are inverse variances of ``ln S2`` (``(S2/SE)^2``); rows with zero
    SE (exact tables) get unit weight. The interval is the Gaussian one from
    the weighted normal equations. ``band_predicted`` is the guaranteed Hölder
    band of the covariance model.
    """
    keep = tab.h > 0.0
    h, s2, se = tab.h[keep], tab.s2[keep], tab.se[keep]
    if h.size < 4:
        raise ValueError("slope fit needs at least four rows with h > 0")
    if h[-1] / h[0] < 4.0 * (1.0 - 1e-12):
        raise ValueError("h must span at least two octaves")
    if np.any(s2 <= 0.0):
        raise ValueError("cannot fit the logarithm of a zero structure function")
    x, y = np.log(h), np.log(s2)
    exact = np.all(se == 0.0)
    w = np.ones_like(x) if exact else (s2 / np.where(se > 0.0, se, np.min(se[se > 0.0]))) ** 2
    W = w.sum()
    xm, ym = (w * x).sum() / W, (w * y).sum() / W
    sxx = (w * (x - xm) ** 2).sum()
    if not sxx > 0.0:
        raise ValueError("degenerate h spacing")
    slope = float((w * (x - xm) * (y - ym)).sum() / sxx)
    intercept = float(ym - slope * xm)
    z = stats.norm.ppf(0.5 + level / 2.0)
    half = 0.0 if exact else float(z / math.sqrt(sxx))
    band = max_holder_band(model) if model is not None else None
    return HolderFit(slope, (slope - half, slope + half), intercept, max(slope / 2.0, 0.0), band,
                     tuple(float(v) for v in h))
