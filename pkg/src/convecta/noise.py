"""Cell-integrated increments of spatially homogeneous white-in-time noise.

The increment over a time step ``dt`` and a grid cell ``A`` is Gaussian with

    Cov(dF(A), dF(B)) = dt * int_A int_B f(|u - v|) du dv.

The cell covariance is stationary on the grid, so it is embedded in a doubled
torus and factorised by FFT (circulant embedding). Negative eigenvalues of the
embedding are clipped when their mass is small; otherwise the dense covariance
is factorised directly.
"""

from __future__ import annotations

import math
import struct
from dataclasses import dataclass, field
from typing import Iterable

import numpy as np
from scipy import integrate

from .covariance import CovarianceModel, classify_base

__all__ = [
    "GridSpec",
    "NoiseOperator",
    "FieldIncrement",
    "CIRCULANT",
    "DENSE",
    "CLIP_LIMIT",
    "DENSE_MAX_N",
    "stream",
    "build_operator",
    "sample_increment",
    "empirical_covariance",
    "disc_self_covariance",
    "dump_increment",
    "load_increment",
]

CIRCULANT = "CirculantEmbedding"
DENSE = "DenseFactorization"
CLIP_LIMIT = 1e-3
# n^2 x n^2 dense covariance: 4096^2 doubles = 134 MB at n = 64
DENSE_MAX_N = 64

NOISE_TAG = 0x4E01


def stream(seed: int, *keys: int) -> np.random.Generator:
    """Independent generator for the key path ``(seed, *keys)``.

    Counter-based (Philox) with a hashed seed sequence, so any two distinct key
    paths give statistically independent streams whatever order they are used in.
    """
    return np.random.Generator(np.random.Philox(np.random.SeedSequence([int(seed), *map(int, keys)])))


@dataclass(frozen=True)
class GridSpec:
    """Square grid ``[-L, L]^2`` with ``n`` cells per side."""

    half_extent: float
    n: int

    def __post_init__(self):
        if not (self.half_extent > 0.0 and math.isfinite(self.half_extent)):
            raise ValueError(f"half extent must be positive, got {self.half_extent}")
        if self.n < 2 or self.n % 2:
            raise ValueError(f"cells per side must be even and >= 2, got {self.n}")

    @property
    def cell_size(self) -> float:
        return 2.0 * self.half_extent / self.n

    @property
    def cell_area(self) -> float:
        return self.cell_size**2

    @property
    def edges(self) -> np.ndarray:
        return np.linspace(-self.half_extent, self.half_extent, self.n + 1)

    @property
    def centers(self) -> np.ndarray:
        e = self.edges
        return 0.5 * (e[:-1] + e[1:])

    @classmethod
    def covering(cls, reach: float, n: int, margin_cells: int = 2) -> "GridSpec":
        """Grid whose interior, ``margin_cells`` cells in from the edge, reaches ``reach``."""
        return cls(reach / (1.0 - 2.0 * margin_cells / n), n)

    def to_json(self):
        return {"half_extent": self.half_extent, "n": self.n}


@dataclass(frozen=True)
class FieldIncrement:
    values: np.ndarray
    dt: float


@dataclass(frozen=True, eq=False)
class NoiseOperator:
    grid: GridSpec
    model: CovarianceModel
    method: str
    clip_mass: float
    #: covariance of cells at lag (k1, k2), k in [0, n), including the cell-area^2 factor
    lag_cov: np.ndarray
    #: circulant: sqrt of the clipped torus eigenvalues (rfft layout); dense: square-root factor
    factor: np.ndarray
    diagnostics: dict = field(default_factory=dict)

    def sample(self, rng: np.random.Generator) -> np.ndarray:
        """One unit-time field (``dt = 1``), shape ``(n, n)``."""
        n = self.grid.n
        if self.method == CIRCULANT:
            N = 2 * n
            z = rng.standard_normal((N, N))
            x = np.fft.irfft2(self.factor * np.fft.rfft2(z), s=(N, N))
            return x[:n, :n]
        z = rng.standard_normal(n * n)
        return (self.factor @ z).reshape(n, n)

    def apply_covariance(self, v: np.ndarray) -> np.ndarray:
        """Realised (post-clipping) cell covariance applied to a grid array."""
        n = self.grid.n
        if self.method == CIRCULANT:
            N = 2 * n
            pad = np.zeros((N, N))
            pad[:n, :n] = v
            out = np.fft.irfft2(self.factor**2 * np.fft.rfft2(pad), s=(N, N))
            return out[:n, :n]
        return (self.factor @ (self.factor.T @ v.ravel())).reshape(n, n)

    def target(self, lag) -> float:
        """Prescribed covariance of two cells ``lag = (k1, k2)`` apart, per unit time."""
        k1, k2 = abs(int(lag[0])), abs(int(lag[1]))
        return float(self.lag_cov[k1, k2])


def _disc_overlap(r, R):
    """Area of the intersection of two discs of radius ``R`` at distance ``r``."""
    r = np.minimum(r, 2.0 * R)
    return 2.0 * R * R * np.arccos(r / (2.0 * R)) - 0.5 * r * np.sqrt(np.maximum(4.0 * R * R - r * r, 0.0))


def disc_self_covariance(model: CovarianceModel, area: float) -> float:
    """``int_D int_D f(|u - v|) du dv`` over the disc of the given area.

    Equals ``2 pi int_0^{2R} r f(r) overlap(r) dr``; finite exactly when
    ``int_0+ r f(r) dr`` is.
    """
    R = math.sqrt(area / math.pi)
    g = lambda r: r * float(model(r)) * float(_disc_overlap(r, R))  # noqa: E731
    hi = 2.0 * R
    edges = [0.0] + [hi * 2.0 ** (-k) for k in range(40, -1, -1)]
    parts = [integrate.quad(g, a, b, epsabs=0.0, epsrel=1e-12, limit=200)[0] for a, b in zip(edges[:-1], edges[1:])]
    total = math.fsum(parts)
    return 2.0 * math.pi * total


def _lag_covariance(grid: GridSpec, model: CovarianceModel) -> np.ndarray:
    n, h, area = grid.n, grid.cell_size, grid.cell_area
    k = np.arange(n, dtype=float)
    d = h * np.hypot(k[:, None], k[None, :])
    with np.errstate(divide="ignore"):
        cov = area * area * model(np.where(d > 0.0, d, 1.0))
    cov[0, 0] = disc_self_covariance(model, area)
    # neighbours closer than two cells: average f over 4x4 sub-cell centres
    sub = (np.arange(4) + 0.5) / 4.0 - 0.5
    su1, su2 = np.meshgrid(sub, sub, indexing="ij")
    su1, su2 = su1.ravel(), su2.ravel()
    for k1 in range(2):
        for k2 in range(2):
            if (k1, k2) == (0, 0):
                continue
            dx = h * (k1 + su1[None, :] - su1[:, None])
            dy = h * (k2 + su2[None, :] - su2[:, None])
            cov[k1, k2] = area * area * float(np.mean(model(np.hypot(dx, dy))))
    return cov


def _torus_base(lag_cov: np.ndarray) -> np.ndarray:
    n = lag_cov.shape[0]
    N = 2 * n
    idx = np.minimum(np.arange(N), N - np.arange(N))
    idx = np.minimum(idx, n - 1)
    # lag n sits half-way round the torus; it reuses the largest in-grid lag
    return lag_cov[idx[:, None], idx[None, :]]


def build_operator(grid: GridSpec, model: CovarianceModel, dt_hint: float | None = None,
                   dense_max_n: int = DENSE_MAX_N, method: str | None = None) -> NoiseOperator:
    """Factorise the cell covariance of ``model`` on ``grid``.

    Tries circulant embedding first; falls back to a dense eigendecomposition
    when more than ``CLIP_LIMIT`` of the spectral mass is negative. ``method``
    forces one of the two.
    """
    base_cls = classify_base(model)
    if not base_cls.convergent:
        raise ValueError("cell self-covariance is infinite: int_0+ r f(r) dr does not converge")
    lag_cov = _lag_covariance(grid, model)
    n = grid.n
    N = 2 * n
    base = _torus_base(lag_cov)
    lam = np.fft.rfft2(base).real
    # rfft stores most frequencies once; measure clipped mass on the full spectrum
    full = np.fft.fft2(base).real
    clip_mass = max(float(-full[full < 0.0].sum() / np.abs(full).sum()), 0.0) + 0.0  # no -0.0
    diag = {"min_eigenvalue": float(full.min()), "torus": N, "dt_hint": dt_hint}
    if method not in (None, CIRCULANT, DENSE):
        raise ValueError(f"unknown factorisation {method!r}")
    if method == CIRCULANT or (method is None and clip_mass <= CLIP_LIMIT):
        factor = np.sqrt(np.maximum(lam, 0.0))
        return NoiseOperator(grid, model, CIRCULANT, clip_mass, lag_cov, factor, diag)
    if n > dense_max_n:
        raise MemoryError(
            f"circulant embedding clips {clip_mass:.2e} of the spectral mass and a dense "
            f"factorisation of {n * n} cells exceeds the budget (n <= {dense_max_n})"
        )
    k = np.arange(n)
    i1, i2 = np.meshgrid(k, k, indexing="ij")
    i1, i2 = i1.ravel(), i2.ravel()
    C = lag_cov[np.abs(i1[:, None] - i1[None, :]), np.abs(i2[:, None] - i2[None, :])]
    w, V = np.linalg.eigh(C)
    diag["dense_min_eigenvalue"] = float(w.min())
    factor = V * np.sqrt(np.maximum(w, 0.0))[None, :]
    return NoiseOperator(grid, model, DENSE, clip_mass, lag_cov, factor, diag)


def sample_increment(op: NoiseOperator, dt: float, rng_stream: np.random.Generator) -> FieldIncrement:
    """Field increment over a time step ``dt``: ``sqrt(dt)`` times a unit field."""
    if dt < 0.0:
        raise ValueError(f"dt must be non-negative, got {dt}")
    n = op.grid.n
    if dt == 0.0:
        return FieldIncrement(np.zeros((n, n)), 0.0)
    return FieldIncrement(math.sqrt(dt) * op.sample(rng_stream), dt)


@dataclass
class CovarianceEstimate:
    lag: tuple
    value: float
    se: float
    draws: int


def empirical_covariance(draws: Iterable, lags, min_draws: int = 1000):
    """Per-lag covariance estimates with standard errors.

    Each draw contributes the spatial mean of ``X(i) X(i + lag)`` over every
    position where both cells are on the grid; with the mean known to be zero
    this is unbiased. Standard errors come from the spread across draws, so
    spatial correlation within a draw is accounted for.
    """
    lags = [tuple(int(v) for v in lag) for lag in lags]
    sums = np.zeros(len(lags))
    sq = np.zeros(len(lags))
    count = 0
    for d in draws:
        x = d.values if isinstance(d, FieldIncrement) else np.asarray(d)
        n1, n2 = x.shape
        stats = np.empty(len(lags))
        for j, (a, b) in enumerate(lags):
            i0, i1 = max(0, -a), n1 - max(0, a)
            j0, j1 = max(0, -b), n2 - max(0, b)
            xa = x[i0:i1, j0:j1]
            xb = x[i0 + a:i1 + a, j0 + b:j1 + b]
            stats[j] = float(np.mean(xa * xb))
        sums += stats
        sq += stats * stats
        count += 1
    if count < min_draws:
        raise ValueError(f"need at least {min_draws} draws, got {count}")
    mean = sums / count
    var = np.maximum(sq / count - mean**2, 0.0) * count / (count - 1)
    se = np.sqrt(var / count)
    return [CovarianceEstimate(lag, float(v), float(s), count) for lag, v, s in zip(lags, mean, se)]


# -- binary dump ---------------------------------------------------------------
# 32-byte little-endian header: magic "CVWN", uint32 version, uint32 n, 4 pad bytes,
# float64 dt, 8 reserved bytes; then n*n row-major float64 values.

_MAGIC = b"CVWN"
_HEADER = struct.Struct("<4sII4xd8x")
_VERSION = 1


def dump_increment(inc: FieldIncrement, path) -> None:
    values = np.ascontiguousarray(inc.values, dtype="<f8")
    n = values.shape[0]
    if values.shape != (n, n):
        raise ValueError("field must be square")
    with open(path, "wb") as fh:
        fh.write(_HEADER.pack(_MAGIC, _VERSION, n, float(inc.dt)))
        fh.write(values.tobytes(order="C"))


def load_increment(path) -> FieldIncrement:
    with open(path, "rb") as fh:
        head = fh.read(_HEADER.size)
        magic, version, n, dt = _HEADER.unpack(head)
        if magic != _MAGIC:
            raise ValueError("not a field dump (bad magic)")
        if version != _VERSION:
            raise ValueError(f"unsupported dump version {version}")
        values = np.frombuffer(fh.read(), dtype="<f8")
    return FieldIncrement(values.reshape(n, n).copy(), dt)
