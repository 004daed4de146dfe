"""Radial noise covariances and integrability classifiers.

A covariance model is a positive continuous function ``f`` on ``(0, inf)``;
the noise satisfies ``E[F'(t,x) F'(s,y)] = delta(t-s) f(|x-y|)``. Only the
behaviour of ``f`` at ``0+`` decides whether a real-valued solution exists and
how regular it is, so every classifier here looks at a germ integral

    int_0^{r_max} r^p ln(1/r)^j f(r) dr,   r_max = 1.

Parametric families get closed-form verdicts. Everything else goes through
dyadic shells ``[2^-(k+1), 2^-k]``: the shell sums of a convergent germ decay
either geometrically or like a power of ``k`` faster than ``1/k``; a log-type
divergence shows up as ``k^-1`` decay (harmonic tail).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable

import numpy as np
from scipy import integrate
from scipy.special import gamma

__all__ = [
    "CovarianceModel",
    "MODEL_PARAMETERS",
    "PowerLaw",
    "Constant",
    "Exponential",
    "LogBoundary",
    "Custom",
    "Classification",
    "CONVERGENT",
    "DIVERGENT",
    "INCONCLUSIVE",
    "evaluate",
    "model_from_json",
    "classify_base",
    "classify_dalang",
    "classify_holder",
    "max_holder_band",
    "shell_sums",
]

CONVERGENT = "Convergent"
DIVERGENT = "Divergent"
INCONCLUSIVE = "Inconclusive"

R_MAX = 1.0
N_SHELLS = 60
WINDOW = 8


class CovarianceModel:
    """Base class. Subclasses implement :meth:`_f`."""

    kind: str = "custom"
    #: exponent ``a`` with ``f(r) ~ r^-a`` at 0 (0 for bounded models)
    singularity: float = 0.0
    #: whether the spectral (Fourier) measure is available in closed form
    has_spectrum: bool = False

    def __call__(self, r):
        return self._f(np.asarray(r, dtype=float))

    def _f(self, r):  # pragma: no cover - abstract
        raise NotImplementedError

    def to_json(self) -> dict:
        raise TypeError(f"{type(self).__name__} has no JSON form")

    # spectral measure: cumulative radial mass  M(k) = (1/2pi) int_0^k fhat(s) s ds
    def spectral_mass(self, k):
        raise NotImplementedError(f"{self.kind} has no closed-form spectrum")

    def spectral_radius(self, mass):
        raise NotImplementedError(f"{self.kind} has no closed-form spectrum")

    @property
    def spectral_atom(self) -> float:
        """Spectral mass sitting at the zero frequency."""
        return 0.0


@dataclass(frozen=True)
class PowerLaw(CovarianceModel):
    """``f(r) = r^-alpha_f`` with ``0 < alpha_f < 2``."""

    alpha_f: float
    kind = "power_law"
    has_spectrum = True

    def __post_init__(self):
        if not (0.0 < self.alpha_f < 2.0):
            raise ValueError(f"power-law exponent must lie in (0, 2), got {self.alpha_f}")

    @property
    def singularity(self):
        return self.alpha_f

    def _f(self, r):
        return r ** (-self.alpha_f)

    def to_json(self):
        return {"kind": self.kind, "alpha_f": self.alpha_f}

    @property
    def spectral_constant(self) -> float:
        # 2-D Fourier transform of r^-a is c_a |k|^(a-2)
        a = self.alpha_f
        return 2.0 ** (2.0 - a) * math.pi * gamma(1.0 - a / 2.0) / gamma(a / 2.0)

    def spectral_mass(self, k):
        a = self.alpha_f
        return self.spectral_constant / (2.0 * math.pi) * np.asarray(k, float) ** a / a

    def spectral_radius(self, mass):
        a = self.alpha_f
        return (np.asarray(mass, float) * 2.0 * math.pi * a / self.spectral_constant) ** (1.0 / a)


@dataclass(frozen=True)
class Constant(CovarianceModel):
    """``f = level``: noise constant in space, white in time."""

    level: float = 1.0
    kind = "constant"
    has_spectrum = True

    def __post_init__(self):
        if not self.level > 0.0:
            raise ValueError(f"constant level must be positive, got {self.level}")

    def _f(self, r):
        return np.full_like(r, self.level, dtype=float)

    def to_json(self):
        return {"kind": self.kind, "level": self.level}

    def spectral_mass(self, k):
        return np.zeros_like(np.asarray(k, float))

    @property
    def spectral_atom(self):
        return self.level


@dataclass(frozen=True)
class Exponential(CovarianceModel):
    """``f(r) = exp(-r/scale)``."""

    scale: float = 1.0
    kind = "exponential"
    has_spectrum = True

    def __post_init__(self):
        if not self.scale > 0.0:
            raise ValueError(f"scale must be positive, got {self.scale}")

    def _f(self, r):
        return np.exp(-r / self.scale)

    def to_json(self):
        return {"kind": self.kind, "scale": self.scale}

    def spectral_mass(self, k):
        # fhat(k) = 2 pi l^2 (1 + l^2 k^2)^(-3/2)
        lk = self.scale * np.asarray(k, float)
        return 1.0 - 1.0 / np.sqrt(1.0 + lk * lk)

    def spectral_radius(self, mass):
        mass = np.asarray(mass, float)
        return np.sqrt(1.0 / (1.0 - mass) ** 2 - 1.0) / self.scale


@dataclass(frozen=True)
class LogBoundary(CovarianceModel):
    """``f(r) = 1 / (r^2 ln^2(e scale / r))`` below ``scale``, constant above.

    Sits exactly between the two existence conditions: ``int r f`` converges
    while ``int r ln(1/r) f`` diverges.
    """

    scale: float = 1.0
    kind = "log_boundary"
    singularity = 2.0

    def __post_init__(self):
        if not self.scale > 0.0:
            raise ValueError(f"scale must be positive, got {self.scale}")

    def _f(self, r):
        rr = np.minimum(r, self.scale)
        return 1.0 / (rr * rr * np.log(math.e * self.scale / rr) ** 2)

    def to_json(self):
        return {"kind": self.kind, "scale": self.scale}


@dataclass(frozen=True, eq=False)
class Custom(CovarianceModel):
    """User-supplied radial function (library use only, not serialisable)."""

    func: Callable[[np.ndarray], np.ndarray]
    name: str = "custom"
    singularity: float = 0.0

    def _f(self, r):
        return np.asarray(self.func(r), dtype=float)


_KINDS = {
    "power_law": (PowerLaw, "alpha_f"),
    "constant": (Constant, "level"),
    "exponential": (Exponential, "scale"),
    "log_boundary": (LogBoundary, "scale"),
}


MODEL_PARAMETERS = {kind: param for kind, (_, param) in _KINDS.items()}


def model_from_json(obj: dict) -> CovarianceModel:
    """Build a model from ``{"kind": ..., <parameter>: ...}``."""
    if not isinstance(obj, dict) or "kind" not in obj:
        raise ValueError("covariance model must be an object with a 'kind' field")
    kind = obj["kind"]
    if kind not in _KINDS:
        raise ValueError(f"unknown covariance kind {kind!r}; expected one of {sorted(_KINDS)}")
    cls, param = _KINDS[kind]
    extra = set(obj) - {"kind", param}
    if extra:
        raise ValueError(f"unexpected fields for {kind}: {sorted(extra)}")
    if param in obj:
        return cls(float(obj[param]))
    return cls()


def evaluate(model: CovarianceModel, r):
    """``f(r)`` for ``r > 0``."""
    r = np.asarray(r, dtype=float)
    if np.any(~(r > 0.0)):
        raise ValueError("covariance is only evaluated at positive distances")
    out = model(r)
    return float(out) if out.ndim == 0 else out


@dataclass
class Classification:
    verdict: str
    value: float | None = None
    diagnostics: list = field(default_factory=list)
    method: str = "shells"
    r_max: float = R_MAX

    def __post_init__(self):
        if (self.value is not None) != (self.verdict == CONVERGENT):
            raise ValueError("value must be present exactly when convergent")

    @property
    def convergent(self) -> bool:
        return self.verdict == CONVERGENT

    def to_json(self) -> dict:
        return {
            "verdict": self.verdict,
            "value": self.value,
            "method": self.method,
            "r_max": self.r_max,
            "shells": [list(row) for row in self.diagnostics],
        }


# -- dyadic shells -----------------------------------------------------------

def shell_sums(g: Callable, r_max: float = R_MAX, n_shells: int = N_SHELLS):
    """Rows ``(k, lo, hi, int_lo^hi g)`` for the shells ``[r_max 2^-(k+1), r_max 2^-k]``."""
    rows = []
    for k in range(n_shells):
        hi = r_max * 2.0 ** (-k)
        lo = 0.5 * hi
        # log variable keeps every shell on the same footing
        val, _ = integrate.quad(
            lambda u: g(math.exp(u)) * math.exp(u),
            math.log(lo), math.log(hi), epsabs=0.0, epsrel=1e-13, limit=200,
        )
        rows.append((k, lo, hi, val))
    return rows


def _raabe(rows, window: int = WINDOW):
    """Shell ratios ``S_(k+1)/S_k`` and Raabe numbers ``k (S_k/S_(k+1) - 1)``.

    Geometric decay sends the Raabe number to infinity, ``S_k ~ k^-p`` sends
    it to ``p``; the series converges for a limit above 1.
    """
    ks = np.array([r[0] for r in rows[-window - 1:]], dtype=float)
    s = np.array([r[3] for r in rows[-window - 1:]], dtype=float)
    q = s[1:] / s[:-1]
    raabe = ks[:-1] * (s[:-1] / s[1:] - 1.0)
    return q, raabe


def _log_geometric_tail(last3, K: int, decreasing: bool) -> float:
    """``sum_{j > K} S_j`` for shells ``S_j = q^j (A + B j)`` fitted to the last three.

    Power-times-log integrands give exactly this form on dyadic shells. With
    ``u_j = S_j / q^j`` linear, ``S_K - 2 q S_(K-1) + q^2 S_(K-2) = 0``; the root is
    the one approached by the shell ratios (from above when they decrease).
    """
    s0, s1, s2 = (float(v) for v in last3)
    disc = math.sqrt(max(s1 * s1 - s2 * s0, 0.0))
    q = (s1 - disc) / s0 if decreasing else (s1 + disc) / s0
    if not 0.0 < q < 1.0:
        q = s2 / s1
        return s2 * q / (1.0 - q)
    B = s2 / q - s1  # (u_K - u_(K-1)) q^(K-1)
    A = s2  # u_K q^K
    # sum_{i >= 1} q^i (A + B' i) with B' = B q scaled back to shell K
    Bp = B * q
    return A * q / (1.0 - q) + Bp * q / (1.0 - q) ** 2


RAABE_CONVERGENT = 1.5
RAABE_DIVERGENT = 1.1
RAABE_DRIFT = 0.02


def _classify_shells(g: Callable, r_max: float = R_MAX, n_shells: int = N_SHELLS,
                     window: int = WINDOW) -> Classification:
    rows = shell_sums(g, r_max, n_shells)
    s = np.array([r[3] for r in rows])
    if not np.all(np.isfinite(s)):
        return Classification(DIVERGENT, None, rows)
    if np.all(s[-window:] == 0.0):
        return Classification(CONVERGENT, float(s.sum()), rows)
    if np.any(s[-window - 1:] <= 0.0):
        return Classification(INCONCLUSIVE, None, rows)
    q, raabe = _raabe(rows, window)
    K = rows[-1][0]
    r_last = raabe[-1]
    if r_last > RAABE_CONVERGENT and np.all(raabe > RAABE_CONVERGENT):
        q_last = q[-1]
        if q_last <= 0.9:
            tail = _log_geometric_tail(s[-3:], K, decreasing=q[-1] <= q[-2])
        else:
            # S_j ~ S_K (K/j)^p summed as an integral from K + 1/2
            p = r_last
            tail = s[-1] * K**p * (K + 0.5) ** (1.0 - p) / (p - 1.0)
        return Classification(CONVERGENT, float(s.sum() + tail), rows)
    # a Raabe number still climbing is slow geometric decay, not a harmonic tail
    flat = raabe[-1] - raabe[0] < RAABE_DRIFT
    if r_last < RAABE_DIVERGENT and np.all(raabe < RAABE_DIVERGENT) and flat:
        return Classification(DIVERGENT, None, rows)
    return Classification(INCONCLUSIVE, None, rows)


def classify_base(model: CovarianceModel) -> Classification:
    """Standing assumption: ``int_0+ r f(r) dr < inf``."""
    if isinstance(model, PowerLaw):
        # r^(1-a) integrable iff a < 2, always true for the family
        return Classification(CONVERGENT, 1.0 / (2.0 - model.alpha_f), [], "analytic")
    return _classify_shells(lambda r: r * float(model(r)))


def classify_dalang(model: CovarianceModel) -> Classification:
    """Existence condition: ``int_0+ r ln(1/r) f(r) dr < inf``."""
    if isinstance(model, PowerLaw):
        return Classification(CONVERGENT, 1.0 / (2.0 - model.alpha_f) ** 2, [], "analytic")
    return _classify_shells(lambda r: r * math.log(1.0 / r) * float(model(r)))


def classify_holder(model: CovarianceModel, alpha: float) -> Classification:
    """Regularity condition ``int_0+ f(r) r^(1-alpha) dr < inf`` for ``0 < alpha < 1``."""
    if not (0.0 < alpha < 1.0):
        raise ValueError(f"alpha must lie in (0, 1), got {alpha}")
    if isinstance(model, PowerLaw):
        e = 2.0 - alpha - model.alpha_f
        if e > 0.0:
            return Classification(CONVERGENT, 1.0 / e, [], "analytic")
        return Classification(DIVERGENT, None, [], "analytic")
    return _classify_shells(lambda r: r ** (1.0 - alpha) * float(model(r)))


def max_holder_band(model: CovarianceModel, tol: float = 1e-6):
    """Open interval ``(0, sup alpha / 4)`` of guaranteed Hölder exponents.

    ``sup alpha`` runs over ``alpha in (0, 1)`` with a convergent regularity
    integral. Returns ``None`` when no admissible ``alpha`` exists.
    """
    if isinstance(model, PowerLaw):
        sup = min(1.0, 2.0 - model.alpha_f)
        return (0.0, sup / 4.0)
    ok = lambda a: classify_holder(model, a).convergent  # noqa: E731
    # f ~ r^-a at 0 rules out every alpha >= 2 - a whatever the shells say
    cap = min(1.0, 2.0 - model.singularity)
    if cap <= 0.0:
        return None
    hi_probe = cap - 1e-9
    if ok(hi_probe):
        return (0.0, cap / 4.0)
    lo_probe = 1e-9
    if not ok(lo_probe):
        return None
    lo, hi = lo_probe, hi_probe
    while hi - lo > tol:
        mid = 0.5 * (lo + hi)
        if ok(mid):
            lo = mid
        else:
            hi = mid
    return (0.0, lo / 4.0)
