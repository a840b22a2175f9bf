"""Classical top-down baselines: Poisson, negative binomial, Pareto.

Poisson and negative binomial act on the support-shifted variable
``length - 1`` so that single-action possessions are representable. The
Pareto is fitted as a continuous law with ``x_min = 1`` and discretized by
half-integer CDF differences for comparison on integer lengths.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.optimize import minimize_scalar
from scipy.special import gammaln

from .errors import DegenerateData, DomainError, InsufficientData, UnderdispersedData
from .segmenter import LengthHistogram


def _check_x(x) -> np.ndarray:
    xs = np.asarray(x)
    if np.any(xs < 1) or np.any(xs != np.floor(xs)):
        raise DomainError("x must be a positive integer (>= 1)")
    return xs.astype(np.float64)


def _moments(hist: LengthHistogram) -> tuple[float, float]:
    """Mean and (population) variance of the shifted variable length - 1."""
    xs = np.array(sorted(hist.counts), dtype=np.float64) - 1.0
    cs = np.array([hist.counts[int(x) + 1] for x in xs], dtype=np.float64)
    mean = float((cs * xs).sum() / hist.n)
    var = float((cs * (xs - mean) ** 2).sum() / hist.n)
    return mean, var


@dataclass(frozen=True)
class PoissonModel:
    """Shifted Poisson: length - 1 ~ Poisson(rate).

    ``degenerate`` marks the all-length-one case where the MLE collapses
    to a point mass at 1.
    """

    rate: float
    degenerate: bool = False

    model_type = "poisson"
    n_params = 1

    def __post_init__(self):
        if self.rate < 0.0:
            raise DomainError(f"rate must be non-negative, got {self.rate}")
        if self.rate == 0.0 and not self.degenerate:
            raise DomainError("rate 0 is only valid for the degenerate point mass")

    def pmf(self, x):
        xs = _check_x(x)
        if self.rate == 0.0:
            return np.where(xs == 1.0, 1.0, 0.0)
        return np.exp(self.log_pmf(xs))

    def log_pmf(self, x):
        xs = _check_x(x)
        if self.rate == 0.0:
            return np.where(xs == 1.0, 0.0, -np.inf)
        k = xs - 1.0
        return k * math.log(self.rate) - self.rate - gammaln(k + 1.0)

    def to_dict(self) -> dict:
        return {"rate": self.rate, "degenerate": self.degenerate}

    @classmethod
    def from_dict(cls, d: dict) -> "PoissonModel":
        return cls(float(d["rate"]), bool(d.get("degenerate", False)))


@dataclass(frozen=True)
class NBDModel:
    """Shifted negative binomial with dispersion ``r`` and success ``p``:

    ``P(length - 1 = k) = C(k + r - 1, k) * p**r * (1-p)**k``.
    """

    r: float
    p: float

    model_type = "nbd"
    n_params = 2

    def __post_init__(self):
        if self.r <= 0.0:
            raise DomainError(f"r must be positive, got {self.r}")
        if not 0.0 < self.p < 1.0:
            raise DomainError(f"p must lie in (0, 1), got {self.p}")

    def pmf(self, x):
        return np.exp(self.log_pmf(x))

    def log_pmf(self, x):
        xs = _check_x(x)
        k = xs - 1.0
        return (
            gammaln(k + self.r)
            - gammaln(self.r)
            - gammaln(k + 1.0)
            + self.r * math.log(self.p)
            + k * math.log1p(-self.p)
        )

    def to_dict(self) -> dict:
        return {"r": self.r, "p": self.p}

    @classmethod
    def from_dict(cls, d: dict) -> "NBDModel":
        return cls(float(d["r"]), float(d["p"]))


@dataclass(frozen=True)
class ParetoModel:
    """Continuous Pareto tail exponent with fixed ``x_min = 1``.

    The comparison PMF on integer lengths is the half-integer CDF
    difference ``S(x - 1/2) - S(x + 1/2)`` with the lower edge clamped to
    the support, which telescopes to a proper distribution on x >= 1.
    """

    alpha: float
    x_min: float = 1.0

    model_type = "pareto"
    n_params = 1

    def __post_init__(self):
        if self.alpha <= 0.0:
            raise DomainError(f"alpha must be positive, got {self.alpha}")
        if self.x_min != 1.0:
            raise DomainError("x_min is fixed at 1")

    def _sf(self, t):
        t = np.asarray(t, dtype=np.float64)
        return np.where(t <= self.x_min, 1.0, t ** (-self.alpha))

    def pmf(self, x):
        xs = _check_x(x)
        return self._sf(xs - 0.5) - self._sf(xs + 0.5)

    def log_pmf(self, x):
        with np.errstate(divide="ignore"):
            return np.log(self.pmf(x))

    def to_dict(self) -> dict:
        return {"alpha": self.alpha, "x_min": self.x_min}

    @classmethod
    def from_dict(cls, d: dict) -> "ParetoModel":
        return cls(float(d["alpha"]), float(d.get("x_min", 1.0)))


ClassicalModel = PoissonModel | NBDModel | ParetoModel


def pmf(model: ClassicalModel, x):
    """Evaluate any classical model's PMF on possession lengths."""
    return model.pmf(x)


def fit_poisson(hist: LengthHistogram) -> PoissonModel:
    """MLE on the shifted variable: rate = mean(length - 1).

    An all-length-one histogram yields the degenerate point mass at 1
    rather than an error.
    """
    if hist.n < 1:
        raise InsufficientData("need at least one possession")
    mean, _ = _moments(hist)
    if mean == 0.0:
        return PoissonModel(0.0, degenerate=True)
    return PoissonModel(mean)


_NBD_LOG_R_BOUNDS = (math.log(1e-6), math.log(1e6))


def fit_nbd(hist: LengthHistogram) -> NBDModel:
    """Profile-likelihood MLE of (r, p) on the shifted variable.

    For fixed r the optimal success probability is ``p(r) = r / (r + mean)``;
    r is then found by a deterministic bounded 1-D search on log r, seeded
    conceptually at the method-of-moments value (the bracket contains it).
    Raises :class:`UnderdispersedData` when variance <= mean, where the MLE
    diverges toward the Poisson limit.
    """
    if hist.n < 2:
        raise InsufficientData("need at least two possessions")
    mean, var = _moments(hist)
    if var <= 0.0:
        raise InsufficientData("need at least two distinct lengths")
    if var <= mean:
        raise UnderdispersedData(mean, var)

    # reduce counts by their gcd: the likelihood argmax depends only on count
    # ratios, and the canonical representative makes scaled histograms fit
    # bit-identically
    g = math.gcd(*hist.counts.values()) if hist.counts else 1
    counts = {length: c // g for length, c in hist.counts.items()} if g > 1 else hist.counts

    xs = np.array(sorted(counts), dtype=np.float64) - 1.0
    cs = np.array([counts[int(x) + 1] for x in xs], dtype=np.float64)
    n = float(cs.sum())
    mean = float((cs * xs).sum() / n)

    def profile_neg_ll(log_r: float) -> float:
        r = math.exp(log_r)
        p = r / (r + mean)
        ll = (
            (cs * (gammaln(xs + r) - gammaln(xs + 1.0))).sum()
            - n * gammaln(r)
            + n * r * math.log(p)
            + (cs * xs).sum() * math.log1p(-p)
        )
        return -float(ll)

    res = minimize_scalar(
        profile_neg_ll,
        bounds=_NBD_LOG_R_BOUNDS,
        method="bounded",
        options={"xatol": 1e-10},
    )
    r_hat = math.exp(res.x)

    # the search must do at least as well as the method-of-moments seed
    r_mom = mean * mean / (var - mean)
    if profile_neg_ll(math.log(r_mom)) < res.fun:
        r_hat = r_mom
    return NBDModel(r_hat, r_hat / (r_hat + mean))


def fit_pareto(hist: LengthHistogram) -> ParetoModel:
    """Continuous-Pareto MLE treating lengths as continuous observations:

    ``alpha = n / sum(count[x] * ln x)``. All-length-one data has no finite
    exponent and raises :class:`DegenerateData`.
    """
    if hist.n < 1:
        raise InsufficientData("need at least one possession")
    log_sum = sum(c * math.log(length) for length, c in hist.counts.items())
    if log_sum == 0.0:
        raise DegenerateData("all lengths are 1; Pareto exponent is unbounded")
    return ParetoModel(hist.n / log_sum)
