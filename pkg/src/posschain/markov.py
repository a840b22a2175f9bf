"""Markov possession models: closed forms, chain evolution, and fitting.

Two model families describe possession-length distributions:

* :class:`SimpleModel` -- a three-state absorbing chain (Keep, Loss, Shot)
  with constant per-action probabilities. Its length law is geometric:
  ``P(X = x) = (1 - p_k) * p_k**(x-1)``.
* :class:`AdjustedModel` -- the same exponential envelope plus an
  accumulation term: ``P(X = x) = C * (exp(-lam*x) + b**x)``. The extra
  geometric term corrects the short-possession mass without changing the
  asymptotics; it is a standalone PMF family, not a constant-rate chain.

:class:`AutomatonSpec` generalizes to any labeled absorbing chain (divided
balls, positional play, ...) for evolution and simulation.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np
from scipy.optimize import minimize

from .errors import DomainError, InsufficientData, NonConvergence
from .segmenter import LengthHistogram

_SUM_TOL = 1e-12

KEEP, LOSS, SHOT = "Keep", "Loss", "Shot"


def _check_x(x) -> np.ndarray:
    xs = np.asarray(x)
    if not np.issubdtype(xs.dtype, np.number):
        raise DomainError(f"x must be numeric, got {xs.dtype}")
    if np.any(xs < 1) or np.any(xs != np.floor(xs)):
        raise DomainError("x must be a positive integer (>= 1)")
    return xs.astype(np.float64)


@dataclass(frozen=True)
class SimpleModel:
    """Constant-probability possession chain.

    ``p_k`` keeps the ball, ``p_s`` ends it with a shot, ``p_l`` loses it;
    the three must sum to one and ``p_k < 1`` so absorption is certain.
    """

    p_k: float
    p_s: float
    p_l: float

    model_type = "simple"
    n_params = 2  # keep probability plus the shot/loss split

    def __post_init__(self):
        for name in ("p_k", "p_s", "p_l"):
            v = getattr(self, name)
            if not 0.0 <= v <= 1.0:
                raise DomainError(f"{name}={v} outside [0, 1]")
        if abs(self.p_k + self.p_s + self.p_l - 1.0) > _SUM_TOL:
            raise DomainError(
                f"p_k + p_s + p_l = {self.p_k + self.p_s + self.p_l!r} != 1"
            )
        if self.p_k >= 1.0:
            raise DomainError("p_k must be < 1 for absorption to be certain")

    def pmf(self, x):
        """P(possession length == x); geometric in the keep transitions."""
        xs = _check_x(x)
        return np.exp(self.log_pmf(xs))

    def log_pmf(self, x):
        xs = _check_x(x)
        if self.p_k == 0.0:
            return np.where(xs == 1.0, 0.0, -np.inf)
        return math.log1p(-self.p_k) + (xs - 1.0) * math.log(self.p_k)

    def shot_cdf(self, x):
        """P(a shot happens within the first x actions of a possession)."""
        xs = _check_x(x)
        if self.p_k == 0.0:
            return np.full_like(xs, self.p_s)
        return self.p_s * (1.0 - self.p_k**xs) / (1.0 - self.p_k)

    @property
    def shot_limit(self) -> float:
        """Probability the possession ever ends in a shot: p_s / (1 - p_k)."""
        return self.p_s / (1.0 - self.p_k)

    def to_automaton(self) -> "AutomatonSpec":
        """The equivalent three-state absorbing chain, started at Keep."""
        return AutomatonSpec(
            state_names=(KEEP, LOSS, SHOT),
            transition=np.array(
                [
                    [self.p_k, self.p_l, self.p_s],
                    [0.0, 1.0, 0.0],
                    [0.0, 0.0, 1.0],
                ]
            ),
            initial_distribution=np.array([1.0, 0.0, 0.0]),
            absorbing=frozenset({LOSS, SHOT}),
        )

    def to_dict(self) -> dict:
        return {"p_k": self.p_k, "p_s": self.p_s, "p_l": self.p_l}

    @classmethod
    def from_dict(cls, d: dict) -> "SimpleModel":
        return cls(float(d["p_k"]), float(d["p_s"]), float(d["p_l"]))


def adjusted_norm_constant(lam: float, b: float) -> float:
    """C with sum_{x>=1} C*(exp(-lam*x) + b**x) == 1."""
    return 1.0 / (1.0 / math.expm1(lam) + b / (1.0 - b))


@dataclass(frozen=True)
class AdjustedModel:
    """Exponential length law with an accumulation factor.

    ``lam`` is the decay rate of the exponential envelope; ``b`` in (0,1)
    adds a faster-decaying geometric term read as negative self-affirmation
    feedback. ``C`` is derived, never free.
    """

    lam: float
    b: float

    model_type = "adjusted"
    n_params = 2

    def __post_init__(self):
        if not self.lam > 0.0 or not math.isfinite(self.lam):
            raise DomainError(f"lam must be positive and finite, got {self.lam}")
        if not 0.0 < self.b < 1.0:
            raise DomainError(f"b must lie in (0, 1), got {self.b}")

    @property
    def C(self) -> float:
        return adjusted_norm_constant(self.lam, self.b)

    def pmf(self, x):
        xs = _check_x(x)
        return np.exp(self.log_pmf(xs))

    def log_pmf(self, x):
        xs = _check_x(x)
        return math.log(self.C) + np.logaddexp(-self.lam * xs, xs * math.log(self.b))

    def to_dict(self) -> dict:
        return {"lambda": self.lam, "b": self.b, "C": self.C}

    @classmethod
    def from_dict(cls, d: dict) -> "AdjustedModel":
        return cls(float(d["lambda"]), float(d["b"]))


class AutomatonSpec:
    """A labeled absorbing chain: states, row-stochastic matrix, start law.

    Validation rejects chains whose absorption is not almost sure: every
    non-absorbing state must reach some absorbing state along edges of
    positive probability.
    """

    def __init__(
        self,
        state_names: Sequence[str],
        transition,
        initial_distribution,
        absorbing: frozenset[str] | set[str],
    ):
        self.state_names = tuple(str(s) for s in state_names)
        if len(set(self.state_names)) != len(self.state_names):
            raise DomainError("state names must be unique")
        n = len(self.state_names)
        A = np.asarray(transition, dtype=np.float64)
        if A.shape != (n, n):
            raise DomainError(f"transition matrix must be {n}x{n}, got {A.shape}")
        if np.any(A < 0.0):
            raise DomainError("transition probabilities must be non-negative")
        row_sums = A.sum(axis=1)
        bad = np.nonzero(np.abs(row_sums - 1.0) > _SUM_TOL)[0]
        if bad.size:
            detail = ", ".join(
                f"{self.state_names[i]}: {row_sums[i]!r}" for i in bad
            )
            raise DomainError(f"rows must sum to 1 (off rows: {detail})")

        pi = np.asarray(initial_distribution, dtype=np.float64)
        if pi.shape != (n,):
            raise DomainError(f"initial distribution must have length {n}")
        if np.any(pi < 0.0) or abs(pi.sum() - 1.0) > _SUM_TOL:
            raise DomainError("initial distribution must be a probability vector")

        self.absorbing = frozenset(str(s) for s in absorbing)
        unknown = self.absorbing - set(self.state_names)
        if unknown:
            raise DomainError(f"absorbing set names unknown states: {sorted(unknown)}")
        self._index = {name: i for i, name in enumerate(self.state_names)}
        for name in self.absorbing:
            i = self._index[name]
            if A[i, i] != 1.0:
                raise DomainError(f"absorbing state {name!r} must have a_ii = 1")

        self.transition = A
        self.initial_distribution = pi
        self._check_absorption_reachable()

    def _check_absorption_reachable(self) -> None:
        n = len(self.state_names)
        reach = {self._index[s] for s in self.absorbing}
        edges = self.transition > 0.0
        # backward closure: states with a positive-probability path into it
        changed = True
        while changed:
            changed = False
            for i in range(n):
                if i in reach:
                    continue
                if any(edges[i, j] for j in reach):
                    reach.add(i)
                    changed = True
        missing = [self.state_names[i] for i in range(n) if i not in reach]
        if missing:
            raise DomainError(
                f"states cannot reach any absorbing state: {missing}; "
                "absorption would not be almost sure"
            )

    @property
    def n_states(self) -> int:
        return len(self.state_names)

    def state_index(self, state: int | str) -> int:
        if isinstance(state, str):
            try:
                return self._index[state]
            except KeyError:
                raise DomainError(f"unknown state {state!r}") from None
        i = int(state)
        if not 0 <= i < self.n_states:
            raise DomainError(f"state index {i} out of range 0..{self.n_states - 1}")
        return i

    def absorbing_indices(self) -> np.ndarray:
        return np.array([self._index[s] for s in sorted(self.absorbing)], dtype=np.int64)

    def absorbing_mask(self) -> np.ndarray:
        mask = np.zeros(self.n_states, dtype=bool)
        mask[self.absorbing_indices()] = True
        return mask

    def __eq__(self, other):
        if not isinstance(other, AutomatonSpec):
            return NotImplemented
        return (
            self.state_names == other.state_names
            and self.absorbing == other.absorbing
            and np.array_equal(self.transition, other.transition)
            and np.array_equal(self.initial_distribution, other.initial_distribution)
        )

    def __repr__(self):
        return f"AutomatonSpec(states={self.state_names}, absorbing={sorted(self.absorbing)})"

    def to_dict(self) -> dict:
        return {
            "state_names": list(self.state_names),
            "transition": self.transition.tolist(),
            "initial_distribution": self.initial_distribution.tolist(),
            "absorbing": sorted(self.absorbing),
        }

    @classmethod
    def from_dict(cls, d: dict) -> "AutomatonSpec":
        return cls(
            state_names=d["state_names"],
            transition=d["transition"],
            initial_distribution=d["initial_distribution"],
            absorbing=frozenset(d["absorbing"]),
        )


def evolve(spec: AutomatonSpec, initial_state: int | str | None, steps: int) -> np.ndarray:
    """State-occupancy distribution after ``steps`` transitions.

    ``initial_state`` may be a state index, a state name, or ``None`` for
    the spec's initial distribution. The result sums to one and the mass on
    absorbing states is non-decreasing in ``steps``.
    """
    if steps < 0:
        raise DomainError(f"steps must be >= 0, got {steps}")
    if initial_state is None:
        v = spec.initial_distribution.copy()
    else:
        v = np.zeros(spec.n_states)
        v[spec.state_index(initial_state)] = 1.0
    if steps == 0:
        return v
    power = np.linalg.matrix_power(spec.transition, steps)
    return v @ power


def fit_simple(hist: LengthHistogram) -> SimpleModel:
    """Closed-form maximum-likelihood fit of the simple chain.

    Keep transitions are Bernoulli trials: ``p_k`` is their observed share
    of all actions; the termination mass splits between shot and loss in
    the observed outcome proportions.
    """
    if hist.n < 1:
        raise InsufficientData("need at least one possession")
    p_k = (hist.total_actions - hist.n) / hist.total_actions
    term = 1.0 - p_k
    return SimpleModel(p_k, term * hist.n_shot / hist.n, term * hist.n_loss / hist.n)


_FIT_MAXFEV = 10_000
_FIT_XATOL = 1e-9


def fit_adjusted(hist: LengthHistogram) -> AdjustedModel:
    """Maximum-likelihood fit of the accumulation-adjusted length law.

    Deterministic Nelder-Mead direct search in the (log lam, logit b)
    plane, seeded at the simple model's decay rate and b = 1/2. The family
    nests the pure-exponential shape as b -> 0, so the fit is checked
    against that profile and re-polished from near the boundary when the
    first pass falls short.
    """
    if hist.n < 2:
        raise InsufficientData("need at least two possessions")
    if len(hist.counts) < 2:
        raise InsufficientData("need at least two distinct lengths")

    xs = np.array(sorted(hist.counts), dtype=np.float64)
    cs = np.array([hist.counts[int(x)] for x in xs], dtype=np.float64)

    def neg_ll(theta) -> float:
        u, v = theta
        lam = math.exp(u)
        if not math.isfinite(lam) or lam <= 0.0:
            return np.inf
        b = 1.0 / (1.0 + math.exp(-v))
        if not 0.0 < b < 1.0:
            return np.inf
        log_c = math.log(adjusted_norm_constant(lam, b))
        return -float((cs * (log_c + np.logaddexp(-lam * xs, xs * math.log(b)))).sum())

    def search(x0):
        return minimize(
            neg_ll,
            np.asarray(x0, dtype=np.float64),
            method="Nelder-Mead",
            options={
                "xatol": _FIT_XATOL,
                "fatol": 1e-8,
                "maxfev": _FIT_MAXFEV,
                "maxiter": _FIT_MAXFEV,
            },
        )

    p_k0 = (hist.total_actions - hist.n) / hist.total_actions
    lam0 = -math.log(p_k0) if p_k0 > 0.0 else 1.0
    runs = [search([math.log(lam0), 0.0])]

    # nesting guard: the b -> 0 profile reproduces the geometric fit, so a
    # result below it means the search stalled; re-polish from the boundary.
    geometric_ll = (
        float((cs * ((xs - 1.0) * math.log(p_k0) + math.log1p(-p_k0))).sum())
        if 0.0 < p_k0 < 1.0
        else -np.inf
    )
    if -runs[0].fun < geometric_ll - 1e-6:
        runs.append(search([math.log(lam0), -14.0]))  # b ~ 1e-6

    best = min(runs, key=lambda r: r.fun)
    if not best.success:
        raise NonConvergence(
            sum(r.nfev for r in runs), tuple(best.x), float(best.fun)
        )

    u, v = best.x
    return AdjustedModel(math.exp(u), 1.0 / (1.0 + math.exp(-v)))
