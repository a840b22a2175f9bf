"""Monte Carlo sampling of absorbing chains; the oracle for closed forms.

Randomness is counter-based: every uniform draw is a pure hash of
``(seed, sample index, step index)``, so serial runs, chunked runs, and
thread-parallel runs produce bit-identical output. Each sample consumes
its own substream and never sees its neighbours.
"""

from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Iterator, Sequence

import numpy as np

from .errors import AbsorptionTimeout, DomainError
from .events import EventKind, EventStream, GameEvent
from .markov import SHOT, AutomatonSpec
from .segmenter import LengthHistogram, Outcome, Possession

_MASK64 = (1 << 64) - 1
_GAMMA = 0x9E3779B97F4A7C15
_STEP_GAMMA = 0xD1B54A32D192ED03

_U64_30 = np.uint64(30)
_U64_27 = np.uint64(27)
_U64_31 = np.uint64(31)
_U64_11 = np.uint64(11)
_MUL1 = np.uint64(0xBF58476D1CE4E5B9)
_MUL2 = np.uint64(0x94D049BB133111EB)
_INV_2_53 = 2.0**-53


def _mix64(z: np.ndarray) -> np.ndarray:
    """SplitMix64 finalizer, vectorized over uint64 arrays (wrapping mul)."""
    z = (z ^ (z >> _U64_30)) * _MUL1
    z = (z ^ (z >> _U64_27)) * _MUL2
    return z ^ (z >> _U64_31)


def _mix64_int(z: int) -> int:
    z &= _MASK64
    z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & _MASK64
    z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & _MASK64
    return z ^ (z >> 31)


def _substream_keys(seed: int, start: int, count: int) -> np.ndarray:
    """One well-mixed 64-bit key per sample index start..start+count-1."""
    seed_mixed = np.uint64(_mix64_int(seed + _GAMMA))
    idx = np.arange(start, start + count, dtype=np.uint64)
    return _mix64(seed_mixed ^ (idx * np.uint64(_GAMMA) + np.uint64(1)))


def _uniform(keys: np.ndarray, step: int) -> np.ndarray:
    """The step-th U[0,1) draw of each substream; a pure function of inputs."""
    offset = np.uint64((step * _STEP_GAMMA) & _MASK64)
    z = _mix64(keys + offset)
    return (z >> _U64_11).astype(np.float64) * _INV_2_53


@dataclass(frozen=True)
class SimConfig:
    """Simulation request: seed, sample count, and a step cap per sample."""

    seed: int
    n_possessions: int
    max_steps: int = 1_000_000

    def __post_init__(self):
        if not 0 <= self.seed < 2**64:
            raise DomainError(f"seed must be a 64-bit unsigned integer, got {self.seed}")
        if self.n_possessions < 1:
            raise DomainError(f"n_possessions must be >= 1, got {self.n_possessions}")
        if self.max_steps < 1:
            raise DomainError(f"max_steps must be >= 1, got {self.max_steps}")


@dataclass(frozen=True)
class ChainSamples:
    """Per-sample path lengths and absorbing outcomes.

    ``lengths[i]`` counts transitions until absorption; samples that hit
    the step cap are flagged in ``timed_out`` (their outcome index is -1)
    rather than dropped.
    """

    lengths: np.ndarray
    outcome_index: np.ndarray
    timed_out: np.ndarray
    state_names: tuple[str, ...]

    @property
    def n_timed_out(self) -> int:
        return int(self.timed_out.sum())

    def outcome_names(self) -> list[str | None]:
        return [None if i < 0 else self.state_names[i] for i in self.outcome_index]

    def __len__(self) -> int:
        return len(self.lengths)

    def __iter__(self) -> Iterator[tuple[int, str | None]]:
        for length, idx in zip(self.lengths, self.outcome_index):
            yield int(length), None if idx < 0 else self.state_names[int(idx)]


def _walk_chunk(
    cum_rows: np.ndarray,
    init_cdf: np.ndarray,
    absorbing: np.ndarray,
    keys: np.ndarray,
    max_steps: int,
    lengths_out: np.ndarray,
    outcome_out: np.ndarray,
) -> None:
    m = keys.size
    u0 = _uniform(keys, 0)
    state = (u0[:, None] < init_cdf).argmax(axis=1).astype(np.int64)

    done0 = absorbing[state]
    outcome_out[done0] = state[done0]  # absorbed before any transition: length 0

    alive = np.nonzero(~done0)[0]
    step = 1
    while alive.size and step <= max_steps:
        u = _uniform(keys[alive], step)
        nxt = (u[:, None] < cum_rows[state[alive]]).argmax(axis=1).astype(np.int64)
        state[alive] = nxt
        lengths_out[alive] = step
        absorbed = absorbing[nxt]
        hit = alive[absorbed]
        outcome_out[hit] = state[hit]
        alive = alive[~absorbed]
        step += 1
    # anything still alive timed out; outcome stays -1, length stays max_steps


def sample_chain(spec: AutomatonSpec, config: SimConfig, workers: int = 1) -> ChainSamples:
    """Draw possession paths from an absorbing chain.

    Identical ``(spec, config)`` always produce identical output, for any
    ``workers`` value: sample i's categorical draws are a function of
    ``(seed, i, step)`` only, and worker chunks own disjoint index ranges.
    """
    if workers < 1:
        raise DomainError(f"workers must be >= 1, got {workers}")
    n = config.n_possessions

    cum_rows = np.cumsum(spec.transition, axis=1)
    cum_rows[:, -1] = 1.0  # guard rounding so u in [0,1) always lands
    init_cdf = np.cumsum(spec.initial_distribution)
    init_cdf[-1] = 1.0
    absorbing = spec.absorbing_mask()

    lengths = np.zeros(n, dtype=np.int64)
    outcome = np.full(n, -1, dtype=np.int64)

    bounds = np.linspace(0, n, min(workers, n) + 1, dtype=np.int64)
    chunks = [(int(lo), int(hi)) for lo, hi in zip(bounds[:-1], bounds[1:]) if hi > lo]

    def run(chunk: tuple[int, int]) -> None:
        lo, hi = chunk
        keys = _substream_keys(config.seed, lo, hi - lo)
        _walk_chunk(
            cum_rows, init_cdf, absorbing, keys, config.max_steps,
            lengths[lo:hi], outcome[lo:hi],
        )

    if len(chunks) == 1:
        run(chunks[0])
    else:
        with ThreadPoolExecutor(max_workers=len(chunks)) as pool:
            list(pool.map(run, chunks))

    timed_out = outcome < 0
    lengths[timed_out] = config.max_steps
    return ChainSamples(lengths, outcome, timed_out, spec.state_names)


def sample_to_histogram(
    spec: AutomatonSpec, config: SimConfig, workers: int = 1
) -> LengthHistogram:
    """Sample and aggregate into a length histogram.

    Outcome is Shot iff the path absorbed in a state named ``"Shot"``.
    Raises :class:`AbsorptionTimeout` when any sample hit the step cap,
    since such paths have no outcome to bin.
    """
    samples = sample_chain(spec, config, workers=workers)
    if samples.n_timed_out:
        raise AbsorptionTimeout(samples.n_timed_out)
    shot_idx = samples.state_names.index(SHOT) if SHOT in samples.state_names else -2
    n_shot = int((samples.outcome_index == shot_idx).sum())
    return LengthHistogram.from_lengths(samples.lengths, n_shot=n_shot)


def sample_pmf(model, n: int, seed: int, tail_tol: float = 1e-12) -> np.ndarray:
    """Inverse-CDF draws of integer lengths from any PMF-bearing model.

    The support table extends until the remaining tail mass drops below
    ``tail_tol`` (capped at 2**23 lengths); draws use the same
    counter-based substreams as the chain sampler.
    """
    if n < 1:
        raise DomainError(f"n must be >= 1, got {n}")
    pmf = model.pmf if hasattr(model, "pmf") else model
    support = 1024
    cap = 1 << 23
    while True:
        xs = np.arange(1, support + 1)
        cdf = np.cumsum(np.asarray(pmf(xs), dtype=np.float64))
        if 1.0 - cdf[-1] <= tail_tol or support >= cap:
            break
        support *= 2
    cdf[-1] = 1.0
    u = _uniform(_substream_keys(seed, 0, n), 0)
    return (np.searchsorted(cdf, u, side="right") + 1).astype(np.int64)


def samples_to_possessions(
    samples: ChainSamples,
    match_id: str = "sim",
    team_ids: Sequence[str] = ("home", "away"),
) -> list[Possession]:
    """Chain samples as possession records (for the possession CSV)."""
    if samples.n_timed_out:
        raise AbsorptionTimeout(samples.n_timed_out)
    shot_name = SHOT
    out: list[Possession] = []
    for i, (length, outcome) in enumerate(samples):
        out.append(
            Possession(
                match_id=match_id,
                team_id=team_ids[i % len(team_ids)],
                length=length,
                outcome=Outcome.Shot if outcome == shot_name else Outcome.Loss,
            )
        )
    return out


def samples_to_events(
    samples: ChainSamples,
    match_id: str = "sim",
    team_ids: Sequence[str] = ("home", "away"),
) -> EventStream:
    """Synthesize an event stream whose segmentation reproduces the samples.

    A Shot path of length L becomes L-1 passes plus a shot; a Loss path
    becomes L passes plus a ball-out. Teams alternate per possession and
    the period clock ticks one second per event.
    """
    if samples.n_timed_out:
        raise AbsorptionTimeout(samples.n_timed_out)
    events: list[GameEvent] = []
    clock = 0.0
    for i, (length, outcome) in enumerate(samples):
        team = team_ids[i % len(team_ids)]
        is_shot = outcome == SHOT
        n_passes = length - 1 if is_shot else length
        for _ in range(n_passes):
            events.append(GameEvent(match_id, team, 1, clock, EventKind.Pass))
            clock += 1.0
        closer = EventKind.Shot if is_shot else EventKind.BallOut
        events.append(GameEvent(match_id, team, 1, clock, closer))
        clock += 1.0
    return EventStream(tuple(events))
