"""Possession-chain analytics.

Turns granular match event streams into possession chains, fits bottom-up
absorbing-chain models and classical baselines to the possession-length
distribution, evaluates shot-probability curves, and validates every
closed form against a deterministic Monte Carlo oracle.
"""

__version__ = "0.1.0"

from .classical import (
    NBDModel,
    ParetoModel,
    PoissonModel,
    fit_nbd,
    fit_pareto,
    fit_poisson,
)
from .errors import (
    AbsorptionTimeout,
    ClockRegression,
    DegenerateData,
    DomainError,
    InsufficientBins,
    InsufficientData,
    MalformedRecord,
    NonConvergence,
    ParseError,
    PosschainError,
    UnderdispersedData,
    UnknownEventKind,
    UnsegmentableStream,
)
from .events import (
    EventKind,
    EventStream,
    GameEvent,
    PositionRole,
    ValidationReport,
    load_events,
    parse_events,
    serialize_events,
    validate_stream,
)
from .markov import (
    AdjustedModel,
    AutomatonSpec,
    SimpleModel,
    evolve,
    fit_adjusted,
    fit_simple,
)
from .segmenter import (
    LengthHistogram,
    Outcome,
    Possession,
    group_by_team,
    histogram,
    load_possessions,
    possessions_to_csv,
    possessions_to_jsonl,
    segment,
)
from .serialize import (
    automaton_document,
    automaton_from_document,
    model_document,
    model_from_document,
)
from .sim import (
    ChainSamples,
    SimConfig,
    sample_chain,
    sample_pmf,
    sample_to_histogram,
    samples_to_events,
    samples_to_possessions,
)
from .stats import (
    ComparisonReport,
    GofBin,
    GofResult,
    aic,
    chi2_sf,
    compare_report,
    log_likelihood,
    pearson_gof,
)

__all__ = [name for name in dir() if not name.startswith("_")]
