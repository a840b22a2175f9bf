import math

import numpy as np
import pytest

from posschain.errors import AbsorptionTimeout, DomainError
from posschain.events import EventKind
from posschain.markov import AutomatonSpec, SimpleModel, evolve, fit_simple
from posschain.segmenter import histogram, segment
from posschain.sim import (
    ChainSamples,
    SimConfig,
    sample_chain,
    sample_pmf,
    sample_to_histogram,
    samples_to_events,
    samples_to_possessions,
)

ROW1 = SimpleModel(0.794, 0.017, 0.189)


def divided_ball_spec() -> AutomatonSpec:
    """Five-state contested-ball chain; probabilities are test fixtures."""
    return AutomatonSpec(
        state_names=("Recovery", "Keep", "Divided", "Loss", "Shot"),
        transition=[
            [0.0, 0.9, 0.1, 0.0, 0.0],
            [0.0, 0.7, 0.08, 0.2, 0.02],
            [0.0, 0.6, 0.0, 0.4, 0.0],
            [0.0, 0.0, 0.0, 1.0, 0.0],
            [0.0, 0.0, 0.0, 0.0, 1.0],
        ],
        initial_distribution=[1.0, 0.0, 0.0, 0.0, 0.0],
        absorbing={"Loss", "Shot"},
    )


class TestConfig:
    def test_validation(self):
        with pytest.raises(DomainError):
            SimConfig(seed=-1, n_possessions=10)
        with pytest.raises(DomainError):
            SimConfig(seed=2**64, n_possessions=10)
        with pytest.raises(DomainError):
            SimConfig(seed=0, n_possessions=0)
        with pytest.raises(DomainError):
            SimConfig(seed=0, n_possessions=1, max_steps=0)


class TestDeterminism:
    def test_identical_runs(self):
        spec = ROW1.to_automaton()
        cfg = SimConfig(seed=77, n_possessions=50_000)
        a = sample_chain(spec, cfg)
        b = sample_chain(spec, cfg)
        assert np.array_equal(a.lengths, b.lengths)
        assert np.array_equal(a.outcome_index, b.outcome_index)

    def test_seed_changes_output(self):
        spec = ROW1.to_automaton()
        a = sample_chain(spec, SimConfig(seed=1, n_possessions=10_000))
        b = sample_chain(spec, SimConfig(seed=2, n_possessions=10_000))
        assert not np.array_equal(a.lengths, b.lengths)

    @pytest.mark.parametrize("workers", [2, 3, 7])
    def test_worker_count_irrelevant(self, workers):
        spec = divided_ball_spec()
        cfg = SimConfig(seed=5150, n_possessions=30_001)
        serial = sample_chain(spec, cfg, workers=1)
        chunked = sample_chain(spec, cfg, workers=workers)
        assert np.array_equal(serial.lengths, chunked.lengths)
        assert np.array_equal(serial.outcome_index, chunked.outcome_index)

    def test_histogram_determinism(self):
        spec = ROW1.to_automaton()
        cfg = SimConfig(seed=9, n_possessions=20_000)
        assert sample_to_histogram(spec, cfg) == sample_to_histogram(spec, cfg)


class TestSampling:
    def test_immediate_absorption(self):
        spec = AutomatonSpec(
            ("Keep", "Loss"),
            [[0.0, 1.0], [0.0, 1.0]],
            [1.0, 0.0],
            {"Loss"},
        )
        samples = sample_chain(spec, SimConfig(seed=4, n_possessions=1_000))
        assert np.all(samples.lengths == 1)
        assert samples.outcome_names() == ["Loss"] * 1_000

    def test_single_sample_histogram(self):
        hist = sample_to_histogram(ROW1.to_automaton(), SimConfig(seed=1, n_possessions=1))
        assert hist.n == 1

    def test_geometric_mean_within_3_sigma(self):
        n = 200_000
        samples = sample_chain(ROW1.to_automaton(), SimConfig(seed=31, n_possessions=n))
        mean = samples.lengths.mean()
        expect = 1.0 / 0.206
        sigma = math.sqrt(0.794) / 0.206 / math.sqrt(n)
        assert abs(mean - expect) < 3 * sigma

    def test_divided_ball_split_matches_matrix_power_oracle(self):
        spec = divided_ball_spec()
        n = 200_000
        samples = sample_chain(spec, SimConfig(seed=8, n_possessions=n))
        occupancy = evolve(spec, None, 10_000)  # fully absorbed by then
        p_shot = occupancy[spec.state_index("Shot")]
        emp_shot = (samples.outcome_index == spec.state_index("Shot")).mean()
        sigma = math.sqrt(p_shot * (1 - p_shot) / n)
        assert abs(emp_shot - p_shot) < 3 * sigma

    def test_pmf_agreement_bands(self):
        n = 200_000
        hist = sample_to_histogram(ROW1.to_automaton(), SimConfig(seed=123, n_possessions=n))
        for x in range(1, 11):
            p = float(ROW1.pmf(x))
            sigma = math.sqrt(p * (1 - p) / n)
            assert abs(hist.counts.get(x, 0) / n - p) < 5 * sigma

    def test_fit_round_trip(self):
        hist = sample_to_histogram(ROW1.to_automaton(), SimConfig(seed=6, n_possessions=200_000))
        m = fit_simple(hist)
        assert m.p_k == pytest.approx(0.794, abs=0.005)


class TestTimeout:
    def slow_spec(self):
        return AutomatonSpec(
            ("Keep", "Loss"),
            [[1.0 - 1e-9, 1e-9], [0.0, 1.0]],
            [1.0, 0.0],
            {"Loss"},
        )

    def test_flagged_not_dropped(self):
        samples = sample_chain(self.slow_spec(), SimConfig(seed=3, n_possessions=100, max_steps=50))
        assert len(samples) == 100
        assert samples.n_timed_out == 100
        assert np.all(samples.lengths == 50)
        assert np.all(samples.outcome_index == -1)
        assert samples.outcome_names() == [None] * 100

    def test_histogram_conversion_raises(self):
        with pytest.raises(AbsorptionTimeout) as exc:
            sample_to_histogram(self.slow_spec(), SimConfig(seed=3, n_possessions=10, max_steps=5))
        assert exc.value.count == 10

    def test_event_synthesis_raises(self):
        samples = sample_chain(self.slow_spec(), SimConfig(seed=3, n_possessions=10, max_steps=5))
        with pytest.raises(AbsorptionTimeout):
            samples_to_events(samples)


class TestPipelineRoundTrip:
    def test_events_reproduce_histogram(self):
        spec = ROW1.to_automaton()
        cfg = SimConfig(seed=17, n_possessions=5_000)
        samples = sample_chain(spec, cfg)
        direct = sample_to_histogram(spec, cfg)

        stream = samples_to_events(samples)
        rebuilt = histogram(segment(stream))
        assert rebuilt == direct

    def test_possession_records_alternate_teams(self):
        samples = sample_chain(ROW1.to_automaton(), SimConfig(seed=2, n_possessions=10))
        ps = samples_to_possessions(samples)
        assert [p.team_id for p in ps[:4]] == ["home", "away", "home", "away"]
        assert [p.length for p in ps] == [int(x) for x in samples.lengths]

    def test_event_stream_is_valid(self):
        from posschain.events import validate_stream

        samples = sample_chain(ROW1.to_automaton(), SimConfig(seed=2, n_possessions=500))
        assert validate_stream(samples_to_events(samples)).ok

    def test_shot_paths_end_with_shot_events(self):
        samples = sample_chain(ROW1.to_automaton(), SimConfig(seed=2, n_possessions=200))
        stream = samples_to_events(samples)
        n_shot_events = sum(1 for e in stream if e.kind is EventKind.Shot)
        assert n_shot_events == sum(1 for _, o in samples if o == "Shot")


class TestSamplePmf:
    def test_deterministic(self):
        a = sample_pmf(ROW1, 5_000, seed=55)
        b = sample_pmf(ROW1, 5_000, seed=55)
        assert np.array_equal(a, b)

    def test_mean_close_to_model(self):
        n = 200_000
        draws = sample_pmf(ROW1, n, seed=99)
        expect = 1.0 / 0.206
        sigma = math.sqrt(0.794) / 0.206 / math.sqrt(n)
        assert abs(draws.mean() - expect) < 5 * sigma

    def test_accepts_bare_callable(self):
        draws = sample_pmf(lambda x: np.where(np.asarray(x) == 1, 1.0, 0.0), 100, seed=1)
        assert np.all(draws == 1)

    def test_n_validated(self):
        with pytest.raises(DomainError):
            sample_pmf(ROW1, 0, seed=1)


class TestChainSamplesApi:
    def test_iteration_pairs(self):
        samples = sample_chain(ROW1.to_automaton(), SimConfig(seed=44, n_possessions=50))
        pairs = list(samples)
        assert len(pairs) == 50
        assert all(isinstance(length, int) and outcome in ("Loss", "Shot") for length, outcome in pairs)

    def test_len(self):
        samples = sample_chain(ROW1.to_automaton(), SimConfig(seed=44, n_possessions=7))
        assert len(samples) == 7
        assert isinstance(samples, ChainSamples)
