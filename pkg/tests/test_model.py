import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy import stats

from voikit import builtin
from voikit.distributions import ParameterSpec
from voikit.errors import DataError, DomainError, ModelError, NoConjugateUpdate
from voikit.mcmc import random_walk_metropolis
from voikit.model import (DecisionModel, FutureDataset, Outcome, OutcomeData, StudyDesign,
                          conjugate_update, log_likelihood, metropolis_posterior,
                          posterior_means_batch, run_psa, simulate_batch, simulate_future_dataset,
                          summarize_batch, summarize_dataset)
from voikit.psa import default_strategies
from voikit.rng import stream


def beta22_model():
    def evaluate(v):
        p = v["p"]
        return np.column_stack([p, 1 - p]), np.zeros((len(p), 2))

    return DecisionModel("toy", (ParameterSpec("p", "beta", 2, 2),), default_strategies(2), evaluate)


def design(family, param="x", n=10, **kw):
    return StudyDesign((param,), (Outcome("y", family, param, **kw),), n)


def dataset(d, **stats_):
    return FutureDataset(d, {}, (OutcomeData(d.outcomes[0], d.sample_size, stats_),))


class TestParameterSpec:
    @pytest.mark.parametrize("family,a,b", [("beta", 0, 1), ("gamma", 1, -1), ("normal", 0, 0),
                                            ("invgamma", -1, 1), ("lognormal", 0, -1)])
    def test_invalid_hyperparameters(self, family, a, b):
        with pytest.raises(DataError):
            ParameterSpec("x", family, a, b)

    def test_unknown_family(self):
        with pytest.raises(DataError, match="unknown prior family"):
            ParameterSpec("x", "weibull", 1, 1)

    @pytest.mark.parametrize("spec", [ParameterSpec("x", "beta", 2, 5), ParameterSpec("x", "gamma", 3, 2),
                                      ParameterSpec("x", "normal", 1, 4), ParameterSpec("x", "invgamma", 5, 2),
                                      ParameterSpec("x", "lognormal", 0.1, 0.04)])
    def test_sample_moments(self, spec):
        x = spec.sample(stream(1, "moments"), 200_000)
        assert abs(x.mean() - spec.mean) < 4 * math.sqrt(spec.variance / len(x))
        assert abs(x.var() / spec.variance - 1) < 0.05

    def test_gamma_is_rate_parameterised(self):
        assert ParameterSpec("x", "gamma", 7, 3).mean == 7 / 3

    def test_aliases(self):
        assert ParameterSpec("x", "InverseGamma", 3, 1).family == "invgamma"

    @settings(max_examples=50, deadline=None)
    @given(st.floats(-5, 5))
    def test_unconstrained_round_trip(self, z):
        for spec in (ParameterSpec("x", "beta", 2, 2), ParameterSpec("x", "gamma", 2, 1)):
            assert spec.to_unconstrained(spec.from_unconstrained(z)) == pytest.approx(z, abs=1e-9)


class TestRunPsa:
    def test_deterministic(self):
        a, b = run_psa(beta22_model(), 10, 7), run_psa(beta22_model(), 10, 7)
        assert np.array_equal(a.params, b.params) and np.array_equal(a.effects, b.effects)

    @pytest.mark.parametrize("threads", [1, 4])
    def test_thread_count_irrelevant(self, threads):
        ref = run_psa(beta22_model(), 50, 3, threads=1)
        assert np.array_equal(run_psa(beta22_model(), 50, 3, threads=threads).params, ref.params)

    def test_beta_mean(self):
        ds = run_psa(beta22_model(), 10_000, 1)
        assert abs(ds.param("p").mean() - 0.5) < 0.02

    def test_too_few_rows(self):
        with pytest.raises(DataError, match="S ≥ 2"):
            run_psa(beta22_model(), 1, 1)

    def test_non_finite_output_names_draw(self):
        def evaluate(v):
            x = v["p"]
            with np.errstate(invalid="ignore"):
                return np.column_stack([x, np.log(x - 0.5)]), np.zeros((len(x), 2))

        m = DecisionModel("bad", (ParameterSpec("p", "beta", 2, 2),), default_strategies(2), evaluate)
        with pytest.raises(ModelError, match="draw"):
            run_psa(m, 200, 1)

    @pytest.mark.parametrize("name", sorted(builtin.MODELS))
    def test_column_means_converge(self, name):
        m = builtin.get_model(name)
        ds = run_psa(m, 4000, 2)
        for j, p in enumerate(m.parameters):
            col = ds.params[:, j]
            assert abs(col.mean() - p.mean) < 4 * math.sqrt(p.variance / len(col))

    def test_dr_tox_straight_line_recomputation(self):
        m = builtin.get_model("dr-tox")
        ds = run_psa(m, 1000, 1)
        trt = (6000.0, 16000.0, 10500.0)
        costs = np.zeros(3)
        for s in range(ds.n_samples):
            v = dict(zip(ds.parameter_names, ds.params[s]))
            for t in range(3):
                hr = 1.0 if t == 0 else v[f"hr.dr.t{t + 1}"]
                p = 1 - (1 - v["p.dr.t1"]) ** hr
                costs[t] += trt[t] + p * v["c.dr"] + v[f"p.tox.t{t + 1}"] * v["c.tox"]
        assert np.allclose(costs / ds.n_samples, ds.costs.mean(axis=0), rtol=1e-12)


class TestSimulate:
    def test_binomial_boundaries(self):
        d = design("binomial", n=25)
        assert simulate_future_dataset(d, [0.0], 1).data[0].stats["k"] == 0
        assert simulate_future_dataset(d, [1.0], 1).data[0].stats["k"] == 25

    def test_normal_mean(self):
        d = design("normal", n=10_000, variance=4.0)
        x = simulate_future_dataset(d, [3.0], 2, raw=True)
        assert abs(x.data[0].values.mean() - 3.0) < 0.08

    @pytest.mark.parametrize("family,phi", [("binomial", 1.2), ("binomial", -0.1), ("poisson", -1.0),
                                            ("exponential", 0.0)])
    def test_outside_support(self, family, phi):
        with pytest.raises(DomainError):
            simulate_future_dataset(design(family), [phi], 1)

    def test_deterministic_given_seed(self):
        d = design("poisson", n=40)
        a = simulate_future_dataset(d, [2.0], 5).data[0].stats
        assert a == simulate_future_dataset(d, [2.0], 5).data[0].stats

    def test_batch_rows_use_own_streams(self):
        d = design("binomial", n=30)
        phi = {"x": np.linspace(0.1, 0.9, 20)}
        a = simulate_batch(d, phi, 3, "t", threads=1)
        b = simulate_batch(d, phi, 3, "t", threads=4)
        assert np.array_equal(a.stats[0]["k"], b.stats[0]["k"])

    @pytest.mark.parametrize("family,kw,phi", [("normal", {"variance": 2.0}, 1.5),
                                               ("normal-known-mean", {"mean": 0.0}, 2.0),
                                               ("poisson", {"exposure": 2.0}, 3.0),
                                               ("exponential", {}, 0.5)])
    def test_statistics_match_raw_draws_in_distribution(self, family, kw, phi):
        d = design(family, n=20, **kw)
        fast = summarize_batch(simulate_batch(d, {"x": np.full(4000, phi)}, 1, "a"))[:, 0]
        slow = np.array([summarize_dataset(d, simulate_future_dataset(d, [phi], s, raw=True)).values[0]
                         for s in range(800)])
        assert stats.ks_2samp(fast, slow).pvalue > 1e-3


class TestSummaries:
    def test_binomial(self):
        d = design("binomial", n=10)
        assert summarize_dataset(d, dataset(d, k=3.0)).values == (0.3,)

    def test_normal(self):
        d = design("normal", n=3, variance=1.0)
        assert summarize_dataset(d, dataset(d, sum=6.0, sumsq=14.0)).values == (2.0,)

    def test_poisson(self):
        d = design("poisson", n=1, exposure=4.0)
        assert summarize_dataset(d, dataset(d, events=12.0)).values == (3.0,)

    def test_exponential_is_rate_scale(self):
        d = design("exponential", n=4)
        assert summarize_dataset(d, dataset(d, total=8.0)).values == (0.5,)

    def test_empty_dataset(self):
        d = design("binomial", n=0)
        with pytest.raises(DataError):
            summarize_dataset(d, dataset(d, k=0.0))


class TestLogLikelihood:
    def test_binomial_closed_form(self):
        d = design("binomial", n=2)
        assert log_likelihood(d, dataset(d, k=1.0), [0.5]) == pytest.approx(math.log(0.5))

    def test_zero_probability_is_minus_infinity(self):
        d = design("binomial", n=1)
        assert log_likelihood(d, dataset(d, k=1.0), [0.0]) == -math.inf

    def test_binomial_enumeration_sums_to_one(self):
        d = design("binomial", n=5)
        total = sum(math.exp(log_likelihood(d, dataset(d, k=float(k)), [0.37])) for k in range(6))
        assert total == pytest.approx(1.0, abs=1e-12)

    def test_simulated_frequencies_match(self):
        d = design("binomial", n=5)
        k = simulate_batch(d, {"x": np.full(100_000, 0.37)}, 2, "enum").stats[0]["k"]
        freq = np.bincount(k.astype(int), minlength=6) / len(k)
        probs = [math.exp(log_likelihood(d, dataset(d, k=float(j)), [0.37])) for j in range(6)]
        assert np.allclose(freq, probs, atol=0.005)

    def test_poisson_enumeration(self):
        d = design("poisson", n=2, exposure=1.5)
        total = sum(math.exp(log_likelihood(d, dataset(d, events=float(k)), [1.0])) for k in range(60))
        assert total == pytest.approx(1.0, abs=1e-12)

    def test_vectorised_over_phi(self):
        d = design("binomial", n=10)
        ll = log_likelihood(d, dataset(d, k=4.0), {"x": np.array([0.2, 0.4, 0.6])})
        assert ll.shape == (3,) and np.argmax(ll) == 1

    def test_dimension_mismatch(self):
        d = design("binomial", n=10)
        with pytest.raises(DataError):
            log_likelihood(d, dataset(d, k=1.0), [0.1, 0.2])


class TestConjugacy:
    def test_beta_binomial(self):
        d = design("binomial", "p", n=10)
        post = conjugate_update(ParameterSpec("p", "beta", 1, 1), d, dataset(d, k=3.0))
        assert (post.family, post.a, post.b) == ("beta", 4.0, 8.0)

    def test_normal_normal(self):
        d = design("normal", "m", n=1, variance=1.0)
        post = conjugate_update(ParameterSpec("m", "normal", 0, 1), d, dataset(d, sum=2.0, sumsq=4.0))
        assert (post.a, post.b) == (1.0, 0.5)

    def test_gamma_poisson(self):
        d = design("poisson", "r", n=1, exposure=2.0)
        post = conjugate_update(ParameterSpec("r", "gamma", 2, 3), d, dataset(d, events=5.0))
        assert (post.a, post.b) == (7.0, 5.0)

    def test_gamma_exponential(self):
        d = design("exponential", "r", n=4)
        post = conjugate_update(ParameterSpec("r", "gamma", 2, 3), d, dataset(d, total=6.0))
        assert (post.a, post.b) == (6.0, 9.0)

    def test_invgamma_known_mean(self):
        d = design("normal-known-mean", "v", n=4, mean=0.0)
        post = conjugate_update(ParameterSpec("v", "invgamma", 3, 2), d, dataset(d, ss=8.0))
        assert (post.a, post.b) == (5.0, 6.0)

    def test_empty_dataset_returns_prior(self):
        d = design("binomial", "p", n=0)
        prior = ParameterSpec("p", "beta", 2.5, 4.0)
        assert conjugate_update(prior, d, dataset(d, k=0.0)) == prior

    def test_unsupported_pair(self):
        d = design("binomial", "p", n=10)
        with pytest.raises(NoConjugateUpdate, match="no conjugate update"):
            conjugate_update(ParameterSpec("p", "lognormal", -1, 0.1), d, dataset(d, k=3.0))

    @settings(max_examples=100, deadline=None)
    @given(st.floats(0.5, 20), st.floats(0.5, 20), st.integers(2, 60), st.data())
    def test_posterior_mean_between_prior_and_data(self, a, b, n, data):
        k = data.draw(st.integers(1, n - 1))
        d = design("binomial", "p", n=n)
        post = conjugate_update(ParameterSpec("p", "beta", a, b), d, dataset(d, k=float(k)))
        lo, hi = sorted((a / (a + b), k / n))
        assert lo <= post.mean <= hi
        if lo < hi:
            assert lo < post.mean < hi

    def test_batch_posterior_means(self):
        d = design("binomial", "p", n=10)
        batch = simulate_batch(d, {"p": np.array([0.2, 0.5])}, 1, "pm")
        mu = posterior_means_batch(ParameterSpec("p", "beta", 1, 1), batch)
        assert np.allclose(mu, (1 + batch.stats[0]["k"]) / 12)


class TestMetropolis:
    def test_recovers_conjugate_posterior(self):
        d = design("binomial", "p", n=40)
        prior = ParameterSpec("p", "beta", 3, 7)
        draws = metropolis_posterior(prior, d, 40, [{"k": 12.0}], 5000, stream(1, "mh"))
        exact = ParameterSpec("p", "beta", 15, 35)
        assert abs(draws.mean() - exact.mean) < 0.01
        assert abs(draws.std() / math.sqrt(exact.variance) - 1) < 0.1

    def test_non_conjugate_pair(self):
        d = design("binomial", "p", n=50)
        prior = ParameterSpec("p", "lognormal", math.log(0.3), 0.2**2)
        draws = metropolis_posterior(prior, d, 50, [{"k": 20.0}], 2000, stream(2, "mh"))
        grid = np.linspace(1e-4, 1 - 1e-4, 20001)
        logp = prior.logpdf(grid) + stats.binom.logpmf(20, 50, grid)
        w = np.exp(logp - logp.max())
        assert abs(draws.mean() - (w @ grid) / w.sum()) < 0.01

    def test_deterministic_and_tuned(self):
        def target(z):
            return -0.5 * z * z

        a = random_walk_metropolis(target, 0.0, 1000, stream(3, "rw"), step=20.0)
        b = random_walk_metropolis(target, 0.0, 1000, stream(3, "rw"), step=20.0)
        assert np.array_equal(a.draws, b.draws)
        assert 0.15 < a.acceptance < 0.5


class TestBuiltin:
    @pytest.mark.parametrize("name", sorted(builtin.MODELS))
    def test_design_matches_model(self, name):
        m, d = builtin.get_model(name), builtin.get_design(name, 20)
        d.check_model(m)
        assert d.sample_size == 20 and name in builtin.DEFAULT_LAMBDA

    def test_unknown(self):
        with pytest.raises(DataError, match="unknown built-in model"):
            builtin.get_model("nope")

    def test_design_validation(self):
        with pytest.raises(DataError):
            StudyDesign(("a",), (Outcome("y", "binomial", "b"),), 10)
        with pytest.raises(DataError):
            Outcome("y", "normal", "a")
        with pytest.raises(DataError):
            StudyDesign((), (), 10)
