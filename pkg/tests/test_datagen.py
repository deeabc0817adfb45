import math

import numpy as np
import pytest

from datagen import (
    SIM_DATASETS,
    MeanFunction,
    ResponseKind,
    SimSpec,
    fht_binary,
    fht_binary_score,
    fht_multiclass,
    fht_thresholds,
    friedman1,
    friedman3,
    loss_for,
    make_rng,
    named_simspec,
    ridgeway,
    sample_features,
    sample_response,
    simulate,
)
from exceptions import ConfigError, DomainError
from losses import LossFamily


def _friedman1_ref(x):
    return (10 * math.sin(math.pi * x[0] * x[1]) + 20 * (x[2] - 0.5) ** 2
            + 10 * x[3] + 5 * x[4])


def _friedman3_ref(x):
    x1, x2, x3, x4 = x
    return 5 * math.atan((x2 * x3 - 1 - 1 / (x2 * x4)) / x1) + 0.2


def _ridgeway_ref(x):
    a = x[0]
    b = x[1] + 0.1
    return math.exp(2 * math.sin(3 * a + 5 * a * a) - 2 * math.sin(3 * b + 5 * b * b))


class TestMeanFunctions:
    def test_friedman1_worked_values(self):
        assert friedman1(np.full(10, 0.5)) == pytest.approx(5 * math.sqrt(2) + 7.5, rel=1e-14)
        x = np.zeros(10)
        x[2] = 0.5
        x[1] = 0.7
        assert friedman1(x) == pytest.approx(0.0, abs=1e-14)

    def test_friedman1_ignores_trailing_coordinates(self):
        x = np.full(10, 0.3)
        y = x.copy()
        y[6] = 0.9
        assert friedman1(x) == friedman1(y)

    def test_friedman3_worked_values(self):
        assert friedman3([100.0, 40 * math.pi, 1.0, 1.0]) == pytest.approx(4.67305, rel=1e-5)
        x2, x4 = 40 * math.pi, 1.0
        x3 = (1 + 1 / (x2 * x4)) / x2
        assert friedman3([50.0, x2, x3, x4]) == pytest.approx(0.2, abs=1e-12)

    def test_ridgeway_worked_values(self):
        assert ridgeway([0.5, 0.4]) == pytest.approx(1.0, rel=1e-15)
        assert ridgeway([0.0, 0.9]) == pytest.approx(0.138290, rel=1e-5)

    def test_out_of_range_inputs(self):
        with pytest.raises(DomainError):
            friedman1(np.full(10, 1.5))
        with pytest.raises(DomainError):
            friedman3([0.0, 200.0, 0.5, 2.0])
        with pytest.raises(DomainError):
            friedman3([10.0, 1.0, 0.5, 2.0])
        with pytest.raises(DomainError):
            ridgeway([-0.1, 0.5])
        with pytest.raises(DomainError):
            ridgeway(np.zeros(3))

    @pytest.mark.parametrize(
        "fn, mean_fn, ref",
        [
            (friedman1, MeanFunction.FRIEDMAN1, _friedman1_ref),
            (friedman3, MeanFunction.FRIEDMAN3, _friedman3_ref),
            (ridgeway, MeanFunction.RIDGEWAY, _ridgeway_ref),
        ],
    )
    def test_vectorised_matches_scalar_reference(self, fn, mean_fn, ref):
        x = sample_features(mean_fn, 1000, make_rng(1))
        expected = np.array([ref(row) for row in x])
        np.testing.assert_allclose(fn(x), expected, rtol=1e-12, atol=1e-12)

    def test_ridgeway_bounds(self):
        x = sample_features(MeanFunction.RIDGEWAY, 2000, make_rng(2))
        values = ridgeway(x)
        assert np.all(values >= math.exp(-4)) and np.all(values <= math.exp(4))


class TestFHT:
    def test_binary_score_at_origin(self):
        assert fht_binary_score(np.zeros(10))[0] == 0.0

    def test_binary_sign_variants_differ(self):
        x = make_rng(0).standard_normal((5, 10))
        assert not np.allclose(fht_binary_score(x), fht_binary_score(x, literal=True))

    def test_binary_is_deterministic_and_balanced(self):
        a = fht_binary(10000, seed=8)
        b = fht_binary(10000, seed=8)
        np.testing.assert_array_equal(a.features, b.features)
        np.testing.assert_array_equal(a.response, b.response)
        assert a.response.mean() == pytest.approx(0.5, abs=0.02)
        assert a.family is LossFamily.BINARY_LOGISTIC

    def test_multiclass_shares(self):
        data = fht_multiclass(10000, seed=9)
        shares = np.bincount(data.response.astype(int), minlength=5) / data.n_rows
        np.testing.assert_allclose(shares, 0.2, atol=0.03)
        again = fht_multiclass(10000, seed=9)
        np.testing.assert_array_equal(data.response, again.response)

    def test_multiclass_thresholds(self):
        t = fht_thresholds(5)
        assert t[0] == 0.0 and math.isinf(t[-1])
        assert np.all(np.diff(t) > 0)
        with pytest.raises(ConfigError):
            fht_multiclass(3, seed=0, num_classes=5)


class TestResponses:
    def test_tobit_censoring_fractions(self):
        data = simulate(SimSpec(mean_fn="f1", response="tobit", n=5000, seed=4))
        lo, hi = data.meta["y_lower"], data.meta["y_upper"]
        assert 0.30 <= np.mean(data.response == lo) <= 0.37
        assert 0.30 <= np.mean(data.response == hi) <= 0.37
        assert loss_for(data).y_lower == lo

    def test_poisson_mean(self):
        spec = SimSpec(response="poisson", n=10000, seed=5)
        data = sample_response(spec, np.full(10000, 2.0))
        assert 1.9 <= data.response.mean() <= 2.1

    def test_gamma_variance(self):
        spec = SimSpec(response="gamma", n=10000, seed=6)
        data = sample_response(spec, np.full(10000, 2.0))
        assert data.response.var() == pytest.approx(0.4, abs=0.05)

    def test_nonpositive_mean_rejected(self):
        spec = SimSpec(response="poisson", n=3, seed=0)
        with pytest.raises(DomainError):
            sample_response(spec, np.array([1.0, 0.0, 2.0]))

    def test_friedman3_poisson_redraws_nonpositive_means(self):
        data = simulate(named_simspec("poisson_f3", 2000, seed=3))
        assert data.n_features == 4
        assert np.all(friedman3(data.features) > 0)
        assert np.all(data.response == np.round(data.response))

    def test_mean_scale_uses_two_blocks(self):
        data = simulate(named_simspec("msr_r", 500, seed=2))
        assert data.n_features == 4
        assert data.family is LossFamily.MEAN_SCALE_GAUSSIAN
        assert loss_for(data).num_outputs == 2

    def test_simulation_is_reproducible(self):
        spec = named_simspec("gamma_f1", 300, seed=12)
        first = simulate(spec).to_frame()
        second = simulate(spec).to_frame()
        assert first.equals(second)
        other = simulate(named_simspec("gamma_f1", 300, seed=13)).to_frame()
        assert not first.equals(other)


def test_named_datasets():
    assert {"poisson_f1", "tobit_r", "msr_f3", "bin_classif_fht", "multi_classif_fht"} <= set(SIM_DATASETS)
    spec = named_simspec("multi_classif_fht", 100, seed=0)
    assert spec.response is ResponseKind.FHT_MULTICLASS
    assert spec.n_features == 10
    with pytest.raises(ConfigError):
        named_simspec("letter", 100, seed=0)
    with pytest.raises(ConfigError):
        SimSpec(n=0)
