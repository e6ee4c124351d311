import itertools
import math

import numpy as np
import pytest
from scipy import stats

from rrseg.detectors import (
    CostPenaltyConfig,
    RmdmConfig,
    binseg_detect,
    optimal_partition,
    pelt_detect,
    penalty_value,
    rmdm_detect,
    rmdm_significance,
    rmdm_t_statistic,
    segment_cost,
    segmentation_objective,
)
from rrseg.detectors.frequentist import _CostModel, _pelt_core
from rrseg.series import RRSeries, zscore


class TestSegmentCost:
    def test_constant_mean_cost_zero(self):
        assert segment_cost([3.0, 3.0, 3.0], "mean") == pytest.approx(0.0)

    def test_perfect_line_zero_residual(self):
        assert segment_cost([0.0, 1.0, 2.0, 3.0], "linear") == pytest.approx(0.0, abs=1e-12)

    def test_mean_cost_hand_oracle(self):
        # [1,2,4,8]: mean 3.75, squared deviations 7.5625+3.0625+0.0625+18.0625
        assert segment_cost([1, 2, 4, 8], "mean") == pytest.approx(28.75)

    def test_rms_and_variance_definitions(self):
        x = np.array([0.5, -1.0, 2.0, 0.25])
        assert segment_cost(x, "rms") == pytest.approx(len(x) * math.log((x**2).mean()))
        assert segment_cost(x, "mean_and_variance") == pytest.approx(len(x) * math.log(x.var()))

    def test_length_requirements(self):
        with pytest.raises(ValueError):
            segment_cost([1.0, 2.0], "linear")
        with pytest.raises(ValueError):
            segment_cost([1.0], "mean_and_variance")
        with pytest.raises(ValueError):
            segment_cost([], "mean")

    @pytest.mark.parametrize("kind", ["mean", "mean_and_variance", "rms", "linear"])
    def test_prefix_model_matches_scalar_costs(self, kind):
        rng = np.random.default_rng(7)
        x = rng.normal(0, 1, 60)
        model = _CostModel(x, kind)
        for _ in range(40):
            a = int(rng.integers(0, 50))
            b = int(rng.integers(a + model.min_len, min(a + model.min_len + 10, 61)))
            assert float(model.cost(a, b)) == pytest.approx(segment_cost(x[a:b], kind), rel=1e-9, abs=1e-9)


class TestPenalties:
    def test_formulas(self):
        n = 1000
        assert penalty_value("aic", 2, n) == 4.0
        assert penalty_value("bic", 1, n) == pytest.approx(math.log(1000))
        assert penalty_value("hannan_quinn", 2, n) == pytest.approx(4 * math.log(math.log(1000)))
        assert penalty_value("manual", 1, n, beta=3.5) == 3.5

    def test_config_validation(self):
        with pytest.raises(ValueError):
            CostPenaltyConfig(cost="nope")
        with pytest.raises(ValueError):
            CostPenaltyConfig(penalty="manual")
        with pytest.raises(ValueError):
            CostPenaltyConfig(penalty="bic", beta=1.0)
        assert CostPenaltyConfig(cost="linear").num_params == 2


class TestRmdmStatistic:
    def test_identical_means_zero(self):
        assert rmdm_t_statistic([1, 1, 1], [1, 1, 1]) == 0.0

    def test_degenerate_distinct_means_infinite(self):
        assert rmdm_t_statistic([0, 0, 0], [1, 1, 1]) == math.inf

    def test_textbook_pooled_t_oracle(self):
        left, right = [0, 1, 0, 1], [2, 3, 2, 3]
        expected = abs(stats.ttest_ind(left, right, equal_var=True).statistic)
        assert rmdm_t_statistic(left, right) == pytest.approx(expected, rel=1e-12)

    def test_random_agreement_with_scipy(self):
        rng = np.random.default_rng(11)
        for _ in range(25):
            a = rng.normal(0, 1, int(rng.integers(2, 30)))
            b = rng.normal(0.5, 2, int(rng.integers(2, 30)))
            expected = abs(stats.ttest_ind(a, b, equal_var=True).statistic)
            assert rmdm_t_statistic(a, b) == pytest.approx(expected, rel=1e-10)

    def test_minimum_sizes(self):
        with pytest.raises(ValueError):
            rmdm_t_statistic([1.0], [1.0, 2.0])


class TestRmdmSignificance:
    def test_zero_t_gives_zero(self):
        assert rmdm_significance(0.0, 1000) == pytest.approx(0.0)

    def test_large_t_approaches_one(self):
        assert rmdm_significance(1e9, 1000) == pytest.approx(1.0, abs=1e-9)
        assert rmdm_significance(math.inf, 1000) == 1.0

    def test_monotone_in_t(self):
        vals = [rmdm_significance(t, 500) for t in np.linspace(0, 12, 40)]
        assert all(b >= a for a, b in zip(vals, vals[1:]))

    def test_against_high_precision_beta_oracle(self):
        # independent evaluation with mpmath's incomplete beta
        import mpmath

        n, t = 1000, 5.0
        delta = mpmath.mpf("0.40")
        nu = mpmath.mpf(n - 1)
        g = mpmath.mpf("4.19") * mpmath.log(n) - mpmath.mpf("11.54")
        x = nu / (nu + mpmath.mpf(t) ** 2)
        ix = mpmath.betainc(delta * nu, delta, 0, x, regularized=True)
        expected = float((1 - ix) ** g)
        assert rmdm_significance(t, n) == pytest.approx(expected, rel=1e-9)

    def test_too_short_series_errors(self):
        with pytest.raises(ValueError, match="too short"):
            rmdm_significance(3.0, 15)
        rmdm_significance(3.0, 16)  # first admissible length


class TestRmdmDetect:
    def test_constant_series_no_changepoints(self):
        s = RRSeries(intervals=[1.0] * 200)
        assert rmdm_detect(s, RmdmConfig(l0=7)).indices == ()

    def test_step_signal_matches_scan_oracle(self):
        rng = np.random.default_rng(5)
        x = np.concatenate([rng.normal(1.0, 0.1, 500), rng.normal(6.0, 0.1, 500)])
        s = RRSeries(intervals=x)
        result = rmdm_detect(s, RmdmConfig(l0=7))
        near = [i for i in result.indices if abs(i - 500) <= 3]
        assert len(near) == 1
        # oracle: exhaustive scan for the argmax-t split of the full series
        best_j = max(
            range(7, 994),
            key=lambda j: rmdm_t_statistic(x[:j], x[j:]),
        )
        assert near[0] == best_j

    def test_min_spacing_invariant(self):
        rng = np.random.default_rng(6)
        x = rng.normal(1.0, 0.3, 400) + np.repeat(rng.normal(0, 0.6, 8), 50)
        result = rmdm_detect(RRSeries(intervals=np.abs(x) + 0.2), RmdmConfig(l0=9))
        gaps = np.diff(result.indices)
        assert np.all(gaps >= 9)

    def test_too_short_series_warns(self):
        s = RRSeries(intervals=[1.0] * 10)
        result = rmdm_detect(s, RmdmConfig(l0=7))
        assert result.indices == ()
        assert result.warning is not None

    def test_deterministic(self, step_series):
        a = rmdm_detect(step_series, RmdmConfig())
        b = rmdm_detect(step_series, RmdmConfig())
        assert a.indices == b.indices and a.scores == b.scores


def brute_force_best_partition(x, config, max_cps=4):
    """Exhaustive search over all changepoint subsets (up to max_cps)."""
    model = _CostModel(np.asarray(x, dtype=np.float64), config.cost)
    beta = penalty_value(config.penalty, config.num_params, len(x), config.beta)
    m = model.min_len
    n = len(x)
    best_val = math.inf
    best_cps = []
    for k in range(0, max_cps + 1):
        for cps in itertools.combinations(range(1, n), k):
            bounds = [0, *cps, n]
            if any(b - a < m for a, b in zip(bounds, bounds[1:])):
                continue
            total = sum(float(model.cost(a, b)) for a, b in zip(bounds, bounds[1:])) + beta * k
            if total < best_val - 1e-12:
                best_val = total
                best_cps = list(cps)
    return best_cps, best_val


class TestBinseg:
    def test_constant_series_no_changepoints(self):
        s = RRSeries(intervals=[1.0] * 50)
        assert binseg_detect(s, CostPenaltyConfig(cost="mean", penalty="bic")).indices == ()

    def test_step_signal_single_split(self, step_series):
        result = binseg_detect(step_series, CostPenaltyConfig(cost="mean", penalty="bic"))
        assert result.indices == (300,)
        # oracle: exhaustive single-split scan on the standardized series
        z = zscore(step_series.intervals)
        model = _CostModel(z, "mean")
        taus = np.arange(1, 600)
        totals = model.cost(np.zeros_like(taus), taus) + model.cost(taus, np.full_like(taus, 600))
        assert result.indices[0] == int(taus[np.argmin(totals)])

    def test_short_series_errors(self):
        with pytest.raises(ValueError):
            binseg_detect(RRSeries(intervals=[1.0, 1.1, 0.9]))


class TestPelt:
    def test_constant_series_no_changepoints(self):
        s = RRSeries(intervals=[1.0] * 50)
        assert pelt_detect(s, CostPenaltyConfig(cost="mean", penalty="bic")).indices == ()

    def test_matches_unpruned_dp(self):
        rng = np.random.default_rng(17)
        configs = [
            CostPenaltyConfig(cost="mean", penalty="bic"),
            CostPenaltyConfig(cost="mean_and_variance", penalty="aic"),
            CostPenaltyConfig(cost="rms", penalty="hannan_quinn"),
            CostPenaltyConfig(cost="linear", penalty="bic"),
            CostPenaltyConfig(cost="mean", penalty="manual", beta=2.5),
        ]
        for trial in range(30):
            n = int(rng.integers(12, 120))
            x = rng.normal(0, 1, n) + np.repeat(
                rng.normal(0, 1.5, 4), math.ceil(n / 4)
            )[:n]
            cfg = configs[trial % len(configs)]
            model = _CostModel(x, cfg.cost)
            beta = penalty_value(cfg.penalty, cfg.num_params, n, cfg.beta)
            cps_pelt, f_pelt = _pelt_core(model, beta)
            cps_dp, f_dp = optimal_partition(x, cfg)
            assert cps_pelt == cps_dp, f"trial {trial}: {cps_pelt} != {cps_dp}"
            assert f_pelt == pytest.approx(f_dp, rel=1e-12)

    def test_matches_exhaustive_enumeration(self):
        rng = np.random.default_rng(23)
        cfg = CostPenaltyConfig(cost="mean", penalty="bic")
        for _ in range(10):
            n = 14
            x = rng.normal(0, 1, n) + np.repeat(rng.normal(0, 2.0, 2), 7)
            cps_brute, val_brute = brute_force_best_partition(x, cfg)
            cps_dp, val_dp = optimal_partition(x, cfg)
            assert val_dp == pytest.approx(val_brute, rel=1e-12)
            assert cps_dp == cps_brute

    def test_objective_consistency(self):
        rng = np.random.default_rng(31)
        x = rng.normal(0, 1, 150) + np.repeat(rng.normal(0, 2, 3), 50)
        cfg = CostPenaltyConfig(cost="mean", penalty="bic")
        cps, f_n = optimal_partition(x, cfg)
        assert segmentation_objective(x, cps, cfg) == pytest.approx(f_n, rel=1e-12)

    def test_pelt_objective_not_worse_than_binseg(self):
        rng = np.random.default_rng(37)
        for trial in range(15):
            n = int(rng.integers(30, 200))
            x = rng.normal(1.0, 0.1, n) + np.repeat(rng.normal(0, 0.3, 5), math.ceil(n / 5))[:n]
            s = RRSeries(intervals=np.abs(x) + 0.1)
            cfg = CostPenaltyConfig(cost="mean", penalty="bic")
            z = zscore(s.intervals)
            pelt_cost = segmentation_objective(z, pelt_detect(s, cfg).indices, cfg)
            bis_cost = segmentation_objective(z, binseg_detect(s, cfg).indices, cfg)
            assert pelt_cost <= bis_cost + 1e-9

    def test_deterministic(self, step_series):
        cfg = CostPenaltyConfig(cost="mean", penalty="bic")
        assert pelt_detect(step_series, cfg).indices == pelt_detect(step_series, cfg).indices
