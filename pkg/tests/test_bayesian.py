import itertools
import math

import numpy as np
import pytest
from scipy import stats
from scipy.integrate import quad
from scipy.special import betainc as sp_betainc, betaln as sp_betaln

from rrseg.detectors import (
    BBlocksConfig,
    BcpConfig,
    BocdConfig,
    BocdState,
    bblocks_detect,
    bblocks_fitness,
    bblocks_partition,
    bcp_detect,
    bcp_posterior,
    bocd_detect,
    bocd_map_run_lengths,
    bocd_posterior,
    bocd_step,
    mbocd_detect,
    mbocd_run_lengths,
)
from rrseg.detectors._special import log_betainc, log_w_integral
from rrseg.series import RRSeries, zscore


# ---------------------------------------------------------------------------
# Bayesian Blocks
# ---------------------------------------------------------------------------


class TestBBlocksFitness:
    def test_zero_signal(self):
        assert bblocks_fitness([0.0, 0.0, 0.0]) == 0.0

    def test_hand_example(self):
        # (2+2)^2 / (4*2) = 2
        assert bblocks_fitness([2.0, 2.0]) == pytest.approx(2.0)

    def test_empty_errors(self):
        with pytest.raises(ValueError):
            bblocks_fitness([])


def brute_force_blocks(x, gamma):
    """Enumerate every partition of x into contiguous blocks."""
    n = len(x)
    best_val = -math.inf
    best = ()
    for mask in range(2 ** (n - 1)):
        cps = tuple(i + 1 for i in range(n - 1) if mask >> i & 1)
        bounds = [0, *cps, n]
        total = sum(bblocks_fitness(x[a:b]) for a, b in zip(bounds, bounds[1:]))
        total -= gamma * (len(bounds) - 1)
        if total > best_val:
            best_val = total
            best = cps
    return best, best_val


class TestBBlocksDetect:
    def test_constant_series_single_block(self):
        s = RRSeries(intervals=[1.0] * 30)
        assert bblocks_detect(s, BBlocksConfig(gamma=4.0)).indices == ()

    def test_matches_brute_force_enumeration(self):
        rng = np.random.default_rng(13)
        for trial in range(25):
            n = int(rng.integers(4, 13))
            x = rng.normal(0, 1, n) + np.repeat(rng.normal(0, 2, 2), math.ceil(n / 2))[:n]
            gamma = float(rng.uniform(0.5, 4.0))
            expected, _ = brute_force_blocks(x, gamma)
            assert bblocks_partition(x, gamma) == expected, f"trial {trial}"

    def test_total_fitness_beats_random_partitions(self):
        rng = np.random.default_rng(29)
        x = rng.normal(0, 1, 40) + np.repeat(rng.normal(0, 2, 4), 10)
        gamma = 2.0
        cps = bblocks_partition(x, gamma)

        def total(cset):
            bounds = [0, *cset, len(x)]
            return sum(bblocks_fitness(x[a:b]) for a, b in zip(bounds, bounds[1:])) - gamma * (len(bounds) - 1)

        opt = total(cps)
        for _ in range(100):
            k = int(rng.integers(0, 6))
            alt = tuple(sorted(rng.choice(np.arange(1, 40), size=k, replace=False).tolist()))
            assert total(alt) <= opt + 1e-9

    def test_step_detection(self, step_series):
        result = bblocks_detect(step_series, BBlocksConfig(gamma=4.0))
        assert 300 in result.indices


# ---------------------------------------------------------------------------
# BCP
# ---------------------------------------------------------------------------


def mpmath_log_betainc(a, b, x):
    """High-precision log I_x(a,b) via arbitrary-precision quadrature.

    Always integrates the tail that excludes the density peak (boundary
    layers only at the panel ends, where the quadrature clusters nodes);
    the other side follows from the complement.
    """
    import mpmath

    with mpmath.workdps(60):
        try:
            v = mpmath.betainc(mpmath.mpf(a), mpmath.mpf(b), 0, mpmath.mpf(x), regularized=True)
            return float(mpmath.log(v))
        except (ValueError, ZeroDivisionError):
            pass  # series failed to converge; integrate the tail directly
        a_, b_, x_ = mpmath.mpf(a), mpmath.mpf(b), mpmath.mpf(x)
        peak = (a_ - 1) / (a_ + b_ - 2) if a_ + b_ > 2 else mpmath.mpf("0.5")
        peak = min(max(peak, mpmath.mpf(0)), mpmath.mpf(1))
        f = lambda t: t ** (a_ - 1) * (1 - t) ** (b_ - 1)
        lbeta = mpmath.log(mpmath.beta(a_, b_))
        if x_ <= peak:
            pts = {mpmath.mpf(0), x_}
            for k in range(1, 10):
                pts.add(x_ * (1 - mpmath.mpf(10) ** (-k)))
                pts.add(x_ * mpmath.mpf(10) ** (-k))
            num = mpmath.quad(f, sorted(pts))
            return float(mpmath.log(num) - lbeta)
        # complement via the swapped-parameter direct integral:
        # 1 - I_x(a,b) = I_{1-x}(b,a), whose argument is below its peak here
        comp_log = mpmath_log_betainc(float(b), float(a), float(1 - x_))
        return float(mpmath.log1p(-mpmath.exp(mpmath.mpf(comp_log))))


class TestSpecialFunctions:
    def test_log_betainc_against_high_precision_oracle(self):
        cases = []
        for a in [0.5, 1.0, 2.5, 37.0, 236.0, 1500.0]:
            for b in [0.5, 1.0, 5.0, 118.0, 6000.0]:
                for x in [1e-6, 0.01, 0.3, 0.5, 0.9, 0.999]:
                    cases.append((a, b, x))
        for a, b, x in cases:
            mine = log_betainc(a, b, x)
            ref = mpmath_log_betainc(a, b, x)
            assert mine == pytest.approx(ref, rel=1e-7, abs=1e-8), (a, b, x)

    def test_log_betainc_underflow_regime(self):
        # scipy underflows to exactly 0 here; the log-space value stays accurate
        a, b, x = 14000.0, 236.0, 0.9
        assert sp_betainc(a, b, x) == 0.0
        ref = mpmath_log_betainc(a, b, x)
        assert log_betainc(a, b, x) == pytest.approx(ref, rel=1e-8)

    def test_log_w_integral_against_quadrature(self):
        cases = [
            (0.0, 5.0, 3.0, 0.2, 5.5),
            (0.5, 5.0, 3.0, 0.2, 5.5),
            (1.0, 1.0, 10.0, 1.0, 6.0),
            (2.5, 8.0, 0.5, 0.3, 10.0),
            (0.0, 2.0, 1e-18, 0.2, 5.5),
            (3.0, 10.0, 4.0, 0.7, 20.0),
            (0.5, 0.01, 5.0, 0.5, 8.0),
            (4.5, 2.0, 7.0, 0.9, 30.0),
        ]
        for a, w_ss, b_ss, w0, c in cases:
            ref = quad(lambda w: w**a * (w_ss + b_ss * w) ** (-c), 0, w0, limit=400)[0]
            assert log_w_integral(a, w_ss, b_ss, w0, c) == pytest.approx(math.log(ref), rel=1e-6), (a, w_ss, b_ss)


def bcp_enumeration_posterior(x, w0, p0):
    """Exact posterior change probabilities by summing over all partitions.

    Independent of the Gibbs path: the p-integral uses scipy's regularized
    incomplete beta, the w-integral adaptive quadrature.
    """
    x = np.asarray(x, dtype=np.float64)
    n = x.size
    c = 0.5 * (n - 1)
    xbar = x.mean()

    def p_integral(b):
        # int_0^p0 p^(b-1) (1-p)^(n-b) dp
        return math.exp(sp_betaln(b, n - b + 1)) * sp_betainc(b, n - b + 1, p0)

    def w_integral(b, w_ss, b_ss):
        a = 0.5 * (b - 1)
        val = quad(lambda w: w**a * max(w_ss + b_ss * w, 1e-300) ** (-c), 0, w0, limit=200)[0]
        return val

    total = 0.0
    change_mass = np.zeros(n - 1)
    for mask in range(2 ** (n - 1)):
        cps = [i + 1 for i in range(n - 1) if mask >> i & 1]
        bounds = [0, *cps, n]
        w_ss = 0.0
        b_ss = 0.0
        for lo, hi in zip(bounds, bounds[1:]):
            seg = x[lo:hi]
            w_ss += float(((seg - seg.mean()) ** 2).sum())
            b_ss += (hi - lo) * (seg.mean() - xbar) ** 2
        b = len(bounds) - 1
        weight = p_integral(b) * w_integral(b, w_ss, b_ss)
        total += weight
        for i in cps:
            change_mass[i - 1] += weight
    return change_mass / total


class TestBcp:
    def test_constant_series_no_changepoints(self):
        s = RRSeries(intervals=[1.0] * 30)
        result = bcp_detect(s, BcpConfig(cutoff=0.6, burn_in=50, samples=200))
        assert result.indices == ()

    def test_degenerate_priors_detect_nothing(self):
        rng = np.random.default_rng(0)
        s = RRSeries(intervals=rng.uniform(0.5, 1.5, 20))
        assert bcp_posterior(s, BcpConfig(w0=0.0, p0=0.3)).max() == 0.0
        assert bcp_posterior(s, BcpConfig(w0=0.2, p0=0.0)).max() == 0.0

    def test_single_step_posterior_concentrates(self):
        rng = np.random.default_rng(1)
        x = np.concatenate([rng.normal(0.7, 0.01, 40), rng.normal(1.3, 0.01, 40)])
        s = RRSeries(intervals=x)
        post = bcp_posterior(s, BcpConfig(burn_in=200, samples=1000, seed=3))
        assert post[40] > 0.9
        assert np.delete(post, 40).max() < 0.1

    def test_matches_exact_enumeration(self):
        rng = np.random.default_rng(104)
        for trial in range(4):
            n = int(rng.integers(8, 12))
            shift = np.zeros(n)
            shift[n // 2 :] = rng.uniform(1.0, 2.0)
            x = rng.normal(0, 0.4, n) + shift
            z = zscore(x)
            exact = bcp_enumeration_posterior(z, w0=0.2, p0=0.3)
            s = RRSeries(intervals=x + 3.0)  # keep positive; z-scoring inside matches
            est = bcp_posterior(s, BcpConfig(burn_in=500, samples=8000, seed=trial))
            np.testing.assert_allclose(est[1:], exact, atol=0.05)

    def test_seed_reproducibility(self):
        rng = np.random.default_rng(2)
        s = RRSeries(intervals=rng.uniform(0.5, 1.5, 60))
        cfg = BcpConfig(burn_in=50, samples=100, seed=9)
        np.testing.assert_array_equal(bcp_posterior(s, cfg), bcp_posterior(s, cfg))

    def test_scores_are_posteriors_at_indices(self, step_series):
        cfg = BcpConfig(burn_in=100, samples=400, seed=1)
        result = bcp_detect(step_series, cfg)
        post = bcp_posterior(step_series, cfg)
        assert result.indices  # the step must be found
        for i, sc in zip(result.indices, result.scores):
            assert sc == pytest.approx(post[i])
            assert sc > cfg.cutoff


# ---------------------------------------------------------------------------
# BOCD
# ---------------------------------------------------------------------------


def bocd_enumeration_matrix(x, config):
    """P(r_t | x_{1:t}) for every t by enumerating all reset sequences."""
    x = np.asarray(x, dtype=np.float64)
    n = x.size
    h = 1.0 / config.lam
    out = []
    for t in range(1, n + 1):
        mass = np.zeros(t + 1)
        for mask in range(2**t):
            params = (config.mu0, config.nu0, config.alpha0, config.beta0)
            weight = 1.0
            run = 0
            for s in range(t):
                mu, nu, al, be = params
                scale = math.sqrt(be * (nu + 1) / (al * nu))
                weight *= stats.t.pdf(x[s], df=2 * al, loc=mu, scale=scale)
                if mask >> s & 1:  # reset at step s+1
                    weight *= h
                    params = (config.mu0, config.nu0, config.alpha0, config.beta0)
                    run = 0
                else:
                    weight *= 1.0 - h
                    be2 = be + nu * (x[s] - mu) ** 2 / (2 * (nu + 1))
                    params = ((nu * mu + x[s]) / (nu + 1), nu + 1, al + 0.5, be2)
                    run += 1
            mass[run] += weight
        out.append(mass / mass.sum())
    return out


class TestBocdState:
    def test_first_step_mass_concentrates_on_growth(self):
        state = BocdState(BocdConfig(lam=1000.0))
        bocd_step(state, 0.3)
        post = state.posterior
        assert post.shape == (2,)
        assert post[1] == pytest.approx(1.0 - 1.0 / 1000.0)
        assert post[0] == pytest.approx(1.0 / 1000.0)

    def test_rows_normalized_and_sized(self):
        rng = np.random.default_rng(3)
        s = RRSeries(intervals=rng.uniform(0.5, 1.5, 40))
        rl = bocd_posterior(s, BocdConfig(lam=50.0))
        for t, row in enumerate(rl.steps):
            assert row.shape == (t + 2,)
            assert row.sum() == pytest.approx(1.0, abs=1e-9)
        assert rl.map_run_length.shape == (40,)

    def test_hyperparameter_update_formula(self):
        cfg = BocdConfig(lam=100.0, mu0=0.2, nu0=2.0, alpha0=1.5, beta0=0.7)
        state = BocdState(cfg)
        x = 0.9
        bocd_step(state, x)
        # run-length-1 parameters follow the conjugate update exactly
        assert state.mu[1] == pytest.approx((cfg.nu0 * cfg.mu0 + x) / (cfg.nu0 + 1))
        assert state.beta[1] == pytest.approx(cfg.beta0 + cfg.nu0 * (x - cfg.mu0) ** 2 / (2 * (cfg.nu0 + 1)))
        assert state.nu[1] == cfg.nu0 + 1
        assert state.alpha[1] == cfg.alpha0 + 0.5

    def test_posterior_matches_exhaustive_enumeration(self):
        rng = np.random.default_rng(7)
        for trial in range(6):
            n = int(rng.integers(5, 9))
            x = rng.normal(0, 1, n)
            x[n // 2 :] += rng.uniform(0, 3)
            cfg = BocdConfig(lam=float(rng.uniform(5, 200)))
            expected = bocd_enumeration_matrix(x, cfg)
            state = BocdState(cfg)
            for t in range(n):
                bocd_step(state, float(x[t]))
                np.testing.assert_allclose(state.posterior, expected[t], atol=1e-6)

    def test_config_mismatch_rejected(self):
        state = BocdState(BocdConfig(lam=10.0))
        with pytest.raises(ValueError):
            bocd_step(state, 0.1, BocdConfig(lam=20.0))


class TestBocdDetect:
    def test_constant_series_no_changepoints(self):
        s = RRSeries(intervals=[1.0] * 100)
        result = bocd_detect(s, BocdConfig(lam=100.0))
        assert result.indices == ()
        maps = bocd_map_run_lengths(s, BocdConfig(lam=100.0))
        assert np.all(np.diff(maps) == 1)  # grows monotonically

    def test_step_signal(self, step_series):
        result = bocd_detect(step_series, BocdConfig(lam=200.0))
        assert any(abs(i - 300) <= 3 for i in result.indices)

    def test_kernel_matches_state_path(self):
        rng = np.random.default_rng(11)
        x = rng.normal(1.0, 0.05, 300)
        x[150:] += 0.4
        s = RRSeries(intervals=x)
        cfg = BocdConfig(lam=120.0)
        maps_kernel = bocd_map_run_lengths(s, cfg)
        maps_state = bocd_posterior(s, cfg).map_run_length
        np.testing.assert_array_equal(maps_kernel, maps_state)

    def test_deterministic(self, step_series):
        cfg = BocdConfig(lam=500.0)
        assert bocd_detect(step_series, cfg).indices == bocd_detect(step_series, cfg).indices


class TestMbocd:
    def test_constant_series(self):
        s = RRSeries(intervals=[1.0] * 200)
        assert mbocd_detect(s, BocdConfig(lam=80.0)).indices == ()

    def test_run_length_structure(self):
        rng = np.random.default_rng(13)
        x = np.abs(rng.normal(1.0, 0.1, 500)) + 0.2
        x[250:] += 1.5
        s = RRSeries(intervals=x)
        trace, result = mbocd_run_lengths(s, BocdConfig(lam=80.0))
        diffs_ok = (trace[1:] == trace[:-1] + 1) | (trace[1:] == 0)
        assert diffs_ok.all()
        assert trace[0] in (0, 1)

    def test_step_detected_exactly(self, step_series):
        result = mbocd_detect(step_series, BocdConfig(lam=80.0))
        assert any(abs(i - 300) <= 3 for i in result.indices)

    def test_multistep_contrast_with_bocd(self):
        # several large shifts: the modified trace resets at each step while
        # the original MAP trace never reaches zero
        rng = np.random.default_rng(17)
        levels = [0.7, 1.3, 0.8, 1.4, 0.9]
        x = np.concatenate([rng.normal(m, 0.015, 120) for m in levels])
        truths = [120, 240, 360, 480]
        s = RRSeries(intervals=x, truth=truths)
        trace, result = mbocd_run_lengths(s, BocdConfig(lam=80.0))
        for t in truths:
            assert (trace[t : t + 4] == 0).any(), f"no reset near {t}"
        maps = bocd_map_run_lengths(s, BocdConfig(lam=1840.0))
        assert np.all(maps > 0)

    def test_deterministic(self, step_series):
        cfg = BocdConfig(lam=80.0)
        a = mbocd_detect(step_series, cfg)
        b = mbocd_detect(step_series, cfg)
        assert a.indices == b.indices and a.scores == b.scores
