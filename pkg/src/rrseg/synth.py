"""Synthetic RR tachograms with known ground-truth changepoints.

The generator simulates a hidden physiological state sequence whose dwell
times follow a power law, jumps the mean RR between states, superimposes
respiratory sinus arrhythmia (~0.25 Hz) and Mayer-wave (~0.1 Hz)
oscillations plus white jitter, and records every state transition as a
ground-truth changepoint. Ectopy and artifact injection perturb a series at
configurable per-beat probabilities without touching the ground truth.
"""

from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np

from .series import RRSeries

__all__ = ["SynthConfig", "generate", "generate_corpus", "inject_ectopy", "inject_noise", "sample_dwells"]


@dataclass(frozen=True)
class SynthConfig:
    """Generator parameters.

    ``dwell_exponent`` and ``dwell_min_beats`` parameterize the Pareto dwell
    distribution of the hidden state (in beats). ``state_means`` are the
    per-state mean RR values (seconds); transitions pick a different state
    uniformly. ``noise_prob``/``ectopy_prob`` apply the corresponding
    injection as a final step.
    """

    duration_hours: float = 7.0
    seed: int = 0
    state_means: tuple[float, ...] = (0.75, 0.84, 0.93, 1.02, 1.11, 1.20)
    dwell_exponent: float = 1.5
    dwell_min_beats: int = 20
    rsa_amplitude: float = 0.012
    rsa_freq: float = 0.25
    mayer_amplitude: float = 0.02
    mayer_freq: float = 0.1
    jitter_sd: float = 0.008
    jitter_df: float | None = None
    wander_sd: float = 0.045
    wander_tau_seconds: float = 300.0
    variability_mod_sd: float = 0.35
    variability_mod_tau_seconds: float = 150.0
    noise_prob: float = 0.0
    ectopy_prob: float = 0.0

    def __post_init__(self) -> None:
        if not self.duration_hours > 0:
            raise ValueError("duration_hours must be > 0")
        if len(self.state_means) < 1 or any(m <= 0 for m in self.state_means):
            raise ValueError("state_means must be positive")
        if self.dwell_exponent <= 0 or self.dwell_min_beats < 1:
            raise ValueError("dwell distribution requires exponent > 0 and min dwell >= 1")
        for name in ("rsa_amplitude", "mayer_amplitude", "jitter_sd", "wander_sd", "variability_mod_sd"):
            if getattr(self, name) < 0:
                raise ValueError(f"{name} must be >= 0")
        if self.wander_tau_seconds <= 0 or self.variability_mod_tau_seconds <= 0:
            raise ValueError("wander and variability time constants must be > 0")
        if self.jitter_df is not None and self.jitter_df <= 2:
            raise ValueError("jitter_df must exceed 2 (finite variance) or be None for Gaussian")
        for name in ("noise_prob", "ectopy_prob"):
            if not 0.0 <= getattr(self, name) <= 1.0:
                raise ValueError(f"{name} must lie in [0, 1]")


def sample_dwells(rng: np.random.Generator, n: int, exponent: float, min_beats: int) -> np.ndarray:
    """Draw n power-law dwell times (beats): floor of Pareto(exponent, min_beats)."""
    u = rng.random(n)
    raw = min_beats * u ** (-1.0 / exponent)
    return np.floor(raw).astype(np.int64)


def _ou_wander(rng: np.random.Generator, n: int, sd: float, tau_seconds: float, mean_rr: float) -> np.ndarray:
    """Stationary mean-reverting (AR(1)) wander sampled per beat."""
    if sd == 0.0:
        return np.zeros(n)
    from scipy.signal import lfilter

    a = float(np.exp(-mean_rr / tau_seconds))
    innov_sd = sd * float(np.sqrt(1.0 - a * a))
    eps = rng.normal(0.0, innov_sd, n)
    eps[0] = rng.normal(0.0, sd)  # start at the stationary distribution
    return lfilter([1.0], [1.0, -a], eps)


def generate(config: SynthConfig) -> RRSeries:
    """Simulate one tachogram; bit-reproducible for a fixed config.

    The hidden state holds for a power-law dwell, then jumps to a different
    state; the beat at which a dwell ends is recorded in ``truth``. On top
    of the state means ride the two oscillatory bands, a slow mean-reverting
    very-low-frequency wander (time constant ``wander_tau_seconds``), and
    white jitter. The short-range components (oscillations plus jitter) are
    amplitude-modulated by a slow lognormal factor so the beat-to-beat
    variability itself wanders, as it does physiologically.
    """
    rng = np.random.default_rng(config.seed)
    target_seconds = config.duration_hours * 3600.0
    means = np.asarray(config.state_means, dtype=np.float64)
    n_states = means.size

    # conservative beat budget: shortest-mean beats plus slack
    budget = int(target_seconds / means.min()) + config.dwell_min_beats + 8

    state_per_beat = np.empty(budget, dtype=np.int64)
    truth: list[int] = []
    pos = 0
    state = int(rng.integers(n_states))
    while pos < budget:
        dwell = int(sample_dwells(rng, 1, config.dwell_exponent, config.dwell_min_beats)[0])
        end = min(pos + dwell, budget)
        state_per_beat[pos:end] = state
        pos = end
        if pos < budget:
            truth.append(pos)
            if n_states > 1:
                step = int(rng.integers(1, n_states))
                state = (state + step) % n_states
    base = means[state_per_beat]
    if config.jitter_sd == 0:
        jitter = 0.0
    elif config.jitter_df is None:
        jitter = rng.normal(0.0, config.jitter_sd, budget)
    else:
        # heavy-tailed beat-to-beat irregularity; scaled to unit variance
        df = config.jitter_df
        jitter = config.jitter_sd * rng.standard_t(df, budget) / np.sqrt(df / (df - 2.0))

    # oscillations ride on the cumulative time axis of the state means
    t_axis = np.concatenate([[0.0], np.cumsum(base)[:-1]])
    fast = config.rsa_amplitude * np.sin(2.0 * np.pi * config.rsa_freq * t_axis)
    fast += config.mayer_amplitude * np.sin(2.0 * np.pi * config.mayer_freq * t_axis)
    fast += jitter
    mean_rr = float(means.mean())
    if config.variability_mod_sd > 0:
        g = _ou_wander(rng, budget, config.variability_mod_sd, config.variability_mod_tau_seconds, mean_rr)
        fast = fast * np.exp(g - 0.5 * config.variability_mod_sd**2)
    wander = _ou_wander(rng, budget, config.wander_sd, config.wander_tau_seconds, mean_rr)

    intervals = np.maximum(base + fast + wander, 0.2)  # physiological floor
    cum = np.cumsum(intervals)
    n = int(np.searchsorted(cum, target_seconds)) + 1
    n = min(n, budget)
    intervals = intervals[:n]
    kept_truth = tuple(i for i in truth if 1 <= i <= n - 1)

    series = RRSeries(intervals=intervals, truth=kept_truth, subject_id=f"synth-{config.seed}")
    if config.ectopy_prob > 0:
        series = inject_ectopy(series, config.ectopy_prob, seed=rng.integers(2**63))
    if config.noise_prob > 0:
        series = inject_noise(series, config.noise_prob, seed=rng.integers(2**63))
    return series


def generate_corpus(config: SynthConfig, n: int, base_seed: int | None = None) -> list[RRSeries]:
    """n tachograms with seeds ``base_seed .. base_seed + n - 1``."""
    if n <= 0:
        raise ValueError("count must be positive")
    start = config.seed if base_seed is None else base_seed
    return [generate(replace(config, seed=start + k)) for k in range(n)]


def inject_ectopy(series: RRSeries, prob: float, seed: int | np.integer = 0) -> RRSeries:
    """Replace beats with short-long ectopic couplets, conserving elapsed time.

    Each selected beat i becomes an early ectopic interval (0.6 times the
    local mean RR) and beat i+1 absorbs the difference as a compensatory
    pause. Ground truth is unchanged.
    """
    if not 0.0 <= prob <= 1.0:
        raise ValueError("prob must lie in [0, 1]")
    if prob == 0.0 or series.n < 2:
        return series
    rng = np.random.default_rng(seed)
    x = series.intervals.copy()
    n = x.size
    hits = np.flatnonzero(rng.random(n - 1) < prob)  # beat n-1 has no pair
    half = 5
    local = np.convolve(series.intervals, np.ones(2 * half + 1) / (2 * half + 1), mode="same")
    prev_end = -2
    for i in hits:
        if i <= prev_end:  # couplets must not overlap
            continue
        pair = x[i] + x[i + 1]
        ect = 0.6 * local[i]
        if ect >= pair:
            continue
        x[i] = ect
        x[i + 1] = pair - ect
        prev_end = i + 1
    return series.replace(intervals=x)


def inject_noise(series: RRSeries, prob: float, seed: int | np.integer = 0) -> RRSeries:
    """Heavy-tailed detector artifacts: missed beats double an interval,
    spurious detections halve it; each selected beat picks one at random.
    Ground truth is unchanged."""
    if not 0.0 <= prob <= 1.0:
        raise ValueError("prob must lie in [0, 1]")
    if prob == 0.0:
        return series
    rng = np.random.default_rng(seed)
    x = series.intervals.copy()
    hits = rng.random(x.size) < prob
    double = rng.random(x.size) < 0.5
    x[hits & double] *= 2.0
    x[hits & ~double] *= 0.5
    return series.replace(intervals=x)
