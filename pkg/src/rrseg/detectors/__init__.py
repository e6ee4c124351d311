"""Detector registry: uniform dispatch over the eight algorithms.

Algorithm ids: ``rmdm``, ``binseg``, ``pelt1``, ``pelt2``, ``bblocks``,
``bcp``, ``bocd``, ``mbocd``. Each id maps to a config dataclass, a detect
function, and defaults reproducing the benchmark-selected parameters.
"""

from __future__ import annotations

from dataclasses import asdict, dataclass, fields
from typing import Any, Callable

from ..series import ChangepointResult, RRSeries
from .bayesian import (
    BBlocksConfig,
    BcpConfig,
    BocdConfig,
    BocdState,
    RunLengthPosterior,
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
from .frequentist import (
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

__all__ = [
    "DetectorConfig",
    "ALGORITHM_IDS",
    "default_config",
    "detect",
    "config_to_dict",
    "config_from_dict",
    # re-exports
    "RmdmConfig",
    "CostPenaltyConfig",
    "BBlocksConfig",
    "BcpConfig",
    "BocdConfig",
    "BocdState",
    "RunLengthPosterior",
    "rmdm_t_statistic",
    "rmdm_significance",
    "rmdm_detect",
    "binseg_detect",
    "pelt_detect",
    "segment_cost",
    "segmentation_objective",
    "optimal_partition",
    "penalty_value",
    "bblocks_fitness",
    "bblocks_partition",
    "bblocks_detect",
    "bcp_posterior",
    "bcp_detect",
    "bocd_step",
    "bocd_posterior",
    "bocd_map_run_lengths",
    "bocd_detect",
    "mbocd_run_lengths",
    "mbocd_detect",
]


@dataclass(frozen=True)
class DetectorConfig:
    """Algorithm selection plus the full parameter set for one detection run."""

    algo: str
    params: Any

    def __post_init__(self) -> None:
        if self.algo not in _REGISTRY:
            raise ValueError(f"unknown algorithm {self.algo!r}; expected one of {ALGORITHM_IDS}")
        expected = _REGISTRY[self.algo].config_cls
        if not isinstance(self.params, expected):
            raise TypeError(f"{self.algo} expects params of type {expected.__name__}")


@dataclass(frozen=True)
class _AlgoSpec:
    config_cls: type
    run: Callable[[RRSeries, Any], ChangepointResult]
    defaults: Callable[[], Any]


def _pelt1_run(series: RRSeries, params: CostPenaltyConfig) -> ChangepointResult:
    return pelt_detect(series, params)


_REGISTRY: dict[str, _AlgoSpec] = {
    "rmdm": _AlgoSpec(RmdmConfig, rmdm_detect, lambda: RmdmConfig(p0=0.95, l0=7)),
    "binseg": _AlgoSpec(
        CostPenaltyConfig, binseg_detect, lambda: CostPenaltyConfig(cost="mean", penalty="hannan_quinn")
    ),
    "pelt1": _AlgoSpec(CostPenaltyConfig, _pelt1_run, lambda: CostPenaltyConfig(cost="mean", penalty="bic")),
    "pelt2": _AlgoSpec(CostPenaltyConfig, _pelt1_run, lambda: CostPenaltyConfig(cost="rms", penalty="bic")),
    "bblocks": _AlgoSpec(BBlocksConfig, bblocks_detect, lambda: BBlocksConfig(gamma=4.0)),
    "bcp": _AlgoSpec(BcpConfig, bcp_detect, lambda: BcpConfig(w0=0.2, p0=0.3, cutoff=0.6)),
    "bocd": _AlgoSpec(BocdConfig, bocd_detect, lambda: BocdConfig(lam=1840.0)),
    "mbocd": _AlgoSpec(BocdConfig, mbocd_detect, lambda: BocdConfig(lam=80.0)),
}

ALGORITHM_IDS = tuple(_REGISTRY)


def default_config(algo: str) -> DetectorConfig:
    """Benchmark-selected default parameters for one algorithm."""
    if algo not in _REGISTRY:
        raise ValueError(f"unknown algorithm {algo!r}; expected one of {ALGORITHM_IDS}")
    return DetectorConfig(algo=algo, params=_REGISTRY[algo].defaults())


def detect(series: RRSeries, config: DetectorConfig) -> ChangepointResult:
    """Run the configured detector; the result records the config used."""
    import dataclasses

    spec = _REGISTRY[config.algo]
    result = spec.run(series, config.params)
    if result.detector != config:
        result = dataclasses.replace(result, detector=config)
    return result


# JSON field name for BocdConfig.lam ("lambda" is reserved in Python)
_LAM_ALIAS = {"lam": "lambda"}


def config_to_dict(config: DetectorConfig) -> dict:
    params = asdict(config.params)
    if isinstance(config.params, BocdConfig):
        params = {_LAM_ALIAS.get(k, k): v for k, v in params.items()}
    return {"algo": config.algo, "params": params}


def config_from_dict(d: dict) -> DetectorConfig:
    algo = d["algo"]
    if algo not in _REGISTRY:
        raise ValueError(f"unknown algorithm {algo!r}; expected one of {ALGORITHM_IDS}")
    return DetectorConfig(algo=algo, params=params_from_dict(algo, d.get("params") or {}))


def params_from_dict(algo: str, params: dict) -> Any:
    """Build an algorithm's config dataclass from a (possibly partial) dict.

    Missing fields take the benchmark defaults; unknown fields are an error.
    Accepts ``"lambda"`` as an alias for the expected-run-length field of the
    BOCD family.
    """
    if algo not in _REGISTRY:
        raise ValueError(f"unknown algorithm {algo!r}; expected one of {ALGORITHM_IDS}")
    spec = _REGISTRY[algo]
    base = asdict(spec.defaults())
    cleaned = {}
    valid = {f.name for f in fields(spec.config_cls)}
    for key, value in params.items():
        name = "lam" if (key == "lambda" and spec.config_cls is BocdConfig) else key
        if name not in valid:
            raise ValueError(f"unknown parameter {key!r} for algorithm {algo!r}")
        cleaned[name] = value
    base.update(cleaned)
    return spec.config_cls(**base)
