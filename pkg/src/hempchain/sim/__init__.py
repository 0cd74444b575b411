"""Season simulator for the two-layer and single-chain deployments."""

from .chainmodel import (
    BatchQueue, ChainNetwork, ceiling_per_minute, measure_throughput, replay_online, saturated_network,
    windowed_rates,
)
from .config import (
    CHAIN_MODES,
    INTEGRITY_MODES,
    SINGLE_CHAIN,
    TWO_LAYER,
    WITH_BLOCKCHAIN,
    WITHOUT_BLOCKCHAIN,
    ConfigError,
    SimConfig,
)
from .metrics import (
    NoSamples,
    SeasonMetrics,
    export_metrics,
    export_safety,
    nearest_rank,
    summarize_rates,
    waiting_percentiles,
)
from .season import LotState, Season, run_replications, run_season

__all__ = [
    "BatchQueue", "ChainNetwork", "ceiling_per_minute", "measure_throughput", "replay_online",
    "saturated_network", "windowed_rates",
    "CHAIN_MODES", "INTEGRITY_MODES", "SINGLE_CHAIN", "TWO_LAYER", "WITH_BLOCKCHAIN", "WITHOUT_BLOCKCHAIN",
    "ConfigError", "SimConfig", "NoSamples", "SeasonMetrics", "export_metrics", "export_safety",
    "nearest_rank", "summarize_rates", "waiting_percentiles", "LotState", "Season",
    "run_replications", "run_season",
]
