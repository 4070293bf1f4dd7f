"""Config-driven experiment harness: datasets, training, sweeps and reports."""

from cpfree_ofdm.harness.config import CHAINS, RunConfig, load_config
from cpfree_ofdm.harness.sweep import MetricsRecord, run_sweep

__all__ = ["CHAINS", "MetricsRecord", "RunConfig", "load_config", "run_sweep"]
