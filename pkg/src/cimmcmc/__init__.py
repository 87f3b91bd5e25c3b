"""Behavioral simulator of an SRAM compute-in-memory MCMC sampling macro."""

from .device import FlipModel, bfr_at
from .memory import GroupAddr, MacroArray
from .perf import EnergyConstants, PerfLedger, TimingConstants, energy_per_sample, throughput
from .sampler import RunConfig, SampleSet, run
from .stats import Histogram, chi_square_gof, tv_distance
from .targets import TargetPdf, flat_target, gmm_target, mgd_target, table_target
from .urng import MsxorRng, lambda_after

__version__ = "0.1.0"

__all__ = [
    "EnergyConstants", "FlipModel", "GroupAddr", "Histogram", "MacroArray", "MsxorRng",
    "PerfLedger", "RunConfig", "SampleSet", "TargetPdf", "TimingConstants", "bfr_at",
    "chi_square_gof", "energy_per_sample", "flat_target", "gmm_target", "lambda_after",
    "mgd_target", "run", "table_target", "throughput", "tv_distance",
]
