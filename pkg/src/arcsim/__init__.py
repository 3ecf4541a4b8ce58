"""arcsim: deterministic discrete-event simulator of a near-cache RPC
accelerator (Arcalis) and its CPU-only baseline."""

from .config import RunConfig
from .metrics import ComparisonReport, StatsReport, compare
from .system import Machine, run_pair, run_simulation
from .workload import PRESETS, WorkloadMix, generate, preset

__version__ = "0.1.0"

__all__ = [
    "RunConfig", "StatsReport", "ComparisonReport", "compare",
    "Machine", "run_simulation", "run_pair",
    "WorkloadMix", "PRESETS", "preset", "generate",
    "__version__",
]
