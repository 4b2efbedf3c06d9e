"""Slot-level simulator for workload-based downlink scheduling under flow-level dynamics."""
from ._jit import JIT_ENABLED
from .core import (
    BUILTIN_LINKS,
    LINK_G,
    LINK_P,
    LINK_R,
    DiscretePmf,
    RandomStream,
    pmf_validate,
    workload_of,
)
from .engine import LongFlowSpec, Scenario, ShortClassSpec, Simulation, run
from .metrics import MetricsReport
from .policies import PolicyParams

__version__ = "0.1.0"
