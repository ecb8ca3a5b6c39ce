"""Entanglement-of-formation accounting for measurement and erasure of a quantum memory."""

from .entropy import (
    ThermoContext,
    canonical_state,
    relative_entropy,
    shannon_entropy,
    von_neumann_entropy,
)
from .eof import Bipartition, EofConfig, eof_dispatch, eof_optimize, eof_wootters
from .protocol import Scenario, run_scenario
from .qcore import CompositeSpace, MemoryLayout, partial_trace, purify

__version__ = "0.1.0"
