"""Cell-level simulator of ABR point-to-multipoint flow control.

ERICA explicit-rate switch allocation plus seven branch-point feedback
consolidation algorithms (A1-A7), driven by scenario files.
"""

from .cells import CELL_BITS, CELL_BYTES, CellKind, DataCell, RMCell, make_initial_frm
from .consolidation import AlgorithmId, ConsolidationActions, ConsolidationState
from .engine import Simulator, run
from .metrics import MetricsBundle
from .scenario import Scenario, ScenarioError, load_scenario, parse_scenario

__all__ = [
    "CELL_BITS",
    "CELL_BYTES",
    "CellKind",
    "DataCell",
    "RMCell",
    "make_initial_frm",
    "AlgorithmId",
    "ConsolidationActions",
    "ConsolidationState",
    "Simulator",
    "run",
    "MetricsBundle",
    "Scenario",
    "ScenarioError",
    "load_scenario",
    "parse_scenario",
]
