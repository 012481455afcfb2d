"""Transmission switching and substation bus-split optimization.

The package solves minimum-cost topology control problems on a DC
network model: which lines to de-energize and which buses to split,
under an operation budget, so that dispatch cost falls while all
limits hold. Candidate plans can be verified against a full AC power
flow of the reconfigured network.
"""

from .acpf import FeasibilityReport, solve_nr, verify_decisions
from .caseio import PACKAGED_CASES, RawCase, load_case, parse_matpower, \
    parse_native, to_native, validate
from .dcopf import DcSolution, solve_dcopf, solve_dcpf
from .errors import GridsplitError
from .milp import MilpProblem, MilpSolution, SolveOptions, export_lp, \
    parse_lp, solve
from .network import BusSplit, LineSwitch, Network, TransferScenario, \
    apply_decisions, apply_equivalent, islands
from .topo import Mode, SolveResult, build_model, optimize

__version__ = "1.0.0"

__all__ = [
    "BusSplit", "DcSolution", "FeasibilityReport", "GridsplitError",
    "LineSwitch", "MilpProblem", "MilpSolution", "Mode", "Network",
    "PACKAGED_CASES", "RawCase", "SolveOptions", "SolveResult",
    "TransferScenario", "apply_decisions", "apply_equivalent",
    "build_model", "export_lp", "islands", "load_case", "optimize",
    "parse_lp", "parse_matpower", "parse_native", "solve", "solve_dcopf",
    "solve_dcpf", "solve_nr", "to_native", "validate", "verify_decisions",
    "__version__",
]
