"""DC power flow and the no-switching dispatch baseline."""

from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from . import milp, topo
from .errors import SingularSystem, UnbalancedInjection
from .network import Network, bbus, flow_matrix, islands

BALANCE_TOL = 1e-8


@dataclass(frozen=True)
class DcSolution:
    theta: np.ndarray                  # rad, per bus
    flows: np.ndarray                  # p.u., per line
    slack_injection_residual: float    # p.u. absorbed at reference buses


def solve_dcpf(net: Network, p: np.ndarray) -> DcSolution:
    """Solve B theta = p with the reference angle pinned to zero.

    Disconnected networks are solved per island, one reference each;
    injections must balance within each island.
    """
    p = np.asarray(p, dtype=float)
    B = bbus(net).tocsr()
    theta = np.zeros(net.n_bus)
    residual = 0.0
    for component in islands(net):
        buses = np.array(sorted(component))
        imbalance = float(p[buses].sum())
        if abs(imbalance) > BALANCE_TOL:
            raise UnbalancedInjection(
                f"island {buses[0]}...: net injection {imbalance:.3e}")
        residual += imbalance
        ref = net.reference_bus if net.reference_bus in component else buses[0]
        keep = buses[buses != ref]
        if keep.size:
            sub = B[keep][:, keep]
            try:
                sol = spla.spsolve(sub.tocsc(), p[keep])
            except RuntimeError as exc:
                raise SingularSystem(str(exc)) from None
            if not np.all(np.isfinite(sol)):
                raise SingularSystem("singular reduced susceptance matrix")
            theta[keep] = sol
    flows = flow_matrix(net) @ theta
    return DcSolution(theta, flows, residual)


def solve_dcopf(net: Network,
                dtheta_max: float = topo.DEFAULT_DTHETA_MAX) -> topo.SolveResult:
    """Minimum-cost dispatch with all lines in service (the s = 0
    benchmark). A pure LP: the switching model with every line fixed
    closed."""
    problem = topo.build_model(net, 0, topo.Mode.NO_SWITCH, dtheta_max)
    lp = milp.lp_solve(problem)
    if lp.status != "optimal":
        return topo.SolveResult(
            status=lp.status, objective=float("inf"),
            dispatch=np.zeros(net.n_bus), theta=np.zeros(net.n_bus),
            flows=np.zeros(net.n_line), decisions=(), gap=float("inf"))
    result = topo.decode(problem, lp.x, net, lp.objective)
    return replace(result, node_count=1, bound=lp.objective)
