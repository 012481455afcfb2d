"""Topology-optimization model: switching and bus-splitting as an MILP.

The model searches jointly over line switchings and bus splits under an
operation budget. Splits are encoded on the original bus set through the
reduced model of `network.apply_equivalent`: opening a line plus a
power transfer of the selected injection to the far endpoint. The
binary transfer selectors multiply the dispatch variable; those bilinear
products are linearized exactly with McCormick envelopes (exact because
one factor is binary).

Variable layout of a built problem, in order: theta (N), g (N, fixed 0
at buses without generation), f (L), z (L, binary closed/open), w
(6 per line: two ends x three transfer scenarios, binary), y (6 per
line, the linearized w*g products).
"""

from __future__ import annotations

import enum
import warnings
from dataclasses import dataclass, replace

import numpy as np

from . import milp
from .errors import AmbiguousDecision, EmptyNetwork, NumericalBreakdown
from .network import (
    BusSplit,
    LineSwitch,
    Network,
    TransferScenario,
    apply_decisions,
    islands,
)

DEFAULT_DTHETA_MAX = 0.6  # rad; single global angle-spread bound


class Mode(enum.Enum):
    NO_SWITCH = "none"
    LINE_ONLY = "line"
    BREAKER = "breaker"


@dataclass(frozen=True)
class TransferSelectors:
    """Support pattern of the power-transfer columns for one line end.

    For the end at bus `bus` of a line to `other`, moving load adds
    +d at `bus` and -d at `other` (columns 1 and 3); moving generation
    subtracts the product w*g at `bus` and adds it at `other`
    (columns 2 and 3).
    """

    bus: int
    other: int
    d_mask: tuple[int, int, int] = (1, 0, 1)
    g_mask: tuple[int, int, int] = (0, 1, 1)


def big_m(line, dtheta_max: float = DEFAULT_DTHETA_MAX) -> float:
    """Deactivation constant for the flow-definition rows of one line."""
    return line.b * dtheta_max


def mccormick_block(w_idx, y_idx, g_idx, g_min: float, g_max: float):
    """Envelope rows tying y_k to w_k * g, for three scenarios.

    Returns 12 rows (terms, rel, rhs). With w_k binary they are exact:
    w_k = 0 pins y_k to 0, w_k = 1 pins y_k to g.
    """
    rows = []
    for w, y in zip(w_idx, y_idx):
        rows.append(({y: 1.0, w: -g_min}, milp.GE, 0.0))
        rows.append(({y: 1.0, g_idx: -1.0, w: -g_max}, milp.GE, -g_max))
        rows.append(({y: 1.0, w: -g_max}, milp.LE, 0.0))
        rows.append(({y: 1.0, g_idx: -1.0, w: -g_min}, milp.LE, -g_min))
    return rows


def _end_buses(line) -> tuple[int, int]:
    return line.i, line.j


def build_model(net: Network, budget: int, mode: Mode = Mode.BREAKER,
                dtheta_max: float = DEFAULT_DTHETA_MAX) -> milp.MilpProblem:
    """Assemble the switching/splitting MILP for a budget of operations."""
    if net.n_bus == 0 or net.n_line == 0:
        raise EmptyNetwork("cannot build a model for an empty network")
    L = net.n_line
    N = net.n_bus
    if budget > L:
        warnings.warn(f"budget {budget} exceeds line count {L}; clamping")
        budget = L
    if mode is Mode.NO_SWITCH:
        budget = 0

    gen_at = {}
    for g in net.gens:
        gen_at[g.bus] = g
    cost = net.cost_vector()

    b = milp.ModelBuilder()
    for n in range(N):
        b.add_var(("theta", n), net.theta_min[n], net.theta_max[n])
    for n in range(N):
        g = gen_at.get(n)
        if g is None:
            b.add_var(("g", n), 0.0, 0.0)
        else:
            b.add_var(("g", n), g.g_min, g.g_max, cost=cost[n])
    for l, ln in enumerate(net.lines):
        b.add_var(("f", l), -ln.f_max, ln.f_max)
    for l in range(L):
        z_fixed = mode is Mode.NO_SWITCH
        b.add_var(("z", l), 1.0 if z_fixed else 0.0, 1.0, integer=True)

    def w_allowed(bus: int, k: int) -> bool:
        if mode is not Mode.BREAKER:
            return False
        has_load = net.loads[bus] > 0.0
        has_gen = bus in gen_at
        return {1: has_load, 2: has_gen, 3: has_load and has_gen}[k]

    for l, ln in enumerate(net.lines):
        for end, bus in enumerate(_end_buses(ln)):
            for k in (1, 2, 3):
                top = 1.0 if w_allowed(bus, k) else 0.0
                b.add_var(("w", l, end, k), 0.0, top, integer=True)
    for l, ln in enumerate(net.lines):
        for end, bus in enumerate(_end_buses(ln)):
            g = gen_at.get(bus)
            for k in (1, 2, 3):
                if g is None or not w_allowed(bus, k):
                    b.add_var(("y", l, end, k), 0.0, 0.0)
                else:
                    b.add_var(("y", l, end, k),
                              min(0.0, g.g_min), max(0.0, g.g_max))

    b.add_con({b[("theta", net.reference_bus)]: 1.0}, milp.EQ, 0.0)

    for l, ln in enumerate(net.lines):
        f = b[("f", l)]
        z = b[("z", l)]
        ti, tj = b[("theta", ln.i)], b[("theta", ln.j)]
        # flow limits gated by the line status
        b.add_con({f: 1.0, z: -ln.f_max}, milp.LE, 0.0)
        b.add_con({f: 1.0, z: ln.f_max}, milp.GE, 0.0)
        # flow definition, deactivated when the line opens
        m = big_m(ln, dtheta_max)
        b.add_con({ti: ln.b, tj: -ln.b, f: -1.0, z: m}, milp.LE, m)
        b.add_con({ti: ln.b, tj: -ln.b, f: -1.0, z: -m}, milp.GE, -m)

    b.add_con({b[("z", l)]: 1.0 for l in range(L)}, milp.GE, float(L - budget))

    def transfer_terms(l: int, ln, sign_bus: int) -> dict[int, float]:
        """Injection adjustment at `sign_bus` from both ends of line l."""
        terms: dict[int, float] = {}

        def accumulate(end: int, bus: int, other: int):
            sel = TransferSelectors(bus, other)
            sign = 1.0 if sign_bus == bus else -1.0
            for k in (1, 2, 3):
                if sel.d_mask[k - 1]:
                    w = b[("w", l, end, k)]
                    terms[w] = terms.get(w, 0.0) + sign * net.loads[bus]
                if sel.g_mask[k - 1]:
                    y = b[("y", l, end, k)]
                    terms[y] = terms.get(y, 0.0) - sign
        accumulate(0, ln.i, ln.j)
        accumulate(1, ln.j, ln.i)
        return terms

    if mode is Mode.BREAKER:
        for l, ln in enumerate(net.lines):
            # one transfer per opened line, none when it stays closed
            terms = {b[("w", l, end, k)]: 1.0
                     for end in (0, 1) for k in (1, 2, 3)}
            terms[b[("z", l)]] = 1.0
            b.add_con(terms, milp.LE, 1.0)
        for bus in range(N):
            terms = {}
            for l, ln in enumerate(net.lines):
                for end, end_bus in enumerate(_end_buses(ln)):
                    if end_bus == bus:
                        for k in (1, 2, 3):
                            terms[b[("w", l, end, k)]] = 1.0
            if terms:
                b.add_con(terms, milp.LE, 1.0)  # one split per substation

    # nodal balance with transfer adjustments
    for bus in range(N):
        terms = {b[("g", bus)]: -1.0}
        for l, ln in enumerate(net.lines):
            if ln.i == bus:
                terms[b[("f", l)]] = terms.get(b[("f", l)], 0.0) + 1.0
            if ln.j == bus:
                terms[b[("f", l)]] = terms.get(b[("f", l)], 0.0) - 1.0
        if mode is Mode.BREAKER:
            for l, ln in enumerate(net.lines):
                if bus in _end_buses(ln):
                    for var, coef in transfer_terms(l, ln, bus).items():
                        terms[var] = terms.get(var, 0.0) - coef
        b.add_con(terms, milp.EQ, -net.loads[bus])

    if mode is Mode.BREAKER:
        for l, ln in enumerate(net.lines):
            # transferred power rides the re-terminated line: cap it
            terms = transfer_terms(l, ln, ln.i)
            if terms:
                b.add_con(terms, milp.LE, ln.f_max)
                b.add_con(terms, milp.GE, -ln.f_max)
        for l, ln in enumerate(net.lines):
            for end, bus in enumerate(_end_buses(ln)):
                g = gen_at.get(bus)
                if g is None:
                    continue
                w_idx = [b[("w", l, end, k)] for k in (1, 2, 3)]
                y_idx = [b[("y", l, end, k)] for k in (1, 2, 3)]
                for terms, rel, rhs in mccormick_block(
                        w_idx, y_idx, b[("g", bus)], g.g_min, g.g_max):
                    b.add_con(terms, rel, rhs)

    return b.build()


@dataclass(frozen=True)
class SolveResult:
    status: str
    objective: float            # $/h
    dispatch: np.ndarray        # per-bus g, p.u.
    theta: np.ndarray           # rad
    flows: np.ndarray           # p.u.
    decisions: tuple
    gap: float = 0.0
    bound: float = float("nan")
    node_count: int = 0
    wall_time: float = 0.0
    n_islands: int = 1
    x: np.ndarray | None = None  # raw solver vector, for warm starts

    def to_dict(self, net: Network | None = None) -> dict:
        return {
            "status": self.status,
            "objective": self.objective,
            "gap": self.gap,
            "bound": self.bound,
            "node_count": self.node_count,
            "wall_time": self.wall_time,
            "n_islands": self.n_islands,
            "dispatch": [round(v, 12) for v in self.dispatch],
            "theta": [round(v, 12) for v in self.theta],
            "flows": [round(v, 12) for v in self.flows],
            "decisions": [describe_decision(d, net) for d in self.decisions],
        }


def describe_decision(d, net: Network | None = None) -> dict:
    if isinstance(d, LineSwitch):
        return {"kind": "line_switch", "line": d.line}
    return {"kind": "bus_split", "bus": d.bus, "line": d.line,
            "scenario": d.scenario.name.lower(),
            "bus_id": None if net is None else net.bus_ids[d.bus]}


def decode(problem: milp.MilpProblem, x: np.ndarray, net: Network,
           solver_objective: float | None = None) -> SolveResult:
    """Read a solver vector back into dispatch, flows and decisions."""
    N, L = net.n_bus, net.n_line
    idx = problem.index
    theta = np.array([x[idx[("theta", n)]] for n in range(N)])
    dispatch = np.array([x[idx[("g", n)]] for n in range(N)])
    flows = np.array([x[idx[("f", l)]] for l in range(L)])

    decisions = []
    for l in range(L):
        if x[idx[("z", l)]] > 0.5:
            continue
        active = [(end, k) for end in (0, 1) for k in (1, 2, 3)
                  if x[idx[("w", l, end, k)]] > 0.5]
        if len(active) > 1:
            raise AmbiguousDecision(
                f"line {l}: {len(active)} transfer selectors active")
        if not active:
            decisions.append(LineSwitch(l))
        else:
            end, k = active[0]
            bus = _end_buses(net.lines[l])[end]
            decisions.append(BusSplit(bus, l, TransferScenario(k)))

    objective = float(net.cost_vector() @ dispatch)
    if solver_objective is not None:
        drift = abs(objective - solver_objective) / max(1.0, abs(objective))
        if drift > 1e-7:
            raise AmbiguousDecision(
                f"objective mismatch: recomputed {objective}, "
                f"solver {solver_objective}")
    return SolveResult(
        status="optimal",
        objective=objective,
        dispatch=dispatch,
        theta=theta,
        flows=flows,
        decisions=tuple(decisions),
    )


def _canonicalize(problem: milp.MilpProblem, net: Network,
                  sol: milp.MilpSolution,
                  opts: milp.SolveOptions) -> milp.MilpSolution:
    """Pick a canonical optimum among cost ties.

    Minimum-cost plans are often non-unique (several operations relieve
    the same binding limit). Re-solve with the cost pinned to the
    optimum, preferring fewer operations, then bus splits over
    de-energizing line switches, then the smallest transferred
    injection, then the lowest (bus, line, scenario) rank, so
    equal-cost runs always report the same plan.
    """
    scale = 1.0 + abs(sol.objective)
    cost_row_cols = tuple(np.flatnonzero(problem.c))
    cost_row = (cost_row_cols,
                tuple(problem.c[k] / scale for k in cost_row_cols),
                milp.LE, (sol.objective / scale) + 1e-8)
    L = sum(1 for name in problem.var_names if name[0] == "z")
    pref = np.zeros(problem.n_var)
    for i, name in enumerate(problem.var_names):
        if name[0] == "z":
            # each operation costs 1e6 + per-line rank; the 1e4 refund
            # below marks the opening as a split rather than a switch
            pref[i] = -(1e6 + 1e-8 * name[1])
        elif name[0] == "w":
            _, line, end, k = name
            ln = net.lines[line]
            bus = (ln.i, ln.j)[end]
            pref[i] = -1e4 + 1e-6 * (bus * L * 3 + line * 3 + k)
            if k in (1, 3):
                pref[i] += 10.0 * net.loads[bus]
        elif name[0] == "y" and name[3] in (2, 3):
            pref[i] = 10.0
    tie = milp.MilpProblem(pref, problem.constraints + (cost_row,),
                           problem.lb, problem.ub, problem.integrality,
                           problem.var_names)
    # the preference objective is orders of magnitude larger than its
    # meaningful differences, so a relative gap would blur them; close
    # the tie stage exactly, with a node cap as the safety valve
    tie_opts = replace(opts, initial_solution=sol.x, rel_gap=0.0,
                       node_limit=min(opts.node_limit or 2000, 2000))
    try:
        refined = milp.solve(tie, tie_opts)
    except NumericalBreakdown:
        return sol
    if refined.x is None:
        return sol
    # with the canonical topology fixed, restore the true min-cost
    # dispatch so the reported objective carries no slack drift
    lb = problem.lb.copy()
    ub = problem.ub.copy()
    for i in np.flatnonzero(problem.integrality):
        lb[i] = ub[i] = round(refined.x[i])
    clean = milp.lp_solve(problem, lb, ub)
    if clean.status != "optimal":
        return sol
    return replace(sol, x=clean.x, objective=clean.objective,
                   node_count=sol.node_count + refined.node_count)


def _no_good_cut(problem: milp.MilpProblem, x: np.ndarray):
    """Row excluding the current assignment of the decision binaries."""
    terms = {}
    ones = 0
    for i, name in enumerate(problem.var_names):
        if name[0] not in ("z", "w") or not problem.integrality[i]:
            continue
        if problem.lb[i] == problem.ub[i]:
            continue
        if x[i] > 0.5:
            terms[i] = -1.0
            ones += 1
        else:
            terms[i] = 1.0
    cols = tuple(sorted(terms))
    vals = tuple(terms[c] for c in cols)
    return (cols, vals, milp.GE, 1.0 - ones)


def optimize(net: Network, budget: int, mode: Mode = Mode.BREAKER,
             dtheta_max: float = DEFAULT_DTHETA_MAX,
             solver_opts: milp.SolveOptions | None = None,
             forbid_islanding: bool = False,
             max_island_cuts: int = 20,
             canonical: bool = True) -> SolveResult:
    """Build, solve and decode one topology optimization instance."""
    problem = build_model(net, budget, mode, dtheta_max)
    opts = solver_opts or milp.SolveOptions()
    sol = milp.solve(problem, opts)
    cuts = 0
    while (forbid_islanding and sol.x is not None and cuts < max_island_cuts):
        partial = decode(problem, sol.x, net, sol.objective)
        post = apply_decisions(net, partial.decisions)
        if len(islands(post)) <= 1:
            break
        problem = milp.MilpProblem(
            problem.c, problem.constraints + (_no_good_cut(problem, sol.x),),
            problem.lb, problem.ub, problem.integrality, problem.var_names)
        cuts += 1
        sol = milp.solve(problem, replace(opts, initial_solution=None))
    if sol.x is None:
        return SolveResult(
            status=sol.status, objective=float("inf"),
            dispatch=np.zeros(net.n_bus), theta=np.zeros(net.n_bus),
            flows=np.zeros(net.n_line), decisions=(),
            gap=float("inf"), bound=sol.bound,
            node_count=sol.node_count, wall_time=sol.wall_time)
    if canonical and sol.status == "optimal":
        sol = _canonicalize(problem, net, sol, opts)
    result = decode(problem, sol.x, net, sol.objective)
    post = apply_decisions(net, result.decisions)
    return replace(
        result,
        status=sol.status,
        gap=sol.gap,
        bound=sol.bound,
        node_count=sol.node_count,
        wall_time=sol.wall_time,
        n_islands=len(islands(post)),
        x=sol.x,
    )
