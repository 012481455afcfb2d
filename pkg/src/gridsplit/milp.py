"""Mixed-integer linear programming layer.

A MilpProblem is a solver-agnostic instance: sparse objective and
constraint rows, variable bounds, integrality marks, and structured
variable names used to decode solutions. LP relaxations are solved with
scipy's HiGHS dual simplex; the branch-and-bound search on top is our
own and fully deterministic (best-bound node selection, most-fractional
branching, lowest-index tie break, depth-first dive to the first
incumbent).
"""

from __future__ import annotations

import heapq
import json
import time
from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp
from scipy.optimize import linprog

from .errors import NumericalBreakdown

LE, EQ, GE = "<=", "=", ">="

FEAS_TOL = 1e-7


def var_label(name: tuple) -> str:
    """Render a structured variable name as an LP-file identifier."""
    kind = name[0]
    if kind in ("theta", "g", "f", "z"):
        prefix = {"theta": "th"}.get(kind, kind)
        return f"{prefix}_{name[1]}"
    if kind in ("w", "y"):
        _, line, end, k = name
        return f"{kind}{'ij'[end]}_{line}_{k}"
    return "_".join(str(p) for p in name)


class ModelBuilder:
    """Incremental construction of a MilpProblem."""

    def __init__(self):
        self._names: list[tuple] = []
        self._lb: list[float] = []
        self._ub: list[float] = []
        self._cost: list[float] = []
        self._int: list[bool] = []
        self._rows: list[tuple[tuple[int, ...], tuple[float, ...], str, float]] = []
        self._index: dict[tuple, int] = {}

    def add_var(self, name: tuple, lb: float, ub: float,
                cost: float = 0.0, integer: bool = False) -> int:
        idx = len(self._names)
        self._index[name] = idx
        self._names.append(name)
        self._lb.append(lb)
        self._ub.append(ub)
        self._cost.append(cost)
        self._int.append(integer)
        return idx

    def __getitem__(self, name: tuple) -> int:
        return self._index[name]

    def __contains__(self, name: tuple) -> bool:
        return name in self._index

    def add_con(self, terms: dict[int, float], rel: str, rhs: float):
        cols = tuple(sorted(terms))
        vals = tuple(float(terms[c]) for c in cols)
        self._rows.append((cols, vals, rel, float(rhs)))

    def fix(self, name: tuple, value: float):
        idx = self._index[name]
        self._lb[idx] = value
        self._ub[idx] = value

    def build(self) -> "MilpProblem":
        return MilpProblem(
            c=np.array(self._cost),
            constraints=tuple(self._rows),
            lb=np.array(self._lb),
            ub=np.array(self._ub),
            integrality=np.array(self._int, dtype=bool),
            var_names=tuple(self._names),
        )


class MilpProblem:
    """Immutable optimization instance (minimization)."""

    def __init__(self, c, constraints, lb, ub, integrality, var_names):
        self.c = np.asarray(c, dtype=float)
        self.constraints = tuple(constraints)
        self.lb = np.asarray(lb, dtype=float)
        self.ub = np.asarray(ub, dtype=float)
        self.integrality = np.asarray(integrality, dtype=bool)
        self.var_names = tuple(var_names)
        self.index = {name: i for i, name in enumerate(var_names)}
        self._matrices = None

    @property
    def n_var(self) -> int:
        return self.c.size

    def _assemble(self):
        """Cache (A_ub, b_ub, A_eq, b_eq, row_kinds) for the LP backend."""
        if self._matrices is not None:
            return self._matrices
        ub_r, ub_c, ub_v, b_ub = [], [], [], []
        eq_r, eq_c, eq_v, b_eq = [], [], [], []
        kinds = []  # (which, row-in-which, sign) per original constraint
        for cols, vals, rel, rhs in self.constraints:
            sign = -1.0 if rel == GE else 1.0
            if rel == EQ:
                kinds.append(("eq", len(b_eq), 1.0))
                eq_r += [len(b_eq)] * len(cols)
                eq_c += list(cols)
                eq_v += list(vals)
                b_eq.append(rhs)
            else:
                kinds.append(("ub", len(b_ub), sign))
                ub_r += [len(b_ub)] * len(cols)
                ub_c += list(cols)
                ub_v += [sign * v for v in vals]
                b_ub.append(sign * rhs)
        n = self.n_var
        A_ub = sp.csr_matrix((ub_v, (ub_r, ub_c)), shape=(len(b_ub), n))
        A_eq = sp.csr_matrix((eq_v, (eq_r, eq_c)), shape=(len(b_eq), n))
        self._matrices = (A_ub, np.array(b_ub), A_eq, np.array(b_eq), kinds)
        return self._matrices

    def residual(self, x: np.ndarray) -> float:
        """Max constraint violation of x (bounds excluded)."""
        A_ub, b_ub, A_eq, b_eq, _ = self._assemble()
        worst = 0.0
        if b_ub.size:
            worst = max(worst, float(np.max(A_ub @ x - b_ub, initial=0.0)))
        if b_eq.size:
            worst = max(worst, float(np.max(np.abs(A_eq @ x - b_eq), initial=0.0)))
        return worst


@dataclass
class LpSolution:
    status: str               # optimal | infeasible | unbounded
    x: np.ndarray | None
    objective: float
    duals: np.ndarray | None          # per original constraint row
    reduced_costs: np.ndarray | None  # marginals of variable bounds
    dual_objective: float = np.inf    # optimality certificate


_LP_STATUS = {0: "optimal", 2: "infeasible", 3: "unbounded"}


def lp_solve(p: MilpProblem, lb=None, ub=None) -> LpSolution:
    """Solve the LP relaxation (integrality ignored), optionally with
    overridden bounds; deterministic for identical inputs."""
    A_ub, b_ub, A_eq, b_eq, kinds = p._assemble()
    lb = p.lb if lb is None else lb
    ub = p.ub if ub is None else ub
    bounds = np.column_stack([lb, ub])
    status = None
    # dual simplex first for determinism and warm behavior; fall back on
    # the occasional Unknown status from hard degenerate instances
    for method in ("highs-ds", "highs"):
        res = linprog(p.c, A_ub=A_ub, b_ub=b_ub, A_eq=A_eq, b_eq=b_eq,
                      bounds=bounds, method=method)
        status = _LP_STATUS.get(res.status)
        if status is not None:
            break
    if status is None:
        # HiGHS occasionally reports Unknown while naming the primal
        # status in its message; trust an explicit infeasibility claim
        if "Infeasible" in str(res.message):
            status = "infeasible"
        else:
            raise NumericalBreakdown(f"LP backend: {res.message}")
    if status != "optimal":
        return LpSolution(status, None, np.inf, None, None)
    duals = np.empty(len(kinds))
    for row, (which, k, sign) in enumerate(kinds):
        src = res.eqlin if which == "eq" else res.ineqlin
        duals[row] = sign * src.marginals[k]
    reduced = res.lower.marginals + res.upper.marginals
    # dual objective by Euler's identity: z is 1-homogeneous in (rhs, bounds)
    dual = 0.0
    if b_ub.size:
        dual += float(b_ub @ res.ineqlin.marginals)
    if b_eq.size:
        dual += float(b_eq @ res.eqlin.marginals)
    lo_fin = np.isfinite(lb)
    hi_fin = np.isfinite(ub)
    dual += float(lb[lo_fin] @ res.lower.marginals[lo_fin])
    dual += float(ub[hi_fin] @ res.upper.marginals[hi_fin])
    return LpSolution("optimal", res.x, float(res.fun), duals, reduced, dual)


@dataclass
class SolveOptions:
    rel_gap: float = 1e-6
    int_tol: float = 1e-6
    node_limit: int | None = None
    time_limit: float | None = None
    initial_solution: np.ndarray | None = None  # warm incumbent, checked
    node_log: list | None = None                # append-only dicts, one per node


@dataclass
class MilpSolution:
    status: str            # optimal | feasible | infeasible | node_limit | time_limit
    x: np.ndarray | None
    objective: float
    bound: float
    node_count: int
    wall_time: float

    @property
    def gap(self) -> float:
        if self.x is None or not np.isfinite(self.objective):
            return np.inf
        return max(
            0.0,
            (self.objective - self.bound) / max(1.0, abs(self.objective)))


_LOOKAHEAD = 6


def _select_branch(p, rel, lb, ub, int_idx, int_tol):
    """Limited strong branching: probe the most fractional candidates and
    pick the variable whose worse child tightens the bound the most.
    Degenerate models carry wide plateaus of alternate fractional optima,
    and fractionality alone keeps choosing variables that never move the
    bound there. Returns (index, down_bound, up_bound) or None."""
    cands = []
    for i in int_idx:
        frac = rel.x[i] - np.floor(rel.x[i])
        score = min(frac, 1.0 - frac)
        if score > int_tol:
            cands.append((-score, i))
    if not cands:
        return None
    cands.sort()
    cands = cands[:_LOOKAHEAD]
    if len(cands) == 1:
        i = cands[0][1]
        return i, -np.inf, -np.inf
    best = None
    for _, i in cands:
        floor = np.floor(rel.x[i])
        save_lb, save_ub = lb[i], ub[i]
        ub[i] = floor
        sub = lp_solve(p, lb, ub)
        down = np.inf if sub.status != "optimal" else sub.objective
        ub[i] = save_ub
        lb[i] = floor + 1.0
        sub = lp_solve(p, lb, ub)
        up = np.inf if sub.status != "optimal" else sub.objective
        lb[i] = save_lb
        key = (min(down, up), max(down, up), -i)
        if best is None or key > best[0]:
            best = (key, i, down, up)
    return best[1], best[2], best[3]


def solve(p: MilpProblem, opts: SolveOptions | None = None) -> MilpSolution:
    """Deterministic branch and bound over the HiGHS LP core."""
    opts = opts or SolveOptions()
    t0 = time.perf_counter()
    int_idx = np.flatnonzero(p.integrality)

    incumbent = None
    incumbent_obj = np.inf
    if opts.initial_solution is not None:
        x0 = np.asarray(opts.initial_solution, dtype=float)
        ok = (p.residual(x0) <= 1e-6
              and np.all(x0 >= p.lb - 1e-9) and np.all(x0 <= p.ub + 1e-9)
              and np.all(np.abs(x0[int_idx] - np.round(x0[int_idx])) <= opts.int_tol))
        if ok:
            incumbent = x0
            incumbent_obj = float(p.c @ x0)

    # heap of (parent LP bound, insertion sequence, lb, ub); solved lazily
    seq = 0
    heap: list[tuple[float, int, np.ndarray, np.ndarray]] = []
    heapq.heappush(heap, (-np.inf, seq, p.lb.copy(), p.ub.copy()))
    nodes = 0
    status = None
    diving = True

    while heap:
        if incumbent is not None:
            gap = (incumbent_obj - heap[0][0]) / max(1.0, abs(incumbent_obj))
            if gap <= opts.rel_gap:
                status = "optimal"
                break
        if opts.node_limit is not None and nodes >= opts.node_limit:
            status = "node_limit"
            break
        if opts.time_limit is not None and time.perf_counter() - t0 > opts.time_limit:
            status = "time_limit"
            break
        bound_est, _, lb, ub = heapq.heappop(heap)
        if bound_est >= incumbent_obj - 1e-9:
            continue

        # dive depth-first from this node until it bottoms out
        while True:
            nodes += 1
            rel = lp_solve(p, lb, ub)
            if opts.node_log is not None:
                opts.node_log.append({
                    "node": nodes, "status": rel.status,
                    "objective": None if rel.x is None else rel.objective,
                    "incumbent": None if incumbent is None else incumbent_obj,
                })
            if rel.status != "optimal" or rel.objective >= incumbent_obj - 1e-9:
                break
            chosen = _select_branch(p, rel, lb, ub, int_idx, opts.int_tol)
            if chosen is None:
                incumbent = rel.x
                incumbent_obj = rel.objective
                diving = False
                break
            branch, bd_down, bd_up = chosen
            floor = np.floor(rel.x[branch])
            down_lb, down_ub = lb.copy(), ub.copy()
            down_ub[branch] = floor
            up_lb, up_ub = lb.copy(), ub.copy()
            up_lb[branch] = floor + 1.0
            # probes give valid child bounds; fall back to the node bound
            # when only one candidate was scored
            bd_down = max(bd_down, rel.objective)
            bd_up = max(bd_up, rel.objective)
            if bd_down <= bd_up:
                near = (bd_down, down_lb, down_ub)
                far = (bd_up, up_lb, up_ub)
            else:
                near = (bd_up, up_lb, up_ub)
                far = (bd_down, down_lb, down_ub)
            if far[0] < incumbent_obj - 1e-9:
                seq += 1
                heapq.heappush(heap, (far[0], seq, far[1], far[2]))
            if near[0] >= incumbent_obj - 1e-9:
                break
            if diving:
                lb, ub = near[1], near[2]
                continue
            seq += 1
            heapq.heappush(heap, (near[0], seq, near[1], near[2]))
            break

    if status is None:
        status = "optimal" if incumbent is not None else "infeasible"
    elif incumbent is None and status in ("node_limit", "time_limit"):
        pass  # limit hit before any feasible point; status already set
    if not heap:
        bound = incumbent_obj
    else:
        # gap-based termination keeps the certified bound from the open
        # frontier rather than claiming the incumbent value was proven
        bound = max(heap[0][0], -np.inf)
        if incumbent is not None:
            bound = min(bound, incumbent_obj)
    return MilpSolution(
        status=status,
        x=incumbent,
        objective=incumbent_obj if incumbent is not None else np.inf,
        bound=float(bound),
        node_count=nodes,
        wall_time=time.perf_counter() - t0,
    )


# ------------------------------------------------------------- LP file I/O

def _num(v: float) -> str:
    return f"{v:.17g}"


def export_lp(p: MilpProblem) -> str:
    """Write the problem in CPLEX LP format (deterministic ordering)."""
    labels = [var_label(n) for n in p.var_names]
    out = ["Minimize"]
    terms = [f"{_num(c)} {labels[i]}"
             for i, c in enumerate(p.c) if c != 0.0]
    out.append(" obj: " + (" + ".join(terms).replace("+ -", "- ") or "0"))
    out.append("Subject To")
    for n, (cols, vals, rel, rhs) in enumerate(p.constraints):
        lhs = " + ".join(f"{_num(v)} {labels[c]}" for c, v in zip(cols, vals))
        out.append(f" c{n}: {lhs.replace('+ -', '- ')} {rel} {_num(rhs)}")
    out.append("Bounds")
    for i, lab in enumerate(labels):
        lo, hi = p.lb[i], p.ub[i]
        if p.integrality[i] and lo == 0.0 and hi == 1.0:
            continue
        if lo == hi:
            out.append(f" {lab} = {_num(lo)}")
        else:
            lo_s = "-inf" if np.isinf(lo) else _num(lo)
            hi_s = "+inf" if np.isinf(hi) else _num(hi)
            out.append(f" {lo_s} <= {lab} <= {hi_s}")
    binaries = [lab for i, lab in enumerate(labels)
                if p.integrality[i] and p.lb[i] == 0.0 and p.ub[i] == 1.0]
    generals = [lab for i, lab in enumerate(labels)
                if p.integrality[i] and not (p.lb[i] == 0.0 and p.ub[i] == 1.0)]
    if binaries:
        out.append("Binaries")
        out.append(" " + " ".join(binaries))
    if generals:
        out.append("Generals")
        out.append(" " + " ".join(generals))
    out.append("End")
    return "\n".join(out) + "\n"


def _parse_terms(text: str) -> dict[str, float]:
    toks = text.replace("+", " + ").replace("-", " - ").split()
    terms: dict[str, float] = {}
    sign, coef = 1.0, None
    for tok in toks:
        if tok == "+":
            sign, coef = 1.0, None
        elif tok == "-":
            sign, coef = -1.0, None
        else:
            try:
                value = float(tok.replace(" ", ""))
            except ValueError:
                terms[tok] = terms.get(tok, 0.0) + sign * (1.0 if coef is None else coef)
                sign, coef = 1.0, None
            else:
                coef = value
    return terms


def parse_lp(text: str) -> MilpProblem:
    """Minimal LP-format reader; handles files written by export_lp."""
    section = None
    obj: dict[str, float] = {}
    cons: list[tuple[dict[str, float], str, float]] = []
    bounds: list[tuple] = []
    binaries: list[str] = []
    generals: list[str] = []
    for raw_line in text.splitlines():
        line = raw_line.split("\\")[0].strip()
        if not line:
            continue
        low = line.lower()
        if low in ("minimize", "subject to", "bounds", "binaries", "generals", "end"):
            section = low
            continue
        if ":" in line and section in ("minimize", "subject to"):
            line = line.split(":", 1)[1].strip()
        if section == "minimize":
            obj.update(_parse_terms(line))
        elif section == "subject to":
            for rel in (LE, GE, "="):
                if rel in line:
                    lhs, rhs = line.split(rel, 1)
                    cons.append((_parse_terms(lhs), rel, float(rhs)))
                    break
        elif section == "bounds":
            if "<=" in line:
                lo, mid, hi = [s.strip() for s in line.split("<=")]
                bounds.append((mid, float(lo.replace("-inf", "-1e308")),
                               float(hi.replace("+inf", "1e308"))))
            elif "=" in line:
                lab, val = [s.strip() for s in line.split("=")]
                bounds.append((lab, float(val), float(val)))
        elif section == "binaries":
            binaries += line.split()
        elif section == "generals":
            generals += line.split()

    names: list[str] = []
    seen = set()
    for source in ([obj] + [c[0] for c in cons]):
        for lab in source:
            if lab not in seen:
                seen.add(lab)
                names.append(lab)
    for lab, _, _ in bounds:
        if lab not in seen:
            seen.add(lab)
            names.append(lab)
    for lab in binaries + generals:
        if lab not in seen:
            seen.add(lab)
            names.append(lab)
    index = {lab: i for i, lab in enumerate(names)}
    n = len(names)
    lb = np.zeros(n)
    ub = np.full(n, np.inf)
    for lab in binaries:
        ub[index[lab]] = 1.0
    for lab, lo, hi in bounds:
        lb[index[lab]] = max(lo, -1e308)
        ub[index[lab]] = min(hi, 1e308)
    lb[lb <= -1e308] = -np.inf
    ub[ub >= 1e308] = np.inf
    c = np.zeros(n)
    for lab, v in obj.items():
        c[index[lab]] = v
    integrality = np.zeros(n, dtype=bool)
    for lab in binaries + generals:
        integrality[index[lab]] = True
    rows = []
    for terms, rel, rhs in cons:
        cols = tuple(sorted(index[lab] for lab in terms))
        vals = tuple(terms[names[cidx]] for cidx in cols)
        rows.append((cols, vals, rel, rhs))
    return MilpProblem(c, rows, lb, ub, integrality,
                       tuple(("x", lab) for lab in names))


def node_log_lines(log: list[dict]) -> str:
    """Line-delimited JSON rendering of a node log."""
    return "\n".join(json.dumps(entry, sort_keys=True) for entry in log) + "\n"
