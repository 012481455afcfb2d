"""Full AC power flow and AC verification of switching plans.

The DC model used by the optimizer ignores voltage magnitudes, reactive
power and losses. This module re-checks a proposed plan on the full AC
equations: the plan is applied to the physical topology (switched lines
removed, split buses added with their reassigned line ends and
injections), a Newton-Raphson power flow is run, and branch MVA
loadings and voltage magnitudes are compared against their limits.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .caseio import RawCase
from .errors import (
    DanglingReference,
    DecisionConflict,
    DuplicateSplit,
    MissingInjection,
    NumericalBreakdown,
)
from .network import BusSplit, LineSwitch, TransferScenario

PQ, PV, REF = 1, 2, 3


@dataclass
class AcBus:
    id: int
    type: int
    pd: float
    qd: float
    gs: float
    bs: float
    vm: float
    va: float
    vmax: float
    vmin: float


@dataclass
class AcBranch:
    f: int
    t: int
    r: float
    x: float
    b: float
    rate_a: float
    tap: float
    shift: float


@dataclass
class AcGen:
    bus: int
    pg: float
    qmax: float
    qmin: float
    vg: float


@dataclass
class AcCase:
    """Mutable AC working model, indexed like the DC Network.

    Buses keep the order of the raw case and branches keep the order of
    the in-service raw branches, so line and bus indices in a decision
    list address the same elements in both models.
    """

    base_mva: float
    buses: list[AcBus]
    branches: list[AcBranch]
    gens: list[AcGen]

    @classmethod
    def from_raw(cls, raw: RawCase) -> "AcCase":
        id_map = {b.id: n for n, b in enumerate(raw.buses)}
        buses = [AcBus(b.id, b.type, b.pd, b.qd, b.gs, b.bs,
                       b.vm, b.va, b.vmax, b.vmin) for b in raw.buses]
        branches = []
        for n, br in enumerate(raw.branches):
            if br.status == 0:
                continue
            branches.append(AcBranch(
                id_map[br.from_bus], id_map[br.to_bus], br.r, br.x, br.b,
                br.rate_a, br.tap if br.tap != 0 else 1.0, br.shift))
        gens = []
        for g in raw.gens:
            if g.status == 0:
                continue
            if g.bus not in id_map:
                raise DanglingReference(f"generator references bus {g.bus}")
            gens.append(AcGen(id_map[g.bus], g.pg, g.qmax, g.qmin, g.vg))
        return cls(raw.base_mva, buses, branches, gens)


def build_ybus(case: AcCase) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Bus admittance matrix plus the from/to branch admittance rows.

    Returns (Ybus, Yf, Yt) where Yf @ V and Yt @ V are the branch
    currents at the from and to ends.
    """
    n = len(case.buses)
    m = len(case.branches)
    Y = np.zeros((n, n), complex)
    Yf = np.zeros((m, n), complex)
    Yt = np.zeros((m, n), complex)
    for k, br in enumerate(case.branches):
        ys = 1.0 / complex(br.r, br.x)
        bc = 1j * br.b / 2.0
        tap = br.tap * np.exp(1j * math.radians(br.shift))
        yff = (ys + bc) / (tap * np.conj(tap))
        yft = -ys / np.conj(tap)
        ytf = -ys / tap
        ytt = ys + bc
        f, t = br.f, br.t
        Y[f, f] += yff
        Y[f, t] += yft
        Y[t, f] += ytf
        Y[t, t] += ytt
        Yf[k, f] = yff
        Yf[k, t] = yft
        Yt[k, f] = ytf
        Yt[k, t] = ytt
    for i, bus in enumerate(case.buses):
        Y[i, i] += complex(bus.gs, bus.bs) / case.base_mva
    return Y, Yf, Yt


@dataclass
class NrSolution:
    converged: bool
    iterations: int
    vm: np.ndarray
    va: np.ndarray
    max_mismatch: float
    q_gen: np.ndarray


def _injections(case: AcCase) -> tuple[np.ndarray, np.ndarray]:
    """Scheduled complex injection per bus, in per unit."""
    base = case.base_mva
    p = np.array([-b.pd / base for b in case.buses])
    q = np.array([-b.qd / base for b in case.buses])
    for g in case.gens:
        p[g.bus] += g.pg / base
    return p, q


def _power_mismatch(Y, V, p_spec, q_spec):
    s = V * np.conj(Y @ V)
    return p_spec - s.real, q_spec - s.imag


def jacobian(Y: np.ndarray, V: np.ndarray) -> tuple[np.ndarray, ...]:
    """Partial derivatives of the bus injections S = V (Y V)* in polar
    coordinates: (dP/dva, dP/dvm, dQ/dva, dQ/dvm)."""
    I = Y @ V
    dV = np.diag(V)
    dI = np.diag(I)
    dE = np.diag(V / np.abs(V))
    dS_dva = 1j * dV @ np.conj(dI - Y @ dV)
    dS_dvm = dV @ np.conj(Y @ dE) + np.conj(dI) @ dE
    return dS_dva.real, dS_dvm.real, dS_dva.imag, dS_dvm.imag


def solve_nr(case: AcCase, tol: float = 1e-8, max_iter: int = 20,
             flat_start: bool = False,
             enforce_q_limits: bool = True) -> NrSolution:
    """Newton-Raphson AC power flow in polar form.

    PV buses whose total generator reactive capability is exhausted are
    converted to PQ with the offending limit held, and the solve is
    repeated until no further switching occurs.
    """
    n = len(case.buses)
    Y, _, _ = build_ybus(case)
    types = np.array([b.type for b in case.buses])
    ref = np.flatnonzero(types == REF)
    if ref.size != 1:
        raise MissingInjection(f"need exactly one reference bus, got {ref.size}")

    p_spec, q_spec = _injections(case)
    qmin = np.full(n, 0.0)
    qmax = np.full(n, 0.0)
    has_gen = np.zeros(n, bool)
    vset = np.ones(n)
    for g in case.gens:
        qmin[g.bus] += g.qmin / case.base_mva
        qmax[g.bus] += g.qmax / case.base_mva
        has_gen[g.bus] = True
        vset[g.bus] = g.vg

    vm = np.ones(n) if flat_start else np.array([b.vm for b in case.buses])
    va = np.zeros(n) if flat_start else np.array(
        [math.radians(b.va) for b in case.buses])
    vm[has_gen] = vset[has_gen]

    pv = (types == PV).copy()
    q_held = np.full(n, np.nan)
    total_iters = 0
    for _round in range(n + 1):
        sol = _nr_core(Y, vm.copy(), va.copy(), p_spec,
                       np.where(np.isnan(q_held), q_spec, q_held),
                       pv, int(ref[0]), tol, max_iter)
        total_iters += sol.iterations
        if not sol.converged:
            return NrSolution(False, total_iters, sol.vm, sol.va,
                              sol.max_mismatch, _gen_q(case, Y, sol))
        if not enforce_q_limits:
            break
        # reactive output of each PV bus = Q injected plus local Q load
        s = sol.vm * np.exp(1j * sol.va)
        qinj = (s * np.conj(Y @ s)).imag
        qg = qinj + np.array([b.qd for b in case.buses]) / case.base_mva
        switched = False
        for i in np.flatnonzero(pv):
            if qg[i] > qmax[i] + 1e-7:
                q_held[i] = qmax[i] - case.buses[i].qd / case.base_mva
            elif qg[i] < qmin[i] - 1e-7:
                q_held[i] = qmin[i] - case.buses[i].qd / case.base_mva
            else:
                continue
            pv[i] = False
            switched = True
        if not switched:
            break
        vm, va = sol.vm, sol.va
        vm[pv] = vset[pv]
    return NrSolution(True, total_iters, sol.vm, sol.va, sol.max_mismatch,
                      _gen_q(case, Y, sol))


def _gen_q(case: AcCase, Y: np.ndarray, sol) -> np.ndarray:
    s = sol.vm * np.exp(1j * sol.va)
    qinj = (s * np.conj(Y @ s)).imag
    qg = np.zeros(len(case.buses))
    for g in case.gens:
        qg[g.bus] = qinj[g.bus] + case.buses[g.bus].qd / case.base_mva
    return qg * case.base_mva


@dataclass
class _CoreResult:
    converged: bool
    iterations: int
    vm: np.ndarray
    va: np.ndarray
    max_mismatch: float


def _nr_core(Y, vm, va, p_spec, q_spec, pv, ref, tol, max_iter) -> _CoreResult:
    n = vm.size
    mask = np.ones(n, bool)
    mask[ref] = False
    pq = mask & ~pv
    p_rows = np.flatnonzero(mask)
    q_rows = np.flatnonzero(pq)
    mis = np.inf
    for it in range(max_iter + 1):
        V = vm * np.exp(1j * va)
        dp, dq = _power_mismatch(Y, V, p_spec, q_spec)
        rhs = np.concatenate([dp[p_rows], dq[q_rows]])
        mis = float(np.max(np.abs(rhs))) if rhs.size else 0.0
        if not np.isfinite(mis):
            raise NumericalBreakdown("power flow mismatch is not finite")
        if mis < tol:
            return _CoreResult(True, it, vm, va, mis)
        if it == max_iter:
            break
        dp_dva, dp_dvm, dq_dva, dq_dvm = jacobian(Y, V)
        J = np.block([
            [dp_dva[np.ix_(p_rows, p_rows)], dp_dvm[np.ix_(p_rows, q_rows)]],
            [dq_dva[np.ix_(q_rows, p_rows)], dq_dvm[np.ix_(q_rows, q_rows)]],
        ])
        try:
            step = np.linalg.solve(J, rhs)
        except np.linalg.LinAlgError as exc:
            raise NumericalBreakdown(f"singular Jacobian: {exc}") from None
        va[p_rows] += step[:p_rows.size]
        vm[q_rows] += step[p_rows.size:]
    return _CoreResult(False, max_iter, vm, va, mis)


# ----------------------------------------------------------- verification


@dataclass
class BranchLoading:
    line: int
    from_bus: int
    to_bus: int
    mw: float
    mva: float
    rate_a: float

    @property
    def violated(self) -> bool:
        """Thermal limits are graded on MW transfer, the quantity the
        dispatch model constrains; apparent power is reported alongside."""
        return bool(self.rate_a > 0 and self.mw > self.rate_a * (1 + 1e-6))


@dataclass
class FeasibilityReport:
    converged: bool
    iterations: int
    max_mismatch: float
    vm: tuple[float, ...]
    branch_loadings: tuple[BranchLoading, ...] = ()
    voltage_warnings: tuple[tuple[int, float, float, float], ...] = ()
    feasible: bool = False

    @property
    def overloads(self) -> tuple[BranchLoading, ...]:
        return tuple(b for b in self.branch_loadings if b.violated)

    def to_dict(self) -> dict:
        return {
            "converged": self.converged,
            "iterations": self.iterations,
            "max_mismatch": self.max_mismatch,
            "feasible": self.feasible,
            "vm": list(self.vm),
            "loadings": [
                {"line": b.line, "from_bus": b.from_bus, "to_bus": b.to_bus,
                 "mw": round(b.mw, 6), "mva": round(b.mva, 6),
                 "rate_a": b.rate_a, "violated": b.violated}
                for b in self.branch_loadings if b.rate_a > 0],
            "voltage_warnings": [
                {"bus": v[0], "vm": round(v[1], 6),
                 "vmin": v[2], "vmax": v[3]}
                for v in self.voltage_warnings],
        }


def apply_plan(case: AcCase, decisions) -> AcCase:
    """Apply a decision list to the physical AC topology, in place.

    A switched line is removed. A split adds a new bus bar holding the
    reassigned line end plus the moved injection: reactive load moves
    with active load, and moved generators keep their voltage setpoint
    and reactive capability at the new bar.
    """
    split_buses = set()
    claimed_lines = {}
    removed = set()
    for d in decisions:
        if isinstance(d, LineSwitch):
            if d.line in claimed_lines or d.line in removed:
                raise DecisionConflict(f"line {d.line} addressed twice")
            removed.add(d.line)
            continue
        if d.bus in split_buses:
            raise DuplicateSplit(f"bus index {d.bus} split twice")
        if d.line in claimed_lines or d.line in removed:
            raise DecisionConflict(f"line {d.line} addressed twice")
        split_buses.add(d.bus)
        claimed_lines[d.line] = d

    for line, d in claimed_lines.items():
        br = case.branches[line]
        if d.bus not in (br.f, br.t):
            raise DanglingReference(
                f"split at bus index {d.bus} names line {line} which does "
                "not terminate there")
        old = case.buses[d.bus]
        move_load = d.scenario in (TransferScenario.LOAD_ONLY,
                                   TransferScenario.GEN_AND_LOAD)
        move_gen = d.scenario in (TransferScenario.GEN_ONLY,
                                  TransferScenario.GEN_AND_LOAD)
        local_gens = [g for g in case.gens if g.bus == d.bus]
        if move_load and old.pd == 0:
            raise MissingInjection(f"bus index {d.bus} has no load to move")
        if move_gen and not local_gens:
            raise MissingInjection(f"bus index {d.bus} has no generator")
        new_idx = len(case.buses)
        if move_gen:
            new_type = REF if old.type == REF else PV
        else:
            new_type = PQ
        case.buses.append(AcBus(
            id=-old.id, type=new_type,
            pd=old.pd if move_load else 0.0,
            qd=old.qd if move_load else 0.0,
            gs=0.0, bs=0.0, vm=old.vm, va=old.va,
            vmax=old.vmax, vmin=old.vmin))
        if move_load:
            old.pd = 0.0
            old.qd = 0.0
        if move_gen:
            for g in local_gens:
                g.bus = new_idx
            old.type = PQ
        if br.f == d.bus:
            br.f = new_idx
        else:
            br.t = new_idx

    case.branches = [br for k, br in enumerate(case.branches)
                     if k not in removed]
    return case


def override_dispatch(case: AcCase, dispatch: np.ndarray) -> None:
    """Replace scheduled Pg with a dispatch vector in per unit.

    `dispatch` is indexed by the buses of the pre-split network; the
    total at each bus is shared among its units in proportion to their
    original schedule (evenly when all schedules are zero).
    """
    by_bus: dict[int, list[AcGen]] = {}
    for g in case.gens:
        by_bus.setdefault(g.bus, []).append(g)
    for bus, units in by_bus.items():
        src = bus
        if src >= dispatch.size:
            # generator moved to a split bar; it takes the dispatch
            # assigned to the parent bus
            src = next(i for i, b in enumerate(case.buses)
                       if b.id == -case.buses[bus].id and i < dispatch.size)
        total = dispatch[src] * case.base_mva
        weights = np.array([g.pg for g in units])
        if weights.sum() <= 0:
            weights = np.ones(len(units))
        weights = weights / weights.sum()
        for g, w in zip(units, weights):
            g.pg = total * w


def verify_decisions(raw: RawCase, decisions=(),
                     dispatch: np.ndarray | None = None,
                     tol: float = 1e-8) -> FeasibilityReport:
    """AC-check a plan: apply it physically, solve, grade the limits."""
    case = apply_plan(AcCase.from_raw(raw), decisions)
    if dispatch is not None:
        override_dispatch(case, np.asarray(dispatch, float))
    sol = solve_nr(case, tol=tol)
    if not sol.converged:
        return FeasibilityReport(False, sol.iterations, sol.max_mismatch,
                                 tuple(sol.vm))

    Y, Yf, Yt = build_ybus(case)
    V = sol.vm * np.exp(1j * sol.va)
    sf = V[[br.f for br in case.branches]] * np.conj(Yf @ V)
    st = V[[br.t for br in case.branches]] * np.conj(Yt @ V)
    loadings = tuple(
        BranchLoading(k, case.buses[br.f].id, case.buses[br.t].id,
                      max(abs(sf[k].real), abs(st[k].real)) * case.base_mva,
                      max(abs(sf[k]), abs(st[k])) * case.base_mva,
                      br.rate_a)
        for k, br in enumerate(case.branches))
    v_warn = tuple(
        (case.buses[i].id, float(sol.vm[i]),
         case.buses[i].vmin, case.buses[i].vmax)
        for i in range(len(case.buses))
        if not (case.buses[i].vmin - 1e-6 <= sol.vm[i]
                <= case.buses[i].vmax + 1e-6))
    # transmission (MW) limits gate feasibility; voltage band excursions
    # are reported but do not, since scheduled setpoints may sit outside
    # the band already in the input data
    feasible = not any(b.violated for b in loadings)
    return FeasibilityReport(True, sol.iterations, sol.max_mismatch,
                             tuple(float(v) for v in sol.vm),
                             loadings, v_warn, feasible)
