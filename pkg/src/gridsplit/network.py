"""Bus-branch network model and topology algebra.

All quantities are per-unit on the case MVA base. Buses are dense
0-based indices; the mapping back to external case ids lives on the
Network as ``bus_ids``.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass, field, replace

import numpy as np
import scipy.sparse as sp

from .errors import DecisionConflict, DuplicateSplit, MissingInjection


class TransferScenario(enum.IntEnum):
    """Which injection components move to the new bus bar in a split.

    The integer values match the column order of the power-transfer
    selector (load, generation, both).
    """

    LOAD_ONLY = 1
    GEN_ONLY = 2
    GEN_AND_LOAD = 3


@dataclass(frozen=True)
class LineSwitch:
    """De-energize one transmission line."""

    line: int

    def label(self, net: "Network") -> str:
        return f"Line {self.line}"


@dataclass(frozen=True)
class BusSplit:
    """Split a bus, re-terminating one line and the selected injections
    on the new bus bar."""

    bus: int
    line: int
    scenario: TransferScenario

    def label(self, net: "Network") -> str:
        return f"Bus {net.bus_ids[self.bus]} ({self.scenario.name.lower()}, line {self.line})"


# A TopologyDecision is either of the two.
TopologyDecision = LineSwitch | BusSplit


@dataclass(frozen=True)
class Line:
    i: int
    j: int
    b: float      # susceptance, p.u.
    f_max: float  # thermal limit, p.u.


@dataclass(frozen=True)
class Generator:
    bus: int
    g_min: float
    g_max: float
    cost: float   # $ per p.u.-hour


@dataclass(frozen=True)
class Network:
    n_bus: int
    loads: np.ndarray                 # (N,) p.u.
    gens: tuple[Generator, ...]
    lines: tuple[Line, ...]
    reference_bus: int
    theta_min: np.ndarray             # (N,) rad
    theta_max: np.ndarray             # (N,) rad
    bus_ids: tuple[int, ...] = field(default=())

    def __post_init__(self):
        if not self.bus_ids:
            object.__setattr__(self, "bus_ids", tuple(range(self.n_bus)))
        self.loads.setflags(write=False)
        self.theta_min.setflags(write=False)
        self.theta_max.setflags(write=False)

    @property
    def n_line(self) -> int:
        return len(self.lines)

    def gen_at(self, bus: int) -> Generator | None:
        for g in self.gens:
            if g.bus == bus:
                return g
        return None

    def gen_capacity(self) -> np.ndarray:
        """Per-bus dispatchable capacity g_max, p.u."""
        cap = np.zeros(self.n_bus)
        for g in self.gens:
            cap[g.bus] += g.g_max
        return cap

    def cost_vector(self) -> np.ndarray:
        """Per-bus linear cost; zero at buses without generation."""
        c = np.zeros(self.n_bus)
        for g in self.gens:
            c[g.bus] = g.cost
        return c


def incidence(net: Network) -> sp.csc_matrix:
    """Node-arc incidence matrix A (N x L): column l is e_i - e_j."""
    L = net.n_line
    rows, cols, vals = [], [], []
    for l, ln in enumerate(net.lines):
        rows += [ln.i, ln.j]
        cols += [l, l]
        vals += [1, -1]
    return sp.csc_matrix((vals, (rows, cols)), shape=(net.n_bus, L), dtype=np.int64)


def flow_matrix(net: Network) -> sp.csr_matrix:
    """Angle-to-flow map K (L x N): row l is b_ij (e_i - e_j)^T."""
    rows, cols, vals = [], [], []
    for l, ln in enumerate(net.lines):
        rows += [l, l]
        cols += [ln.i, ln.j]
        vals += [ln.b, -ln.b]
    return sp.csr_matrix((vals, (rows, cols)), shape=(net.n_line, net.n_bus))


def bbus(net: Network) -> sp.csr_matrix:
    """Weighted graph Laplacian B = sum b_ij (e_i - e_j)(e_i - e_j)^T."""
    rows, cols, vals = [], [], []
    for ln in net.lines:
        rows += [ln.i, ln.j, ln.i, ln.j]
        cols += [ln.i, ln.j, ln.j, ln.i]
        vals += [ln.b, ln.b, -ln.b, -ln.b]
    return sp.csr_matrix((vals, (rows, cols)), shape=(net.n_bus, net.n_bus))


def apply_decisions(net: Network, decisions) -> Network:
    """Build the actual post-event topology for a list of decisions.

    Line switches remove the line. A bus split appends a new bus i',
    re-terminates the split line at i' (it stays in service), and moves
    the scenario-selected injections from i to i'.
    """
    decisions = list(decisions)
    switched = {d.line for d in decisions if isinstance(d, LineSwitch)}
    split_buses = [d.bus for d in decisions if isinstance(d, BusSplit)]
    if len(split_buses) != len(set(split_buses)):
        raise DuplicateSplit(f"bus split more than once: {sorted(split_buses)}")
    seen_lines = set()
    for d in decisions:
        if isinstance(d, BusSplit):
            if d.line in switched:
                raise DecisionConflict(f"line {d.line} both switched and split")
            if d.line in seen_lines:
                raise DecisionConflict(f"line {d.line} in two decisions")
            seen_lines.add(d.line)

    n_bus = net.n_bus
    loads = np.array(net.loads)
    gens = {g.bus: g for g in net.gens}
    lines: list[Line | None] = list(net.lines)
    theta_min = list(net.theta_min)
    theta_max = list(net.theta_max)
    bus_ids = list(net.bus_ids)

    for l in switched:
        lines[l] = None

    for d in decisions:
        if not isinstance(d, BusSplit):
            continue
        ln = net.lines[d.line]
        if d.bus not in (ln.i, ln.j):
            raise DecisionConflict(f"bus {d.bus} is not an endpoint of line {d.line}")
        wants_gen = d.scenario in (TransferScenario.GEN_ONLY, TransferScenario.GEN_AND_LOAD)
        wants_load = d.scenario in (TransferScenario.LOAD_ONLY, TransferScenario.GEN_AND_LOAD)
        if wants_gen and d.bus not in gens:
            raise MissingInjection(f"no generator at bus {d.bus}")
        if wants_load and loads[d.bus] == 0.0:
            raise MissingInjection(f"no load at bus {d.bus}")

        new_bus = n_bus
        n_bus += 1
        loads = np.append(loads, 0.0)
        theta_min.append(net.theta_min[d.bus])
        theta_max.append(net.theta_max[d.bus])
        bus_ids.append(-net.bus_ids[d.bus])  # negative marks a split bar of |id|

        other = ln.j if d.bus == ln.i else ln.i
        if d.bus == ln.i:
            lines[d.line] = replace(ln, i=new_bus)
        else:
            lines[d.line] = replace(ln, j=new_bus)
        if wants_load:
            loads[new_bus] = loads[d.bus]
            loads[d.bus] = 0.0
        if wants_gen:
            gens[new_bus] = replace(gens.pop(d.bus), bus=new_bus)

    kept = tuple(ln for ln in lines if ln is not None)
    return Network(
        n_bus=n_bus,
        loads=loads,
        gens=tuple(sorted(gens.values(), key=lambda g: g.bus)),
        lines=kept,
        reference_bus=net.reference_bus,
        theta_min=np.array(theta_min),
        theta_max=np.array(theta_max),
        bus_ids=tuple(bus_ids),
    )


def apply_equivalent(net: Network, split: BusSplit) -> Network:
    """Reduced model of a bus split: open the line and move the selected
    injection to the far endpoint.

    The split network and this reduced network carry the same angles and
    flows at every original bus (the new bar's angle is the only extra
    state), which is what makes split search expressible on the original
    bus set.
    """
    ln = net.lines[split.line]
    if split.bus not in (ln.i, ln.j):
        raise DecisionConflict(f"bus {split.bus} is not an endpoint of line {split.line}")
    other = ln.j if split.bus == ln.i else ln.i
    wants_gen = split.scenario in (TransferScenario.GEN_ONLY, TransferScenario.GEN_AND_LOAD)
    wants_load = split.scenario in (TransferScenario.LOAD_ONLY, TransferScenario.GEN_AND_LOAD)

    loads = np.array(net.loads)
    gens = {g.bus: g for g in net.gens}
    if wants_gen and split.bus not in gens:
        raise MissingInjection(f"no generator at bus {split.bus}")
    if wants_load:
        loads[other] += loads[split.bus]
        loads[split.bus] = 0.0
    if wants_gen:
        if other in gens:
            # merged record keeps the cheaper marginal cost
            a, b = gens.pop(split.bus), gens[other]
            gens[other] = Generator(other, a.g_min + b.g_min, a.g_max + b.g_max,
                                    min(a.cost, b.cost))
        else:
            gens[other] = replace(gens.pop(split.bus), bus=other)

    lines = tuple(l for k, l in enumerate(net.lines) if k != split.line)
    return replace(
        net,
        loads=loads,
        gens=tuple(sorted(gens.values(), key=lambda g: g.bus)),
        lines=lines,
    )


def islands(net: Network) -> list[frozenset[int]]:
    """Connected components of the in-service graph, via union-find."""
    parent = list(range(net.n_bus))

    def find(a):
        while parent[a] != a:
            parent[a] = parent[parent[a]]
            a = parent[a]
        return a

    for ln in net.lines:
        ra, rb = find(ln.i), find(ln.j)
        if ra != rb:
            parent[max(ra, rb)] = min(ra, rb)

    groups: dict[int, set[int]] = {}
    for bus in range(net.n_bus):
        groups.setdefault(find(bus), set()).add(bus)
    return [frozenset(g) for _, g in sorted(groups.items())]


def export_coo(mat) -> str:
    """Coordinate-triplet text dump of a sparse matrix, for debugging."""
    coo = sp.coo_matrix(mat)
    order = np.lexsort((coo.col, coo.row))
    lines = [f"{coo.shape[0]} {coo.shape[1]} {coo.nnz}"]
    for k in order:
        lines.append(f"{coo.row[k]} {coo.col[k]} {coo.data[k]:.17g}")
    return "\n".join(lines) + "\n"
