"""Topology algebra: matrices, islands, decision application and the
split/open-plus-transfer equivalence."""

import numpy as np
import pytest

from gridsplit.dcopf import solve_dcpf
from gridsplit.errors import (
    DecisionConflict,
    DuplicateSplit,
    MissingInjection,
    UnbalancedInjection,
)
from gridsplit.network import (
    BusSplit,
    Generator,
    Line,
    LineSwitch,
    Network,
    TransferScenario,
    apply_decisions,
    apply_equivalent,
    bbus,
    flow_matrix,
    incidence,
    islands,
)


def toy_net():
    """Triangle with a pendant bus: 0-1, 1-2, 0-2, 2-3."""
    lines = (Line(0, 1, 10.0, 1.0), Line(1, 2, 5.0, 1.0),
             Line(0, 2, 4.0, 1.0), Line(2, 3, 8.0, 1.0))
    return Network(
        n_bus=4,
        loads=np.array([0.0, 0.6, 0.3, 0.4]),
        gens=(Generator(0, 0.0, 2.0, 1000.0), Generator(1, 0.0, 1.0, 2000.0)),
        lines=lines,
        reference_bus=0,
        theta_min=-np.ones(4), theta_max=np.ones(4),
    )


def test_matrix_identities():
    net = toy_net()
    A = incidence(net).toarray()
    K = flow_matrix(net).toarray()
    B = bbus(net).toarray()
    b = np.diag([ln.b for ln in net.lines])
    assert np.allclose(K, b @ A.T)
    assert np.allclose(B, A @ b @ A.T)
    # Laplacian: zero row sums, PSD
    assert np.allclose(B.sum(axis=1), 0.0)
    assert np.all(np.linalg.eigvalsh(B) >= -1e-12)


def _bfs_components(n, edges):
    seen = [False] * n
    comps = []
    for s in range(n):
        if seen[s]:
            continue
        comp, stack = set(), [s]
        seen[s] = True
        while stack:
            u = stack.pop()
            comp.add(u)
            for a, b in edges:
                v = b if a == u else a if b == u else None
                if v is not None and not seen[v]:
                    seen[v] = True
                    stack.append(v)
        comps.append(frozenset(comp))
    return comps


def test_islands_against_bfs_oracle():
    rng = np.random.default_rng(7)
    for _ in range(30):
        n = int(rng.integers(2, 15))
        m = int(rng.integers(1, 2 * n))
        edges = [tuple(sorted(rng.choice(n, 2, replace=False)))
                 for _ in range(m)]
        net = Network(
            n_bus=n, loads=np.zeros(n),
            gens=(Generator(0, 0.0, 1.0, 1.0),),
            lines=tuple(Line(i, j, 1.0, 1.0) for i, j in edges),
            reference_bus=0,
            theta_min=-np.ones(n), theta_max=np.ones(n))
        got = sorted(islands(net), key=min)
        want = sorted(_bfs_components(n, edges), key=min)
        assert got == want


def test_apply_line_switch_removes_line():
    net = toy_net()
    post = apply_decisions(net, [LineSwitch(line=1)])
    assert post.n_line == 3
    assert all(ln != Line(1, 2, 5.0, 1.0) for ln in post.lines)
    assert post.n_bus == net.n_bus


def test_apply_split_reterminates_and_moves_injections():
    net = toy_net()
    post = apply_decisions(
        net, [BusSplit(bus=2, line=3, scenario=TransferScenario.LOAD_ONLY)])
    assert post.n_bus == 5
    # the split line now ends at the new bar, which carries the load
    moved = post.lines[3]
    assert (moved.i, moved.j) == (4, 3)
    assert post.loads[4] == pytest.approx(0.3)
    assert post.loads[2] == 0.0
    assert post.bus_ids[4] == -2


def test_apply_split_moves_generator():
    net = toy_net()
    post = apply_decisions(
        net, [BusSplit(bus=1, line=1, scenario=TransferScenario.GEN_ONLY)])
    gen_buses = [g.bus for g in post.gens]
    assert 4 in gen_buses and 1 not in gen_buses


def test_apply_decision_conflicts():
    net = toy_net()
    with pytest.raises(DuplicateSplit):
        apply_decisions(net, [
            BusSplit(2, 1, TransferScenario.LOAD_ONLY),
            BusSplit(2, 3, TransferScenario.LOAD_ONLY)])
    with pytest.raises(DecisionConflict):
        apply_decisions(net, [
            LineSwitch(1), BusSplit(2, 1, TransferScenario.LOAD_ONLY)])
    with pytest.raises(DecisionConflict):
        apply_decisions(net, [BusSplit(3, 0, TransferScenario.LOAD_ONLY)])
    with pytest.raises(MissingInjection):
        apply_decisions(net, [BusSplit(3, 3, TransferScenario.GEN_ONLY)])
    with pytest.raises(MissingInjection):
        apply_decisions(net, [BusSplit(0, 0, TransferScenario.LOAD_ONLY)])


def _balanced_injection(net, rng):
    """Random generation profile scaled to match total load."""
    g = rng.uniform(0.1, 1.0, size=len(net.gens))
    g *= net.loads.sum() / g.sum()
    p = -np.array(net.loads)
    for amount, gen in zip(g, net.gens):
        p[gen.bus] += amount
    return p, {gen.bus: amount for amount, gen in zip(g, net.gens)}


def _split_equivalence_error(net, split, rng):
    """Worst angle/flow gap between the physically split network and
    the open-line-plus-transfer model, or None if the transfer
    unbalances an island (both models must then agree on rejecting)."""
    p, gen_of = _balanced_injection(net, rng)
    actual = apply_decisions(net, [split])
    equiv = apply_equivalent(net, split)
    ln = net.lines[split.line]
    other = ln.j if split.bus == ln.i else ln.i

    p_actual = np.append(p, 0.0)
    p_equiv = p.copy()
    moves_load = split.scenario in (TransferScenario.LOAD_ONLY,
                                    TransferScenario.GEN_AND_LOAD)
    moves_gen = split.scenario in (TransferScenario.GEN_ONLY,
                                   TransferScenario.GEN_AND_LOAD)
    if moves_load:
        p_actual[split.bus] += net.loads[split.bus]
        p_actual[-1] -= net.loads[split.bus]
        p_equiv[split.bus] += net.loads[split.bus]
        p_equiv[other] -= net.loads[split.bus]
    if moves_gen:
        p_actual[split.bus] -= gen_of[split.bus]
        p_actual[-1] += gen_of[split.bus]
        p_equiv[split.bus] -= gen_of[split.bus]
        p_equiv[other] += gen_of[split.bus]

    try:
        sol_a = solve_dcpf(actual, p_actual)
    except UnbalancedInjection:
        with pytest.raises(UnbalancedInjection):
            solve_dcpf(equiv, p_equiv)
        return None
    sol_e = solve_dcpf(equiv, p_equiv)

    worst = float(np.max(np.abs(sol_a.theta[:net.n_bus] - sol_e.theta)))
    flows_a = np.delete(sol_a.flows, split.line)
    worst = max(worst, float(np.max(np.abs(flows_a - sol_e.flows))))
    return worst


def valid_splits(net):
    out = []
    for l, ln in enumerate(net.lines):
        for bus in (ln.i, ln.j):
            has_gen = net.gen_at(bus) is not None
            has_load = net.loads[bus] > 0
            if has_load:
                out.append(BusSplit(bus, l, TransferScenario.LOAD_ONLY))
            if has_gen:
                out.append(BusSplit(bus, l, TransferScenario.GEN_ONLY))
            if has_gen and has_load:
                out.append(BusSplit(bus, l, TransferScenario.GEN_AND_LOAD))
    return out


def test_split_equivalence_sampled(net_case14):
    rng = np.random.default_rng(3)
    checked = 0
    for split in valid_splits(net_case14):
        err = _split_equivalence_error(net_case14, split, rng)
        if err is not None:
            assert err <= 1e-8
            checked += 1
    assert checked >= 20
