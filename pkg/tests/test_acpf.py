"""AC power flow: admittance assembly, Jacobian, Newton solve and plan
verification."""

import numpy as np
import pytest

from gridsplit import acpf
from gridsplit.errors import DecisionConflict, DuplicateSplit, MissingInjection
from gridsplit.network import BusSplit, LineSwitch, TransferScenario


def random_admittance(rng, n):
    Y = (rng.normal(size=(n, n)) + 1j * rng.normal(size=(n, n)))
    Y = (Y + Y.T) / 2
    Y -= np.diag(Y.sum(axis=1))  # rough diagonal dominance
    return Y


def test_jacobian_matches_finite_differences():
    rng = np.random.default_rng(19)
    n = 6
    for _ in range(5):
        Y = random_admittance(rng, n)
        vm = rng.uniform(0.95, 1.05, n)
        va = rng.uniform(-0.3, 0.3, n)
        V = vm * np.exp(1j * va)
        dp_dva, dp_dvm, dq_dva, dq_dvm = acpf.jacobian(Y, V)
        h = 1e-6

        def S(vm_, va_):
            v = vm_ * np.exp(1j * va_)
            return v * np.conj(Y @ v)

        for k in range(n):
            ea = np.zeros(n)
            ea[k] = h
            dS = (S(vm, va + ea) - S(vm, va - ea)) / (2 * h)
            assert np.allclose(dp_dva[:, k], dS.real, atol=1e-6)
            assert np.allclose(dq_dva[:, k], dS.imag, atol=1e-6)
            dS = (S(vm + ea, va) - S(vm - ea, va)) / (2 * h)
            assert np.allclose(dp_dvm[:, k], dS.real, atol=1e-6)
            assert np.allclose(dq_dvm[:, k], dS.imag, atol=1e-6)


def test_ybus_two_bus_by_hand():
    case = acpf.AcCase(
        base_mva=100.0,
        buses=[acpf.AcBus(1, acpf.REF, 0, 0, 0, 0, 1.0, 0.0, 1.1, 0.9),
               acpf.AcBus(2, acpf.PQ, 50, 10, 0, 0, 1.0, 0.0, 1.1, 0.9)],
        branches=[acpf.AcBranch(0, 1, 0.02, 0.2, 0.04, 100.0, 1.0, 0.0)],
        gens=[acpf.AcGen(0, 60.0, 50.0, -50.0, 1.0)],
    )
    Y, Yf, Yt = acpf.build_ybus(case)
    ys = 1.0 / (0.02 + 0.2j)
    assert Y[0, 0] == pytest.approx(ys + 0.02j)
    assert Y[0, 1] == pytest.approx(-ys)
    assert Y[1, 1] == pytest.approx(ys + 0.02j)
    # branch matrices reproduce the bus matrix rows for this radial net
    assert (Yf[0, 0] - Yt[0, 0]) != 0


def test_ybus_tap_and_shift():
    case = acpf.AcCase(
        base_mva=100.0,
        buses=[acpf.AcBus(1, acpf.REF, 0, 0, 0, 0, 1.0, 0.0, 1.1, 0.9),
               acpf.AcBus(2, acpf.PQ, 0, 0, 0, 0, 1.0, 0.0, 1.1, 0.9)],
        branches=[acpf.AcBranch(0, 1, 0.0, 0.1, 0.0, 0.0, 0.98, 3.0)],
        gens=[],
    )
    Y, _, _ = acpf.build_ybus(case)
    ys = 1.0 / 0.1j
    tap = 0.98 * np.exp(1j * np.deg2rad(3.0))
    assert Y[0, 0] == pytest.approx(ys / 0.98**2)
    assert Y[0, 1] == pytest.approx(-ys / np.conj(tap))
    assert Y[1, 0] == pytest.approx(-ys / tap)


def test_newton_converges_on_stock_cases(raw_case14, raw_case5):
    for raw in (raw_case14, raw_case5):
        sol = acpf.solve_nr(acpf.AcCase.from_raw(raw))
        assert sol.converged
        assert sol.max_mismatch < 1e-8
        assert np.all(sol.vm > 0.8) and np.all(sol.vm < 1.2)


def test_newton_flat_start_matches_seeded(raw_case14):
    case = acpf.AcCase.from_raw(raw_case14)
    a = acpf.solve_nr(case, flat_start=True)
    b = acpf.solve_nr(case, flat_start=False)
    assert a.converged and b.converged
    assert np.allclose(a.vm, b.vm, atol=1e-7)
    assert np.allclose(a.va, b.va, atol=1e-7)


def test_q_limit_switching_caps_reactive_output(raw_case14):
    case = acpf.AcCase.from_raw(raw_case14)
    sol = acpf.solve_nr(case, enforce_q_limits=True)
    assert sol.converged
    qmax = {}
    qmin = {}
    for g in case.gens:
        qmax[g.bus] = qmax.get(g.bus, 0.0) + g.qmax
        qmin[g.bus] = qmin.get(g.bus, 0.0) + g.qmin
    for bus, q in enumerate(sol.q_gen):
        if bus in qmax and case.buses[bus].type != acpf.REF:
            assert q <= qmax[bus] + 1e-4
            assert q >= qmin[bus] - 1e-4


def test_apply_plan_switch_and_split(raw_case14):
    case = acpf.AcCase.from_raw(raw_case14)
    n_br = len(case.branches)
    out = acpf.apply_plan(acpf.AcCase.from_raw(raw_case14), [LineSwitch(0)])
    assert len(out.branches) == n_br - 1

    split = BusSplit(bus=2, line=5, scenario=TransferScenario.GEN_AND_LOAD)
    out = acpf.apply_plan(acpf.AcCase.from_raw(raw_case14), [split])
    assert len(out.buses) == len(case.buses) + 1
    bar = out.buses[-1]
    assert bar.id == -case.buses[2].id
    # both active and reactive load travel together
    assert bar.pd == pytest.approx(case.buses[2].pd)
    assert bar.qd == pytest.approx(case.buses[2].qd)
    assert out.buses[2].pd == 0.0 and out.buses[2].qd == 0.0
    moved = [g for g in out.gens if g.bus == len(out.buses) - 1]
    assert moved


def test_apply_plan_rejects_bad_plans(raw_case14):
    mk = lambda: acpf.AcCase.from_raw(raw_case14)
    with pytest.raises(DuplicateSplit):
        acpf.apply_plan(mk(), [
            BusSplit(2, 2, TransferScenario.LOAD_ONLY),
            BusSplit(2, 5, TransferScenario.LOAD_ONLY)])
    with pytest.raises(DecisionConflict):
        acpf.apply_plan(mk(), [
            LineSwitch(5), BusSplit(2, 5, TransferScenario.LOAD_ONLY)])
    with pytest.raises(MissingInjection):
        acpf.apply_plan(mk(), [BusSplit(6, 7, TransferScenario.LOAD_ONLY)])


def test_verify_stock_case14_is_feasible(raw_case14):
    report = acpf.verify_decisions(raw_case14)
    assert report.converged
    assert report.feasible
    assert not report.overloads
    doc = report.to_dict()
    import json

    json.dumps(doc)


def test_verify_reports_overload_on_modified_case(raw_case14_mod):
    report = acpf.verify_decisions(raw_case14_mod)
    assert report.converged
    assert not report.feasible
    hits = {(b.from_bus, b.to_bus) for b in report.overloads}
    assert (3, 4) in hits
