#!/usr/bin/env python3
"""Generate the packaged 118-bus study case.

The published study this case stands in for used the IEEE 118-bus
network with a 19-generator commitment and cost schedule that was never
published, so the exact data cannot be reproduced. This script builds a
deterministic 118-bus / 186-branch reconstruction with the same shape:

* buses 1..113 form a meshy main grid (locality chain plus chords) with
  ratings derived from its own unconstrained dispatch, so it is feasible
  with margin and only mildly congested;
* buses 114..118 replicate a classic 5-bus market pocket whose internal
  congestion is relieved by a bus split but not by any line switch,
  coupled to the main grid through one small tie line;
* 19 generators with linear costs, about 4242 MW of load.

Run from the repository root:  python3 scripts/build_case118_study.py
The output is written to src/gridsplit/data/case118_study.json and is
byte-stable for a fixed script version.
"""

import json
import os
import sys

import numpy as np

sys.path.insert(0, os.path.join(os.path.dirname(__file__), "..", "src"))

from gridsplit.caseio import (  # noqa: E402
    BranchRow, BusRow, GenCostRow, GenRow, RawCase, to_native, validate,
)
from gridsplit.dcopf import solve_dcopf  # noqa: E402

SEED = 11886
N_MAIN = 113
N_BRANCH = 186
MAIN_LOAD_MW = 3342.0
POCKET = {1: 114, 2: 115, 3: 116, 4: 117, 5: 118}
TIE = (60, 115, 300.0)  # main bus, pocket bus, rating MW

POCKET_BUSES = [
    # (id, type, pd, qd)
    (114, 2, 0.0, 0.0),
    (115, 1, 300.0, 98.61),
    (116, 2, 300.0, 98.61),
    (117, 2, 300.0, 131.47),
    (118, 2, 0.0, 0.0),
]
# reactances are six times the classic values: uniform scaling keeps
# the internal flow ratios while the wide-open angle relaxation of the
# MILP stays close to its integer optimum, keeping search trees small
POCKET_BRANCHES = [
    # (from, to, r, x, b, rate_a)
    (114, 115, 0.01686, 0.1686, 0.00712, 400.0),
    (114, 117, 0.01824, 0.1824, 0.00658, 300.0),
    (114, 118, 0.00384, 0.0384, 0.03126, 327.0),
    (115, 116, 0.00648, 0.0648, 0.01852, 400.0),
    (116, 117, 0.01782, 0.1782, 0.00674, 426.0),
    (117, 118, 0.01782, 0.1782, 0.00674, 240.0),
]
POCKET_GENS = [
    # (bus, pmax, cost)
    (114, 110.0, 14.0),
    (114, 100.0, 15.0),
    (116, 520.0, 30.0),
    (117, 200.0, 40.0),
    (118, 600.0, 10.0),
]


def build_topology(rng):
    """Locality chain plus chords; chord reactance tracks the spanned
    path so loop flows stay moderate, as in a real grid where impedance
    grows with line length."""
    chain_x = {i: round(float(rng.uniform(0.05, 0.09)), 4)
               for i in range(1, N_MAIN)}
    edges = [(i, i + 1, chain_x[i]) for i in range(1, N_MAIN)]
    taken = {(i, j) for i, j, _ in edges}
    n_chords = N_BRANCH - len(POCKET_BRANCHES) - 1 - len(edges)
    while n_chords > 0:
        i = int(rng.integers(1, N_MAIN - 1))
        j = i + int(rng.integers(2, 9))
        if j > N_MAIN or (i, j) in taken:
            continue
        span = sum(chain_x[k] for k in range(i, j))
        x = round(float(span * rng.uniform(1.0, 1.5)), 4)
        taken.add((i, j))
        edges.append((i, j, x))
        n_chords -= 1
    return edges


def build_case():
    rng = np.random.default_rng(SEED)
    main_edges = build_topology(rng)

    # loads: most main buses carry load, lognormal sizes scaled to total
    load_buses = sorted(rng.choice(np.arange(1, N_MAIN + 1), size=92,
                                   replace=False).tolist())
    weights = rng.lognormal(0.0, 0.6, size=len(load_buses))
    pd = {b: round(float(w * MAIN_LOAD_MW / weights.sum()), 1)
          for b, w in zip(load_buses, weights)}

    # 14 main generators: merit order from base to peaking units
    gen_buses = sorted(rng.choice(np.arange(1, N_MAIN + 1), size=14,
                                  replace=False).tolist())
    costs = np.concatenate([
        rng.uniform(12.0, 18.0, 4),
        rng.uniform(20.0, 30.0, 6),
        rng.uniform(32.0, 45.0, 4),
    ])
    shares = rng.uniform(0.6, 1.4, 14)
    pmax = shares * (1.35 * MAIN_LOAD_MW) / shares.sum()
    order = rng.permutation(14)
    main_gens = [(gen_buses[k], round(float(pmax[k]), 1),
                  round(float(costs[order[k]]), 2)) for k in range(14)]
    slack_bus = max(main_gens, key=lambda g: g[1])[0]

    buses = []
    for b in range(1, N_MAIN + 1):
        btype = 3 if b == slack_bus else (
            2 if b in {g[0] for g in main_gens} else 1)
        p = pd.get(b, 0.0)
        buses.append(BusRow(id=b, type=btype, pd=p, qd=round(0.28 * p, 1),
                            gs=0.0, bs=0.0, vm=1.0, va=0.0, base_kv=138.0,
                            vmax=1.06, vmin=0.94))
    for bid, btype, p, q in POCKET_BUSES:
        buses.append(BusRow(id=bid, type=2 if btype == 3 else btype,
                            pd=p, qd=q, gs=0.0, bs=0.0, vm=1.0, va=0.0,
                            base_kv=230.0, vmax=1.06, vmin=0.94))

    branches = []
    for (i, j, x) in main_edges:
        branches.append(BranchRow(from_bus=i, to_bus=j, r=round(x / 8, 5),
                                  x=x, b=round(0.4 * x, 4), rate_a=0.0,
                                  tap=0.0, shift=0.0, status=1))
    for (f, t, r, x, b, rate) in POCKET_BRANCHES:
        branches.append(BranchRow(from_bus=f, to_bus=t, r=r, x=x, b=b,
                                  rate_a=rate, tap=0.0, shift=0.0, status=1))
    # the pocket couples through a high-impedance tie: exchange stays
    # small for electrical reasons rather than via a binding rating
    branches.append(BranchRow(from_bus=TIE[0], to_bus=TIE[1], r=0.1,
                              x=1.0, b=0.02, rate_a=TIE[2], tap=0.0,
                              shift=0.0, status=1))

    gens, gencosts = [], []
    for bus, cap, cost in main_gens + POCKET_GENS:
        qcap = round(0.5 * cap, 1)
        gens.append(GenRow(bus=bus, pg=0.0, qg=0.0, qmax=qcap, qmin=-qcap,
                           vg=1.0, status=1, pmax=cap,
                           pmin=round(0.1 * cap, 1)))
        gencosts.append(GenCostRow(model=2, startup=0.0, shutdown=0.0,
                                   coeffs=(cost, 0.0)))

    raw = RawCase(base_mva=100.0, buses=tuple(buses),
                  branches=tuple(branches), gens=tuple(gens),
                  gencosts=tuple(gencosts), name="case118_study")

    # ratings pass: dispatch the unrated network and rate each main line
    # off its own base flow with a comfortable margin, so congestion is
    # confined to the deliberately tight pocket
    n_main = len(main_edges)
    ratings = [0.0] * len(raw.branches)
    for _ in range(4):
        rated = []
        for k, br in enumerate(raw.branches):
            if k >= n_main:
                rated.append(br)
            else:
                rated.append(BranchRow(br.from_bus, br.to_bus, br.r, br.x,
                                       br.b, ratings[k], br.tap, br.shift,
                                       br.status))
        raw = RawCase(base_mva=raw.base_mva, buses=raw.buses,
                      branches=tuple(rated), gens=raw.gens,
                      gencosts=raw.gencosts, name=raw.name)
        base = solve_dcopf(validate(raw))
        if base.status != "optimal":
            raise RuntimeError(f"rating-pass dispatch is {base.status}")
        flows_mw = np.abs(base.flows) * raw.base_mva
        grown = False
        for k in range(n_main):
            want = max(300.0, np.ceil(4.0 * flows_mw[k] / 10) * 10)
            if want > ratings[k]:
                ratings[k] = float(want)
                grown = True
        if not grown:
            break
    else:
        raise RuntimeError("main line ratings did not converge")
    return raw


def main():
    raw = build_case()
    text = to_native(raw)
    out = os.path.join(os.path.dirname(__file__), "..", "src", "gridsplit",
                       "data", "case118_study.json")
    with open(out, "w") as fh:
        fh.write(text)
    doc = json.loads(text)
    total_load = sum(b["pd"] for b in doc["buses"])
    print(f"wrote {os.path.normpath(out)}: {len(doc['buses'])} buses, "
          f"{len(doc['branches'])} branches, {len(doc['generators'])} "
          f"generators, {total_load:.1f} MW load")


if __name__ == "__main__":
    main()
