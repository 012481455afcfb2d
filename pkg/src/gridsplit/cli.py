"""Command line front end.

`gridsplit run` sweeps an operation budget over one or more switching
modes on a case, writing machine-readable results. `gridsplit compare`
reports percentage savings between two result files.

All file outputs are deterministic for a given configuration; timing is
printed to the console only, so repeated runs produce byte-identical
artifacts.
"""

from __future__ import annotations

import argparse
import csv
import hashlib
import json
import os
import sys
from concurrent.futures import ThreadPoolExecutor

import numpy as np

from . import acpf, milp, topo
from .caseio import load_case, to_native, validate
from .errors import GridsplitError, MismatchedCases
from .network import BusSplit, LineSwitch
from .topo import Mode

MODES = {"none": Mode.NO_SWITCH, "line": Mode.LINE_ONLY, "breaker": Mode.BREAKER}

EXIT_OK = 0
EXIT_INFEASIBLE = 2
EXIT_LIMIT = 3


def _parse_sweep(text: str) -> list[int]:
    if ".." in text:
        lo, hi = text.split("..", 1)
        lo, hi = int(lo), int(hi)
    else:
        lo = hi = int(text)
    if hi < lo or lo < 0:
        raise argparse.ArgumentTypeError(f"bad budget range {text!r}")
    return list(range(lo, hi + 1))


def _parse_modes(text: str) -> list[str]:
    out = []
    for part in text.split(","):
        part = part.strip()
        if part not in MODES:
            raise argparse.ArgumentTypeError(f"unknown mode {part!r}")
        if part not in out:
            out.append(part)
    return out


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="gridsplit")
    sub = ap.add_subparsers(dest="command", required=True)

    run = sub.add_parser("run", help="solve a budget sweep on one case")
    run.add_argument("--case", required=True,
                     help="packaged case name or path to a case file")
    run.add_argument("--mode", type=_parse_modes, default=["breaker"],
                     help="comma list from none,line,breaker")
    run.add_argument("-s", "--budget", type=_parse_sweep, default=list(range(6)),
                     metavar="N|A..B", help="operation budget or sweep range")
    run.add_argument("--dtheta-max", type=float, default=topo.DEFAULT_DTHETA_MAX)
    run.add_argument("--gap", type=float, default=1e-6,
                     help="relative MILP optimality gap")
    run.add_argument("--time-limit", type=float, default=300.0,
                     help="seconds per solve")
    run.add_argument("--forbid-islanding", action="store_true")
    run.add_argument("--verify-ac", action="store_true",
                     help="AC power flow check of each optimal plan")
    run.add_argument("--export-lp", metavar="DIR",
                     help="write each model in LP format to DIR")
    run.add_argument("--out", default=".", metavar="DIR")
    run.add_argument("--format", default="json,csv",
                     help="comma list from json,csv")
    run.add_argument("--log-nodes", action="store_true",
                     help="write solver node logs next to the results")
    run.add_argument("--linearize-cost", action="store_true",
                     help="replace quadratic generator costs with the "
                          "marginal cost at mid range")

    cmp_ = sub.add_parser("compare", help="savings between two result files")
    cmp_.add_argument("results_a")
    cmp_.add_argument("results_b")
    return ap


def _case_hash(raw) -> str:
    return hashlib.sha256(to_native(raw).encode()).hexdigest()[:16]


def _solve_cell(net, raw, mode_name, s, args, warm):
    opts = milp.SolveOptions(rel_gap=args.gap, time_limit=args.time_limit,
                             initial_solution=warm,
                             node_log=[] if args.log_nodes else None)
    if args.export_lp:
        problem = topo.build_model(net, s, MODES[mode_name], args.dtheta_max)
        os.makedirs(args.export_lp, exist_ok=True)
        path = os.path.join(args.export_lp, f"model_{mode_name}_s{s}.lp")
        with open(path, "w") as fh:
            fh.write(milp.export_lp(problem))
    res = topo.optimize(net, s, MODES[mode_name], args.dtheta_max,
                        solver_opts=opts,
                        forbid_islanding=args.forbid_islanding)
    record = {
        "s": s,
        "mode": mode_name,
        "status": res.status,
        "objective": None if not np.isfinite(res.objective) else res.objective,
        "gap": res.gap if np.isfinite(res.gap) else None,
        "bound": res.bound if np.isfinite(res.bound) else None,
        "node_count": res.node_count,
        "n_islands": res.n_islands,
        "decisions": [_decision_dict(net, d) for d in res.decisions],
        "dispatch_mw": None if res.status != "optimal" else [
            round(float(g), 8) for g in res.dispatch * raw.base_mva],
    }
    if args.verify_ac and res.status == "optimal":
        report = acpf.verify_decisions(raw, res.decisions,
                                       dispatch=res.dispatch)
        record["ac"] = report.to_dict()
    return record, res, opts.node_log


def _decision_dict(net, d) -> dict:
    if isinstance(d, LineSwitch):
        ln = net.lines[d.line]
        return {"kind": "switch", "line": d.line,
                "from_bus": net.bus_ids[ln.i], "to_bus": net.bus_ids[ln.j]}
    ln = net.lines[d.line]
    return {"kind": "split", "bus": net.bus_ids[d.bus], "line": d.line,
            "from_bus": net.bus_ids[ln.i], "to_bus": net.bus_ids[ln.j],
            "scenario": d.scenario.name}


def _fmt(v, places=6):
    return "" if v is None else f"{v:.{places}f}"


def _write_outputs(out_dir, formats, case_name, case_hash, records, net):
    os.makedirs(out_dir, exist_ok=True)
    if "json" in formats:
        doc = {"case": case_name, "case_hash": case_hash, "runs": records}
        with open(os.path.join(out_dir, "results.json"), "w") as fh:
            json.dump(doc, fh, indent=2, sort_keys=True)
            fh.write("\n")
    if "csv" not in formats:
        return
    by_key = {(r["s"], r["mode"]): r for r in records}
    with open(os.path.join(out_dir, "costs.csv"), "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["s", "mode", "status", "objective", "gap", "node_count"])
        for r in records:
            w.writerow([r["s"], r["mode"], r["status"],
                        _fmt(r["objective"]), _fmt(r["gap"], 9),
                        r["node_count"]])
    with open(os.path.join(out_dir, "decisions.csv"), "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["s", "mode", "decisions", "reduction_vs_line_pct"])
        for r in records:
            base = by_key.get((r["s"], "line"))
            red = ""
            if (base and base["objective"] and r["objective"] is not None
                    and r["mode"] == "breaker"):
                red = _fmt(100.0 * (base["objective"] - r["objective"])
                           / base["objective"], 4)
            text = "; ".join(_decision_text(d) for d in r["decisions"])
            w.writerow([r["s"], r["mode"], text or "none", red])


def _decision_text(d: dict) -> str:
    if d["kind"] == "switch":
        return f"switch line {d['line']} ({d['from_bus']},{d['to_bus']})"
    return (f"split bus {d['bus']} [{d['scenario']}] via line "
            f"{d['line']} ({d['from_bus']},{d['to_bus']})")


def cmd_run(args) -> int:
    raw = load_case(args.case)
    net = validate(raw, dtheta_max=args.dtheta_max,
                   linearize_cost=args.linearize_cost)
    formats = [f.strip() for f in args.format.split(",") if f.strip()]
    bad = set(formats) - {"json", "csv"}
    if bad:
        raise GridsplitError(f"unknown output format(s): {sorted(bad)}")

    threads = max(1, int(os.environ.get("GRIDSPLIT_THREADS", "1")))

    def sweep(mode_name):
        out = []
        warm = None
        for s in args.budget:
            record, res, log = _solve_cell(net, raw, mode_name, s, args, warm)
            out.append((record, res, log))
            # a budget-s optimum stays feasible at budget s+1
            if res.status == "optimal":
                warm = res.x
            print(f"  {mode_name:8s} s={s}: {res.status} "
                  + (f"objective {res.objective:.4f} " if np.isfinite(res.objective) else "")
                  + f"nodes {res.node_count} ({res.wall_time:.2f} s)",
                  file=sys.stderr)
        return out

    print(f"case {args.case} ({net.n_bus} buses, {net.n_line} lines), "
          f"budgets {args.budget[0]}..{args.budget[-1]}", file=sys.stderr)
    if threads > 1 and len(args.mode) > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            cells = list(pool.map(sweep, args.mode))
    else:
        cells = [sweep(m) for m in args.mode]

    records = []
    node_logs = {}
    for mode_name, items in zip(args.mode, cells):
        for record, res, log in items:
            records.append(record)
            if log is not None:
                node_logs[f"nodes_{mode_name}_s{record['s']}.ldjson"] = log
    records.sort(key=lambda r: (r["s"], list(MODES).index(r["mode"])))

    _write_outputs(args.out, formats, args.case, _case_hash(raw), records, net)
    for fname, log in sorted(node_logs.items()):
        with open(os.path.join(args.out, fname), "w") as fh:
            fh.write(milp.node_log_lines(log))

    statuses = {r["status"] for r in records}
    if "infeasible" in statuses:
        return EXIT_INFEASIBLE
    if statuses - {"optimal"}:
        return EXIT_LIMIT
    return EXIT_OK


def _best_by_s(doc) -> dict[int, float]:
    out: dict[int, float] = {}
    for r in doc["runs"]:
        if r["objective"] is None:
            continue
        s = r["s"]
        if s not in out or r["objective"] < out[s]:
            out[s] = r["objective"]
    return out


def cmd_compare(args) -> int:
    with open(args.results_a) as fh:
        a = json.load(fh)
    with open(args.results_b) as fh:
        b = json.load(fh)
    if a["case_hash"] != b["case_hash"]:
        raise MismatchedCases(
            f"result files come from different cases: "
            f"{a['case']} ({a['case_hash']}) vs {b['case']} ({b['case_hash']})")
    best_a, best_b = _best_by_s(a), _best_by_s(b)
    shared = sorted(set(best_a) & set(best_b))
    print(f"case {a['case']}  (A = {args.results_a}, B = {args.results_b})")
    print(f"{'s':>3} {'cost A':>14} {'cost B':>14} {'savings %':>10}")
    for s in shared:
        ca, cb = best_a[s], best_b[s]
        sav = 100.0 * (ca - cb) / ca if ca else 0.0
        print(f"{s:>3} {ca:>14.4f} {cb:>14.4f} {sav:>10.4f}")
    if shared:
        savings = [100.0 * (best_a[s] - best_b[s]) / best_a[s]
                   for s in shared if best_a[s]]
        print(f"savings range {min(savings):.4f}% to {max(savings):.4f}%")
    return EXIT_OK


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        if args.command == "run":
            return cmd_run(args)
        return cmd_compare(args)
    except GridsplitError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INFEASIBLE
    except FileNotFoundError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INFEASIBLE


if __name__ == "__main__":
    raise SystemExit(main())
