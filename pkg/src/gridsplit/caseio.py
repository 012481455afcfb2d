"""Grid case parsing and validation.

Two on-disk formats are supported: a subset of the MATPOWER ``.m`` case
format (read-only) and a native JSON schema (the canonical persisted
format, documented in the README). Both parse into the same RawCase,
which `validate` turns into a per-unit Network.
"""

from __future__ import annotations

import json
import math
import re
import warnings
from dataclasses import asdict, dataclass
from importlib import resources

import numpy as np

from .errors import (
    CostModelUnsupported,
    DanglingReference,
    MalformedMatrix,
    MissingSection,
    NoGeneration,
    NonPositiveReactance,
    NumberParse,
    SchemaViolation,
)
from .network import Generator, Line, Network

DEFAULT_DTHETA_MAX = 0.6  # rad, global angle-spread cap used for Big-M and
                          # for capping unlimited line ratings


@dataclass(frozen=True)
class BusRow:
    id: int
    type: int
    pd: float
    qd: float
    gs: float
    bs: float
    vm: float
    va: float
    base_kv: float
    vmax: float
    vmin: float


@dataclass(frozen=True)
class BranchRow:
    from_bus: int
    to_bus: int
    r: float
    x: float
    b: float
    rate_a: float
    tap: float
    shift: float
    status: int


@dataclass(frozen=True)
class GenRow:
    bus: int
    pg: float
    qg: float
    qmax: float
    qmin: float
    vg: float
    status: int
    pmax: float
    pmin: float


@dataclass(frozen=True)
class GenCostRow:
    model: int
    startup: float
    shutdown: float
    coeffs: tuple[float, ...]


@dataclass(frozen=True)
class RawCase:
    base_mva: float
    buses: tuple[BusRow, ...]
    branches: tuple[BranchRow, ...]
    gens: tuple[GenRow, ...]
    gencosts: tuple[GenCostRow, ...] = ()
    name: str = ""


# ---------------------------------------------------------------- MATPOWER

_ASSIGN_RE = re.compile(r"mpc\.(\w+)\s*=")


def _strip_comments(text: str) -> list[str]:
    return [line.split("%", 1)[0] for line in text.splitlines()]


def _parse_scalar(lines, lineno, name):
    m = re.search(r"=\s*([^;]+);", lines[lineno])
    if m is None:
        raise MalformedMatrix(f"expected scalar assignment for {name}", lineno + 1)
    tok = m.group(1).strip().strip("'\"")
    try:
        return float(tok)
    except ValueError:
        raise NumberParse(tok, lineno + 1) from None


def _parse_matrix(lines, start, name):
    """Parse ``mpc.name = [ rows ];`` starting at line index `start`.

    Rows are separated by ``;`` or newlines; returns (rows, last_line).
    """
    rows: list[list[float]] = []
    current: list[float] = []
    buf = lines[start]
    buf = buf[buf.index("[") + 1:] if "[" in buf else ""
    if "[" not in lines[start]:
        # opening bracket may sit on the next line
        raise MalformedMatrix(f"expected '[' after mpc.{name}", start + 1)
    lineno = start
    while True:
        closed = "]" in buf
        if closed:
            buf = buf[: buf.index("]")]
        for chunk in buf.replace(",", " ").split(";"):
            toks = chunk.split()
            if toks:
                for tok in toks:
                    try:
                        current.append(float(tok))
                    except ValueError:
                        raise NumberParse(tok, lineno + 1) from None
                rows.append(current)
                current = []
        if closed:
            break
        lineno += 1
        if lineno >= len(lines):
            raise MalformedMatrix(f"unterminated matrix mpc.{name}", start + 1)
        buf = lines[lineno]
    if current:
        rows.append(current)
    widths = {len(r) for r in rows}
    if len(widths) > 1:
        raise MalformedMatrix(
            f"ragged rows in mpc.{name}: widths {sorted(widths)}", start + 1)
    return rows, lineno


def _col(row, k, default=0.0):
    return row[k] if k < len(row) else default


def parse_matpower(text: str, name: str = "") -> RawCase:
    """Parse the MATPOWER subset: baseMVA, bus, branch, gen, gencost.

    Other ``mpc.*`` fields are ignored with a warning.
    """
    lines = _strip_comments(text)
    sections: dict[str, list[list[float]]] = {}
    base_mva = None
    for lineno, line in enumerate(lines):
        m = _ASSIGN_RE.search(line)
        if m is None:
            continue
        field = m.group(1)
        if field == "baseMVA":
            base_mva = _parse_scalar(lines, lineno, field)
        elif field in ("bus", "branch", "gen", "gencost"):
            sections[field], _ = _parse_matrix(lines, lineno, field)
        elif field != "version":
            warnings.warn(f"ignoring unsupported MATPOWER field mpc.{field}")
    if base_mva is None:
        raise MissingSection("no mpc.baseMVA assignment")
    for required in ("bus", "branch"):
        if required not in sections:
            raise MissingSection(f"no mpc.{required} table")
    if "gen" not in sections:
        raise MissingSection("no mpc.gen table")

    buses = tuple(
        BusRow(int(r[0]), int(r[1]), r[2], r[3], _col(r, 4), _col(r, 5),
               _col(r, 7, 1.0), _col(r, 8), _col(r, 9), _col(r, 11, 1.1),
               _col(r, 12, 0.9))
        for r in sections["bus"])
    branches = tuple(
        BranchRow(int(r[0]), int(r[1]), r[2], r[3], _col(r, 4), _col(r, 5),
                  _col(r, 8), _col(r, 9), int(_col(r, 10, 1.0)))
        for r in sections["branch"])
    gens = tuple(
        GenRow(int(r[0]), r[1], r[2], r[3], r[4], _col(r, 5, 1.0),
               int(_col(r, 7, 1.0)), _col(r, 8), _col(r, 9))
        for r in sections["gen"])
    gencosts = tuple(
        GenCostRow(int(r[0]), r[1], r[2], tuple(r[4:4 + int(r[3])]))
        for r in sections.get("gencost", []))
    return RawCase(base_mva, buses, branches, gens, gencosts, name=name)


# ------------------------------------------------------------------ native

_BUS_KEYS = ("id", "type", "pd", "qd", "gs", "bs", "vm", "va", "base_kv",
             "vmax", "vmin")
_BRANCH_KEYS = ("from_bus", "to_bus", "r", "x", "b", "rate_a", "tap",
                "shift", "status")
_GEN_KEYS = ("bus", "pg", "qg", "qmax", "qmin", "vg", "status", "pmax", "pmin")


def _require(obj, key, path, kind=(int, float)):
    if not isinstance(obj, dict):
        raise SchemaViolation(path, "expected an object")
    if key not in obj:
        raise SchemaViolation(f"{path}/{key}", "missing required field")
    val = obj[key]
    if kind is not None and not isinstance(val, kind) or isinstance(val, bool):
        raise SchemaViolation(f"{path}/{key}", f"bad type {type(val).__name__}")
    return val


def parse_native(text: str, name: str = "") -> RawCase:
    """Parse the native JSON case format."""
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise SchemaViolation("/", f"not valid JSON: {exc}") from None
    if not isinstance(doc, dict):
        raise SchemaViolation("/", "top level must be an object")
    base_mva = _require(doc, "base_mva", "")
    for key in ("buses", "branches", "generators"):
        if key not in doc:
            raise SchemaViolation(f"/{key}", "missing required field")
        if not isinstance(doc[key], list):
            raise SchemaViolation(f"/{key}", "expected an array")

    buses = tuple(
        BusRow(*(int(_require(b, k, f"/buses/{n}")) if k in ("id", "type")
                 else float(_require(b, k, f"/buses/{n}")) for k in _BUS_KEYS))
        for n, b in enumerate(doc["buses"]))
    branches = tuple(
        BranchRow(*(int(_require(b, k, f"/branches/{n}"))
                    if k in ("from_bus", "to_bus", "status")
                    else float(_require(b, k, f"/branches/{n}"))
                    for k in _BRANCH_KEYS))
        for n, b in enumerate(doc["branches"]))
    gens = []
    gencosts = []
    for n, g in enumerate(doc["generators"]):
        path = f"/generators/{n}"
        gens.append(GenRow(*(int(_require(g, k, path))
                             if k in ("bus", "status")
                             else float(_require(g, k, path))
                             for k in _GEN_KEYS)))
        if "cost_model" in g:
            coeffs = _require(g, "cost_coeffs", path, kind=None)
            if not isinstance(coeffs, list):
                raise SchemaViolation(f"{path}/cost_coeffs", "expected an array")
            gencosts.append(GenCostRow(int(g["cost_model"]),
                                       float(g.get("startup", 0.0)),
                                       float(g.get("shutdown", 0.0)),
                                       tuple(float(c) for c in coeffs)))
    if gencosts and len(gencosts) != len(gens):
        raise SchemaViolation("/generators", "cost given for only some generators")
    return RawCase(float(base_mva), buses, branches, tuple(gens),
                   tuple(gencosts), name=name or doc.get("name", ""))


def to_native(raw: RawCase) -> str:
    """Serialize a RawCase to the native JSON format (deterministic)."""
    gens = []
    for n, g in enumerate(raw.gens):
        rec = asdict(g)
        if raw.gencosts:
            cost = raw.gencosts[n]
            rec["cost_model"] = cost.model
            rec["startup"] = cost.startup
            rec["shutdown"] = cost.shutdown
            rec["cost_coeffs"] = list(cost.coeffs)
        gens.append(rec)
    doc = {
        "name": raw.name,
        "base_mva": raw.base_mva,
        "buses": [asdict(b) for b in raw.buses],
        "branches": [asdict(b) for b in raw.branches],
        "generators": gens,
    }
    return json.dumps(doc, indent=2, sort_keys=True) + "\n"


# ---------------------------------------------------------------- validate

def _linear_cost(cost: GenCostRow | None, gen: GenRow, linearize: bool) -> float:
    """$/MWh marginal cost of one unit, from its MATPOWER cost row."""
    if cost is None:
        warnings.warn(f"generator at bus {gen.bus} has no cost row; using 0")
        return 0.0
    if cost.model != 2:
        raise CostModelUnsupported(
            f"generator at bus {gen.bus}: cost model {cost.model} "
            "(only polynomial model 2 is supported)")
    coeffs = cost.coeffs
    degree = len(coeffs) - 1
    if degree <= 1:
        return coeffs[0] if degree == 1 else 0.0
    if degree == 2 and linearize:
        c2, c1, _ = coeffs
        mid = 0.5 * (gen.pmin + gen.pmax)
        return c1 + 2.0 * c2 * mid
    raise CostModelUnsupported(
        f"generator at bus {gen.bus}: polynomial degree {degree} "
        "(pass linearize_cost=True to use the marginal cost at midpoint)")


def validate(raw: RawCase, dtheta_max: float = DEFAULT_DTHETA_MAX,
             linearize_cost: bool = False) -> Network:
    """Turn a RawCase into a per-unit Network.

    Out-of-service rows are dropped, ids densified, quantities converted
    to per-unit, parallel generator units at a bus merged into one
    record, and unlimited (rateA=0) lines capped at b * dtheta_max.
    """
    base = raw.base_mva
    if base <= 0:
        raise SchemaViolation("/base_mva", "must be positive")
    id_map = {b.id: n for n, b in enumerate(raw.buses)}
    if len(id_map) != len(raw.buses):
        raise SchemaViolation("/buses", "duplicate bus ids")
    n_bus = len(raw.buses)

    loads = np.array([b.pd / base for b in raw.buses])

    lines = []
    for n, br in enumerate(raw.branches):
        if br.status == 0:
            continue
        for end in (br.from_bus, br.to_bus):
            if end not in id_map:
                raise DanglingReference(f"branch {n} references unknown bus {end}")
        if br.x <= 0:
            raise NonPositiveReactance(f"branch {n} has x = {br.x}")
        b_line = 1.0 / br.x
        f_max = br.rate_a / base if br.rate_a > 0 else b_line * dtheta_max
        lines.append(Line(id_map[br.from_bus], id_map[br.to_bus], b_line, f_max))

    merged: dict[int, list[tuple[GenRow, GenCostRow | None]]] = {}
    for n, g in enumerate(raw.gens):
        if g.status == 0:
            continue
        if g.bus not in id_map:
            raise DanglingReference(f"generator {n} references unknown bus {g.bus}")
        cost = raw.gencosts[n] if n < len(raw.gencosts) else None
        merged.setdefault(id_map[g.bus], []).append((g, cost))
    if not merged:
        raise NoGeneration("no in-service generators")

    gens = []
    for bus in sorted(merged):
        units = merged[bus]
        if len(units) > 1:
            warnings.warn(
                f"merging {len(units)} generator units at bus "
                f"{raw.buses[bus].id}: summed bounds, cheapest marginal cost")
        g_min = sum(u.pmin for u, _ in units) / base
        g_max = sum(u.pmax for u, _ in units) / base
        cost = min(_linear_cost(c, u, linearize_cost) for u, c in units) * base
        gens.append(Generator(bus, g_min, g_max, cost))

    ref = next((n for n, b in enumerate(raw.buses) if b.type == 3), None)
    if ref is None:
        ref = max(gens, key=lambda g: g.g_max).bus

    return Network(
        n_bus=n_bus,
        loads=loads,
        gens=tuple(gens),
        lines=tuple(lines),
        reference_bus=ref,
        # angles are relative; keep the box wide enough that it never
        # binds even on long radial chains (per-line spread is what the
        # dtheta_max machinery limits)
        theta_min=np.full(n_bus, -64.0),
        theta_max=np.full(n_bus, 64.0),
        bus_ids=tuple(b.id for b in raw.buses),
    )


# ------------------------------------------------------------- convenience

PACKAGED_CASES = ("case5", "case14", "case14_mod", "case118_study")


def load_case(name_or_path: str) -> RawCase:
    """Load a packaged case by name or any case file by path."""
    text = None
    if name_or_path in PACKAGED_CASES:
        root = resources.files("gridsplit") / "data"
        for ext in (".json", ".m"):
            candidate = root / (name_or_path + ext)
            if candidate.is_file():
                text = candidate.read_text()
                path = name_or_path + ext
                break
        else:
            raise FileNotFoundError(name_or_path)
    else:
        path = name_or_path
        with open(path) as fh:
            text = fh.read()
    if path.endswith(".json"):
        return parse_native(text, name=name_or_path)
    return parse_matpower(text, name=name_or_path)
