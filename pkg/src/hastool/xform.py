"""Model-to-model transformations.

* bill of materials -> product structural model
* product structural model -> platform-independent process model
* per-level enumeration and counting of assembly sequences
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass
from functools import cache
from graphlib import CycleError, TopologicalSorter
from typing import Iterator, Mapping

from . import _schema as js
from .apm import (
    ActionCatalog,
    ActionInstance,
    Activity,
    AssemblyProcessModel,
    Operation,
    Precedence,
    Process,
    validate_apm,
)
from .errors import ModelError, PlanningError
from .psm import (
    Connector,
    Liaison,
    ProductStructuralModel,
    SubAssembly,
    connector_from_dict,
    connector_to_dict,
    validate_psm,
)
from .validation import Violation

MAX_COUNT_ACTIVITIES = 16
FEED_ACTION = "pick"
DEFAULT_JOIN_ACTION = "place"


@dataclass(frozen=True)
class BomLine:
    part: str
    parent: str | None
    quantity: int = 1
    description: str = ""


@dataclass(frozen=True)
class BillOfMaterials:
    id: str
    product_name: str
    lines: tuple[BomLine, ...]


@dataclass(frozen=True)
class LiaisonSet:
    """Connector list supplied next to a BOM, which cannot express joints itself."""

    id: str
    connectors: tuple[Connector, ...]


@dataclass(frozen=True)
class ConstraintEdge:
    before: str
    after: str
    rationale: str = ""


@dataclass(frozen=True)
class ConstraintSet:
    id: str
    edges: tuple[ConstraintEdge, ...] = ()


@dataclass(frozen=True)
class BomImport:
    model: ProductStructuralModel
    warnings: tuple[Violation, ...] = ()


@dataclass(frozen=True)
class SequenceEnumeration:
    level: str
    sequences: tuple[tuple[str, ...], ...]
    count: int
    truncated: bool

    def to_dict(self) -> dict:
        return {
            "kind": "sequences",
            "level": self.level,
            "count": self.count,
            "truncated": self.truncated,
            "sequences": [list(s) for s in self.sequences],
        }


def _retarget_uri(model_id: str, kind: str) -> str:
    from .repo import ModelUri

    try:
        uri = ModelUri.parse(model_id)
    except Exception:
        return model_id
    return str(ModelUri(uri.repo, kind, uri.name, uri.version))


# -- BOM import ---------------------------------------------------------------


def import_bom(bom: BillOfMaterials, liaisons: tuple[Connector, ...] | None = None, *, psm_id: str | None = None) -> BomImport:
    lines: dict[str, BomLine] = {}
    for line in bom.lines:
        if line.part in lines:
            raise ModelError("BOM_DUPLICATE", f"part {line.part!r} listed twice")
        if line.quantity < 1:
            raise ModelError("BOM_QUANTITY", f"part {line.part!r} has quantity {line.quantity}")
        lines[line.part] = line
    for line in bom.lines:
        if line.parent is not None and line.parent not in lines:
            raise ModelError("BOM_UNKNOWN_PARENT", f"{line.part!r} names unknown parent {line.parent!r}")
    for line in bom.lines:
        seen = {line.part}
        parent = line.parent
        while parent is not None:
            if parent in seen:
                raise PlanningError("BOM_CYCLE", f"parent references loop through {parent!r}")
            seen.add(parent)
            parent = lines[parent].parent

    children: dict[str | None, list[BomLine]] = {}
    for line in bom.lines:
        children.setdefault(line.parent, []).append(line)

    attached: dict[str, list[Liaison]] = {}
    for conn in liaisons or ():
        for part, liaison in conn.endpoints:
            bucket = attached.setdefault(part, [])
            if all(l.id != liaison for l in bucket):
                bucket.append(Liaison(liaison, part))

    def expand(line: BomLine) -> list[SubAssembly]:
        kids = children.get(line.part, [])
        if kids and line.quantity > 1:
            raise ModelError("BOM_QUANTITY", f"{line.part!r} has children and quantity {line.quantity}")
        ids = [line.part] if line.quantity == 1 else [f"{line.part}-{i}" for i in range(1, line.quantity + 1)]
        built = tuple(p for kid in kids for p in expand(kid))
        kind = "composite" if built else "primitive"
        return [SubAssembly(pid, kind, built, tuple(attached.get(pid, ()))) for pid in ids]

    roots = tuple(p for line in children.get(None, []) for p in expand(line))
    model = ProductStructuralModel(
        id=psm_id or _retarget_uri(bom.id, "psm"),
        product_name=bom.product_name,
        root_children=roots,
        connectors=tuple(liaisons or ()),
    )
    warnings = ()
    if liaisons is None:
        warnings = (Violation("LIAISONS_MISSING", model.id, "a bill of materials carries no joints; no connectors generated"),)
    return BomImport(model, warnings)


# -- PI-APM generation --------------------------------------------------------


def _check_template_action(catalog: ActionCatalog, action: str, params: tuple[str, ...]) -> None:
    entry = catalog.get(action)
    if entry is None:
        raise ModelError("UNKNOWN_ACTION", f"template action {action!r} is not in catalog {catalog.id}")
    if sorted(entry.params) != sorted(params):
        raise ModelError("TEMPLATE_ACTION", f"{action!r} must take parameters {', '.join(params)}")


def _template_activity(conn: Connector, join_action: str) -> Activity:
    act_id = f"act-{conn.id}"
    parts = list(dict.fromkeys(conn.parts))
    feeds = tuple(
        Operation(
            f"{act_id}.feed-{part}",
            "feed",
            (ActionInstance(f"{act_id}.feed-{part}.{FEED_ACTION}", FEED_ACTION, (("part", part),)),),
        )
        for part in parts
    )
    base = parts[0]
    join_id = f"{act_id}.join"
    joins = tuple(
        ActionInstance(f"{join_id}.{join_action}-{part}", join_action, (("part", part), ("target", base))) for part in parts[1:]
    )
    join = Operation(join_id, "assemble", joins)
    order = tuple(Precedence(f.id, join_id) for f in feeds)
    return Activity(act_id, conn.id, operations=feeds + (join,), precedence=order)


def _process_id(part: str | None) -> str:
    return "process" if part is None else f"process-{part}"


def generate_pi_apm(
    psm: ProductStructuralModel,
    extra: ConstraintSet | None,
    catalog: ActionCatalog,
    *,
    joins: Mapping[str, str] | None = None,
    apm_id: str | None = None,
) -> AssemblyProcessModel:
    """Build the platform-independent process model of a concrete product.

    One process per composite part plus the product itself; one activity per
    connector of that level. A composite child's process precedes every
    activity whose connector touches that composite. ``joins`` optionally
    maps connector ids to the catalog action used by their assemble step.
    """
    if psm.has_variant_annotations:
        raise ModelError("UNRESOLVED_VARIANT", f"{psm.id} still carries variant annotations; resolve a variant first")
    report = validate_psm(psm)
    if not report.conformant:
        raise ModelError("INVALID_PSM", f"{psm.id} is not conformant", report=report)
    joins = dict(joins or {})
    for cid in sorted(joins):
        if psm.connector(cid) is None:
            raise ModelError("DANGLING_CONNECTOR", f"join override for unknown connector {cid!r}")
    _check_template_action(catalog, FEED_ACTION, ("part",))
    for action in sorted(set(joins.values()) | {DEFAULT_JOIN_ACTION}):
        _check_template_action(catalog, action, ("part", "target"))

    parents = psm.parents()
    by_parent: dict[str | None, list[Connector]] = {}
    for conn in psm.connectors:
        by_parent.setdefault(parents[conn.parts[0]], []).append(conn)

    def build(part: str | None, kids: tuple[SubAssembly, ...], dcl: int) -> Process:
        composites = [k for k in kids if k.kind == "composite"]
        processes = tuple(build(k.id, k.children, dcl + 1) for k in composites)
        level = sorted(by_parent.get(part, []), key=lambda c: c.id)
        if not level:
            raise ModelError("EMPTY_LEVEL", f"no connectors join the children of {part or 'the product'}")
        activities = tuple(_template_activity(c, joins.get(c.id, DEFAULT_JOIN_ACTION)) for c in level)
        edges = tuple(
            Precedence(_process_id(k.id), act.id)
            for k in composites
            for conn, act in zip(level, activities)
            if k.id in conn.parts
        )
        kind = "composite-child" if processes else "primitive-childs"
        return Process(_process_id(part), dcl, kind, part, processes, activities, edges)

    root = build(None, psm.root_children, 0)
    if extra is not None:
        root = _merge_constraints(root, extra)
    model = AssemblyProcessModel(
        id=apm_id or _retarget_uri(psm.id, "apm-pi"),
        stage="pi",
        product=psm.id,
        catalog=catalog.id,
        root=root,
    )
    result = validate_apm(model, psm, catalog)
    if not result.conformant:
        raise ModelError("INVALID_RESULT", "generated process model is not conformant", report=result)
    return model


def _merge_constraints(root: Process, extra: ConstraintSet) -> Process:
    owner: dict[str, str] = {}

    def index(proc: Process) -> None:
        for m in proc.members():
            owner[m.id] = proc.id
        for p in proc.processes:
            index(p)

    index(root)
    added: dict[str, list[Precedence]] = {}
    for edge in extra.edges:
        for end in (edge.before, edge.after):
            if end not in owner:
                raise ModelError("CONSTRAINT_UNKNOWN", f"constraint references unknown member {end!r}")
        if owner[edge.before] != owner[edge.after]:
            raise ModelError("CONSTRAINT_LEVEL", f"{edge.before} and {edge.after} belong to different levels")
        added.setdefault(owner[edge.before], []).append(Precedence(edge.before, edge.after))

    def merge(proc: Process) -> Process:
        edges = tuple(dict.fromkeys(proc.precedence + tuple(added.get(proc.id, ()))))
        graph: dict[str, set[str]] = {m.id: set() for m in proc.members()}
        for e in edges:
            graph[e.after].add(e.before)
        try:
            TopologicalSorter(graph).prepare()
        except CycleError as exc:
            raise PlanningError("CONSTRAINT_CYCLE", f"precedence at {proc.id} is cyclic: {exc.args[1]}") from None
        return Process(proc.id, proc.dcl, proc.kind, proc.part, tuple(merge(p) for p in proc.processes), proc.activities, edges)

    return merge(root)


# -- sequence enumeration -----------------------------------------------------


def level_activity_order(apm: AssemblyProcessModel, level: str) -> tuple[list[str], set[tuple[str, str]]]:
    """Activities of ``level`` and the order induced among them.

    Constraints that pass through child processes are kept transitively.
    """
    proc = apm.process(level)
    if proc is None:
        raise ModelError("UNKNOWN_LEVEL", f"process {level!r} does not exist in {apm.id}")
    succ: dict[str, set[str]] = {m.id: set() for m in proc.members()}
    for e in proc.precedence:
        succ[e.before].add(e.after)
    activities = sorted(a.id for a in proc.activities)
    wanted = set(activities)
    edges = set()
    for a in activities:
        stack, seen = [a], set()
        while stack:
            for nxt in succ[stack.pop()]:
                if nxt not in seen:
                    seen.add(nxt)
                    stack.append(nxt)
        edges.update((a, b) for b in seen if b in wanted)
    return activities, edges


def _linear_extensions(nodes: list[str], edges: set[tuple[str, str]]) -> Iterator[tuple[str, ...]]:
    indeg = {n: 0 for n in nodes}
    succ: dict[str, list[str]] = {n: [] for n in nodes}
    for u, v in edges:
        indeg[v] += 1
        succ[u].append(v)
    order: list[str] = []
    placed: set[str] = set()

    def extend() -> Iterator[tuple[str, ...]]:
        if len(order) == len(nodes):
            yield tuple(order)
            return
        for n in nodes:
            if n in placed or indeg[n]:
                continue
            placed.add(n)
            order.append(n)
            for s in succ[n]:
                indeg[s] -= 1
            yield from extend()
            for s in succ[n]:
                indeg[s] += 1
            order.pop()
            placed.discard(n)

    yield from extend()


def enumerate_sequences(apm: AssemblyProcessModel, level: str, limit: int) -> SequenceEnumeration:
    """All activity orders of one level, lexicographic, at most ``limit`` of them."""
    if limit < 1:
        raise ModelError("FORMAT", "limit must be a positive integer")
    nodes, edges = level_activity_order(apm, level)
    found = list(itertools.islice(_linear_extensions(nodes, edges), limit + 1))
    truncated = len(found) > limit
    found = found[:limit]
    return SequenceEnumeration(level, tuple(found), len(found), truncated)


def count_sequences(apm: AssemblyProcessModel, level: str) -> int:
    nodes, edges = level_activity_order(apm, level)
    if len(nodes) > MAX_COUNT_ACTIVITIES:
        raise PlanningError("LEVEL_TOO_LARGE", f"{level} has {len(nodes)} activities; the cap is {MAX_COUNT_ACTIVITIES}")
    bit = {n: 1 << i for i, n in enumerate(nodes)}
    need = [sum(bit[u] for u, v in edges if v == n) for n in nodes]
    full = (1 << len(nodes)) - 1

    @cache
    def count(done: int) -> int:
        if done == full:
            return 1
        return sum(count(done | (1 << i)) for i in range(len(nodes)) if not done >> i & 1 and need[i] & ~done == 0)

    return count(0)


# -- JSON ---------------------------------------------------------------------


def bom_from_dict(obj: dict) -> BillOfMaterials:
    js.check_kind(obj, "bom")
    js.check_keys(obj, "bom", ("kind", "id", "lines"), ("product_name",))
    lines = []
    for i, raw in enumerate(js.expect_list(obj["lines"], "lines")):
        where = f"lines[{i}]"
        raw = js.expect_object(raw, where)
        js.check_keys(raw, where, ("part",), ("parent", "quantity", "description"))
        parent = raw.get("parent")
        lines.append(
            BomLine(
                js.expect_str(raw["part"], f"{where}.part"),
                None if parent is None else js.expect_str(parent, f"{where}.parent"),
                js.expect_int(raw.get("quantity", 1), f"{where}.quantity"),
                js.expect_str(raw.get("description", ""), f"{where}.description"),
            )
        )
    name = obj.get("product_name", "")
    return BillOfMaterials(js.expect_str(obj["id"], "id"), js.expect_str(name, "product_name"), tuple(lines))


def bom_to_dict(bom: BillOfMaterials) -> dict:
    return {
        "kind": "bom",
        "id": bom.id,
        "product_name": bom.product_name,
        "lines": [
            {"part": l.part, "parent": l.parent, "quantity": l.quantity, "description": l.description} for l in bom.lines
        ],
    }


def liaisons_from_dict(obj: dict) -> LiaisonSet:
    js.check_kind(obj, "liaisons")
    js.check_keys(obj, "liaisons", ("kind", "connectors"), ("id",))
    connectors = tuple(connector_from_dict(c, f"connectors[{i}]") for i, c in enumerate(js.expect_list(obj["connectors"], "connectors")))
    return LiaisonSet(js.expect_str(obj.get("id", ""), "id"), connectors)


def liaisons_to_dict(liaisons: LiaisonSet) -> dict:
    return {"kind": "liaisons", "id": liaisons.id, "connectors": [connector_to_dict(c) for c in liaisons.connectors]}


def constraints_from_dict(obj: dict) -> ConstraintSet:
    js.check_kind(obj, "constraints")
    js.check_keys(obj, "constraints", ("kind", "edges"), ("id",))
    edges = []
    for i, raw in enumerate(js.expect_list(obj["edges"], "edges")):
        where = f"edges[{i}]"
        raw = js.expect_object(raw, where)
        js.check_keys(raw, where, ("before", "after"), ("rationale",))
        edges.append(
            ConstraintEdge(
                js.expect_str(raw["before"], where), js.expect_str(raw["after"], where), js.expect_str(raw.get("rationale", ""), where)
            )
        )
    return ConstraintSet(js.expect_str(obj.get("id", ""), "id"), tuple(edges))


def constraints_to_dict(constraints: ConstraintSet) -> dict:
    return {
        "kind": "constraints",
        "id": constraints.id,
        "edges": [{"before": e.before, "after": e.after, "rationale": e.rationale} for e in constraints.edges],
    }
