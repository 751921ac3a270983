"""Assembly process models and the standardized action catalog.

A process model is a four-level hierarchy: composition-level processes hold
child processes and primitive assembly activities, activities hold either
nested activities or operations, and operations hold action instances.
Every level carries its own precedence DAG over its direct members.
"""

from __future__ import annotations

from collections import Counter
from dataclasses import dataclass
from decimal import Decimal
from graphlib import CycleError, TopologicalSorter
from typing import Iterable, Iterator, Literal, Mapping

from . import _schema as js
from .errors import ModelError
from .psm import ProductStructuralModel
from .validation import Collector, ValidationReport

Stage = Literal["pi", "ps"]
ProcessKind = Literal["primitive-childs", "composite-child"]
OPERATION_KINDS = ("assemble", "move", "handle", "feed", "inspect", "other")


# -- catalog -------------------------------------------------------------------


@dataclass(frozen=True)
class CatalogEntry:
    id: str
    skill: str
    params: tuple[str, ...] = ()


@dataclass(frozen=True)
class ActionCatalog:
    id: str
    entries: tuple[CatalogEntry, ...]

    def get(self, action: str) -> CatalogEntry | None:
        for entry in self.entries:
            if entry.id == action:
                return entry
        return None

    def skill_of(self, action: str) -> str:
        entry = self.get(action)
        if entry is None:
            raise ModelError("UNKNOWN_ACTION", f"action {action!r} is not in catalog {self.id}")
        return entry.skill


DEFAULT_CATALOG_ID = "has://main/catalog/default@1"


def default_catalog(catalog_id: str = DEFAULT_CATALOG_ID) -> ActionCatalog:
    """The stock vocabulary; each action is realized by the skill of the same name."""
    two = ("part", "target")
    signatures = {
        "pick": ("part",),
        "place": two,
        "insert": two,
        "screw": two,
        "weld": two,
        "inspect": ("part",),
        "move": ("part",),
    }
    return ActionCatalog(catalog_id, tuple(CatalogEntry(name, name, params) for name, params in signatures.items()))


def validate_catalog(catalog: ActionCatalog) -> ValidationReport:
    out = Collector()
    for aid, n in Counter(e.id for e in catalog.entries).items():
        if n > 1:
            out.error("DUPLICATE_ACTION", aid)
    for entry in catalog.entries:
        if not entry.skill:
            out.error("SKILL_MISSING", entry.id)
        if len(set(entry.params)) != len(entry.params):
            out.error("DUPLICATE_PARAM", entry.id)
    return out.report()


# -- process hierarchy ---------------------------------------------------------


@dataclass(frozen=True)
class Precedence:
    before: str
    after: str


@dataclass(frozen=True)
class ActionInstance:
    id: str
    action: str
    bindings: tuple[tuple[str, str], ...] = ()


@dataclass(frozen=True)
class Operation:
    id: str
    kind: str
    actions: tuple[ActionInstance, ...]
    precedence: tuple[Precedence, ...] = ()


@dataclass(frozen=True)
class Activity:
    id: str
    connector: str
    operations: tuple[Operation, ...] = ()
    activities: tuple[Activity, ...] = ()
    precedence: tuple[Precedence, ...] = ()

    def members(self) -> tuple[Operation | Activity, ...]:
        return self.activities or self.operations


@dataclass(frozen=True)
class Process:
    id: str
    dcl: int
    kind: ProcessKind
    # Composite part assembled by this process; None for the product itself.
    part: str | None
    processes: tuple[Process, ...] = ()
    activities: tuple[Activity, ...] = ()
    precedence: tuple[Precedence, ...] = ()

    def members(self) -> tuple[Process | Activity, ...]:
        return self.processes + self.activities


@dataclass(frozen=True)
class ScheduledAction:
    action: str
    assembler: str
    start: Decimal
    finish: Decimal


@dataclass(frozen=True)
class Schedule:
    entries: tuple[ScheduledAction, ...]

    @property
    def makespan(self) -> Decimal:
        return max((e.finish for e in self.entries), default=Decimal(0))

    def by_action(self) -> dict[str, ScheduledAction]:
        return {e.action: e for e in self.entries}


@dataclass(frozen=True)
class PlatformBinding:
    platform: str
    schedule: Schedule


@dataclass(frozen=True)
class AssemblyProcessModel:
    id: str
    stage: Stage
    product: str
    catalog: str
    root: Process
    binding: PlatformBinding | None = None

    @property
    def kind(self) -> str:
        return f"apm-{self.stage}"

    def processes(self) -> Iterator[Process]:
        stack = [self.root]
        while stack:
            proc = stack.pop()
            yield proc
            stack.extend(reversed(proc.processes))

    def process(self, process_id: str) -> Process | None:
        for proc in self.processes():
            if proc.id == process_id:
                return proc
        return None


def iter_activities(activities: Iterable[Activity]) -> Iterator[Activity]:
    for act in activities:
        yield act
        yield from iter_activities(act.activities)


def iter_operations(model: AssemblyProcessModel) -> Iterator[Operation]:
    for proc in model.processes():
        for act in iter_activities(proc.activities):
            yield from act.operations


def iter_action_instances(model: AssemblyProcessModel) -> Iterator[ActionInstance]:
    for op in iter_operations(model):
        yield from op.actions


def required_actions(model: AssemblyProcessModel) -> frozenset[str]:
    return frozenset(inst.action for inst in iter_action_instances(model))


# -- validation ---------------------------------------------------------------


def _check_precedence(out: Collector, owner: str, members: list[str], edges: tuple[Precedence, ...]) -> None:
    known = set(members)
    graph: dict[str, set[str]] = {m: set() for m in members}
    for edge in edges:
        if edge.before == edge.after:
            out.error("PRECEDENCE_SELF", owner, f"{edge.before} cannot precede itself")
        elif edge.before not in known or edge.after not in known:
            out.error("PRECEDENCE_UNKNOWN", owner, f"edge {edge.before}->{edge.after} leaves this level")
        else:
            graph[edge.after].add(edge.before)
    try:
        TopologicalSorter(graph).prepare()
    except CycleError as exc:
        cycle = exc.args[1]
        out.error("PRECEDENCE_CYCLE", owner, "cycle " + " -> ".join(reversed(cycle)))


def validate_apm(model: AssemblyProcessModel, psm: ProductStructuralModel, catalog: ActionCatalog) -> ValidationReport:
    out = Collector()
    if model.stage not in ("pi", "ps"):
        out.error("STAGE", model.id, f"unknown stage {model.stage!r}")
    if (model.stage == "ps") != (model.binding is not None):
        out.error("STAGE_BINDING", model.id, "a platform binding is present iff the model is platform specific")
    if model.product != psm.id:
        out.error("PRODUCT_MISMATCH", model.id, f"refers to {model.product}, validated against {psm.id}")
    if model.catalog != catalog.id:
        out.error("CATALOG_MISMATCH", model.id, f"refers to {model.catalog}, validated against {catalog.id}")

    ids: Counter[str] = Counter()
    parts = psm.parts()
    parents = psm.parents()
    realized: set[str] = set()

    def check_activity(act: Activity, proc: Process, parent: Activity | None) -> None:
        ids[act.id] += 1
        conn = psm.connector(act.connector)
        if parent is not None and act.connector != parent.connector:
            out.error("SUBACTIVITY_CONNECTOR", act.id, "nested activities realize their parent's connector")
        if conn is None:
            out.error("DANGLING_CONNECTOR", act.id, f"connector {act.connector!r} is not in {psm.id}")
        else:
            realized.add(conn.id)
            if any(parents.get(p, "<missing>") != proc.part for p in conn.parts):
                out.error("CONNECTOR_LEVEL", act.id, f"connector {conn.id} does not join children of {proc.part or 'the product'}")
        if bool(act.operations) == bool(act.activities):
            out.error("ACTIVITY_SHAPE", act.id, "an activity holds either nested activities or operations")
        _check_precedence(out, act.id, [m.id for m in act.members()], act.precedence)
        for sub in act.activities:
            check_activity(sub, proc, act)
        for op in act.operations:
            ids[op.id] += 1
            if op.kind not in OPERATION_KINDS:
                out.error("OPERATION_KIND", op.id, f"unknown operation kind {op.kind!r}")
            if not op.actions:
                out.error("EMPTY_OPERATION", op.id)
            _check_precedence(out, op.id, [a.id for a in op.actions], op.precedence)
            for inst in op.actions:
                ids[inst.id] += 1
                entry = catalog.get(inst.action)
                if entry is None:
                    out.error("UNKNOWN_ACTION", inst.id, f"action {inst.action!r} is not in the catalog")
                elif sorted(k for k, _ in inst.bindings) != sorted(entry.params):
                    out.error("PARAM_MISMATCH", inst.id, f"bindings do not match the signature of {entry.id}")

    def check_process(proc: Process, dcl: int, parent_part: str | None) -> None:
        ids[proc.id] += 1
        if proc.dcl != dcl:
            out.error("DCL_MISMATCH", proc.id, f"expected decomposition level {dcl}, found {proc.dcl}")
        if proc.part is not None:
            part = parts.get(proc.part)
            if part is None or part.kind != "composite" or parents.get(proc.part) != parent_part:
                out.error("PROCESS_PART", proc.id, f"{proc.part!r} is not a composite child of {parent_part or 'the product'}")
        elif parent_part is not None or dcl != 0:
            out.error("PROCESS_PART", proc.id, "only the root process may omit its part")
        expected = "composite-child" if proc.processes else "primitive-childs"
        if proc.kind != expected:
            out.error("PROCESS_KIND", proc.id, f"kind should be {expected}")
        if not proc.processes and not proc.activities:
            out.error("EMPTY_PROCESS", proc.id)
        _check_precedence(out, proc.id, [m.id for m in proc.members()], proc.precedence)
        for child in proc.processes:
            check_process(child, dcl + 1, proc.part)
        for act in proc.activities:
            check_activity(act, proc, None)

    check_process(model.root, 0, None)
    for dup, n in sorted(ids.items()):
        if n > 1:
            out.error("DUPLICATE_ID", dup, f"id used {n} times")
    for conn in psm.connectors:
        if conn.id not in realized:
            out.warn("CONNECTOR_UNREALIZED", conn.id, "no activity realizes this connector")

    if model.binding is not None:
        action_ids = Counter(inst.id for inst in iter_action_instances(model))
        scheduled = Counter(e.action for e in model.binding.schedule.entries)
        for aid in sorted(set(action_ids) | set(scheduled)):
            if scheduled[aid] != 1 or aid not in action_ids:
                out.error("SCHEDULE_COVERAGE", aid, f"scheduled {scheduled[aid]} time(s)")
    return out.report()


# -- flattening ---------------------------------------------------------------


@dataclass(frozen=True)
class ActionGraph:
    """Precedence DAG over every action instance of a process model."""

    actions: Mapping[str, ActionInstance]
    edges: frozenset[tuple[str, str]]
    operation_of: Mapping[str, str]

    def predecessors(self) -> dict[str, set[str]]:
        preds: dict[str, set[str]] = {a: set() for a in self.actions}
        for u, v in self.edges:
            preds[v].add(u)
        return preds

    def successors(self) -> dict[str, set[str]]:
        succs: dict[str, set[str]] = {a: set() for a in self.actions}
        for u, v in self.edges:
            succs[u].add(v)
        return succs

    def intra_operation(self, u: str, v: str) -> bool:
        return self.operation_of[u] == self.operation_of[v]

    def topological_order(self) -> list[str]:
        sorter = TopologicalSorter(self.predecessors())
        return list(sorter.static_order())


@dataclass
class _Flat:
    nodes: list[str]
    edges: set[tuple[str, str]]
    sources: set[str]
    sinks: set[str]


def _combine(members: list[_Flat], member_ids: list[str], precedence: tuple[Precedence, ...]) -> _Flat:
    index = dict(zip(member_ids, members))
    nodes = [n for m in members for n in m.nodes]
    edges = set().union(*(m.edges for m in members)) if members else set()
    has_pred: set[str] = set()
    has_succ: set[str] = set()
    for edge in precedence:
        before, after = index[edge.before], index[edge.after]
        has_succ.add(edge.before)
        has_pred.add(edge.after)
        edges.update((s, t) for s in before.sinks for t in after.sources)
    sources = set().union(*(index[m].sources for m in member_ids if m not in has_pred)) if members else set()
    sinks = set().union(*(index[m].sinks for m in member_ids if m not in has_succ)) if members else set()
    return _Flat(nodes, edges, sources, sinks)


def _flatten_operation(op: Operation) -> _Flat:
    leaves = [_Flat([a.id], set(), {a.id}, {a.id}) for a in op.actions]
    return _combine(leaves, [a.id for a in op.actions], op.precedence)


def _flatten_activity(act: Activity) -> _Flat:
    if act.activities:
        return _combine([_flatten_activity(a) for a in act.activities], [a.id for a in act.activities], act.precedence)
    return _combine([_flatten_operation(o) for o in act.operations], [o.id for o in act.operations], act.precedence)


def _flatten_process(proc: Process) -> _Flat:
    members = [_flatten_process(p) for p in proc.processes] + [_flatten_activity(a) for a in proc.activities]
    return _combine(members, [m.id for m in proc.members()], proc.precedence)


def flatten_to_action_graph(model: AssemblyProcessModel) -> ActionGraph:
    """Collapse the hierarchy into one DAG over action instances.

    A member-level edge X -> Y becomes edges from every sink action of X to
    every source action of Y, so everything in X precedes everything in Y.
    """
    flat = _flatten_process(model.root)
    instances = {inst.id: inst for inst in iter_action_instances(model)}
    operation_of = {inst.id: op.id for op in iter_operations(model) for inst in op.actions}
    ordered = {aid: instances[aid] for aid in flat.nodes}
    return ActionGraph(ordered, frozenset(flat.edges), operation_of)


# -- JSON ---------------------------------------------------------------------


def _precedence_from(raw: object, where: str) -> tuple[Precedence, ...]:
    edges = []
    for i, item in enumerate(js.expect_list(raw, where)):
        item = js.expect_object(item, f"{where}[{i}]")
        js.check_keys(item, f"{where}[{i}]", ("before", "after"))
        edges.append(Precedence(js.expect_str(item["before"], where), js.expect_str(item["after"], where)))
    return tuple(edges)


def _precedence_to(edges: tuple[Precedence, ...]) -> list[dict]:
    return [{"before": e.before, "after": e.after} for e in edges]


def _instance_from(raw: object, where: str) -> ActionInstance:
    raw = js.expect_object(raw, where)
    js.check_keys(raw, where, ("id", "action"), ("bindings",))
    bindings = js.expect_object(raw.get("bindings", {}), f"{where}.bindings")
    pairs = tuple(sorted((k, js.expect_str(v, f"{where}.bindings.{k}")) for k, v in bindings.items()))
    return ActionInstance(js.expect_str(raw["id"], f"{where}.id"), js.expect_str(raw["action"], f"{where}.action"), pairs)


def _operation_from(raw: object, where: str) -> Operation:
    raw = js.expect_object(raw, where)
    js.check_keys(raw, where, ("id", "kind", "actions"), ("precedence",))
    actions = tuple(_instance_from(a, f"{where}.actions[{i}]") for i, a in enumerate(js.expect_list(raw["actions"], where)))
    return Operation(
        js.expect_str(raw["id"], f"{where}.id"),
        js.expect_str(raw["kind"], f"{where}.kind"),
        actions,
        _precedence_from(raw.get("precedence", []), f"{where}.precedence"),
    )


def _activity_from(raw: object, where: str, inherited: str | None = None) -> Activity:
    raw = js.expect_object(raw, where)
    js.check_keys(raw, where, ("id",), ("connector", "operations", "activities", "precedence"))
    if "connector" in raw:
        connector = js.expect_str(raw["connector"], f"{where}.connector")
    elif inherited is not None:
        connector = inherited
    else:
        raise ModelError("FORMAT", f"{where}: missing field(s) connector")
    return Activity(
        id=js.expect_str(raw["id"], f"{where}.id"),
        connector=connector,
        operations=tuple(
            _operation_from(o, f"{where}.operations[{i}]") for i, o in enumerate(js.expect_list(raw.get("operations", []), where))
        ),
        activities=tuple(
            _activity_from(a, f"{where}.activities[{i}]", connector)
            for i, a in enumerate(js.expect_list(raw.get("activities", []), where))
        ),
        precedence=_precedence_from(raw.get("precedence", []), f"{where}.precedence"),
    )


def _process_from(raw: object, where: str) -> Process:
    raw = js.expect_object(raw, where)
    js.check_keys(raw, where, ("id", "dcl", "kind"), ("part", "processes", "activities", "precedence"))
    part = raw.get("part")
    return Process(
        id=js.expect_str(raw["id"], f"{where}.id"),
        dcl=js.expect_int(raw["dcl"], f"{where}.dcl"),
        kind=raw["kind"],
        part=None if part is None else js.expect_str(part, f"{where}.part"),
        processes=tuple(
            _process_from(p, f"{where}.processes[{i}]") for i, p in enumerate(js.expect_list(raw.get("processes", []), where))
        ),
        activities=tuple(
            _activity_from(a, f"{where}.activities[{i}]") for i, a in enumerate(js.expect_list(raw.get("activities", []), where))
        ),
        precedence=_precedence_from(raw.get("precedence", []), f"{where}.precedence"),
    )


def schedule_from_dict(raw: object, where: str = "schedule") -> Schedule:
    raw = js.expect_object(raw, where)
    js.check_keys(raw, where, ("entries",), ("makespan",))
    entries = []
    for i, item in enumerate(js.expect_list(raw["entries"], f"{where}.entries")):
        w = f"{where}.entries[{i}]"
        item = js.expect_object(item, w)
        js.check_keys(item, w, ("action", "assembler", "start", "finish"))
        entries.append(
            ScheduledAction(
                js.expect_str(item["action"], w),
                js.expect_str(item["assembler"], w),
                js.as_time(item["start"], f"{w}.start"),
                js.as_time(item["finish"], f"{w}.finish"),
            )
        )
    schedule = Schedule(tuple(entries))
    if "makespan" in raw and js.as_time(raw["makespan"], f"{where}.makespan") != schedule.makespan:
        raise ModelError("FORMAT", f"{where}.makespan disagrees with the entries")
    return schedule


def schedule_to_dict(schedule: Schedule) -> dict:
    return {
        "makespan": js.time_json(schedule.makespan),
        "entries": [
            {
                "action": e.action,
                "assembler": e.assembler,
                "start": js.time_json(e.start),
                "finish": js.time_json(e.finish),
            }
            for e in schedule.entries
        ],
    }


def apm_from_dict(obj: dict) -> AssemblyProcessModel:
    kind = js.check_kind(obj, "apm-pi", "apm-ps")
    stage = kind.removeprefix("apm-")
    js.check_keys(obj, kind, ("kind", "id", "product", "catalog", "root"), ("platform_binding",))
    binding = None
    if obj.get("platform_binding") is not None:
        raw = js.expect_object(obj["platform_binding"], "platform_binding")
        js.check_keys(raw, "platform_binding", ("platform", "schedule"))
        binding = PlatformBinding(js.expect_str(raw["platform"], "platform"), schedule_from_dict(raw["schedule"]))
    return AssemblyProcessModel(
        id=js.expect_str(obj["id"], "id"),
        stage=stage,
        product=js.expect_str(obj["product"], "product"),
        catalog=js.expect_str(obj["catalog"], "catalog"),
        root=_process_from(obj["root"], "root"),
        binding=binding,
    )


def _activity_to(act: Activity) -> dict:
    out: dict = {"id": act.id, "connector": act.connector}
    if act.activities:
        out["activities"] = [_activity_to(a) for a in act.activities]
    if act.operations:
        out["operations"] = [
            {
                "id": op.id,
                "kind": op.kind,
                "actions": [{"id": i.id, "action": i.action, "bindings": dict(i.bindings)} for i in op.actions],
                "precedence": _precedence_to(op.precedence),
            }
            for op in act.operations
        ]
    out["precedence"] = _precedence_to(act.precedence)
    return out


def _process_to(proc: Process) -> dict:
    out: dict = {"id": proc.id, "dcl": proc.dcl, "kind": proc.kind, "part": proc.part}
    if proc.processes:
        out["processes"] = [_process_to(p) for p in proc.processes]
    out["activities"] = [_activity_to(a) for a in proc.activities]
    out["precedence"] = _precedence_to(proc.precedence)
    return out


def apm_to_dict(model: AssemblyProcessModel) -> dict:
    out: dict = {
        "kind": model.kind,
        "id": model.id,
        "product": model.product,
        "catalog": model.catalog,
        "root": _process_to(model.root),
    }
    if model.binding is not None:
        out["platform_binding"] = {
            "platform": model.binding.platform,
            "schedule": schedule_to_dict(model.binding.schedule),
        }
    return out


def catalog_from_dict(obj: dict) -> ActionCatalog:
    js.check_kind(obj, "catalog")
    js.check_keys(obj, "catalog", ("kind", "id", "actions"))
    entries = []
    for i, raw in enumerate(js.expect_list(obj["actions"], "actions")):
        where = f"actions[{i}]"
        raw = js.expect_object(raw, where)
        js.check_keys(raw, where, ("id", "skill"), ("params",))
        entries.append(
            CatalogEntry(
                js.expect_str(raw["id"], where),
                js.expect_str(raw["skill"], where),
                tuple(js.str_list(raw.get("params", []), f"{where}.params")),
            )
        )
    return ActionCatalog(js.expect_str(obj["id"], "id"), tuple(entries))


def catalog_to_dict(catalog: ActionCatalog) -> dict:
    return {
        "kind": "catalog",
        "id": catalog.id,
        "actions": [{"id": e.id, "skill": e.skill, "params": list(e.params)} for e in catalog.entries],
    }
