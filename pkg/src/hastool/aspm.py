"""Assembly system platform models: subsystems, assemblers, ports and connectors."""

from __future__ import annotations

import heapq
from collections import Counter
from dataclasses import dataclass, field, replace
from decimal import Decimal
from typing import TYPE_CHECKING, Iterable, Iterator, Literal

from . import _schema as js
from .errors import ModelError
from .validation import Collector, ValidationReport

if TYPE_CHECKING:
    from .apm import ActionCatalog


@dataclass(frozen=True)
class Port:
    id: str
    direction: Literal["input", "output"]


@dataclass(frozen=True)
class Assembler:
    id: str
    kind: Literal["human", "machine"]
    skills: frozenset[str]


@dataclass(frozen=True)
class AssemblySubSystem:
    id: str
    children: tuple[AssemblySubSystem, ...] = ()
    ports: tuple[Port, ...] = ()
    assembler: Assembler | None = None


@dataclass(frozen=True)
class PortRef:
    subsystem: str
    port: str

    def __str__(self) -> str:
        return f"{self.subsystem}.{self.port}"


@dataclass(frozen=True)
class PlatformConnector:
    id: str
    kind: Literal["active", "passive"]
    source: PortRef
    target: PortRef
    transit_time: Decimal | None = None
    # None means unbounded; only meaningful for passive connectors.
    capacity: int | None = None


@dataclass(frozen=True)
class Route:
    transit: Decimal
    connectors: tuple[str, ...]


@dataclass(frozen=True)
class PlatformModel:
    id: str
    subsystems: tuple[AssemblySubSystem, ...]
    connectors: tuple[PlatformConnector, ...] = ()
    durations: dict[tuple[str, str], Decimal] = field(default_factory=dict)

    def iter_subsystems(self) -> Iterator[tuple[AssemblySubSystem, str | None]]:
        stack: list[tuple[AssemblySubSystem, str | None]] = [(s, None) for s in reversed(self.subsystems)]
        while stack:
            sub, parent = stack.pop()
            yield sub, parent
            stack.extend((c, sub.id) for c in reversed(sub.children))

    def assemblers(self) -> list[Assembler]:
        found = [s.assembler for s, _ in self.iter_subsystems() if s.assembler is not None]
        return sorted(found, key=lambda a: a.id)

    def assembler(self, assembler_id: str) -> Assembler | None:
        for a in self.assemblers():
            if a.id == assembler_id:
                return a
        return None

    def duration(self, skill: str, assembler_id: str) -> Decimal | None:
        return self.durations.get((skill, assembler_id))

    def connector(self, connector_id: str) -> PlatformConnector | None:
        for c in self.connectors:
            if c.id == connector_id:
                return c
        return None


def validate_aspm(model: PlatformModel) -> ValidationReport:
    out = Collector()
    subsystems = list(model.iter_subsystems())
    for sid, n in Counter(s.id for s, _ in subsystems).items():
        if n > 1:
            out.error("DUPLICATE_SUBSYSTEM", sid)
    asm_ids = Counter(s.assembler.id for s, _ in subsystems if s.assembler is not None)
    for aid, n in asm_ids.items():
        if n > 1:
            out.error("DUPLICATE_ASSEMBLER", aid)
    if not asm_ids:
        out.error("NO_ASSEMBLER", model.id, "platform needs at least one assembler")

    ports: dict[tuple[str, str], Port] = {}
    for sub, _ in subsystems:
        if sub.children and sub.assembler is not None:
            out.error("ASSEMBLER_PLACEMENT", sub.id, "only leaf subsystems carry an assembler")
        if not sub.children and sub.assembler is None:
            out.error("ASSEMBLER_MISSING", sub.id, "a leaf subsystem must carry an assembler")
        for pid, n in Counter(p.id for p in sub.ports).items():
            if n > 1:
                out.error("DUPLICATE_PORT", f"{sub.id}.{pid}")
        for port in sub.ports:
            if port.direction not in ("input", "output"):
                out.error("PORT_DIRECTION", f"{sub.id}.{port.id}", f"unknown direction {port.direction!r}")
            ports[(sub.id, port.id)] = port
        asm = sub.assembler
        if asm is None:
            continue
        if not asm.skills:
            out.error("SKILLS_EMPTY", asm.id)
        if asm.kind not in ("human", "machine"):
            out.error("ASSEMBLER_KIND", asm.id, f"unknown assembler kind {asm.kind!r}")
        for skill in sorted(asm.skills):
            if (skill, asm.id) not in model.durations:
                out.error("DURATION_MISSING", asm.id, f"no duration for skill {skill!r}")

    for cid, n in Counter(c.id for c in model.connectors).items():
        if n > 1:
            out.error("DUPLICATE_CONNECTOR", cid)
    for conn in model.connectors:
        for ref, wanted in ((conn.source, "output"), (conn.target, "input")):
            port = ports.get((ref.subsystem, ref.port))
            if port is None:
                out.error("UNKNOWN_PORT", conn.id, f"port {ref} does not exist")
            elif port.direction != wanted:
                out.error("PORT_DIRECTION", conn.id, f"port {ref} must be an {wanted} port")
        if conn.kind == "active":
            if conn.transit_time is None or conn.transit_time < 0:
                out.error("TRANSIT_TIME", conn.id, "active connectors need a non-negative transit_time")
            if conn.capacity is not None:
                out.error("CONNECTOR_ATTRIBUTE", conn.id, "capacity applies to passive connectors only")
        elif conn.kind == "passive":
            if conn.transit_time is not None:
                out.error("CONNECTOR_ATTRIBUTE", conn.id, "transit_time applies to active connectors only")
            if conn.capacity is not None and conn.capacity < 1:
                out.error("CAPACITY", conn.id, "capacity must be a positive integer")
        else:
            out.error("CONNECTOR_KIND", conn.id, f"unknown connector kind {conn.kind!r}")

    holders = {(skill, a.id) for a in model.assemblers() for skill in a.skills}
    for (skill, aid), value in sorted(model.durations.items()):
        if value <= 0:
            out.error("DURATION_NONPOSITIVE", aid, f"duration for {skill!r} must be positive")
        if (skill, aid) not in holders:
            out.warn("DURATION_UNUSED", aid, f"assembler does not hold skill {skill!r}")
    return out.report()


def platform_skill_set(model: PlatformModel) -> frozenset[str]:
    return frozenset(skill for a in model.assemblers() for skill in a.skills)


def capability_gap(required: Iterable[str], model: PlatformModel, catalog: ActionCatalog) -> frozenset[str]:
    """Required actions whose realizing skill no assembler of ``model`` holds."""
    skills = platform_skill_set(model)
    gap = set()
    for action in required:
        entry = catalog.get(action)
        if entry is None:
            raise ModelError("UNKNOWN_ACTION", f"action {action!r} is not in catalog {catalog.id}")
        if entry.skill not in skills:
            gap.add(action)
    return frozenset(gap)


def _leaf_assemblers(sub: AssemblySubSystem) -> list[str]:
    if sub.assembler is not None:
        return [sub.assembler.id]
    return [a for c in sub.children for a in _leaf_assemblers(c)]


def routes(model: PlatformModel) -> dict[tuple[str, str], Route]:
    """Cheapest material route between every ordered pair of assemblers.

    A connector leaving subsystem S and entering subsystem T links every
    assembler under S to every assembler under T. Passive connectors cost
    nothing; active ones cost their transit time. Ties go to fewer hops, then
    to the lexicographically smaller connector path. Unreachable pairs are
    absent from the result.
    """
    by_id = {s.id: s for s, _ in model.iter_subsystems()}
    edges: dict[str, list[tuple[str, PlatformConnector]]] = {}
    for conn in model.connectors:
        src, dst = by_id.get(conn.source.subsystem), by_id.get(conn.target.subsystem)
        if src is None or dst is None:
            continue
        for a in _leaf_assemblers(src):
            for b in _leaf_assemblers(dst):
                if a != b:
                    edges.setdefault(a, []).append((b, conn))

    result: dict[tuple[str, str], Route] = {}
    for origin in (a.id for a in model.assemblers()):
        heap: list[tuple[Decimal, int, tuple[str, ...], str]] = [(Decimal(0), 0, (), origin)]
        done: set[str] = set()
        while heap:
            cost, hops, path, node = heapq.heappop(heap)
            if node in done:
                continue
            done.add(node)
            result[(origin, node)] = Route(cost, path)
            for nxt, conn in edges.get(node, ()):
                if nxt not in done:
                    step = conn.transit_time if conn.kind == "active" and conn.transit_time is not None else Decimal(0)
                    heapq.heappush(heap, (cost + step, hops + 1, path + (conn.id,), nxt))
    return result


def scale_durations(model: PlatformModel, factor: Decimal) -> PlatformModel:
    """Multiply every duration and every active transit time by ``factor``."""
    factor = Decimal(factor)
    connectors = tuple(
        replace(c, transit_time=c.transit_time * factor) if c.transit_time is not None else c for c in model.connectors
    )
    durations = {key: value * factor for key, value in model.durations.items()}
    return replace(model, connectors=connectors, durations=durations)


def without_skill(model: PlatformModel, skill: str) -> PlatformModel:
    """Copy of ``model`` in which no assembler holds ``skill`` any more."""

    def strip(sub: AssemblySubSystem) -> AssemblySubSystem:
        asm = sub.assembler
        if asm is not None:
            asm = replace(asm, skills=asm.skills - {skill})
        return replace(sub, children=tuple(strip(c) for c in sub.children), assembler=asm)

    durations = {k: v for k, v in model.durations.items() if k[0] != skill}
    return replace(model, subsystems=tuple(strip(s) for s in model.subsystems), durations=durations)


# -- JSON --------------------------------------------------------------------


def _subsystem_from_dict(obj: object, where: str) -> AssemblySubSystem:
    obj = js.expect_object(obj, where)
    js.check_keys(obj, where, ("id",), ("children", "ports", "assembler"))
    ports = []
    for i, raw in enumerate(js.expect_list(obj.get("ports", []), f"{where}.ports")):
        raw = js.expect_object(raw, f"{where}.ports[{i}]")
        js.check_keys(raw, f"{where}.ports[{i}]", ("id", "direction"))
        ports.append(Port(js.expect_str(raw["id"], "port id"), raw["direction"]))
    assembler = None
    if obj.get("assembler") is not None:
        raw = js.expect_object(obj["assembler"], f"{where}.assembler")
        js.check_keys(raw, f"{where}.assembler", ("id", "kind", "skills"))
        assembler = Assembler(
            js.expect_str(raw["id"], "assembler id"), raw["kind"], frozenset(js.str_list(raw["skills"], "skills"))
        )
    children = tuple(
        _subsystem_from_dict(c, f"{where}.children[{i}]")
        for i, c in enumerate(js.expect_list(obj.get("children", []), f"{where}.children"))
    )
    return AssemblySubSystem(js.expect_str(obj["id"], f"{where}.id"), children, tuple(ports), assembler)


def _port_ref(obj: object, where: str) -> PortRef:
    obj = js.expect_object(obj, where)
    js.check_keys(obj, where, ("subsystem", "port"))
    return PortRef(js.expect_str(obj["subsystem"], where), js.expect_str(obj["port"], where))


def aspm_from_dict(obj: dict) -> PlatformModel:
    js.check_kind(obj, "aspm")
    js.check_keys(obj, "aspm", ("kind", "id", "subsystems"), ("connectors", "durations"))
    subsystems = tuple(
        _subsystem_from_dict(s, f"subsystems[{i}]") for i, s in enumerate(js.expect_list(obj["subsystems"], "subsystems"))
    )
    connectors = []
    for i, raw in enumerate(js.expect_list(obj.get("connectors", []), "connectors")):
        where = f"connectors[{i}]"
        raw = js.expect_object(raw, where)
        js.check_keys(raw, where, ("id", "kind", "from", "to"), ("transit_time", "capacity"))
        transit = raw.get("transit_time")
        capacity = raw.get("capacity")
        connectors.append(
            PlatformConnector(
                id=js.expect_str(raw["id"], f"{where}.id"),
                kind=raw["kind"],
                source=_port_ref(raw["from"], f"{where}.from"),
                target=_port_ref(raw["to"], f"{where}.to"),
                transit_time=None if transit is None else js.as_time(transit, f"{where}.transit_time"),
                capacity=None if capacity is None else js.expect_int(capacity, f"{where}.capacity"),
            )
        )
    durations: dict[tuple[str, str], Decimal] = {}
    for i, raw in enumerate(js.expect_list(obj.get("durations", []), "durations")):
        where = f"durations[{i}]"
        raw = js.expect_object(raw, where)
        js.check_keys(raw, where, ("skill", "assembler", "duration"))
        key = (js.expect_str(raw["skill"], where), js.expect_str(raw["assembler"], where))
        if key in durations:
            raise ModelError("FORMAT", f"{where}: duplicate duration entry for {key}")
        durations[key] = js.as_time(raw["duration"], f"{where}.duration")
    return PlatformModel(js.expect_str(obj["id"], "id"), subsystems, tuple(connectors), durations)


def _subsystem_to_dict(sub: AssemblySubSystem) -> dict:
    out: dict = {"id": sub.id, "ports": [{"id": p.id, "direction": p.direction} for p in sub.ports]}
    if sub.assembler is not None:
        a = sub.assembler
        out["assembler"] = {"id": a.id, "kind": a.kind, "skills": sorted(a.skills)}
    if sub.children:
        out["children"] = [_subsystem_to_dict(c) for c in sub.children]
    return out


def aspm_to_dict(model: PlatformModel) -> dict:
    connectors = []
    for c in model.connectors:
        raw: dict = {
            "id": c.id,
            "kind": c.kind,
            "from": {"subsystem": c.source.subsystem, "port": c.source.port},
            "to": {"subsystem": c.target.subsystem, "port": c.target.port},
        }
        if c.transit_time is not None:
            raw["transit_time"] = js.time_json(c.transit_time)
        if c.kind == "passive":
            raw["capacity"] = c.capacity
        connectors.append(raw)
    return {
        "kind": "aspm",
        "id": model.id,
        "subsystems": [_subsystem_to_dict(s) for s in model.subsystems],
        "connectors": connectors,
        "durations": [
            {"skill": s, "assembler": a, "duration": js.time_json(d)} for (s, a), d in sorted(model.durations.items())
        ],
    }
