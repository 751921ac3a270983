"""Deterministic discrete-event evaluation of a platform-specific process model.

The embedded schedule is used as a dispatch template: each assembler works
through its own actions in template order, unit after unit. An action of
unit ``k`` starts once the assembler is free, its same-unit predecessors have
delivered, and the unit's release offset plus the action's template start
has passed. Handovers between assemblers that travel through passive
connectors occupy a slot there until the consumer starts.

A bounded connector limits work in progress across units: a handover blocks
its producing assembler while parts of earlier units fill the connector.
Parts of one unit are always staged, since the one-unit schedule already
commits to them; when they alone exceed the bound the overflow is reported
but adds no delay. One unit therefore replays its schedule exactly, and the
earliest unfinished unit can always proceed, so dispatch never deadlocks.
"""

from __future__ import annotations

import heapq
from dataclasses import dataclass, field
from decimal import ROUND_HALF_EVEN, Decimal
from typing import Sequence

from . import _schema as js
from .apm import AssemblyProcessModel, flatten_to_action_graph
from .aspm import PlatformModel, routes
from .errors import ModelError, PlanningError

ZERO = Decimal(0)
FRACTION = Decimal("0.000001")


@dataclass(frozen=True)
class SimConfig:
    quantity: int = 1
    inter_unit_release: Decimal = ZERO
    quality_params: tuple[tuple[str, str], ...] = ()


@dataclass(frozen=True)
class CapacityEvent:
    connector: str
    unit: int
    action: str
    blocked_from: Decimal
    blocked_until: Decimal
    # "blocked": waited for earlier units; "overflow": one unit's own parts exceed the bound.
    kind: str = "blocked"


@dataclass(frozen=True)
class SimReport:
    id: str
    apm: str
    platform: str
    quantity: int
    inter_unit_release: Decimal
    total_makespan: Decimal
    per_unit_makespan: Decimal
    utilization: dict[str, Decimal]
    busy_time: dict[str, Decimal]
    passive_buffer_peak: dict[str, int]
    capacity_events: tuple[CapacityEvent, ...] = ()
    quality_params: tuple[tuple[str, str], ...] = ()

    @property
    def mean_utilization(self) -> Decimal:
        if not self.utilization:
            return ZERO
        return (sum(self.utilization.values(), ZERO) / len(self.utilization)).quantize(FRACTION, ROUND_HALF_EVEN)


def _ratio(part: Decimal, whole: Decimal) -> Decimal:
    if whole == 0:
        return ZERO
    return (part / whole).quantize(FRACTION, ROUND_HALF_EVEN)


@dataclass
class _Handover:
    producer: tuple[int, str]
    consumer: tuple[int, str]
    lag: Decimal
    buffers: tuple[str, ...]
    blocked_since: Decimal | None = None
    full: str = ""


@dataclass
class _State:
    now: Decimal = ZERO
    seq: int = 0
    events: list = field(default_factory=list)

    def push(self, time: Decimal, kind: str, payload: object) -> None:
        self.seq += 1
        heapq.heappush(self.events, (time, self.seq, kind, payload))


def simulate(
    ps_apm: AssemblyProcessModel,
    platform: PlatformModel,
    config: SimConfig = SimConfig(),
    *,
    report_id: str | None = None,
) -> SimReport:
    if ps_apm.binding is None:
        raise ModelError("STAGE_BINDING", f"{ps_apm.id} carries no platform binding")
    if ps_apm.binding.platform != platform.id:
        raise ModelError("BINDING_MISMATCH", f"{ps_apm.id} is bound to {ps_apm.binding.platform}, not {platform.id}")
    if config.quantity < 1:
        raise ModelError("FORMAT", "quantity must be at least 1")
    if config.inter_unit_release < 0:
        raise ModelError("FORMAT", "inter_unit_release must be non-negative")

    graph = flatten_to_action_graph(ps_apm)
    template = ps_apm.binding.schedule.by_action()
    if set(template) != set(graph.actions):
        raise ModelError("SCHEDULE_COVERAGE", f"schedule of {ps_apm.id} does not cover its actions exactly")
    table = routes(platform)
    capacity = {c.id: c.capacity for c in platform.connectors if c.kind == "passive"}
    units = range(1, config.quantity + 1)
    release = {k: config.inter_unit_release * (k - 1) for k in units}

    # Static per-unit handover structure, instantiated for every unit below.
    edge_info: dict[tuple[str, str], tuple[Decimal, tuple[str, ...]]] = {}
    for u, v in sorted(graph.edges):
        mu, mv = template[u].assembler, template[v].assembler
        if mu == mv:
            edge_info[u, v] = (ZERO, ())
            continue
        route = table.get((mu, mv))
        intra = graph.intra_operation(u, v)
        if route is None:
            if intra:
                raise PlanningError("NO_ROUTE", f"no route from {mu} to {mv} for {u} -> {v}")
            edge_info[u, v] = (ZERO, ())
            continue
        lag = route.transit if intra else ZERO
        edge_info[u, v] = (lag, tuple(c for c in route.connectors if c in capacity))

    outgoing: dict[tuple[int, str], list[_Handover]] = {}
    incoming: dict[tuple[int, str], list[_Handover]] = {}
    pending: dict[tuple[int, str], int] = {}
    ready_at: dict[tuple[int, str], Decimal] = {}
    queues: dict[str, list[tuple[int, str]]] = {a.id: [] for a in platform.assemblers()}
    for k in units:
        for aid, entry in template.items():
            item = (k, aid)
            pending[item] = 0
            ready_at[item] = release[k] + entry.start
            queues.setdefault(entry.assembler, []).append(item)
        for (u, v), (lag, buffers) in edge_info.items():
            h = _Handover((k, u), (k, v), lag, buffers)
            outgoing.setdefault((k, u), []).append(h)
            incoming.setdefault((k, v), []).append(h)
            pending[k, v] += 1
    for queue in queues.values():
        queue.sort(key=lambda item: (item[0], template[item[1]].start, item[1]))

    st = _State()
    position = {m: 0 for m in queues}
    busy = {m: False for m in queues}
    outstanding = {m: 0 for m in queues}
    busy_time = {m: ZERO for m in queues}
    occupancy: dict[str, dict[int, int]] = {c: {} for c in capacity}
    peak = {c: 0 for c in capacity}
    blocked: list[_Handover] = []
    finished: dict[tuple[int, str], Decimal] = {}
    cap_events: list[CapacityEvent] = []
    wake: dict[str, Decimal] = {}

    def full(c: str, unit: int) -> bool:
        limit = capacity[c]
        return limit is not None and sum(n for k, n in occupancy[c].items() if k < unit) >= limit

    def fits(h: _Handover) -> bool:
        return not any(full(c, h.producer[0]) for c in h.buffers)

    def deliver(h: _Handover) -> None:
        unit = h.producer[0]
        for c in h.buffers:
            occupancy[c][unit] = occupancy[c].get(unit, 0) + 1
            held = sum(occupancy[c].values())
            peak[c] = max(peak[c], held)
            if capacity[c] is not None and held > capacity[c]:
                cap_events.append(CapacityEvent(c, unit, h.producer[1], st.now, st.now, "overflow"))
        ready_at[h.consumer] = max(ready_at[h.consumer], st.now + h.lag)
        pending[h.consumer] -= 1

    def retry_blocked() -> None:
        for h in list(blocked):
            if not fits(h):
                continue
            blocked.remove(h)
            cap_events.append(CapacityEvent(h.full, h.producer[0], h.producer[1], h.blocked_since, st.now))
            deliver(h)
            producer = template[h.producer[1]].assembler
            outstanding[producer] -= 1

    def try_start(m: str) -> bool:
        if busy[m] or outstanding[m] or position[m] == len(queues[m]):
            return False
        item = queues[m][position[m]]
        if pending[item]:
            return False
        if ready_at[item] > st.now:
            if wake.get(m) != ready_at[item]:
                wake[m] = ready_at[item]
                st.push(ready_at[item], "wake", m)
            return False
        for h in incoming.get(item, ()):
            for c in h.buffers:
                occupancy[c][item[0]] -= 1
        entry = template[item[1]]
        st.push(st.now + (entry.finish - entry.start), "finish", item)
        busy[m] = True
        position[m] += 1
        retry_blocked()
        return True

    def dispatch() -> None:
        progress = True
        while progress:
            progress = False
            for m in sorted(queues):
                progress |= try_start(m)

    dispatch()
    while st.events:
        st.now, _, kind, payload = heapq.heappop(st.events)
        if kind == "finish":
            item = payload
            entry = template[item[1]]
            m = entry.assembler
            busy[m] = False
            busy_time[m] += entry.finish - entry.start
            finished[item] = st.now
            for h in outgoing.get(item, ()):
                if fits(h):
                    deliver(h)
                else:
                    h.blocked_since = st.now
                    h.full = next(c for c in h.buffers if full(c, item[0]))
                    blocked.append(h)
                    outstanding[m] += 1
        dispatch()

    if len(finished) != len(pending):
        raise PlanningError("DEADLOCK", "dispatch template stalled before every action ran")

    total = max(finished.values(), default=ZERO)
    per_unit = max(
        (max(t for (k2, _), t in finished.items() if k2 == k) - release[k] for k in units),
        default=ZERO,
    )
    assemblers = sorted(queues)
    return SimReport(
        id=report_id or _report_id(ps_apm.id),
        apm=ps_apm.id,
        platform=platform.id,
        quantity=config.quantity,
        inter_unit_release=config.inter_unit_release,
        total_makespan=total,
        per_unit_makespan=per_unit,
        utilization={m: _ratio(busy_time[m], total) for m in assemblers},
        busy_time={m: busy_time[m] for m in assemblers},
        passive_buffer_peak=dict(sorted(peak.items())),
        capacity_events=tuple(cap_events),
        quality_params=tuple(config.quality_params),
    )


def _report_id(model_id: str) -> str:
    from .xform import _retarget_uri

    retargeted = _retarget_uri(model_id, "sim-report")
    return retargeted if retargeted != model_id else f"{model_id}-report"


@dataclass(frozen=True)
class RankedScenario:
    rank: int
    label: str
    report: SimReport


def compare_scenarios(reports: Sequence[tuple[str, SimReport]]) -> list[RankedScenario]:
    """Rank by total makespan, then higher mean utilization, then label."""
    if not reports:
        raise ModelError("FORMAT", "nothing to compare")
    ordered = sorted(reports, key=lambda lr: (lr[1].total_makespan, -lr[1].mean_utilization, lr[0]))
    return [RankedScenario(i, label, report) for i, (label, report) in enumerate(ordered, start=1)]


def _table(header: list[str], rows: list[list[str]]) -> str:
    widths = [max(len(r[i]) for r in [header, *rows]) for i in range(len(header))]
    lines = ["  ".join(cell.ljust(w) for cell, w in zip(row, widths)).rstrip() for row in [header, *rows]]
    lines.insert(1, "  ".join("-" * w for w in widths))
    return "\n".join(lines) + "\n"


def format_comparison(ranking: list[RankedScenario]) -> str:
    rows = [
        [str(r.rank), r.label, str(r.report.total_makespan), str(r.report.per_unit_makespan), str(r.report.mean_utilization)]
        for r in ranking
    ]
    return _table(["rank", "scenario", "total_makespan", "per_unit_makespan", "mean_utilization"], rows)


def format_report(report: SimReport) -> str:
    head = (
        f"report {report.id}\nprocess {report.apm} on {report.platform}, quantity {report.quantity}\n"
        f"total makespan {report.total_makespan}, per-unit makespan {report.per_unit_makespan}\n\n"
    )
    rows = [[m, str(report.busy_time[m]), str(report.utilization[m])] for m in report.utilization]
    body = _table(["assembler", "busy", "utilization"], rows)
    if report.passive_buffer_peak:
        rows = [[c, str(n)] for c, n in report.passive_buffer_peak.items()]
        body += "\n" + _table(["passive connector", "peak"], rows)
    return head + body


# -- JSON ---------------------------------------------------------------------


def report_to_dict(report: SimReport) -> dict:
    return {
        "kind": "sim-report",
        "id": report.id,
        "apm": report.apm,
        "platform": report.platform,
        "quantity": report.quantity,
        "inter_unit_release": js.time_json(report.inter_unit_release),
        "total_makespan": js.time_json(report.total_makespan),
        "per_unit_makespan": js.time_json(report.per_unit_makespan),
        "utilization": {m: js.time_json(v) for m, v in report.utilization.items()},
        "busy_time": {m: js.time_json(v) for m, v in report.busy_time.items()},
        "passive_buffer_peak": dict(report.passive_buffer_peak),
        "capacity_events": [
            {
                "connector": e.connector,
                "unit": e.unit,
                "action": e.action,
                "blocked_from": js.time_json(e.blocked_from),
                "blocked_until": js.time_json(e.blocked_until),
                "kind": e.kind,
            }
            for e in report.capacity_events
        ],
        "quality_params": dict(report.quality_params),
    }


def report_from_dict(obj: dict) -> SimReport:
    js.check_kind(obj, "sim-report")
    fields = (
        "kind", "id", "apm", "platform", "quantity", "inter_unit_release", "total_makespan",
        "per_unit_makespan", "utilization", "busy_time", "passive_buffer_peak",
    )
    js.check_keys(obj, "sim-report", fields, ("capacity_events", "quality_params"))

    def times(key: str) -> dict[str, Decimal]:
        raw = js.expect_object(obj[key], key)
        return {k: js.as_time(v, f"{key}.{k}") for k, v in raw.items()}

    events = []
    for i, raw in enumerate(js.expect_list(obj.get("capacity_events", []), "capacity_events")):
        where = f"capacity_events[{i}]"
        raw = js.expect_object(raw, where)
        js.check_keys(raw, where, ("connector", "unit", "action", "blocked_from", "blocked_until", "kind"))
        kind = js.expect_str(raw["kind"], where)
        if kind not in ("blocked", "overflow"):
            raise ModelError("FORMAT", f"{where}.kind: unknown capacity event kind {kind!r}")
        events.append(
            CapacityEvent(
                js.expect_str(raw["connector"], where),
                js.expect_int(raw["unit"], where),
                js.expect_str(raw["action"], where),
                js.as_time(raw["blocked_from"], where),
                js.as_time(raw["blocked_until"], where),
                kind,
            )
        )
    peaks = js.expect_object(obj["passive_buffer_peak"], "passive_buffer_peak")
    quality = js.expect_object(obj.get("quality_params", {}), "quality_params")
    return SimReport(
        id=js.expect_str(obj["id"], "id"),
        apm=js.expect_str(obj["apm"], "apm"),
        platform=js.expect_str(obj["platform"], "platform"),
        quantity=js.expect_int(obj["quantity"], "quantity"),
        inter_unit_release=js.as_time(obj["inter_unit_release"], "inter_unit_release"),
        total_makespan=js.as_time(obj["total_makespan"], "total_makespan"),
        per_unit_makespan=js.as_time(obj["per_unit_makespan"], "per_unit_makespan"),
        utilization=times("utilization"),
        busy_time=times("busy_time"),
        passive_buffer_peak={k: js.expect_int(v, f"passive_buffer_peak.{k}") for k, v in peaks.items()},
        capacity_events=tuple(events),
        quality_params=tuple((k, js.expect_str(v, f"quality_params.{k}")) for k, v in quality.items()),
    )
