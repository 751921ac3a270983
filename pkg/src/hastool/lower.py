"""Refinement of a platform-independent process model onto a concrete platform.

Lowering flattens the process hierarchy into an action DAG, assigns every
action instance to a skill-capable assembler and times it. Two strategies
exist: a list heuristic and an exact branch-and-bound, both minimizing
makespan. When two actions of the same operation run on different
assemblers, the successor waits for the platform transit time between them.
"""

from __future__ import annotations

import itertools
import logging
from dataclasses import dataclass
from decimal import Decimal
from typing import Literal

from .apm import (
    ActionCatalog,
    AssemblyProcessModel,
    PlatformBinding,
    Schedule,
    ScheduledAction,
    flatten_to_action_graph,
    required_actions,
)
from .aspm import PlatformModel, Route, capability_gap, routes
from .errors import Infeasible, ModelError, PlanningError
from .validation import Collector, ValidationReport

__all__ = [
    "EXACT_MAX_ACTIONS",
    "EXACT_MAX_ASSEMBLERS",
    "Feasibility",
    "LoweringPolicy",
    "Schedule",
    "ScheduledAction",
    "check_feasibility",
    "exact_schedule",
    "list_schedule",
    "lower",
    "makespan",
    "schedule_violations",
]

logger = logging.getLogger(__name__)

EXACT_MAX_ACTIONS = 12
EXACT_MAX_ASSEMBLERS = 3
ZERO = Decimal(0)


@dataclass(frozen=True)
class LoweringPolicy:
    strategy: Literal["list", "exact"] = "list"


@dataclass(frozen=True)
class Feasibility:
    feasible: bool
    gap: frozenset[str] = frozenset()


def check_feasibility(apm: AssemblyProcessModel, platform: PlatformModel, catalog: ActionCatalog) -> Feasibility:
    gap = capability_gap(required_actions(apm), platform, catalog)
    return Feasibility(not gap, gap)


@dataclass
class _Problem:
    actions: list[str]
    preds: dict[str, tuple[str, ...]]
    succs: dict[str, tuple[str, ...]]
    capable: dict[str, tuple[str, ...]]
    duration: dict[tuple[str, str], Decimal]
    lagged: frozenset[tuple[str, str]]
    routes: dict[tuple[str, str], Route]
    assemblers: list[str]

    def lag(self, u: str, v: str, mu: str, mv: str) -> Decimal | None:
        if mu == mv or (u, v) not in self.lagged:
            return ZERO
        route = self.routes.get((mu, mv))
        return None if route is None else route.transit

    def start_on(self, action: str, assembler: str, placed: dict, free: dict) -> Decimal | None:
        start = free[assembler]
        for u in self.preds[action]:
            mu, _, fu = placed[u]
            lag = self.lag(u, action, mu, assembler)
            if lag is None:
                return None
            if fu + lag > start:
                start = fu + lag
        return start


def _problem(apm: AssemblyProcessModel, platform: PlatformModel, catalog: ActionCatalog) -> _Problem:
    verdict = check_feasibility(apm, platform, catalog)
    if not verdict.feasible:
        raise Infeasible(verdict.gap)
    graph = flatten_to_action_graph(apm)
    actions = sorted(graph.actions)
    preds = {a: tuple(sorted(p)) for a, p in graph.predecessors().items()}
    succs = {a: tuple(sorted(s)) for a, s in graph.successors().items()}
    duration: dict[tuple[str, str], Decimal] = {}
    capable: dict[str, tuple[str, ...]] = {}
    for aid in actions:
        skill = catalog.skill_of(graph.actions[aid].action)
        holders = []
        for asm in platform.assemblers():
            value = platform.duration(skill, asm.id)
            if skill in asm.skills and value is not None:
                holders.append(asm.id)
                duration[aid, asm.id] = value
        capable[aid] = tuple(holders)
    lagged = frozenset((u, v) for u, v in graph.edges if graph.intra_operation(u, v))
    return _Problem(actions, preds, succs, capable, duration, lagged, routes(platform), [a.id for a in platform.assemblers()])


def _as_schedule(placed: dict[str, tuple[str, Decimal, Decimal]]) -> Schedule:
    entries = sorted((ScheduledAction(a, m, s, f) for a, (m, s, f) in placed.items()), key=lambda e: (e.start, e.action))
    return Schedule(tuple(entries))


def _list_schedule(p: _Problem, *, earliest_finish: bool = False) -> dict[str, tuple[str, Decimal, Decimal]]:
    """Serial list scheduling over the action DAG.

    Ready actions go longest first, where an action's length is its shortest
    duration on any capable assembler, ties by id. Each goes to the capable
    assembler that becomes free earliest, ties by id. ``earliest_finish``
    instead picks the assembler that would complete it first; that variant
    only seeds the exact search with a bound.
    """
    priority = {a: min(p.duration[a, m] for m in p.capable[a]) for a in p.actions}
    waiting = {a: len(p.preds[a]) for a in p.actions}
    ready = [a for a in p.actions if not waiting[a]]
    placed: dict[str, tuple[str, Decimal, Decimal]] = {}
    free = {m: ZERO for m in p.assemblers}
    while ready:
        ready.sort(key=lambda a: (-priority[a], a))
        action = ready.pop(0)
        best: tuple[Decimal, str, Decimal] | None = None
        for m in p.capable[action]:
            start = p.start_on(action, m, placed, free)
            if start is None:
                continue
            key = start + p.duration[action, m] if earliest_finish else free[m]
            if best is None or key < best[0]:
                best = (key, m, start)
        if best is None:
            raise PlanningError("NO_ROUTE", f"no assembler can receive {action} from its predecessors")
        _, m, start = best
        finish = start + p.duration[action, m]
        placed[action] = (m, start, finish)
        free[m] = finish
        for v in p.succs[action]:
            waiting[v] -= 1
            if not waiting[v]:
                ready.append(v)
    return placed


def _topological(p: _Problem) -> list[str]:
    order: list[str] = []
    waiting = {a: len(p.preds[a]) for a in p.actions}
    ready = [a for a in p.actions if not waiting[a]]
    while ready:
        a = ready.pop()
        order.append(a)
        for v in p.succs[a]:
            waiting[v] -= 1
            if not waiting[v]:
                ready.append(v)
    return order


def _exact(p: _Problem, upper: Decimal | None) -> dict[str, tuple[str, Decimal, Decimal]] | None:
    """Depth-first branch-and-bound over (action, assembler) dispatch decisions.

    Decisions are restricted to increasing ``(start, action id)`` order,
    which still reaches an optimal schedule, and are tried in ascending
    ``(start, action, assembler)`` order. The first optimal leaf reached is
    therefore the lexicographically least optimal schedule of that space.

    Pruning uses a head-plus-tail critical path that respects assembler
    availability, weighted load bounds, id order among interchangeable
    actions, and revisits of an identical partial state that cannot finish
    earlier than the first visit.
    """
    order = _topological(p)
    shortest = {a: min(p.duration[a, m] for m in p.capable[a]) for a in p.actions}
    after: dict[str, Decimal] = {}
    for a in reversed(order):
        after[a] = max((shortest[s] + after[s] for s in p.succs[a]), default=ZERO)
    # Weighted load bounds: for weights w >= 0 on assemblers, the weighted
    # sum of finishing clocks covers each action at its cheapest weighted
    # cost. Uniform weights over a subset give the classic confinement bound.
    weights = [w for w in itertools.product(range(3), repeat=len(p.assemblers)) if any(w)]
    cost = {
        w: {a: min(w[i] * p.duration[a, m] for i, m in enumerate(p.assemblers) if m in p.capable[a]) for a in p.actions}
        for w in weights
    }
    weights = [w for w in weights if any(cost[w].values())]
    # Interchangeable actions are dispatched in id order.
    signature = {
        a: (
            p.preds[a],
            p.succs[a],
            tuple((m, p.duration[a, m]) for m in p.capable[a]),
            tuple((u, a) in p.lagged for u in p.preds[a]),
            tuple((a, v) in p.lagged for v in p.succs[a]),
        )
        for a in p.actions
    }
    twin_before = {a: [b for b in p.actions if b < a and signature[b] == signature[a]] for a in p.actions}

    n = len(p.actions)
    placed: dict[str, tuple[str, Decimal, Decimal]] = {}
    free = {m: ZERO for m in p.assemblers}
    waiting = {a: len(p.preds[a]) for a in p.actions}
    seen: dict[tuple, Decimal] = {}
    best: dict | None = None
    best_value = upper

    def beaten(bound: Decimal, scale: int = 1) -> bool:
        # bound / scale compared against the incumbent without dividing.
        if best_value is None:
            return False
        target = best_value * scale
        return bound >= target if best is not None else bound > target

    def pruned(last_start: Decimal, current: Decimal) -> bool:
        avail = {m: max(free[m], last_start) for m in p.assemblers}
        head: dict[str, Decimal] = {}
        bound = current
        for a in order:
            if a in placed:
                continue
            est = last_start
            for u in p.preds[a]:
                ready = placed[u][2] if u in placed else head[u]
                if ready > est:
                    est = ready
            finish = min(max(est, avail[m]) + p.duration[a, m] for m in p.capable[a])
            head[a] = finish
            if finish + after[a] > bound:
                bound = finish + after[a]
        if beaten(bound):
            return True
        for w in weights:
            work = sum((cost[w][a] for a in p.actions if a not in placed), ZERO)
            clocks = sum((w[i] * avail[m] for i, m in enumerate(p.assemblers)), ZERO)
            if work and beaten(clocks + work, sum(w)):
                return True
        return False

    def dfs(last_start: Decimal, last_action: str, current: Decimal) -> None:
        nonlocal best, best_value
        if len(placed) == n:
            if best_value is None or current < best_value or (best is None and current <= best_value):
                best, best_value = dict(placed), current
            return
        # Everything that can still influence the future: machine clocks and
        # the location and finish of actions with unplaced successors.
        frontier = tuple(
            (a, placed[a][0], placed[a][2]) for a in sorted(placed) if any(v not in placed for v in p.succs[a])
        )
        state = (frozenset(placed), last_start, last_action, tuple(free[m] for m in p.assemblers), frontier)
        if state in seen and seen[state] <= current:
            return
        seen[state] = current
        if pruned(last_start, current):
            return
        candidates = []
        for a in p.actions:
            if a in placed or waiting[a] or any(b not in placed for b in twin_before[a]):
                continue
            for m in p.capable[a]:
                start = p.start_on(a, m, placed, free)
                if start is not None and (start, a) > (last_start, last_action):
                    candidates.append((start, a, m))
        candidates.sort()
        for start, a, m in candidates:
            finish = start + p.duration[a, m]
            previous = free[m]
            placed[a] = (m, start, finish)
            free[m] = finish
            for v in p.succs[a]:
                waiting[v] -= 1
            dfs(start, a, max(current, finish))
            for v in p.succs[a]:
                waiting[v] += 1
            free[m] = previous
            del placed[a]

    dfs(ZERO, "", ZERO)
    return best


def _check_exact_cap(p: _Problem) -> None:
    if len(p.actions) > EXACT_MAX_ACTIONS or len(p.assemblers) > EXACT_MAX_ASSEMBLERS:
        raise PlanningError(
            "EXACT_LIMIT",
            f"exact lowering handles at most {EXACT_MAX_ACTIONS} actions and {EXACT_MAX_ASSEMBLERS} assemblers "
            f"(got {len(p.actions)} and {len(p.assemblers)})",
        )


def list_schedule(apm: AssemblyProcessModel, platform: PlatformModel, catalog: ActionCatalog) -> Schedule:
    return _as_schedule(_list_schedule(_problem(apm, platform, catalog)))


def exact_schedule(apm: AssemblyProcessModel, platform: PlatformModel, catalog: ActionCatalog) -> Schedule:
    p = _problem(apm, platform, catalog)
    _check_exact_cap(p)
    upper: Decimal | None = None
    for variant in (False, True):
        try:
            placed = _list_schedule(p, earliest_finish=variant)
        except PlanningError:
            continue
        value = max((f for _, _, f in placed.values()), default=ZERO)
        upper = value if upper is None else min(upper, value)
    found = _exact(p, upper)
    if found is None:
        raise PlanningError("NO_ROUTE", "no assignment lets every operation hand over between its assemblers")
    return _as_schedule(found)


def _retarget(model_id: str) -> str:
    from .xform import _retarget_uri

    retargeted = _retarget_uri(model_id, "apm-ps")
    return retargeted if retargeted != model_id else f"{model_id}-ps"


def lower(
    apm: AssemblyProcessModel,
    platform: PlatformModel,
    catalog: ActionCatalog,
    policy: LoweringPolicy = LoweringPolicy(),
    *,
    ps_id: str | None = None,
) -> AssemblyProcessModel:
    """Produce the platform-specific model: ``apm`` plus a timed assignment."""
    if apm.stage != "pi":
        raise ModelError("STAGE", f"{apm.id} is already platform specific")
    if policy.strategy == "exact":
        schedule = exact_schedule(apm, platform, catalog)
    elif policy.strategy == "list":
        schedule = list_schedule(apm, platform, catalog)
    else:
        raise ModelError("FORMAT", f"unknown lowering strategy {policy.strategy!r}")
    logger.info("lowered %s onto %s: makespan %s", apm.id, platform.id, schedule.makespan)
    return AssemblyProcessModel(
        id=ps_id or _retarget(apm.id),
        stage="ps",
        product=apm.product,
        catalog=apm.catalog,
        root=apm.root,
        binding=PlatformBinding(platform.id, schedule),
    )


def makespan(schedule: Schedule) -> Decimal:
    return schedule.makespan


def schedule_violations(ps_apm: AssemblyProcessModel, platform: PlatformModel, catalog: ActionCatalog) -> ValidationReport:
    """Check an embedded schedule against precedence, skills, durations and overlap."""
    out = Collector()
    if ps_apm.binding is None:
        out.error("STAGE_BINDING", ps_apm.id, "no schedule to check")
        return out.report()
    if ps_apm.binding.platform != platform.id:
        out.error("BINDING_MISMATCH", ps_apm.id, f"bound to {ps_apm.binding.platform}, checked against {platform.id}")
    graph = flatten_to_action_graph(ps_apm)
    entries = ps_apm.binding.schedule.by_action()
    for aid in sorted(set(graph.actions) ^ set(entries)):
        out.error("SCHEDULE_COVERAGE", aid, "action missing from schedule or unknown")
    if len(entries) != len(ps_apm.binding.schedule.entries):
        out.error("SCHEDULE_COVERAGE", ps_apm.id, "an action is scheduled more than once")

    by_assembler: dict[str, list[ScheduledAction]] = {}
    for aid, entry in sorted(entries.items()):
        if entry.start < 0:
            out.error("NEGATIVE_START", aid)
        asm = platform.assembler(entry.assembler)
        if asm is None:
            out.error("UNKNOWN_ASSEMBLER", aid, f"assembler {entry.assembler!r} is not on the platform")
            continue
        by_assembler.setdefault(asm.id, []).append(entry)
        if aid not in graph.actions:
            continue
        entry_def = catalog.get(graph.actions[aid].action)
        if entry_def is None:
            out.error("UNKNOWN_ACTION", aid)
            continue
        if entry_def.skill not in asm.skills:
            out.error("SKILL", aid, f"{asm.id} lacks skill {entry_def.skill!r}")
        expected = platform.duration(entry_def.skill, asm.id)
        if expected is None or entry.finish - entry.start != expected:
            out.error("DURATION", aid, f"runs {entry.finish - entry.start}, table says {expected}")

    for asm_id, items in sorted(by_assembler.items()):
        items.sort(key=lambda e: (e.start, e.finish))
        for first, second in zip(items, items[1:]):
            if second.start < first.finish:
                out.error("OVERLAP", second.action, f"overlaps {first.action} on {asm_id}")

    table = routes(platform)
    for u, v in sorted(graph.edges):
        if u not in entries or v not in entries:
            continue
        eu, ev = entries[u], entries[v]
        lag = ZERO
        if graph.intra_operation(u, v) and eu.assembler != ev.assembler:
            route = table.get((eu.assembler, ev.assembler))
            if route is None:
                out.error("NO_ROUTE", v, f"no route from {eu.assembler} to {ev.assembler}")
                continue
            lag = route.transit
        if eu.finish + lag > ev.start:
            out.error("PRECEDENCE", v, f"starts before {u} (+ transit {lag}) completes")
    return out.report()
