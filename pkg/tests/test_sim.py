from __future__ import annotations

import json
import random
from dataclasses import replace
from decimal import Decimal

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from hastool import documents
from hastool.apm import default_catalog
from hastool.aspm import PlatformConnector, PortRef
from hastool.errors import ModelError, PlanningError
from hastool.lower import LoweringPolicy, lower
from hastool.sim import SimConfig, SimReport, compare_scenarios, format_comparison, report_from_dict, simulate

from instances import cell2, chain_instance, nested_pi, random_instance, uniform_platform, with_skills

CATALOG = default_catalog()


def lowered(inst, strategy: str = "list"):
    return lower(inst.apm, inst.platform, CATALOG, LoweringPolicy(strategy))


def pick_then_place(pick: int, place: int, capacity: int | None | str = "active"):
    """M1 picks, M2 places; one operation hands over through a single connector."""
    base = with_skills(uniform_platform(["M1", "M2"], {"pick": pick, "place": place}, transit=None), {"M1": {"pick"}, "M2": {"place"}})
    src, dst = PortRef("st-M1", "out"), PortRef("st-M2", "in")
    if capacity == "active":
        link = PlatformConnector("belt", "active", src, dst, Decimal(0), None)
    else:
        link = PlatformConnector("tray", "passive", src, dst, None, capacity)
    platform = replace(base, connectors=(link,))
    return chain_instance([("a", "pick"), ("b", "place")], platform)


def test_single_unit_agrees_with_schedule():
    for strategy in ("list", "exact"):
        ps = lower(nested_pi(), cell2(), CATALOG, LoweringPolicy(strategy))
        report = simulate(ps, cell2())
        assert report.total_makespan == ps.binding.schedule.makespan
        assert report.per_unit_makespan == report.total_makespan


def test_two_units_on_one_assembler_serialize():
    inst = chain_instance([("a", "pick"), ("b", "pick"), ("c", "pick")], uniform_platform(["M1"], {"pick": 1}))
    ps = lowered(inst)
    assert ps.binding.schedule.makespan == 3
    report = simulate(ps, inst.platform, SimConfig(quantity=2))
    assert report.total_makespan == 6
    assert report.busy_time == {"M1": Decimal(6)}
    assert report.utilization == {"M1": Decimal(1)}


def test_half_utilization():
    inst = pick_then_place(4, 4)
    ps = lowered(inst)
    report = simulate(ps, inst.platform)
    assert report.total_makespan == 8
    assert report.utilization == {"M1": Decimal("0.5"), "M2": Decimal("0.5")}


def test_pipelining_overlaps_units():
    inst = pick_then_place(4, 4)
    report = simulate(lowered(inst), inst.platform, SimConfig(quantity=3))
    # The second station trails by one step: 4 + 3 * 4.
    assert report.total_makespan == 16
    # All units are released at once, so the last one waits for two predecessors.
    assert report.per_unit_makespan == 16
    spaced = simulate(lowered(inst), inst.platform, SimConfig(quantity=3, inter_unit_release=Decimal(4)))
    assert (spaced.total_makespan, spaced.per_unit_makespan) == (16, 8)


def test_release_spacing_delays_later_units():
    inst = pick_then_place(1, 1)
    report = simulate(lowered(inst), inst.platform, SimConfig(quantity=3, inter_unit_release=Decimal(10)))
    assert report.total_makespan == 22
    assert report.per_unit_makespan == 2


def test_bounded_buffer_blocks_the_producer():
    inst = pick_then_place(1, 5, capacity=1)
    report = simulate(lowered(inst), inst.platform, SimConfig(quantity=3))
    # Unit 3's part cannot enter the tray until unit 2's place starts at 6.
    assert [(e.connector, e.unit, e.action, e.blocked_from, e.blocked_until) for e in report.capacity_events] == [
        ("tray", 3, "a", Decimal(3), Decimal(6))
    ]
    assert report.passive_buffer_peak == {"tray": 1}
    assert report.total_makespan == 16


def test_one_unit_overfilling_a_buffer_is_reported_without_delay():
    # Two pickers feed one placer; both parts pass one single-slot tray.
    base = with_skills(uniform_platform(["M1", "M2", "M3"], {"pick": 1, "place": 1}, transit=None), {"M1": {"pick"}, "M2": {"pick"}, "M3": {"place"}})
    belt = PlatformConnector("belt", "active", PortRef("st-M2", "out"), PortRef("st-M1", "in"), Decimal(0), None)
    tray = PlatformConnector("tray", "passive", PortRef("st-M1", "out"), PortRef("st-M3", "in"), None, 1)
    inst = chain_instance([("a", "pick"), ("b", "pick"), ("c", "place")], replace(base, connectors=(belt, tray)))
    inst.activities[0].ops[0].edges = {("a", "c"), ("b", "c")}
    ps = lowered(inst, "exact")
    assert ps.binding.schedule.makespan == 2
    report = simulate(ps, inst.platform)
    assert report.total_makespan == 2
    assert report.passive_buffer_peak == {"tray": 2}
    assert [(e.kind, e.unit, e.blocked_from, e.blocked_until) for e in report.capacity_events] == [("overflow", 1, 1, 1)]
    # Unit 1 has cleared the tray by the time unit 2 hands over, so nothing blocks.
    two = simulate(ps, inst.platform, SimConfig(quantity=2))
    assert [e.kind for e in two.capacity_events] == ["overflow", "overflow"]
    assert two.total_makespan == 3


def test_unbounded_buffer_never_blocks():
    inst = pick_then_place(1, 5, capacity=None)
    report = simulate(lowered(inst), inst.platform, SimConfig(quantity=3))
    assert report.capacity_events == ()
    assert report.passive_buffer_peak == {"tray": 2}


def test_binding_mismatch_and_bad_config():
    inst = pick_then_place(1, 1)
    ps = lowered(inst)
    with pytest.raises(ModelError) as exc:
        simulate(ps, cell2())
    assert exc.value.code == "BINDING_MISMATCH"
    with pytest.raises(ModelError):
        simulate(ps, inst.platform, SimConfig(quantity=0))
    with pytest.raises(ModelError) as exc:
        simulate(inst.apm, inst.platform)
    assert exc.value.code == "STAGE_BINDING"


def test_report_round_trip_and_id():
    inst = pick_then_place(1, 5, capacity=1)
    report = simulate(lowered(inst), inst.platform, SimConfig(quantity=3, quality_params=(("torque", "5 Nm"),)))
    assert report.id == "has://main/sim-report/chain@1"
    assert report_from_dict(json.loads(documents.dumps(report), parse_float=Decimal)) == report
    assert documents.parse(documents.dumps(report)) == report


# -- comparison ---------------------------------------------------------------------


def fake(total: int, utilization: str) -> SimReport:
    return SimReport("r", "p", "m", 1, Decimal(0), Decimal(total), Decimal(total), {"M1": Decimal(utilization)}, {"M1": Decimal(0)}, {})


def test_shorter_makespan_ranks_first():
    ranking = compare_scenarios([("slow", fake(10, "0.5")), ("fast", fake(8, "0.5"))])
    assert [(r.rank, r.label) for r in ranking] == [(1, "fast"), (2, "slow")]


def test_utilization_breaks_ties():
    ranking = compare_scenarios([("idle", fake(8, "0.5")), ("busy", fake(8, "0.9"))])
    assert [r.label for r in ranking] == ["busy", "idle"]
    ranking = compare_scenarios([("b", fake(8, "0.5")), ("a", fake(8, "0.5"))])
    assert [r.label for r in ranking] == ["a", "b"]


def test_single_report():
    ranking = compare_scenarios([("only", fake(3, "1"))])
    assert len(ranking) == 1 and ranking[0].rank == 1
    assert format_comparison(ranking).splitlines()[0].split() == ["rank", "scenario", "total_makespan", "per_unit_makespan", "mean_utilization"]


def test_nothing_to_compare():
    with pytest.raises(ModelError):
        compare_scenarios([])


# -- properties ---------------------------------------------------------------------


@settings(max_examples=60, deadline=None)
@given(st.integers(0, 2**32 - 1), st.integers(1, 12), st.integers(1, 3), st.integers(1, 4), st.booleans())
def test_simulation_invariants(seed, n, m, quantity, decimals):
    inst = random_instance(random.Random(seed), n, m, decimals=decimals)
    ps = lowered(inst)
    single = simulate(ps, inst.platform)
    assert single.total_makespan == ps.binding.schedule.makespan
    report = simulate(ps, inst.platform, SimConfig(quantity=quantity))
    more = simulate(ps, inst.platform, SimConfig(quantity=quantity + 1))
    work = sum((e.finish - e.start for e in ps.binding.schedule.entries), Decimal(0))
    assert sum(report.busy_time.values(), Decimal(0)) == work * quantity
    assert all(0 <= u <= 1 for u in report.utilization.values())
    assert report.per_unit_makespan <= report.total_makespan
    assert report.total_makespan >= single.total_makespan
    assert more.total_makespan >= report.total_makespan
    overflowed = {e.connector for e in report.capacity_events if e.kind == "overflow"}
    for conn in inst.platform.connectors:
        if conn.kind == "passive" and conn.capacity is not None and report.passive_buffer_peak[conn.id] > conn.capacity:
            assert conn.id in overflowed
    assert simulate(ps, inst.platform, SimConfig(quantity=quantity)) == report
