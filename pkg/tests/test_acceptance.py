"""Acceptance criteria, each run at its stated size and time limit.

Every test prints one PASS/FAIL line; the lines are repeated in the pytest
terminal summary under "acceptance criteria".
"""

from __future__ import annotations

import random
import time
from dataclasses import replace
from decimal import Decimal

import pytest

from hastool import documents
from hastool.apm import default_catalog, required_actions
from hastool.aspm import scale_durations, without_skill
from hastool.errors import JobError, PlanningError
from hastool.lower import LoweringPolicy, lower
from hastool.repo import REPO_KINDS, Repository, run_job
from hastool.sim import SimConfig, simulate
from hastool.xform import enumerate_sequences, generate_pi_apm

from instances import FIXTURES, Instance, cell2, diamond_instance, nested_pi, nested_psm, random_dag, random_instance
from oracles import brute_force_makespan, legality_errors, orders_by_permutation, search_space
from test_xform import level

pytestmark = pytest.mark.acceptance

CATALOG = default_catalog()
PLATFORM_URI = "has://main/aspm/cell2@1"


def entries(ps) -> dict[str, tuple[str, Decimal, Decimal]]:
    return {e.action: (e.assembler, e.start, e.finish) for e in ps.binding.schedule.entries}


def legal_instances(seed: int, count: int, max_actions: int, max_assemblers: int) -> list[Instance]:
    rng = random.Random(seed)
    return [
        random_instance(
            rng,
            rng.randint(1, max_actions),
            rng.randint(1, max_assemblers),
            density=rng.choice((0.1, 0.3, 0.5)),
            decimals=rng.random() < 0.5,
            name=f"inst{i}",
        )
        for i in range(count)
    ]


def test_nested_product_levels(verdict):
    start = time.perf_counter()
    model = generate_pi_apm(nested_psm(), None, CATALOG)
    elapsed = time.perf_counter() - start
    tree, stack = [], [model.root]
    while stack:
        proc = stack.pop()
        tree.append(proc)
        stack.extend(proc.processes)
    composite = [p for p in tree if p.kind == "composite-child"]
    activities = model.root.activities
    ok = model.root.dcl == 0 and len(composite) == 1 and len(activities) == 3 and elapsed < 1
    assert verdict(1, "nested product: 1 composite-child process, 3 activities at level 0", ok, f"{len(composite)} / {len(activities)} in {elapsed:.3f}s")


def test_enumeration_matches_permutation_filter(verdict):
    rng = random.Random(2)
    start = time.perf_counter()
    mismatches = 0
    for _ in range(200):
        n = rng.randint(1, 8)
        ids = [chr(ord("a") + i) for i in range(n)]
        edges = random_dag(rng, ids, rng.choice((0.0, 0.15, 0.3, 0.5, 0.8)))
        result = enumerate_sequences(level(n, edges).apm, "process", 50_000)
        expected = orders_by_permutation(ids, edges)
        if set(result.sequences) != set(expected) or result.count != len(expected) or len(set(result.sequences)) != result.count or result.truncated:
            mismatches += 1
    elapsed = time.perf_counter() - start
    ok = mismatches == 0 and elapsed < 30
    assert verdict(2, "enumeration equals permutation filter on 200 DAGs", ok, f"{mismatches} mismatches in {elapsed:.1f}s")


def test_schedules_are_legal(verdict):
    start = time.perf_counter()
    violations = 0
    checked = 0
    for inst in legal_instances(3, 500, 20, 4):
        policies = ["list"]
        if len(inst.actions()) <= 8 and len(inst.platform.assemblers()) <= 3:
            policies.append("exact")
        for strategy in policies:
            ps = lower(inst.apm, inst.platform, CATALOG, LoweringPolicy(strategy))
            violations += len(legality_errors(inst, entries(ps)))
            checked += 1
    elapsed = time.perf_counter() - start
    ok = violations == 0 and elapsed < 60
    assert verdict(3, "500 random instances lower to legal schedules", ok, f"{violations} violations over {checked} schedules in {elapsed:.1f}s")


def exact_cap_fixtures(count: int, budget: int) -> list[Instance]:
    """Random instances within the exact cap whose brute-force search fits ``budget`` leaves."""
    rng = random.Random(4)
    found: list[Instance] = []
    i = 0
    while len(found) < count:
        inst = random_instance(
            rng,
            rng.randint(4, 12),
            rng.randint(1, 3),
            density=rng.choice((0.2, 0.4, 0.6)),
            connected=rng.random() < 0.8,
            decimals=rng.random() < 0.5,
            name=f"cap{i}",
        )
        i += 1
        if search_space(inst) <= budget:
            found.append(inst)
    return found


def test_heuristic_never_beats_exact_and_exact_matches_brute_force(verdict):
    start = time.perf_counter()
    fixtures = exact_cap_fixtures(150, 150_000)
    below, mismatched, ratios, no_route = 0, 0, [], 0
    for inst in fixtures:
        truth = brute_force_makespan(inst)
        try:
            exact = lower(inst.apm, inst.platform, CATALOG, LoweringPolicy("exact")).binding.schedule.makespan
        except PlanningError:
            exact = None
        if exact != truth:
            mismatched += 1
        if exact is None:
            no_route += 1
            continue
        try:
            heuristic = lower(inst.apm, inst.platform, CATALOG, LoweringPolicy("list")).binding.schedule.makespan
        except PlanningError:
            continue  # the heuristic may strand an action where no route exists
        if heuristic < exact:
            below += 1
        ratios.append(heuristic / exact)
    elapsed = time.perf_counter() - start
    sizes = sorted(len(i.actions()) for i in fixtures)
    ok = len(fixtures) >= 100 and below == 0 and mismatched == 0 and elapsed < 300
    detail = (
        f"{len(fixtures)} fixtures ({sizes[0]}-{sizes[-1]} actions, {no_route} without a route), "
        f"{mismatched} exact/brute-force mismatches, {below} heuristic below exact, "
        f"heuristic/exact ratio mean {sum(ratios) / len(ratios):.3f} max {max(ratios):.3f}, {elapsed:.1f}s"
    )
    assert verdict(4, "heuristic >= exact == brute force within the exact cap", ok, detail)


def test_uniform_scaling(verdict):
    factors = (Decimal("0.5"), Decimal(2), Decimal(10))
    failures = 0
    fixtures = legal_instances(5, 50, 10, 3)
    for inst in fixtures:
        for strategy in ("list", "exact"):
            base = lower(inst.apm, inst.platform, CATALOG, LoweringPolicy(strategy)).binding.schedule
            for k in factors:
                scaled = Instance(inst.activities, inst.edges, scale_durations(inst.platform, k), inst.name)
                other = lower(scaled.apm, scaled.platform, CATALOG, LoweringPolicy(strategy)).binding.schedule
                same_shape = [(e.action, e.assembler) for e in other.entries] == [(e.action, e.assembler) for e in base.entries]
                exact_times = all(o.start == b.start * k for o, b in zip(other.entries, base.entries))
                if not (same_shape and exact_times and other.makespan == base.makespan * k):
                    failures += 1
    ok = failures == 0
    assert verdict(5, "scaling durations by 0.5, 2, 10 scales schedules exactly", ok, f"{failures} failures over {len(fixtures)} fixtures x 2 policies x 3 factors")


def test_single_unit_simulation_agrees(verdict):
    diamond = diamond_instance()
    cases = [(apm, platform, s) for apm, platform in ((nested_pi(), cell2()), (diamond.apm, diamond.platform)) for s in ("list", "exact")]
    cases += [(inst.apm, inst.platform, "list") for inst in legal_instances(6, 200, 16, 4)]
    cases += [(inst.apm, inst.platform, "exact") for inst in legal_instances(7, 50, 8, 3)]
    disagreements = 0
    for apm, platform, strategy in cases:
        ps = lower(apm, platform, CATALOG, LoweringPolicy(strategy))
        if simulate(ps, platform, SimConfig(quantity=1)).total_makespan != ps.binding.schedule.makespan:
            disagreements += 1
    bounded = sum(any(c.capacity is not None for c in p.connectors) for _, p, _ in cases)
    ok = disagreements == 0
    assert verdict(6, "one-unit simulation equals schedule makespan", ok, f"{disagreements} disagreements over {len(cases)} fixtures ({bounded} with bounded buffers)")


def stocked_repo(root) -> Repository:
    repo = Repository(root)
    for model in (nested_psm(), CATALOG, cell2(), nested_pi()):
        repo.store(model)
    return repo


def test_pipeline_determinism(verdict, tmp_path):
    job = documents.load(FIXTURES / "nested.job.json")
    digests = []
    for run in ("a", "b"):
        repo = stocked_repo(tmp_path / run)
        ps_uri, report_uri = run_job(repo, job, PLATFORM_URI, LoweringPolicy("exact"))
        digests.append((repo.entry(ps_uri).digest, repo.entry(report_uri).digest))
    same_repo = stocked_repo(tmp_path / "c")
    twice = [run_job(same_repo, job, PLATFORM_URI) for _ in range(2)]
    same_bytes = all(same_repo.resolve(a) == same_repo.resolve(b) for a, b in zip(*twice))
    ok = digests[0] == digests[1] and same_bytes
    assert verdict(7, "run_job twice gives digest-identical outputs", ok, f"apm-ps {digests[0][0][:19]}..., report {digests[0][1][:19]}...")


def test_round_trips(verdict, tmp_path):
    models = [documents.load(p) for p in sorted(FIXTURES.glob("*.json"))]
    ps = lower(nested_pi(), cell2(), CATALOG, LoweringPolicy("exact"))
    models += [CATALOG, nested_pi(), ps, simulate(ps, cell2(), SimConfig(quantity=2))]
    kinds = sorted({documents.kind_of(m) for m in models})
    parse_failures = [documents.kind_of(m) for m in models if documents.parse(documents.dumps(m)) != m]

    repo = Repository(tmp_path / "repo")
    order = ("psm", "catalog", "aspm", "apm-pi", "apm-ps", "job", "sim-report", "bom", "constraints")
    stored = 0
    byte_failures = []
    for kind in order:
        for m in models:
            if documents.kind_of(m) != kind:
                continue
            data = documents.encode(m)
            uri = repo.store(data)
            stored += 1
            if repo.resolve(uri) != data:
                byte_failures.append(str(uri))
    storable = sum(documents.kind_of(m) in REPO_KINDS for m in models)
    ok = not parse_failures and not byte_failures and stored == storable and set(kinds) == set(documents.KINDS)
    assert verdict(8, "parse/serialize and store/resolve round trips", ok, f"{len(models)} documents over {len(kinds)} kinds, {stored} stored, failures {parse_failures + byte_failures}")


def test_feasibility_gate(verdict, tmp_path):
    repo = stocked_repo(tmp_path / "repo")
    job = documents.load(FIXTURES / "nested.job.json")
    used = required_actions(nested_pi())
    skills = sorted({CATALOG.skill_of(a) for a in used})
    outcomes = []
    for skill in skills:
        expected = sorted(e.id for e in CATALOG.entries if e.skill == skill and e.id in used)
        stripped = replace(without_skill(cell2(), skill), id=f"has://main/aspm/cell2-without-{skill}@1")
        uri = repo.store(stripped)
        try:
            run_job(repo, job, uri)
            outcomes.append((skill, "ran", expected))
        except JobError as exc:
            outcomes.append((skill, exc.code if exc.details.get("gap") == expected else f"gap {exc.details.get('gap')}", expected))
    baseline = run_job(repo, job, PLATFORM_URI)
    ok = all(result == "INFEASIBLE" for _, result, _ in outcomes) and len(outcomes) == 3 and baseline is not None
    assert verdict(9, "removing one required skill makes run_job INFEASIBLE", ok, ", ".join(f"-{s}: {r} {e}" for s, r, e in outcomes))
