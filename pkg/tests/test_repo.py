from __future__ import annotations

import json
from concurrent.futures import ThreadPoolExecutor
from dataclasses import replace

import pytest

from hastool import documents
from hastool.aspm import without_skill
from hastool.errors import JobError, ModelError, RepoError
from hastool.lower import LoweringPolicy
from hastool.repo import AssemblyJob, ModelUri, Repository, digest, run_job

from conftest import load
from instances import FIXTURES


def test_uri_parse_and_render():
    uri = ModelUri.parse("has://main/psm/nested@3")
    assert (uri.repo, uri.kind, uri.name, uri.version) == ("main", "psm", "nested", 3)
    assert str(uri) == "has://main/psm/nested@3"


@pytest.mark.parametrize(
    "text",
    ["has://main/psm/nested", "http://main/psm/nested@1", "has://main/widget/nested@1", "has://main/psm/nested@0", "has://main/psm/@1", "has://main/psm/a b@1"],
)
def test_malformed_uris(text):
    with pytest.raises(RepoError) as exc:
        ModelUri.parse(text)
    assert exc.value.code == "MALFORMED_URI"


def test_store_twice_makes_two_versions_with_one_digest(repo, psm):
    first = repo.store(psm)
    second = repo.store(psm)
    assert (str(first), str(second)) == ("has://main/psm/nested@1", "has://main/psm/nested@2")
    assert repo.entry(first).digest == repo.entry(second).digest == digest(documents.encode(psm))
    assert repo.resolve(first) == repo.resolve(second) == documents.encode(psm)


def test_stored_bytes_come_back_unchanged(repo):
    raw = (FIXTURES / "cell2.aspm.json").read_bytes()
    uri = repo.store(raw)
    assert repo.resolve(uri) == raw
    assert repo.load(uri) == documents.parse(raw)


def test_invalid_document_leaves_repository_unchanged(repo, psm):
    repo.store(psm)
    before = sorted(p.relative_to(repo.root) for p in repo.root.rglob("*"))
    broken = replace(psm, connectors=psm.connectors + psm.connectors[:1])
    with pytest.raises(ModelError) as exc:
        repo.store(broken)
    assert exc.value.code == "VALIDATION_FAILED"
    assert "DUPLICATE_CONNECTOR" in exc.value.details["report"].rules()
    assert sorted(p.relative_to(repo.root) for p in repo.root.rglob("*")) == before


def test_not_found(repo):
    with pytest.raises(RepoError) as exc:
        repo.resolve("has://main/psm/nothing@1")
    assert exc.value.code == "NOT_FOUND"
    with pytest.raises(RepoError):
        repo.resolve("has://elsewhere/psm/nothing@1")


def test_references_must_resolve(repo, pi_apm, psm):
    with pytest.raises(ModelError) as exc:
        repo.store(pi_apm)
    assert "DANGLING_REF" in exc.value.details["report"].rules()
    repo.store(psm)
    with pytest.raises(ModelError):
        repo.store(pi_apm)  # the catalog is still missing


def test_listing(stocked):
    kinds = [e.uri.kind for e in stocked.entries()]
    assert sorted(kinds) == ["apm-pi", "aspm", "catalog", "psm"]
    assert [str(e.uri) for e in stocked.entries("psm")] == ["has://main/psm/nested@1"]
    assert stocked.entries("job") == []


def test_load_checks_the_kind(stocked):
    with pytest.raises(ModelError):
        stocked.load("has://main/psm/nested@1", "aspm")


def test_concurrent_stores_get_distinct_versions(tmp_path, psm):
    root = tmp_path / "shared"
    with ThreadPoolExecutor(8) as pool:
        uris = list(pool.map(lambda _: Repository(root).store(psm), range(16)))
    assert sorted(u.version for u in uris) == list(range(1, 17))
    assert not list(root.rglob("*.tmp"))


def test_entry_file_layout(repo, psm):
    uri = repo.store(psm)
    raw = (repo.root / "psm" / "nested" / "1.json").read_bytes()
    header, _, body = raw.partition(b"\n")
    assert json.loads(header)["uri"] == str(uri)
    assert body == documents.encode(psm)


# -- jobs -------------------------------------------------------------------------


def test_run_job_on_nested(stocked):
    job = load("nested.job.json")
    stocked.store(job)
    ps_uri, report_uri = run_job(stocked, job, "has://main/aspm/cell2@1", LoweringPolicy("exact"))
    assert str(ps_uri) == "has://main/apm-ps/nested-order-ps@1"
    assert str(report_uri) == "has://main/sim-report/nested-order-report@1"
    ps = stocked.load(ps_uri)
    report = stocked.load(report_uri)
    assert report.total_makespan == ps.binding.schedule.makespan
    assert report.quality_params == (("torque", "5 Nm"),)


def test_run_job_is_deterministic(stocked):
    job = load("nested.job.json")
    first = run_job(stocked, job, "has://main/aspm/cell2@1")
    second = run_job(stocked, job, "has://main/aspm/cell2@1")
    for a, b in zip(first, second):
        assert a.version + 1 == b.version
        assert stocked.entry(a).digest == stocked.entry(b).digest


def test_run_job_without_a_skill(stocked, platform):
    stripped = replace(without_skill(platform, "screw"), id="has://main/aspm/cell2-no-screw@1")
    uri = stocked.store(stripped)
    with pytest.raises(JobError) as exc:
        run_job(stocked, load("nested.job.json"), uri)
    assert exc.value.stage == "check_feasibility"
    assert exc.value.code == "INFEASIBLE"
    assert exc.value.details["gap"] == ["screw"]
    assert exc.value.exit_status == 2
    assert stocked.entries("apm-ps") == []


def test_run_job_unknown_platform(stocked):
    with pytest.raises(JobError) as exc:
        run_job(stocked, load("nested.job.json"), "has://main/aspm/nowhere@1")
    assert (exc.value.stage, exc.value.code, exc.value.exit_status) == ("resolve", "NOT_FOUND", 3)


def test_job_with_undeclared_variant_is_rejected(stocked):
    job = replace(load("nested.job.json"), variant="deluxe")
    with pytest.raises(ModelError) as exc:
        stocked.store(job)
    assert "UNKNOWN_VARIANT" in exc.value.details["report"].rules()


def test_job_round_trip():
    job = load("nested.job.json")
    assert isinstance(job, AssemblyJob)
    assert documents.parse(documents.dumps(job)) == job
