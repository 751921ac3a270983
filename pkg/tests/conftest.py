from __future__ import annotations

import pytest

from hastool import documents
from hastool.apm import default_catalog
from hastool.lower import LoweringPolicy, lower
from hastool.repo import Repository

from instances import FIXTURES, cell2, nested_pi, nested_psm


@pytest.fixture
def catalog():
    return default_catalog()


@pytest.fixture
def psm():
    return nested_psm()


@pytest.fixture
def platform():
    return cell2()


@pytest.fixture
def pi_apm():
    return nested_pi()


@pytest.fixture
def ps_apm(pi_apm, platform, catalog):
    return lower(pi_apm, platform, catalog, LoweringPolicy("exact"))


@pytest.fixture
def repo(tmp_path):
    return Repository(tmp_path / "repo")


@pytest.fixture
def stocked(repo, psm, platform, catalog, pi_apm):
    """Repository holding the nested product, its process model, catalog and platform."""
    for model in (psm, catalog, platform, pi_apm):
        repo.store(model)
    return repo


ACCEPTANCE = pytest.StashKey[list]()


@pytest.fixture
def verdict(request):
    """Record one PASS/FAIL line per acceptance criterion; returns the flag."""
    lines = request.config.stash.setdefault(ACCEPTANCE, [])

    def record(number: int, title: str, ok: bool, detail: str) -> bool:
        line = f"{'PASS' if ok else 'FAIL'} [{number}] {title}: {detail}"
        print(line)
        lines.append(line)
        return ok

    return record


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    lines = config.stash.get(ACCEPTANCE, [])
    if lines:
        terminalreporter.section("acceptance criteria")
        for line in lines:
            terminalreporter.write_line(line)


def load(name: str):
    return documents.load(FIXTURES / name)
