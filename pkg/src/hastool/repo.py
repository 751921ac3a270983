"""URI-addressed local model repository and assembly jobs.

Entries live at ``<root>/<kind>/<name>/<version>.json``. Each entry file is
one JSON header line (URI, digest, timestamp) followed by the stored document
bytes, unchanged. Writes are serialized through a lock file and committed
with an atomic rename, so readers only ever see complete versions.
"""

from __future__ import annotations

import hashlib
import json
import os
import re
import tempfile
from dataclasses import dataclass
from datetime import datetime, timezone
from pathlib import Path
from typing import Any, Callable

from filelock import FileLock

from . import _schema as js
from . import documents
from .apm import validate_apm, validate_catalog
from .aspm import validate_aspm
from .errors import HasError, Infeasible, JobError, ModelError, RepoError
from .lower import LoweringPolicy, check_feasibility, lower, schedule_violations
from .psm import resolve_variant, validate_psm
from .sim import SimConfig, simulate
from .validation import Collector, ValidationReport

REPO_KINDS = ("psm", "aspm", "apm-pi", "apm-ps", "bom", "constraints", "catalog", "job", "sim-report")
DIGEST_ALGORITHM = "sha256"
ENTRY_FORMAT = "hasrepo-entry/1"
DEFAULT_ROOT = ".hasrepo"
_NAME = r"[A-Za-z0-9][A-Za-z0-9._-]*"
_URI = re.compile(rf"has://(?P<repo>{_NAME})/(?P<kind>[a-z-]+)/(?P<name>{_NAME})@(?P<version>[1-9][0-9]*)")


@dataclass(frozen=True, order=True)
class ModelUri:
    repo: str
    kind: str
    name: str
    version: int

    @classmethod
    def parse(cls, text: str) -> ModelUri:
        match = _URI.fullmatch(text)
        if match is None or match["kind"] not in REPO_KINDS:
            raise RepoError("MALFORMED_URI", f"{text!r} is not of the form has://<repo>/<kind>/<name>@<version>")
        return cls(match["repo"], match["kind"], match["name"], int(match["version"]))

    def __str__(self) -> str:
        return f"has://{self.repo}/{self.kind}/{self.name}@{self.version}"


@dataclass(frozen=True)
class AssemblyJob:
    id: str
    product: str
    pi_apm: str
    quantity: int = 1
    variant: str | None = None
    quality_params: tuple[tuple[str, str], ...] = ()


@dataclass(frozen=True)
class RepoEntry:
    uri: ModelUri
    digest: str
    stored_at: str


def digest(data: bytes) -> str:
    return f"{DIGEST_ALGORITHM}:{hashlib.new(DIGEST_ALGORITHM, data).hexdigest()}"


def default_root() -> Path:
    return Path(os.environ.get("HAS_REPO", DEFAULT_ROOT))


def entry_name(model_id: str) -> str:
    try:
        return ModelUri.parse(model_id).name
    except RepoError:
        if re.fullmatch(_NAME, model_id):
            return model_id
    raise ModelError("FORMAT", f"cannot derive an entry name from id {model_id!r}; pass one explicitly")


class Repository:
    def __init__(
        self,
        root: str | Path | None = None,
        name: str = "main",
        clock: Callable[[], datetime] | None = None,
    ) -> None:
        if not re.fullmatch(_NAME, name):
            raise RepoError("MALFORMED_URI", f"invalid repository name {name!r}")
        self.root = Path(root) if root is not None else default_root()
        self.name = name
        self._clock = clock or (lambda: datetime.now(timezone.utc))

    def _dir(self, kind: str, name: str) -> Path:
        return self.root / kind / name

    def versions(self, kind: str, name: str) -> list[int]:
        folder = self._dir(kind, name)
        if not folder.is_dir():
            return []
        return sorted(int(p.stem) for p in folder.glob("*.json") if p.stem.isdigit())

    def store(self, document: bytes | Any, *, name: str | None = None) -> ModelUri:
        """Validate and persist a document under the next version of its name."""
        data = document if isinstance(document, bytes) else documents.encode(document)
        model = documents.parse(data)
        kind = documents.kind_of(model)
        if kind not in REPO_KINDS:
            raise ModelError("FORMAT", f"documents of kind {kind} are not stored in the repository")
        report = self.check(model)
        if not report.conformant:
            raise ModelError("VALIDATION_FAILED", f"{model.id} is not conformant", report=report)
        name = name or entry_name(model.id)
        if not re.fullmatch(_NAME, name):
            raise ModelError("FORMAT", f"invalid entry name {name!r}")

        self.root.mkdir(parents=True, exist_ok=True)
        with FileLock(str(self.root / ".lock")):
            version = max(self.versions(kind, name), default=0) + 1
            uri = ModelUri(self.name, kind, name, version)
            header = {
                "format": ENTRY_FORMAT,
                "uri": str(uri),
                "digest": digest(data),
                "stored_at": self._clock().isoformat(),
            }
            folder = self._dir(kind, name)
            folder.mkdir(parents=True, exist_ok=True)
            fd, tmp = tempfile.mkstemp(dir=folder, suffix=".tmp")
            with os.fdopen(fd, "wb") as fh:
                fh.write(json.dumps(header, sort_keys=True).encode("utf-8") + b"\n" + data)
            os.replace(tmp, folder / f"{version}.json")
        return uri

    def _read(self, uri: ModelUri | str) -> tuple[dict, bytes]:
        if isinstance(uri, str):
            uri = ModelUri.parse(uri)
        path = self._dir(uri.kind, uri.name) / f"{uri.version}.json"
        if uri.repo != self.name or not path.is_file():
            raise RepoError("NOT_FOUND", f"{uri} is not in repository {self.name} at {self.root}")
        raw = path.read_bytes()
        head, _, body = raw.partition(b"\n")
        return json.loads(head), body

    def resolve(self, uri: ModelUri | str) -> bytes:
        return self._read(uri)[1]

    def entry(self, uri: ModelUri | str) -> RepoEntry:
        header, _ = self._read(uri)
        return RepoEntry(ModelUri.parse(header["uri"]), header["digest"], header["stored_at"])

    def entries(self, kind: str | None = None) -> list[RepoEntry]:
        found = []
        for k in REPO_KINDS if kind is None else (kind,):
            folder = self.root / k
            if not folder.is_dir():
                continue
            for sub in sorted(p for p in folder.iterdir() if p.is_dir()):
                for version in self.versions(k, sub.name):
                    found.append(self.entry(ModelUri(self.name, k, sub.name, version)))
        return sorted(found, key=lambda e: e.uri)

    def load(self, uri: ModelUri | str, kind: str | None = None) -> Any:
        parsed = ModelUri.parse(uri) if isinstance(uri, str) else uri
        if kind is not None and parsed.kind != kind:
            raise ModelError("FORMAT", f"{parsed} is a {parsed.kind}, expected {kind}")
        return documents.parse(self.resolve(parsed))

    def _lookup(self, ref: str, kind: str, owner: str, out: Collector) -> Any:
        try:
            return self.load(ref, kind)
        except HasError as exc:
            out.error("DANGLING_REF", owner, f"{ref}: {exc.code}")
            return None

    def check(self, model: Any) -> ValidationReport:
        """Store-time conformance check, resolving cross-document references."""
        kind = documents.kind_of(model)
        if kind == "psm":
            return validate_psm(model)
        if kind == "aspm":
            return validate_aspm(model)
        if kind == "catalog":
            return validate_catalog(model)
        out = Collector()
        if kind in ("apm-pi", "apm-ps"):
            psm = self._lookup(model.product, "psm", model.id, out)
            catalog = self._lookup(model.catalog, "catalog", model.id, out)
            if psm is not None and catalog is not None:
                out.extend(validate_apm(model, psm, catalog))
                if model.binding is not None and out.report().conformant:
                    platform = self._lookup(model.binding.platform, "aspm", model.id, out)
                    if platform is not None:
                        out.extend(schedule_violations(model, platform, catalog))
        elif kind == "bom":
            from .xform import import_bom

            try:
                import_bom(model)
            except HasError as exc:
                out.error(exc.code, model.id, exc.message)
        elif kind == "job":
            if model.quantity < 1:
                out.error("QUANTITY", model.id, "quantity must be at least 1")
            psm = self._lookup(model.product, "psm", model.id, out)
            self._lookup(model.pi_apm, "apm-pi", model.id, out)
            if psm is not None and model.variant is not None and model.variant not in psm.variants:
                out.error("UNKNOWN_VARIANT", model.id, f"{model.variant!r} is not declared by {psm.id}")
        return out.report()


def _job_name(job: AssemblyJob) -> str:
    return entry_name(job.id)


def run_job(
    repo: Repository,
    job: AssemblyJob,
    platform_ref: ModelUri | str,
    policy: LoweringPolicy = LoweringPolicy(),
) -> tuple[ModelUri, ModelUri]:
    """Resolve, refine, evaluate and store one assembly job.

    Returns the URIs of the stored platform-specific process model and of
    its simulation report. Failures are re-raised as :class:`JobError`
    naming the stage that failed.
    """

    def stage(label: str, fn: Callable, *args: Any, **kwargs: Any) -> Any:
        try:
            return fn(*args, **kwargs)
        except JobError:
            raise
        except HasError as exc:
            raise JobError(label, exc) from exc

    psm = stage("resolve", repo.load, job.product, "psm")
    pi_apm = stage("resolve", repo.load, job.pi_apm, "apm-pi")
    catalog = stage("resolve", repo.load, pi_apm.catalog, "catalog")
    platform = stage("resolve", repo.load, platform_ref, "aspm")
    if job.variant is not None:
        psm = stage("resolve_variant", resolve_variant, psm, job.variant)

    def conformance() -> None:
        report = validate_apm(pi_apm, psm, catalog)
        if not report.conformant:
            raise ModelError("VALIDATION_FAILED", f"{pi_apm.id} does not fit {psm.id}", report=report)

    stage("validate", conformance)
    verdict = stage("check_feasibility", check_feasibility, pi_apm, platform, catalog)
    if not verdict.feasible:
        raise JobError("check_feasibility", Infeasible(verdict.gap))
    name = _job_name(job)
    ps_apm = stage("lower", lower, pi_apm, platform, catalog, policy, ps_id=f"{name}-ps")
    config = SimConfig(quantity=job.quantity, quality_params=job.quality_params)
    report = stage("simulate", simulate, ps_apm, platform, config, report_id=f"{name}-report")
    ps_uri = stage("store", repo.store, ps_apm)
    report_uri = stage("store", repo.store, report)
    return ps_uri, report_uri


# -- JSON ---------------------------------------------------------------------


def job_from_dict(obj: dict) -> AssemblyJob:
    js.check_kind(obj, "job")
    js.check_keys(obj, "job", ("kind", "id", "product", "pi_apm"), ("quantity", "variant", "quality_params"))
    variant = obj.get("variant")
    quality = js.expect_object(obj.get("quality_params", {}), "quality_params")
    return AssemblyJob(
        id=js.expect_str(obj["id"], "id"),
        product=js.expect_str(obj["product"], "product"),
        pi_apm=js.expect_str(obj["pi_apm"], "pi_apm"),
        quantity=js.expect_int(obj.get("quantity", 1), "quantity"),
        variant=None if variant is None else js.expect_str(variant, "variant"),
        quality_params=tuple((k, js.expect_str(v, f"quality_params.{k}")) for k, v in quality.items()),
    )


def job_to_dict(job: AssemblyJob) -> dict:
    return {
        "kind": "job",
        "id": job.id,
        "product": job.product,
        "pi_apm": job.pi_apm,
        "quantity": job.quantity,
        "variant": job.variant,
        "quality_params": dict(job.quality_params),
    }
