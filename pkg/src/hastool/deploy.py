"""Self-contained deployment bundles for a platform-specific process model."""

from __future__ import annotations

from pathlib import Path

from . import documents
from .apm import ActionCatalog, AssemblyProcessModel, required_actions
from .aspm import PlatformModel
from .errors import ModelError, RepoError
from .lower import schedule_violations
from .repo import digest

BUNDLE_FILES = ("apm-ps.json", "catalog.json", "platform.json")


def write_bundle(ps_apm: AssemblyProcessModel, platform: PlatformModel, catalog: ActionCatalog, out_dir: str | Path) -> Path:
    """Write the process model, the catalog subset it uses and a platform snapshot.

    A ``manifest.json`` lists every file with its digest.
    """
    report = schedule_violations(ps_apm, platform, catalog)
    if not report.conformant:
        raise ModelError("VALIDATION_FAILED", f"{ps_apm.id} cannot be deployed on {platform.id}", report=report)
    used = required_actions(ps_apm)
    subset = ActionCatalog(catalog.id, tuple(e for e in catalog.entries if e.id in used))
    payloads = dict(zip(BUNDLE_FILES, (documents.encode(ps_apm), documents.encode(subset), documents.encode(platform))))
    manifest = {
        "kind": "deployment",
        "apm": ps_apm.id,
        "platform": platform.id,
        "files": {name: digest(data) for name, data in payloads.items()},
    }
    out = Path(out_dir)
    try:
        out.mkdir(parents=True, exist_ok=True)
        for name, data in payloads.items():
            (out / name).write_bytes(data)
        (out / "manifest.json").write_text(documents.canonical_json(manifest), encoding="utf-8")
    except OSError as exc:
        raise RepoError("IO", f"cannot write bundle to {out}: {exc.strerror}") from None
    return out
