"""Kind-dispatched reading and writing of model documents.

Every document is a UTF-8 JSON object with a ``kind`` discriminator. Output
is canonical (fixed key order, two-space indent, trailing newline) so equal
models always serialize to equal bytes.
"""

from __future__ import annotations

import json
from decimal import Decimal
from functools import cache
from pathlib import Path
from typing import Any, Callable

from .errors import ModelError, RepoError


@cache
def _registry() -> dict[str, tuple[type, Callable[[dict], Any], Callable[[Any], dict]]]:
    from . import apm, aspm, psm, repo, sim, xform

    return {
        "psm": (psm.ProductStructuralModel, psm.psm_from_dict, psm.psm_to_dict),
        "aspm": (aspm.PlatformModel, aspm.aspm_from_dict, aspm.aspm_to_dict),
        "apm-pi": (apm.AssemblyProcessModel, apm.apm_from_dict, apm.apm_to_dict),
        "apm-ps": (apm.AssemblyProcessModel, apm.apm_from_dict, apm.apm_to_dict),
        "catalog": (apm.ActionCatalog, apm.catalog_from_dict, apm.catalog_to_dict),
        "bom": (xform.BillOfMaterials, xform.bom_from_dict, xform.bom_to_dict),
        "liaisons": (xform.LiaisonSet, xform.liaisons_from_dict, xform.liaisons_to_dict),
        "constraints": (xform.ConstraintSet, xform.constraints_from_dict, xform.constraints_to_dict),
        "job": (repo.AssemblyJob, repo.job_from_dict, repo.job_to_dict),
        "sim-report": (sim.SimReport, sim.report_from_dict, sim.report_to_dict),
    }


KINDS = ("psm", "aspm", "apm-pi", "apm-ps", "catalog", "bom", "liaisons", "constraints", "job", "sim-report")


def kind_of(model: object) -> str:
    kind = getattr(model, "kind", None)
    if isinstance(kind, str) and kind.startswith("apm-"):
        return kind
    for name, (cls, _, _) in _registry().items():
        if isinstance(model, cls):
            return name
    raise TypeError(f"not a model document: {type(model).__name__}")


def parse_json(data: bytes | str) -> dict:
    try:
        text = data.decode("utf-8") if isinstance(data, bytes) else data
        obj = json.loads(text, parse_float=Decimal)
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise ModelError("FORMAT", f"not a UTF-8 JSON document: {exc}") from None
    if not isinstance(obj, dict) or obj.get("kind") not in KINDS:
        raise ModelError("FORMAT", "document lacks a known 'kind' discriminator")
    return obj


def parse(data: bytes | str) -> Any:
    obj = parse_json(data)
    return _registry()[obj["kind"]][1](obj)


def to_dict(model: Any) -> dict:
    return _registry()[kind_of(model)][2](model)


def dumps(model: Any) -> str:
    return canonical_json(to_dict(model))


def encode(model: Any) -> bytes:
    return dumps(model).encode("utf-8")


def canonical_json(obj: Any) -> str:
    return json.dumps(obj, indent=2, ensure_ascii=False) + "\n"


def load(path: str | Path, expected: str | tuple[str, ...] | None = None) -> Any:
    try:
        data = Path(path).read_bytes()
    except OSError as exc:
        raise RepoError("IO", f"cannot read {path}: {exc.strerror}") from None
    model = parse(data)
    if expected is not None:
        wanted = (expected,) if isinstance(expected, str) else expected
        if kind_of(model) not in wanted:
            raise ModelError("FORMAT", f"{path}: expected kind {' or '.join(wanted)}, got {kind_of(model)}")
    return model


def save(model: Any, path: str | Path) -> None:
    try:
        Path(path).write_bytes(encode(model))
    except OSError as exc:
        raise RepoError("IO", f"cannot write {path}: {exc.strerror}") from None
