"""Product structural models: the part aggregation tree and its connectors."""

from __future__ import annotations

from collections import Counter
from dataclasses import dataclass, replace
from typing import Iterator, Literal

from . import _schema as js
from .errors import ModelError
from .validation import Collector, ValidationReport

PartKind = Literal["primitive", "composite"]


@dataclass(frozen=True)
class Liaison:
    id: str
    owner: str
    note: str = ""


@dataclass(frozen=True)
class SubAssembly:
    id: str
    kind: PartKind
    children: tuple[SubAssembly, ...] = ()
    liaisons: tuple[Liaison, ...] = ()
    variants: frozenset[str] | None = None
    # Derived from tree position; never read from files.
    dcl: int = 0


@dataclass(frozen=True)
class Connector:
    id: str
    endpoints: tuple[tuple[str, str], ...]
    variants: frozenset[str] | None = None

    @property
    def parts(self) -> tuple[str, ...]:
        return tuple(part for part, _ in self.endpoints)


def _with_levels(part: SubAssembly, level: int) -> SubAssembly:
    children = tuple(_with_levels(c, level + 1) for c in part.children)
    if part.dcl == level and children == part.children:
        return part
    return replace(part, dcl=level, children=children)


@dataclass(frozen=True)
class ProductStructuralModel:
    id: str
    product_name: str
    root_children: tuple[SubAssembly, ...]
    connectors: tuple[Connector, ...] = ()
    variants: tuple[str, ...] = ()

    def __post_init__(self) -> None:
        object.__setattr__(self, "root_children", tuple(_with_levels(p, 0) for p in self.root_children))
        object.__setattr__(self, "connectors", tuple(self.connectors))
        object.__setattr__(self, "variants", tuple(self.variants))

    def iter_parts(self) -> Iterator[tuple[SubAssembly, str | None]]:
        """Yield ``(part, parent_id)`` in pre-order; root children have parent ``None``."""
        stack: list[tuple[SubAssembly, str | None]] = [(p, None) for p in reversed(self.root_children)]
        while stack:
            part, parent = stack.pop()
            yield part, parent
            stack.extend((c, part.id) for c in reversed(part.children))

    def parts(self) -> dict[str, SubAssembly]:
        return {p.id: p for p, _ in self.iter_parts()}

    def parents(self) -> dict[str, str | None]:
        return {p.id: parent for p, parent in self.iter_parts()}

    def connector(self, connector_id: str) -> Connector | None:
        for c in self.connectors:
            if c.id == connector_id:
                return c
        return None

    @property
    def has_variant_annotations(self) -> bool:
        return any(p.variants is not None for p, _ in self.iter_parts()) or any(
            c.variants is not None for c in self.connectors
        )


def validate_psm(model: ProductStructuralModel) -> ValidationReport:
    out = Collector()
    if not model.root_children:
        out.error("EMPTY_PRODUCT", model.id, "product has no parts")

    seen = Counter(p.id for p, _ in model.iter_parts())
    for part_id, n in seen.items():
        if n > 1:
            out.error("DUPLICATE_PART", part_id, f"part appears {n} times in the aggregation tree")

    declared = set(model.variants)
    for name, n in Counter(model.variants).items():
        if n > 1:
            out.error("DUPLICATE_VARIANT", name)

    parts = model.parts()
    parents = model.parents()
    liaison_owner: dict[str, str] = {}
    for part, _ in model.iter_parts():
        if part.kind == "primitive" and part.children:
            out.error("PRIMITIVE_HAS_CHILDREN", part.id)
        if part.kind == "composite" and len(part.children) < 2:
            out.error("COMPOSITE_DEGENERATE", part.id, f"composite has {len(part.children)} child(ren), needs 2 or more")
        if part.kind not in ("primitive", "composite"):
            out.error("PART_KIND", part.id, f"unknown part kind {part.kind!r}")
        for liaison in part.liaisons:
            if liaison.owner != part.id:
                out.error("LIAISON_OWNER", liaison.id, f"liaison listed under {part.id} claims owner {liaison.owner}")
            if liaison.id in liaison_owner:
                out.error("DUPLICATE_LIAISON", liaison.id)
            liaison_owner[liaison.id] = part.id
        for tag in sorted(part.variants or ()):
            if tag not in declared:
                out.error("UNDECLARED_VARIANT", part.id, f"variant {tag!r} is not declared")

    for cid, n in Counter(c.id for c in model.connectors).items():
        if n > 1:
            out.error("DUPLICATE_CONNECTOR", cid)

    uses: Counter[str] = Counter()
    for conn in model.connectors:
        if len(conn.endpoints) < 2 or len(set(conn.parts)) < 2:
            out.error("CONNECTOR_ARITY", conn.id, "a connector joins 2 or more distinct sub-assemblies")
        for tag in sorted(conn.variants or ()):
            if tag not in declared:
                out.error("UNDECLARED_VARIANT", conn.id, f"variant {tag!r} is not declared")
        known = True
        for part_id, liaison_id in conn.endpoints:
            if part_id not in parts:
                out.error("UNKNOWN_PART", conn.id, f"endpoint part {part_id!r} does not exist")
                known = False
                continue
            uses[liaison_id] += 1
            if liaison_owner.get(liaison_id) != part_id:
                out.error("LIAISON_OWNER", conn.id, f"liaison {liaison_id!r} is not owned by {part_id}")
        if known and len({parents[p] for p in conn.parts}) > 1:
            out.error("CONNECTOR_LOCALITY", conn.id, "endpoint parts are not siblings")

    for liaison_id, n in sorted(uses.items()):
        if n > 1:
            out.warn("LIAISON_SHARED", liaison_id, f"liaison used by {n} connector endpoints")
    return out.report()


def resolve_variant(model: ProductStructuralModel, variant: str) -> ProductStructuralModel:
    """Return the concrete product for ``variant`` with all memberships consumed."""
    if variant not in model.variants:
        raise ModelError("UNKNOWN_VARIANT", f"{variant!r} is not declared by {model.id}")

    def keep(tags: frozenset[str] | None) -> bool:
        return tags is None or variant in tags

    def prune(part: SubAssembly) -> SubAssembly:
        children = tuple(prune(c) for c in part.children if keep(c.variants))
        return replace(part, children=children, variants=None)

    roots = tuple(prune(p) for p in model.root_children if keep(p.variants))
    kept = {p.id for p, _ in ProductStructuralModel(model.id, model.product_name, roots).iter_parts()}
    connectors = tuple(
        replace(c, variants=None) for c in model.connectors if keep(c.variants) and all(p in kept for p in c.parts)
    )
    result = ProductStructuralModel(model.id, model.product_name, roots, connectors, model.variants)
    report = validate_psm(result)
    if not report.conformant:
        raise ModelError("INVALID_RESULT", f"variant {variant!r} yields a non-conformant model", report=report)
    return result


def decomposition_levels(model: ProductStructuralModel) -> dict[str, int]:
    return {part.id: part.dcl for part, _ in model.iter_parts()}


def liaison_pairs_at_level(model: ProductStructuralModel, dcl: int) -> list[Connector]:
    levels = decomposition_levels(model)
    found = [c for c in model.connectors if c.endpoints and all(levels.get(p) == dcl for p in c.parts)]
    return sorted(found, key=lambda c: c.id)


# -- JSON --------------------------------------------------------------------


def _variants_from(obj: dict, where: str) -> frozenset[str] | None:
    if "variants" not in obj:
        return None
    return frozenset(js.str_list(obj["variants"], f"{where}.variants"))


def _part_from_dict(obj: object, where: str) -> SubAssembly:
    obj = js.expect_object(obj, where)
    if "dcl" in obj:
        raise ModelError("AUTHORED_DCL", f"{where}: decomposition level is derived and may not be authored")
    js.check_keys(obj, where, ("id", "kind"), ("children", "liaisons", "variants"))
    part_id = js.expect_str(obj["id"], f"{where}.id")
    kind = obj["kind"]
    if kind not in ("primitive", "composite"):
        raise ModelError("FORMAT", f"{where}.kind: expected primitive or composite")
    liaisons = []
    for i, raw in enumerate(js.expect_list(obj.get("liaisons", []), f"{where}.liaisons")):
        raw = js.expect_object(raw, f"{where}.liaisons[{i}]")
        js.check_keys(raw, f"{where}.liaisons[{i}]", ("id",), ("note",))
        liaisons.append(Liaison(js.expect_str(raw["id"], "liaison id"), part_id, js.expect_str(raw.get("note", ""), "note")))
    children = tuple(
        _part_from_dict(c, f"{where}.children[{i}]")
        for i, c in enumerate(js.expect_list(obj.get("children", []), f"{where}.children"))
    )
    return SubAssembly(part_id, kind, children, tuple(liaisons), _variants_from(obj, where))


def connector_from_dict(obj: object, where: str) -> Connector:
    obj = js.expect_object(obj, where)
    js.check_keys(obj, where, ("id", "endpoints"), ("variants",))
    endpoints = []
    for i, raw in enumerate(js.expect_list(obj["endpoints"], f"{where}.endpoints")):
        raw = js.expect_object(raw, f"{where}.endpoints[{i}]")
        js.check_keys(raw, f"{where}.endpoints[{i}]", ("part", "liaison"))
        endpoints.append((js.expect_str(raw["part"], "part"), js.expect_str(raw["liaison"], "liaison")))
    return Connector(js.expect_str(obj["id"], f"{where}.id"), tuple(endpoints), _variants_from(obj, where))


def psm_from_dict(obj: dict) -> ProductStructuralModel:
    js.check_kind(obj, "psm")
    js.check_keys(obj, "psm", ("kind", "id", "product_name", "parts"), ("connectors", "variants"))
    parts = tuple(_part_from_dict(p, f"parts[{i}]") for i, p in enumerate(js.expect_list(obj["parts"], "parts")))
    connectors = tuple(
        connector_from_dict(c, f"connectors[{i}]") for i, c in enumerate(js.expect_list(obj.get("connectors", []), "connectors"))
    )
    return ProductStructuralModel(
        id=js.expect_str(obj["id"], "id"),
        product_name=js.expect_str(obj["product_name"], "product_name"),
        root_children=parts,
        connectors=connectors,
        variants=tuple(js.str_list(obj.get("variants", []), "variants")),
    )


def _part_to_dict(part: SubAssembly) -> dict:
    out: dict = {"id": part.id, "kind": part.kind}
    out["liaisons"] = [{"id": l.id, "note": l.note} if l.note else {"id": l.id} for l in part.liaisons]
    if part.children:
        out["children"] = [_part_to_dict(c) for c in part.children]
    if part.variants is not None:
        out["variants"] = sorted(part.variants)
    return out


def connector_to_dict(conn: Connector) -> dict:
    out: dict = {"id": conn.id, "endpoints": [{"part": p, "liaison": l} for p, l in conn.endpoints]}
    if conn.variants is not None:
        out["variants"] = sorted(conn.variants)
    return out


def psm_to_dict(model: ProductStructuralModel) -> dict:
    return {
        "kind": "psm",
        "id": model.id,
        "product_name": model.product_name,
        "variants": list(model.variants),
        "parts": [_part_to_dict(p) for p in model.root_children],
        "connectors": [connector_to_dict(c) for c in model.connectors],
    }
