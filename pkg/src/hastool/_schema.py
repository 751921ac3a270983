"""Small helpers for reading and writing the JSON document formats.

Time values are kept as :class:`decimal.Decimal` so that sums and scalings
stay exact. Documents are parsed with ``parse_float=Decimal`` and written
back as plain JSON numbers whenever the shortest float text reproduces the
decimal exactly, otherwise as a decimal string.
"""

from __future__ import annotations

from decimal import Decimal, InvalidOperation
from typing import Any, Iterable

from .errors import ModelError


def expect_object(value: Any, where: str) -> dict:
    if not isinstance(value, dict):
        raise ModelError("FORMAT", f"{where}: expected an object")
    return value


def expect_list(value: Any, where: str) -> list:
    if not isinstance(value, list):
        raise ModelError("FORMAT", f"{where}: expected a list")
    return value


def expect_str(value: Any, where: str) -> str:
    if not isinstance(value, str):
        raise ModelError("FORMAT", f"{where}: expected a string")
    return value


def expect_int(value: Any, where: str) -> int:
    if isinstance(value, bool) or not isinstance(value, int):
        raise ModelError("FORMAT", f"{where}: expected an integer")
    return value


def check_keys(obj: dict, where: str, required: Iterable[str], optional: Iterable[str] = ()) -> None:
    required = tuple(required)
    missing = [k for k in required if k not in obj]
    if missing:
        raise ModelError("FORMAT", f"{where}: missing field(s) {', '.join(missing)}")
    allowed = set(required) | set(optional)
    extra = sorted(k for k in obj if k not in allowed)
    if extra:
        raise ModelError("FORMAT", f"{where}: unknown field(s) {', '.join(extra)}")


def check_kind(obj: dict, *kinds: str) -> str:
    kind = obj.get("kind")
    if kind not in kinds:
        raise ModelError("FORMAT", f"expected kind {' or '.join(kinds)}, got {kind!r}")
    return kind


def as_time(value: Any, where: str) -> Decimal:
    """Coerce a JSON time value (int, decimal or decimal string) to Decimal."""
    if isinstance(value, bool):
        raise ModelError("FORMAT", f"{where}: expected a number")
    if isinstance(value, (int, Decimal)):
        result = Decimal(value)
    elif isinstance(value, str):
        try:
            result = Decimal(value)
        except InvalidOperation:
            raise ModelError("FORMAT", f"{where}: {value!r} is not a decimal") from None
    else:
        raise ModelError("FORMAT", f"{where}: expected a number")
    if not result.is_finite():
        raise ModelError("FORMAT", f"{where}: time values must be finite")
    return result


def time_json(value: Decimal) -> int | float | str:
    if value == value.to_integral_value():
        return int(value)
    as_float = float(value)
    if Decimal(repr(as_float)) == value:
        return as_float
    return str(value.normalize())


def str_list(value: Any, where: str) -> list[str]:
    return [expect_str(v, f"{where}[{i}]") for i, v in enumerate(expect_list(value, where))]
