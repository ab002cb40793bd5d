"""Canonical document encoding shared by every on-ledger and on-wire format.

The canonical form is JSON text with map keys sorted by their UTF-8 bytes,
no insignificant whitespace, integers in shortest decimal form, and strings
as raw UTF-8. Binary values never appear directly; callers encode them as
lowercase hex or multibase strings first.
"""

from __future__ import annotations

import json
from typing import Any

__all__ = [
    "EncodingError",
    "canonical_bytes",
    "parse_canonical",
    "parse_hex",
]


class EncodingError(ValueError):
    """Value cannot be represented in (or parsed from) canonical form."""


_ATOMS = (str, int, bool, type(None))


def _validate(value: Any, path: str) -> None:
    if isinstance(value, bool) or value is None or isinstance(value, str):
        return
    if isinstance(value, int):
        return
    if isinstance(value, float):
        raise EncodingError(f"non-representable float at {path}")
    if isinstance(value, dict):
        for key in value:
            if not isinstance(key, str):
                raise EncodingError(f"non-string map key at {path}")
            _validate(value[key], f"{path}.{key}")
        return
    if isinstance(value, (list, tuple)):
        for i, item in enumerate(value):
            _validate(item, f"{path}[{i}]")
        return
    raise EncodingError(f"non-representable {type(value).__name__} at {path}")


def canonical_bytes(value: Any) -> bytes:
    """Encode a value tree (maps, lists, strings, ints, bools, null) canonically."""
    _validate(value, "$")
    text = json.dumps(value, sort_keys=True, separators=(",", ":"), ensure_ascii=False)
    return text.encode("utf-8")


def parse_canonical(data: bytes) -> Any:
    """Parse bytes that must be exactly a canonical encoding.

    Rejects anything whose re-encoding is not byte-identical to the input,
    so every stored record admits precisely one byte representation.
    """
    try:
        value = json.loads(data.decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise EncodingError(f"not a canonical document: {exc}") from exc
    if canonical_bytes(value) != data:
        raise EncodingError("document is not in canonical form")
    return value


def parse_hex(text: Any, length: int, field: str = "value") -> bytes:
    """Decode a strict lowercase hex string of exactly `length` bytes."""
    if not isinstance(text, str):
        raise EncodingError(f"{field}: expected hex string")
    if len(text) != 2 * length:
        raise EncodingError(f"{field}: expected {2 * length} hex chars, got {len(text)}")
    if text.lower() != text:
        raise EncodingError(f"{field}: hex must be lowercase")
    try:
        return bytes.fromhex(text)
    except ValueError as exc:
        raise EncodingError(f"{field}: invalid hex") from exc
