from __future__ import annotations

import hashlib
from decimal import Decimal, ROUND_HALF_UP
from pathlib import Path
from typing import Optional, Union

NumberValue = Union[int, float, Decimal, str]


def to_decimal_text(value: NumberValue) -> str:
    """Plain decimal notation (never scientific) that round-trips through float()."""

    decimal_value = Decimal(repr(value)) if isinstance(value, float) else Decimal(str(value))
    text = format(decimal_value, "f")
    if "." in text:
        text = text.rstrip("0").rstrip(".")
    return text or "0"


def round_half_up(value: Optional[NumberValue], places: int = 4) -> Optional[Decimal]:
    if value in (None, ""):
        return None
    quantum = Decimal(1).scaleb(-places)
    decimal_value = Decimal(repr(value)) if isinstance(value, float) else Decimal(str(value))
    return decimal_value.quantize(quantum, rounding=ROUND_HALF_UP)


def sha256_file(path: Union[str, Path]) -> str:
    digest = hashlib.sha256()
    with open(path, "rb") as handle:
        for chunk in iter(lambda: handle.read(1 << 20), b""):
            digest.update(chunk)
    return digest.hexdigest()
