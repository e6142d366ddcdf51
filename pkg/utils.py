"""Shared parsing and numeric helpers.

CLI strings are parsed by the ``parse_*`` helpers, which return ``None`` for
anything they cannot accept so callers decide how to report it.
"""

import math

REPORT_FORMATS = ("json", "csv", "plot")


def parse_p_list(text: str, max_entries: int = 16) -> list[float] | None:
    """Parse a comma-separated list of exponents p > 0. None if invalid."""
    parts = [p.strip() for p in (text or "").split(",") if p.strip()]
    if not parts or len(parts) > max_entries:
        return None
    values = []
    for part in parts:
        try:
            value = float(part)
        except ValueError:
            return None
        if not math.isfinite(value) or value <= 0:
            return None
        values.append(value)
    return sorted(set(values))


def parse_formats(text: str) -> list[str] | None:
    """Parse ``json,csv[,plot]``. Order is normalized; None on unknown names."""
    parts = [p.strip().lower() for p in (text or "").split(",") if p.strip()]
    if not parts or any(p not in REPORT_FORMATS for p in parts):
        return None
    return [f for f in REPORT_FORMATS if f in parts]


def parse_threads(text: str) -> int | None:
    """Parse a positive worker count. None if invalid."""
    t = (text or "").strip()
    if not t.isdigit():
        return None
    n = int(t)
    return n if 1 <= n <= 256 else None


def parse_seed(text: str) -> int | None:
    t = (text or "").strip()
    if not t.lstrip("-").isdigit():
        return None
    n = int(t)
    return n if n >= 0 else None


def relative_drift(a: float, b: float) -> float:
    """|a-b| / max(|a|,|b|), 0 when both vanish."""
    scale = max(abs(a), abs(b))
    if scale == 0.0:
        return 0.0
    return abs(a - b) / scale


def finite_or_none(value: float) -> float | None:
    """Report-friendly float: plain Python float, or None when not finite."""
    value = float(value)
    return value if math.isfinite(value) else None
