"""Time and size units.

All simulated durations are integer nanoseconds. Cost formulas are rounded
half-up to 1 ns at the point of computation so that conservation identities
hold exactly and traces are bit-identical across platforms.
"""

from __future__ import annotations

NS_PER_US = 1_000
NS_PER_MS = 1_000_000
NS_PER_S = 1_000_000_000

_UNIT_FACTORS = {
    "ns": 1,
    "us": NS_PER_US,
    "ms": NS_PER_MS,
    "s": NS_PER_S,
}


def round_ns(value: float) -> int:
    """Round a nanosecond quantity half-up to an integer."""
    if value < 0:
        raise ValueError(f"negative duration: {value}")
    return int(value + 0.5)


def ms_to_ns(ms: float) -> int:
    return round_ns(ms * NS_PER_MS)


def ns_to_ms(ns: int) -> float:
    return ns / NS_PER_MS


def parse_duration(text: str | int | float) -> int:
    """Parse a duration with an explicit unit ("2 ms", "150us", "0 ns") to ns.

    Bare numbers are rejected except exact zero; config durations must carry
    units so files are unambiguous.
    """
    if isinstance(text, (int, float)):
        if text == 0:
            return 0
        raise ValueError(f"duration {text!r} must carry a unit (ns/us/ms/s)")
    s = text.strip()
    for unit in ("ns", "us", "ms", "s"):
        if s.endswith(unit):
            num = s[: -len(unit)].strip()
            try:
                value = float(num)
            except ValueError:
                raise ValueError(f"bad duration literal: {text!r}") from None
            if value < 0:
                raise ValueError(f"negative duration: {text!r}")
            return round_ns(value * _UNIT_FACTORS[unit])
    raise ValueError(f"duration {text!r} must carry a unit (ns/us/ms/s)")


def format_ns(ns: int) -> str:
    """Human-readable rendering used in reports."""
    if ns >= NS_PER_MS:
        return f"{ns / NS_PER_MS:.3f} ms"
    if ns >= NS_PER_US:
        return f"{ns / NS_PER_US:.3f} us"
    return f"{ns} ns"
