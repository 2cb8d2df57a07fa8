"""Vector clocks over small integer axis ids.

Clocks are plain dicts mapping axis -> tick; missing axes are implicitly 0.
Kept free of classes so the hot paths (join/leq on every synchronization
event and race check) stay cheap.
"""

from __future__ import annotations


def clock_leq(a: dict[int, int], b: dict[int, int]) -> bool:
    """True iff a happens-before-or-equals b (componentwise <=)."""
    bget = b.get
    for k, v in a.items():
        if v > bget(k, 0):
            return False
    return True


def clock_join_into(dst: dict[int, int], src: dict[int, int]) -> None:
    """dst <- componentwise max(dst, src), in place."""
    dget = dst.get
    for k, v in src.items():
        if v > dget(k, 0):
            dst[k] = v


def concurrent(a: dict[int, int], b: dict[int, int]) -> bool:
    return not clock_leq(a, b) and not clock_leq(b, a)
