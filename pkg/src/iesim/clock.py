"""Simulated wall-clock conventions.

Simulated time 0 is midnight of day 1; a day is 86400 s; working hours are
08:00-18:00 of every simulated day.

Time-of-day arithmetic deliberately goes through math.fmod so the compiled
simulation kernel (C fmod) computes bit-identical values.
"""

from __future__ import annotations

import math

DAY_S = 86400.0
WORK_START_S = 8 * 3600.0
WORK_END_S = 18 * 3600.0
WORK_DAY_S = WORK_END_S - WORK_START_S


def time_of_day(t: float) -> float:
    return math.fmod(t, DAY_S)


def is_working(t: float) -> bool:
    tod = time_of_day(t)
    return WORK_START_S <= tod < WORK_END_S


def work_seconds_before(t: float) -> float:
    """Total working-hours time in [0, t)."""
    if t <= 0.0:
        return 0.0
    tod = math.fmod(t, DAY_S)
    days = (t - tod) / DAY_S
    partial = min(max(tod - WORK_START_S, 0.0), WORK_DAY_S)
    return days * WORK_DAY_S + partial


def work_overlap(a: float, b: float) -> float:
    """Working-hours seconds inside [a, b)."""
    if b <= a:
        return 0.0
    return work_seconds_before(b) - work_seconds_before(a)


def working_windows(t0: float, t1: float) -> list[tuple[float, float]]:
    """The working-hour sub-windows intersecting [t0, t1], clipped to it."""
    out: list[tuple[float, float]] = []
    day = int(t0 // DAY_S)
    while day * DAY_S < t1:
        a = day * DAY_S + WORK_START_S
        b = day * DAY_S + WORK_END_S
        lo, hi = max(a, t0), min(b, t1)
        if hi > lo:
            out.append((lo, hi))
        day += 1
    return out
