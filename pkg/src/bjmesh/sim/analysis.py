"""Closed-form bounds and report post-processing."""

from __future__ import annotations

from typing import Iterable

from bjmesh.errors import ConfigError
from bjmesh.packet import Coordinate


def bisection_links(k: int) -> int:
    """Links crossing the vertical bisection of a k x k mesh, per direction."""
    return k


def bisection_bound(k: int) -> float:
    """Uniform-traffic injection bound (packets/node/cycle) of a k x k mesh.

    Each round of k*k packets puts k*k/4 across the cut in each direction,
    shared by k links, so every link is busy k/4 cycles per round.
    """
    if k < 2:
        raise ConfigError("bisection bound needs k >= 2")
    return 4.0 / k


def crosses_bisection(src: Coordinate, dest: Coordinate, k: int) -> bool:
    half = k / 2
    return (src.x < half) != (dest.x < half)


def count_bisection_crossings(report_or_pairs, k: int) -> int:
    """Delivered packets whose source and destination straddle the cut."""
    if hasattr(report_or_pairs, "src"):
        pairs = zip(report_or_pairs.src, report_or_pairs.dest)
    else:
        pairs = report_or_pairs
    return sum(crosses_bisection(Coordinate(*s), Coordinate(*d), k) for s, d in pairs)


def expected_crossing_fraction(k: int) -> float:
    """P(crossing) for uniform traffic that never targets its own source."""
    if k < 2:
        raise ConfigError("need k >= 2")
    return 0.5 * k * k / (k * k - 1)


def zero_load_latency(src: Coordinate, dest: Coordinate) -> int:
    """Cycles from request fire to consumption by the destination core.

    One cycle per router input FIFO (|dx| + |dy| + 1 routers) and one for
    the destination endpoint FIFO.
    """
    return abs(dest.x - src.x) + abs(dest.y - src.y) + 2


def zero_load_round_trip(cols: int, rows: int | None = None) -> int:
    """Store issue to credit visible at the sender, corner to corner."""
    rows = cols if rows is None else rows
    hops = (cols - 1) + (rows - 1)
    forward = hops + 2
    reverse = hops + 1
    return forward + reverse + 1


def mean_over(values: Iterable[float]) -> float:
    vals = list(values)
    return sum(vals) / len(vals) if vals else float("nan")
