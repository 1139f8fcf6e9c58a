"""Five-port mesh router: XY routing, turn restrictions, round-robin output
arbitration. Routers have input FIFOs and no output buffering; a granted
head word moves straight into the downstream input FIFO.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass
from typing import Any, Sequence

from bjmesh.errors import ConfigError, ProtocolError
from bjmesh.link import Fifo
from bjmesh.packet import Coordinate


class Direction(enum.IntEnum):
    P = 0
    W = 1
    E = 2
    N = 3
    S = 4

    @property
    def opposite(self) -> "Direction":
        return _OPPOSITE[self]

    @property
    def delta(self) -> tuple[int, int]:
        return _DELTA[self]


_OPPOSITE = {
    Direction.P: Direction.P,
    Direction.W: Direction.E,
    Direction.E: Direction.W,
    Direction.N: Direction.S,
    Direction.S: Direction.N,
}
_DELTA = {
    Direction.P: (0, 0),
    Direction.W: (-1, 0),
    Direction.E: (1, 0),
    Direction.N: (0, -1),
    Direction.S: (0, 1),
}

NUM_DIRS = 5
P, W, E, N, S = (int(d) for d in Direction)

# Indexed [in][out]; North-in may not turn East or West.
_LEGAL = [[True] * NUM_DIRS for _ in range(NUM_DIRS)]
_LEGAL[N][W] = False
_LEGAL[N][E] = False


def route_decision(my: Coordinate, dest: Coordinate) -> Direction:
    """XY dimension-ordered routing: resolve X completely, then Y."""
    if dest.x > my.x:
        return Direction.E
    if dest.x < my.x:
        return Direction.W
    if dest.y > my.y:
        return Direction.S
    if dest.y < my.y:
        return Direction.N
    return Direction.P


def check_turn_legal(in_dir: Direction, out_dir: Direction) -> bool:
    return _LEGAL[in_dir][out_dir]


def stub_mask(*dirs: Direction) -> int:
    """Build a stub vector; bit ``d - 1`` stubs direction ``d`` (W, E, N, S)."""
    mask = 0
    for d in dirs:
        if d == Direction.P:
            raise ConfigError("the processor port can never be stubbed")
        mask |= 1 << (int(d) - 1)
    return mask


def is_stubbed(stub: int, d: int) -> bool:
    return d != P and bool(stub >> (d - 1) & 1)


@dataclass
class ArbiterState:
    """Round-robin pointer for one output port."""

    pointer: int = P


def arbiter_grant(state: ArbiterState, requests: int) -> int | None:
    """Grant the first requester at or after the pointer, then move past it.

    ``requests`` is a 5-bit mask indexed by input direction.
    """
    if not requests:
        return None
    for k in range(NUM_DIRS):
        i = (state.pointer + k) % NUM_DIRS
        if requests >> i & 1:
            state.pointer = (i + 1) % NUM_DIRS
            return i
    return None  # pragma: no cover


class Router:
    """One router of one network (forward or reverse).

    ``outputs[d]`` is whatever sits downstream of output ``d``: a neighbour's
    input FIFO, an endpoint port or a tieoff. Anything with ``can_enq`` and
    ``enq`` works.
    """

    def __init__(
        self,
        coord: Coordinate,
        stub: int = 0,
        fifo_depth: int = 2,
        name: str = "",
        dirty: list | None = None,
        turns: list[list[int]] | None = None,
        hops: dict | None = None,
    ):
        if stub >> 4:
            raise ConfigError("stub vector has 4 bits (W, E, N, S)")
        self.coord = coord
        self.mx, self.my = coord
        self.stub = stub
        self.name = name or f"router{coord}"
        self.inputs: list[Fifo | None] = [
            None if is_stubbed(stub, d) else Fifo(fifo_depth, f"{self.name}.{Direction(d).name}", dirty)
            for d in range(NUM_DIRS)
        ]
        self._live = [(d, f) for d, f in enumerate(self.inputs) if f is not None]
        self.outputs: list[Any] = [None] * NUM_DIRS
        self.arbiters = [ArbiterState() for _ in range(NUM_DIRS)]
        self.turns = turns if turns is not None else [[0] * NUM_DIRS for _ in range(NUM_DIRS)]
        self.hops = hops
        self.grants = [0] * NUM_DIRS
        self.blocked = [0] * NUM_DIRS

    def connect(self, out_dir: Direction, sink: Any) -> None:
        if is_stubbed(self.stub, out_dir):
            raise ConfigError(f"{self.name}: cannot connect stubbed port {Direction(out_dir).name}")
        self.outputs[out_dir] = sink

    @property
    def resident(self) -> int:
        return sum(len(f) for _, f in self._live)

    @property
    def entered(self) -> int:
        return sum(f.enq_count for _, f in self._live)

    @property
    def left(self) -> int:
        return sum(self.grants)

    def tick(self) -> None:
        """Evaluation phase: arbitrate every output and move granted heads."""
        req = None
        mx, my = self.mx, self.my
        for d, f in self._live:
            items = f.items
            if not items:
                continue
            pkt = items[0]
            x = pkt.x
            if x > mx:
                out = E
            elif x < mx:
                out = W
            elif pkt.y > my:
                out = S
            elif pkt.y < my:
                out = N
            else:
                out = P
            if not _LEGAL[d][out]:
                raise ProtocolError(
                    f"{self.name}: illegal turn {Direction(d).name}->{Direction(out).name}"
                )
            if self.outputs[out] is None:
                raise ProtocolError(
                    f"{self.name}: packet for {pkt.dest} routed to stubbed "
                    f"port {Direction(out).name}"
                )
            if req is None:
                req = [0] * NUM_DIRS
            req[out] |= 1 << d
        if req is None:
            return
        inputs = self.inputs
        for out in range(NUM_DIRS):
            mask = req[out]
            if not mask:
                continue
            sink = self.outputs[out]
            if not sink.can_enq():
                self.blocked[out] += 1
                continue
            arb = self.arbiters[out]
            src = _GRANT[arb.pointer][mask]
            arb.pointer = src + 1 if src < NUM_DIRS - 1 else 0
            pkt = inputs[src].deq()
            sink.enq(pkt)
            self.grants[out] += 1
            self.turns[src][out] += 1
            if self.hops is not None and pkt.tag is not None:
                self.hops[pkt.tag] = self.hops.get(pkt.tag, 0) + 1


# _GRANT[pointer][mask]: the round-robin winner, precomputed for speed.
_GRANT = [[arbiter_grant(ArbiterState(p), m) for m in range(1 << NUM_DIRS)] for p in range(NUM_DIRS)]


def uncontended_hops(src: Coordinate, dest: Coordinate) -> int:
    """Router FIFOs crossed between two mesh tiles (both attached on P)."""
    return abs(dest.x - src.x) + abs(dest.y - src.y) + 1


def route_path(src: Coordinate, dest: Coordinate) -> Sequence[Coordinate]:
    """Router coordinates visited by an XY route, inclusive of both ends."""
    path = [src]
    cur = src
    while cur != dest:
        dx, dy = route_decision(cur, dest).delta
        cur = Coordinate(cur.x + dx, cur.y + dy)
        path.append(cur)
    return path
