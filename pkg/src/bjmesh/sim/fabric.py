"""Fabric assembly and the global two-phase clock.

Each tile gets two routers (forward and reverse network). Nodes sit on the
P port of their tile; IO devices hang off the S port of the bottom row and
may claim several Y coordinates below the mesh.
"""

from __future__ import annotations

from collections import defaultdict, deque
from dataclasses import dataclass, field
from typing import Any, Callable, Iterator, Mapping

from bjmesh.endpoint import BarebonesEndpoint, EndpointConfig, StandardEndpoint
from bjmesh.errors import ConfigError, ProtocolError
from bjmesh.nodes import Node, Tieoff
from bjmesh.packet import Coordinate, PacketFormat
from bjmesh.router import NUM_DIRS, Direction, Router, stub_mask

D = Direction


@dataclass
class FabricConfig:
    cols: int
    rows: int
    nodes: Mapping = field(default_factory=dict)
    # South-edge IO devices keyed by their base coordinate (y must equal rows).
    io: Mapping = field(default_factory=dict)
    router_fifo_depth: int = 2
    endpoint: EndpointConfig = field(default_factory=EndpointConfig)
    # Per-coordinate endpoint overrides, e.g. different credit counts.
    endpoint_overrides: Mapping = field(default_factory=dict)
    barebones: frozenset = frozenset()
    seed: int = 0
    check_invariants: bool = False
    track_hops: bool = False

    def __post_init__(self):
        if self.cols < 1 or self.rows < 1:
            raise ConfigError("mesh needs at least one row and one column")
        if self.router_fifo_depth < 1:
            raise ConfigError("router FIFO depth must be >= 1")


class Fabric:
    """A built mesh. Advance it with :meth:`tick` or :meth:`run`."""

    def __init__(self, cfg: FabricConfig):
        self.cfg = cfg
        self.cols, self.rows = cfg.cols, cfg.rows
        self.cycle = 0
        self._dirty: list = []
        self.fwd_turns = [[0] * NUM_DIRS for _ in range(NUM_DIRS)]
        self.rev_turns = [[0] * NUM_DIRS for _ in range(NUM_DIRS)]
        self.hops: dict | None = {} if cfg.track_hops else None
        self.fwd: dict[Coordinate, Router] = {}
        self.rev: dict[Coordinate, Router] = {}
        self.endpoints: dict[Coordinate, Any] = {}
        self.nodes: dict[Coordinate, Node] = {}
        # Every routable coordinate -> base coordinate of the owning endpoint.
        self.owner: dict[Coordinate, Coordinate] = {}
        # (endpoint, forward input fifo, reverse router, port) for the credit oracle
        self._attach: dict[Coordinate, tuple] = {}
        self.order_errors: list[str] = []
        self._inflight: dict[tuple, deque] = defaultdict(deque)
        self._build()

    # -- construction ---------------------------------------------------------
    def _build(self) -> None:
        cfg = self.cfg
        nodes = {Coordinate(*c): n for c, n in cfg.nodes.items()}
        io = {Coordinate(*c): n for c, n in cfg.io.items()}
        for c in nodes:
            if not (0 <= c.x < self.cols and 0 <= c.y < self.rows):
                raise ConfigError(f"node at {c} lies outside the {self.cols}x{self.rows} mesh")
        io_cols = set()
        span_max = 0
        for c, n in io.items():
            if c.y != self.rows or not 0 <= c.x < self.cols:
                raise ConfigError(
                    f"IO at {c}: IO can only attach on the south boundary (y == {self.rows})"
                )
            if c.x in io_cols:
                raise ConfigError(f"two IO devices on column {c.x}")
            io_cols.add(c.x)
            span_max = max(span_max, getattr(n, "span", 1))
        ecfg = cfg.endpoint
        fmt = PacketFormat.for_mesh(
            self.cols, self.rows + span_max, ecfg.addr_width, ecfg.data_width
        )
        if ecfg.x_cord_width is not None or ecfg.y_cord_width is not None:
            fmt = PacketFormat(
                ecfg.x_cord_width or fmt.x_cord_width,
                ecfg.y_cord_width or fmt.y_cord_width,
                ecfg.addr_width,
                ecfg.data_width,
            )
            if (self.cols - 1) >> fmt.x_cord_width or (self.rows + span_max - 1) >> fmt.y_cord_width:
                raise ConfigError("coordinate widths too small for the mesh")
        self.fmt = fmt

        for y in range(self.rows):
            for x in range(self.cols):
                c = Coordinate(x, y)
                stubs = []
                if x == 0:
                    stubs.append(D.W)
                if x == self.cols - 1:
                    stubs.append(D.E)
                if y == 0:
                    stubs.append(D.N)
                if y == self.rows - 1 and x not in io_cols:
                    stubs.append(D.S)
                mask = stub_mask(*stubs)
                depth = cfg.router_fifo_depth
                self.fwd[c] = Router(c, mask, depth, f"fwd{c}", self._dirty, self.fwd_turns, self.hops)
                self.rev[c] = Router(c, mask, depth, f"rev{c}", self._dirty, self.rev_turns)

        for c, r in self.fwd.items():
            for d in (D.W, D.E, D.N, D.S):
                dx, dy = d.delta
                nb = Coordinate(c.x + dx, c.y + dy)
                if nb in self.fwd:
                    r.connect(d, self.fwd[nb].inputs[d.opposite])
                    self.rev[c].connect(d, self.rev[nb].inputs[d.opposite])

        for c in self.fwd:
            node = nodes.get(c)
            if node is None:
                self.fwd[c].connect(D.P, Tieoff(f"fwd{c}.P"))
                self.rev[c].connect(D.P, Tieoff(f"rev{c}.P"))
                continue
            self._attach_node(c, node, c, D.P)
        for c, node in io.items():
            bottom = Coordinate(c.x, self.rows - 1)
            self._attach_node(c, node, bottom, D.S)
            for j in range(1, getattr(node, "span", 1)):
                claimed = Coordinate(c.x, c.y + j)
                self.owner[claimed] = c

        self._tiles = [(self.endpoints[c], self.nodes[c]) for c in sorted(self.endpoints, key=lambda c: (c.y, c.x))]
        self._eps = [ep for ep, _ in self._tiles]
        self._routers = list(self.fwd.values()) + list(self.rev.values())

    def _attach_node(self, c: Coordinate, node: Node, rc: Coordinate, port: Direction) -> None:
        ecfg = self.cfg.endpoint_overrides.get(tuple(c), self.cfg.endpoint)
        cls = BarebonesEndpoint if tuple(c) in {tuple(b) for b in self.cfg.barebones} else StandardEndpoint
        ep = cls(c, ecfg, self.fmt, self._dirty)
        ep.fwd_out = self.fwd[rc].inputs[port]
        ep.rev_out = self.rev[rc].inputs[port]
        self.fwd[rc].connect(port, ep.in_fifo)
        self.rev[rc].connect(port, ep.return_port)
        if self.cfg.check_invariants:
            ep.on_send = self._chain(ep.on_send, self._note_send)
            ep.on_consume = self._chain(ep.on_consume, self._note_consume)
        self.endpoints[c] = ep
        self.nodes[c] = node
        self.owner[c] = c
        self._attach[c] = (ep, ep.fwd_out, self.rev[rc], port)

    @staticmethod
    def _chain(first: Callable | None, second: Callable) -> Callable:
        if first is None:
            return second

        def both(*a):
            first(*a)
            second(*a)

        return both

    # -- point-to-point order oracle (object identity, no tags needed) -------
    def _note_send(self, pkt, cycle) -> None:
        dest = self.owner.get(pkt.dest, pkt.dest)
        self._inflight[(pkt.src, dest)].append(pkt)

    def _note_consume(self, pkt, cycle) -> None:
        dest = self.owner.get(pkt.dest, pkt.dest)
        q = self._inflight[(pkt.src, dest)]
        if not q or q[0] is not pkt:
            self.order_errors.append(f"cycle {cycle}: {pkt.src}->{dest} delivered out of order")
            try:
                q.remove(pkt)
            except ValueError:
                pass
        else:
            q.popleft()

    def add_hook(self, coord, *, on_send=None, on_consume=None, on_return=None) -> None:
        ep = self.endpoints[Coordinate(*coord)]
        if on_send:
            ep.on_send = self._chain(ep.on_send, on_send)
        if on_consume:
            ep.on_consume = self._chain(ep.on_consume, on_consume)
        if on_return:
            ep.on_return = self._chain(ep.on_return, on_return)

    # -- clock ------------------------------------------------------------------
    def tick(self) -> None:
        c = self.cycle
        try:
            for ep, node in self._tiles:
                ep.begin(c)
                node.tick(ep, c)
                ep.finish()
            for r in self._routers:
                r.tick()
        except ProtocolError as e:
            raise e.at(c) from None
        dirty = self._dirty
        for f in dirty:
            f.commit()
        dirty.clear()
        try:
            for ep in self._eps:
                ep.commit()
            if self.cfg.check_invariants:
                self.check_credit_conservation()
        except ProtocolError as e:
            raise e.at(c) from None
        self.cycle = c + 1

    def run(self, cycles: int) -> None:
        for _ in range(cycles):
            self.tick()

    def run_until(self, done: Callable[["Fabric"], bool], max_cycles: int) -> bool:
        """Tick until ``done(fabric)`` holds; False if the budget ran out."""
        limit = self.cycle + max_cycles
        while not done(self):
            if self.cycle >= limit:
                return False
            self.tick()
        return True

    # -- observation ------------------------------------------------------------
    def outstanding(self, coord) -> int:
        """Requests sent by ``coord`` whose reply has not been delivered.

        Counted at the router boundary, independently of the endpoint's own
        credit counter.
        """
        ep, fifo, rev_router, port = self._attach[Coordinate(*coord)]
        return fifo.enq_count - rev_router.grants[port]

    def check_credit_conservation(self) -> None:
        for c, (ep, *_rest) in self._attach.items():
            if not isinstance(ep, StandardEndpoint):
                continue
            out = self.outstanding(c)
            if not 0 <= ep.credits <= ep.cfg.max_out_credits:
                raise ProtocolError(f"endpoint {c}: credits {ep.credits} out of range")
            if ep.credits + out != ep.cfg.max_out_credits:
                raise ProtocolError(
                    f"endpoint {c}: credits {ep.credits} + outstanding {out} "
                    f"!= {ep.cfg.max_out_credits}"
                )

    def network_empty(self) -> bool:
        if self._dirty:
            return False
        for r in self._routers:
            for _, f in r._live:
                if f.items:
                    return False
        return all(ep.idle for ep in self._eps)

    def quiescent(self) -> bool:
        """Nothing in flight, every node finished and every credit home."""
        if not self.network_empty():
            return False
        for ep, node in self._tiles:
            if not node.done:
                return False
            if isinstance(ep, StandardEndpoint) and not ep.fence_done():
                return False
        return True

    def routers(self) -> Iterator[Router]:
        return iter(self._routers)

    def endpoint(self, coord) -> Any:
        return self.endpoints[Coordinate(*coord)]

    def node(self, coord) -> Node:
        return self.nodes[Coordinate(*coord)]

    def link_utilization(self, network: str = "fwd") -> dict[tuple[Coordinate, Direction], float]:
        routers = self.fwd if network == "fwd" else self.rev
        cyc = max(self.cycle, 1)
        return {
            (c, Direction(d)): r.grants[d] / cyc
            for c, r in routers.items()
            for d in range(NUM_DIRS)
            if r.outputs[d] is not None and not isinstance(r.outputs[d], Tieoff)
        }

    def illegal_turns_observed(self) -> int:
        return sum(t[D.N][D.W] + t[D.N][D.E] for t in (self.fwd_turns, self.rev_turns))

    def unanswered_requests(self) -> dict[Coordinate, int]:
        """Barebones endpoints whose core consumed requests without replying."""
        return {
            c: len(ep.unanswered)
            for c, ep in self.endpoints.items()
            if isinstance(ep, BarebonesEndpoint) and ep.unanswered
        }


def build_fabric(cfg: FabricConfig) -> Fabric:
    return Fabric(cfg)
