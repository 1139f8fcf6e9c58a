"""Synthetic traffic with infinite source queues, and the experiment runner.

Packets are born into a per-node source queue at the offered rate whether or
not the network can take them; latency runs from that birth to consumption at
the destination core, so source queueing is part of the measurement.
"""

from __future__ import annotations

import enum
import random
from collections import deque
from dataclasses import dataclass, field

import numpy as np

from bjmesh.endpoint import EndpointConfig, credits_recommended
from bjmesh.errors import ConfigError
from bjmesh.nodes import Node
from bjmesh.packet import Coordinate, OpCode, Packet
from bjmesh.sim.fabric import Fabric, FabricConfig


class Pattern(enum.Enum):
    UNIFORM_RANDOM = "uniform"
    TRANSPOSE = "transpose"
    NEAREST_NEIGHBOR = "neighbor"
    # every node sends to its mirror image across the vertical bisection
    MIRROR = "mirror"


class Arrivals(enum.Enum):
    """How packets are born into the source queue."""

    # one packet every 1/rate cycles on average, evenly spaced, random phase
    FIXED = "fixed"
    BERNOULLI = "bernoulli"


def neighbors(src: Coordinate, cols: int, rows: int) -> list[Coordinate]:
    out = []
    for dx, dy in ((-1, 0), (1, 0), (0, -1), (0, 1)):
        x, y = src.x + dx, src.y + dy
        if 0 <= x < cols and 0 <= y < rows:
            out.append(Coordinate(x, y))
    return out


def gen_destination(
    pattern: Pattern, src: Coordinate, cols: int, rows: int, rng: random.Random
) -> Coordinate:
    if pattern is Pattern.UNIFORM_RANDOM:
        n = cols * rows
        if n < 2:
            raise ConfigError("uniform traffic needs at least two nodes")
        r = rng.randrange(n - 1)
        if r >= src.y * cols + src.x:
            r += 1
        return Coordinate(r % cols, r // cols)
    if pattern is Pattern.TRANSPOSE:
        if cols != rows:
            raise ConfigError("transpose traffic needs a square mesh")
        return Coordinate(src.y, src.x)
    if pattern is Pattern.NEAREST_NEIGHBOR:
        nb = neighbors(src, cols, rows)
        if not nb:
            raise ConfigError("nearest-neighbor traffic needs at least two nodes")
        return nb[rng.randrange(len(nb))]
    if pattern is Pattern.MIRROR:
        return Coordinate(cols - 1 - src.x, src.y)
    raise ConfigError(f"unknown pattern {pattern}")


class Recorder:
    """Column store of per-packet timestamps, indexed by packet tag."""

    def __init__(self):
        self.src: list[Coordinate] = []
        self.dest: list[Coordinate] = []
        self.arrival: list[int] = []
        self.entry: list[int] = []
        self.delivery: list[int] = []
        self.measured: list[bool] = []
        self.delivered_total = 0
        self.measured_count = 0
        self.measured_delivered = 0
        self.delivered_log: list[int] = []  # tags in delivery order

    def new(self, src, dest, cycle, measured) -> int:
        self.src.append(src)
        self.dest.append(dest)
        self.arrival.append(cycle)
        self.entry.append(-1)
        self.delivery.append(-1)
        self.measured.append(measured)
        self.measured_count += measured
        return len(self.src) - 1


class TrafficNode(Node):
    """Source with an unbounded queue, plus a line-rate sink for requests."""

    serves_requests = True

    def __init__(self, idx: int = 0):
        self.idx = idx
        self.queue: deque = deque()
        self.pattern = Pattern.UNIFORM_RANDOM
        self.rate = 0.0
        self.arrivals = Arrivals.FIXED
        self._credit = 0.0
        self.load_fraction = 0.0
        self.rng = random.Random(idx)
        self.rec: Recorder | None = None
        self.injecting = False
        self.measuring = False
        self.budget: int | None = None  # arrivals still allowed; None = unlimited
        self.cols = self.rows = 1
        # explicit destination set; overrides the pattern when given
        self.dest_pool: list[Coordinate] | None = None
        self._due: deque = deque()

    @property
    def done(self) -> bool:
        return not self.queue and not self._due and (not self.injecting or self.budget == 0)

    def start(self, rate: float, arrivals: Arrivals, rng: random.Random) -> None:
        self.rate = rate
        self.arrivals = arrivals
        self.rng = rng
        self._credit = rng.random()
        self.injecting = True
        self.budget = None

    def _arrival(self) -> bool:
        if self.arrivals is Arrivals.BERNOULLI:
            return self.rng.random() < self.rate
        self._credit += self.rate
        if self._credit >= 1.0:
            self._credit -= 1.0
            return True
        return False

    def tick(self, ep, cycle: int) -> None:
        due = self._due
        if due and due[0] <= cycle:
            due.popleft()
            ep.respond(0)
        if ep.in_v:
            pkt = ep.yumi()
            if pkt.op != OpCode.REMOTE_STORE:
                due.append(cycle + 1)
            rec = self.rec
            if rec is not None and pkt.tag is not None:
                rec.delivery[pkt.tag] = cycle
                rec.delivered_total += 1
                if rec.measured[pkt.tag]:
                    rec.measured_delivered += 1
                rec.delivered_log.append(pkt.tag)
        if self.injecting and self.budget != 0 and self._arrival():
            me = ep.coord
            if self.dest_pool:
                dest = self.dest_pool[self.rng.randrange(len(self.dest_pool))]
            else:
                dest = gen_destination(self.pattern, me, self.cols, self.rows, self.rng)
            tag = self.rec.new(me, dest, cycle, self.measuring) if self.rec is not None else None
            is_load = self.load_fraction and self.rng.random() < self.load_fraction
            self.queue.append((dest, tag, is_load))
            if self.budget is not None:
                self.budget -= 1
        if self.queue and ep.out_ready and not ep.freeze:
            dest, tag, is_load = self.queue[0]
            me = ep.coord
            if is_load:
                pkt = Packet(0, OpCode.REMOTE_LOAD, 0, 0, me.y, me.x, dest.y, dest.x, tag)
            else:
                pkt = Packet(0, OpCode.REMOTE_STORE, 0xF, tag or 0, me.y, me.x, dest.y, dest.x, tag)
            ep.send(pkt)
            self.queue.popleft()
            if tag is not None:
                self.rec.entry[tag] = cycle


@dataclass
class TrafficSpec:
    pattern: Pattern = Pattern.UNIFORM_RANDOM
    injection_rate: float = 0.1
    load_fraction: float = 0.0
    arrivals: Arrivals = Arrivals.FIXED
    warmup_cycles: int = 500
    measure_packets: int = 5000
    # The measurement phase also lasts at least this long, so slow backlog
    # growth at a few hot nodes has time to show in the queue average.
    min_measure_cycles: int = 1000
    drain: bool = False
    max_cycles: int = 50_000
    # Saturation is judged on three equal windows of the measurement phase.
    saturation_growth: float = 0.5

    def __post_init__(self):
        if isinstance(self.pattern, str):
            self.pattern = Pattern(self.pattern)
        if isinstance(self.arrivals, str):
            self.arrivals = Arrivals(self.arrivals)
        if not 0 < self.injection_rate <= 1:
            raise ConfigError("injection rate must be in (0, 1]")
        if not 0 <= self.load_fraction <= 1:
            raise ConfigError("load fraction must be in [0, 1]")
        if self.measure_packets < 1:
            raise ConfigError("measure at least one packet")
        if self.min_measure_cycles < 0:
            raise ConfigError("min_measure_cycles must be >= 0")


@dataclass
class SimReport:
    pattern: Pattern
    cols: int
    rows: int
    offered: float
    cycles: int
    injected: int
    delivered: int
    measured: int
    measured_delivered: int
    latencies: np.ndarray
    network_latencies: np.ndarray
    accepted_throughput: float
    saturated: bool
    window_queue_depth: list[float]
    tags: list[int] = field(repr=False, default_factory=list)
    src: list[Coordinate] = field(repr=False, default_factory=list)
    dest: list[Coordinate] = field(repr=False, default_factory=list)
    arrival: list[int] = field(repr=False, default_factory=list)
    entry: list[int] = field(repr=False, default_factory=list)
    delivery: list[int] = field(repr=False, default_factory=list)
    link_utilization: dict = field(repr=False, default_factory=dict)
    credit_trace: list[float] = field(repr=False, default_factory=list)
    order_violations: int = 0
    illegal_turns: int = 0
    drained: bool = False

    @property
    def mean_latency(self) -> float:
        return float(self.latencies.mean()) if self.latencies.size else float("nan")

    @property
    def median_latency(self) -> float:
        return float(np.median(self.latencies)) if self.latencies.size else float("nan")

    @property
    def p99_latency(self) -> float:
        return float(np.percentile(self.latencies, 99)) if self.latencies.size else float("nan")

    def records(self):
        """Measured, delivered packets as (src, dest, arrival, entry, delivery)."""
        return zip(self.src, self.dest, self.arrival, self.entry, self.delivery)


def default_credits(cols: int, rows: int) -> int:
    """Credits that cover the corner-to-corner store round trip at 1 word/cycle."""
    from bjmesh.sim.analysis import zero_load_round_trip

    return credits_recommended(zero_load_round_trip(cols, rows), 1.0)


def traffic_fabric(
    cols: int,
    rows: int | None = None,
    *,
    router_fifo_depth: int = 2,
    endpoint: EndpointConfig | None = None,
    seed: int = 0,
    check_invariants: bool = False,
    track_hops: bool = False,
) -> Fabric:
    rows = cols if rows is None else rows
    if endpoint is None:
        endpoint = EndpointConfig(max_out_credits=default_credits(cols, rows))
    nodes = {Coordinate(x, y): TrafficNode(y * cols + x) for y in range(rows) for x in range(cols)}
    cfg = FabricConfig(
        cols,
        rows,
        nodes=nodes,
        router_fifo_depth=router_fifo_depth,
        endpoint=endpoint,
        seed=seed,
        check_invariants=check_invariants,
        track_hops=track_hops,
    )
    return Fabric(cfg)


def run_experiment(fabric: Fabric, traffic: TrafficSpec, trace_interval: int = 100) -> SimReport:
    """Warm up, measure ``measure_packets`` arrivals, optionally drain."""
    gens = [n for n in fabric.nodes.values() if isinstance(n, TrafficNode)]
    if not gens:
        raise ConfigError("fabric has no traffic-generator nodes")
    rec = Recorder()
    master = random.Random(fabric.cfg.seed)
    for n in gens:
        n.start(traffic.injection_rate, traffic.arrivals, random.Random(master.getrandbits(64)))
        n.pattern = traffic.pattern
        n.load_fraction = traffic.load_fraction
        n.rec = rec
        n.cols, n.rows = fabric.cols, fabric.rows
        n.measuring = False
    n_nodes = len(gens)
    start = fabric.cycle
    limit = start + traffic.max_cycles
    eps = [fabric.endpoints[c] for c, n in fabric.nodes.items() if isinstance(n, TrafficNode)]
    credit_trace: list[float] = []

    def sample(cyc):
        if trace_interval and cyc % trace_interval == 0:
            credit_trace.append(
                float(np.mean([ep.cfg.max_out_credits - ep.credits for ep in eps]))
            )

    while fabric.cycle < start + traffic.warmup_cycles and fabric.cycle < limit:
        fabric.tick()
        sample(fabric.cycle)

    for n in gens:
        n.measuring = True
    m_start = fabric.cycle
    depth_trace: list[int] = []
    delivered_at_start = rec.delivered_total
    m_until = m_start + traffic.min_measure_cycles
    while (rec.measured_count < traffic.measure_packets or fabric.cycle < m_until) and fabric.cycle < limit:
        fabric.tick()
        depth_trace.append(sum(len(n.queue) for n in gens))
        sample(fabric.cycle)
    m_end = fabric.cycle
    delivered_in_window = rec.delivered_total - delivered_at_start
    for n in gens:
        n.measuring = False

    measured_tags = [t for t, m in enumerate(rec.measured) if m]

    def measured_done(_f):
        return rec.measured_delivered == rec.measured_count

    finished = fabric.run_until(measured_done, max(0, limit - fabric.cycle))
    drained = False
    if traffic.drain:
        for n in gens:
            n.injecting = False
        drained = fabric.run_until(lambda f: f.quiescent(), max(0, limit - fabric.cycle))

    windows: list[float] = []
    if len(depth_trace) >= 3:
        for part in np.array_split(np.asarray(depth_trace, dtype=float), 3):
            windows.append(float(part.mean()) / n_nodes)
    growing = (
        len(windows) == 3
        and windows[0] < windows[1] < windows[2]
        and windows[2] - windows[0] > traffic.saturation_growth
    )
    saturated = growing or not finished

    done_tags = [t for t in measured_tags if rec.delivery[t] >= 0]
    arr = np.asarray([rec.arrival[t] for t in done_tags], dtype=np.int64)
    ent = np.asarray([rec.entry[t] for t in done_tags], dtype=np.int64)
    dlv = np.asarray([rec.delivery[t] for t in done_tags], dtype=np.int64)
    window_len = max(m_end - m_start, 1)
    return SimReport(
        pattern=traffic.pattern,
        cols=fabric.cols,
        rows=fabric.rows,
        offered=traffic.injection_rate,
        cycles=fabric.cycle - start,
        injected=len(rec.arrival),
        delivered=rec.delivered_total,
        measured=len(measured_tags),
        measured_delivered=len(done_tags),
        latencies=dlv - arr,
        network_latencies=dlv - ent,
        accepted_throughput=delivered_in_window / (n_nodes * window_len),
        saturated=saturated,
        window_queue_depth=windows,
        tags=done_tags,
        src=[rec.src[t] for t in done_tags],
        dest=[rec.dest[t] for t in done_tags],
        arrival=arr.tolist(),
        entry=ent.tolist(),
        delivery=dlv.tolist(),
        link_utilization=fabric.link_utilization(),
        credit_trace=credit_trace,
        order_violations=len(fabric.order_errors),
        illegal_turns=fabric.illegal_turns_observed(),
        drained=drained,
    )


def measure_accepted_throughput(
    fabric: Fabric, pattern: Pattern, warmup: int = 300, window: int = 1500
) -> float:
    """Accepted packets/node/cycle with every source queue permanently backlogged."""
    gens = [n for n in fabric.nodes.values() if isinstance(n, TrafficNode)]
    master = random.Random(fabric.cfg.seed)
    rec = Recorder()
    for n in gens:
        n.start(1.0, Arrivals.FIXED, random.Random(master.getrandbits(64)))
        n.pattern = pattern
        n.rec = rec
        n.cols, n.rows = fabric.cols, fabric.rows
    fabric.run(warmup)
    before = rec.delivered_total
    fabric.run(window)
    return (rec.delivered_total - before) / (len(gens) * window)
