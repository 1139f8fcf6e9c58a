"""Ready-made fabrics: the two-router example, ordering and freeze demos,
lock contention and seeded random mixes for stress testing."""

from __future__ import annotations

import random
from dataclasses import dataclass, field

from bjmesh.endpoint import EndpointConfig
from bjmesh.nodes import (
    FENCE,
    IoVirtualMeshNode,
    LockMaster,
    LockMonitor,
    MemorySlave,
    Node,
    ScriptedMaster,
    SequenceMaster,
    StreamingMaster,
)
from bjmesh.packet import ConfigRegister, Coordinate, Packet, config_address
from bjmesh.sim.fabric import Fabric, FabricConfig
from bjmesh.sim.traffic import Pattern, TrafficNode

C = Coordinate


def golden_topology(
    n: int = 3, fifo_els: int = 4, max_out_credits: int = 16, fence: bool = False
) -> Fabric:
    """Master at (0,0); memory slave hanging south of router (1,0) at (1,1).

    Every other port of the two routers is stubbed or tied off.
    """
    cfg = FabricConfig(
        cols=2,
        rows=1,
        nodes={C(0, 0): SequenceMaster(C(1, 1), n, fence=fence)},
        io={C(1, 1): MemorySlave()},
        endpoint=EndpointConfig(fifo_els=fifo_els, max_out_credits=max_out_credits),
        check_invariants=True,
    )
    return Fabric(cfg)


def run_golden(n: int = 3, **kw) -> SequenceMaster:
    fab = golden_topology(n, **kw)
    fab.run_until(lambda f: f.quiescent(), 50 + 10 * n)
    return fab.node(C(0, 0))


def ordering_demo() -> tuple[Fabric, ScriptedMaster]:
    """Master 0 loads from a far slave, then from a near one.

    Row of four tiles: master (0,0), slave0 (1,0), tieoff (2,0), slave1 (3,0).
    """
    slave0, slave1 = C(1, 0), C(3, 0)
    me = C(0, 0)
    master = ScriptedMaster(
        [Packet.load(me, slave1, 0, tag=1), Packet.load(me, slave0, 0, tag=0)]
    )
    cfg = FabricConfig(
        cols=4,
        rows=1,
        nodes={me: master, slave0: MemorySlave(), slave1: MemorySlave()},
        check_invariants=True,
    )
    return Fabric(cfg), master


@dataclass
class FreezeDemo:
    fabric: Fabric
    host: ScriptedMaster
    worker: StreamingMaster
    issue_log: list[int] = field(default_factory=list)


def freeze_demo(freeze_at: int = 10, unfreeze_at: int = 40, count: int = 60) -> FreezeDemo:
    """A host freezes then unfreezes a streaming worker via config stores."""
    host_c, worker_c, sink_c = C(0, 0), C(1, 0), C(2, 0)
    freeze = config_address(ConfigRegister.FREEZE)
    host = ScriptedMaster(
        [
            (freeze_at, Packet.store(host_c, worker_c, freeze, 1, 0x1)),
            (unfreeze_at, Packet.store(host_c, worker_c, freeze, 0, 0x1)),
            FENCE,
        ]
    )
    worker = StreamingMaster(sink_c, count, capacity=4)
    cfg = FabricConfig(
        cols=3,
        rows=1,
        nodes={host_c: host, worker_c: worker, sink_c: MemorySlave()},
        check_invariants=True,
    )
    demo = FreezeDemo(Fabric(cfg), host, worker)
    demo.fabric.add_hook(worker_c, on_send=lambda pkt, cyc: demo.issue_log.append(cyc))
    return demo


def lock_scenario(
    masters: int = 4,
    iterations: int = 3,
    k: int = 3,
    lock_at: Coordinate = C(1, 1),
    seed: int = 0,
    hold_cycles: int = 3,
) -> tuple[Fabric, LockMonitor, list[LockMaster]]:
    rng = random.Random(seed)
    monitor = LockMonitor()
    spots = [C(x, y) for y in range(k) for x in range(k) if C(x, y) != lock_at]
    rng.shuffle(spots)
    lockers = []
    nodes: dict = {lock_at: MemorySlave(log_commits=True)}
    for i, c in enumerate(spots[:masters]):
        m = LockMaster(lock_at, 0x10, i, iterations, monitor, hold_cycles, backoff=1 + rng.randrange(4))
        nodes[c] = m
        lockers.append(m)
    fab = Fabric(FabricConfig(k, k, nodes=nodes, check_invariants=True))
    return fab, monitor, lockers


def random_scenario(seed: int, min_k: int = 2, max_k: int = 8, budget: int = 40) -> Fabric:
    """A random but contract-abiding mix of nodes, built for drain runs.

    Node kinds: finite traffic generators (stores and loads to any serving
    node), memory slaves with assorted latency/service rates, write-then-read
    masters with and without fences, streaming masters, and south-edge IO.
    """
    rng = random.Random(seed)
    cols = rng.randint(min_k, max_k)
    rows = rng.randint(min_k, max_k)
    coords = [C(x, y) for y in range(rows) for x in range(cols)]
    kinds = {}
    for c in coords:
        kinds[c] = rng.choices(
            ["traffic", "slave", "seq", "stream", "tie"], weights=[5, 3, 1, 1, 1]
        )[0]
    # at least two request servers so every master has a target
    for c in rng.sample(coords, min(2, len(coords))):
        kinds[c] = "slave"
    io = {}
    for x in range(cols):
        if rng.random() < 0.25:
            io[C(x, rows)] = IoVirtualMeshNode(span=rng.randint(1, 3), latency=rng.randint(1, 3))
    servers = [c for c, k in kinds.items() if k in ("traffic", "slave")]
    io_targets = [cl for base, n in io.items() for cl in n.claimed(base)]
    targets = servers + io_targets
    memories = [c for c, k in kinds.items() if k == "slave"] + io_targets
    seq_base = 0x100

    nodes: dict[Coordinate, Node] = {}
    for c, kind in kinds.items():
        if kind == "tie":
            continue
        others = [t for t in targets if t != c] or targets
        if kind == "traffic":
            n = TrafficNode(c.y * cols + c.x)
            n.start(rng.uniform(0.05, 0.6), n.arrivals, random.Random(rng.getrandbits(32)))
            n.budget = rng.randint(budget // 2, budget)
            n.load_fraction = rng.random() * 0.5
            n.pattern = Pattern.UNIFORM_RANDOM
            n.dest_pool = others
            nodes[c] = n
        elif kind == "slave":
            nodes[c] = MemorySlave(latency=rng.randint(1, 3), service_interval=rng.randint(1, 2))
        elif kind == "seq":
            # private address range so read-back is not disturbed by other writers
            nodes[c] = SequenceMaster(
                rng.choice(memories), rng.randint(0, 8), base=seq_base, fence=rng.random() < 0.5
            )
            seq_base += 0x100
        else:
            nodes[c] = StreamingMaster(rng.choice(others), rng.randint(1, 20), capacity=rng.randint(1, 4))
    credits = {c: EndpointConfig(max_out_credits=rng.randint(1, 12)) for c in nodes if rng.random() < 0.5}
    fab = Fabric(
        FabricConfig(
            cols,
            rows,
            nodes=nodes,
            io=io,
            router_fifo_depth=rng.randint(1, 3),
            endpoint=EndpointConfig(max_out_credits=rng.randint(2, 32), fifo_els=rng.randint(1, 4)),
            endpoint_overrides=credits,
            seed=seed,
            check_invariants=True,
        )
    )
    for n in fab.nodes.values():
        if isinstance(n, TrafficNode):
            n.cols, n.rows = cols, rows
    return fab
