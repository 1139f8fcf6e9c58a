"""Node models that plug into an endpoint.

Each node implements ``tick(ep, cycle)`` which runs during the evaluation
phase, after the endpoint has computed its core-facing signals. Nodes only
touch the network through their endpoint.
"""

from __future__ import annotations

import enum
from collections import deque
from dataclasses import dataclass
from typing import Iterable

from bjmesh.errors import ConfigError, ProtocolError
from bjmesh.packet import Coordinate, OpCode, Packet


class Node:
    """Base class. A node that never issues and never serves is a valid stub."""

    # Whether other nodes may target this node with requests.
    serves_requests = False

    def tick(self, ep, cycle: int) -> None:
        pass

    @property
    def done(self) -> bool:
        return True


class Tieoff:
    """Sink for an unconnected port: accepts nothing, sources nothing."""

    def __init__(self, name: str = "tieoff"):
        self.name = name

    def can_enq(self) -> bool:
        raise ProtocolError(f"packet routed to tied-off port {self.name}")

    def enq(self, item) -> None:
        raise ProtocolError(f"packet routed to tied-off port {self.name}")


def apply_mask(old: int, new: int, mask: int) -> int:
    """Byte-masked write of ``new`` over ``old``."""
    out = old
    b = 0
    while mask >> b:
        if mask >> b & 1:
            sh = 8 * b
            out = (out & ~(0xFF << sh)) | (new & (0xFF << sh))
        b += 1
    return out


@dataclass
class Commit:
    cycle: int
    src: Coordinate
    op: OpCode
    addr: int
    old: int
    new: int
    tag: int | None = None


class MemorySlave(Node):
    """Word-addressed memory that services one request per cycle.

    ``latency`` is the number of cycles between consuming a load and
    presenting its data (the canonical example registers it once, so 1).
    ``service_interval`` > 1 models a slower core that only consumes every
    n-th cycle.
    """

    serves_requests = True

    def __init__(self, latency: int = 1, service_interval: int = 1, log_commits: bool = False):
        if latency < 1:
            raise ConfigError("responses come at least one cycle after the request")
        if service_interval < 1:
            raise ConfigError("service_interval must be >= 1")
        self.latency = latency
        self.service_interval = service_interval
        self.mem: dict = {}
        self.log_commits = log_commits
        self.commits: list[Commit] = []
        self._due: deque[tuple[int, int]] = deque()
        self.served = 0

    def _key(self, ep, pkt: Packet):
        return pkt.addr

    def read(self, addr, bank: int = 0) -> int:
        return self.mem.get(addr if not bank else (bank, addr), 0)

    def execute(self, key, pkt: Packet, cycle: int) -> int | None:
        """Apply one request to memory; returns the reply data for load/swap."""
        old = self.mem.get(key, 0)
        op = pkt.op
        if op == OpCode.REMOTE_LOAD:
            new = old
        elif op == OpCode.REMOTE_STORE or op == OpCode.REMOTE_SWAP_RL:
            new = apply_mask(old, pkt.data, pkt.op_ex)
        else:
            # acquire: set only if the lock word is free
            new = apply_mask(old, pkt.data, pkt.op_ex) if old == 0 else old
        if new != old:
            self.mem[key] = new
        if self.log_commits:
            self.commits.append(Commit(cycle, pkt.src, op, pkt.addr, old, new, pkt.tag))
        return None if op == OpCode.REMOTE_STORE else old

    def tick(self, ep, cycle: int) -> None:
        if self._due and self._due[0][0] <= cycle:
            ep.respond(self._due.popleft()[1])
        if ep.in_v and cycle % self.service_interval == 0:
            pkt = ep.yumi()
            self.served += 1
            reply = self.execute(self._key(ep, pkt), pkt, cycle)
            if reply is not None:
                self._due.append((cycle + self.latency, reply))


class IoVirtualMeshNode(MemorySlave):
    """A large IO device on the south edge claiming ``span`` Y coordinates.

    Requests addressed to ``(x, base_y + j)`` land in bank ``j``.
    """

    def __init__(self, span: int = 1, latency: int = 1, service_interval: int = 1, log_commits=False):
        if span < 1:
            raise ConfigError("an IO node claims at least one coordinate")
        super().__init__(latency, service_interval, log_commits)
        self.span = span

    def _key(self, ep, pkt: Packet):
        bank = pkt.y - ep.coord.y
        if not 0 <= bank < self.span:
            raise ProtocolError(f"IO node at {ep.coord} got request for y={pkt.y}")
        return (bank, pkt.addr) if bank else pkt.addr

    def claimed(self, base: Coordinate) -> list[Coordinate]:
        return [Coordinate(base.x, base.y + j) for j in range(self.span)]


class MasterState(enum.Enum):
    WRITING = "writing"
    FENCE = "fence"
    READING = "reading"
    DONE = "done"


class SequenceMaster(Node):
    """Writes ``data=i`` to ``base+i`` for i < n, then reads everything back.

    The read-back monitor prints the cycle counter started at the first read
    request, so the first line of ``log`` on an idle network is the network's
    round trip latency.
    """

    def __init__(self, dest: Coordinate, n: int, base: int = 0, fence: bool = False):
        self.dest = Coordinate(*dest)
        self.n = n
        self.base = base
        self.fence = fence
        self.state = MasterState.WRITING if n else MasterState.DONE
        self.issued = 0
        self.checked = 0
        self.first_read_cycle: int | None = None
        self.responses: list[tuple[int, int, int]] = []
        self.log: list[str] = []
        self.errors: list[str] = []

    @property
    def done(self) -> bool:
        return self.state is MasterState.DONE and self.checked == self.n

    def _monitor(self, ep, cycle: int) -> None:
        if not ep.returned_v:
            return
        expected = self.checked
        data = ep.returned_data
        rel = cycle - self.first_read_cycle
        self.responses.append((rel, data, expected))
        self.log.append(f"cycle {rel}, returned={data:08x}, expected={expected:03x}")
        if data != expected:
            self.errors.append(f"cycle {cycle}: returned {data:#x}, expected {expected:#x}")
        self.checked += 1

    def tick(self, ep, cycle: int) -> None:
        self._monitor(ep, cycle)
        if ep.freeze or self.state is MasterState.DONE:
            return
        me = ep.my_coord
        if self.state is MasterState.WRITING:
            mask = (1 << (ep.cfg.data_width >> 3)) - 1
            pkt = Packet.store(me, self.dest, self.base + self.issued, self.issued, mask)
            if ep.send(pkt):
                self.issued += 1
                if self.issued == self.n:
                    self.issued = 0
                    self.state = MasterState.FENCE if self.fence else MasterState.READING
            return
        if self.state is MasterState.FENCE:
            if not ep.fence_done():
                return
            self.state = MasterState.READING
        if ep.send(Packet.load(me, self.dest, self.base + self.issued)):
            if self.issued == 0:
                self.first_read_cycle = cycle
            self.issued += 1
            if self.issued == self.n:
                self.state = MasterState.DONE


class StreamingMaster(Node):
    """One-to-one streaming sender with an outstanding-message counter.

    Stalls while ``capacity`` stores are unacknowledged; capacity should equal
    the receiver's input FIFO depth. Acknowledgements are inferred from the
    endpoint's credit counter.
    """

    def __init__(self, dest: Coordinate, count: int, capacity: int, addr: int = 0):
        if capacity < 1:
            raise ConfigError("capacity must be >= 1")
        self.dest = Coordinate(*dest)
        self.count = count
        self.capacity = capacity
        self.addr = addr
        self.issued = 0
        self.acked = 0
        self.outstanding = 0
        self.max_outstanding = 0
        self._prev_credits: int | None = None
        self._fired_prev = 0

    @property
    def done(self) -> bool:
        return self.acked == self.count

    def tick(self, ep, cycle: int) -> None:
        credits = ep.out_credits
        if self._prev_credits is not None:
            acks = credits - self._prev_credits + self._fired_prev
            self.acked += acks
            self.outstanding -= acks
        self._prev_credits = credits
        self._fired_prev = 0
        if ep.freeze or self.issued == self.count or self.outstanding >= self.capacity:
            return
        mask = (1 << (ep.cfg.data_width >> 3)) - 1
        pkt = Packet.store(ep.my_coord, self.dest, self.addr, self.issued, mask)
        if ep.send(pkt):
            self.issued += 1
            self.outstanding += 1
            self._fired_prev = 1
            self.max_outstanding = max(self.max_outstanding, self.outstanding)


class LockMonitor:
    """Shared observer that checks mutual exclusion across lock masters."""

    def __init__(self):
        self.holder: int | None = None
        self.violations: list[str] = []
        self.history: list[tuple[int, int, str]] = []

    def enter(self, who: int, cycle: int) -> None:
        if self.holder is not None:
            self.violations.append(f"cycle {cycle}: {who} acquired while {self.holder} holds")
        self.holder = who
        self.history.append((cycle, who, "enter"))

    def exit(self, who: int, cycle: int) -> None:
        if self.holder != who:
            self.violations.append(f"cycle {cycle}: {who} released a lock it does not hold")
        self.holder = None
        self.history.append((cycle, who, "exit"))


class _Lock(enum.Enum):
    ACQUIRE = 0
    WAIT_AQ = 1
    HOLD = 2
    RELEASE = 3
    WAIT_RL = 4
    BACKOFF = 5
    DONE = 6


class LockMaster(Node):
    """Spin lock on a remote word: swap_aq to take it, swap_rl to free it."""

    def __init__(
        self,
        lock: Coordinate,
        addr: int,
        who: int,
        iterations: int,
        monitor: LockMonitor,
        hold_cycles: int = 3,
        backoff: int = 2,
    ):
        self.lock = Coordinate(*lock)
        self.addr = addr
        self.who = who
        self.iterations = iterations
        self.monitor = monitor
        self.hold_cycles = hold_cycles
        self.backoff = backoff
        self.state = _Lock.ACQUIRE if iterations else _Lock.DONE
        self.acquired = 0
        self.attempts = 0
        self._timer = 0

    @property
    def done(self) -> bool:
        return self.state is _Lock.DONE

    def tick(self, ep, cycle: int) -> None:
        st = self.state
        if st is _Lock.WAIT_AQ and ep.returned_v:
            if ep.returned_data == 0:
                self.monitor.enter(self.who, cycle)
                self.acquired += 1
                self.state, self._timer = _Lock.HOLD, self.hold_cycles
            else:
                self.state, self._timer = _Lock.BACKOFF, self.backoff
            return
        if st is _Lock.WAIT_RL and ep.returned_v:
            self.state = _Lock.DONE if self.acquired == self.iterations else _Lock.ACQUIRE
            return
        if st in (_Lock.HOLD, _Lock.BACKOFF):
            self._timer -= 1
            if self._timer <= 0:
                self.state = _Lock.RELEASE if st is _Lock.HOLD else _Lock.ACQUIRE
            return
        if ep.freeze:
            return
        if st is _Lock.ACQUIRE:
            if ep.send(Packet.swap(ep.my_coord, self.lock, self.addr, self.who + 1)):
                self.attempts += 1
                self.state = _Lock.WAIT_AQ
        elif st is _Lock.RELEASE:
            pkt = Packet.swap(ep.my_coord, self.lock, self.addr, 0, release=True)
            if ep.send(pkt):
                self.monitor.exit(self.who, cycle)
                self.state = _Lock.WAIT_RL


FENCE = "fence"


@dataclass
class _Issued:
    cycle: int
    pkt: Packet


class ScriptedMaster(Node):
    """Issues a fixed list of packets in order; ``FENCE`` entries wait for
    the credit counter to return to its maximum.

    Items may be ``Packet``, ``FENCE`` or ``(not_before_cycle, Packet)``.
    Data replies are logged with the cycle they became visible.
    """

    def __init__(self, script: Iterable, serve: bool = False):
        self.script = deque(script)
        self.issued: list[_Issued] = []
        self.returns: list[tuple[int, int, int | None]] = []
        self.fences_passed = 0
        self.mem = MemorySlave() if serve else None
        if serve:
            self.serves_requests = True

    @property
    def done(self) -> bool:
        return not self.script

    def tick(self, ep, cycle: int) -> None:
        if ep.returned_v:
            rp = ep.returned_packet
            self.returns.append((cycle, ep.returned_data, rp.tag if rp is not None else None))
        if self.mem is not None:
            self.mem.tick(ep, cycle)
        if ep.freeze or not self.script:
            return
        item = self.script[0]
        if item == FENCE:
            if ep.fence_done():
                self.script.popleft()
                self.fences_passed += 1
            return
        not_before, pkt = item if isinstance(item, tuple) else (0, item)
        if cycle >= not_before and ep.send(pkt):
            self.script.popleft()
            self.issued.append(_Issued(cycle, pkt))
