"""Endpoints bridge a core to the forward and reverse networks.

A node model (the "core") talks to its endpoint once per cycle through the
signal groups of the standard endpoint:

* in_request  -- ``in_v`` / ``in_packet`` and :meth:`StandardEndpoint.yumi`
* in_response -- :meth:`StandardEndpoint.respond` (valid only)
* out_request -- :meth:`StandardEndpoint.send` (valid/ready)
* out_response -- ``returned_v`` / ``returned_data`` (no handshake)
* control -- ``out_credits``, ``freeze``, ``arb_priority``, ``my_coord``
"""

from __future__ import annotations

import logging
import math
from collections import deque
from dataclasses import dataclass
from typing import Any, Callable

from bjmesh.errors import ConfigError, ProtocolError
from bjmesh.link import Fifo
from bjmesh.packet import (
    ConfigRegister,
    Coordinate,
    OpCode,
    Packet,
    PacketFormat,
    ReturnKind,
    ReturnPacket,
    decode_local_address,
)

log = logging.getLogger(__name__)


@dataclass
class EndpointConfig:
    fifo_els: int = 4
    data_width: int = 32
    addr_width: int = 20
    max_out_credits: int = 16
    warn_out_of_credits: bool = False
    freeze_init: int = 0
    # Reply slots the endpoint reserves before forwarding a request to the core.
    reply_els: int = 2
    # Coordinate widths; None means "derive from the mesh size".
    x_cord_width: int | None = None
    y_cord_width: int | None = None

    def __post_init__(self):
        if self.max_out_credits < 1:
            raise ConfigError("max_out_credits must be >= 1")
        if self.fifo_els < 1 or self.reply_els < 1:
            raise ConfigError("endpoint FIFOs need at least one element")
        if self.data_width < 8 or self.addr_width < 2:
            raise ConfigError("data_width >= 8 and addr_width >= 2 required")


def credits_recommended(round_trip_cycles: float, issue_rate: float = 1.0) -> int:
    """Bandwidth-delay product of the longest round trip, rounded up."""
    if round_trip_cycles <= 0 or issue_rate <= 0:
        raise ConfigError("round trip and issue rate must both be positive")
    return math.ceil(round_trip_cycles * issue_rate - 1e-9)


class _ReturnPort:
    """Reverse-network delivery into an endpoint. Never exerts backpressure."""

    __slots__ = ("ep",)

    def __init__(self, ep):
        self.ep = ep

    def can_enq(self) -> bool:
        return True

    def enq(self, rp: ReturnPacket) -> None:
        self.ep.receive_return(rp)


class _EndpointBase:
    def __init__(
        self,
        coord: Coordinate,
        cfg: EndpointConfig,
        fmt: PacketFormat | None = None,
        dirty: list | None = None,
    ):
        self.coord = coord
        self.cfg = cfg
        self.fmt = fmt
        self.in_fifo: Fifo[Packet] = Fifo(cfg.fifo_els, f"ep{coord}.in", dirty)
        self.return_port = _ReturnPort(self)
        # Wired by the fabric: the P (or S, for IO) input FIFOs of both routers.
        self.fwd_out: Any = None
        self.rev_out: Any = None
        self.cycle = 0
        self.returned_v = False
        self.returned_data = 0
        self.returned_packet: ReturnPacket | None = None
        self._incoming: ReturnPacket | None = None
        self._yumied = False
        self._fired = False
        self.consumed = 0
        self.sent = 0
        self.returns_received = 0
        self.replies_sent = 0
        self.on_consume: Callable[[Packet, int], None] | None = None
        self.on_send: Callable[[Packet, int], None] | None = None
        self.on_return: Callable[[ReturnPacket, int], None] | None = None

    @property
    def my_coord(self) -> Coordinate:
        return self.coord

    def receive_return(self, rp: ReturnPacket) -> None:
        if self._incoming is not None:
            raise ProtocolError(f"endpoint {self.coord}: two replies in one cycle")
        if (rp.x, rp.y) != self.coord:
            raise ProtocolError(f"endpoint {self.coord}: reply addressed to {rp.dest}")
        self._incoming = rp

    def _check_fmt(self, pkt: Packet) -> None:
        if self.fmt is not None:
            self.fmt.validate(pkt)


class StandardEndpoint(_EndpointBase):
    """Credit counting, in_request masking and config registers."""

    def __init__(self, coord, cfg=None, fmt=None, dirty=None):
        super().__init__(coord, cfg or EndpointConfig(), fmt, dirty)
        self.credits = self.cfg.max_out_credits
        self.freeze = int(self.cfg.freeze_init)
        self.arb_priority = 0
        self.reply_q: deque[ReturnPacket] = deque()
        # Consumed load/swap requests still waiting for the core's data.
        self.pending: deque[tuple[Packet, int]] = deque()
        self._credit_delta = 0
        self._next_freeze = self.freeze
        self._next_arb = self.arb_priority
        self._generated: list[ReturnPacket] = []
        self._core_reply: ReturnPacket | None = None
        self._cfg_head: Packet | None = None
        self._space = True
        self._in_v = False
        self._out_ready = False
        self._warned = False
        self.credit_stall_cycles = 0
        self._cfg_msb = 1 << (self.cfg.addr_width - 1)

    # -- signals seen by the core ------------------------------------------
    @property
    def in_v(self) -> bool:
        return self._in_v and not self._yumied

    @property
    def in_packet(self) -> Packet | None:
        return self.in_fifo.items[0] if self.in_v else None

    @property
    def out_ready(self) -> bool:
        return self._out_ready and not self._fired

    @property
    def out_credits(self) -> int:
        return self.credits

    @property
    def max_out_credits(self) -> int:
        return self.cfg.max_out_credits

    def fence_done(self) -> bool:
        return self.credits == self.cfg.max_out_credits

    @property
    def reverse_available(self) -> bool:
        """Whether a reply slot is guaranteed for one more consumed request."""
        return self._space

    # -- per-cycle protocol --------------------------------------------------
    def begin(self, cycle: int) -> None:
        self.cycle = cycle
        self._yumied = self._fired = False
        self._core_reply = None
        self._space = len(self.reply_q) + len(self.pending) < self.cfg.reply_els
        head = self.in_fifo.peek()
        self._cfg_head = None
        if head is not None and head.addr & self._cfg_msb:
            self._cfg_head = head
            self._in_v = False
        else:
            self._in_v = head is not None and self._space
        self._out_ready = self.credits > 0 and self.fwd_out.can_enq()

    def yumi(self) -> Packet:
        """Consume the presented request (valid/yumi)."""
        if not self.in_v:
            raise ProtocolError(f"endpoint {self.coord}: yumi without in_v")
        pkt = self.in_fifo.deq()
        self._yumied = True
        self.consumed += 1
        if pkt.op == OpCode.REMOTE_STORE:
            self._generated.append(ReturnPacket.credit_for(pkt))
        else:
            self.pending.append((pkt, self.cycle))
        if self.on_consume is not None:
            self.on_consume(pkt, self.cycle)
        return pkt

    def respond(self, data: int) -> None:
        """Return load/swap data for the oldest consumed request (valid only)."""
        if not self.pending:
            raise ProtocolError(f"endpoint {self.coord}: response with no outstanding request")
        if self._core_reply is not None:
            raise ProtocolError(f"endpoint {self.coord}: two responses in one cycle")
        pkt, when = self.pending[0]
        if when >= self.cycle:
            raise ProtocolError(
                f"endpoint {self.coord}: response must come at least one cycle after the request"
            )
        self.pending.popleft()
        self._core_reply = ReturnPacket.data_for(pkt, data)

    def send(self, pkt: Packet) -> bool:
        """Present an outgoing request; returns True if it fired this cycle."""
        if self.credits == 0:
            self.credit_stall_cycles += 1
            if self.cfg.warn_out_of_credits and not self._warned:
                log.warning("endpoint %s out of credits at cycle %d", self.coord, self.cycle)
                self._warned = True
        if not self.out_ready:
            return False
        self._check_fmt(pkt)
        if (pkt.src_x, pkt.src_y) != self.coord:
            raise ProtocolError(f"endpoint {self.coord}: packet claims source {pkt.src}")
        self.fwd_out.enq(pkt)
        self._fired = True
        self._credit_delta -= 1
        self.sent += 1
        if self.on_send is not None:
            self.on_send(pkt, self.cycle)
        return True

    def _config_access(self, pkt: Packet) -> ReturnPacket:
        reg = decode_local_address(pkt.addr, self.cfg.addr_width).which
        if reg is ConfigRegister.FREEZE:
            old = self.freeze
        elif reg is ConfigRegister.ARBITER_PRIORITY:
            old = self.arb_priority
        else:
            old = 0
        if pkt.op != OpCode.REMOTE_LOAD:
            if reg is ConfigRegister.FREEZE:
                self._next_freeze = pkt.data & 1
            elif reg is ConfigRegister.ARBITER_PRIORITY:
                self._next_arb ^= 1
        if pkt.op == OpCode.REMOTE_STORE:
            return ReturnPacket.credit_for(pkt)
        return ReturnPacket.data_for(pkt, old)

    def finish(self) -> None:
        """End of the evaluation phase: config traffic and reply injection."""
        if self._cfg_head is not None and self._space:
            pkt = self.in_fifo.deq()
            self._generated.append(self._config_access(pkt))
        if self._core_reply is not None:
            self.reply_q.append(self._core_reply)
        if self._generated:
            self.reply_q.extend(self._generated)
            self._generated.clear()
        if self.reply_q and self.rev_out.can_enq():
            self.rev_out.enq(self.reply_q.popleft())
            self.replies_sent += 1
        if len(self.reply_q) + len(self.pending) > self.cfg.reply_els:
            raise ProtocolError(f"endpoint {self.coord}: reply buffer overflow")

    def commit(self) -> None:
        self.credits += self._credit_delta
        self._credit_delta = 0
        rp = self._incoming
        if rp is not None:
            self._incoming = None
            self.returns_received += 1
            self.credits += 1
            if self.credits > self.cfg.max_out_credits:
                raise ProtocolError(f"endpoint {self.coord}: reply with no outstanding request")
            self.returned_v = rp.kind is ReturnKind.DATA
            self.returned_data = rp.data
            self.returned_packet = rp
            if self.on_return is not None:
                self.on_return(rp, self.cycle)
        else:
            self.returned_v = False
            self.returned_packet = None
        if self.credits > 0:
            self._warned = False
        self.freeze = self._next_freeze
        self.arb_priority = self._next_arb

    @property
    def idle(self) -> bool:
        # a registered reply still counts until the core has had its cycle to see it
        return not (self.in_fifo.items or self.reply_q or self.pending or self._incoming or self.returned_packet)


class BarebonesEndpoint(_EndpointBase):
    """Input FIFO plus raw handshakes; protocol compliance is the core's job.

    There are no credits, no masking and no config registers. The core must
    produce every reply itself through :meth:`send_reply`.
    """

    freeze = 0

    def __init__(self, coord, cfg=None, fmt=None, dirty=None):
        super().__init__(coord, cfg or EndpointConfig(), fmt, dirty)
        self.unanswered: deque[Packet] = deque()
        self._replied = False

    @property
    def in_v(self) -> bool:
        return bool(self.in_fifo.items) and not self._yumied

    @property
    def in_packet(self) -> Packet | None:
        return self.in_fifo.items[0] if self.in_v else None

    @property
    def out_ready(self) -> bool:
        return self.fwd_out.can_enq() and not self._fired

    @property
    def reply_ready(self) -> bool:
        return self.rev_out.can_enq() and not self._replied

    def begin(self, cycle: int) -> None:
        self.cycle = cycle
        self._yumied = self._fired = self._replied = False

    def yumi(self) -> Packet:
        if not self.in_v:
            raise ProtocolError(f"endpoint {self.coord}: yumi without in_v")
        pkt = self.in_fifo.deq()
        self._yumied = True
        self.consumed += 1
        self.unanswered.append(pkt)
        if self.on_consume is not None:
            self.on_consume(pkt, self.cycle)
        return pkt

    def send(self, pkt: Packet) -> bool:
        if not self.out_ready:
            return False
        self._check_fmt(pkt)
        self.fwd_out.enq(pkt)
        self._fired = True
        self.sent += 1
        if self.on_send is not None:
            self.on_send(pkt, self.cycle)
        return True

    def send_reply(self, rp: ReturnPacket) -> bool:
        if not self.reply_ready:
            return False
        self.rev_out.enq(rp)
        self._replied = True
        self.replies_sent += 1
        # The checker pairs replies with requests in consume order.
        if self.unanswered:
            self.unanswered.popleft()
        return True

    def finish(self) -> None:
        pass

    def commit(self) -> None:
        rp = self._incoming
        self._incoming = None
        self.returned_v = rp is not None and rp.kind is ReturnKind.DATA
        self.returned_data = rp.data if rp is not None else 0
        self.returned_packet = rp
        if rp is not None:
            self.returns_received += 1
            if self.on_return is not None:
                self.on_return(rp, self.cycle)

    @property
    def idle(self) -> bool:
        return not (self.in_fifo.items or self._incoming or self.returned_packet)
