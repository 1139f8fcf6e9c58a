import logging

import pytest

from bjmesh import ProtocolError
from bjmesh.endpoint import BarebonesEndpoint, EndpointConfig, StandardEndpoint, credits_recommended
from bjmesh.errors import ConfigError
from bjmesh.link import Fifo
from bjmesh.packet import ConfigRegister, Coordinate, Packet, ReturnKind, ReturnPacket, config_address

ME = Coordinate(1, 1)
PEER = Coordinate(0, 0)


class Harness:
    """One endpoint with plain FIFOs standing in for the router ports."""

    def __init__(self, cls=StandardEndpoint, **cfg):
        self.ep = cls(ME, EndpointConfig(**cfg))
        self.ep.fwd_out = Fifo(2, "fwd")
        self.ep.rev_out = Fifo(2, "rev")
        self.cycle = 0

    def deliver(self, pkt):
        self.ep.in_fifo.enq(pkt)
        self.ep.in_fifo.commit()

    def begin(self):
        self.ep.begin(self.cycle)

    def end(self):
        self.ep.finish()
        for f in (self.ep.in_fifo, self.ep.fwd_out, self.ep.rev_out):
            f.commit()
        self.ep.commit()
        self.cycle += 1

    def idle_cycle(self):
        self.begin()
        self.end()

    def drain_rev(self):
        out = []
        while self.ep.rev_out.items:
            out.append(self.ep.rev_out.items.popleft())
        self.ep.rev_out.commit()
        return out


def store_in(addr=5, data=0xAB, src=PEER):
    return Packet.store(src, ME, addr, data)


def test_config_freeze_store():
    h = Harness()
    h.deliver(Packet.store(PEER, ME, config_address(ConfigRegister.FREEZE), 1, 1))
    h.begin()
    assert not h.ep.in_v  # the core never sees config traffic
    h.end()
    assert h.ep.freeze == 1
    (rp,) = h.drain_rev()
    assert rp.kind is ReturnKind.CREDIT and rp.dest == PEER


def test_arbiter_priority_double_toggle():
    h = Harness()
    init = h.ep.arb_priority
    addr = config_address(ConfigRegister.ARBITER_PRIORITY)
    h.deliver(Packet.store(PEER, ME, addr, 0, 1))
    h.idle_cycle()
    assert h.ep.arb_priority == 1 - init
    h.drain_rev()
    h.deliver(Packet.store(PEER, ME, addr, 0, 1))
    h.idle_cycle()
    assert h.ep.arb_priority == init


def test_data_store_presented_to_core():
    h = Harness()
    h.deliver(store_in())
    h.begin()
    assert h.ep.in_v and h.ep.in_packet.addr == 5 and h.ep.in_packet.data == 0xAB


def test_in_request_masked_when_reverse_unavailable():
    h = Harness(reply_els=1)
    h.deliver(Packet.load(PEER, ME, 1))
    h.begin()
    h.ep.yumi()  # pending load now holds the single reply slot
    h.end()
    h.deliver(store_in())
    h.begin()
    assert not h.ep.reverse_available and not h.ep.in_v
    h.ep.respond(7)
    h.end()
    h.begin()
    assert h.ep.in_v


def test_yumi_without_valid_asserts():
    h = Harness()
    h.begin()
    with pytest.raises(ProtocolError):
        h.ep.yumi()


def test_load_reply_one_cycle_after_yumi():
    h = Harness()
    h.deliver(Packet.load(PEER, ME, 3))
    h.begin()
    h.ep.yumi()
    with pytest.raises(ProtocolError):
        h.ep.respond(1)  # same cycle as the yumi
    h.end()
    h.begin()
    h.ep.respond(0x55)
    h.end()
    (rp,) = h.drain_rev()
    assert rp.kind is ReturnKind.DATA and rp.data == 0x55 and rp.dest == PEER


def test_response_without_request_asserts():
    h = Harness()
    h.begin()
    with pytest.raises(ProtocolError):
        h.ep.respond(0)


def test_store_credit_injected_same_cycle():
    h = Harness()
    h.deliver(store_in())
    h.begin()
    h.ep.yumi()
    h.end()
    (rp,) = h.drain_rev()
    assert rp.kind is ReturnKind.CREDIT


def test_send_decrements_credit():
    h = Harness(max_out_credits=4)
    h.begin()
    assert h.ep.send(Packet.store(ME, PEER, 0, 1))
    h.end()
    assert h.ep.out_credits == 3


def test_credit_exhaustion_deasserts_ready_and_warns(caplog):
    h = Harness(max_out_credits=3, warn_out_of_credits=True)
    sent = 0
    for _ in range(4):
        h.begin()
        sent += h.ep.send(Packet.store(ME, PEER, 0, 1))
        h.end()
        h.ep.fwd_out.items.clear()
        h.ep.fwd_out.commit()
    assert sent == 3
    h.begin()
    with caplog.at_level(logging.WARNING):
        assert not h.ep.out_ready
        assert not h.ep.send(Packet.store(ME, PEER, 0, 1))
    assert "out of credits" in caplog.text


def _fire_and_return(h, n):
    for _ in range(n):
        h.begin()
        assert h.ep.send(Packet.store(ME, PEER, 0, 1))
        h.end()
        h.ep.fwd_out.items.clear()
        h.ep.fwd_out.commit()
    for _ in range(n):
        assert not h.ep.fence_done()
        h.begin()
        h.ep.return_port.enq(ReturnPacket(ReturnKind.CREDIT, 0, ME.y, ME.x))
        h.end()


def test_fence():
    h = Harness(max_out_credits=8)
    assert h.ep.fence_done()
    _fire_and_return(h, 5)
    assert h.ep.fence_done() and h.ep.out_credits == 8


def test_data_reply_registered():
    h = Harness()
    h.begin()
    h.ep.send(Packet.load(ME, PEER, 0))
    h.end()
    h.begin()
    h.ep.return_port.enq(ReturnPacket(ReturnKind.DATA, 0x42, ME.y, ME.x))
    assert not h.ep.returned_v
    h.end()
    h.begin()
    assert h.ep.returned_v and h.ep.returned_data == 0x42
    h.end()
    assert not h.ep.returned_v


def test_credit_reply_has_no_data():
    h = Harness()
    _fire_and_return(h, 1)
    assert not h.ep.returned_v


def test_reply_without_outstanding_asserts():
    h = Harness()
    h.begin()
    h.ep.return_port.enq(ReturnPacket(ReturnKind.CREDIT, 0, ME.y, ME.x))
    h.ep.finish()
    with pytest.raises(ProtocolError):
        h.ep.commit()


def test_two_replies_same_cycle_assert():
    h = Harness()
    h.begin()
    h.ep.return_port.enq(ReturnPacket(ReturnKind.CREDIT, 0, ME.y, ME.x))
    with pytest.raises(ProtocolError):
        h.ep.return_port.enq(ReturnPacket(ReturnKind.CREDIT, 0, ME.y, ME.x))


def test_credits_recommended():
    assert credits_recommended(128, 1.0) == 128
    assert credits_recommended(20 * 4, 1.0) == 80
    assert credits_recommended(10, 0.25) == 3
    with pytest.raises(ConfigError):
        credits_recommended(0)


def test_barebones_delivers_and_tracks_unanswered():
    h = Harness(BarebonesEndpoint)
    h.deliver(store_in(addr=9, data=0x12))
    h.begin()
    pkt = h.ep.yumi()
    assert (pkt.addr, pkt.data, pkt.op_ex) == (9, 0x12, 0xF)
    h.end()
    assert h.drain_rev() == []  # nothing automatic
    assert len(h.ep.unanswered) == 1
    h.begin()
    assert h.ep.send_reply(ReturnPacket.credit_for(pkt))
    h.end()
    assert not h.ep.unanswered
    assert h.ep.in_fifo.depth == 4


def test_barebones_has_no_config_space():
    h = Harness(BarebonesEndpoint)
    h.deliver(Packet.store(PEER, ME, config_address(ConfigRegister.FREEZE), 1, 1))
    h.begin()
    assert h.ep.in_v  # the core sees it as an ordinary request
