import random
from pathlib import Path

import pytest
from hypothesis import given, strategies as st

from bjmesh import ConfigError
from bjmesh.packet import (
    ConfigReg,
    ConfigRegister,
    Coordinate,
    DataSpace,
    OpCode,
    Packet,
    PacketFormat,
    ReturnKind,
    ReturnPacket,
    config_address,
    decode_local_address,
)

VECTORS = Path(__file__).parent / "fixtures" / "packet_vectors.txt"
SMALL = PacketFormat(x_cord_width=2, y_cord_width=2, addr_width=4, data_width=8)


def _vectors():
    for line in VECTORS.read_text().splitlines():
        if line.startswith("#"):
            continue
        *nums, bits = line.split()
        xw, yw, aw, dw, addr, op, op_ex, data, sy, sx, y, x = map(int, nums)
        fmt = PacketFormat(xw, yw, aw, dw)
        yield fmt, Packet(addr, OpCode(op), op_ex, data, sy, sx, y, x), bits


def test_golden_vectors_encode():
    n = 0
    for fmt, pkt, bits in _vectors():
        assert fmt.encode_bits(pkt) == bits
        n += 1
    assert n == 200


def test_golden_vectors_decode():
    for fmt, pkt, bits in _vectors():
        assert fmt.decode_bits(bits) == pkt


def test_small_format_width_follows_struct():
    # addr 4 + op 2 + op_ex 1 + data 8 + 2 * (2 + 2) coordinates
    assert SMALL.width == 23


def test_all_zero_vector_is_a_zero_load():
    zero = Packet(0, OpCode.REMOTE_LOAD, 0, 0, 0, 0, 0, 0)
    assert SMALL.encode_bits(zero) == "0" * SMALL.width
    back = SMALL.decode_bits("0" * SMALL.width)
    assert back == zero and back.op is OpCode.REMOTE_LOAD


def test_store_op_bits_position():
    pkt = Packet.store(Coordinate(0, 0), Coordinate(0, 0), 0, 0, mask=1)
    bits = SMALL.encode_bits(pkt)
    assert bits[4:6] == "01"


def test_op_bits_11_decode_to_swap_rl():
    bits = "0000" + "11" + "1" + "0" * 16
    assert SMALL.decode_bits(bits).op is OpCode.REMOTE_SWAP_RL


def test_op_encodings():
    assert [int(o) for o in OpCode] == [0, 1, 2, 3]
    assert OpCode.REMOTE_STORE.expects_data is False
    assert OpCode.REMOTE_SWAP_AQ.is_swap and not OpCode.REMOTE_LOAD.is_swap


def test_field_overflow_rejected():
    pkt = Packet(16, OpCode.REMOTE_LOAD, 0, 0, 0, 0, 0, 0)
    with pytest.raises(ConfigError):
        SMALL.encode(pkt)
    with pytest.raises(ConfigError):
        SMALL.encode(Packet(0, OpCode.REMOTE_LOAD, 0, 0, 0, 0, 0, 4))


def test_wrong_width_rejected():
    with pytest.raises(ConfigError):
        SMALL.decode_bits("0" * 22)
    with pytest.raises(ConfigError):
        SMALL.decode(1 << SMALL.width)


def test_load_and_store_invariants():
    with pytest.raises(ConfigError):
        Packet(0, OpCode.REMOTE_LOAD, 1, 0, 0, 0, 0, 0)
    with pytest.raises(ConfigError):
        Packet(0, OpCode.REMOTE_LOAD, 0, 5, 0, 0, 0, 0)
    with pytest.raises(ConfigError):
        Packet(0, OpCode.REMOTE_STORE, 0, 5, 0, 0, 0, 0)


def test_tag_is_not_part_of_identity():
    a = Packet.load(Coordinate(1, 2), Coordinate(3, 4), 7, tag=1)
    b = Packet.load(Coordinate(1, 2), Coordinate(3, 4), 7, tag=2)
    assert a == b


def test_return_packet_kinds():
    st_ = Packet.store(Coordinate(1, 2), Coordinate(0, 0), 3, 4)
    ld = Packet.load(Coordinate(1, 2), Coordinate(0, 0), 3)
    c = ReturnPacket.credit_for(st_)
    d = ReturnPacket.data_for(ld, 9)
    assert c.kind is ReturnKind.CREDIT and c.dest == Coordinate(1, 2)
    assert d.kind is ReturnKind.DATA and d.data == 9
    with pytest.raises(ConfigError):
        ReturnPacket(ReturnKind.CREDIT, 1, 0, 0)


def _random_packet(rng: random.Random, fmt: PacketFormat) -> Packet:
    w = dict(fmt.field_widths)
    op = OpCode(rng.randrange(4))
    vals = {k: rng.randrange(1 << v) for k, v in w.items()}
    if op is OpCode.REMOTE_LOAD:
        vals["op_ex"] = vals["data"] = 0
    else:
        vals["op_ex"] = vals["op_ex"] or 1
    vals["op"] = op
    return Packet(**vals)


def test_round_trip_1000_random():
    rng = random.Random(7)
    fmt = PacketFormat(3, 4, 20, 32)
    for _ in range(1000):
        p = _random_packet(rng, fmt)
        assert fmt.decode(fmt.encode(p)) == p


@st.composite
def format_and_packet(draw):
    fmt = PacketFormat(
        draw(st.integers(1, 6)),
        draw(st.integers(1, 6)),
        draw(st.integers(2, 32)),
        8 * draw(st.integers(1, 8)),
    )
    seed = draw(st.integers(0, 2**32 - 1))
    return fmt, _random_packet(random.Random(seed), fmt)


@given(format_and_packet())
def test_round_trip_property(fp):
    fmt, pkt = fp
    word = fmt.encode(pkt)
    assert 0 <= word < 1 << fmt.width
    assert fmt.decode(word) == pkt
    assert fmt.decode_bits(fmt.encode_bits(pkt)) == pkt


def test_for_mesh_widths():
    f = PacketFormat.for_mesh(8, 9)
    assert (f.x_cord_width, f.y_cord_width) == (3, 4)
    f1 = PacketFormat.for_mesh(1, 1)
    assert (f1.x_cord_width, f1.y_cord_width) == (1, 1)


def test_local_address_decode():
    assert decode_local_address(0x80000) == ConfigReg(ConfigRegister.FREEZE, 0)
    assert decode_local_address(0x80001) == ConfigReg(ConfigRegister.ARBITER_PRIORITY, 1)
    assert decode_local_address(0x00005) == DataSpace(5)
    assert decode_local_address(0x80007).which is ConfigRegister.RESERVED
    with pytest.raises(ConfigError):
        decode_local_address(1 << 20)


@given(st.integers(2, 30).flatmap(lambda w: st.tuples(st.just(w), st.integers(0, (1 << w) - 1))))
def test_local_address_is_total(wa):
    w, addr = wa
    r = decode_local_address(addr, w)
    if addr >> (w - 1):
        assert isinstance(r, ConfigReg)
    else:
        assert r == DataSpace(addr)


def test_config_address_inverts_decode():
    for reg in (ConfigRegister.FREEZE, ConfigRegister.ARBITER_PRIORITY):
        for w in (8, 20):
            assert decode_local_address(config_address(reg, w), w).which is reg
    with pytest.raises(ConfigError):
        config_address(ConfigRegister.RESERVED)
