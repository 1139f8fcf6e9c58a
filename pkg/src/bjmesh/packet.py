"""Request/return packet formats, op encodings and the local address decode.

The forward-path request is a single wide word laid out, most significant
field first, as::

    addr | op | op_ex | data | src_y | src_x | y | x

so ``x`` occupies the least significant bits. Its width is
``addr_width + 2 + data_width/8 + data_width + 2*(y_cord_width + x_cord_width)``.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass, field, fields
from typing import NamedTuple, Union

from bjmesh.errors import ConfigError


class Coordinate(NamedTuple):
    """Global tile coordinate. X grows eastward, Y grows southward."""

    x: int
    y: int

    def __str__(self) -> str:
        return f"({self.x},{self.y})"


class OpCode(enum.IntEnum):
    REMOTE_LOAD = 0b00
    REMOTE_STORE = 0b01
    REMOTE_SWAP_AQ = 0b10
    REMOTE_SWAP_RL = 0b11

    @property
    def expects_data(self) -> bool:
        return self is not OpCode.REMOTE_STORE

    @property
    def is_swap(self) -> bool:
        return self in (OpCode.REMOTE_SWAP_AQ, OpCode.REMOTE_SWAP_RL)


@dataclass(frozen=True, slots=True)
class Packet:
    """Forward-path request word.

    ``tag`` is simulator bookkeeping (used to follow a packet through the
    fabric); it is not part of the wire format and is ignored by equality.
    """

    addr: int
    op: OpCode
    op_ex: int
    data: int
    src_y: int
    src_x: int
    y: int
    x: int
    tag: int | None = field(default=None, compare=False, repr=False)

    def __post_init__(self):
        if self.op == OpCode.REMOTE_LOAD and (self.op_ex or self.data):
            raise ConfigError("remote_load packets must carry zero op_ex and data")
        if self.op == OpCode.REMOTE_STORE and not self.op_ex:
            raise ConfigError("remote_store needs at least one byte-mask bit set")

    @property
    def dest(self) -> Coordinate:
        return Coordinate(self.x, self.y)

    @property
    def src(self) -> Coordinate:
        return Coordinate(self.src_x, self.src_y)

    @classmethod
    def load(cls, src: Coordinate, dest: Coordinate, addr: int, tag=None) -> "Packet":
        return cls(addr, OpCode.REMOTE_LOAD, 0, 0, src.y, src.x, dest.y, dest.x, tag)

    @classmethod
    def store(
        cls,
        src: Coordinate,
        dest: Coordinate,
        addr: int,
        data: int,
        mask: int = 0xF,
        tag=None,
    ) -> "Packet":
        return cls(addr, OpCode.REMOTE_STORE, mask, data, src.y, src.x, dest.y, dest.x, tag)

    @classmethod
    def swap(
        cls,
        src: Coordinate,
        dest: Coordinate,
        addr: int,
        data: int,
        release: bool = False,
        mask: int = 0xF,
        tag=None,
    ) -> "Packet":
        op = OpCode.REMOTE_SWAP_RL if release else OpCode.REMOTE_SWAP_AQ
        return cls(addr, op, mask, data, src.y, src.x, dest.y, dest.x, tag)


# Field order of the packed struct, most significant first.
PACKET_FIELDS = ("addr", "op", "op_ex", "data", "src_y", "src_x", "y", "x")


class ReturnKind(enum.Enum):
    CREDIT = "credit"
    DATA = "data"


@dataclass(frozen=True, slots=True)
class ReturnPacket:
    """Reverse-path reply routed back to the original requester at ``(x, y)``."""

    kind: ReturnKind
    data: int
    y: int
    x: int
    tag: int | None = field(default=None, compare=False, repr=False)

    def __post_init__(self):
        if self.kind is ReturnKind.CREDIT and self.data:
            raise ConfigError("credit replies carry no data")

    @property
    def dest(self) -> Coordinate:
        return Coordinate(self.x, self.y)

    @classmethod
    def credit_for(cls, pkt: Packet) -> "ReturnPacket":
        return cls(ReturnKind.CREDIT, 0, pkt.src_y, pkt.src_x, pkt.tag)

    @classmethod
    def data_for(cls, pkt: Packet, data: int) -> "ReturnPacket":
        return cls(ReturnKind.DATA, data, pkt.src_y, pkt.src_x, pkt.tag)


@dataclass(frozen=True)
class PacketFormat:
    x_cord_width: int
    y_cord_width: int
    addr_width: int = 20
    data_width: int = 32

    def __post_init__(self):
        for f in fields(self):
            if getattr(self, f.name) < 1:
                raise ConfigError(f"{f.name} must be >= 1")
        if self.data_width % 8:
            raise ConfigError("data_width must be a whole number of bytes")

    @property
    def mask_width(self) -> int:
        return self.data_width // 8

    @property
    def full_mask(self) -> int:
        return (1 << self.mask_width) - 1

    @property
    def field_widths(self) -> tuple[tuple[str, int], ...]:
        return (
            ("addr", self.addr_width),
            ("op", 2),
            ("op_ex", self.mask_width),
            ("data", self.data_width),
            ("src_y", self.y_cord_width),
            ("src_x", self.x_cord_width),
            ("y", self.y_cord_width),
            ("x", self.x_cord_width),
        )

    @property
    def width(self) -> int:
        return (
            self.addr_width
            + 2
            + self.mask_width
            + self.data_width
            + 2 * (self.y_cord_width + self.x_cord_width)
        )

    def validate(self, pkt: Packet) -> None:
        for name, w in self.field_widths:
            v = int(getattr(pkt, name))
            if v < 0 or v >> w:
                raise ConfigError(f"field {name}={v:#x} does not fit in {w} bits")

    def encode(self, pkt: Packet) -> int:
        self.validate(pkt)
        word = 0
        for name, w in self.field_widths:
            word = (word << w) | int(getattr(pkt, name))
        return word

    def decode(self, word: int) -> Packet:
        if word < 0 or word >> self.width:
            raise ConfigError(f"word does not fit the {self.width}-bit packet format")
        values = {}
        for name, w in reversed(self.field_widths):
            values[name] = word & ((1 << w) - 1)
            word >>= w
        values["op"] = OpCode(values["op"])
        return Packet(**values)

    def encode_bits(self, pkt: Packet) -> str:
        return format(self.encode(pkt), f"0{self.width}b")

    def decode_bits(self, bits: str) -> Packet:
        if len(bits) != self.width or set(bits) - {"0", "1"}:
            raise ConfigError(
                f"expected a {self.width}-bit vector, got {len(bits)} characters"
            )
        return self.decode(int(bits, 2))

    @classmethod
    def for_mesh(cls, cols: int, rows: int, addr_width: int = 20, data_width: int = 32):
        """Smallest coordinate widths that can address ``cols`` x ``rows``."""
        return cls(
            x_cord_width=max(1, (cols - 1).bit_length()),
            y_cord_width=max(1, (rows - 1).bit_length()),
            addr_width=addr_width,
            data_width=data_width,
        )


class ConfigRegister(enum.Enum):
    FREEZE = "freeze"
    ARBITER_PRIORITY = "arbiter_priority"
    RESERVED = "reserved"


@dataclass(frozen=True)
class DataSpace:
    offset: int


@dataclass(frozen=True)
class ConfigReg:
    which: ConfigRegister
    offset: int = 0


LocalAddress = Union[DataSpace, ConfigReg]

# Register map offsets are byte addresses; the addr field counts words.
_CONFIG_WORD_MAP = {0x0 >> 2: ConfigRegister.FREEZE, 0x4 >> 2: ConfigRegister.ARBITER_PRIORITY}


def decode_local_address(addr: int, addr_width: int = 20) -> LocalAddress:
    """Split a word address into data space or the endpoint's config space."""
    if addr < 0 or addr >> addr_width:
        raise ConfigError(f"address {addr:#x} exceeds {addr_width} bits")
    msb = 1 << (addr_width - 1)
    offset = addr & (msb - 1)
    if addr & msb:
        return ConfigReg(_CONFIG_WORD_MAP.get(offset, ConfigRegister.RESERVED), offset)
    return DataSpace(offset)


def config_address(reg: ConfigRegister, addr_width: int = 20) -> int:
    """Word address of a config register (inverse of the decode above)."""
    for off, r in _CONFIG_WORD_MAP.items():
        if r is reg:
            return (1 << (addr_width - 1)) | off
    raise ConfigError(f"{reg} has no fixed address")
