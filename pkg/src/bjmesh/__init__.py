"""Cycle-accurate model of the BaseJump manycore mesh network."""

from bjmesh.errors import ConfigError, ProtocolError
from bjmesh.packet import (
    ConfigReg,
    Coordinate,
    DataSpace,
    OpCode,
    Packet,
    PacketFormat,
    ReturnKind,
    ReturnPacket,
    decode_local_address,
)

__all__ = [
    "ConfigError",
    "ConfigReg",
    "Coordinate",
    "DataSpace",
    "OpCode",
    "Packet",
    "PacketFormat",
    "ProtocolError",
    "ReturnKind",
    "ReturnPacket",
    "decode_local_address",
]

__version__ = "0.1.0"
