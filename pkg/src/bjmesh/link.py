"""Link-level primitives: registered FIFOs, handshakes and the fwd/rev pair.

Every cycle of the simulator has two phases. During the evaluation phase all
readiness decisions are made against the state left by the previous cycle;
during the commit phase every staged FIFO mutation lands at once. A word
enqueued in cycle ``t`` therefore reaches the FIFO head in cycle ``t + 1``.
"""

from __future__ import annotations

import enum
from collections import deque
from dataclasses import dataclass
from typing import Any, Generic, TypeVar

from bjmesh.errors import ConfigError, ProtocolError

T = TypeVar("T")


class HandshakeKind(enum.Enum):
    VALID_READY = "valid_ready"
    VALID_YUMI = "valid_yumi"
    VALID_ONLY = "valid_only"


def handshake_fire(kind: HandshakeKind, valid: bool, ready_or_yumi: bool = False) -> bool:
    """Whether a transfer happens this cycle under the given discipline."""
    if kind is HandshakeKind.VALID_READY:
        return bool(valid and ready_or_yumi)
    if kind is HandshakeKind.VALID_YUMI:
        if ready_or_yumi and not valid:
            raise ProtocolError("yumi asserted without valid")
        return bool(ready_or_yumi)
    return bool(valid)


class Fifo(Generic[T]):
    """Registered FIFO with one enqueue and one dequeue per cycle.

    ``dirty`` is an optional shared list; the FIFO appends itself the first
    time it is touched in a cycle so the owner only commits what changed.
    Stand-alone FIFOs are advanced by calling :meth:`commit` directly.
    """

    __slots__ = (
        "depth",
        "name",
        "items",
        "_staged",
        "_has_staged",
        "_start_len",
        "_deqd",
        "_touched",
        "_dirty",
        "enq_count",
        "deq_count",
    )

    def __init__(self, depth: int, name: str = "", dirty: list | None = None):
        if depth < 1:
            raise ConfigError("FIFO depth must be >= 1")
        self.depth = depth
        self.name = name
        self.items: deque = deque()
        self._staged: Any = None
        self._has_staged = False
        self._start_len = 0
        self._deqd = False
        self._touched = False
        self._dirty = dirty
        self.enq_count = 0
        self.deq_count = 0

    def __len__(self) -> int:
        return len(self.items)

    @property
    def occupancy(self) -> int:
        """Committed element count (what the hardware would show this cycle)."""
        return self._start_len

    def can_enq(self) -> bool:
        return self._start_len < self.depth and not self._has_staged

    def can_deq(self) -> bool:
        return bool(self.items) and not self._deqd

    def peek(self) -> T | None:
        if self._deqd or not self.items:
            return None
        return self.items[0]

    def _touch(self) -> None:
        if not self._touched:
            self._touched = True
            if self._dirty is not None:
                self._dirty.append(self)

    def enq(self, item: T) -> None:
        if not self.can_enq():
            raise ProtocolError(f"enqueue on full FIFO {self.name or id(self)}")
        self._staged = item
        self._has_staged = True
        self.enq_count += 1
        self._touch()

    def deq(self) -> T:
        if not self.can_deq():
            raise ProtocolError(f"dequeue on empty FIFO {self.name or id(self)}")
        self._deqd = True
        self.deq_count += 1
        self._touch()
        return self.items.popleft()

    def commit(self) -> None:
        if self._has_staged:
            self.items.append(self._staged)
            self._staged = None
            self._has_staged = False
        self._deqd = False
        self._touched = False
        self._start_len = len(self.items)

    def __repr__(self) -> str:
        return f"Fifo({self.name!r}, {list(self.items)!r}, depth={self.depth})"


@dataclass
class LinkSif:
    """One incoming link of a router port: the forward and reverse channels.

    The two channels share nothing; each is the receiving FIFO (or sink) of
    its own network.
    """

    fwd: Any
    rev: Any
