"""Exception types shared by every layer of the simulator."""


class ConfigError(ValueError):
    """Raised when a fabric, packet format or experiment is mis-configured."""


class ProtocolError(AssertionError):
    """A handshake or flow-control rule was violated during simulation.

    ``cycle`` is filled in by the fabric when the error escapes a tick so
    diagnostics are cycle-stamped.
    """

    def __init__(self, message: str, cycle: int | None = None):
        self.cycle = cycle
        super().__init__(message if cycle is None else f"cycle {cycle}: {message}")

    def at(self, cycle: int) -> "ProtocolError":
        if self.cycle is not None:
            return self
        return ProtocolError(self.args[0], cycle)
