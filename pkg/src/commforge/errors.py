"""Error hierarchy. Every error carries a stable machine-readable code."""

from __future__ import annotations


class CommforgeError(Exception):
    code = "E_GENERIC"

    def __init__(self, message: str = ""):
        super().__init__(message or self.code)


class BadSizeError(CommforgeError):
    code = "E_BAD_SIZE"


class NoSemError(CommforgeError):
    code = "E_NO_SEM"


class BadDeltaError(CommforgeError):
    code = "E_BAD_DELTA"


class OutOfBoundsError(CommforgeError):
    code = "E_OOB"


class DeadlockError(CommforgeError):
    """Scheduler quiescence with at least one blocked, non-daemon context."""

    code = "E_DEADLOCK"

    def __init__(self, blocked: list[tuple[str, str]]):
        self.blocked = blocked  # (context name, reason)
        names = ", ".join(f"{n} ({r})" for n, r in blocked)
        super().__init__(f"deadlock: blocked contexts: {names}")


class ProxyDownError(CommforgeError):
    code = "E_PROXY_DOWN"


class ZeroFlagError(CommforgeError):
    code = "E_ZERO_FLAG"


class WrongProtocolError(CommforgeError):
    code = "E_WRONG_PROTOCOL"


class BadAlignError(CommforgeError):
    code = "E_BAD_ALIGN"


class PlanSyntaxError(CommforgeError):
    code = "E_SYNTAX"


class PlanVersionError(CommforgeError):
    code = "E_VERSION"


class PlanRefError(CommforgeError):
    code = "E_REF"


class ShapeError(CommforgeError):
    code = "E_SHAPE"


class ProtocolError(CommforgeError):
    code = "E_PROTOCOL"


class RankMismatchError(CommforgeError):
    code = "E_RANK_MISMATCH"


class TopologyError(CommforgeError):
    code = "E_TOPOLOGY"


class NoAlgoError(CommforgeError):
    code = "E_NO_ALGO"


class BadTimeError(CommforgeError):
    code = "E_BAD_TIME"


class ConfigError(CommforgeError):
    code = "E_CONFIG"
