"""Single-producer single-consumer request queue between a device-side
context and its per-channel proxy worker.

push/pop transfer the producer's clock to the consumer (the pop joins the
request's snapshot), and wait_completed transfers the consumer's completion
clock back, so data handled by the proxy is happens-before-ordered without
any extra locks.

"Processed" (popped) and "completed" (transfer done) are distinct states:
flush-style waits block on completion, not on the pop.
"""

from __future__ import annotations

from .clocks import clock_join_into
from .errors import ProxyDownError
from .sched import BLOCKED

PUT = "put"
SIGNAL = "signal"
FLUSH = "flush"

DEFAULT_CAPACITY = 128


class Request:
    __slots__ = ("kind", "src_off", "dst_off", "size", "ticket", "with_signal",
                 "clock", "event", "src_region", "dst_region", "label")

    def __init__(self, kind: str, src_off: int = 0, dst_off: int = 0, size: int = 0,
                 with_signal: bool = False, event: int = -1):
        self.kind = kind
        self.src_off = src_off
        self.dst_off = dst_off
        self.size = size
        self.ticket = -1
        self.with_signal = with_signal
        self.clock: dict[int, int] | None = None
        self.event = event
        self.src_region = -1
        self.dst_region = -1
        self.label = ""

    def __repr__(self):
        return f"Request({self.kind}, ticket={self.ticket})"


class RequestQueue:
    def __init__(self, world, capacity: int = DEFAULT_CAPACITY):
        if capacity < 1:
            raise ValueError("queue capacity must be >= 1")
        self.world = world
        self.capacity = capacity
        self.slots: list[Request | None] = [None] * capacity
        self.head = 0  # next push position (producer)
        self.tail = 0  # next pop position (consumer)
        self.completed = -1  # highest fully-processed ticket
        self.completion_clock: dict[int, int] = {}
        self.proxy_alive = True
        # ticket -> completing trace event id, for timed replay
        self.completion_events: dict[int, int] = {}

    def check_invariant(self) -> None:
        assert 0 <= self.head - self.tail <= self.capacity, \
            f"queue invariant violated: head={self.head} tail={self.tail}"

    def push(self, req: Request, ctx):
        """Generator; blocks while the ring is full. Returns the ticket."""
        while self.head - self.tail >= self.capacity:
            ctx.block_reason = f"queue full (capacity {self.capacity})"
            yield BLOCKED
        req.ticket = self.head
        ctx.bump()
        req.clock = ctx.snapshot()
        self.slots[self.head % self.capacity] = req
        self.head += 1
        self.world.version += 1
        return req.ticket

    def pop(self, ctx) -> Request | None:
        """Consume the next request in ticket order, or None if empty."""
        if self.tail >= self.head:
            return None
        idx = self.tail % self.capacity
        req = self.slots[idx]
        self.slots[idx] = None  # zeroed-slot discipline: empty means consumed
        self.tail += 1
        clock_join_into(ctx.clock, req.clock)
        self.world.version += 1
        return req

    def mark_completed(self, ticket: int, ctx, event: int = -1) -> None:
        assert ticket == self.completed + 1, "completions must be in ticket order"
        self.completed = ticket
        ctx.bump()
        clock_join_into(self.completion_clock, ctx.clock)
        if event >= 0:
            self.completion_events[ticket] = event
        self.world.version += 1

    def wait_completed(self, ticket: int, ctx):
        """Generator; returns once every request <= ticket has completed."""
        while self.completed < ticket:
            if not self.proxy_alive:
                raise ProxyDownError(f"proxy stopped with ticket {ticket} incomplete")
            ctx.block_reason = f"awaiting completion of ticket {ticket}"
            yield BLOCKED
        clock_join_into(ctx.clock, self.completion_clock)
