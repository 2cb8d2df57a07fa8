"""The three channel kinds with precise synchronization semantics.

PortChannel: one-sided puts served by a per-channel proxy worker behind a
FIFO request queue. signal lands on the peer's semaphore strictly after all
earlier puts on the channel; flush blocks until the proxy completed every
issued request (after which the source buffer may be reused).

MemoryChannel: direct peer-memory access. HB protocol copies in place and
synchronizes once through signal/wait; LL protocol writes 8-byte packets
(4 data + 4 flag) whose delivery order is deliberately shuffled by the
scheduler, and readers poll flags instead of semaphores. flush is a no-op.

SwitchChannel: reduce/broadcast across one region per participating rank,
executed as element loops at the caller.
"""

from __future__ import annotations

import numpy as np

from . import racedet
from .clocks import clock_join_into
from .dtypes import NP_DTYPES
from .errors import (
    BadAlignError,
    OutOfBoundsError,
    WrongProtocolError,
    ZeroFlagError,
)
from .fifo import DEFAULT_CAPACITY, FLUSH, PUT, SIGNAL, Request, RequestQueue
from .sched import BLOCKED

LL = "LL"
HB = "HB"

PACKET_BYTES = 8  # 4 data + 4 flag
_FLAG_DTYPE = np.dtype("<u4")


def _check_range(world, rid: int, offset: int, size: int) -> None:
    reg = world.regions.get(rid)
    if reg is None:
        raise OutOfBoundsError(f"unknown region {rid}")
    reg.check_range(offset, size)


def _own_clock(ctx, clock: dict | None) -> dict:
    if clock is not None:
        return clock
    ctx.bump()
    return ctx.snapshot()


class PortChannel:
    """Directed src_rank -> dst_rank port-mapped channel with its proxy."""

    def __init__(self, world, sched, src_rank: int, dst_rank: int,
                 src_region: int | None = None, dst_region: int | None = None,
                 capacity: int | None = None, name: str = "port"):
        self.world = world
        self.sched = sched
        self.name = name
        self.src_rank = src_rank
        self.dst_rank = dst_rank
        self.src_region = src_region
        self.dst_region = dst_region
        self.queue = RequestQueue(world, capacity if capacity is not None else DEFAULT_CAPACITY)
        self.sem = world.new_semaphore(dst_rank)
        self.expected = 0  # receiver-side wait counter
        self.last_ticket = -1
        self.proxy_ctx = None

    def spawn_proxy(self, name: str | None = None):
        self.proxy_ctx = self.sched.spawn(name or f"proxy.{self.name}", self._proxy_loop,
                                          daemon=True)
        return self.proxy_ctx

    # -- sender side ------------------------------------------------------

    def put(self, dst_off: int, src_off: int, size: int, ctx, *,
            src_region: int | None = None, dst_region: int | None = None,
            with_signal: bool = False, clock: dict | None = None, label: str = ""):
        """Generator returning the ticket. The source bytes must not be
        mutated until flush; the proxy reads them later."""
        src = self.src_region if src_region is None else src_region
        dst = self.dst_region if dst_region is None else dst_region
        _check_range(self.world, src, src_off, size)
        _check_range(self.world, dst, dst_off, size)
        req = Request(PUT, src_off=src_off, dst_off=dst_off, size=size,
                      with_signal=with_signal)
        req.src_region = src
        req.dst_region = dst
        req.label = label
        ticket = yield from self.queue.push(req, ctx)
        self.last_ticket = ticket
        return ticket

    def signal(self, ctx):
        """Generator returning the ticket of the enqueued signal request."""
        req = Request(SIGNAL)
        ticket = yield from self.queue.push(req, ctx)
        self.last_ticket = ticket
        return ticket

    def put_with_signal(self, dst_off: int, src_off: int, size: int, ctx, **kw):
        """Fused put+signal: one queue entry, one ticket."""
        ticket = yield from self.put(dst_off, src_off, size, ctx, with_signal=True, **kw)
        return ticket

    def flush(self, ctx):
        """Generator; returns once every issued request completed."""
        observed = self.last_ticket
        yield from self.queue.wait_completed(observed, ctx)
        return observed

    # -- receiver side ----------------------------------------------------

    def wait(self, ctx):
        self.expected += 1
        yield from self.world.sem_wait_geq(self.sem, self.expected, ctx)

    # -- proxy ------------------------------------------------------------

    def _proxy_loop(self, ctx):
        world = self.world
        det = world.detector
        while True:
            req = self.queue.pop(ctx)
            if req is None:
                ctx.block_reason = "request queue empty"
                yield BLOCKED
                continue
            if req.kind == PUT:
                ctx.bump()
                clk = ctx.snapshot()
                label = req.label or f"{self.name}.put#{req.ticket}"
                det.record(ctx.name, req.src_region, req.src_off, req.size,
                           racedet.READ, clk, label)
                det.record(ctx.name, req.dst_region, req.dst_off, req.size,
                           racedet.WRITE, clk, label)
                data = world.regions[req.src_region].data[req.src_off:req.src_off + req.size]
                world.write(req.dst_region, req.dst_off, data.copy())
                if req.with_signal:
                    world.sem_add(self.sem, 1, ctx, event_id=req.event)
            elif req.kind == SIGNAL:
                world.sem_add(self.sem, 1, ctx, event_id=req.event)
            elif req.kind == FLUSH:
                pass  # completion bookkeeping below is the whole effect
            self.queue.mark_completed(req.ticket, ctx, event=req.event)
            yield


class MemoryChannel:
    """Directed src_rank -> dst_rank memory-mapped channel (LL or HB)."""

    def __init__(self, world, sched, protocol: str, src_rank: int, dst_rank: int,
                 src_region: int | None = None, dst_region: int | None = None,
                 name: str = "mem"):
        if protocol not in (LL, HB):
            raise WrongProtocolError(f"unknown protocol {protocol!r}")
        self.world = world
        self.sched = sched
        self.protocol = protocol
        self.name = name
        self.src_rank = src_rank
        self.dst_rank = dst_rank
        self.src_region = src_region
        self.dst_region = dst_region
        self.sem = world.new_semaphore(dst_rank)
        self.expected = 0
        # clocks of puts not yet published by a signal (fence discipline)
        self._pending_put_clocks: list[dict] = []

    def _require(self, protocol: str) -> None:
        if self.protocol != protocol:
            raise WrongProtocolError(
                f"channel {self.name} is {self.protocol}, operation needs {protocol}")

    # -- HB protocol -------------------------------------------------------

    def put_hb(self, dst_off: int, src_off: int, size: int, ctx, *,
               src_region: int | None = None, dst_region: int | None = None,
               clock: dict | None = None, label: str = "") -> None:
        """Copy local bytes straight into the peer region (zero-copy path).

        The copy is complete on return; peers may only read it after a
        signal/wait handshake, which the race detector enforces.
        """
        self._require(HB)
        src = self.src_region if src_region is None else src_region
        dst = self.dst_region if dst_region is None else dst_region
        _check_range(self.world, src, src_off, size)
        _check_range(self.world, dst, dst_off, size)
        clk = _own_clock(ctx, clock)
        det = self.world.detector
        det.record(ctx.name, src, src_off, size, racedet.READ, clk, label or f"{self.name}.put")
        det.record(ctx.name, dst, dst_off, size, racedet.WRITE, clk, label or f"{self.name}.put")
        data = self.world.regions[src].data[src_off:src_off + size]
        self.world.write(dst, dst_off, data.copy())
        self._pending_put_clocks.append(clk)

    def reduce(self, dst_off: int, src_off: int, size: int, op: str, elem: str, ctx, *,
               src_region: int | None = None, dst_region: int | None = None,
               clock: dict | None = None, label: str = "") -> None:
        """local dst <- local dst (+) remote src, element-wise peer read."""
        self._require(HB)
        if op != "sum":
            raise ValueError(f"unsupported reduction {op!r}")
        local = self.src_region if dst_region is None else dst_region
        remote = self.dst_region if src_region is None else src_region
        if dst_off % 4 or src_off % 4 or size % 4:
            raise BadAlignError("reduce ranges must be element-aligned")
        _check_range(self.world, local, dst_off, size)
        _check_range(self.world, remote, src_off, size)
        clk = _own_clock(ctx, clock)
        det = self.world.detector
        lbl = label or f"{self.name}.reduce"
        det.record(ctx.name, remote, src_off, size, racedet.READ, clk, lbl)
        det.record(ctx.name, local, dst_off, size, racedet.READ, clk, lbl)
        det.record(ctx.name, local, dst_off, size, racedet.WRITE, clk, lbl)
        npdt = NP_DTYPES[elem]
        acc = self.world.regions[local].data[dst_off:dst_off + size].view(npdt)
        src = self.world.regions[remote].data[src_off:src_off + size].view(npdt)
        acc += src
        self.world.version += 1

    def signal(self, ctx, event_id: int = -1) -> None:
        """Release-ordered increment of the peer semaphore; publishes all
        pending put clocks first (threadfence-before-signal)."""
        self._require(HB)
        pend, self._pending_put_clocks = self._pending_put_clocks, []
        self.world.sem_add(self.sem, 1, ctx, event_id=event_id, extra_release=pend)

    def wait(self, ctx):
        self._require(HB)
        self.expected += 1
        yield from self.world.sem_wait_geq(self.sem, self.expected, ctx)

    def flush(self, ctx) -> None:
        """No-op: put's source is reusable as soon as the call returned."""

    # -- LL protocol -------------------------------------------------------

    def put_ll(self, dst_off: int, src_off: int, size: int, flag: int, ctx, *,
               src_region: int | None = None, dst_region: int | None = None,
               clock: dict | None = None, label: str = "", batch: int | None = None):
        """Generator: write ceil(size/4) packets at dst in shuffled order.

        dst_off is a byte offset into the packet area; packet i lands at
        dst_off + 8*i. Each packet (data+flag) is written atomically, but
        the order across the transfer is schedule-controlled.
        """
        self._require(LL)
        if flag == 0:
            raise ZeroFlagError("LL flag must be nonzero")
        if size % 4:
            raise BadAlignError("LL payload must be a multiple of 4 bytes")
        src = self.src_region if src_region is None else src_region
        dst = self.dst_region if dst_region is None else dst_region
        n = size // 4
        _check_range(self.world, src, src_off, size)
        _check_range(self.world, dst, dst_off, n * PACKET_BYTES)
        clk = _own_clock(ctx, clock)
        self.world.detector.record(ctx.name, src, src_off, size, racedet.READ, clk,
                                   label or f"{self.name}.put_packets")
        if n == 0:
            return
        payload = self.world.regions[src].data[src_off:src_off + size].copy()
        order = list(range(n))
        self.sched.rng.shuffle(order)
        step = batch if batch else (1 if n <= 64 else -(-n // 8))
        dst_data = self.world.regions[dst].data
        flag_bytes = np.array([flag], dtype=_FLAG_DTYPE).view(np.uint8)
        for start in range(0, n, step):
            for i in order[start:start + step]:
                base = dst_off + i * PACKET_BYTES
                dst_data[base:base + 4] = payload[4 * i:4 * i + 4]
                dst_data[base + 4:base + 8] = flag_bytes
            self.world.version += 1
            yield

    def write_ll(self, off: int, data: np.ndarray, flag: int, ctx) -> None:
        """Single-packet atomic write of 4 data bytes plus the flag."""
        self._require(LL)
        if flag == 0:
            raise ZeroFlagError("LL flag must be nonzero")
        dst = self.dst_region
        _check_range(self.world, dst, off, PACKET_BYTES)
        raw = np.zeros(PACKET_BYTES, np.uint8)
        raw[0:4] = np.asarray(data, np.uint8)
        raw[4:8] = np.array([flag], dtype=_FLAG_DTYPE).view(np.uint8)
        self.world.write(dst, off, raw)

    def read_ll(self, off: int, flag: int, ctx, *, region: int | None = None):
        """Generator: spin until the packet at off carries flag, return data."""
        self._require(LL)
        rid = self.dst_region if region is None else region
        _check_range(self.world, rid, off, PACKET_BYTES)
        data = yield from ll_read_range(self.world, rid, off, 1, flag, ctx)
        return data


def ll_read_range(world, rid: int, off: int, n_packets: int, flag: int, ctx,
                  batch: int | None = None):
    """Generator polling n packets at rid[off...]; returns 4*n payload bytes.

    Blocks until every packet in the range carries the expected flag, then
    returns the concatenated data lanes. Polls advance in batches so large
    transfers do not monopolize the schedule.
    """
    if flag == 0:
        raise ZeroFlagError("LL flag must be nonzero")
    reg = world.regions[rid]
    reg.check_range(off, n_packets * PACKET_BYTES)
    out = np.empty(4 * n_packets, np.uint8)
    step = batch if batch else (1 if n_packets <= 64 else -(-n_packets // 8))
    i = 0
    while i < n_packets:
        hi = min(i + step, n_packets)
        raw = reg.data[off + i * PACKET_BYTES:off + hi * PACKET_BYTES]
        packets = raw.reshape(hi - i, PACKET_BYTES)
        flags = packets[:, 4:8].copy().view(_FLAG_DTYPE).ravel()
        if not (flags == flag).all():
            ctx.block_reason = f"LL flag {flag} not yet set at region {rid}+{off}"
            yield BLOCKED
            continue
        out[4 * i:4 * hi] = packets[:, 0:4].ravel()
        i = hi
        yield
    return out


class SwitchChannel:
    """Switch-mapped reduce/broadcast over one same-length region per rank."""

    def __init__(self, world, sched, ranks: list[int], multimem: dict[int, int],
                 local: dict[int, int] | None = None, name: str = "switch"):
        self.world = world
        self.sched = sched
        self.name = name
        self.ranks = list(ranks)
        self.multimem = dict(multimem)
        lengths = {len(world.regions[r].data) for r in self.multimem.values()}
        if len(lengths) > 1:
            raise OutOfBoundsError("multimem regions must have identical length")
        self.local = dict(local or {})

    def reduce(self, dst_off: int, src_off: int, size: int, op: str, elem: str,
               ctx, caller: int, *, dst_region: int | None = None,
               clock: dict | None = None, label: str = "") -> None:
        if caller not in self.ranks:
            raise OutOfBoundsError(f"rank {caller} not in switch channel")
        dst = self.local[caller] if dst_region is None else dst_region
        switch_reduce(self.world, self.ranks, self.multimem, dst,
                      dst_off, src_off, size, op, elem, ctx, clock, label or self.name)

    def broadcast(self, dst_off: int, src_off: int, size: int, ctx, caller: int, *,
                  src_region: int | None = None, clock: dict | None = None,
                  label: str = "") -> None:
        if caller not in self.ranks:
            raise OutOfBoundsError(f"rank {caller} not in switch channel")
        src = self.local[caller] if src_region is None else src_region
        switch_broadcast(self.world, self.ranks, self.multimem, src,
                         dst_off, src_off, size, ctx, clock, label or self.name)


def switch_reduce(world, ranks, multimem: dict[int, int], dst_region: int,
                  dst_off: int, src_off: int, size: int, op: str, elem: str,
                  ctx, clock: dict | None = None, label: str = "") -> None:
    """dst[e] <- sum over ranks of multimem[r][src_off+e], at the caller."""
    if op != "sum":
        raise ValueError(f"unsupported reduction {op!r}")
    if dst_off % 4 or src_off % 4 or size % 4:
        raise BadAlignError("switch reduce ranges must be element-aligned")
    _check_range(world, dst_region, dst_off, size)
    for r in ranks:
        _check_range(world, multimem[r], src_off, size)
    clk = _own_clock(ctx, clock)
    det = world.detector
    npdt = NP_DTYPES[elem]
    total = np.zeros(size // 4, npdt)
    for r in ranks:
        rid = multimem[r]
        det.record(ctx.name, rid, src_off, size, racedet.READ, clk, label or "switch.reduce")
        total += world.regions[rid].data[src_off:src_off + size].view(npdt)
    det.record(ctx.name, dst_region, dst_off, size, racedet.WRITE, clk,
               label or "switch.reduce")
    world.regions[dst_region].data[dst_off:dst_off + size] = total.view(np.uint8)
    world.version += 1


def switch_broadcast(world, ranks, multimem: dict[int, int], src_region: int,
                     dst_off: int, src_off: int, size: int, ctx,
                     clock: dict | None = None, label: str = "") -> None:
    """Store the caller's source bytes at dst_off in every rank's region."""
    _check_range(world, src_region, src_off, size)
    for r in ranks:
        _check_range(world, multimem[r], dst_off, size)
    clk = _own_clock(ctx, clock)
    det = world.detector
    det.record(ctx.name, src_region, src_off, size, racedet.READ, clk,
               label or "switch.broadcast")
    data = world.regions[src_region].data[src_off:src_off + size].copy()
    for r in ranks:
        rid = multimem[r]
        det.record(ctx.name, rid, dst_off, size, racedet.WRITE, clk,
                   label or "switch.broadcast")
        world.regions[rid].data[dst_off:dst_off + size] = data
    world.version += 1
