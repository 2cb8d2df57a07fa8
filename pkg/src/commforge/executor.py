"""Plan interpreter: binds a plan into a SimWorld and runs every
(rank, thread block) program plus one proxy per port channel.

Ordering model: channel sync ops run in issue order; data ops (reduce,
copy, memory puts, packet ops) are forked onto per-op clock axes so the
race detector sees them as concurrent block-thread work until a tb_sync
joins them back. Functional effects apply immediately and deterministically
at each op's execution step; misuse shows up as race reports, never as
corrupted data.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import racedet
from .channels import MemoryChannel, PortChannel, ll_read_range, switch_broadcast, switch_reduce
from .clocks import clock_join_into
from .dtypes import ELEM_SIZE, NP_DTYPES
from .errors import RankMismatchError, ShapeError
from .plan import ExecutionPlan
from .sched import BLOCKED, Scheduler
from .world import SimWorld


@dataclass
class RunResult:
    outputs: list
    races: list
    trace: list | None
    steps: int


class _Barrier:
    __slots__ = ("expected", "arrived", "clock")

    def __init__(self, expected: int):
        self.expected = expected
        self.arrived: set[int] = set()
        self.clock: dict[int, int] = {}


class _BlockState:
    """Fork/join bookkeeping for one (rank, tb) context."""

    __slots__ = ("ctx", "pending", "free_axes", "barrier_counts")

    def __init__(self, ctx):
        self.ctx = ctx
        self.pending: list[tuple[int, dict]] = []  # (axis, op clock)
        self.free_axes: list[int] = []
        self.barrier_counts: dict[tuple, int] = {}

    def fork(self, rt) -> dict:
        """Clock for one async data op: block snapshot plus a fresh axis."""
        axis = self.free_axes.pop() if self.free_axes else rt.sched.new_axis()
        tick = rt.axis_ticks.get(axis, 0) + 1
        rt.axis_ticks[axis] = tick
        clk = dict(self.ctx.clock)
        clk[axis] = tick
        self.pending.append((axis, clk))
        return clk

    def join_all(self):
        for axis, clk in self.pending:
            clock_join_into(self.ctx.clock, clk)
            self.free_axes.append(axis)
        self.pending.clear()


class Runtime:
    """A plan bound to a world. Rebinding (calling init again) is allowed."""

    def __init__(self, plan: ExecutionPlan, world: SimWorld):
        if world.num_ranks != plan.num_ranks:
            raise RankMismatchError(
                f"plan wants {plan.num_ranks} ranks, world has {world.num_ranks}")
        if not plan.lowered:
            raise ShapeError("cannot execute a pre-lowering document; lower it first")
        self.plan = plan
        self.world = world
        self.regions: dict[tuple[str, int], int] = {}
        self.port_channels: dict[str, PortChannel] = {}
        self.memory_channels: dict[str, MemoryChannel] = {}
        self.switch_channels: dict[str, object] = {}
        self.sched: Scheduler | None = None
        self.axis_ticks: dict[int, int] = {}
        self._barriers: dict[tuple, _Barrier] = {}
        self._staged: list[int] = []
        self._trace_on = False
        self._bind_regions()

    # -- binding ---------------------------------------------------------

    def _bind_regions(self):
        for key, rid in self.regions.items():
            self.world.free_region(rid)
        self.regions.clear()
        for buf in self.plan.buffers:
            ranks = range(self.plan.num_ranks) if buf.rank == "all" else [buf.rank]
            for r in ranks:
                self.regions[(buf.id, r)] = self.world.alloc_region(
                    r, buf.elems * ELEM_SIZE)

    def _bind_channels(self, sched: Scheduler):
        self.port_channels.clear()
        self.memory_channels.clear()
        self.switch_channels.clear()
        for decl in self.plan.channels:
            if decl.type == "port":
                ch = PortChannel(self.world, sched, decl.src, decl.dst, name=decl.id)
                ch.spawn_proxy(f"proxy.{decl.id}")
                self.port_channels[decl.id] = ch
            elif decl.type == "memory":
                proto = decl.protocol or self.plan.protocol
                self.memory_channels[decl.id] = MemoryChannel(
                    self.world, sched, proto, decl.src, decl.dst, name=decl.id)
            else:
                self.switch_channels[decl.id] = decl

    def region_of(self, buf_id: str, rank: int) -> int:
        return self.regions[(buf_id, rank)]

    def _io_buffer(self, kind: str):
        found = [b for b in self.plan.buffers if b.kind == kind]
        if len(found) != 1:
            raise ShapeError(f"plan must declare exactly one {kind} buffer, "
                             f"found {len(found)}")
        return found[0]

    # -- execution ---------------------------------------------------------

    def execute(self, inputs, mode: str = "round-robin", seed: int | None = None,
                collect_trace: bool = False) -> RunResult:
        plan, world = self.plan, self.world
        np_dtype = NP_DTYPES[plan.dtype]
        in_buf = self._io_buffer("input")
        out_buf = self._io_buffer("output")
        if len(inputs) != plan.num_ranks:
            raise ShapeError(f"need {plan.num_ranks} input arrays, got {len(inputs)}")
        arrays = [np.asarray(a, np_dtype) for a in inputs]
        for r, a in enumerate(arrays):
            if len(a) != in_buf.elems:
                raise ShapeError(
                    f"rank {r}: input length {len(a)} != declared {in_buf.elems}")

        world.detector.reset()
        for rid in self._staged:
            world.free_region(rid)
        self._staged.clear()
        for rid in self.regions.values():
            world.regions[rid].data[:] = 0
        sched = Scheduler(world, mode=mode, seed=seed)
        self.sched = sched
        self.axis_ticks = {}
        self._barriers: dict[tuple, _Barrier] = {}
        self._bind_channels(sched)
        for r, a in enumerate(arrays):
            world.regions[self.regions[(in_buf.id, r)]].data[:] = a.view(np.uint8)
        self._trace_on = collect_trace

        rank_tbs: dict[int, list[int]] = {}
        for prog in plan.programs:
            rank_tbs.setdefault(prog.rank, []).append(prog.tb)
        for prog in sorted(plan.programs, key=lambda p: (p.rank, p.tb)):
            sched.spawn(f"r{prog.rank}.tb{prog.tb}",
                        self._block_fn(prog, sorted(rank_tbs[prog.rank])))
        sched.run()

        outputs = [
            world.regions[self.regions[(out_buf.id, r)]].data.view(np_dtype).copy()
            for r in range(plan.num_ranks)
        ]
        return RunResult(outputs=outputs, races=list(world.detector.reports),
                         trace=sched.events if collect_trace else None,
                         steps=sched.steps)

    def execute_traced(self, inputs, mode: str = "round-robin",
                       seed: int | None = None) -> RunResult:
        return self.execute(inputs, mode=mode, seed=seed, collect_trace=True)

    # -- per-block interpreter ---------------------------------------------

    def _block_fn(self, prog, rank_tbs):
        def fn(ctx):
            state = _BlockState(ctx)
            for i, op in enumerate(prog.ops):
                if self._trace_on:
                    self.sched.emit("issue", prog.rank, prog.tb, i, op.op)
                yield from self._exec_op(op, prog, ctx, state, rank_tbs)
                if self._trace_on:
                    self.sched.emit("complete", prog.rank, prog.tb, i, op.op)
        return fn

    def _exec_op(self, op, prog, ctx, state, rank_tbs):
        world = self.world
        det = world.detector
        rank = prog.rank
        name = op.op

        if name == "tb_sync":
            state.join_all()
            yield
            return

        if name == "device_barrier":
            state.join_all()
            members = op.tb_group or tuple(rank_tbs)
            key = (rank, members)
            n = state.barrier_counts.get(key, 0)
            state.barrier_counts[key] = n + 1
            bar = self._barriers.get((key, n))
            if bar is None:
                bar = self._barriers[(key, n)] = _Barrier(len(members))
            ctx.bump()
            clock_join_into(bar.clock, ctx.clock)
            bar.arrived.add(prog.tb)
            world.version += 1
            while len(bar.arrived) < bar.expected:
                ctx.block_reason = f"device barrier {key}#{n}"
                yield BLOCKED
            clock_join_into(ctx.clock, bar.clock)
            yield
            return

        chan = op.chan
        port = self.port_channels.get(chan)
        mem = self.memory_channels.get(chan)
        sw = self.switch_channels.get(chan)
        dtype = self.plan.dtype

        def rid(ref, at_rank):
            return self.region_of(ref[0], at_rank)

        if name in ("put", "put_with_signal"):
            _, soff, size = op.src
            _, doff, _ = op.dst
            if port is not None:
                method = port.put_with_signal if name == "put_with_signal" else port.put
                yield from method(doff * 4, soff * 4, size * 4, ctx,
                                  src_region=rid(op.src, port.src_rank),
                                  dst_region=rid(op.dst, port.dst_rank))
            else:
                clk = state.fork(self)
                mem.put_hb(doff * 4, soff * 4, size * 4, ctx,
                           src_region=rid(op.src, mem.src_rank),
                           dst_region=rid(op.dst, mem.dst_rank), clock=clk)
                if name == "put_with_signal":
                    mem.signal(ctx)
                yield
        elif name == "signal":
            if port is not None:
                yield from port.signal(ctx)
            else:
                mem.signal(ctx)
                yield
        elif name == "wait":
            ch = port if port is not None else mem
            yield from ch.wait(ctx)
        elif name == "flush":
            if port is not None:
                yield from port.flush(ctx)
            yield
        elif name == "put_packets":
            _, soff, size = op.src
            _, doff, _ = op.dst
            clk = state.fork(self)
            if mem is not None:
                yield from mem.put_ll(doff * 8, soff * 4, size * 4, op.flag, ctx,
                                      src_region=rid(op.src, mem.src_rank),
                                      dst_region=rid(op.dst, mem.dst_rank), clock=clk)
            else:
                yield from self._port_put_packets(port, op, ctx, clk)
        elif name == "read_packets":
            _, soff, size = op.src
            _, doff, _ = op.dst
            scratch = rid(op.src, rank)
            data = yield from ll_read_range(world, scratch, soff * 8, size, op.flag, ctx)
            clk = state.fork(self)
            det.record(ctx.name, rid(op.dst, rank), doff * 4, size * 4,
                       racedet.WRITE, clk, f"read_packets@r{rank}")
            world.write(rid(op.dst, rank), doff * 4, data)
            yield
        elif name == "reduce":
            clk = state.fork(self)
            if sw is not None:
                mm = {r: rid(op.src, r) for r in sw.ranks}
                switch_reduce(world, sw.ranks, mm, rid(op.dst, rank),
                              op.dst[1] * 4, op.src[1] * 4, op.src[2] * 4,
                              "sum", dtype, ctx, clock=clk, label=f"switch@r{rank}")
            elif mem is not None:
                mem.reduce(op.dst[1] * 4, op.src[1] * 4, op.src[2] * 4, "sum",
                           dtype, ctx, src_region=rid(op.src, mem.dst_rank),
                           dst_region=rid(op.dst, rank), clock=clk)
            else:
                self._local_reduce(op, rank, ctx, clk)
            yield
        elif name == "copy":
            clk = state.fork(self)
            if sw is not None:
                mm = {r: rid(op.dst, r) for r in sw.ranks}
                switch_broadcast(world, sw.ranks, mm, rid(op.src, rank),
                                 op.dst[1] * 4, op.src[1] * 4, op.src[2] * 4,
                                 ctx, clock=clk, label=f"switch@r{rank}")
            else:
                src_rank = mem.dst_rank if mem is not None else rank
                self._local_copy(op, rank, src_rank, ctx, clk)
            yield
        elif name == "reduce_put":
            clk = state.fork(self)
            self._reduce_put(op, rank, mem, ctx, clk)
            yield
        else:
            raise ShapeError(f"executor cannot interpret op {name!r}")

    def _port_put_packets(self, port, op, ctx, clk):
        """LL packets over a port channel: the proxy writes the packet bytes,
        so readers self-synchronize on flags with no semaphore round trip."""
        world = self.world
        soff, size = op.src[1] * 4, op.src[2] * 4
        src_rid = self.region_of(op.src[0], port.src_rank)
        dst_rid = self.region_of(op.dst[0], port.dst_rank)
        payload = world.regions[src_rid].data[soff:soff + size].copy()
        packets = np.zeros(2 * size, np.uint8)
        lanes = packets.reshape(size // 4, 8)
        lanes[:, 0:4] = payload.reshape(size // 4, 4)
        lanes[:, 4:8] = np.array([op.flag], dtype="<u4").view(np.uint8)
        world.detector.record(ctx.name, src_rid, soff, size, racedet.READ, clk,
                              f"{port.name}.put_packets")
        staged = world.alloc_region(port.src_rank, len(packets))
        self._staged.append(staged)
        world.regions[staged].data[:] = packets
        yield from port.put(op.dst[1] * 8, 0, len(packets), ctx,
                            src_region=staged, dst_region=dst_rid)

    def _local_reduce(self, op, rank, ctx, clk):
        world, det = self.world, self.world.detector
        npdt = NP_DTYPES[self.plan.dtype]
        src_rid = self.region_of(op.src[0], rank)
        dst_rid = self.region_of(op.dst[0], rank)
        soff, doff, size = op.src[1] * 4, op.dst[1] * 4, op.src[2] * 4
        lbl = f"reduce@r{rank}"
        det.record(ctx.name, src_rid, soff, size, racedet.READ, clk, lbl)
        det.record(ctx.name, dst_rid, doff, size, racedet.READ, clk, lbl)
        det.record(ctx.name, dst_rid, doff, size, racedet.WRITE, clk, lbl)
        acc = world.regions[dst_rid].data[doff:doff + size].view(npdt)
        acc += world.regions[src_rid].data[soff:soff + size].view(npdt)
        world.version += 1

    def _local_copy(self, op, rank, src_rank, ctx, clk):
        world, det = self.world, self.world.detector
        src_rid = self.region_of(op.src[0], src_rank)
        dst_rid = self.region_of(op.dst[0], rank)
        soff, doff, size = op.src[1] * 4, op.dst[1] * 4, op.src[2] * 4
        lbl = f"copy@r{rank}"
        det.record(ctx.name, src_rid, soff, size, racedet.READ, clk, lbl)
        det.record(ctx.name, dst_rid, doff, size, racedet.WRITE, clk, lbl)
        world.write(dst_rid, doff, world.regions[src_rid].data[soff:soff + size].copy())

    def _reduce_put(self, op, rank, mem, ctx, clk):
        """Fused local reduce whose result goes straight to the peer through
        a register, never touching local memory."""
        world, det = self.world, self.world.detector
        npdt = NP_DTYPES[self.plan.dtype]
        a_rid = self.region_of(op.src[0], rank)
        b_rid = self.region_of(op.src2[0], rank)
        d_rid = self.region_of(op.dst[0], mem.dst_rank)
        aoff, boff = op.src[1] * 4, op.src2[1] * 4
        doff, size = op.dst[1] * 4, op.src[2] * 4
        lbl = f"reduce_put@r{rank}"
        det.record(ctx.name, a_rid, aoff, size, racedet.READ, clk, lbl)
        det.record(ctx.name, b_rid, boff, size, racedet.READ, clk, lbl)
        det.record(ctx.name, d_rid, doff, size, racedet.WRITE, clk, lbl)
        total = (world.regions[a_rid].data[aoff:aoff + size].view(npdt)
                 + world.regions[b_rid].data[boff:boff + size].view(npdt))
        world.write(d_rid, doff, total.view(np.uint8))
        mem._pending_put_clocks.append(clk)


def init(plan: ExecutionPlan, world: SimWorld) -> Runtime:
    return Runtime(plan, world)
