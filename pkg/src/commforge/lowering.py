"""In-process program builder and the lowering pipeline.

The builder records abstract channel/compute operations per (rank, thread
block) stream with chunk references. Lowering then runs:

    analyze_dependencies -> insert_syncs -> eliminate_redundant_syncs -> fuse

and emits a validated, fully concrete ExecutionPlan (loops unrolled, LL
flags assigned, instances replicated onto disjoint chunk slices).

Ordering model used by the passes: within one thread block, channel sync
ops (signal/wait/flush) and port-channel pushes execute in issue order,
while data ops (reduce/copy/memory put/packet ops) behave like work handed
to the block's threads: their effects are unordered with respect to later
ops until a tb_sync joins them. A port put's source read happens on the
proxy and is only ordered by a flush on that channel.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass, field, replace

from .errors import OutOfBoundsError, ProtocolError, ShapeError
from .plan import (
    BufferDecl,
    ChannelDecl,
    ExecutionPlan,
    PlanOp,
    ThreadBlockProgram,
    validate_plan,
)

# access sites: how an instruction's memory effect is ordered
LOCAL = "local"      # block-thread work; ordered only by tb_sync/device_barrier
PROXY = "proxy"      # port-channel proxy read; ordered only by flush
ARRIVAL = "arrival"  # data landing represented by a wait; orders issue

_SYNC_OPS = ("tb_sync", "device_barrier")


@dataclass
class LoweringParams:
    num_ranks: int
    elems: int
    dtype: str = "i32"
    protocol: str = "HB"
    instances: int = 1


@dataclass
class Instr:
    idx: int
    rank: int
    tb: int
    op: str
    chan: str | None = None
    src: tuple | None = None
    dst: tuple | None = None
    src2: tuple | None = None
    arrives: tuple | None = None
    flag: int | None = None
    tb_group: tuple | None = None
    inserted: bool = False          # added by insert_syncs
    serves: list = field(default_factory=list)  # edges an inserted sync orders

    chan_type: str = "none"

    def reads(self):
        """Yield (buffer, lo, hi, site) for same-rank read effects.

        Remote-side accesses never appear here; cross-rank ordering is the
        business of channel synchronization, not the intra-block DAG.
        """
        op = self.op
        if op == "reduce":
            yield (*_rng(self.dst), LOCAL)  # accumulator is read
            if self.chan is None:
                yield (*_rng(self.src), LOCAL)
        elif op == "copy" and self.chan is None:
            yield (*_rng(self.src), LOCAL)
        elif op in ("put", "put_with_signal", "put_packets"):
            site = PROXY if self.chan_type == "port" else LOCAL
            yield (*_rng(self.src), site)
        elif op == "reduce_put":
            yield (*_rng(self.src), LOCAL)
            yield (*_rng(self.src2), LOCAL)
        elif op in ("switch_reduce", "switch_broadcast"):
            yield (*_rng(self.src), LOCAL)  # caller's own instance

    def writes(self):
        op = self.op
        if op in ("reduce", "copy", "read_packets", "switch_reduce",
                  "switch_broadcast"):
            yield (*_rng(self.dst), LOCAL)
        elif op == "wait" and self.arrives is not None:
            yield (*_rng(self.arrives), ARRIVAL)


def _rng(ref):
    buf, off, size = ref
    return buf, off, off + size


@dataclass(frozen=True)
class DepEdge:
    src: int   # instr idx
    dst: int
    kind: str  # RAW | WAR | WAW
    site: str  # ordering class of the earlier access


class ChunkState:
    """Last writer and active readers per touched chunk of one buffer."""

    __slots__ = ("writes", "reads")

    def __init__(self):
        self.writes: list[tuple[int, int, int, str]] = []  # lo, hi, instr, site
        self.reads: list[tuple[int, int, int, str]] = []

    def record_read(self, lo, hi, idx, site):
        self.reads.append((lo, hi, idx, site))

    def record_write(self, lo, hi, idx, site):
        # only fully-covered records may be dropped: ordering to them is then
        # implied transitively through this write's own edges
        self.writes = [w for w in self.writes if not (lo <= w[0] and w[1] <= hi)] \
            + [(lo, hi, idx, site)]
        self.reads = [r for r in self.reads if not (lo <= r[0] and r[1] <= hi)]


class ProgramGraph:
    def __init__(self, name: str, collective: str, params: LoweringParams):
        self.name = name
        self.collective = collective
        self.params = params
        self.buffers: list[BufferDecl] = []
        self.channels: list[ChannelDecl] = []
        self.instrs: list[Instr] = []
        self.streams: dict[tuple[int, int], list[int]] = {}
        self.edges: set[DepEdge] = set()

    # -- declarations --------------------------------------------------

    def buffer(self, buf_id: str, kind: str, rank, elems: int) -> str:
        if elems <= 0:
            raise ShapeError(f"buffer {buf_id!r} must have positive elems")
        self.buffers.append(BufferDecl(buf_id, kind, rank, elems))
        return buf_id

    def _buffer(self, buf_id: str) -> BufferDecl:
        for b in self.buffers:
            if b.id == buf_id:
                return b
        raise OutOfBoundsError(f"unknown buffer {buf_id!r}")

    def _check_ref(self, ref, packet_space=False):
        if ref is None:
            return
        buf = self._buffer(ref[0])
        limit = buf.elems // 2 if packet_space else buf.elems
        if ref[1] < 0 or ref[2] < 0 or ref[1] + ref[2] > limit:
            raise OutOfBoundsError(
                f"chunk [{ref[1]},{ref[1] + ref[2]}) outside buffer {ref[0]!r} "
                f"({'packet capacity' if packet_space else 'elems'} {limit})")

    def port_channel(self, src: int, dst: int) -> "BuilderChannel":
        return self._channel("port", src, dst)

    def memory_channel(self, src: int, dst: int) -> "BuilderChannel":
        return self._channel("memory", src, dst)

    def _channel(self, ctype, src, dst):
        cid = f"{ctype[0]}{len(self.channels)}"
        self.channels.append(ChannelDecl(cid, ctype, src=src, dst=dst,
                                         protocol=self.params.protocol
                                         if ctype == "memory" else None))
        return BuilderChannel(self, cid, ctype, src, dst)

    def switch_channel(self, ranks: list[int]) -> "BuilderSwitchChannel":
        cid = f"s{len(self.channels)}"
        self.channels.append(ChannelDecl(cid, "switch", ranks=tuple(ranks)))
        return BuilderSwitchChannel(self, cid, list(ranks))

    # -- emission --------------------------------------------------------

    def emit(self, rank: int, tb: int, op: str, **kw) -> int:
        """Append one instruction to the (rank, tb) stream."""
        proto = self.params.protocol
        if op in ("put_packets", "read_packets") and proto != "LL":
            raise ProtocolError(f"{op} requires the LL protocol, plan is {proto}")
        chan = kw.get("chan")
        ctype = "none"
        if chan is not None:
            decl = next(c for c in self.channels if c.id == chan)
            ctype = decl.type
            if decl.type == "memory" and proto != "HB" and \
                    op in ("put", "put_with_signal", "signal", "wait", "reduce",
                           "reduce_put"):
                raise ProtocolError(f"{op} on a memory channel requires HB, plan is {proto}")
        self._check_ref(kw.get("src"), packet_space=(op == "read_packets"))
        self._check_ref(kw.get("dst"), packet_space=(op == "put_packets"))
        self._check_ref(kw.get("src2"))
        instr = Instr(idx=len(self.instrs), rank=rank, tb=tb, op=op, **kw)
        instr.chan_type = ctype
        self.instrs.append(instr)
        self.streams.setdefault((rank, tb), []).append(instr.idx)
        return instr.idx

    # -- local compute -----------------------------------------------------

    def reduce(self, rank: int, dst, src, tb: int = 0) -> int:
        """Local elementwise accumulate: dst += src (both on rank)."""
        return self.emit(rank, tb, "reduce", src=src, dst=dst)

    def copy(self, rank: int, dst, src, tb: int = 0) -> int:
        return self.emit(rank, tb, "copy", src=src, dst=dst)

    def tb_sync(self, rank: int, tb: int = 0) -> int:
        return self.emit(rank, tb, "tb_sync")

    def device_barrier(self, rank: int, tbs: list[int]) -> None:
        for tb in tbs:
            self.emit(rank, tb, "device_barrier", tb_group=tuple(sorted(tbs)))


class BuilderChannel:
    """Recorder handle for one directed port/memory channel."""

    def __init__(self, graph: ProgramGraph, cid: str, ctype: str, src: int, dst: int):
        self.graph = graph
        self.id = cid
        self.type = ctype
        self.src = src
        self.dst = dst

    def put(self, dst, src, tb: int = 0, tb_group=None):
        return self._data_op("put", dst, src, tb, tb_group)

    def put_packets(self, dst, src, tb: int = 0, tb_group=None, flag: int | None = None):
        if self.type == "switch":
            raise ProtocolError("put_packets needs a port or memory channel")
        return self._data_op("put_packets", dst, src, tb, tb_group, flag=flag)

    def _data_op(self, op, dst, src, tb, tb_group, **kw):
        if tb_group is not None:
            return self._group_op(op, dst, src, tb_group, **kw)
        return self.graph.emit(self.src, tb, op, chan=self.id, src=src, dst=dst, **kw)

    def _group_op(self, op, dst, src, tb_group, **kw):
        """Partition the range evenly across member blocks, barrier after."""
        g = self.graph
        members = list(tb_group)
        k = len(members)
        share = src[2] // k
        idxs = []
        for i, tb in enumerate(members):
            lo = i * share
            size = src[2] - lo if i == k - 1 else share  # remainder to the last
            idxs.append(g.emit(self.src, tb, op, chan=self.id,
                               src=(src[0], src[1] + lo, size),
                               dst=(dst[0], dst[1] + lo, size), **kw))
        g.device_barrier(self.src, members)
        return idxs

    def signal(self, tb: int = 0):
        return self.graph.emit(self.src, tb, "signal", chan=self.id)

    def wait(self, tb: int = 0, arrives=None):
        return self.graph.emit(self.dst, tb, "wait", chan=self.id, arrives=arrives)

    def flush(self, tb: int = 0):
        if self.type != "port":
            raise ProtocolError("flush requires a port channel")
        return self.graph.emit(self.src, tb, "flush", chan=self.id)

    def reduce(self, dst, src, tb: int = 0):
        """Remote-read reduce at the source rank: local dst += peer src."""
        if self.type != "memory":
            raise ProtocolError("channel reduce requires a memory channel")
        return self.graph.emit(self.src, tb, "reduce", chan=self.id, src=src, dst=dst)

    def read_packets(self, dst, src, tb: int = 0, flag: int | None = None):
        """Decode packets from the destination rank's scratch into dst."""
        return self.graph.emit(self.dst, tb, "read_packets", chan=self.id,
                               src=src, dst=dst, flag=flag)


class BuilderSwitchChannel:
    def __init__(self, graph: ProgramGraph, cid: str, ranks: list[int]):
        self.graph = graph
        self.id = cid
        self.ranks = ranks

    def reduce(self, caller: int, dst, src, tb: int = 0):
        if caller not in self.ranks:
            raise OutOfBoundsError(f"rank {caller} not in switch channel")
        return self.graph.emit(caller, tb, "switch_reduce", chan=self.id,
                               src=src, dst=dst)

    def broadcast(self, caller: int, dst, src, tb: int = 0):
        if caller not in self.ranks:
            raise OutOfBoundsError(f"rank {caller} not in switch channel")
        return self.graph.emit(caller, tb, "switch_broadcast", chan=self.id,
                               src=src, dst=dst)


# -- passes -------------------------------------------------------------------


def analyze_dependencies(g: ProgramGraph) -> ProgramGraph:
    """Add RAW/WAR/WAW edges for overlapping chunks within each stream."""
    g.edges = set()
    for stream in g.streams.values():
        state: dict[str, ChunkState] = {}
        for idx in stream:
            instr = g.instrs[idx]
            for buf, lo, hi, site in instr.reads():
                cs = state.setdefault(buf, ChunkState())
                for wlo, whi, widx, wsite in cs.writes:
                    if lo < whi and wlo < hi and widx != idx:
                        g.edges.add(DepEdge(widx, idx, "RAW", wsite))
                cs.record_read(lo, hi, idx, site)
            for buf, lo, hi, site in instr.writes():
                cs = state.setdefault(buf, ChunkState())
                for rlo, rhi, ridx, rsite in cs.reads:
                    if lo < rhi and rlo < hi and ridx != idx:
                        g.edges.add(DepEdge(ridx, idx, "WAR", rsite))
                for wlo, whi, widx, wsite in cs.writes:
                    if lo < whi and wlo < hi and widx != idx:
                        g.edges.add(DepEdge(widx, idx, "WAW", wsite))
                cs.record_write(lo, hi, idx, site)
    return g


def insert_syncs(g: ProgramGraph) -> ProgramGraph:
    """Place a tb_sync (or flush, for proxy-read hazards) before every
    dependence edge target not already ordered. Idempotent."""
    incoming: dict[int, list[DepEdge]] = {}
    for e in g.edges:
        incoming.setdefault(e.dst, []).append(e)

    for key, stream in g.streams.items():
        rank, tb = key
        out: list[int] = []
        pending_local: set[int] = set()
        pending_proxy: dict[str, set[int]] = {}
        for idx in stream:
            instr = g.instrs[idx]
            served_local = []
            flush_chans: dict[str, list] = {}
            for e in incoming.get(idx, ()):
                if e.site == LOCAL and e.src in pending_local:
                    served_local.append((e.src, e.dst))
                elif e.site == PROXY:
                    chan = g.instrs[e.src].chan
                    if e.src in pending_proxy.get(chan, ()):
                        flush_chans.setdefault(chan, []).append((e.src, e.dst))
            for chan, serves in sorted(flush_chans.items()):
                fl = Instr(idx=len(g.instrs), rank=rank, tb=tb, op="flush",
                           chan=chan, inserted=True, serves=serves)
                fl.chan_type = "port"
                g.instrs.append(fl)
                out.append(fl.idx)
                pending_proxy[chan].clear()
            if served_local:
                sync = Instr(idx=len(g.instrs), rank=rank, tb=tb, op="tb_sync",
                             inserted=True, serves=served_local)
                g.instrs.append(sync)
                out.append(sync.idx)
                pending_local.clear()

            if instr.op in _SYNC_OPS:
                pending_local.clear()
            elif instr.op == "flush":
                pending_proxy.setdefault(instr.chan, set()).clear()
            else:
                sites = {s for *_r, s in itertools.chain(instr.reads(), instr.writes())}
                if LOCAL in sites:
                    pending_local.add(idx)
                if PROXY in sites:
                    pending_proxy.setdefault(instr.chan, set()).add(idx)
            out.append(idx)
        g.streams[key] = out
    return g


def eliminate_redundant_syncs(g: ProgramGraph) -> ProgramGraph:
    """Collapse maximal runs of back-to-back tb_sync into one."""
    for key, stream in g.streams.items():
        out: list[int] = []
        for idx in stream:
            if g.instrs[idx].op == "tb_sync" and out \
                    and g.instrs[out[-1]].op == "tb_sync":
                g.instrs[out[-1]].serves.extend(g.instrs[idx].serves)
                continue
            out.append(idx)
        g.streams[key] = out
    return g


def _resolved_touches(g: ProgramGraph, instr: Instr):
    """Yield (buffer, rank, lo, hi) for every buffer instance the op touches,
    including remote sides. Used for fusion liveness, not for the DAG."""
    chan = next((c for c in g.channels if c.id == instr.chan), None)

    def at(ref, rank):
        if ref is not None:
            yield (ref[0], rank, ref[1], ref[1] + ref[2])

    op = instr.op
    if op in ("put", "put_with_signal", "put_packets"):
        yield from at(instr.src, instr.rank)
        yield from at(instr.dst, chan.dst)
    elif op == "reduce_put":
        yield from at(instr.src, instr.rank)
        yield from at(instr.src2, instr.rank)
        yield from at(instr.dst, chan.dst)
    elif op in ("reduce", "copy") and chan is not None and chan.type != "switch":
        yield from at(instr.dst, instr.rank)
        yield from at(instr.src, chan.dst)
    elif op in ("switch_reduce", "switch_broadcast"):
        mm = instr.src if op == "switch_reduce" else instr.dst
        other = instr.dst if op == "switch_reduce" else instr.src
        for r in chan.ranks:
            yield from at(mm, r)
        yield from at(other, instr.rank)
    elif op == "wait":
        yield from at(instr.arrives, instr.rank)
    else:
        for ref in (instr.src, instr.dst, instr.src2):
            yield from at(ref, instr.rank)


def _buffer_live_after(g: ProgramGraph, ref, rank: int, after_idx: int,
                       stream: list[int]) -> bool:
    """Is the (buffer, rank) instance range touched by any instruction after
    after_idx in its stream, or by any other stream at all?"""
    buf, lo, hi = _rng(ref)
    order = {idx: pos for pos, idx in enumerate(stream)}
    for key, other_stream in g.streams.items():
        for pos, idx in enumerate(other_stream):
            if other_stream is stream and pos <= order[after_idx]:
                continue
            for b, r, alo, ahi in _resolved_touches(g, g.instrs[idx]):
                if b == buf and r == rank and lo < ahi and alo < hi:
                    return True
    return False


def fuse(g: ProgramGraph) -> ProgramGraph:
    """Merge {reduce; put} into reduce_put and {put; signal} into
    put_with_signal when chunks line up on one channel with no intervening
    dependent op. Never increases the op count."""
    kinds = {b.id: b.kind for b in g.buffers}
    changed = True
    while changed:
        changed = False
        for key, stream in g.streams.items():
            for pos in range(len(stream) - 1):
                a = g.instrs[stream[pos]]
                nxt = stream[pos + 1:pos + 3]
                b = g.instrs[nxt[0]]
                c = g.instrs[nxt[1]] if len(nxt) > 1 else None

                # put ; signal  (same channel, adjacent)
                if a.op == "put" and b.op == "signal" and a.chan == b.chan:
                    fused = replace(a, op="put_with_signal",
                                    idx=len(g.instrs), serves=[])
                    fused.chan_type = a.chan_type
                    g.instrs.append(fused)
                    g.streams[key] = stream[:pos] + [fused.idx] + stream[pos + 2:]
                    changed = True
                    break

                # reduce ; [tb_sync only serving that edge] ; put
                mid_sync = b.op == "tb_sync" and c is not None
                put = c if mid_sync else b
                if a.op == "reduce" and a.chan is None and put is not None \
                        and put.op == "put" and put.chan_type == "memory" \
                        and put.src == a.dst \
                        and kinds.get(a.dst[0]) == "scratch" \
                        and not _buffer_live_after(g, a.dst, a.rank,
                                                   stream[pos + (2 if mid_sync else 1)],
                                                   stream):
                    if mid_sync:
                        extra = [e for e in b.serves if e != (a.idx, put.idx)]
                        if not b.inserted or extra:
                            continue  # the sync orders something else; keep it
                    fused = Instr(idx=len(g.instrs), rank=a.rank, tb=a.tb,
                                  op="reduce_put", chan=put.chan, dst=put.dst,
                                  src=a.src, src2=a.dst)
                    fused.chan_type = put.chan_type
                    g.instrs.append(fused)
                    drop = 3 if mid_sync else 2
                    g.streams[key] = stream[:pos] + [fused.idx] + stream[pos + drop:]
                    changed = True
                    break
            if changed:
                break
    return g


def _assign_ll_flags(g: ProgramGraph) -> None:
    """Per-channel generation counters starting at 1, bumped when a packet
    range is reused; reads inherit the matching put's generation."""
    gen: dict[str, int] = {}
    used: dict[str, list[tuple]] = {}
    put_flags: dict[str, list[tuple]] = {}  # chan -> [(ref, flag)] in emit order
    for instr in sorted((i for i in g.instrs if i.op == "put_packets"),
                        key=lambda i: i.idx):
        chan = instr.chan
        if instr.flag is None:
            cur = gen.setdefault(chan, 1)
            ranges = used.setdefault(chan, [])
            buf, lo, hi = _rng(instr.dst)
            if any(b == buf and lo < h and l < hi for b, l, h in ranges):
                cur += 1
                gen[chan] = cur
                used[chan] = []
            used[chan].append((buf, lo, hi))
            instr.flag = cur
        put_flags.setdefault(chan, []).append((instr.dst, instr.flag))
    consumed: dict[str, int] = {}
    for key in sorted(g.streams):
        for idx in g.streams[key]:
            instr = g.instrs[idx]
            if instr.op != "read_packets" or instr.flag is not None:
                continue
            buf, lo, hi = _rng(instr.src)
            matches = [f for ref, f in put_flags.get(instr.chan, ())
                       if ref[0] == buf and lo < ref[1] + ref[2] and ref[1] < hi]
            if not matches:
                raise ShapeError(f"read_packets on {instr.chan} has no matching put")
            k = consumed.get((instr.chan, buf, lo, hi), 0)
            consumed[(instr.chan, buf, lo, hi)] = k + 1
            instr.flag = matches[min(k, len(matches) - 1)]


def _replicate(g: ProgramGraph, instances: int) -> ProgramGraph:
    """Duplicate the op streams onto per-instance thread blocks and channel
    sets, each instance taking a disjoint slice of every chunk."""
    if instances == 1:
        return g
    for instr in g.instrs:
        for ref in (instr.src, instr.dst, instr.src2, instr.arrives):
            if ref is not None and ref[2] % instances:
                raise ShapeError(
                    f"chunk size {ref[2]} not divisible by {instances} instances")
    out = ProgramGraph(g.name, g.collective, g.params)
    out.buffers = list(g.buffers)
    chan_map: dict[tuple[str, int], str] = {}
    for c in g.channels:
        for i in range(instances):
            cid = c.id if i == 0 else f"{c.id}.i{i}"
            chan_map[(c.id, i)] = cid
            out.channels.append(replace(c, id=cid))

    def slice_ref(ref, i):
        if ref is None:
            return None
        buf, off, size = ref
        share = size // instances
        return (buf, off + i * share, share)

    for key in sorted(g.streams):
        rank, tb = key
        for i in range(instances):
            for idx in g.streams[key]:
                instr = g.instrs[idx]
                clone = replace(
                    instr, idx=len(out.instrs), tb=tb * instances + i,
                    chan=chan_map.get((instr.chan, i)) if instr.chan else None,
                    src=slice_ref(instr.src, i), dst=slice_ref(instr.dst, i),
                    src2=slice_ref(instr.src2, i),
                    arrives=slice_ref(instr.arrives, i), serves=[])
                clone.chan_type = instr.chan_type
                out.instrs.append(clone)
                out.streams.setdefault((rank, tb * instances + i), []).append(clone.idx)
    return out


_PLAN_OP_NAMES = {"switch_reduce": "reduce", "switch_broadcast": "copy"}


def emit_plan(g: ProgramGraph, lowered: bool = True) -> ExecutionPlan:
    programs = []
    for key in sorted(g.streams):
        rank, tb = key
        ops = []
        for idx in g.streams[key]:
            i = g.instrs[idx]
            ops.append(PlanOp(op=_PLAN_OP_NAMES.get(i.op, i.op), chan=i.chan,
                              src=i.src, dst=i.dst, src2=i.src2, flag=i.flag,
                              arrives=i.arrives, tb_group=i.tb_group))
        programs.append(ThreadBlockProgram(rank, tb, tuple(ops)))
    return ExecutionPlan(
        version=1, name=g.name, collective=g.collective,
        protocol=g.params.protocol, dtype=g.params.dtype,
        num_ranks=g.params.num_ranks, buffers=list(g.buffers),
        channels=list(g.channels), programs=programs, lowered=lowered)


def graph_from_plan(plan: ExecutionPlan) -> ProgramGraph:
    """Reconstruct a ProgramGraph from a (usually pre-lowering) document so
    the pass pipeline can run on programs recorded elsewhere."""
    elems = max((b.elems for b in plan.buffers if b.kind == "input"),
                default=max((b.elems for b in plan.buffers), default=1))
    params = LoweringParams(plan.num_ranks, elems, plan.dtype, plan.protocol)
    g = ProgramGraph(plan.name, plan.collective, params)
    g.buffers = list(plan.buffers)
    g.channels = list(plan.channels)
    chan_types = {c.id: c.type for c in plan.channels}
    for prog in sorted(plan.programs, key=lambda q: (q.rank, q.tb)):
        for op in prog.ops:
            name = op.op
            if op.chan is not None and chan_types[op.chan] == "switch":
                name = {"reduce": "switch_reduce", "copy": "switch_broadcast"}[op.op]
            g.emit(prog.rank, prog.tb, name, chan=op.chan, src=op.src,
                   dst=op.dst, src2=op.src2, arrives=op.arrives, flag=op.flag,
                   tb_group=op.tb_group)
    return g


ALL_PASSES = ("sync", "fuse")


def lower(g: ProgramGraph, params: LoweringParams | None = None,
          passes: tuple = ALL_PASSES) -> ExecutionPlan:
    """Run the pass pipeline and emit a validated plan."""
    params = params or g.params
    if params.num_ranks != g.params.num_ranks:
        raise ShapeError("params num_ranks disagrees with the program")
    g = _replicate(g, params.instances)
    analyze_dependencies(g)
    if "sync" in passes:
        insert_syncs(g)
        eliminate_redundant_syncs(g)
    if "fuse" in passes:
        fuse(g)
    if g.params.protocol == "LL":
        _assign_ll_flags(g)
    plan = emit_plan(g)
    errors = [d for d in validate_plan(plan) if d.severity == "error"]
    if errors:
        raise ShapeError("; ".join(str(d) for d in errors))
    return plan
