"""Collective algorithm library.

Builders return ProgramGraphs expressing the data movement; lowering turns
them into executable plans. Naming follows the algorithm families: ring
reduce-scatter (overlapped halves), one-phase all-pairs (LL), two-phase
all-pairs (LL / HB pull / port push / switch), two-phase ring, and the
two-phase hierarchical variants for multi-node runs, plus ring and
all-pairs AllGathers.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .dtypes import ELEM_SIZE, NP_DTYPES
from .errors import NoAlgoError, ShapeError, TopologyError
from .executor import Runtime
from .lowering import BuilderChannel, LoweringParams, ProgramGraph, lower
from .world import SimWorld

ALGO_NAMES = ("ring_rs", "ring_ag", "2pr", "1pa", "2pa", "2ph",
              "allpairs_ag", "switch_2pa")


# -- builders ------------------------------------------------------------


def build_ring_rs(params: LoweringParams, out_full: bool = False,
                  graph: ProgramGraph | None = None) -> ProgramGraph:
    """Overlapped ring ReduceScatter.

    Each step puts the first half of the outgoing chunk, reduces the
    previous arrival's second half while the transfer is in flight, then
    puts the second half and reduces the fresh arrival's first half. Put
    offsets follow offset(step) = ((rank + N - step) mod N) * (elems / N).
    The final arrival is the rank's own chunk carrying every contribution,
    materialized into the (zero-initialized) output by a reduce.
    """
    n, elems = params.num_ranks, params.elems
    if elems % (2 * n):
        raise ShapeError(f"ring ReduceScatter needs elems divisible by {2 * n}")
    cs = elems // n
    h = cs // 2
    g = graph or ProgramGraph("ring_rs", "reducescatter", params)
    g.buffer("input", "input", "all", elems)
    g.buffer("scratch", "scratch", "all", elems)
    if not out_full:
        g.buffer("output", "output", "all", cs)
    if n == 1:
        g.copy(0, dst=("output", 0, cs), src=("input", 0, cs))
        return g
    send = [g.port_channel(r, (r + 1) % n) for r in range(n)]
    for r in range(n):
        tx, rx = send[r], send[(r - 1) % n]
        out = ("output", r * cs) if out_full else ("output", 0)
        for s in range(n):
            c = (r + n - s) % n
            a = (r + n - s - 1) % n
            cb, ab = c * cs, a * cs
            tx.put(dst=("scratch", cb, h), src=("input", cb, h), tb=0)
            tx.signal(tb=0)
            if s > 0:
                # previous arrival's 2nd half, overlapping the put above
                g.reduce(r, dst=("input", cb + h, h), src=("scratch", cb + h, h))
            rx.wait(tb=0, arrives=("scratch", ab, h))
            tx.flush(tb=0)
            tx.put(dst=("scratch", cb + h, h), src=("input", cb + h, h), tb=0)
            tx.signal(tb=0)
            if s < n - 1:
                g.reduce(r, dst=("input", ab, h), src=("scratch", ab, h))
            else:
                # own chunk came full circle: land its 1st half in the output
                g.reduce(r, dst=(out[0], out[1], h), src=("scratch", ab, h))
            rx.wait(tb=0, arrives=("scratch", ab + h, h))
            tx.flush(tb=0)
        g.reduce(r, dst=(out[0], out[1] + h, h), src=("scratch", r * cs + h, h))
    return g


def build_ring_ag(params: LoweringParams) -> ProgramGraph:
    """Ring AllGather: each rank forwards the chunk it received last step,
    writing straight into the peer's output buffer."""
    n = params.num_ranks
    g = ProgramGraph("ring_ag", "allgather", params)
    cs = params.elems
    g.buffer("input", "input", "all", cs)
    g.buffer("output", "output", "all", n * cs)
    if n == 1:
        g.copy(0, dst=("output", 0, cs), src=("input", 0, cs))
        return g
    send = [g.port_channel(r, (r + 1) % n) for r in range(n)]
    for r in range(n):
        tx, rx = send[r], send[(r - 1) % n]
        g.copy(r, dst=("output", r * cs, cs), src=("input", 0, cs))
        for t in range(n - 1):
            gt = (r + n - t) % n
            arr = (r + n - t - 1) % n
            tx.put(dst=("output", gt * cs, cs), src=("output", gt * cs, cs), tb=0)
            tx.signal(tb=0)
            rx.wait(tb=0, arrives=("output", arr * cs, cs))
            tx.flush(tb=0)
    return g


def build_2pr(params: LoweringParams) -> ProgramGraph:
    """Two-phase ring AllReduce over port channels: the overlapped ring
    ReduceScatter, then a ring AllGather on the same channels, with the
    final reduce of each rank's own chunk pipelined into the first
    AllGather put (second halves reduce while first halves fly)."""
    n, elems = params.num_ranks, params.elems
    if elems % (2 * n):
        raise ShapeError(f"two-phase ring needs elems divisible by {2 * n}")
    cs = elems // n
    h = cs // 2
    g = ProgramGraph("2pr", "allreduce", params)
    g.buffer("output", "output", "all", elems)
    build_ring_rs(params, out_full=True, graph=g)
    if n == 1:
        return g
    # reuse the ring ReduceScatter's port channels for the AllGather phase
    chans = [BuilderChannel(g, decl.id, decl.type, decl.src, decl.dst)
             for decl in g.channels]
    for r in range(n):
        tx, rx = chans[r], chans[(r - 1) % n]
        for t in range(n - 1):
            gt = (r + n - t) % n
            arr = (r + n - t - 1) % n
            for half in (0, 1):
                off = gt * cs + half * h
                tx.put(dst=("output", off, h), src=("output", off, h), tb=0)
                tx.signal(tb=0)
                rx.wait(tb=0, arrives=("output", arr * cs + half * h, h))
                tx.flush(tb=0)
    return g


def build_1pa(params: LoweringParams) -> ProgramGraph:
    """One-phase all-pairs over LL memory channels: every rank broadcasts
    its whole input to all peers before reading anything, then reduces the
    decoded contributions locally. No semaphores, flags only."""
    n, elems = params.num_ranks, params.elems
    g = ProgramGraph("1pa", "allreduce", params)
    g.buffer("input", "input", "all", elems)
    g.buffer("output", "output", "all", elems)
    g.buffer("llscr", "scratch", "all", 2 * n * elems)
    g.buffer("tmp", "scratch", "all", n * elems)
    chans = {(r, p): g.memory_channel(r, p)
             for r in range(n) for p in range(n) if p != r}
    for r in range(n):
        peers = [p for p in range(n) if p != r]
        for p in peers:
            chans[(r, p)].put_packets(dst=("llscr", r * elems, elems),
                                      src=("input", 0, elems), tb=0)
        g.copy(r, dst=("output", 0, elems), src=("input", 0, elems))
        for p in peers:
            chans[(p, r)].read_packets(dst=("tmp", p * elems, elems),
                                       src=("llscr", p * elems, elems), tb=0)
        for p in peers:
            g.reduce(r, dst=("output", 0, elems), src=("tmp", p * elems, elems))
    return g


def build_2pa(params: LoweringParams, variant: str = "memory") -> ProgramGraph:
    """Two-phase all-pairs AllReduce: ReduceScatter then AllGather, each in
    the all-pairs pattern. Variants: "ll" (packet flags), "memory" (HB,
    pulls from every peer within one block's program), "port" (DMA push)."""
    n, elems = params.num_ranks, params.elems
    if elems % n:
        raise ShapeError(f"two-phase all-pairs needs elems divisible by {n}")
    cs = elems // n
    g = ProgramGraph(f"2pa_{variant}", "allreduce", params)
    g.buffer("input", "input", "all", elems)
    g.buffer("output", "output", "all", elems)
    if variant == "ll":
        g.buffer("ph1", "scratch", "all", 2 * elems)
        g.buffer("ph2", "scratch", "all", 2 * elems)
        g.buffer("tmp", "scratch", "all", elems)
    elif variant == "port":
        g.buffer("slots", "scratch", "all", elems)
    make = g.memory_channel if variant != "port" else g.port_channel
    chans = {(r, p): make(r, p) for r in range(n) for p in range(n) if p != r}
    for r in range(n):
        peers = [p for p in range(n) if p != r]
        base = r * cs
        if variant == "memory":
            g.copy(r, dst=("output", base, cs), src=("input", base, cs))
            for p in peers:  # read this rank's chunk from every peer at once
                chans[(r, p)].reduce(dst=("output", base, cs),
                                     src=("input", base, cs), tb=0)
            for p in peers:
                chans[(r, p)].put(dst=("output", base, cs),
                                  src=("output", base, cs), tb=0)
                chans[(r, p)].signal(tb=0)
            for p in peers:
                chans[(p, r)].wait(tb=0, arrives=("output", p * cs, cs))
        elif variant == "port":
            for p in peers:
                chans[(r, p)].put(dst=("slots", r * cs, cs),
                                  src=("input", p * cs, cs), tb=0)
                chans[(r, p)].signal(tb=0)
            g.copy(r, dst=("output", base, cs), src=("input", base, cs))
            for p in peers:
                chans[(p, r)].wait(tb=0, arrives=("slots", p * cs, cs))
            for p in peers:
                g.reduce(r, dst=("output", base, cs), src=("slots", p * cs, cs))
            for p in peers:
                chans[(r, p)].put(dst=("output", base, cs),
                                  src=("output", base, cs), tb=0)
                chans[(r, p)].signal(tb=0)
            for p in peers:
                chans[(p, r)].wait(tb=0, arrives=("output", p * cs, cs))
            for p in peers:
                chans[(r, p)].flush(tb=0)
        else:  # ll
            for p in peers:
                chans[(r, p)].put_packets(dst=("ph1", r * cs, cs),
                                          src=("input", p * cs, cs), tb=0)
            g.copy(r, dst=("output", base, cs), src=("input", base, cs))
            for p in peers:
                chans[(p, r)].read_packets(dst=("tmp", p * cs, cs),
                                           src=("ph1", p * cs, cs), tb=0)
            for p in peers:
                g.reduce(r, dst=("output", base, cs), src=("tmp", p * cs, cs))
            for p in peers:
                chans[(r, p)].put_packets(dst=("ph2", r * cs, cs),
                                          src=("output", base, cs), tb=0)
            for p in peers:
                chans[(p, r)].read_packets(dst=("output", p * cs, cs),
                                           src=("ph2", p * cs, cs), tb=0)
    return g


def build_switch_2pa(params: LoweringParams) -> ProgramGraph:
    """Switch-offloaded two-phase all-pairs: per rank, one multimem reduce
    of its owned chunk followed by a multimem broadcast of the result."""
    n, elems = params.num_ranks, params.elems
    if elems % n:
        raise ShapeError(f"switch all-pairs needs elems divisible by {n}")
    cs = elems // n
    g = ProgramGraph("switch_2pa", "allreduce", params)
    g.buffer("input", "input", "all", elems)
    g.buffer("output", "output", "all", elems)
    g.buffer("tmp", "scratch", "all", cs)
    sw = g.switch_channel(list(range(n)))
    for r in range(n):
        sw.reduce(r, dst=("tmp", 0, cs), src=("input", r * cs, cs), tb=0)
        sw.broadcast(r, dst=("output", r * cs, cs), src=("tmp", 0, cs), tb=0)
    return g


def build_allpairs_ag(params: LoweringParams) -> ProgramGraph:
    """All-pairs AllGather over HB memory channels: every rank pushes its
    shard straight into each peer's output."""
    n, cs = params.num_ranks, params.elems
    g = ProgramGraph("allpairs_ag", "allgather", params)
    g.buffer("input", "input", "all", cs)
    g.buffer("output", "output", "all", n * cs)
    chans = {(r, p): g.memory_channel(r, p)
             for r in range(n) for p in range(n) if p != r}
    for r in range(n):
        peers = [p for p in range(n) if p != r]
        g.copy(r, dst=("output", r * cs, cs), src=("input", 0, cs))
        for p in peers:
            chans[(r, p)].put(dst=("output", r * cs, cs), src=("input", 0, cs), tb=0)
            chans[(r, p)].signal(tb=0)
        for p in peers:
            chans[(p, r)].wait(tb=0, arrives=("output", p * cs, cs))
    return g


def build_2ph(params: LoweringParams, gpus_per_node: int,
              variant: str = "hb") -> ProgramGraph:
    """Hierarchical two-phase AllReduce for multi-node topologies.

    "ll": data split into gpus-per-node chunks; local all-pairs
    ReduceScatter, all-pairs cross-node exchange of node partials over port
    channels carrying LL packets (no semaphores end to end), local
    AllGather. Trades extra cross-node volume for fewer sync steps.

    "hb": one chunk per GPU; local all-pairs ReduceScatter by remote reads,
    minimal all-pairs cross-node exchange, cross-node + local AllGather.
    """
    n, elems = params.num_ranks, params.elems
    gpn = gpus_per_node
    if n % gpn:
        raise ShapeError("rank count must be a multiple of gpus_per_node")
    nodes = n // gpn
    if nodes < 2:
        raise TopologyError("hierarchical algorithm needs at least two nodes")
    g = ProgramGraph(f"2ph_{variant}", "allreduce", params)
    g.buffer("input", "input", "all", elems)
    g.buffer("output", "output", "all", elems)

    def rank_of(m, q):
        return m * gpn + q

    if variant == "ll":
        if elems % gpn:
            raise ShapeError(f"hierarchical LL needs elems divisible by {gpn}")
        cs = elems // gpn
        g.buffer("lscr", "scratch", "all", 2 * elems)
        g.buffer("xscr", "scratch", "all", 2 * nodes * cs)
        g.buffer("cscr", "scratch", "all", 2 * elems)
        g.buffer("part", "scratch", "all", cs)
        g.buffer("tot", "scratch", "all", cs)
        g.buffer("tmpl", "scratch", "all", elems)
        g.buffer("tmpx", "scratch", "all", nodes * cs)
        local = {(r, p): g.memory_channel(r, p) for r in range(n)
                 for p in range(n)
                 if p != r and r // gpn == p // gpn}
        cross = {(r, p): g.port_channel(r, p) for r in range(n)
                 for p in range(n)
                 if r // gpn != p // gpn and r % gpn == p % gpn}
        for m in range(nodes):
            for q in range(gpn):
                r = rank_of(m, q)
                lpeers = [rank_of(m, x) for x in range(gpn) if x != q]
                rowpeers = [rank_of(mm, q) for mm in range(nodes) if mm != m]
                # local ReduceScatter over gpn chunks
                for p in lpeers:
                    local[(r, p)].put_packets(
                        dst=("lscr", q * cs, cs),
                        src=("input", (p % gpn) * cs, cs), tb=0)
                g.copy(r, dst=("part", 0, cs), src=("input", q * cs, cs))
                for p in lpeers:
                    local[(p, r)].read_packets(
                        dst=("tmpl", (p % gpn) * cs, cs),
                        src=("lscr", (p % gpn) * cs, cs), tb=0)
                for p in lpeers:
                    g.reduce(r, dst=("part", 0, cs),
                             src=("tmpl", (p % gpn) * cs, cs))
                # cross-node all-pairs exchange of the node partial
                for p in rowpeers:
                    cross[(r, p)].put_packets(dst=("xscr", m * cs, cs),
                                              src=("part", 0, cs), tb=0)
                g.copy(r, dst=("tot", 0, cs), src=("part", 0, cs))
                for p in rowpeers:
                    cross[(p, r)].read_packets(dst=("tmpx", (p // gpn) * cs, cs),
                                               src=("xscr", (p // gpn) * cs, cs),
                                               tb=0)
                for p in rowpeers:
                    g.reduce(r, dst=("tot", 0, cs), src=("tmpx", (p // gpn) * cs, cs))
                # pipelined local AllGather of the finished chunk
                for p in lpeers:
                    local[(r, p)].put_packets(dst=("cscr", q * cs, cs),
                                              src=("tot", 0, cs), tb=0)
                g.copy(r, dst=("output", q * cs, cs), src=("tot", 0, cs))
                for p in lpeers:
                    local[(p, r)].read_packets(
                        dst=("output", (p % gpn) * cs, cs),
                        src=("cscr", (p % gpn) * cs, cs), tb=0)
    else:  # hb
        if elems % n:
            raise ShapeError(f"hierarchical HB needs elems divisible by {n}")
        cs = elems // n
        g.buffer("part", "scratch", "all", nodes * cs)
        g.buffer("xbuf", "scratch", "all", nodes * cs)
        local = {(r, p): g.memory_channel(r, p) for r in range(n)
                 for p in range(n)
                 if p != r and r // gpn == p // gpn}
        cross = {(r, p): g.port_channel(r, p) for r in range(n)
                 for p in range(n)
                 if r // gpn != p // gpn and r % gpn == p % gpn}
        for m in range(nodes):
            for q in range(gpn):
                r = rank_of(m, q)
                lpeers = [rank_of(m, x) for x in range(gpn) if x != q]
                rowpeers = [rank_of(mm, q) for mm in range(nodes) if mm != m]
                # node-local partials for this rank's chunk row, by remote read
                for mm in range(nodes):
                    c = rank_of(mm, q)
                    g.copy(r, dst=("part", mm * cs, cs), src=("input", c * cs, cs))
                    for p in lpeers:
                        local[(r, p)].reduce(dst=("part", mm * cs, cs),
                                             src=("input", c * cs, cs), tb=0)
                # minimal cross-node exchange: send each node its chunk partial
                for p in rowpeers:
                    mm = p // gpn
                    cross[(r, p)].put(dst=("xbuf", m * cs, cs),
                                      src=("part", mm * cs, cs), tb=0)
                    cross[(r, p)].signal(tb=0)
                g.copy(r, dst=("output", r * cs, cs), src=("part", m * cs, cs))
                for p in rowpeers:
                    cross[(p, r)].wait(tb=0, arrives=("xbuf", (p // gpn) * cs, cs))
                for p in rowpeers:
                    g.reduce(r, dst=("output", r * cs, cs),
                             src=("xbuf", (p // gpn) * cs, cs))
                # cross-node AllGather of the finished chunk
                for p in rowpeers:
                    cross[(r, p)].put(dst=("output", r * cs, cs),
                                      src=("output", r * cs, cs), tb=0)
                    cross[(r, p)].signal(tb=0)
                for p in rowpeers:
                    cross[(p, r)].wait(tb=0, arrives=("output", p * cs, cs))
                for p in rowpeers:
                    cross[(r, p)].flush(tb=0)
                # local AllGather of the whole chunk row
                for p in lpeers:
                    for mm in range(nodes):
                        c = rank_of(mm, q)
                        local[(r, p)].put(dst=("output", c * cs, cs),
                                          src=("output", c * cs, cs), tb=0)
                    local[(r, p)].signal(tb=0)
                for p in lpeers:
                    local[(p, r)].wait(
                        tb=0, arrives=("output", (p % gpn) * cs, cs))
    return g


# -- selection -----------------------------------------------------------


KiB = 1024
MiB = 1024 * 1024

DEFAULT_THRESHOLDS = {"small": 32 * KiB, "large": 64 * MiB, "hier": 1 * MiB}


@dataclass(frozen=True)
class AlgoDescriptor:
    name: str
    protocol: str
    channel_type: str
    min_bytes: int
    max_bytes: int | None  # exclusive; None = unbounded
    scope: str  # "single-node" | "multi-node"
    variant: str = ""

    def covers(self, nbytes: int) -> bool:
        return self.min_bytes <= nbytes and (self.max_bytes is None
                                             or nbytes < self.max_bytes)


def default_table(collective: str,
                  thresholds: dict | None = None) -> list[AlgoDescriptor]:
    t = {**DEFAULT_THRESHOLDS, **(thresholds or {})}
    if collective == "allreduce":
        return [
            AlgoDescriptor("1pa", "LL", "memory", 0, t["small"], "single-node"),
            AlgoDescriptor("2pa", "HB", "memory", t["small"], t["large"],
                           "single-node", variant="memory"),
            AlgoDescriptor("2pr", "HB", "port", t["large"], None, "single-node"),
            AlgoDescriptor("2ph", "LL", "port", 0, t["hier"], "multi-node",
                           variant="ll"),
            AlgoDescriptor("2ph", "HB", "port", t["hier"], None, "multi-node",
                           variant="hb"),
        ]
    if collective == "allgather":
        return [
            AlgoDescriptor("allpairs_ag", "HB", "memory", 0, t["hier"], "single-node"),
            AlgoDescriptor("ring_ag", "HB", "port", t["hier"], None, "single-node"),
            AlgoDescriptor("ring_ag", "HB", "port", 0, None, "multi-node"),
        ]
    if collective == "reducescatter":
        return [
            AlgoDescriptor("ring_rs", "HB", "port", 0, None, "single-node"),
            AlgoDescriptor("ring_rs", "HB", "port", 0, None, "multi-node"),
        ]
    raise NoAlgoError(f"unknown collective {collective!r}")


@dataclass
class Selector:
    thresholds: dict = field(default_factory=dict)
    override: str | None = None
    override_variant: str = ""

    def table(self, collective: str) -> list[AlgoDescriptor]:
        return default_table(collective, self.thresholds)

    def select(self, collective: str, nbytes: int, topology) -> AlgoDescriptor:
        scope = "single-node" if topology.num_nodes == 1 else "multi-node"
        rows = [d for d in self.table(collective) if d.scope == scope]
        if self.override:
            for d in rows:
                if d.name == self.override and \
                        (not self.override_variant or d.variant == self.override_variant):
                    return d
            return AlgoDescriptor(self.override, "HB", "port", 0, None, scope,
                                  variant=self.override_variant)
        for d in rows:
            if d.covers(nbytes):
                return d
        raise NoAlgoError(f"no algorithm covers {nbytes} bytes for {collective}")


def select_algorithm(collective: str, nbytes: int, topology,
                     selector: Selector | None = None) -> AlgoDescriptor:
    return (selector or Selector()).select(collective, nbytes, topology)


# -- facade --------------------------------------------------------------


def required_multiple(name: str, n: int, gpus_per_node: int = 1) -> int:
    table = {
        "ring_rs": 2 * n, "2pr": 2 * n, "1pa": 1, "2pa": n, "switch_2pa": n,
        "2ph_ll": gpus_per_node, "2ph_hb": n, "ring_ag": 1, "allpairs_ag": 1,
    }
    if name not in table:
        raise NoAlgoError(f"unknown algorithm {name!r}")
    return table[name]


def build_algo(name: str, params: LoweringParams, world: SimWorld,
               variant: str = "") -> ProgramGraph:
    if name == "ring_rs":
        return build_ring_rs(params)
    if name == "ring_ag":
        return build_ring_ag(params)
    if name == "2pr":
        return build_2pr(params)
    if name == "1pa":
        return build_1pa(params)
    if name == "2pa":
        return build_2pa(params, variant=variant or "memory")
    if name == "switch_2pa":
        return build_switch_2pa(params)
    if name == "allpairs_ag":
        return build_allpairs_ag(params)
    if name == "2ph":
        return build_2ph(params, world.gpus_per_node, variant=variant or "hb")
    raise NoAlgoError(f"unknown algorithm {name!r}")


def _padded(elems: int, multiple: int) -> int:
    return elems if elems % multiple == 0 else elems + multiple - elems % multiple


def collective(kind: str, inputs, world: SimWorld, selector: Selector | None = None,
               dtype: str = "i32", algo: str | None = None, variant: str = "",
               mode: str = "round-robin", seed: int | None = None):
    """Select, build, lower and execute; returns per-rank output arrays.

    Sizes that do not divide evenly are zero-padded up to the algorithm's
    required multiple; AllReduce outputs are truncated back, ReduceScatter
    shards are reported on the padded domain.
    """
    n = world.num_ranks
    np_dtype = NP_DTYPES[dtype]
    arrays = [np.asarray(a, np_dtype) for a in inputs]
    if len(arrays) != n:
        raise ShapeError(f"need {n} inputs, got {len(arrays)}")
    elems = len(arrays[0])
    if any(len(a) != elems for a in arrays):
        raise ShapeError("all ranks must contribute equally-sized inputs")

    sel = selector or Selector()
    if algo:
        name, var = algo, variant
    else:
        nbytes = elems * ELEM_SIZE * (n if kind == "allgather" else 1)
        desc = sel.select(kind, nbytes, world.topology)
        name, var = desc.name, desc.variant

    full_name = name if name != "2ph" else f"2ph_{var or 'hb'}"
    mult = required_multiple(full_name, n, world.gpus_per_node)
    padded = _padded(elems, mult)
    if padded != elems:
        arrays = [np.concatenate([a, np.zeros(padded - elems, np_dtype)])
                  for a in arrays]

    params = LoweringParams(n, padded, dtype=dtype,
                            protocol="LL" if name in ("1pa",) or var == "ll" else "HB")
    graph = build_algo(name, params, world, variant=var)
    plan = lower(graph, params)
    runtime = Runtime(plan, world)
    result = runtime.execute(arrays, mode=mode, seed=seed)
    if kind == "allreduce":
        return [out[:elems] for out in result.outputs]
    return result.outputs
