"""Alpha-beta timing over execution plans.

simulate_timed is a discrete-event replay of a plan's synchronization
structure (which the functional executor must already have verified
race-free): per-context ops serialize, every transfer holds its directed
link exclusively for alpha + bytes/beta, inter-node transfers additionally
serialize on per-rank NICs, semaphore waits complete when the matching
increment's event fires, and fixed overheads model sync ops and the proxy
hop. Because the replay is structural, gigabyte-scale sweeps cost the same
as byte-scale ones.
"""

from __future__ import annotations

import io
from dataclasses import dataclass, field

from .collectives import Selector, build_algo, required_multiple
from .dtypes import ELEM_SIZE
from .errors import BadTimeError, ShapeError
from .lowering import LoweringParams, lower
from .plan import ExecutionPlan
from .world import INTER, INTRA, SimWorld


@dataclass
class LinkParams:
    alpha: float  # seconds
    beta: float  # bytes / second

    def __post_init__(self):
        if self.alpha < 0 or self.beta <= 0:
            raise BadTimeError("alpha must be >= 0 and beta positive")


@dataclass
class CostParams:
    intra: LinkParams = field(default_factory=lambda: LinkParams(829e-9, 397.5e9))
    inter: LinkParams = field(default_factory=lambda: LinkParams(4.89e-6, 48.94e9))
    tb_sync: float = 200e-9
    sem_op: float = 100e-9
    proxy_hop: float = 500e-9

    def link(self, link_class: str) -> LinkParams:
        return self.intra if link_class == INTRA else self.inter


def transfer_time(link_class: str, nbytes: int, p: CostParams) -> float:
    """Standard alpha-beta transfer model."""
    lp = p.link(link_class)
    return lp.alpha + nbytes / lp.beta


def algobw(nbytes: int, latency: float) -> float:
    """Algorithm bandwidth: message size divided by end-to-end latency."""
    if latency <= 0:
        raise BadTimeError(f"latency must be positive, got {latency}")
    return nbytes / latency


@dataclass(frozen=True)
class TimedEvent:
    ctx: str
    label: str
    start: float
    end: float
    link: tuple | None = None  # (src, dst, link_class)
    nbytes: int = 0


@dataclass
class TimedTrace:
    events: list
    makespan: float

    def link_bytes(self, link_class: str | None = None) -> int:
        return sum(e.nbytes for e in self.events
                   if e.link is not None
                   and (link_class is None or e.link[2] == link_class))


class _DES:
    def __init__(self, plan: ExecutionPlan, world: SimWorld, p: CostParams):
        self.plan = plan
        self.world = world
        self.p = p
        self.events: list[TimedEvent] = []
        self.link_free: dict[tuple, float] = {}
        self.nic_out: dict[int, float] = {}
        self.nic_in: dict[int, float] = {}
        self.sem_times: dict[str, list[float]] = {c.id: [] for c in plan.channels}
        self.queues: dict[str, list] = {c.id: [] for c in plan.channels
                                        if c.type == "port"}
        self.completions: dict[str, list[float]] = {c.id: [] for c in plan.channels
                                                    if c.type == "port"}
        self.chan = {c.id: c for c in plan.channels}
        # packet availability: (chan, flag) -> end of the producing transfer
        self.packet_ready: dict[tuple, float] = {}
        self.barrier_arrivals: dict[tuple, dict[int, float]] = {}

    # -- resources -------------------------------------------------------

    def _occupy_link(self, src: int, dst: int, nbytes: int, ready: float):
        cls = self.world.topology.link_class(src, dst)
        dur = transfer_time(cls, nbytes, self.p)
        start = max(ready, self.link_free.get((src, dst), 0.0))
        if cls == INTER:
            start = max(start, self.nic_out.get(src, 0.0), self.nic_in.get(dst, 0.0))
        end = start + dur
        self.link_free[(src, dst)] = end
        if cls == INTER:
            self.nic_out[src] = end
            self.nic_in[dst] = end
        return start, end, (src, dst, cls)

    def _emit(self, ctx, label, start, end, link=None, nbytes=0):
        self.events.append(TimedEvent(ctx, label, start, end, link, nbytes))

    # -- main loop ---------------------------------------------------------

    def run(self) -> TimedTrace:
        plan = self.plan
        blocks = {}
        for prog in plan.programs:
            blocks[f"r{prog.rank}.tb{prog.tb}"] = {
                "prog": prog, "pc": 0, "ready": 0.0,
                "waits": {}, "last_ticket": {}, "barrier_counts": {}}
        proxies = {f"proxy.{cid}": {"chan": cid, "pc": 0, "ready": 0.0}
                   for cid in self.queues}
        tickets = {cid: 0 for cid in self.queues}

        def block_can_run(st):
            return st["pc"] < len(st["prog"].ops)

        progress = True
        while progress:
            progress = False
            candidates = []
            for name, st in sorted(blocks.items()):
                if block_can_run(st):
                    candidates.append((st["ready"], 0, name))
            for name, st in sorted(proxies.items()):
                if st["pc"] < len(self.queues[st["chan"]]):
                    candidates.append((st["ready"], 1, name))
            for _, kind, name in sorted(candidates):
                if kind == 0:
                    ok = self._advance_block(name, blocks[name], tickets)
                else:
                    ok = self._advance_proxy(name, proxies[name])
                if ok:
                    progress = True
                    break
        stuck = [n for n, st in blocks.items() if block_can_run(st)]
        if stuck:
            raise ShapeError(f"timed replay stalled at contexts {stuck}; "
                             "was the plan verified in functional mode?")
        makespan = max((e.end for e in self.events), default=0.0)
        return TimedTrace(self.events, makespan)

    # -- block ops ---------------------------------------------------------

    def _advance_block(self, name, st, tickets) -> bool:
        plan, p = self.plan, self.p
        prog = st["prog"]
        op = prog.ops[st["pc"]]
        ready = st["ready"]
        rank = prog.rank
        decl = self.chan.get(op.chan) if op.chan else None
        elems = op.src[2] if op.src else (op.dst[2] if op.dst else 0)
        nbytes = elems * ELEM_SIZE
        label = f"{op.op}@{name}"

        def done(end, start=None, link=None, bts=0):
            self._emit(name, label, ready if start is None else start, end, link, bts)
            st["ready"] = end
            st["pc"] += 1
            return True

        kind = op.op
        if kind == "tb_sync":
            return done(ready + p.tb_sync)
        if kind == "device_barrier":
            members = op.tb_group or tuple(q.tb for q in plan.programs
                                           if q.rank == rank)
            key = (rank, members, st["barrier_counts"].get((rank, members), 0))
            arr = self.barrier_arrivals.setdefault(key, {})
            newly_arrived = prog.tb not in arr
            if newly_arrived:
                arr[prog.tb] = ready + p.tb_sync
            if len(arr) < len(members):
                return newly_arrived  # arriving counts as progress exactly once
            st["barrier_counts"][(rank, members)] = key[2] + 1
            return done(max(arr.values()))
        if kind == "signal":
            if decl.type == "port":
                self.queues[op.chan].append(("signal", ready, 0, None))
                tickets[op.chan] += 1
                st["last_ticket"][op.chan] = tickets[op.chan] - 1
                return done(ready)
            end = ready + p.sem_op
            self.sem_times[op.chan].append(end)
            return done(end)
        if kind == "wait":
            k = st["waits"].get(op.chan, 0)
            times = self.sem_times[op.chan]
            if len(times) <= k:
                return False
            st["waits"][op.chan] = k + 1
            return done(max(ready, times[k]) + p.sem_op)
        if kind == "flush":
            if decl.type != "port":
                return done(ready)
            last = st["last_ticket"].get(op.chan, -1)
            comps = self.completions[op.chan]
            if len(comps) <= last:
                return False
            end = max([ready] + comps[:last + 1])
            return done(end)
        if kind in ("put", "put_with_signal"):
            if decl.type == "port":
                self.queues[op.chan].append(
                    (kind, ready, nbytes, (decl.src, decl.dst)))
                tickets[op.chan] += 1
                st["last_ticket"][op.chan] = tickets[op.chan] - 1
                return done(ready)
            start, end, link = self._occupy_link(decl.src, decl.dst, nbytes, ready)
            if kind == "put_with_signal":
                end += p.sem_op
                self.sem_times[op.chan].append(end)
            return done(end, start=start, link=link, bts=nbytes)
        if kind == "put_packets":
            wire = 2 * nbytes  # each 4-byte element rides an 8-byte packet
            if decl.type == "port":
                self.queues[op.chan].append(("put_packets", ready, wire,
                                          (decl.src, decl.dst, op.dst[0], op.flag)))
                tickets[op.chan] += 1
                st["last_ticket"][op.chan] = tickets[op.chan] - 1
                return done(ready)
            start, end, link = self._occupy_link(decl.src, decl.dst, wire, ready)
            self.packet_ready[(op.chan, op.dst[0], op.flag)] = end
            return done(end, start=start, link=link, bts=wire)
        if kind == "read_packets":
            dep = self.packet_ready.get((op.chan, op.src[0], op.flag))
            if dep is None:
                return False
            start = max(ready, dep)
            return done(start + nbytes / p.intra.beta, start=start)
        if kind == "reduce":
            if decl is None:
                return done(ready + nbytes / p.intra.beta)
            if decl.type == "switch":
                return done(ready + p.intra.alpha + nbytes / p.intra.beta)
            # remote read: data flows dst -> src of the channel
            start, end, link = self._occupy_link(decl.dst, decl.src, nbytes, ready)
            return done(end, start=start, link=link, bts=nbytes)
        if kind == "copy":
            if decl is None:
                return done(ready + nbytes / p.intra.beta)
            if decl.type == "switch":
                return done(ready + p.intra.alpha + nbytes / p.intra.beta)
            start, end, link = self._occupy_link(decl.dst, decl.src, nbytes, ready)
            return done(end, start=start, link=link, bts=nbytes)
        if kind == "reduce_put":
            start, end, link = self._occupy_link(decl.src, decl.dst, nbytes, ready)
            return done(end, start=start, link=link, bts=nbytes)
        raise ShapeError(f"timed replay cannot interpret op {kind!r}")

    # -- proxy requests ------------------------------------------------------

    def _advance_proxy(self, name, st) -> bool:
        p = self.p
        cid = st["chan"]
        req = self.queues[cid][st["pc"]]
        kind, push_end, nbytes, extra = req
        start = max(st["ready"], push_end) + p.proxy_hop
        if kind == "signal":
            end = start + p.sem_op
            self.sem_times[cid].append(end)
            self._emit(name, f"signal#{st['pc']}", start, end)
        else:
            src, dst = extra[0], extra[1]
            t0, end, link = self._occupy_link(src, dst, nbytes, start)
            self._emit(name, f"{kind}#{st['pc']}", t0, end, link, nbytes)
            if kind == "put_with_signal":
                end += p.sem_op
                self.sem_times[cid].append(end)
            if kind == "put_packets":
                self.packet_ready[(cid, extra[2], extra[3])] = end
        self.completions[cid].append(end)
        st["ready"] = end
        st["pc"] += 1
        return True


def simulate_timed(plan: ExecutionPlan, world: SimWorld, p: CostParams) -> TimedTrace:
    """Discrete-event timing of a (functionally race-free) plan."""
    return _DES(plan, world, p).run()


# -- benchmark harness ---------------------------------------------------------


@dataclass(frozen=True)
class BenchRow:
    algo: str
    collective: str
    nbytes: int
    latency_us: float
    algobw_gbps: float
    selected: bool


SINGLE_NODE_VARIANTS = [("1pa", ""), ("2pa", "ll"), ("2pa", "memory"),
                        ("2pa", "port"), ("switch_2pa", ""), ("2pr", "")]
MULTI_NODE_VARIANTS = [("2pa", "port"), ("2ph", "ll"), ("2ph", "hb"), ("2pr", "")]


def timed_latency(name: str, variant: str, nbytes: int, world: SimWorld,
                  p: CostParams) -> float:
    elems = max(1, nbytes // ELEM_SIZE)
    mult = required_multiple(name if name != "2ph" else f"2ph_{variant or 'hb'}",
                             world.num_ranks, world.gpus_per_node)
    if elems % mult:
        elems += mult - elems % mult
    protocol = "LL" if name == "1pa" or variant == "ll" else "HB"
    params = LoweringParams(world.num_ranks, elems, "i32", protocol)
    plan = lower(build_algo(name, params, world, variant=variant), params)
    return simulate_timed(plan, world, p).makespan


def run_benchmark(collective: str, sizes: list[int], world: SimWorld,
                  p: CostParams, selector: Selector | None = None) -> list[BenchRow]:
    """One row per (algorithm variant, size); the selector's pick is marked."""
    sel = selector or Selector()
    multi = world.topology.num_nodes > 1
    variants = MULTI_NODE_VARIANTS if multi else SINGLE_NODE_VARIANTS
    rows = []
    for name, variant in variants:
        for nbytes in sorted(sizes):
            latency = timed_latency(name, variant, nbytes, world, p)
            pick = sel.select(collective, nbytes, world.topology)
            chosen = pick.name == name and (pick.variant or "") == (variant or "")
            rows.append(BenchRow(
                algo=name if not variant else f"{name}_{variant}",
                collective=collective, nbytes=nbytes,
                latency_us=latency * 1e6,
                algobw_gbps=algobw(nbytes, latency) / 1e9,
                selected=chosen))
    return rows


def rows_to_csv(rows: list[BenchRow]) -> str:
    out = io.StringIO()
    out.write("algo,collective,bytes,latency_us,algobw_gbps,selected\n")
    for r in rows:
        out.write(f"{r.algo},{r.collective},{r.nbytes},{r.latency_us:.6f},"
                  f"{r.algobw_gbps:.6f},{int(r.selected)}\n")
    return out.getvalue()
