"""Serializable execution plans.

Wire format: UTF-8 JSON, top-level keys exactly {version, name, collective,
protocol, dtype, num_ranks, buffers, channels, programs}; canonical
serialization sorts keys and carries no insignificant whitespace, so a plan
serializes to byte-identical output every time. Frontend (pre-lowering)
documents add a boolean "lowered": false.

Offsets and sizes are in elements of the plan dtype; packet-space offsets of
LL ops are in payload elements (one packet per element).
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field

from .errors import PlanRefError, PlanSyntaxError, PlanVersionError

COLLECTIVES = ("allreduce", "allgather", "reducescatter", "custom")
PROTOCOLS = ("LL", "HB")
DTYPES = ("i32", "f32")
CHANNEL_TYPES = ("port", "memory", "switch")
BUFFER_KINDS = ("input", "output", "scratch")

OPS = ("put", "put_packets", "put_with_signal", "signal", "wait", "flush",
       "read_packets", "reduce", "reduce_put", "copy", "tb_sync", "device_barrier")

# ops that execute on the channel's source rank / destination rank
SRC_SIDE_OPS = {"put", "put_packets", "put_with_signal", "signal", "flush",
                "reduce_put"}
DST_SIDE_OPS = {"wait", "read_packets"}

_TOP_KEYS = {"version", "name", "collective", "protocol", "dtype", "num_ranks",
             "buffers", "channels", "programs"}


@dataclass(frozen=True)
class BufferDecl:
    id: str
    kind: str
    rank: object  # rank id or "all"
    elems: int


@dataclass(frozen=True)
class ChannelDecl:
    id: str
    type: str
    src: int | None = None
    dst: int | None = None
    ranks: tuple[int, ...] | None = None
    protocol: str | None = None  # memory channels; defaults to plan protocol


@dataclass(frozen=True)
class PlanOp:
    op: str
    chan: str | None = None
    src: tuple[str, int, int] | None = None  # (buffer, offset, size) in elems
    dst: tuple[str, int, int] | None = None
    src2: tuple[str, int, int] | None = None  # second local operand (reduce_put)
    flag: int | None = None
    arrives: tuple[str, int, int] | None = None  # data range a wait stands for
    tb_group: tuple[int, ...] | None = None


@dataclass(frozen=True)
class ThreadBlockProgram:
    rank: int
    tb: int
    ops: tuple[PlanOp, ...]


@dataclass
class ExecutionPlan:
    version: int
    name: str
    collective: str
    protocol: str
    dtype: str
    num_ranks: int
    buffers: list[BufferDecl]
    channels: list[ChannelDecl]
    programs: list[ThreadBlockProgram]
    lowered: bool = True

    def buffer(self, buf_id: str) -> BufferDecl:
        for b in self.buffers:
            if b.id == buf_id:
                return b
        raise PlanRefError(f"unknown buffer {buf_id!r}")

    def channel(self, chan_id: str) -> ChannelDecl:
        for c in self.channels:
            if c.id == chan_id:
                return c
        raise PlanRefError(f"unknown channel {chan_id!r}")

    def op_count(self) -> int:
        return sum(len(p.ops) for p in self.programs)


@dataclass(frozen=True)
class Diagnostic:
    severity: str  # "error" | "warning"
    code: str
    message: str

    def __str__(self):
        return f"{self.severity}: [{self.code}] {self.message}"


# -- serialization -----------------------------------------------------------


def _range_to_json(rng):
    return None if rng is None else [rng[0], rng[1], rng[2]]


def _op_to_json(op: PlanOp) -> dict:
    out = {"op": op.op}
    if op.chan is not None:
        out["chan"] = op.chan
    for key in ("src", "dst", "src2", "arrives"):
        val = getattr(op, key)
        if val is not None:
            out[key] = _range_to_json(val)
    if op.flag is not None:
        out["flag"] = op.flag
    if op.tb_group is not None:
        out["tb_group"] = list(op.tb_group)
    return out


def serialize_plan(plan: ExecutionPlan) -> bytes:
    doc = {
        "version": plan.version,
        "name": plan.name,
        "collective": plan.collective,
        "protocol": plan.protocol,
        "dtype": plan.dtype,
        "num_ranks": plan.num_ranks,
        "buffers": [
            {"id": b.id, "kind": b.kind, "rank": b.rank, "elems": b.elems}
            for b in plan.buffers
        ],
        "channels": [_chan_to_json(c) for c in plan.channels],
        "programs": [
            {"rank": p.rank, "tb": p.tb, "ops": [_op_to_json(o) for o in p.ops]}
            for p in plan.programs
        ],
    }
    if not plan.lowered:
        doc["lowered"] = False
    return json.dumps(doc, sort_keys=True, separators=(",", ":")).encode()


def _chan_to_json(c: ChannelDecl) -> dict:
    out = {"id": c.id, "type": c.type}
    if c.type == "switch":
        out["ranks"] = list(c.ranks)
    else:
        out["src"] = c.src
        out["dst"] = c.dst
    if c.protocol is not None:
        out["protocol"] = c.protocol
    return out


# -- parsing -----------------------------------------------------------------


def _need(obj: dict, key: str, where: str):
    if key not in obj:
        raise PlanSyntaxError(f"{where}: missing key {key!r}")
    return obj[key]


def _as_range(val, where: str):
    if val is None:
        return None
    if (not isinstance(val, list) or len(val) != 3
            or not all(isinstance(x, (int, str)) for x in val)
            or not isinstance(val[1], int) or not isinstance(val[2], int)):
        raise PlanSyntaxError(f"{where}: range must be [buffer, offset, size]")
    return (val[0], val[1], val[2])


def _parse_op(obj: dict, where: str) -> PlanOp:
    if not isinstance(obj, dict) or "op" not in obj:
        raise PlanSyntaxError(f"{where}: op entry must be an object with 'op'")
    name = obj["op"]
    if name not in OPS:
        raise PlanSyntaxError(f"{where}: unknown op {name!r}")
    allowed = {"op", "chan", "src", "dst", "src2", "flag", "arrives", "tb_group"}
    extra = set(obj) - allowed
    if extra:
        raise PlanSyntaxError(f"{where}: unknown op keys {sorted(extra)}")
    tb_group = obj.get("tb_group")
    return PlanOp(
        op=name,
        chan=obj.get("chan"),
        src=_as_range(obj.get("src"), where),
        dst=_as_range(obj.get("dst"), where),
        src2=_as_range(obj.get("src2"), where),
        flag=obj.get("flag"),
        arrives=_as_range(obj.get("arrives"), where),
        tb_group=tuple(tb_group) if tb_group is not None else None,
    )


def parse_plan(document: bytes) -> ExecutionPlan:
    try:
        doc = json.loads(document)
    except json.JSONDecodeError as exc:
        raise PlanSyntaxError(f"invalid JSON: {exc}") from exc
    if not isinstance(doc, dict):
        raise PlanSyntaxError("top level must be an object")
    keys = set(doc)
    if keys - (_TOP_KEYS | {"lowered"}):
        raise PlanSyntaxError(f"unknown top-level keys {sorted(keys - _TOP_KEYS - {'lowered'})}")
    if _TOP_KEYS - keys:
        raise PlanSyntaxError(f"missing top-level keys {sorted(_TOP_KEYS - keys)}")
    if doc["version"] != 1:
        raise PlanVersionError(f"unsupported plan version {doc['version']!r}")
    for key, domain in (("collective", COLLECTIVES), ("protocol", PROTOCOLS),
                        ("dtype", DTYPES)):
        if doc[key] not in domain:
            raise PlanSyntaxError(f"{key} must be one of {domain}, got {doc[key]!r}")
    if not isinstance(doc["num_ranks"], int) or doc["num_ranks"] < 1:
        raise PlanSyntaxError("num_ranks must be a positive integer")

    buffers = []
    for i, b in enumerate(doc["buffers"]):
        where = f"buffers[{i}]"
        buffers.append(BufferDecl(
            id=_need(b, "id", where), kind=_need(b, "kind", where),
            rank=_need(b, "rank", where), elems=_need(b, "elems", where)))
        if buffers[-1].kind not in BUFFER_KINDS:
            raise PlanSyntaxError(f"{where}: unknown kind {buffers[-1].kind!r}")

    channels = []
    for i, c in enumerate(doc["channels"]):
        where = f"channels[{i}]"
        ctype = _need(c, "type", where)
        if ctype not in CHANNEL_TYPES:
            raise PlanSyntaxError(f"{where}: unknown channel type {ctype!r}")
        if ctype == "switch":
            channels.append(ChannelDecl(id=_need(c, "id", where), type=ctype,
                                        ranks=tuple(_need(c, "ranks", where)),
                                        protocol=c.get("protocol")))
        else:
            channels.append(ChannelDecl(id=_need(c, "id", where), type=ctype,
                                        src=_need(c, "src", where),
                                        dst=_need(c, "dst", where),
                                        protocol=c.get("protocol")))

    programs = []
    for i, p in enumerate(doc["programs"]):
        where = f"programs[{i}]"
        ops = tuple(_parse_op(o, f"{where}.ops[{j}]")
                    for j, o in enumerate(_need(p, "ops", where)))
        programs.append(ThreadBlockProgram(rank=_need(p, "rank", where),
                                           tb=_need(p, "tb", where), ops=ops))

    plan = ExecutionPlan(
        version=1, name=doc["name"], collective=doc["collective"],
        protocol=doc["protocol"], dtype=doc["dtype"], num_ranks=doc["num_ranks"],
        buffers=buffers, channels=channels, programs=programs,
        lowered=doc.get("lowered", True),
    )
    _resolve_refs(plan)
    return plan


def _resolve_refs(plan: ExecutionPlan) -> None:
    buf_ids = {b.id for b in plan.buffers}
    chan_ids = {c.id for c in plan.channels}
    if len(buf_ids) != len(plan.buffers):
        raise PlanRefError("duplicate buffer ids")
    if len(chan_ids) != len(plan.channels):
        raise PlanRefError("duplicate channel ids")
    for pi, prog in enumerate(plan.programs):
        for oi, op in enumerate(prog.ops):
            where = f"programs[{pi}].ops[{oi}]"
            if op.chan is not None and op.chan not in chan_ids:
                raise PlanRefError(f"{where}: channel {op.chan!r} not declared")
            for rng in (op.src, op.dst, op.src2, op.arrives):
                if rng is not None and rng[0] not in buf_ids:
                    raise PlanRefError(f"{where}: buffer {rng[0]!r} not declared")


# -- validation --------------------------------------------------------------

_NEEDS_CHAN = {"put", "put_packets", "put_with_signal", "signal", "wait",
               "flush", "read_packets", "reduce_put"}
_LL_ONLY = {"put_packets", "read_packets"}
_HB_ONLY = {"signal", "wait", "put", "put_with_signal", "reduce_put"}


def validate_plan(plan: ExecutionPlan) -> list[Diagnostic]:
    """Static checks; an empty list means the plan is well-formed."""
    diags: list[Diagnostic] = []
    err = lambda code, msg: diags.append(Diagnostic("error", code, msg))
    warn = lambda code, msg: diags.append(Diagnostic("warning", code, msg))

    buf_by_id = {b.id: b for b in plan.buffers}
    chan_by_id = {c.id: c for c in plan.channels}

    for b in plan.buffers:
        if b.elems <= 0:
            err("buffer-size", f"buffer {b.id!r} has non-positive elems")
        if b.rank != "all" and not (isinstance(b.rank, int) and 0 <= b.rank < plan.num_ranks):
            err("buffer-rank", f"buffer {b.id!r} rank {b.rank!r} out of range")

    for c in plan.channels:
        if c.type == "switch":
            if not c.ranks:
                err("channel-ranks", f"switch channel {c.id!r} needs >= 1 rank")
        else:
            if c.src == c.dst:
                err("channel-loop", f"channel {c.id!r} has src == dst")
            for r in (c.src, c.dst):
                if not (isinstance(r, int) and 0 <= r < plan.num_ranks):
                    err("channel-rank", f"channel {c.id!r} rank {r!r} out of range")
        if c.type == "memory":
            proto = c.protocol or plan.protocol
            if proto != plan.protocol:
                err("protocol-mix",
                    f"channel {c.id!r} uses {proto} in a {plan.protocol} plan; "
                    "all channels within a plan must share one protocol")

    def buffer_rank_ok(buf: BufferDecl, rank: int) -> bool:
        return buf.rank == "all" or buf.rank == rank

    def check_range(where: str, rng, rank: int, packet_space: bool) -> None:
        buf = buf_by_id.get(rng[0])
        if buf is None:
            return
        _, off, size = rng
        limit = buf.elems // 2 if packet_space else buf.elems
        if off < 0 or size < 0 or off + size > limit:
            err("bounds", f"{where}: [{off},{off + size}) exceeds "
                          f"{'packet capacity' if packet_space else 'elems'} {limit} "
                          f"of buffer {rng[0]!r}")
        if not buffer_rank_ok(buf, rank):
            err("buffer-rank", f"{where}: buffer {rng[0]!r} not present on rank {rank}")

    signals: dict[str, int] = {}
    waits: dict[str, int] = {}
    ll_puts: dict[str, list[tuple]] = {}

    for pi, prog in enumerate(plan.programs):
        if not (0 <= prog.rank < plan.num_ranks):
            err("program-rank", f"programs[{pi}] rank {prog.rank} out of range")
            continue
        for oi, op in enumerate(prog.ops):
            where = f"programs[{pi}].ops[{oi}]"
            chan = chan_by_id.get(op.chan) if op.chan else None
            if op.op in _NEEDS_CHAN and chan is None:
                err("op-fields", f"{where}: {op.op} requires a channel")
                continue
            if op.op == "flush" and chan is not None and chan.type != "port":
                err("op-fields", f"{where}: flush requires a port channel")
            if plan.lowered:
                if op.op in _LL_ONLY and plan.protocol != "LL":
                    err("protocol-mix", f"{where}: {op.op} requires the LL protocol")
                if op.op in _HB_ONLY and chan is not None and chan.type == "memory" \
                        and plan.protocol != "HB":
                    err("protocol-mix", f"{where}: {op.op} on a memory channel "
                                        "requires the HB protocol")
            if op.op in ("put", "put_packets", "put_with_signal", "copy", "reduce"):
                if op.src is None or op.dst is None:
                    err("op-fields", f"{where}: {op.op} needs src and dst")
                    continue
            if op.op == "reduce_put" and (op.src is None or op.dst is None or op.src2 is None):
                err("op-fields", f"{where}: reduce_put needs src, src2 and dst")
                continue
            if op.op == "read_packets" and (op.src is None or op.dst is None):
                err("op-fields", f"{where}: read_packets needs src and dst")
                continue
            if op.op in ("put_packets", "read_packets") and plan.lowered and not op.flag:
                err("op-fields", f"{where}: {op.op} needs a nonzero flag")

            src_rank = chan.src if chan is not None and chan.type != "switch" else prog.rank
            dst_rank = chan.dst if chan is not None and chan.type != "switch" else prog.rank
            if chan is not None and chan.type != "switch":
                if op.op in SRC_SIDE_OPS and prog.rank != chan.src:
                    err("op-rank", f"{where}: {op.op} must run on channel src rank {chan.src}")
                if op.op in DST_SIDE_OPS and prog.rank != chan.dst:
                    err("op-rank", f"{where}: {op.op} must run on channel dst rank {chan.dst}")

            if op.op in ("put", "put_with_signal"):
                check_range(where, op.src, src_rank, False)
                check_range(where, op.dst, dst_rank, False)
            elif op.op == "put_packets":
                check_range(where, op.src, src_rank, False)
                check_range(where, op.dst, dst_rank, True)
                if op.flag:
                    ll_puts.setdefault(op.chan, []).append((op.dst, op.flag, where))
            elif op.op == "read_packets":
                check_range(where, op.src, prog.rank, True)
                check_range(where, op.dst, prog.rank, False)
            elif op.op == "copy" or op.op == "reduce":
                # chan present means the source is read from the peer rank
                peer = chan.dst if chan is not None and chan.type != "switch" else prog.rank
                if op.op == "reduce" and chan is not None and chan.type == "switch":
                    for r in chan.ranks:
                        check_range(where, op.src, r, False)
                else:
                    check_range(where, op.src, peer, False)
                check_range(where, op.dst, prog.rank, False)
            elif op.op == "reduce_put":
                check_range(where, op.src, prog.rank, False)
                check_range(where, op.src2, prog.rank, False)
                check_range(where, op.dst, dst_rank, False)

            if op.op in ("signal", "put_with_signal"):
                signals[op.chan] = signals.get(op.chan, 0) + 1
            elif op.op == "wait":
                waits[op.chan] = waits.get(op.chan, 0) + 1

    for chan_id in sorted(set(signals) | set(waits)):
        s, w = signals.get(chan_id, 0), waits.get(chan_id, 0)
        if s != w:
            warn("sync-imbalance",
                 f"channel {chan_id!r}: {s} signals vs {w} waits")

    for chan_id, puts in ll_puts.items():
        for i in range(len(puts)):
            for j in range(i + 1, len(puts)):
                (b1, o1, s1), f1, w1 = puts[i]
                (b2, o2, s2), f2, w2 = puts[j]
                if b1 == b2 and o1 < o2 + s2 and o2 < o1 + s1 and f1 == f2:
                    err("flag-reuse",
                        f"{w2}: packet range of buffer {b1!r} reused with flag {f1}; "
                        "scratch reuse requires a fresh flag")
    return diags
