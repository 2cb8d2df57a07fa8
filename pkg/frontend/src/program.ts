/**
 * Recording DSL for communication programs.
 *
 * A Program gives a global view of every rank and thread block: buffers are
 * declared once, channels connect rank pairs (or a rank set, for switch
 * channels), and channel methods record operations into per-(rank, tb)
 * streams. Chunks are slices of a Buffer instance on a concrete rank.
 *
 * The frontend performs no lowering passes; emit() serializes the recorded
 * streams as a pre-lowering document (lowered: false) that the executor-side
 * toolchain lowers and runs.
 */

export type Protocol = "LL" | "HB";
export type Collective = "allreduce" | "allgather" | "reducescatter" | "custom";
export type BufferKind = "input" | "output" | "scratch";

export interface Chunk {
  buffer: string;
  rank: number | "all";
  off: number;
  size: number;
}

export type Range = [string, number, number];

export interface OpRecord {
  op: string;
  chan?: string;
  src?: Range;
  dst?: Range;
  src2?: Range;
  arrives?: Range;
  flag?: number;
  tb_group?: number[];
}

export class DslError extends Error {}

export class BufferHandle {
  constructor(
    private readonly program: Program,
    readonly id: string,
    readonly kind: BufferKind,
    readonly rank: number | "all",
    readonly elems: number,
  ) {}

  /** The buffer instance on one rank; slice it to form chunks. */
  at(rank: number): BufferInstance {
    if (this.rank !== "all" && this.rank !== rank) {
      throw new DslError(`buffer ${this.id} lives on rank ${this.rank}, not ${rank}`);
    }
    return new BufferInstance(this, rank);
  }
}

export class BufferInstance {
  constructor(readonly handle: BufferHandle, readonly rank: number) {}

  slice(begin: number, end: number): Chunk {
    if (begin < 0 || end < begin || end > this.handle.elems) {
      throw new DslError(
        `slice [${begin},${end}) outside buffer ${this.handle.id} (${this.handle.elems} elems)`);
    }
    return { buffer: this.handle.id, rank: this.rank, off: begin, size: end - begin };
  }

  whole(): Chunk {
    return this.slice(0, this.handle.elems);
  }
}

function asRange(c: Chunk): Range {
  return [c.buffer, c.off, c.size];
}

abstract class ChannelBase {
  constructor(protected readonly program: Program, readonly id: string) {}

  protected record(rank: number, tb: number, op: OpRecord): void {
    this.program.record(rank, tb, op);
  }
}

export class PortChannel extends ChannelBase {
  constructor(program: Program, id: string, readonly srcRank: number,
              readonly dstRank: number) {
    super(program, id);
  }

  put(dst: Chunk, src: Chunk, tb = 0): void {
    this.program.checkSide(src, this.srcRank, `put on ${this.id}`);
    this.program.checkSide(dst, this.dstRank, `put on ${this.id}`);
    if (dst.size !== src.size) throw new DslError("put chunks must have equal size");
    this.record(this.srcRank, tb, { op: "put", chan: this.id, src: asRange(src), dst: asRange(dst) });
  }

  signal(tb = 0): void {
    this.record(this.srcRank, tb, { op: "signal", chan: this.id });
  }

  wait(tb = 0, arrives?: Chunk): void {
    this.record(this.dstRank, tb, {
      op: "wait", chan: this.id,
      ...(arrives ? { arrives: asRange(arrives) } : {}),
    });
  }

  flush(tb = 0): void {
    this.record(this.srcRank, tb, { op: "flush", chan: this.id });
  }

  /** LL packets through the port path; the plan-side lowering assigns flags. */
  putPackets(dst: Chunk, src: Chunk, tb = 0): void {
    this.program.requireProtocol("LL", `put_packets on ${this.id}`);
    this.program.checkSide(src, this.srcRank, `put_packets on ${this.id}`);
    this.program.checkSide(dst, this.dstRank, `put_packets on ${this.id}`, true);
    this.record(this.srcRank, tb,
      { op: "put_packets", chan: this.id, src: asRange(src), dst: asRange(dst) });
  }

  readPackets(dst: Chunk, src: Chunk, tb = 0): void {
    this.program.requireProtocol("LL", `read_packets on ${this.id}`);
    this.program.checkSide(dst, this.dstRank, `read_packets on ${this.id}`);
    this.program.checkSide(src, this.dstRank, `read_packets on ${this.id}`, true);
    this.record(this.dstRank, tb,
      { op: "read_packets", chan: this.id, src: asRange(src), dst: asRange(dst) });
  }
}

export class MemoryChannel extends ChannelBase {
  constructor(program: Program, id: string, readonly srcRank: number,
              readonly dstRank: number) {
    super(program, id);
  }

  put(dst: Chunk, src: Chunk, tb = 0, tbGroup?: number[]): void {
    this.program.requireProtocol("HB", `put on ${this.id}`);
    this.program.checkSide(src, this.srcRank, `put on ${this.id}`);
    this.program.checkSide(dst, this.dstRank, `put on ${this.id}`);
    if (dst.size !== src.size) throw new DslError("put chunks must have equal size");
    this.emitMaybeGrouped(tbGroup, tb,
      { op: "put", chan: this.id, src: asRange(src), dst: asRange(dst) });
  }

  putPackets(dst: Chunk, src: Chunk, tb = 0, tbGroup?: number[]): void {
    this.program.requireProtocol("LL", `put_packets on ${this.id}`);
    this.program.checkSide(src, this.srcRank, `put_packets on ${this.id}`);
    this.program.checkSide(dst, this.dstRank, `put_packets on ${this.id}`, true);
    this.emitMaybeGrouped(tbGroup, tb,
      { op: "put_packets", chan: this.id, src: asRange(src), dst: asRange(dst) });
  }

  readPackets(dst: Chunk, src: Chunk, tb = 0): void {
    this.program.requireProtocol("LL", `read_packets on ${this.id}`);
    this.program.checkSide(dst, this.dstRank, `read_packets on ${this.id}`);
    this.program.checkSide(src, this.dstRank, `read_packets on ${this.id}`, true);
    this.record(this.dstRank, tb,
      { op: "read_packets", chan: this.id, src: asRange(src), dst: asRange(dst) });
  }

  /** Accumulate the peer's chunk into a local one (remote read). */
  reduce(dst: Chunk, src: Chunk, tb = 0): void {
    this.program.requireProtocol("HB", `reduce on ${this.id}`);
    this.program.checkSide(dst, this.srcRank, `reduce on ${this.id}`);
    this.program.checkSide(src, this.dstRank, `reduce on ${this.id}`);
    this.record(this.srcRank, tb,
      { op: "reduce", chan: this.id, src: asRange(src), dst: asRange(dst) });
  }

  signal(tb = 0): void {
    this.program.requireProtocol("HB", `signal on ${this.id}`);
    this.record(this.srcRank, tb, { op: "signal", chan: this.id });
  }

  wait(tb = 0, arrives?: Chunk): void {
    this.program.requireProtocol("HB", `wait on ${this.id}`);
    this.record(this.dstRank, tb, {
      op: "wait", chan: this.id,
      ...(arrives ? { arrives: asRange(arrives) } : {}),
    });
  }

  private emitMaybeGrouped(tbGroup: number[] | undefined, tb: number, op: OpRecord): void {
    if (!tbGroup || tbGroup.length === 0) {
      this.record(this.srcRank, tb, op);
      return;
    }
    // even partitioning across the group, remainder to the last block
    const k = tbGroup.length;
    const src = op.src!;
    const dst = op.dst!;
    const share = Math.floor(src[2] / k);
    tbGroup.forEach((member, i) => {
      const lo = i * share;
      const size = i === k - 1 ? src[2] - lo : share;
      this.record(this.srcRank, member, {
        ...op,
        src: [src[0], src[1] + lo, size],
        dst: [dst[0], dst[1] + lo, size],
      });
    });
    for (const member of tbGroup) {
      this.record(this.srcRank, member,
        { op: "device_barrier", tb_group: [...tbGroup].sort((a, b) => a - b) });
    }
  }
}

export class SwitchChannel extends ChannelBase {
  constructor(program: Program, id: string, readonly ranks: number[]) {
    super(program, id);
  }

  /** Switch-side reduction of a multimem chunk into a caller-local chunk. */
  reduce(dst: Chunk, srcMultimem: Chunk, tb = 0): void {
    const caller = this.requireMember(dst);
    this.record(caller, tb,
      { op: "reduce", chan: this.id, src: asRange(srcMultimem), dst: asRange(dst) });
  }

  /** Broadcast a caller-local chunk to the multimem destination everywhere. */
  broadcast(dstMultimem: Chunk, src: Chunk, tb = 0): void {
    const caller = this.requireMember(src);
    this.record(caller, tb,
      { op: "copy", chan: this.id, src: asRange(src), dst: asRange(dstMultimem) });
  }

  private requireMember(localChunk: Chunk): number {
    const rank = localChunk.rank;
    if (typeof rank !== "number" || !this.ranks.includes(rank)) {
      throw new DslError(`rank ${rank} is not part of switch channel ${this.id}`);
    }
    return rank;
  }
}

interface BufferDecl {
  id: string;
  kind: BufferKind;
  rank: number | "all";
  elems: number;
}

interface ChannelDecl {
  id: string;
  type: "port" | "memory" | "switch";
  src?: number;
  dst?: number;
  ranks?: number[];
  protocol?: Protocol;
}

export class Program {
  readonly buffers: BufferDecl[] = [];
  readonly channels: ChannelDecl[] = [];
  readonly streams = new Map<string, OpRecord[]>();
  private closed = false;

  constructor(
    readonly name: string,
    readonly collective: Collective,
    readonly protocol: Protocol,
    readonly numRanks: number,
  ) {
    if (protocol !== "LL" && protocol !== "HB") {
      throw new DslError(`invalid protocol ${protocol}`);
    }
    if (!Number.isInteger(numRanks) || numRanks < 1) {
      throw new DslError(`invalid rank count ${numRanks}`);
    }
    for (let r = 0; r < numRanks; r++) this.streams.set(`${r}.0`, []);
  }

  buffer(id: string, kind: BufferKind, rank: number | "all", elems: number): BufferHandle {
    if (elems <= 0) throw new DslError(`buffer ${id} needs positive elems`);
    if (this.buffers.some((b) => b.id === id)) {
      throw new DslError(`duplicate buffer ${id}`);
    }
    this.buffers.push({ id, kind, rank, elems });
    return new BufferHandle(this, id, kind, rank, elems);
  }

  portChannel(src: number, dst: number): PortChannel {
    const id = this.declareChannel({ id: `p${this.channels.length}`, type: "port", src, dst });
    return new PortChannel(this, id, src, dst);
  }

  memoryChannel(src: number, dst: number): MemoryChannel {
    const id = this.declareChannel({
      id: `m${this.channels.length}`, type: "memory", src, dst, protocol: this.protocol,
    });
    return new MemoryChannel(this, id, src, dst);
  }

  switchChannel(ranks: number[]): SwitchChannel {
    const id = this.declareChannel({ id: `s${this.channels.length}`, type: "switch", ranks });
    return new SwitchChannel(this, id, ranks);
  }

  private declareChannel(decl: ChannelDecl): string {
    this.requireOpen();
    if (decl.type !== "switch") {
      const { src, dst } = decl;
      if (src === dst || ![src, dst].every((r) => Number.isInteger(r) && r! >= 0 && r! < this.numRanks)) {
        throw new DslError(`bad channel endpoints ${src} -> ${dst}`);
      }
    } else if (!decl.ranks || decl.ranks.length < 1) {
      throw new DslError("switch channel needs at least one rank");
    }
    this.channels.push(decl);
    return decl.id;
  }

  /** Local elementwise accumulate on one rank: dst += src. */
  reduce(rank: number, dst: Chunk, src: Chunk, tb = 0): void {
    this.checkSide(dst, rank, "local reduce");
    this.checkSide(src, rank, "local reduce");
    this.record(rank, tb, { op: "reduce", src: asRange(src), dst: asRange(dst) });
  }

  copy(rank: number, dst: Chunk, src: Chunk, tb = 0): void {
    this.checkSide(dst, rank, "local copy");
    this.checkSide(src, rank, "local copy");
    this.record(rank, tb, { op: "copy", src: asRange(src), dst: asRange(dst) });
  }

  record(rank: number, tb: number, op: OpRecord): void {
    this.requireOpen();
    if (rank < 0 || rank >= this.numRanks) {
      throw new DslError(`rank ${rank} out of range`);
    }
    const key = `${rank}.${tb}`;
    if (!this.streams.has(key)) this.streams.set(key, []);
    this.streams.get(key)!.push(op);
  }

  requireProtocol(wanted: Protocol, what: string): void {
    if (this.protocol !== wanted) {
      throw new DslError(`${what} requires the ${wanted} protocol; program is ${this.protocol}`);
    }
  }

  checkSide(chunk: Chunk, rank: number, what: string, packetSpace = false): void {
    if (chunk.rank !== rank) {
      throw new DslError(
        `${what}: chunk of ${chunk.buffer} lives on rank ${chunk.rank}, needs ${rank}`);
    }
    const decl = this.buffers.find((b) => b.id === chunk.buffer);
    if (!decl) throw new DslError(`${what}: unknown buffer ${chunk.buffer}`);
    const limit = packetSpace ? Math.floor(decl.elems / 2) : decl.elems;
    if (chunk.off < 0 || chunk.off + chunk.size > limit) {
      throw new DslError(
        `${what}: chunk [${chunk.off},${chunk.off + chunk.size}) outside ${chunk.buffer}` +
        (packetSpace ? " (packet capacity)" : ""));
    }
  }

  close(): void {
    this.closed = true;
  }

  requireOpen(): void {
    if (this.closed) throw new DslError("program is closed; re-entry is not allowed");
  }
}

/** Open a recording scope for a new program. */
export function dslContext(name: string, collective: Collective,
                           protocol: Protocol, numRanks: number): Program {
  return new Program(name, collective, protocol, numRanks);
}
