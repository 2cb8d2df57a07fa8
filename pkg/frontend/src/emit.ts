/**
 * Canonical document emission: the executor-side plan schema plus a
 * "lowered": false marker. Keys are sorted and no insignificant whitespace
 * is produced, so the same program always emits byte-identical output.
 */

import { DslError, OpRecord, Program } from "./program.js";

export type Dtype = "i32" | "f32";

function canonical(value: unknown): string {
  if (value === null || typeof value === "number" || typeof value === "boolean") {
    if (typeof value === "number" && !Number.isInteger(value)) {
      throw new DslError(`non-integer number ${value} in document`);
    }
    return JSON.stringify(value);
  }
  if (typeof value === "string") return JSON.stringify(value);
  if (Array.isArray(value)) {
    return `[${value.map(canonical).join(",")}]`;
  }
  const obj = value as Record<string, unknown>;
  const keys = Object.keys(obj).sort();
  const body = keys
    .filter((k) => obj[k] !== undefined)
    .map((k) => `${JSON.stringify(k)}:${canonical(obj[k])}`);
  return `{${body.join(",")}}`;
}

function opToJson(op: OpRecord): Record<string, unknown> {
  const out: Record<string, unknown> = { op: op.op };
  if (op.chan !== undefined) out.chan = op.chan;
  if (op.src !== undefined) out.src = op.src;
  if (op.dst !== undefined) out.dst = op.dst;
  if (op.src2 !== undefined) out.src2 = op.src2;
  if (op.arrives !== undefined) out.arrives = op.arrives;
  if (op.flag !== undefined) out.flag = op.flag;
  if (op.tb_group !== undefined) out.tb_group = op.tb_group;
  return out;
}

/** Serialize the recorded program as a pre-lowering plan document. */
export function emitPlan(program: Program, dtype: Dtype = "i32"): string {
  program.close();
  const programs = [...program.streams.entries()]
    .map(([key, ops]) => {
      const [rank, tb] = key.split(".").map(Number);
      return { rank, tb, ops: ops.map(opToJson) };
    })
    .filter((p) => p.ops.length > 0 || p.tb === 0)
    .sort((a, b) => a.rank - b.rank || a.tb - b.tb);
  const doc = {
    version: 1,
    name: program.name,
    collective: program.collective,
    protocol: program.protocol,
    dtype,
    num_ranks: program.numRanks,
    lowered: false,
    buffers: program.buffers.map((b) => ({
      id: b.id, kind: b.kind, rank: b.rank, elems: b.elems,
    })),
    channels: program.channels.map((c) =>
      c.type === "switch"
        ? { id: c.id, type: c.type, ranks: c.ranks }
        : c.protocol !== undefined
          ? { id: c.id, type: c.type, src: c.src, dst: c.dst, protocol: c.protocol }
          : { id: c.id, type: c.type, src: c.src, dst: c.dst }),
    programs,
  };
  return canonical(doc);
}
