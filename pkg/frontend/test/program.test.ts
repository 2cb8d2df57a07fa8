import { describe, expect, it } from "vitest";
import { dslContext, DslError } from "../src/program.js";
import { emitPlan } from "../src/emit.js";
import { onePhaseAllPairs, ringRS, switchAllReduce } from "../src/algorithms.js";

describe("recording context", () => {
  it("opens with one empty stream per rank", () => {
    const g = dslContext("t", "allreduce", "HB", 4);
    expect(g.streams.size).toBe(4);
    for (const ops of g.streams.values()) expect(ops).toEqual([]);
  });

  it("rejects an invalid protocol at construction", () => {
    expect(() => dslContext("t", "allreduce", "XX" as never, 4)).toThrow(DslError);
  });

  it("LL contexts reject bulk-copy style calls", () => {
    const g = dslContext("t", "allreduce", "LL", 2);
    const buf = g.buffer("b", "input", "all", 8);
    const ch = g.memoryChannel(0, 1);
    expect(() => ch.put(buf.at(1).whole(), buf.at(0).whole())).toThrow(/HB/);
    expect(() => ch.signal()).toThrow(/HB/);
    expect(() => ch.wait()).toThrow(/HB/);
  });

  it("HB contexts reject packet calls", () => {
    const g = dslContext("t", "allreduce", "HB", 2);
    const buf = g.buffer("b", "input", "all", 8);
    const scr = g.buffer("s", "scratch", "all", 16);
    const ch = g.memoryChannel(0, 1);
    expect(() => ch.putPackets(scr.at(1).slice(0, 8), buf.at(0).whole())).toThrow(/LL/);
  });

  it("re-entering a closed context is an error", () => {
    const g = dslContext("t", "allreduce", "HB", 2);
    const buf = g.buffer("b", "input", "all", 8);
    emitPlan(g);
    expect(() => g.copy(0, buf.at(0).whole(), buf.at(0).whole())).toThrow(/closed/);
    expect(() => g.memoryChannel(0, 1)).toThrow(/closed/);
  });
});

describe("channel methods", () => {
  it("put on a channel whose src is not the chunk's rank fails", () => {
    const g = dslContext("t", "allreduce", "HB", 4);
    const buf = g.buffer("b", "input", "all", 8);
    const ch = g.memoryChannel(0, 1);
    expect(() => ch.put(buf.at(1).whole(), buf.at(2).whole())).toThrow(/rank/);
  });

  it("out-of-range slices fail at recording time", () => {
    const g = dslContext("t", "allreduce", "HB", 2);
    const buf = g.buffer("b", "input", "all", 8);
    expect(() => buf.at(0).slice(4, 12)).toThrow(/outside/);
  });

  it("packet chunks are bounded by packet capacity", () => {
    const g = dslContext("t", "allreduce", "LL", 2);
    const buf = g.buffer("b", "input", "all", 8);
    const scr = g.buffer("s", "scratch", "all", 16); // capacity: 8 packets
    const ch = g.memoryChannel(0, 1);
    expect(() => ch.putPackets(scr.at(1).slice(2, 12), buf.at(0).whole()))
      .toThrow(/packet capacity/);
  });

  it("tb_group partitions evenly with the remainder on the last block", () => {
    const g = dslContext("t", "custom", "HB", 2);
    const a = g.buffer("a", "input", "all", 10);
    const s = g.buffer("s", "scratch", "all", 10);
    const ch = g.memoryChannel(0, 1);
    ch.put(s.at(1).slice(0, 10), a.at(0).slice(0, 10), 0, [0, 1, 2]);
    const doc = JSON.parse(emitPlan(g));
    const puts = doc.programs.flatMap((p: { tb: number; ops: { op: string; src: number[] }[] }) =>
      p.ops.filter((o) => o.op === "put").map((o) => [p.tb, o.src[1], o.src[2]]));
    expect(puts).toEqual([[0, 0, 3], [1, 3, 3], [2, 6, 4]]);
    const barriers = doc.programs.flatMap((p: { ops: { op: string }[] }) =>
      p.ops.filter((o) => o.op === "device_barrier"));
    expect(barriers.length).toBe(3);
  });
});

describe("example algorithms", () => {
  it("ring ReduceScatter records ten ops per middle step per rank", () => {
    const n = 4;
    const g = ringRS(n, 8);
    for (let r = 0; r < n; r++) {
      const ops = g.streams.get(`${r}.0`)!;
      // steps: 9 ops at step 0 (no previous arrival), 10 in the middle,
      // plus the trailing epilogue reduce
      expect(ops.length).toBe(9 + 10 * (n - 1) + 1);
      const middle = ops.slice(9, 19).map((o) => o.op);
      expect(middle).toEqual(["put", "signal", "reduce", "wait", "flush",
                              "put", "signal", "reduce", "wait", "flush"]);
    }
  });

  it("ring put offsets follow the chunk law", () => {
    const n = 4;
    const elems = 8;
    const cs = elems / n;
    const g = ringRS(n, elems);
    for (let r = 0; r < n; r++) {
      const puts = g.streams.get(`${r}.0`)!.filter((o) => o.op === "put");
      for (let s = 0; s < n; s++) {
        const want = ((r + n - s) % n) * cs;
        expect(puts[2 * s].dst![1]).toBe(want);
        expect(puts[2 * s + 1].dst![1]).toBe(want + cs / 2);
      }
    }
  });

  it("the one-phase all-pairs program has no semaphore ops", () => {
    const g = onePhaseAllPairs(4, 8);
    for (const ops of g.streams.values()) {
      for (const op of ops) expect(["signal", "wait"]).not.toContain(op.op);
    }
  });

  it("the switch loop is a valid reduce+broadcast per rank", () => {
    const g = switchAllReduce(4, 8);
    for (let r = 0; r < 4; r++) {
      expect(g.streams.get(`${r}.0`)!.map((o) => o.op)).toEqual(["reduce", "copy"]);
    }
  });
});

describe("emission", () => {
  it("is byte-identical across emissions of the same program", () => {
    const a = emitPlan(ringRS(4, 8));
    const b = emitPlan(ringRS(4, 8));
    expect(a).toBe(b);
  });

  it("marks documents as pre-lowering and sorts keys canonically", () => {
    const doc = emitPlan(switchAllReduce(2, 4));
    expect(doc).toContain('"lowered":false');
    expect(doc.indexOf('"buffers"')).toBeLessThan(doc.indexOf('"channels"'));
    expect(doc).not.toContain(": ");
    expect(JSON.parse(doc).version).toBe(1);
  });

  it("shape errors surface before emission", () => {
    expect(() => ringRS(4, 10)).toThrow(/divisible/);
    expect(() => switchAllReduce(4, 9)).toThrow(/divisible/);
  });
});
