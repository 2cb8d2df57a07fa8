/**
 * Example programs written against the DSL, mirroring the executor-side
 * algorithm library so cross-toolchain outputs can be compared.
 */

import { Chunk, dslContext, DslError, Program } from "./program.js";

/**
 * Overlapped ring ReduceScatter: per step, put the first half of the
 * outgoing chunk, reduce the previous arrival's second half while the
 * transfer flies, then put the second half and reduce the fresh arrival's
 * first half. Put offsets follow ((rank + N - step) % N) * (elems / N).
 * When outFull is set the result lands at the owned chunk's offset of a
 * full-size output (the AllReduce layout).
 */
export function ringRS(n: number, elems: number, outFull = false,
                       program?: Program): Program {
  if (elems % (2 * n) !== 0) {
    throw new DslError(`ring ReduceScatter needs elems divisible by ${2 * n}`);
  }
  const g = program ?? dslContext("ring_rs", "reducescatter", "HB", n);
  const cs = elems / n;
  const h = cs / 2;
  const input = g.buffer("input", "input", "all", elems);
  const scratch = g.buffer("scratch", "scratch", "all", elems);
  const output = outFull
    ? g.buffer("output", "output", "all", elems)
    : g.buffer("output", "output", "all", cs);
  const send = Array.from({ length: n }, (_, r) => g.portChannel(r, (r + 1) % n));

  for (let r = 0; r < n; r++) {
    const tx = send[r];
    const rx = send[(r - 1 + n) % n];
    const acc = input.at(r);
    const recv = scratch.at(r);
    const peerScratch = scratch.at((r + 1) % n);
    const outBase = outFull ? r * cs : 0;
    for (let s = 0; s < n; s++) {
      const c = ((r + n - s) % n) * cs;
      const a = ((r + n - s - 1) % n) * cs;
      tx.put(peerScratch.slice(c, c + h), acc.slice(c, c + h));
      tx.signal();
      if (s > 0) {
        // previous arrival's 2nd half, overlapping the put above
        g.reduce(r, acc.slice(c + h, c + cs), recv.slice(c + h, c + cs));
      }
      rx.wait(0, recv.slice(a, a + h));
      tx.flush();
      tx.put(peerScratch.slice(c + h, c + cs), acc.slice(c + h, c + cs));
      tx.signal();
      if (s < n - 1) {
        g.reduce(r, acc.slice(a, a + h), recv.slice(a, a + h));
      } else {
        // own chunk came full circle with every contribution on board
        g.reduce(r, output.at(r).slice(outBase, outBase + h), recv.slice(a, a + h));
      }
      rx.wait(0, recv.slice(a + h, a + cs));
      tx.flush();
    }
    g.reduce(r, output.at(r).slice(outBase + h, outBase + cs),
             recv.slice(r * cs + h, r * cs + cs));
  }
  return g;
}

/**
 * One-phase all-pairs AllReduce over LL packet flags: broadcast the whole
 * local input to every peer before reading anything, then reduce the
 * decoded contributions. No semaphores anywhere.
 */
export function onePhaseAllPairs(n: number, elems: number): Program {
  const g = dslContext("1pa", "allreduce", "LL", n);
  const input = g.buffer("input", "input", "all", elems);
  const output = g.buffer("output", "output", "all", elems);
  const llscr = g.buffer("llscr", "scratch", "all", 2 * n * elems);
  const tmp = g.buffer("tmp", "scratch", "all", n * elems);
  const chans = new Map<string, ReturnType<Program["memoryChannel"]>>();
  for (let r = 0; r < n; r++) {
    for (let p = 0; p < n; p++) {
      if (p !== r) chans.set(`${r}->${p}`, g.memoryChannel(r, p));
    }
  }
  for (let r = 0; r < n; r++) {
    const peers = [...Array(n).keys()].filter((p) => p !== r);
    for (const p of peers) {
      chans.get(`${r}->${p}`)!.putPackets(
        llscr.at(p).slice(r * elems, (r + 1) * elems), input.at(r).whole());
    }
    g.copy(r, output.at(r).whole(), input.at(r).whole());
    for (const p of peers) {
      chans.get(`${p}->${r}`)!.readPackets(
        tmp.at(r).slice(p * elems, (p + 1) * elems),
        llscr.at(r).slice(p * elems, (p + 1) * elems));
    }
    for (const p of peers) {
      g.reduce(r, output.at(r).whole(), tmp.at(r).slice(p * elems, (p + 1) * elems));
    }
  }
  return g;
}

/**
 * The switch-offload AllReduce: per rank, reduce its owned chunk through
 * the switch, then broadcast the result, chunk by chunk in a loop.
 */
export function switchAllReduce(n: number, elems: number): Program {
  if (elems % n !== 0) throw new DslError(`needs elems divisible by ${n}`);
  const g = dslContext("switch_2pa", "allreduce", "HB", n);
  const cs = elems / n;
  const input = g.buffer("input", "input", "all", elems);
  const output = g.buffer("output", "output", "all", elems);
  const tmp = g.buffer("tmp", "scratch", "all", cs);
  const sw = g.switchChannel([...Array(n).keys()]);
  for (let r = 0; r < n; r++) {
    sw.reduce(tmp.at(r).whole(), input.at(r).slice(r * cs, (r + 1) * cs));
    sw.broadcast(output.at(r).slice(r * cs, (r + 1) * cs), tmp.at(r).whole());
  }
  return g;
}
