/** Emit builtin example programs as pre-lowering documents. */

import { writeFileSync } from "node:fs";
import { onePhaseAllPairs, ringRS, switchAllReduce } from "./algorithms.js";
import { Dtype, emitPlan } from "./emit.js";

function usage(): never {
  console.error(
    "usage: cli.js <ringrs|1pa|switch> --ranks N --elems E [--dtype i32|f32] [-o FILE]");
  process.exit(2);
}

function main(argv: string[]): number {
  const [name, ...rest] = argv;
  if (!name) usage();
  const opts: Record<string, string> = {};
  for (let i = 0; i < rest.length; i += 2) {
    const key = rest[i];
    if (!key.startsWith("-") || rest[i + 1] === undefined) usage();
    opts[key.replace(/^--?/, "")] = rest[i + 1];
  }
  const ranks = Number(opts.ranks ?? 4);
  const elems = Number(opts.elems ?? 8);
  const dtype = (opts.dtype ?? "i32") as Dtype;
  let program;
  switch (name) {
    case "ringrs":
      program = ringRS(ranks, elems);
      break;
    case "1pa":
      program = onePhaseAllPairs(ranks, elems);
      break;
    case "switch":
      program = switchAllReduce(ranks, elems);
      break;
    default:
      usage();
  }
  const doc = emitPlan(program, dtype);
  if (opts.o ?? opts.out) {
    writeFileSync(opts.o ?? opts.out, doc);
    console.error(`wrote ${opts.o ?? opts.out} (${doc.length} bytes)`);
  } else {
    process.stdout.write(doc + "\n");
  }
  return 0;
}

process.exit(main(process.argv.slice(2)));
