"""Command-line driver: run, validate, bench, build, lint."""

from __future__ import annotations

import argparse
import sys

import numpy as np

from .collectives import build_algo, required_multiple
from .config import load_config
from .dtypes import NP_DTYPES
from .errors import CommforgeError
from .executor import Runtime
from .lowering import LoweringParams, graph_from_plan, lower
from .plan import parse_plan, serialize_plan, validate_plan
from .timing import rows_to_csv, run_benchmark

KiB = 1024


def _oracle(collective, inputs, num_ranks):
    total = np.sum(np.stack(inputs), axis=0)
    if collective == "allreduce":
        return [total] * num_ranks
    if collective == "reducescatter":
        cs = len(total) // num_ranks
        return [total[r * cs:(r + 1) * cs] for r in range(num_ranks)]
    if collective == "allgather":
        return [np.concatenate(inputs)] * num_ranks
    return None


def _load_plan(path):
    with open(path, "rb") as fh:
        return parse_plan(fh.read())


def _make_world(cfg, args, default_ranks=None):
    nodes = args.nodes or (cfg.nodes if args.ranks is None else 1)
    ranks = args.ranks or default_ranks or cfg.nodes * cfg.gpus_per_node
    if ranks % nodes:
        raise CommforgeError(f"{ranks} ranks do not divide over {nodes} nodes")
    world = cfg.make_world(nodes, ranks // nodes)
    if args.seed is not None:
        world.seed = args.seed
    return world


def cmd_run(args) -> int:
    cfg = load_config(args.config)
    plan = _load_plan(args.plan)
    world = _make_world(cfg, args, default_ranks=plan.num_ranks)
    if world.num_ranks != plan.num_ranks:
        print(f"world has {world.num_ranks} ranks but plan wants {plan.num_ranks}",
              file=sys.stderr)
        return 1
    diags = validate_plan(plan)
    errors = [d for d in diags if d.severity == "error"]
    if errors:
        for d in errors:
            print(d, file=sys.stderr)
        return 1
    np_dtype = NP_DTYPES[plan.dtype]
    in_elems = next(b.elems for b in plan.buffers if b.kind == "input")
    rng = np.random.default_rng(world.seed)
    if plan.dtype == "i32":
        inputs = [rng.integers(-1000, 1000, in_elems).astype(np_dtype)
                  for _ in range(plan.num_ranks)]
    else:
        inputs = [(rng.random(in_elems) * 100 - 50).astype(np_dtype)
                  for _ in range(plan.num_ranks)]
    runtime = Runtime(plan, world)
    want = _oracle(plan.collective, inputs, plan.num_ranks) if args.check_oracle else None
    if want is None and args.check_oracle:
        print(f"no oracle for collective {plan.collective!r}", file=sys.stderr)
        return 1
    schedules = max(1, args.schedules)
    for k in range(schedules):
        mode = "round-robin" if schedules == 1 else "seeded-random"
        result = runtime.execute(inputs, mode=mode, seed=world.seed + k)
        if result.races:
            print(f"schedule {k}: {len(result.races)} race report(s)", file=sys.stderr)
            for rep in result.races[:10]:
                print(f"  {rep}", file=sys.stderr)
            return 1
        if want is not None:
            for r, (got, exp) in enumerate(zip(result.outputs, want)):
                if plan.dtype == "i32":
                    ok = (got == exp).all()
                else:
                    ok = np.allclose(got, exp, rtol=1e-5)
                if not ok:
                    print(f"schedule {k}: rank {r} output mismatch", file=sys.stderr)
                    return 1
    print(f"ok: {schedules} schedule(s), {plan.op_count()} ops, races=0"
          + (", oracle matched" if want is not None else ""))
    return 0


def cmd_validate(args) -> int:
    plan = _load_plan(args.plan)
    diags = validate_plan(plan)
    for d in diags:
        print(d)
    return 1 if any(d.severity == "error" for d in diags) else 0


def cmd_lint(args) -> int:
    with open(args.plan, "rb") as fh:
        raw = fh.read()
    plan = parse_plan(raw)
    rc = 0
    if serialize_plan(plan) != raw:
        print("not in canonical form (re-serialize to fix)")
        rc = 1
    for d in validate_plan(plan):
        print(d)
        if d.severity == "error":
            rc = 1
    if rc == 0:
        print("ok: canonical and clean")
    return rc


def cmd_build(args) -> int:
    cfg = load_config(args.config)
    if args.from_doc:
        doc = _load_plan(args.from_doc)
        graph = graph_from_plan(doc)
        plan = lower(graph, graph.params) if args.lower else doc
    else:
        nodes = args.nodes or 1
        ranks = args.ranks or cfg.gpus_per_node
        world = cfg.make_world(nodes, ranks // nodes)
        name = args.algo
        variant = args.variant or ""
        elems = args.elems
        mult = required_multiple(name if name != "2ph" else f"2ph_{variant or 'hb'}",
                                 world.num_ranks, world.gpus_per_node)
        if elems % mult:
            elems += mult - elems % mult
        protocol = "LL" if name == "1pa" or variant == "ll" else "HB"
        params = LoweringParams(world.num_ranks, elems, args.dtype, protocol,
                                instances=args.instances)
        plan = lower(build_algo(name, params, world, variant=variant), params)
    data = serialize_plan(plan)
    if args.out:
        with open(args.out, "wb") as fh:
            fh.write(data)
        print(f"wrote {args.out} ({plan.op_count()} ops, {len(data)} bytes)")
    else:
        sys.stdout.buffer.write(data + b"\n")
    return 0


def cmd_bench(args) -> int:
    cfg = load_config(args.config)
    world = _make_world(cfg, args)
    sizes = []
    s = args.min_bytes
    while s <= args.max_bytes:
        sizes.append(s)
        s *= 2
    rows = run_benchmark(args.collective, sizes, world, cfg.cost, cfg.selector)
    csv = rows_to_csv(rows)
    if args.csv:
        with open(args.csv, "w") as fh:
            fh.write(csv)
        print(f"wrote {args.csv} ({len(rows)} rows)")
    else:
        sys.stdout.write(csv)
    return 0


def make_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="commforge",
                                 description="simulated GPU communication stack")
    sub = ap.add_subparsers(dest="cmd", required=True)

    def common(p):
        p.add_argument("--config", default=None)
        p.add_argument("--seed", type=int, default=None)
        p.add_argument("--ranks", type=int, default=None)
        p.add_argument("--nodes", type=int, default=None)

    p = sub.add_parser("run", help="execute a plan document")
    common(p)
    p.add_argument("--plan", required=True)
    p.add_argument("--check-oracle", action="store_true")
    p.add_argument("--schedules", type=int, default=1)
    p.set_defaults(fn=cmd_run)

    p = sub.add_parser("validate", help="static plan diagnostics")
    p.add_argument("--plan", required=True)
    p.set_defaults(fn=cmd_validate)

    p = sub.add_parser("lint", help="canonical-form and diagnostics check")
    p.add_argument("--plan", required=True)
    p.set_defaults(fn=cmd_lint)

    p = sub.add_parser("build", help="emit a builtin algorithm's plan")
    common(p)
    p.add_argument("--algo")
    p.add_argument("--variant", default="")
    p.add_argument("--elems", type=int, default=256)
    p.add_argument("--dtype", choices=("i32", "f32"), default="i32")
    p.add_argument("--instances", type=int, default=1)
    p.add_argument("--from-doc", default=None,
                   help="lower a recorded (pre-lowering) program document")
    p.add_argument("--lower", action="store_true")
    p.add_argument("--out", "-o", default=None)
    p.set_defaults(fn=cmd_build)

    p = sub.add_parser("bench", help="timed sweep over algorithm variants")
    common(p)
    p.add_argument("--collective", default="allreduce",
                   choices=("allreduce", "allgather", "reducescatter"))
    p.add_argument("--min-bytes", type=int, default=1 * KiB)
    p.add_argument("--max-bytes", type=int, default=1024 * KiB)
    p.add_argument("--csv", default=None)
    p.set_defaults(fn=cmd_bench)
    return ap


def main(argv=None) -> int:
    args = make_parser().parse_args(argv)
    try:
        return args.fn(args)
    except CommforgeError as exc:
        print(f"error[{exc.code}]: {exc}", file=sys.stderr)
        return 1
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
