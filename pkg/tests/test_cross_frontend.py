"""Cross-toolchain round trip: documents recorded by the TypeScript frontend,
lowered and executed here, must match both the brute-force oracle and the
natively built plans bit-for-bit on i32.

Golden emitted documents are checked in so ingestion is covered without a
node toolchain; the live-emission tests run when the built frontend exists.
"""

import shutil
import subprocess
from pathlib import Path

import numpy as np
import pytest

from commforge.collectives import build_1pa, build_ring_rs
from commforge.executor import Runtime
from commforge.lowering import LoweringParams, graph_from_plan, lower
from commforge.plan import parse_plan, validate_plan
from commforge.world import make_world

GOLDEN = Path(__file__).parent / "golden"
FRONTEND_CLI = Path(__file__).parent.parent / "frontend" / "dist" / "cli.js"

needs_node = pytest.mark.skipif(
    shutil.which("node") is None or not FRONTEND_CLI.exists(),
    reason="frontend not built or node unavailable")


def _run_doc(doc_bytes: bytes, n: int, ins):
    plan_doc = parse_plan(doc_bytes)
    assert plan_doc.lowered is False
    graph = graph_from_plan(plan_doc)
    plan = lower(graph, graph.params)
    assert not [d for d in validate_plan(plan) if d.severity == "error"]
    rt = Runtime(plan, make_world(1, n, seed=2))
    return rt.execute(ins)


def _native(build, n, elems, protocol, ins):
    params = LoweringParams(n, elems, "i32", protocol)
    plan = lower(build(params), params)
    rt = Runtime(plan, make_world(1, n, seed=2))
    return rt.execute(ins)


@pytest.mark.parametrize("fixture,build,protocol,collective", [
    ("frontend_ringrs_n4e8.json", build_ring_rs, "HB", "reducescatter"),
    ("frontend_1pa_n4e8.json", build_1pa, "LL", "allreduce"),
])
def test_golden_documents_round_trip(fixture, build, protocol, collective):
    n, elems = 4, 8
    rng = np.random.default_rng(31)
    ins = [rng.integers(-1000, 1000, elems).astype(np.int32) for _ in range(n)]
    got = _run_doc((GOLDEN / fixture).read_bytes(), n, ins)
    native = _native(build, n, elems, protocol, ins)
    total = np.sum(np.stack(ins), axis=0)
    assert got.races == [] and native.races == []
    for r in range(n):
        assert (got.outputs[r] == native.outputs[r]).all()
        if collective == "allreduce":
            assert (got.outputs[r] == total).all()
        else:
            cs = elems // n
            assert (got.outputs[r] == total[r * cs:(r + 1) * cs]).all()


@needs_node
def test_live_emission_matches_golden(tmp_path):
    for name, fixture in (("ringrs", "frontend_ringrs_n4e8.json"),
                          ("1pa", "frontend_1pa_n4e8.json")):
        out = tmp_path / f"{name}.json"
        subprocess.run(
            ["node", str(FRONTEND_CLI), name, "--ranks", "4", "--elems", "8",
             "-o", str(out)],
            check=True, capture_output=True)
        assert out.read_bytes() == (GOLDEN / fixture).read_bytes()


@needs_node
def test_live_emission_other_shapes(tmp_path):
    rng = np.random.default_rng(5)
    for name, build, protocol, n, elems in [
            ("ringrs", build_ring_rs, "HB", 8, 32),
            ("1pa", build_1pa, "LL", 2, 4),
            ("switch", None, "HB", 4, 16)]:
        out = tmp_path / f"{name}_{n}_{elems}.json"
        subprocess.run(
            ["node", str(FRONTEND_CLI), name, "--ranks", str(n),
             "--elems", str(elems), "-o", str(out)],
            check=True, capture_output=True)
        ins = [rng.integers(-1000, 1000, elems).astype(np.int32) for _ in range(n)]
        got = _run_doc(out.read_bytes(), n, ins)
        assert got.races == []
        total = np.sum(np.stack(ins), axis=0)
        if name == "ringrs":
            cs = elems // n
            for r in range(n):
                assert (got.outputs[r] == total[r * cs:(r + 1) * cs]).all()
        else:
            for r in range(n):
                assert (got.outputs[r] == total).all()
        if build is not None:
            native = _native(build, n, elems, protocol, ins)
            for r in range(n):
                assert (got.outputs[r] == native.outputs[r]).all()
