"""Alpha-beta timing: transfer model, DES replay, benchmark harness."""

import pytest

from commforge.collectives import Selector
from commforge.errors import BadTimeError
from commforge.lowering import LoweringParams, ProgramGraph, lower
from commforge.timing import (
    CostParams,
    algobw,
    rows_to_csv,
    run_benchmark,
    simulate_timed,
    timed_latency,
    transfer_time,
)
from commforge.world import INTER, INTRA, make_world

KiB, MiB, GiB = 1024, 1024**2, 1024**3
P = CostParams()


def test_transfer_time_inter_1mib():
    # alpha 4.89us + 1 MiB / 48.94 GB/s ~= 26.3 us
    t = transfer_time(INTER, 1 * MiB, P)
    assert abs(t - 26.3e-6) < 0.2e-6


def test_transfer_time_zero_bytes_is_alpha():
    assert transfer_time(INTER, 0, P) == P.inter.alpha
    assert transfer_time(INTRA, 0, P) == 829e-9


def test_algobw_definition_exact():
    assert algobw(128 * MiB, 2e-3) == 64 * MiB / 1e-3  # 64 MiB per millisecond
    assert algobw(1, 1.0) == 1.0


def test_algobw_rejects_nonpositive_latency():
    with pytest.raises(BadTimeError):
        algobw(100, 0.0)
    with pytest.raises(BadTimeError):
        algobw(100, -1e-9)


def _put_plan(pairs, elems, halves=False):
    params = LoweringParams(4, elems, "i32", "HB")
    g = ProgramGraph("puts", "custom", params)
    g.buffer("input", "input", "all", elems)
    g.buffer("output", "output", "all", elems)
    h = elems // 2
    for i, (a, b) in enumerate(pairs):
        ch = g.port_channel(a, b)
        off = (i % 2) * h if halves else 0
        size = h if halves else elems
        ch.put(dst=("output", off, size), src=("input", off, size), tb=0)
    return lower(g, params, passes=())


def test_single_put_makespan():
    elems = 256
    plan = _put_plan([(0, 1)], elems)
    trace = simulate_timed(plan, make_world(1, 4), P)
    want = P.proxy_hop + transfer_time(INTRA, elems * 4, P)
    assert abs(trace.makespan - want) < 1e-12


def test_parallel_puts_on_disjoint_links():
    elems = 256
    one = simulate_timed(_put_plan([(0, 1)], elems), make_world(1, 4), P).makespan
    par = simulate_timed(_put_plan([(0, 1), (2, 3)], elems), make_world(1, 4), P).makespan
    assert abs(par - one) < 1e-12


def test_serialized_puts_on_shared_link():
    elems = 256
    plan = _put_plan([(0, 1), (0, 1)], elems, halves=True)
    trace = simulate_timed(plan, make_world(1, 4), P)
    tt = transfer_time(INTRA, elems * 2, P)
    want = P.proxy_hop + 2 * tt  # the second transfer queues on the link
    assert abs(trace.makespan - want) < 1e-9


def test_ll_transfers_move_double_bytes_on_the_link():
    params = LoweringParams(2, 8, "i32", "LL")
    g = ProgramGraph("ll", "custom", params)
    g.buffer("input", "input", "all", 8)
    g.buffer("output", "output", "all", 8)
    g.buffer("scr", "scratch", "all", 16)
    ch = g.memory_channel(0, 1)
    ch.put_packets(dst=("scr", 0, 8), src=("input", 0, 8), tb=0)
    ch.read_packets(dst=("output", 0, 8), src=("scr", 0, 8), tb=1)
    plan = lower(g, params, passes=())
    trace = simulate_timed(plan, make_world(1, 2), P)
    assert trace.link_bytes() == 2 * 8 * 4  # 2x payload expansion


def test_timed_trace_deterministic():
    w = make_world(1, 8)
    a = timed_latency("2pr", "", 64 * KiB, w, P)
    b = timed_latency("2pr", "", 64 * KiB, w, P)
    assert a == b


def test_per_link_events_never_overlap():
    from commforge.collectives import build_2pr

    params = LoweringParams(4, 16, "i32", "HB")
    plan = lower(build_2pr(params), params)
    trace = simulate_timed(plan, make_world(1, 4), P)
    by_link: dict = {}
    for e in trace.events:
        if e.link:
            by_link.setdefault(e.link, []).append((e.start, e.end))
    for spans in by_link.values():
        spans.sort()
        for (s1, e1), (s2, e2) in zip(spans, spans[1:]):
            assert e1 <= s2 + 1e-15


def test_latency_crossover_small_vs_large():
    w = make_world(1, 8)
    assert timed_latency("1pa", "", 1 * KiB, w, P) < timed_latency("2pr", "", 1 * KiB, w, P)
    big = 1 * GiB
    bw_2pr = algobw(big, timed_latency("2pr", "", big, w, P))
    bw_1pa = algobw(big, timed_latency("1pa", "", big, w, P))
    assert bw_2pr > bw_1pa


def test_crossover_exists_and_selector_brackets_it():
    """Somewhere between the selector's small and large thresholds the
    latency ordering of 1pa and 2pr flips."""
    w = make_world(1, 8)
    lo, hi = 32 * KiB, 64 * MiB
    assert timed_latency("1pa", "", lo, w, P) < timed_latency("2pr", "", lo, w, P)
    assert timed_latency("1pa", "", hi, w, P) > timed_latency("2pr", "", hi, w, P)


def test_hierarchical_beats_allpairs_multi_node_large():
    w = make_world(2, 4)
    size = 256 * MiB
    assert timed_latency("2ph", "hb", size, w, P) < timed_latency("2pa", "port", size, w, P)


def test_hierarchy_inter_traffic_bound():
    from commforge.collectives import build_2pa, build_2ph

    w = make_world(2, 4)
    elems = 64
    params = LoweringParams(8, elems, "i32", "HB")
    ph = simulate_timed(lower(build_2ph(params, 4, "hb"), params), w, P)
    pa = simulate_timed(lower(build_2pa(params, "port"), params), w, P)
    assert ph.link_bytes(INTER) <= pa.link_bytes(INTER)
    assert ph.link_bytes(INTER) > 0


def test_algobw_monotone_on_ring_sweep():
    w = make_world(1, 8)
    sizes = [4 * KiB * (4 ** i) for i in range(6)]
    bws = [algobw(s, timed_latency("2pr", "", s, w, P)) for s in sizes]
    assert all(a < b for a, b in zip(bws, bws[1:]))


# -- benchmark harness ---------------------------------------------------------


def test_benchmark_rows_and_selected_marks():
    w = make_world(1, 8)
    sizes = [1 * KiB, 64 * KiB, 1 * MiB]
    rows = run_benchmark("allreduce", sizes, w, P)
    per_size: dict = {}
    for r in rows:
        per_size.setdefault(r.nbytes, []).append(r)
    for size, rs in per_size.items():
        assert len(rs) >= 4  # at least four variants per size
    assert any(r.selected for r in rows if r.nbytes == 1 * KiB and r.algo == "1pa")


def test_benchmark_csv_deterministic():
    w = make_world(1, 8)
    sizes = [1 * KiB, 16 * KiB]
    a = rows_to_csv(run_benchmark("allreduce", sizes, w, P))
    b = rows_to_csv(run_benchmark("allreduce", sizes, w, P))
    assert a == b
    assert a.startswith("algo,collective,bytes,latency_us,algobw_gbps,selected\n")


def test_benchmark_full_sweep_1kb_to_1gb():
    """Geometric x2 sweep on an 8-rank single node: every size gets at
    least four variant rows and finite, positive figures."""
    w = make_world(1, 8)
    sizes = []
    s = 1 * KiB
    while s <= 1 * GiB:
        sizes.append(s)
        s *= 2
    rows = run_benchmark("allreduce", sizes, w, P)
    per_size: dict = {}
    for r in rows:
        per_size.setdefault(r.nbytes, []).append(r)
        assert r.latency_us > 0 and r.algobw_gbps > 0
    assert len(per_size) == len(sizes)
    assert all(len(v) >= 4 for v in per_size.values())
    selected = [r for r in rows if r.selected]
    assert len(selected) == len(sizes)  # exactly one pick per size


def test_benchmark_rows_ordered_algo_then_size():
    w = make_world(1, 8)
    rows = run_benchmark("allreduce", [16 * KiB, 1 * KiB], w, P)
    seen = [(r.algo, r.nbytes) for r in rows]
    by_algo: dict = {}
    for algo, size in seen:
        by_algo.setdefault(algo, []).append(size)
    for sizes in by_algo.values():
        assert sizes == sorted(sizes)
