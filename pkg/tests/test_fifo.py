"""SPSC request queue: ordering, blocking, completion semantics."""

import pytest

from commforge.errors import ProxyDownError
from commforge.fifo import FLUSH, PUT, SIGNAL, Request, RequestQueue
from commforge.sched import BLOCKED, Scheduler, run_schedule
from commforge.world import make_world


def _drain_proxy(q, process=None):
    def proxy(ctx):
        while True:
            req = q.pop(ctx)
            if req is None:
                ctx.block_reason = "empty"
                yield BLOCKED
                continue
            if process:
                process(req)
            q.mark_completed(req.ticket, ctx)
            yield
    return proxy


def test_push_assigns_ticket_and_advances_head():
    w = make_world()
    q = RequestQueue(w, capacity=4)
    tickets = []

    def producer(ctx):
        t = yield from q.push(Request(PUT, size=8), ctx)
        tickets.append(t)

    run_schedule(w, [("p", producer), ("x", _drain_proxy(q), True)])
    assert tickets == [0]
    assert q.head == 1


def test_third_push_blocks_at_capacity_until_pop():
    w = make_world()
    q = RequestQueue(w, capacity=2)
    log = []

    def producer(ctx):
        for i in range(3):
            yield from q.push(Request(PUT), ctx)
            log.append(f"push{i}")

    def proxy(ctx):
        # idle until the producer is stuck on the third push
        while q.head - q.tail < 2:
            ctx.block_reason = "waiting for full queue"
            yield BLOCKED
        assert "push2" not in log
        req = q.pop(ctx)
        q.mark_completed(req.ticket, ctx)
        while True:
            req = q.pop(ctx)
            if req is None:
                ctx.block_reason = "empty"
                yield BLOCKED
                continue
            q.mark_completed(req.ticket, ctx)
            yield

    run_schedule(w, [("p", producer), ("proxy", proxy, True)])
    assert log == ["push0", "push1", "push2"]


def test_pop_empty_returns_none():
    w = make_world()
    q = RequestQueue(w, capacity=4)

    class FakeCtx:
        clock = {}
        name = "t"

    assert q.pop(FakeCtx()) is None


def test_pop_returns_kind_and_zeroes_slot():
    w = make_world()
    q = RequestQueue(w, capacity=4)
    got = []

    def producer(ctx):
        yield from q.push(Request(SIGNAL), ctx)

    def proxy(ctx):
        while True:
            req = q.pop(ctx)
            if req is None:
                ctx.block_reason = "empty"
                yield BLOCKED
                continue
            got.append((req.kind, req.ticket))
            assert q.slots[req.ticket % q.capacity] is None
            q.mark_completed(req.ticket, ctx)
            yield

    run_schedule(w, [("p", producer), ("proxy", proxy, True)])
    assert got == [(SIGNAL, 0)]


def test_interleaved_1000_requests_fifo_order():
    w = make_world(seed=11)
    q = RequestQueue(w, capacity=8)
    popped = []

    def producer(ctx):
        for i in range(1000):
            yield from q.push(Request(PUT, size=i), ctx)

    run_schedule(w, [("p", producer),
                     ("proxy", _drain_proxy(q, lambda r: popped.append(r.ticket)), True)],
                 mode="seeded-random", record_steps=False)
    assert popped == list(range(1000))


def test_fifo_order_over_1000_seeded_schedules():
    for seed in range(1000):
        w = make_world(seed=seed)
        q = RequestQueue(w, capacity=4)
        popped = []

        def producer(ctx):
            for i in range(12):
                yield from q.push(Request(PUT, size=i), ctx)

        run_schedule(w, [("p", producer),
                         ("x", _drain_proxy(q, lambda r: popped.append(r.size)), True)],
                     mode="seeded-random", record_steps=False)
        assert popped == list(range(12)), f"seed {seed}"


def test_head_tail_invariant_at_every_step():
    w = make_world(seed=9)
    q = RequestQueue(w, capacity=3)
    sched = Scheduler(w, mode="seeded-random")
    sched.step_hooks.append(q.check_invariant)

    def producer(ctx):
        for i in range(40):
            yield from q.push(Request(PUT), ctx)

    sched.spawn("p", producer)
    sched.spawn("x", _drain_proxy(q), daemon=True)
    sched.run()
    assert q.head == q.tail == 40


def test_wait_completed_returns_when_done():
    w = make_world()
    q = RequestQueue(w, capacity=4)
    done = []

    def producer(ctx):
        t = None
        for _ in range(3):
            t = yield from q.push(Request(PUT), ctx)
        yield from q.wait_completed(t, ctx)
        done.append(q.completed)

    run_schedule(w, [("p", producer), ("x", _drain_proxy(q), True)])
    assert done == [2]
    assert q.completed >= 2


def test_wait_blocks_until_inflight_transfers_complete():
    """Completion lags the pop; flush-style waits must see completion."""
    w = make_world()
    q = RequestQueue(w, capacity=8)
    events = []

    def producer(ctx):
        last = None
        for i in range(6):
            last = yield from q.push(Request(PUT, size=i), ctx)
        yield from q.wait_completed(last, ctx)
        events.append(("flush-done", q.completed))

    def slow_proxy(ctx):
        while True:
            req = q.pop(ctx)
            if req is None:
                ctx.block_reason = "empty"
                yield BLOCKED
                continue
            yield  # transfer in flight for one extra step
            events.append(("complete", req.ticket))
            q.mark_completed(req.ticket, ctx)
            yield

    run_schedule(w, [("p", producer), ("x", slow_proxy, True)], mode="seeded-random")
    assert events[-1] == ("flush-done", 5)
    assert [t for kind, t in events if kind == "complete"] == list(range(6))


def test_wait_on_stopped_proxy_raises():
    w = make_world()
    q = RequestQueue(w, capacity=4)
    q.proxy_alive = False

    def producer(ctx):
        t = yield from q.push(Request(PUT), ctx)
        with pytest.raises(ProxyDownError):
            yield from q.wait_completed(t, ctx)

    run_schedule(w, [("p", producer)])


def test_flush_kind_request_flows_through():
    w = make_world()
    q = RequestQueue(w, capacity=4)
    kinds = []

    def producer(ctx):
        yield from q.push(Request(PUT), ctx)
        t = yield from q.push(Request(FLUSH), ctx)
        yield from q.wait_completed(t, ctx)

    run_schedule(w, [("p", producer),
                     ("x", _drain_proxy(q, lambda r: kinds.append(r.kind)), True)])
    assert kinds == [PUT, FLUSH]
