"""Cooperative deterministic scheduler.

Execution contexts are Python generators. A context yields None at a
scheduling point after making progress and yields BLOCKED when it cannot
proceed; blocking primitives are polling loops, so resuming a blocked
context re-evaluates its condition against current world state.

Blocked contexts are only re-polled after the world's version counter
changed, which makes quiescence detection exact: if no context is runnable
and a live non-daemon context remains, no future step can unblock anyone
and the run deadlocked.
"""

from __future__ import annotations

import random

from .errors import DeadlockError

BLOCKED = object()

_ROUND_ROBIN = "round-robin"
_SEEDED_RANDOM = "seeded-random"


class Context:
    __slots__ = ("name", "axis", "gen", "clock", "daemon", "finished",
                 "blocked", "blocked_version", "block_reason")

    def __init__(self, name: str, axis: int, daemon: bool = False):
        self.name = name
        self.axis = axis
        self.gen = None
        self.clock: dict[int, int] = {axis: 1}
        self.daemon = daemon
        self.finished = False
        self.blocked = False
        self.blocked_version = -1
        self.block_reason = ""

    def bump(self) -> None:
        self.clock[self.axis] = self.clock.get(self.axis, 0) + 1

    def snapshot(self) -> dict[int, int]:
        return dict(self.clock)


class Scheduler:
    def __init__(self, world, mode: str = _ROUND_ROBIN, seed: int | None = None,
                 record_steps: bool = False):
        if mode not in (_ROUND_ROBIN, _SEEDED_RANDOM):
            raise ValueError(f"unknown schedule mode {mode!r}")
        self.world = world
        self.mode = mode
        self.rng = random.Random(world.seed if seed is None else seed)
        self.contexts: list[Context] = []
        self.steps = 0
        self.trace: list | None = [] if record_steps else None
        self.events: list[tuple] = []
        self.step_hooks: list = []
        self._next_axis = 0
        self._rr_index = 0

    def new_axis(self) -> int:
        axis = self._next_axis
        self._next_axis = axis + 1
        return axis

    def spawn(self, name: str, fn, daemon: bool = False) -> Context:
        ctx = Context(name, self.new_axis(), daemon)
        ctx.gen = fn(ctx)
        self.contexts.append(ctx)
        return ctx

    def emit(self, *event) -> int:
        """Append a semantic trace event, returning its id."""
        eid = len(self.events)
        self.events.append((self.steps,) + event)
        return eid

    def _runnable(self) -> list[Context]:
        version = self.world.version
        return [c for c in self.contexts
                if not c.finished and (not c.blocked or c.blocked_version != version)]

    def run(self, max_steps: int | None = None) -> list[tuple]:
        """Drive all contexts to completion or deadlock; returns the trace.

        Daemons (proxy workers) keep running after the last worker finishes
        until they quiesce, then are shut down.
        """
        while True:
            runnable = self._runnable()
            if not runnable:
                live_workers = [c for c in self.contexts if not c.finished and not c.daemon]
                if live_workers:
                    blocked = [(c.name, c.block_reason)
                               for c in self.contexts if not c.finished and c.blocked]
                    raise DeadlockError(blocked)
                for c in self.contexts:
                    if not c.finished:
                        c.gen.close()
                        c.finished = True
                return self.events if self.trace is None else self.trace + self.events

            if self.mode == _SEEDED_RANDOM:
                ctx = runnable[self.rng.randrange(len(runnable))]
            else:
                ctx = runnable[self._rr_index % len(runnable)]
                self._rr_index += 1

            self.steps += 1
            if max_steps is not None and self.steps > max_steps:
                raise RuntimeError(f"scheduler exceeded {max_steps} steps")
            if self.trace is not None:
                self.trace.append((self.steps, "resume", ctx.name))
            try:
                value = next(ctx.gen)
            except StopIteration:
                ctx.finished = True
                ctx.blocked = False
            else:
                if value is BLOCKED:
                    ctx.blocked = True
                    ctx.blocked_version = self.world.version
                else:
                    ctx.blocked = False
            if self.step_hooks:
                for hook in self.step_hooks:
                    hook()


def run_schedule(world, contexts, mode: str = _ROUND_ROBIN, record_steps: bool = True):
    """Run a set of (name, fn) or (name, fn, daemon) contexts to completion.

    Seeded-random mode draws its schedule from world.seed, so a fixed seed
    reproduces the trace exactly.
    """
    sched = Scheduler(world, mode, record_steps=record_steps)
    for spec in contexts:
        name, fn, daemon = spec if len(spec) == 3 else (*spec, False)
        sched.spawn(name, fn, daemon)
    return sched.run()
