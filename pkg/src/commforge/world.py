"""Simulated cluster substrate: ranks, memory regions, semaphores, topology.

Regions are byte-addressable numpy arrays owned by one rank. Semaphores are
monotonic 64-bit counters with release/acquire clock semantics: an increment
publishes the incrementer's vector clock, a successful wait joins it.
"""

from __future__ import annotations

import os
from dataclasses import dataclass, field

import numpy as np

from .clocks import clock_join_into
from .errors import BadDeltaError, BadSizeError, NoSemError, OutOfBoundsError

INTRA = "intra"
INTER = "inter"

SEED_ENV_VAR = "COMMFORGE_SEED"


class Region:
    __slots__ = ("id", "rank", "data")

    def __init__(self, region_id: int, rank: int, length: int):
        self.id = region_id
        self.rank = rank
        self.data = np.zeros(length, dtype=np.uint8)

    def __len__(self) -> int:
        return len(self.data)

    def check_range(self, offset: int, size: int) -> None:
        if offset < 0 or size < 0 or offset + size > len(self.data):
            raise OutOfBoundsError(
                f"region {self.id}: [{offset},{offset + size}) exceeds length {len(self.data)}"
            )


class Semaphore:
    __slots__ = ("id", "rank", "value", "release_clock", "add_events")

    def __init__(self, sem_id: int, rank: int):
        self.id = sem_id
        self.rank = rank
        self.value = 0
        self.release_clock: dict[int, int] = {}
        # trace event ids of each unit increment, for timed replay
        self.add_events: list[int] = []


@dataclass(frozen=True)
class Topology:
    num_nodes: int
    gpus_per_node: int
    intra_kind: str = "switch-attached"  # or "peer-mesh"

    @property
    def num_ranks(self) -> int:
        return self.num_nodes * self.gpus_per_node

    def node_of(self, rank: int) -> int:
        return rank // self.gpus_per_node

    def link_class(self, a: int, b: int) -> str:
        return INTRA if self.node_of(a) == self.node_of(b) else INTER

    def links(self) -> set[tuple[int, int, str]]:
        out = set()
        n = self.num_ranks
        for a in range(n):
            for b in range(n):
                if a != b:
                    out.add((a, b, self.link_class(a, b)))
        return out


@dataclass
class SimWorld:
    """The simulated cluster shared by all execution contexts."""

    num_nodes: int = 1
    gpus_per_node: int = 1
    intra_kind: str = "switch-attached"
    seed: int = 0
    regions: dict[int, Region] = field(default_factory=dict)
    semaphores: dict[int, Semaphore] = field(default_factory=dict)

    def __post_init__(self):
        if self.num_nodes * self.gpus_per_node < 1:
            raise BadSizeError("world needs at least one rank")
        env = os.environ.get(SEED_ENV_VAR)
        if env is not None:
            self.seed = int(env)
        self.topology = Topology(self.num_nodes, self.gpus_per_node, self.intra_kind)
        self._next_region = 0
        self._next_sem = 0
        # bumped on every observable mutation; lets the scheduler skip
        # re-polling blocked contexts until something changed
        self.version = 0
        from .racedet import RaceDetector

        self.detector = RaceDetector(self)

    @property
    def num_ranks(self) -> int:
        return self.num_nodes * self.gpus_per_node

    # -- memory ---------------------------------------------------------

    def alloc_region(self, rank: int, length: int) -> int:
        if length <= 0:
            raise BadSizeError(f"region length must be positive, got {length}")
        if not 0 <= rank < self.num_ranks:
            raise OutOfBoundsError(f"rank {rank} out of range")
        rid = self._next_region
        self._next_region = rid + 1
        self.regions[rid] = Region(rid, rank, length)
        return rid

    def free_region(self, rid: int) -> None:
        self.regions.pop(rid, None)

    def region(self, rid: int) -> Region:
        return self.regions[rid]

    def write(self, rid: int, offset: int, payload: np.ndarray) -> None:
        reg = self.regions[rid]
        reg.check_range(offset, len(payload))
        reg.data[offset : offset + len(payload)] = payload
        self.version += 1

    def read(self, rid: int, offset: int, size: int) -> np.ndarray:
        reg = self.regions[rid]
        reg.check_range(offset, size)
        return reg.data[offset : offset + size].copy()

    # -- semaphores -----------------------------------------------------

    def new_semaphore(self, rank: int) -> int:
        sid = self._next_sem
        self._next_sem = sid + 1
        self.semaphores[sid] = Semaphore(sid, rank)
        return sid

    def sem_add(self, sem_id: int, delta: int, ctx, event_id: int = -1,
                extra_release: list[dict] | None = None) -> int:
        """Atomic increment with release ordering from ctx's prior writes.

        extra_release carries clocks of asynchronous work that must be
        published with this increment (the fence-before-signal discipline).
        """
        sem = self.semaphores.get(sem_id)
        if sem is None:
            raise NoSemError(f"no semaphore {sem_id}")
        if delta < 1:
            raise BadDeltaError("semaphore delta must be >= 1")
        ctx.bump()
        clock_join_into(sem.release_clock, ctx.clock)
        if extra_release:
            for clk in extra_release:
                clock_join_into(sem.release_clock, clk)
        sem.value += delta
        if event_id >= 0:
            sem.add_events.extend([event_id] * delta)
        self.version += 1
        return sem.value

    def sem_wait_geq(self, sem_id: int, expected: int, ctx):
        """Generator: returns once the semaphore reached expected (acquire)."""
        sem = self.semaphores.get(sem_id)
        if sem is None:
            raise NoSemError(f"no semaphore {sem_id}")
        from .sched import BLOCKED  # local import to avoid cycle

        while sem.value < expected:
            ctx.block_reason = f"sem {sem_id} < {expected} (is {sem.value})"
            yield BLOCKED
        clock_join_into(ctx.clock, sem.release_clock)


def make_world(num_nodes=1, gpus_per_node=1, intra_kind="switch-attached", seed=0) -> SimWorld:
    return SimWorld(num_nodes, gpus_per_node, intra_kind, seed)
