"""Happens-before race detector over byte ranges.

Each recorded access carries a vector-clock snapshot. Two accesses conflict
iff their ranges overlap, at least one writes, and neither clock
happens-before the other. Granularity is the byte range of each primitive
operation, matching chunk-level dependence tracking.
"""

from __future__ import annotations

from dataclasses import dataclass

from .clocks import clock_leq
from .errors import OutOfBoundsError

READ = 0
WRITE = 1


@dataclass(frozen=True)
class AccessRecord:
    ctx: str
    region: int
    lo: int
    hi: int
    kind: int  # READ or WRITE
    clock: dict
    label: str = ""


@dataclass(frozen=True)
class RaceReport:
    region: int
    lo: int  # overlapping byte range
    hi: int
    first: AccessRecord
    second: AccessRecord

    def __str__(self) -> str:
        return (
            f"race on region {self.region} bytes [{self.lo},{self.hi}): "
            f"{self.first.label or self.first.ctx} vs {self.second.label or self.second.ctx}"
        )


class RaceDetector:
    """Stores access history per region and reports conflicting pairs."""

    def __init__(self, world):
        self.world = world
        self._records: dict[int, list[AccessRecord]] = {}
        self.reports: list[RaceReport] = []
        self.enabled = True

    def reset(self) -> None:
        self._records.clear()
        self.reports.clear()

    def record(self, ctx_name: str, region_id: int, offset: int, size: int,
               kind: int, clock: dict, label: str = "") -> RaceReport | None:
        """Record one access; returns a report iff it races with history.

        The clock must be a snapshot that will not be mutated afterwards.
        """
        reg = self.world.regions.get(region_id)
        if reg is None or offset < 0 or size < 0 or offset + size > len(reg.data):
            raise OutOfBoundsError(f"access [{offset},{offset + size}) on region {region_id}")
        if not self.enabled or size == 0:
            return None
        rec = AccessRecord(ctx_name, region_id, offset, offset + size, kind, clock, label)
        history = self._records.setdefault(region_id, [])
        report = None
        keep = []
        is_write = kind == WRITE
        for old in history:
            if old.hi <= rec.lo or rec.hi <= old.lo:  # disjoint
                keep.append(old)
                continue
            ordered_before = clock_leq(old.clock, rec.clock)
            if (is_write or old.kind == WRITE) and not ordered_before \
                    and not clock_leq(rec.clock, old.clock):
                rep = RaceReport(region_id, max(old.lo, rec.lo), min(old.hi, rec.hi), old, rec)
                self.reports.append(rep)
                if report is None:
                    report = rep
            # a write that covers an ordered-before record subsumes it:
            # any later conflict with the old record also conflicts with us
            if is_write and ordered_before and old.lo >= rec.lo and old.hi <= rec.hi:
                continue
            keep.append(old)
        keep.append(rec)
        self._records[region_id] = keep
        return report
