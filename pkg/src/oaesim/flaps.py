"""Physical disturbance generator.

Each link flaps as a memoryless process with per-link mean time to flap T,
so a pool of N links sees a flap roughly every T/N. Schedules are generated
ahead of a run from per-link streams, which makes the same seed produce the
same schedule regardless of which protocol later consumes it. That is what
allows paired runs to face identical physics.
"""

from __future__ import annotations

import csv
import io
from dataclasses import dataclass, field

from .errors import ConfigurationError
from .kernel import Simulator, rng_stream

SEVER = "flap.sever"
RESTORE = "flap.restore"


@dataclass(frozen=True)
class FlapParams:
    mttf: int                      # per-link mean time between flap starts, ticks
    links: int                     # number of independent links
    duration_kind: str = "fixed"   # "fixed" or "exponential"
    duration: int = 10_000_000     # fixed value, or mean when exponential
    seed: int = 0

    def __post_init__(self):
        if self.mttf <= 0:
            raise ValueError("mttf must be positive")
        if self.links < 1:
            raise ValueError("links must be >= 1")
        if self.duration <= 0:
            raise ValueError("duration must be positive")
        if self.duration_kind not in ("fixed", "exponential"):
            raise ValueError(f"unknown duration kind {self.duration_kind!r}")


@dataclass(frozen=True)
class FlapEntry:
    link: int
    start: int
    duration: int


@dataclass
class FlapSchedule:
    entries: list[FlapEntry] = field(default_factory=list)

    def cluster_interflap_mean(self) -> float:
        """Mean gap between consecutive flap starts across the whole pool."""
        starts = [e.start for e in self.entries]
        if len(starts) < 2:
            return float("nan")
        return (starts[-1] - starts[0]) / (len(starts) - 1)

    def to_csv(self) -> str:
        buf = io.StringIO()
        writer = csv.writer(buf)
        writer.writerow(["link", "start", "duration"])
        for e in self.entries:
            writer.writerow([e.link, e.start, e.duration])
        return buf.getvalue()

    @classmethod
    def from_csv(cls, text: str) -> "FlapSchedule":
        reader = csv.reader(io.StringIO(text))
        header = next(reader)
        if header != ["link", "start", "duration"]:
            raise ConfigurationError(f"unexpected schedule header {header!r}")
        entries = [FlapEntry(int(a), int(b), int(c)) for a, b, c in reader if a]
        return cls(entries)


def cluster_mttf(mttf: float, links: int) -> float:
    """Expected time between flaps for a pool of `links` independent links."""
    if links < 1:
        raise ValueError("links must be >= 1")
    return mttf / links


def generate_flap_schedule(params: FlapParams, horizon: int) -> FlapSchedule:
    if horizon <= 0:
        raise ValueError("horizon must be positive")
    entries: list[FlapEntry] = []
    for link in range(params.links):
        rng = rng_stream(params.seed, f"flap.{link}")
        t = 0
        while True:
            t += max(1, round(rng.expovariate(1.0 / params.mttf)))
            if t >= horizon:
                break
            if params.duration_kind == "fixed":
                dur = params.duration
            else:
                dur = max(1, round(rng.expovariate(1.0 / params.duration)))
            entries.append(FlapEntry(link, t, dur))
    entries.sort(key=lambda e: (e.start, e.link))
    return FlapSchedule(entries)


def inject(schedule: FlapSchedule, sim: Simulator, link_targets: list[str]) -> int:
    """Turn each entry into a sever/restore event pair on its link.

    Returns the number of disturbance events scheduled. Injection order is
    the schedule order, so two runs injecting the same schedule first get
    identical event ids for the disturbance sub-trace.
    """
    count = 0
    for e in schedule.entries:
        if e.link < 0 or e.link >= len(link_targets):
            raise ConfigurationError(f"schedule refers to unknown link index {e.link}")
        target = link_targets[e.link]
        sim.schedule(e.start, target, SEVER)
        sim.schedule(e.start + e.duration, target, RESTORE)
        count += 2
    return count
