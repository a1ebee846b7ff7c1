"""Exhaustive small-model exploration of the bilateral link.

Runs every structured workload of up to three tokens against every single
disturbance injection point reachable in its baseline trace, then checks
the joint end state for bilateral agreement and one-terminal-outcome
atomicity. The explorer drives the link only through its public surface,
so it is an independent route to the same claims the protocol code makes.
"""

from __future__ import annotations

from dataclasses import dataclass, field

from .ae import AeLink
from .errors import LinkBusy
from .kernel import Simulator
from .ledger import DELIVERED, REJECTED, REVERSED, TokenLedger

LAT = 1_000
CAD = 100_000

# (delay after previous initiation, initiating node) per token.
WORKLOADS: dict[str, tuple[tuple[int, str], ...]] = {
    "single": ((0, "A"),),
    "two-sequential": ((0, "A"), (4 * LAT, "A")),
    "two-crossing": ((0, "A"), (0, "B")),
    "two-staggered": ((0, "A"), (LAT // 2, "B")),
    "three-sequential": ((0, "A"), (4 * LAT, "A"), (4 * LAT, "A")),
    "three-mixed": ((0, "A"), (0, "B"), (4 * LAT, "A")),
}


@dataclass
class Violation:
    workload: str
    inject_at: int
    duration: int
    reason: str


@dataclass
class ExplorationReport:
    runs: int = 0
    states_checked: int = 0
    violations: list[Violation] = field(default_factory=list)

    @property
    def ok(self) -> bool:
        return not self.violations


class _Driver:
    """Kicks tokens into the link, queueing while the initiator is busy."""

    def __init__(self, sim: Simulator, link: AeLink):
        self.link = link
        self.queues: dict[str, list[int]] = {n: [] for n in link.nodes}
        sim.register("driver", self._on_kick)
        link.on_ready(self._on_ready)

    def _on_kick(self, ev):
        node, token = ev.payload
        self._try(node, token)

    def _try(self, node: str, token: int) -> None:
        try:
            self.link.initiate(node, token)
        except LinkBusy:
            self.queues[node].append(token)

    def _on_ready(self, _link_id: str, node: str) -> None:
        if self.queues[node]:
            self._try(node, self.queues[node].pop(0))


def _build(workload):
    sim = Simulator(seed=0)
    led = TokenLedger()
    link = AeLink(sim, led, "link-0", "A", "B", latency=LAT, cadence=CAD)
    driver = _Driver(sim, link)
    tokens = []
    t = 0
    for delay, node in workload:
        t += delay
        tok = led.mint(node)
        tokens.append(tok.token_id)
        sim.schedule(t, "driver", "kick", (node, tok.token_id))
    return sim, led, link, tokens


def _baseline_times(workload) -> list[int]:
    sim, led, link, _ = _build(workload)
    sim.run_to_quiescence(max_events=10_000)
    return sorted({ev.at for ev in sim.trace})


def _check_run(report, name, inject_at, duration, sim, led, link, tokens):
    report.runs += 1
    report.states_checked += len(sim.trace)

    def fail(reason):
        report.violations.append(Violation(name, inject_at, duration, reason))

    if not link.quiescent():
        fail("link did not return to quiescence")
        return
    fates_a, fates_b = link.fate_tables()
    if fates_a != fates_b:
        fail(f"bilateral disagreement {fates_a} vs {fates_b}")
    for tok in tokens:
        state = led.state(tok)
        history = [s for s, _ in led.history(tok)]
        terminal_hits = [s for s in history if s in (DELIVERED, REJECTED)]
        if state == DELIVERED:
            if fates_a.get(tok) != DELIVERED or fates_b.get(tok) != DELIVERED:
                fail(f"token {tok} delivered but peers do not both record it")
            if len(terminal_hits) != 1:
                fail(f"token {tok} has {len(terminal_hits)} terminal transitions")
        elif state == REVERSED:
            if tok in fates_a or tok in fates_b:
                fail(f"token {tok} reversed but a peer kept partial state")
            if terminal_hits:
                fail(f"token {tok} reversed after a terminal transition")
        else:
            fail(f"token {tok} ended in nonterminal state {state}")
    audit = led.audit()
    if audit.unaccounted != 0:
        fail(f"unaccounted tokens: {audit.unaccounted}")


def explore_single_disturbance(
    durations: tuple[int, ...] = (2 * LAT, 4 * CAD),
) -> ExplorationReport:
    """Run every workload x injection-point x duration combination.

    Injection points are taken one tick either side of, and exactly at,
    every event time in the undisturbed baseline, which covers every
    distinct interleaving a single sever can produce.
    """
    report = ExplorationReport()
    for name, workload in WORKLOADS.items():
        times = _baseline_times(workload)
        points = sorted({max(0, t + d) for t in times for d in (-1, 0, 1)})
        for inject_at in points:
            for duration in durations:
                sim, led, link, tokens = _build(workload)
                link.disturb(inject_at, duration)
                sim.run_to_quiescence(max_events=50_000)
                if sim.pending():
                    report.violations.append(
                        Violation(name, inject_at, duration, "run did not drain")
                    )
                    continue
                _check_run(report, name, inject_at, duration, sim, led, link, tokens)
    return report
