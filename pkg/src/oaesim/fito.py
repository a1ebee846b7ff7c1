"""Forward-in-time-only baseline link.

Unilateral send with timeout-and-retry. The sender's knowledge is a timer:
when the ack fails to arrive it concludes "error" whether the data was
delivered, lost, or still in flight. That conflation is the three-state
collapse, and this module makes it measurable by recording the simulator's
omniscient ground truth next to every belief the sender forms.

Acks are ordinary tokens subject to the same medium loss as data, so
"data delivered, ack lost" (the canonical collapse) is representable.
Exhausted retries reset the link: state is smashed, in-flight copies die,
and undelivered tokens are deliberately dropped from the ledger, which is
what makes the conservation audit fail in exactly the way this design
fails.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional

from . import flaps, ledger as ledger_mod
from .kernel import EventRecord, Simulator

TRUTH_DELIVERED = "delivered"
TRUTH_NOT_DELIVERED = "not-delivered"
TRUTH_UNKNOWABLE = "unknowable-at-t"

BELIEF_OK = "ok"
BELIEF_ERROR = "error"

DELIVER = "fito.deliver"
TIMEOUT = "fito.timeout"


@dataclass(frozen=True)
class FitoConfig:
    timeout: int = 300_000
    max_retries: int = 4
    backoff_factor: float = 2.0
    reset_threshold: int = 1          # consecutive exhausted sends before reset
    amplification_coefficient: float = 0.0
    window: int = 2_000_000           # retry-traffic accounting window, ticks

    def __post_init__(self):
        if self.timeout <= 0:
            raise ValueError("timeout must be positive")
        if self.backoff_factor < 1:
            raise ValueError("backoff factor must be >= 1")
        if self.max_retries < 0:
            raise ValueError("max retries must be >= 0")
        if self.reset_threshold < 1:
            raise ValueError("reset threshold must be >= 1")


@dataclass
class GroundTruthRecord:
    token_id: int
    truth: str
    belief: str


@dataclass
class _Send:
    node: str
    attempt: int = 1


@dataclass
class _Copy:
    token_id: int
    kind: str          # "data" or "ack"
    status: str = "pending"   # pending | delivered | lost


class FitoLink:
    """Timeout-and-retry link between two nodes."""

    def __init__(
        self,
        sim: Simulator,
        ledger: ledger_mod.TokenLedger,
        link_id: str,
        node_a: str,
        node_b: str,
        config: FitoConfig,
        *,
        latency: int = 1_000,
    ):
        self.sim = sim
        self.ledger = ledger
        self.link_id = link_id
        self.nodes = (node_a, node_b)
        self.config = config
        self.latency = latency
        self.down_count = 0
        self.pending: dict[int, _Send] = {}
        self.carried_tokens: set[int] = set()
        self.delivered_tokens: set[int] = set()
        self.dropped_tokens: set[int] = set()
        self.noise_prob = 0.0
        self.retries = 0
        self.duplicates = 0
        self.resets = 0
        self.window_retries = 0
        self.window_sends = 0
        self.window_history: list[int] = []
        self._consecutive_failures = 0
        self._inflight: dict[int, _Copy] = {}
        self._next_copy = 1
        self._rng = sim.rng(f"fito-noise.{link_id}")
        sim.register(link_id, self._handle)

    @property
    def up(self) -> bool:
        return self.down_count == 0

    def other(self, node: str) -> str:
        a, b = self.nodes
        return b if node == a else a

    def send(self, frm: str, token_id: int) -> None:
        """Transmit a token and start the timeout clock. Never blocks."""
        self.ledger.transition(token_id, ledger_mod.IN_TRANSIT, self.sim.now)
        self.pending[token_id] = _Send(node=frm)
        self.carried_tokens.add(token_id)
        self.window_sends += 1
        self._transmit(token_id, "data")
        self.sim.schedule(
            self.sim.now + self.config.timeout, self.link_id, TIMEOUT, (token_id, 1)
        )

    def disturb(self, at: int, duration: int) -> None:
        self.sim.schedule(at, self.link_id, flaps.SEVER)
        self.sim.schedule(at + duration, self.link_id, flaps.RESTORE)

    # ---------------------------------------------------------- internals

    def _transmit(self, token_id: int, kind: str) -> None:
        copy = _Copy(token_id, kind)
        cid = self._next_copy
        self._next_copy += 1
        self._inflight[cid] = copy
        if not self.up:
            copy.status = "lost"
            return
        if self.noise_prob > 0 and self._rng.random() < self.noise_prob:
            copy.status = "lost"   # retry-induced noise claims the frame
            return
        self.sim.schedule(self.sim.now + self.latency, self.link_id, DELIVER, cid)

    def _truth_now(self, token_id: int) -> str:
        if token_id in self.delivered_tokens:
            return TRUTH_DELIVERED
        for copy in self._inflight.values():
            if copy.token_id == token_id and copy.kind == "data" and copy.status == "pending":
                return TRUTH_UNKNOWABLE
        return TRUTH_NOT_DELIVERED

    def _belief(self, token_id: int, belief: str) -> None:
        record = GroundTruthRecord(token_id, self._truth_now(token_id), belief)
        self.sim.emit(self.link_id, "fito.belief", record)

    def _handle(self, ev: EventRecord) -> None:
        if ev.kind == DELIVER:
            self._on_deliver(ev)
        elif ev.kind == TIMEOUT:
            self._on_timeout(ev)
        elif ev.kind == flaps.SEVER:
            self._on_sever()
        elif ev.kind == flaps.RESTORE:
            self.down_count -= 1

    def _on_sever(self) -> None:
        if self.down_count == 0:
            for copy in self._inflight.values():
                if copy.status == "pending":
                    copy.status = "lost"
        self.down_count += 1

    def _on_deliver(self, ev: EventRecord) -> None:
        copy = self._inflight.get(ev.payload)
        if copy is None or copy.status != "pending":
            return
        copy.status = "delivered"
        if copy.kind == "data":
            if copy.token_id in self.delivered_tokens:
                self.duplicates += 1
                self.sim.emit(self.link_id, "fito.duplicate", copy.token_id)
            elif copy.token_id in self.dropped_tokens:
                # A reset already wrote this token off; the late copy lands
                # on the receiver with no sender-side state to notice.
                self.duplicates += 1
                self.sim.emit(self.link_id, "fito.duplicate", copy.token_id)
            else:
                self.delivered_tokens.add(copy.token_id)
                self.ledger.transition(copy.token_id, ledger_mod.DELIVERED, self.sim.now)
            self._transmit(copy.token_id, "ack")
        else:
            send = self.pending.pop(copy.token_id, None)
            if send is None:
                return   # belief already settled for this token
            self._belief(copy.token_id, BELIEF_OK)
            self._consecutive_failures = 0

    def _on_timeout(self, ev: EventRecord) -> None:
        token_id, attempt = ev.payload
        send = self.pending.get(token_id)
        if send is None or send.attempt != attempt:
            return   # acked, retried, or smashed in the meantime
        self._belief(token_id, BELIEF_ERROR)
        if send.attempt <= self.config.max_retries:
            send.attempt += 1
            self.retries += 1
            self.window_retries += 1
            self.sim.emit(self.link_id, "fito.retry", token_id)
            self._transmit(token_id, "data")
            wait = round(self.config.timeout * self.config.backoff_factor ** (send.attempt - 1))
            self.sim.schedule(
                self.sim.now + wait, self.link_id, TIMEOUT, (token_id, send.attempt)
            )
        else:
            del self.pending[token_id]
            self._consecutive_failures += 1
            if self._consecutive_failures >= self.config.reset_threshold:
                self._reset()

    def _reset(self) -> None:
        """Smash-and-restart: clear link state, lose what was in flight."""
        self.resets += 1
        self.sim.emit(self.link_id, "fito.reset", None)
        for copy in self._inflight.values():
            if copy.status == "pending":
                copy.status = "lost"
        for token_id in sorted(self.pending):
            self._belief(token_id, BELIEF_ERROR)
        self.pending.clear()
        for token_id in sorted(
            t for t in self.ledger.token_ids()
            if self.ledger.state(t) == ledger_mod.IN_TRANSIT
            and t not in self.dropped_tokens
        ):
            self.ledger.drop(token_id)
            self.dropped_tokens.add(token_id)
        self._consecutive_failures = 0

    # ------------------------------------------------------ amplification

    def close_window(self) -> int:
        """Roll the retry-traffic window; returns retries seen in it."""
        retries = self.window_retries
        self.window_history.append(retries)
        self.window_retries = 0
        self.window_sends = 0
        return retries


def amplification_step(links: list[FitoLink], config: FitoConfig) -> float:
    """Feed last-window retry traffic back into the loss rate.

    Per-link disturbance probability rises by coefficient x (retry traffic
    this window, normalized per send). With the coefficient at zero the
    loop is open and the rate stays put. Returns the new noise probability.
    """
    noise = 0.0
    for link in links:
        sends = max(1, link.window_sends)
        traffic = link.window_retries / sends
        noise = min(0.95, config.amplification_coefficient * traffic)
        link.close_window()
        link.noise_prob = noise
    return noise


def collapse_census(trace: list[EventRecord]) -> dict[str, dict[str, int]]:
    """Count (truth x belief) pairs over a completed run's trace.

    FITO belief records come from ack arrivals and timeouts. For bilateral
    links the commit, reversal, and rejection events are counted as the
    corresponding (truth, belief) pairs; they land on the diagonal by
    construction, which is the point of the comparison.
    """
    census = {
        truth: {BELIEF_OK: 0, BELIEF_ERROR: 0}
        for truth in (TRUTH_DELIVERED, TRUTH_NOT_DELIVERED, TRUTH_UNKNOWABLE)
    }
    for ev in trace:
        if ev.kind == "fito.belief":
            rec = ev.payload
            census[rec.truth][rec.belief] += 1
        elif ev.kind == "ae.commit":
            census[TRUTH_DELIVERED][BELIEF_OK] += 1
        elif ev.kind in ("ae.reverse", "ae.reject"):
            census[TRUTH_NOT_DELIVERED][BELIEF_ERROR] += 1
    return census


def collapse_count(census: dict[str, dict[str, int]]) -> int:
    """The collapse measure: errors declared against delivered or unknowable truth."""
    return (
        census[TRUTH_DELIVERED][BELIEF_ERROR]
        + census[TRUTH_UNKNOWABLE][BELIEF_ERROR]
    )
