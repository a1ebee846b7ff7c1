"""Bilateral atomic link.

Two identical peer state machines joined by a dumb full-duplex medium.
A transfer is a three-hop exchange:

    propose  (initiator -> responder)   token leaves the initiator
    reflect  (responder -> initiator)   responder echoes the token back
    confirm  (initiator -> responder)   initiator proves it saw the echo

Delivery is recorded at the instant the initiator observes the reflection,
never earlier, so the ledger cannot show a delivered token whose reflection
has not fired. Any transfer interrupted before that instant reverses: both
peers restore their pre-transfer state and the token returns to its sender
as a recorded excursion, not a loss.

A disturbance is a modeled physical input, not a protocol error. Tokens in
flight at the moment of a sever are destroyed; the peers notice through the
absence of an expected token, enter a recovery state, and resolve every
outstanding transfer to exactly one of delivered or reversed. If the medium
stays dead past the detection deadline, both peers independently conclude
disconnection and notify the topology layer, whose job single-link recovery
then becomes.

Either node may initiate; each peer therefore runs an initiator half and a
responder half, which is what lets simultaneous transfers in opposite
directions proceed independently. The held-token invariant applies per
half: the initiator half holds a token exactly while proposing or
reversing, the responder half exactly while reflecting.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass, field
from typing import Callable, Optional

from . import flaps, ledger as ledger_mod
from .errors import IllegalReversal, LinkBusy, ProtocolViolation
from .kernel import EventRecord, Simulator

IDLE = "idle"
PROPOSED = "proposed"
REFLECTED = "reflected"
COMMITTED = "committed"
REVERSING = "reversing"
RECOVERING = "recovering"
DISCONNECTED = "disconnected"

OPERATIONAL = "operational"

DELIVER = "ae.deliver"
DEADLINE = "ae.deadline"
LIVENESS = "ae.liveness"
RECOVER_DONE = "ae.recover.done"


@dataclass
class PeerState:
    """One side of the link.

    `out_*` is the initiator half (transfers this node starts), `in_*` the
    responder half. `condition` is the link-level health this peer believes
    in: operational, recovering, or disconnected.
    """

    node: str
    out_phase: str = IDLE
    out_token: Optional[int] = None
    in_phase: str = IDLE
    in_token: Optional[int] = None
    condition: str = OPERATIONAL
    fates: dict[int, str] = field(default_factory=dict)
    last_quiescent_digest: str = ""
    # deadline slots: value is the tick by which a token is expected
    out_expect: Optional[int] = None
    in_expect: Optional[int] = None
    live_expect: Optional[int] = None

    @property
    def phase(self) -> str:
        """Composite phase for reporting; role fields carry the detail."""
        if self.condition != OPERATIONAL:
            return self.condition
        if self.out_phase != IDLE:
            return self.out_phase
        if self.in_phase != IDLE:
            return self.in_phase
        return IDLE

    @property
    def held_token(self) -> Optional[int]:
        return self.out_token if self.out_token is not None else self.in_token

    def digest(self) -> str:
        blob = json.dumps(
            [
                self.out_phase,
                self.out_token,
                self.in_phase,
                self.in_token,
                self.condition,
                sorted(self.fates.items()),
            ],
            separators=(",", ":"),
        )
        return hashlib.sha256(blob.encode()).hexdigest()

    def roles_idle(self) -> bool:
        return self.out_phase == IDLE and self.in_phase == IDLE

    def is_quiescent(self) -> bool:
        return self.roles_idle() and self.condition == OPERATIONAL


@dataclass
class Transfer:
    transfer_id: int
    token_id: int
    initiator: str
    responder: str
    committed: bool = False   # initiator observed the reflection
    rejected: bool = False    # responder refused admission


@dataclass(frozen=True)
class TransitionRecord:
    at: int
    kind: str
    node: str
    before: str
    after: str


@dataclass(frozen=True)
class RecoveryTranscript:
    at: int
    resolved: tuple[tuple[int, str], ...]   # (token_id, fate)


@dataclass(frozen=True)
class DetectionRecord:
    at: int
    node: str


class AeLink:
    """A bilateral link living inside one simulation instance."""

    def __init__(
        self,
        sim: Simulator,
        ledger: ledger_mod.TokenLedger,
        link_id: str,
        node_a: str,
        node_b: str,
        *,
        latency: int = 1_000,
        cadence: int = 1_000_000,
        deadline_factor: int = 3,
        admission: Callable[[int], bool] | None = None,
    ):
        self.sim = sim
        self.ledger = ledger
        self.link_id = link_id
        self.nodes = (node_a, node_b)
        self.latency = latency
        self.cadence = cadence
        self.deadline = deadline_factor * cadence
        if self.deadline <= 2 * latency:
            raise ValueError("detection deadline must exceed a round trip")
        self.admission = admission
        self.peers = {node_a: PeerState(node_a), node_b: PeerState(node_b)}
        self.down_count = 0
        self.epoch = 0
        self.outstanding: dict[int, Transfer] = {}
        self.delegated = False   # a topology coordinator owns resolution
        self.liveness_until = 0
        self.recoveries = 0
        self.recovery_log: list[RecoveryTranscript] = []
        self.detection_log: list[DetectionRecord] = []
        self._tid = 0
        self._recover_round = 0
        self._on_down: list[Callable[[str, str], None]] = []
        self._on_ready: list[Callable[[str, str], None]] = []
        self._on_resolved: list[Callable[[str, int, str], None]] = []
        sim.register(link_id, self._handle)
        self._maybe_snapshot()

    # ------------------------------------------------------------------ API

    @property
    def up(self) -> bool:
        return self.down_count == 0

    def other(self, node: str) -> str:
        a, b = self.nodes
        return b if node == a else a

    def peer(self, node: str) -> PeerState:
        return self.peers[node]

    def on_down(self, cb: Callable[[str, str], None]) -> None:
        self._on_down.append(cb)

    def on_ready(self, cb: Callable[[str, str], None]) -> None:
        self._on_ready.append(cb)

    def on_resolved(self, cb: Callable[[str, int, str], None]) -> None:
        self._on_resolved.append(cb)

    def initiate(self, frm: str, token_id: int) -> int:
        peer = self.peers[frm]
        if peer.condition != OPERATIONAL or peer.out_phase != IDLE:
            raise LinkBusy(
                f"{frm} cannot initiate on {self.link_id}: phase={peer.phase}"
            )
        # Ledger legality gates retries: created or reversed may enter.
        self.ledger.transition(token_id, ledger_mod.IN_TRANSIT, self.sim.now)
        self._tid += 1
        tid = self._tid
        self.outstanding[tid] = Transfer(tid, token_id, frm, self.other(frm))
        peer.out_phase = PROPOSED
        peer.out_token = token_id
        self._send(frm, "propose", tid)
        self._arm(frm, "out")
        return tid

    def reverse(self, transfer_id: int) -> None:
        """Voluntarily abort an outstanding transfer back to equilibrium."""
        transfer = self.outstanding.get(transfer_id)
        if transfer is None:
            raise IllegalReversal(f"transfer {transfer_id} unknown or complete")
        if transfer.committed:
            raise IllegalReversal(f"transfer {transfer_id} is committed")
        if transfer.rejected:
            raise IllegalReversal(f"transfer {transfer_id} was already rejected")
        initiator = self.peers[transfer.initiator]
        initiator.out_phase = REVERSING
        self._apply_resolution(transfer, ledger_mod.REVERSED)
        del self.outstanding[transfer_id]
        self._maybe_snapshot()
        self._notify_ready(transfer.initiator)

    def disturb(self, at: int, duration: int) -> None:
        """Schedule a sever/restore pair on this link."""
        self.sim.schedule(at, self.link_id, flaps.SEVER)
        self.sim.schedule(at + duration, self.link_id, flaps.RESTORE)

    def start_liveness(self, until: int) -> None:
        """Emit liveness tokens each cadence until the given tick.

        Liveness is what makes `the absence of the expected token` an
        observable on an otherwise idle link.
        """
        self.liveness_until = until
        for node in self.nodes:
            self.sim.schedule(self.sim.now + self.cadence, self.link_id, LIVENESS, node)
            self._arm(node, "live")

    def step(self) -> TransitionRecord:
        """Advance the link by its next pending event (test instrumentation)."""
        ev = self.sim.next_event_for(self.link_id)
        if ev is None:
            raise ProtocolViolation(f"no event pending on {self.link_id}")
        before = {n: self.peers[n].phase for n in self.nodes}
        self.sim.run_until(ev.at)
        changed = [n for n in self.nodes if self.peers[n].phase != before[n]]
        node = changed[0] if changed else self.nodes[0]
        return TransitionRecord(
            at=ev.at,
            kind=ev.kind,
            node=node,
            before=before[node],
            after=self.peers[node].phase,
        )

    def quiescent(self) -> bool:
        return (
            not self.outstanding
            and all(p.is_quiescent() for p in self.peers.values())
        )

    def fate_tables(self) -> tuple[dict[int, str], dict[int, str]]:
        a, b = self.nodes
        return dict(self.peers[a].fates), dict(self.peers[b].fates)

    # ---------------------------------------------------------- internals

    def _send(self, frm: str, kind: str, transfer_id: Optional[int]) -> None:
        # A dead medium swallows the token; the sender cannot know.
        if not self.up:
            return
        to = self.other(frm)
        self.sim.schedule(
            self.sim.now + self.latency,
            self.link_id,
            DELIVER,
            (kind, transfer_id, to, self.epoch),
        )

    def _arm(self, node: str, slot: str) -> None:
        peer = self.peers[node]
        due = self.sim.now + self.deadline
        setattr(peer, f"{slot}_expect", due)
        self.sim.schedule(due, self.link_id, DEADLINE, (node, slot, due))

    def _slot_waiting(self, peer: PeerState, slot: str) -> bool:
        if slot == "out":
            return peer.out_phase == PROPOSED
        if slot == "in":
            return peer.in_phase == REFLECTED
        return (
            peer.condition != OPERATIONAL
            or self.sim.now <= self.liveness_until
        )

    def _handle(self, ev: EventRecord) -> None:
        if ev.kind == DELIVER:
            self._on_deliver(ev)
        elif ev.kind == DEADLINE:
            self._on_deadline(ev)
        elif ev.kind == LIVENESS:
            self._on_liveness(ev)
        elif ev.kind == RECOVER_DONE:
            self._on_recover_done(ev)
        elif ev.kind == flaps.SEVER:
            self._on_sever()
        elif ev.kind == flaps.RESTORE:
            self._on_restore()

    # -- medium and physics

    def _on_sever(self) -> None:
        if self.down_count == 0:
            self.epoch += 1   # in-flight tokens are destroyed
        self.down_count += 1

    def _on_restore(self) -> None:
        self.down_count -= 1
        if self.down_count > 0:
            return
        # Deliberately leave pre-sever deadline slots armed: an outage that
        # interrupted expected traffic must still surface as a breach (and
        # hence a recovery round) even though the medium is back.
        if self.delegated:
            return
        if any(p.condition != OPERATIONAL for p in self.peers.values()):
            self._start_recovery()
        elif not self.outstanding:
            for node in self.nodes:
                self._notify_ready(node)

    # -- protocol hops

    def _on_deliver(self, ev: EventRecord) -> None:
        kind, tid, to, epoch = ev.payload
        if epoch != self.epoch or not self.up:
            return   # destroyed mid-flight
        peer = self.peers[to]
        if self.sim.now <= self.liveness_until:
            self._arm(to, "live")
        if kind == "live":
            return
        transfer = self.outstanding.get(tid)
        if transfer is None:
            return   # reversed or resolved while in flight
        if kind == "propose":
            self._hop_propose(peer, transfer)
        elif kind == "reflect":
            self._hop_reflect(peer, transfer)
        elif kind == "confirm":
            self._hop_confirm(peer, transfer)
        elif kind == "reject":
            self._hop_reject(peer, transfer)

    def _hop_propose(self, peer: PeerState, transfer: Transfer) -> None:
        if peer.in_phase != IDLE:
            raise ProtocolViolation(
                f"propose arrived at {peer.node} while {peer.in_phase}"
            )
        if self.admission is not None and not self.admission(transfer.token_id):
            transfer.rejected = True
            peer.fates[transfer.token_id] = ledger_mod.REJECTED
            self.ledger.transition(transfer.token_id, ledger_mod.REJECTED, self.sim.now)
            self.sim.emit(self.link_id, "ae.reject", transfer.token_id)
            self._send(peer.node, "reject", transfer.transfer_id)
            return
        peer.in_phase = REFLECTED
        peer.in_token = transfer.token_id
        self._send(peer.node, "reflect", transfer.transfer_id)
        self._arm(peer.node, "in")

    def _hop_reflect(self, peer: PeerState, transfer: Transfer) -> None:
        if peer.out_phase != PROPOSED or transfer.committed:
            raise ProtocolViolation(
                f"reflect arrived at {peer.node} while {peer.out_phase}"
            )
        peer.out_phase = COMMITTED
        peer.out_token = None
        transfer.committed = True
        peer.fates[transfer.token_id] = ledger_mod.DELIVERED
        self.ledger.transition(transfer.token_id, ledger_mod.DELIVERED, self.sim.now)
        self.sim.emit(self.link_id, "ae.commit", transfer.token_id)
        self._send(peer.node, "confirm", transfer.transfer_id)

    def _hop_confirm(self, peer: PeerState, transfer: Transfer) -> None:
        if peer.in_phase != REFLECTED or peer.in_token != transfer.token_id:
            raise ProtocolViolation(
                f"confirm arrived at {peer.node} while {peer.in_phase}"
            )
        peer.in_phase = IDLE
        peer.in_token = None
        peer.fates[transfer.token_id] = ledger_mod.DELIVERED
        initiator = self.peers[transfer.initiator]
        if initiator.out_phase == COMMITTED:
            initiator.out_phase = IDLE
        del self.outstanding[transfer.transfer_id]
        self._notify_resolved(transfer.token_id, ledger_mod.DELIVERED)
        self._maybe_snapshot()
        self._notify_ready(transfer.initiator)

    def _hop_reject(self, peer: PeerState, transfer: Transfer) -> None:
        if peer.out_phase != PROPOSED:
            raise ProtocolViolation(
                f"reject arrived at {peer.node} while {peer.out_phase}"
            )
        peer.out_phase = IDLE
        peer.out_token = None
        peer.fates[transfer.token_id] = ledger_mod.REJECTED
        del self.outstanding[transfer.transfer_id]
        self._notify_resolved(transfer.token_id, ledger_mod.REJECTED)
        self._maybe_snapshot()
        self._notify_ready(transfer.initiator)

    # -- detection and recovery

    def _on_liveness(self, ev: EventRecord) -> None:
        node = ev.payload
        if self.sim.now > self.liveness_until:
            return
        self.sim.schedule(self.sim.now + self.cadence, self.link_id, LIVENESS, node)
        peer = self.peers[node]
        if peer.condition == OPERATIONAL:
            self._send(node, "live", None)

    def _on_deadline(self, ev: EventRecord) -> None:
        node, slot, due = ev.payload
        peer = self.peers[node]
        if getattr(peer, f"{slot}_expect") != due:
            return   # superseded by a later arrival
        if not self._slot_waiting(peer, slot):
            return
        if peer.condition == DISCONNECTED:
            return
        # The expected token never arrived: a disturbance happened.
        if self.up:
            if not self.delegated:
                self._start_recovery()
        else:
            self._disconnect(node)

    def _start_recovery(self) -> None:
        for peer in self.peers.values():
            peer.condition = RECOVERING
            self._arm(peer.node, "live")
        self._recover_round += 1
        self.sim.schedule(
            self.sim.now + 2 * self.latency,
            self.link_id,
            RECOVER_DONE,
            (self._recover_round, self.epoch),
        )

    def _on_recover_done(self, ev: EventRecord) -> None:
        round_no, epoch = ev.payload
        if round_no != self._recover_round or epoch != self.epoch or not self.up:
            return   # a sever interrupted the round; detection re-arms
        if self.delegated:
            return
        resolved = self._resolve_outstanding()
        for peer in self.peers.values():
            peer.condition = OPERATIONAL
        self.recoveries += 1
        transcript = RecoveryTranscript(self.sim.now, tuple(resolved))
        self.recovery_log.append(transcript)
        self.sim.emit(self.link_id, "ae.recover", transcript)
        self._maybe_snapshot()
        for node in self.nodes:
            self._notify_ready(node)

    def _disconnect(self, node: str) -> None:
        peer = self.peers[node]
        peer.condition = DISCONNECTED
        record = DetectionRecord(self.sim.now, node)
        self.detection_log.append(record)
        self.sim.emit(self.link_id, "ae.disconnect", node)
        for cb in self._on_down:
            cb(self.link_id, node)

    def _resolve_outstanding(self) -> list[tuple[int, str]]:
        """Resolve every outstanding transfer to its bilateral fate.

        Delivered exactly when the initiator observed the reflection; a
        responder-refused transfer stays rejected; everything else reverses.
        The same rule serves link-local recovery and delegated (triangle)
        recovery so the two paths cannot disagree.
        """
        resolved = []
        for tid in sorted(self.outstanding):
            transfer = self.outstanding[tid]
            if transfer.committed:
                fate = ledger_mod.DELIVERED
            elif transfer.rejected:
                fate = ledger_mod.REJECTED
            else:
                fate = ledger_mod.REVERSED
            self._apply_resolution(transfer, fate)
            resolved.append((transfer.token_id, fate))
        self.outstanding.clear()
        return resolved

    def _apply_resolution(self, transfer: Transfer, fate: str) -> None:
        initiator = self.peers[transfer.initiator]
        responder = self.peers[transfer.responder]
        if fate == ledger_mod.DELIVERED:
            # Commit already moved the ledger; finish the responder's view.
            initiator.out_phase = IDLE
            initiator.fates[transfer.token_id] = ledger_mod.DELIVERED
            if responder.in_token == transfer.token_id:
                responder.in_phase = IDLE
                responder.in_token = None
            responder.fates[transfer.token_id] = ledger_mod.DELIVERED
        elif fate == ledger_mod.REJECTED:
            initiator.out_phase = IDLE
            initiator.out_token = None
            initiator.fates[transfer.token_id] = ledger_mod.REJECTED
            responder.fates[transfer.token_id] = ledger_mod.REJECTED
        else:
            # Reversal restores the pre-transfer state on both sides and
            # leaves no fate entry: the excursion lives only in the ledger.
            initiator.out_phase = IDLE
            initiator.out_token = None
            if responder.in_token == transfer.token_id:
                responder.in_phase = IDLE
                responder.in_token = None
            self.ledger.transition(transfer.token_id, ledger_mod.REVERSED, self.sim.now)
            self.sim.emit(self.link_id, "ae.reverse", transfer.token_id)
        self._notify_resolved(transfer.token_id, fate)

    # -- delegated (triangle) recovery surface

    def harvest_votes(self) -> dict[str, dict[int, str]]:
        """Each endpoint's claim about every in-flight token on this link."""
        votes: dict[str, dict[int, str]] = {n: {} for n in self.nodes}
        for tid in sorted(self.outstanding):
            transfer = self.outstanding[tid]
            if transfer.committed:
                claim = "reflection-observed"
            elif transfer.rejected:
                claim = "refused"
            else:
                claim = "pending"
            votes[transfer.initiator][transfer.token_id] = claim
            responder = self.peers[transfer.responder]
            votes[transfer.responder][transfer.token_id] = (
                "reflected" if responder.in_token == transfer.token_id else "unseen"
            )
        return votes

    def begin_delegated_recovery(self) -> None:
        self.delegated = True

    def abort_delegated_recovery(self) -> None:
        self.delegated = False
        if self.up and any(p.condition != OPERATIONAL for p in self.peers.values()):
            self._start_recovery()

    def apply_delegated_resolution(self) -> list[tuple[int, str]]:
        """Apply the coordinator's commit: resolve and leave peers clean.

        Peers stay disconnected while the medium is down; the restore event
        brings them back to idle through an empty recovery round.
        """
        resolved = self._resolve_outstanding()
        self.delegated = False
        if self.up:
            self._start_recovery()
        return resolved

    # -- bookkeeping

    def _maybe_snapshot(self) -> None:
        if self.quiescent():
            for peer in self.peers.values():
                peer.last_quiescent_digest = peer.digest()

    def _notify_ready(self, node: str) -> None:
        for cb in self._on_ready:
            cb(self.link_id, node)

    def _notify_resolved(self, token_id: int, fate: str) -> None:
        for cb in self._on_resolved:
            cb(self.link_id, token_id, fate)
