"""Global conservation accounting for transfer tokens.

Every token inserted into any link is tracked here from creation to a
terminal outcome. The conservation identity

    inserted == delivered + rejected + in_transit

treats created and reversed tokens as the sender's liability, so they count
in the in_transit bucket until retired. A token leaves the identity only by
being deliberately dropped (a smash-and-restart reset), which is exactly
what the unaccounted column surfaces.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass, field

from .errors import AccountingError, AuditFailure

CREATED = "created"
IN_TRANSIT = "in-transit"
DELIVERED = "delivered"
REJECTED = "rejected"
REVERSED = "reversed"

# Legal lifecycle moves. delivered and rejected are terminal; reversed
# tokens may re-enter in-transit (retry after a clean reversal).
_LEGAL = {
    CREATED: {IN_TRANSIT},
    IN_TRANSIT: {DELIVERED, REJECTED, REVERSED},
    REVERSED: {IN_TRANSIT},
    DELIVERED: set(),
    REJECTED: set(),
}

_PENDING = {CREATED, IN_TRANSIT, REVERSED}


@dataclass
class Token:
    token_id: int
    origin: str
    payload_digest: str
    lifecycle: str = CREATED


@dataclass(frozen=True)
class ConservationReport:
    inserted: int
    delivered: int
    rejected: int
    in_transit: int
    unaccounted: int

    def to_json(self) -> str:
        return json.dumps(
            {
                "inserted": self.inserted,
                "delivered": self.delivered,
                "rejected": self.rejected,
                "in_transit": self.in_transit,
                "unaccounted": self.unaccounted,
            },
            separators=(",", ":"),
        )


class TokenLedger:
    """Append-only token accounting for one simulation instance."""

    def __init__(self):
        self._tokens: dict[int, Token] = {}
        self._history: dict[int, list[tuple[str, int]]] = {}
        self._dropped: set[int] = set()
        self._next_token_id = 1
        self._next_entry_id = 1

    def mint(self, origin: str) -> Token:
        """Create and insert a fresh token with a synthetic payload digest."""
        tid = self._next_token_id
        digest = hashlib.sha256(f"payload:{tid}:{origin}".encode()).hexdigest()
        token = Token(tid, origin, digest)
        self.insert(token)
        return token

    def insert(self, token: Token) -> int:
        if token.token_id in self._tokens:
            raise AccountingError(f"token {token.token_id} already inserted")
        self._tokens[token.token_id] = token
        self._history[token.token_id] = []
        entry_id = self._next_entry_id
        self._next_entry_id += 1
        self._next_token_id = max(self._next_token_id, token.token_id + 1)
        return entry_id

    def transition(self, token_id: int, to_state: str, at: int = 0) -> None:
        token = self._tokens.get(token_id)
        if token is None:
            raise AccountingError(f"token {token_id} was never inserted")
        if token_id in self._dropped:
            raise AccountingError(f"token {token_id} was dropped and cannot move")
        if to_state not in _LEGAL:
            raise AccountingError(f"unknown lifecycle state {to_state!r}")
        if to_state not in _LEGAL[token.lifecycle]:
            raise AccountingError(
                f"illegal transition {token.lifecycle} -> {to_state} for token {token_id}"
            )
        token.lifecycle = to_state
        self._history[token_id].append((to_state, at))

    def drop(self, token_id: int) -> None:
        """Deliberately unaccount a token (the holder smashed its state).

        Only non-terminal tokens can vanish this way; delivered and rejected
        outcomes are permanent records.
        """
        token = self._tokens.get(token_id)
        if token is None:
            raise AccountingError(f"token {token_id} was never inserted")
        if token.lifecycle not in _PENDING:
            raise AccountingError(
                f"cannot drop token {token_id} in terminal state {token.lifecycle}"
            )
        if token_id in self._dropped:
            raise AccountingError(f"token {token_id} already dropped")
        self._dropped.add(token_id)

    def state(self, token_id: int) -> str:
        return self._tokens[token_id].lifecycle

    def history(self, token_id: int) -> list[tuple[str, int]]:
        return list(self._history[token_id])

    def token_ids(self) -> list[int]:
        return sorted(self._tokens)

    def audit(self, at_quiescence: bool = False) -> ConservationReport:
        inserted = len(self._tokens)
        delivered = rejected = in_transit = 0
        for tid, token in self._tokens.items():
            if token.lifecycle == DELIVERED:
                delivered += 1
            elif token.lifecycle == REJECTED:
                rejected += 1
            elif tid not in self._dropped:
                in_transit += 1
        report = ConservationReport(
            inserted=inserted,
            delivered=delivered,
            rejected=rejected,
            in_transit=in_transit,
            unaccounted=inserted - delivered - rejected - in_transit,
        )
        if at_quiescence and (report.in_transit > 0 or report.unaccounted != 0):
            raise AuditFailure(
                f"quiescent audit failed: in_transit={report.in_transit} "
                f"unaccounted={report.unaccounted}",
                report=report,
            )
        return report
