"""Exception types shared across the simulator."""


class CausalityViolation(Exception):
    """An event was scheduled in the virtual past."""


class AccountingError(Exception):
    """Token ledger integrity broken (duplicate insert, illegal transition)."""


class AuditFailure(Exception):
    """A quiescent conservation audit found unaccounted or in-flight tokens."""

    def __init__(self, message, report=None):
        super().__init__(message)
        self.report = report


class LinkBusy(Exception):
    """Initiation attempted while the peer already has a transfer outstanding."""


class ProtocolViolation(Exception):
    """A token arrived in a phase that the exchange cannot produce (simulator bug)."""


class IllegalReversal(Exception):
    """Reversal requested for a committed (or otherwise terminal) transfer."""


class ConfigurationError(Exception):
    """Topology or schedule wiring refers to entities that do not exist."""


class ScenarioError(Exception):
    """Scenario text failed validation; message carries the line position."""
