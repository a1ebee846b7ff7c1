import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from oaesim.errors import AccountingError, AuditFailure
from oaesim.ledger import (
    CREATED,
    DELIVERED,
    IN_TRANSIT,
    REJECTED,
    REVERSED,
    ConservationReport,
    Token,
    TokenLedger,
)


def test_insert_counts_created_as_in_transit():
    led = TokenLedger()
    entry = led.insert(Token(1, "A", "d" * 64))
    assert entry == 1
    report = led.audit()
    assert report == ConservationReport(1, 0, 0, 1, 0)


def test_duplicate_insert_rejected():
    led = TokenLedger()
    led.insert(Token(1, "A", "x"))
    with pytest.raises(AccountingError):
        led.insert(Token(1, "A", "x"))


def test_mass_insert_counting():
    led = TokenLedger()
    n = 10**5
    for _ in range(n):
        led.mint("A")
    assert led.audit().inserted == n


def test_happy_path_history_length_two():
    led = TokenLedger()
    tok = led.mint("A")
    led.transition(tok.token_id, IN_TRANSIT, 1)
    led.transition(tok.token_id, DELIVERED, 2)
    assert led.state(tok.token_id) == DELIVERED
    assert len(led.history(tok.token_id)) == 2


def test_terminal_states_cannot_move():
    led = TokenLedger()
    tok = led.mint("A")
    led.transition(tok.token_id, IN_TRANSIT)
    led.transition(tok.token_id, DELIVERED)
    with pytest.raises(AccountingError):
        led.transition(tok.token_id, IN_TRANSIT)


def test_retry_after_reversal_history_length_four():
    led = TokenLedger()
    tok = led.mint("A")
    led.transition(tok.token_id, IN_TRANSIT)
    led.transition(tok.token_id, REVERSED)
    led.transition(tok.token_id, IN_TRANSIT)
    led.transition(tok.token_id, DELIVERED)
    assert len(led.history(tok.token_id)) == 4


@pytest.mark.parametrize(
    "path",
    [
        (CREATED, DELIVERED),
        (CREATED, REVERSED),
        (CREATED, REJECTED),
    ],
)
def test_created_must_pass_through_in_transit(path):
    led = TokenLedger()
    tok = led.mint("A")
    with pytest.raises(AccountingError):
        led.transition(tok.token_id, path[1])


def test_unknown_token_transition_rejected():
    led = TokenLedger()
    with pytest.raises(AccountingError):
        led.transition(99, IN_TRANSIT)


def test_empty_ledger_audit_all_zero():
    assert TokenLedger().audit() == ConservationReport(0, 0, 0, 0, 0)


def test_quiescent_audit_passes_when_all_retired():
    led = TokenLedger()
    for _ in range(3):
        tok = led.mint("A")
        led.transition(tok.token_id, IN_TRANSIT)
        led.transition(tok.token_id, DELIVERED)
    tok = led.mint("B")
    led.transition(tok.token_id, IN_TRANSIT)
    led.transition(tok.token_id, REJECTED)
    report = led.audit(at_quiescence=True)
    assert report == ConservationReport(4, 3, 1, 0, 0)


def test_quiescent_audit_fails_with_in_flight():
    led = TokenLedger()
    tok = led.mint("A")
    led.transition(tok.token_id, IN_TRANSIT)
    with pytest.raises(AuditFailure):
        led.audit(at_quiescence=True)


def test_drop_moves_token_to_unaccounted():
    led = TokenLedger()
    tok = led.mint("A")
    led.transition(tok.token_id, IN_TRANSIT)
    led.drop(tok.token_id)
    report = led.audit()
    assert report.unaccounted == 1
    assert report.in_transit == 0
    with pytest.raises(AuditFailure):
        led.audit(at_quiescence=True)


def test_dropped_token_cannot_move():
    led = TokenLedger()
    tok = led.mint("A")
    led.drop(tok.token_id)
    with pytest.raises(AccountingError):
        led.transition(tok.token_id, IN_TRANSIT)


def test_delivered_token_cannot_be_dropped():
    led = TokenLedger()
    tok = led.mint("A")
    led.transition(tok.token_id, IN_TRANSIT)
    led.transition(tok.token_id, DELIVERED)
    with pytest.raises(AccountingError):
        led.drop(tok.token_id)


def test_report_json_field_order():
    text = TokenLedger().audit().to_json()
    assert text == '{"inserted":0,"delivered":0,"rejected":0,"in_transit":0,"unaccounted":0}'


@settings(max_examples=100, deadline=None)
@given(
    st.lists(
        st.tuples(st.integers(0, 9), st.sampled_from([DELIVERED, REJECTED, REVERSED, "retry"])),
        max_size=60,
    )
)
def test_conservation_identity_under_random_legal_activity(moves):
    led = TokenLedger()
    tokens = [led.mint("A") for _ in range(10)]
    for _ in tokens:
        pass
    for idx, action in moves:
        tid = tokens[idx].token_id
        state = led.state(tid)
        if action == "retry":
            if state in (CREATED, REVERSED):
                led.transition(tid, IN_TRANSIT)
        elif state == IN_TRANSIT:
            led.transition(tid, action)
        report = led.audit()
        assert report.inserted == report.delivered + report.rejected + report.in_transit
        assert report.unaccounted == 0
