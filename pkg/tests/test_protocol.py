from fractions import Fraction

import pytest
from hypothesis import given
from hypothesis import strategies as st

from skyconsensus._random import NodeStream
from skyconsensus.protocol import Message, NodeRuntime, ProtocolConfig, State, is_valid

D, F = State.DECIDED, State.CONFUSED


def node(followees=(1, 2), opinion=0, max_rounds=40, model="sky", trace=None, round_=1):
    cfg = ProtocolConfig(max_rounds=max_rounds, model=model)
    n = NodeRuntime(0, followees, opinion, cfg, NodeStream(1, 0), 0.0, trace)
    n.round = round_
    return n


def check_invariants(n):
    live, sus = set(n.followee_list), set(n.suspect_list)
    assert not live & sus and live | sus == set(n.followees)
    assert len(n.buffer) <= len(n.followees)
    if n.state == State.DECIDING:
        assert all(m.final or m.round >= n.round for m in n.buffer.values())


def test_is_valid_examples():
    n = node(round_=5)
    assert is_valid(n, Message(1, 5, 0))
    assert not is_valid(n, Message(1, 3, 0))
    assert is_valid(n, Message(1, 1, 0, F))


def test_config_validation():
    with pytest.raises(ValueError):
        ProtocolConfig(max_rounds=0)
    with pytest.raises(ValueError):
        ProtocolConfig(T=0.5)
    with pytest.raises(ValueError):
        ProtocolConfig(model="nope")
    with pytest.raises(ValueError):
        ProtocolConfig(timeout_ms=0)
    assert ProtocolConfig().T == Fraction(2, 3)


def test_higher_round_replaces_buffer():
    n = node(followees=(1, 2, 3))
    n.round = 4
    n.handle_message(Message(1, 4, 0), 10.0)
    n.handle_message(Message(1, 6, 1), 11.0)
    assert n.buffer[1].round == 6
    n.handle_message(Message(1, 5, 0), 12.0)
    assert n.buffer[1].round == 6
    check_invariants(n)


def test_final_message_persists_across_purge():
    n = node()
    n.handle_message(Message(1, 1, 1, D), 1.0)
    n.handle_message(Message(1, 7, 0), 2.0)
    assert n.buffer[1].state == D
    out = n.handle_message(Message(2, 1, 1), 3.0)
    assert len(out) == 1 and n.round == 2
    assert 1 in n.buffer and 2 not in n.buffer
    check_invariants(n)


def test_decided_node_ignores_messages():
    n = node(followees=(1,), max_rounds=1)
    n.handle_message(Message(1, 1, 0), 1.0)
    assert n.state == State.DECIDED
    before = (n.round, n.opinion, n.state, dict(n.buffer))
    assert n.handle_message(Message(1, 9, 1), 2.0) == []
    assert (n.round, n.opinion, n.state, dict(n.buffer)) == before


def test_trigger_waits_for_all_followees():
    n = node()
    assert n.handle_message(Message(1, 1, 0), 1.0) == []
    out = n.handle_message(Message(2, 1, 0), 2.0)
    assert out == [Message(0, 2, 0, State.DECIDING)]
    assert n.round == 2


def test_unknown_sender_counted_and_dropped():
    n = node()
    assert n.handle_message(Message(9, 1, 1), 1.0) == []
    assert n.violations == 1 and 9 not in n.buffer


def test_timeout_suspects_silent_followee():
    n = node(followees=(1, 2))
    n.handle_message(Message(1, 1, 0), 100.0)
    out = n.on_timeout(2000.0)
    assert n.suspect_list == [2] and n.suspicions == 1
    assert len(out) == 1 and n.round == 2
    check_invariants(n)


def test_timeout_uses_at_least_comparison():
    n = node(followees=(1,))
    assert n.on_timeout(1999.9) == []
    assert n.suspect_list == []
    n.on_timeout(2000.0)
    assert n.suspect_list == [1]


def test_recent_followees_not_suspected():
    n = node(followees=(1, 2))
    n.handle_message(Message(1, 1, 0), 1500.0)
    n.handle_message(Message(2, 2, 0), 1500.0)  # buffered, ahead
    # the rule fired at 1500 ms; followee 1 owes a round-2 message but is not late yet
    assert n.round == 2
    assert n.on_timeout(2100.0) == []
    assert n.suspect_list == []


def test_suspect_returns_on_valid_message():
    n = node(followees=(1, 2))
    n.handle_message(Message(1, 1, 0), 0.0)
    n.on_timeout(2000.0)
    assert 2 in n.suspects
    n.handle_message(Message(2, 5, 1), 2100.0)
    assert 2 not in n.suspects and n.followee_list == [1, 2]
    check_invariants(n)


def test_all_silent_fires_once_on_own_opinion():
    n = node(followees=(1, 2), opinion=1)
    out = n.on_timeout(2000.0)
    assert n.suspect_list == [1, 2]
    # one rule application on counts (0, 1): the node keeps 1
    assert out == [Message(0, 2, 1, State.DECIDING)]
    assert n.degenerate_rounds == 1


def test_final_round_arithmetic():
    n = node(followees=tuple(range(1, 10)), opinion=0, max_rounds=40, round_=40)
    for f in range(1, 10):
        n.handle_message(Message(f, 40, 1 if f == 1 else 0), 5.0)
    assert n.state == State.DECIDED and n.opinion == 0
    assert n.decided_at == 5.0


def test_final_round_confused_keeps_opinion():
    n = node(followees=(1, 2, 3, 4, 5), opinion=1, max_rounds=3, round_=3)
    for f, op in zip((1, 2, 3, 4, 5), (0, 0, 0, 1, 1)):
        out = n.handle_message(Message(f, 3, op), 1.0)
    assert n.state == State.CONFUSED and n.opinion == 1
    assert out[-1].state == State.CONFUSED


def test_drain_when_followees_are_ahead():
    # a final message stays buffered, so the node runs to its decision at once
    n = node(followees=(1,), model="mr", max_rounds=5)
    out = n.handle_message(Message(1, 3, 0, D), 1.0)
    assert [m.round for m in out] == [2, 3, 4, 5, 5]
    assert n.state == State.DECIDED and out[-1].final


def test_trace_records_applications():
    trace = []
    n = node(trace=trace)
    n.handle_message(Message(1, 1, 0), 1.0)
    n.handle_message(Message(2, 1, 0), 2.0)
    assert trace == [(2.0, 0, "apply", 2, 0, 0)]


events = st.lists(
    st.one_of(
        st.tuples(st.just("msg"), st.integers(1, 4), st.integers(1, 12), st.integers(0, 1), st.sampled_from(list(State))),
        st.tuples(st.just("timeout")),
    ),
    max_size=60,
)


@given(events, st.integers(0, 1), st.sampled_from(["sky", "mr", "sa", "voter", "sznajd"]))
def test_state_machine_invariants(evs, op, model):
    n = node(followees=(1, 2, 3, 4), opinion=op, max_rounds=6, model=model)
    now = 0.0
    last_round, final_seen = n.round, None
    for ev in evs:
        now += 700.0
        if ev[0] == "msg":
            _, s, r, o, stt = ev
            out = n.handle_message(Message(s, r, o, stt), now)
        else:
            out = n.on_timeout(now)
        # each emitted message is one round step (or the single final message)
        for m in out:
            assert m.sender == 0 and m.opinion in (0, 1)
        assert n.round >= last_round
        assert n.round - last_round == sum(1 for m in out if not m.final)
        last_round = n.round
        if final_seen is not None:
            assert (n.state, n.opinion, n.round) == final_seen and out == []
        elif n.state != State.DECIDING:
            final_seen = (n.state, n.opinion, n.round)
            assert out[-1].final and sum(m.final for m in out) == 1
        check_invariants(n)
