"""Per-node asynchronous consensus state machine.

A node keeps at most one message per followee (the one with the highest
round), a failure detector that moves long-silent followees to a suspect list,
and applies the configured rule as soon as every non-suspect followee has a
message buffered.  After ``max_rounds`` rounds it takes its final decision and
stops accepting messages.
"""

import enum
import logging
from dataclasses import dataclass
from fractions import Fraction

from .opinion_models import MODELS, SKY_RATIO, Decision, apply_rule, final_decision, threshold_fraction

log = logging.getLogger(__name__)


class State(enum.IntEnum):
    DECIDING = 0
    DECIDED = 1
    CONFUSED = 2


@dataclass(frozen=True)
class Message:
    sender: int
    round: int
    opinion: int
    state: State = State.DECIDING

    @property
    def final(self):
        return self.state != State.DECIDING


@dataclass(frozen=True)
class ProtocolConfig:
    max_rounds: int = 40
    T: Fraction = Fraction(2, 3)
    timeout_ms: float = 2000.0
    model: str = "sky"
    sky_ratio: float = SKY_RATIO

    def __post_init__(self):
        if self.max_rounds < 1:
            raise ValueError("max_rounds must be >= 1")
        object.__setattr__(self, "T", threshold_fraction(self.T))
        if self.model not in MODELS:
            raise ValueError(f"unknown model {self.model!r}")
        if self.timeout_ms <= 0:
            raise ValueError("timeout_ms must be positive")


def is_valid(node, msg):
    return msg.round >= node.round or msg.final


class NodeRuntime:
    """One correct node.

    ``handle_message`` and ``on_timeout`` return the list of messages the node
    broadcasts as a consequence (empty if the rule did not fire).  ``trace``
    collects ``(time_ms, node, kind, round, opinion, state)`` tuples when it is
    a list.
    """

    def __init__(self, node_id, followees, opinion, cfg, rng, start_time=0.0, trace=None):
        self.id = node_id
        self.followees = tuple(int(f) for f in followees)
        self._static = frozenset(self.followees)
        self.round = 1
        self.opinion = int(opinion)
        self.state = State.DECIDING
        self.suspects = set()
        self.buffer = {}
        self.last_valid_time = dict.fromkeys(self.followees, start_time)
        self.cfg = cfg
        self.rng = rng
        self.trace = trace
        self.decided_at = None
        self.violations = 0
        self.suspicions = 0
        self.degenerate_rounds = 0

    @property
    def followee_list(self):
        """Non-suspect followees, in static order."""
        return [f for f in self.followees if f not in self.suspects]

    @property
    def suspect_list(self):
        return [f for f in self.followees if f in self.suspects]

    def initial_message(self):
        return Message(self.id, self.round, self.opinion, self.state)

    def handle_message(self, msg, now):
        if msg.sender not in self._static:
            self.violations += 1
            log.debug("node %d: message from non-followee %d dropped", self.id, msg.sender)
            return []
        if self.state != State.DECIDING or not is_valid(self, msg):
            return []
        held = self.buffer.get(msg.sender)
        if held is None or (not held.final and (msg.final or msg.round > held.round)):
            self.buffer[msg.sender] = msg
        self.last_valid_time[msg.sender] = now
        self.suspects.discard(msg.sender)
        return self.try_apply_rule(now)

    def on_timeout(self, now):
        if self.state != State.DECIDING:
            return []
        limit = self.cfg.timeout_ms
        for f in self.followees:
            if f in self.suspects or f in self.buffer:
                continue
            if now - self.last_valid_time[f] >= limit:
                self.suspects.add(f)
                self.suspicions += 1
        return self.try_apply_rule(now)

    def ready(self):
        return all(f in self.buffer for f in self.followees if f not in self.suspects)

    def try_apply_rule(self, now):
        """Apply the rule while the buffer covers every live followee.

        A node that lags behind may find its buffer already full again after a
        round (followees ahead of it), so this loops; each pass broadcasts.  With
        every followee suspected the rule fires once per call.
        """
        out = []
        while self.state == State.DECIDING and self.ready():
            live = self.followee_list
            if not live:
                self.degenerate_rounds += 1
            opinions = [self.buffer[f].opinion for f in live]
            if self.round >= self.cfg.max_rounds:
                ones = self.opinion + sum(opinions)
                verdict = final_decision((len(opinions) + 1 - ones, ones), self.cfg.T)
                if verdict == Decision.CONFUSED:
                    self.state = State.CONFUSED
                else:
                    self.state = State.DECIDED
                    self.opinion = 0 if verdict == Decision.DECIDED0 else 1
                self.decided_at = now
            else:
                self.opinion = apply_rule(self.cfg.model, self.opinion, opinions, self.rng, self.cfg.sky_ratio)
                self.round += 1
                self._purge()
            if self.trace is not None:
                self.trace.append((now, self.id, "apply", self.round, self.opinion, int(self.state)))
            out.append(Message(self.id, self.round, self.opinion, self.state))
            if not live:
                # nothing buffered can change; wait for the next event
                break
        return out

    def _purge(self):
        stale = [f for f, m in self.buffer.items() if not m.final and m.round < self.round]
        for f in stale:
            del self.buffer[f]
