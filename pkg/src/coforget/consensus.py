"""PBFT three-phase consensus over each proposed memory.

A non-voting coordinator broadcasts EVALUATE for one (memory, epoch) instance;
agents broadcast PREPARE with their vote, mark the instance prepared once any
vote accumulates 2f identical senders, then broadcast COMMIT carrying their own
vote; an observer decides when any vote reaches a 2f+1 commit tally. There is
no view change: an instance that cannot decide within its message budget times
out and the memory is kept for re-evaluation next epoch.
"""

from __future__ import annotations

import enum
import logging
from dataclasses import dataclass, field
from typing import Mapping, Sequence

from .core import AgentProfile, ProtocolConfig, Vote
from .voting import AgentVote, decide, form_vote, quorum_threshold, weighted_forget_score

logger = logging.getLogger(__name__)

__all__ = [
    "MessageKind",
    "Phase",
    "Behavior",
    "PbftMessage",
    "PbftInstance",
    "DuplicateInstance",
    "ConsensusTimeout",
    "start_instance",
    "on_evaluate",
    "on_prepare",
    "on_commit",
    "finalize",
    "AgentNode",
    "ObserverNode",
    "RoundResult",
    "run_round",
    "DEFAULT_COORDINATOR_ID",
]

DEFAULT_COORDINATOR_ID = "coordinator"


class MessageKind(enum.IntEnum):
    """Consensus message kinds; values match the wire format's kind byte."""

    EVALUATE = 0
    PREPARE = 1
    COMMIT = 2


class Phase(enum.Enum):
    IDLE = "idle"
    PREPARED = "prepared"
    COMMITTED = "committed"
    DECIDED = "decided"


class Behavior(enum.Enum):
    """How an agent acts during one consensus round, after fault-coin resolution."""

    HONEST = "honest"
    SILENT = "silent"
    EQUIVOCATE = "equivocate"


class DuplicateInstance(RuntimeError):
    """An instance for this (memory_id, epoch) already exists."""


class ConsensusTimeout(RuntimeError):
    """The instance failed to decide within its message budget."""


@dataclass(frozen=True)
class PbftMessage:
    """An immutable consensus message. EVALUATE carries no vote; the others must."""

    kind: MessageKind
    epoch: int
    memory_id: str
    sender: str
    vote: Vote | None = None
    signature: bytes = b""

    def __post_init__(self) -> None:
        if self.kind is MessageKind.EVALUATE:
            if self.vote is not None:
                raise ValueError("EVALUATE must not carry a vote")
        elif self.vote is None:
            raise ValueError(f"{self.kind.name} must carry a vote")


@dataclass
class PbftInstance:
    """Single-owner per-observer consensus state for one (memory, epoch)."""

    memory_id: str
    epoch: int
    phase: Phase = Phase.IDLE
    prepare_tally: dict[Vote, set[str]] = field(default_factory=dict)
    commit_tally: dict[Vote, set[str]] = field(default_factory=dict)
    decision: Vote | None = None
    stale_count: int = 0

    def _matches(self, msg: PbftMessage) -> bool:
        if msg.epoch != self.epoch or msg.memory_id != self.memory_id:
            # Stale or misrouted: dropped and counted, never fatal.
            self.stale_count += 1
            logger.debug(
                "stale message for instance (%s, %d): epoch=%d memory=%s",
                self.memory_id,
                self.epoch,
                msg.epoch,
                msg.memory_id,
            )
            return False
        return True


def start_instance(
    memory_id: str,
    epoch: int,
    agents: Sequence[AgentProfile],
    registry: dict[tuple[str, int], PbftInstance] | None = None,
) -> tuple[PbftInstance, list[PbftMessage]]:
    """Create the coordinator's instance and the EVALUATE fan-out.

    One EVALUATE message is returned per active agent, paired positionally
    with the active agents sorted by id. With a registry, a second start for
    the same (memory_id, epoch) raises DuplicateInstance.
    """
    key = (memory_id, epoch)
    if registry is not None and key in registry:
        raise DuplicateInstance(f"instance already live for {key}")
    instance = PbftInstance(memory_id=memory_id, epoch=epoch)
    if registry is not None:
        registry[key] = instance
    active = sorted((a for a in agents if a.active), key=lambda a: a.agent_id)
    if not active:
        logger.warning("instance (%s, %d) started with zero active agents; undecidable", memory_id, epoch)
    evaluate = PbftMessage(
        kind=MessageKind.EVALUATE, epoch=epoch, memory_id=memory_id, sender=DEFAULT_COORDINATOR_ID
    )
    return instance, [evaluate] * len(active)


def on_evaluate(
    agent: AgentProfile,
    msg: PbftMessage,
    d: float,
    r: float,
    cfg: ProtocolConfig,
    behavior: Behavior = Behavior.HONEST,
) -> PbftMessage | None:
    """Form the agent's vote from (decay, relevance) and emit its PREPARE.

    A silent agent emits nothing; an equivocating agent emits the inverted vote.
    """
    if behavior is Behavior.SILENT:
        return None
    vote, _ = form_vote(d, r, cfg)
    if behavior is Behavior.EQUIVOCATE:
        vote = vote.inverted()
    return PbftMessage(
        kind=MessageKind.PREPARE,
        epoch=msg.epoch,
        memory_id=msg.memory_id,
        sender=agent.agent_id,
        vote=vote,
    )


def on_prepare(
    instance: PbftInstance,
    msg: PbftMessage,
    f: int,
    own_vote: Vote | None = None,
    self_id: str | None = None,
) -> PbftMessage | None:
    """Tally a PREPARE; on the first vote reaching 2f, transition and maybe COMMIT.

    Voting observers (own_vote given) broadcast COMMIT with their own vote and
    move to COMMITTED; passive observers just mark PREPARED. Duplicate senders
    are ignored by set semantics.
    """
    assert msg.kind is MessageKind.PREPARE, msg.kind
    if not instance._matches(msg):
        return None
    senders = instance.prepare_tally.setdefault(msg.vote, set())
    senders.add(msg.sender)
    if instance.phase is not Phase.IDLE or len(senders) < 2 * f:
        return None
    if own_vote is not None and self_id is not None:
        instance.phase = Phase.COMMITTED
        return PbftMessage(
            kind=MessageKind.COMMIT,
            epoch=instance.epoch,
            memory_id=instance.memory_id,
            sender=self_id,
            vote=own_vote,
        )
    instance.phase = Phase.PREPARED
    return None


def on_commit(instance: PbftInstance, msg: PbftMessage, f: int) -> Vote | None:
    """Tally a COMMIT; decide when any vote reaches a 2f+1 commit tally."""
    assert msg.kind is MessageKind.COMMIT, msg.kind
    if not instance._matches(msg):
        return None
    senders = instance.commit_tally.setdefault(msg.vote, set())
    senders.add(msg.sender)
    if instance.decision is None and len(senders) >= 2 * f + 1:
        instance.phase = Phase.DECIDED
        instance.decision = msg.vote
    return instance.decision


def finalize(
    instance: PbftInstance,
    votes: Sequence[AgentVote],
    agents: Sequence[AgentProfile],
    cfg: ProtocolConfig,
) -> Vote:
    """Gate a decided-forget instance through the weighted quorum.

    Consensus forget only deletes when S_m >= Q; consensus keep always keeps.
    An undecided instance raises ConsensusTimeout and the memory is retained
    this epoch.
    """
    if instance.decision is None:
        raise ConsensusTimeout(
            f"instance ({instance.memory_id}, {instance.epoch}) exhausted its message budget undecided"
        )
    if instance.decision is Vote.KEEP:
        return Vote.KEEP
    q = quorum_threshold(agents, cfg.alpha)
    s_m = weighted_forget_score(votes, agents)
    return decide(s_m, q)


class AgentNode:
    """One voting agent's view of a single consensus round.

    Wraps a PbftInstance with the agent's pre-formed vote and resolved fault
    behavior; handle() returns the broadcasts the agent emits, with its own
    copies absorbed immediately (self-delivery bypasses the network).
    """

    def __init__(
        self,
        profile: AgentProfile,
        f: int,
        memory_id: str,
        epoch: int,
        vote: Vote,
        behavior: Behavior = Behavior.HONEST,
    ):
        self.profile = profile
        self.agent_id = profile.agent_id
        self.f = f
        self.vote = vote
        self.behavior = behavior
        self.instance = PbftInstance(memory_id=memory_id, epoch=epoch)
        self._sent_prepare = False

    @property
    def wire_vote(self) -> Vote:
        """The vote this agent puts on the wire this round."""
        if self.behavior is Behavior.EQUIVOCATE:
            return self.vote.inverted()
        return self.vote

    def handle(self, msg: PbftMessage) -> list[PbftMessage]:
        if msg.kind is MessageKind.EVALUATE:
            if self._sent_prepare or self.behavior is Behavior.SILENT:
                return []
            self._sent_prepare = True
            prepare = PbftMessage(
                kind=MessageKind.PREPARE,
                epoch=msg.epoch,
                memory_id=msg.memory_id,
                sender=self.agent_id,
                vote=self.wire_vote,
            )
            return [prepare] + self._absorb(prepare)
        return self._absorb(msg)

    def _absorb(self, msg: PbftMessage) -> list[PbftMessage]:
        out: list[PbftMessage] = []
        if msg.kind is MessageKind.PREPARE:
            own = None if self.behavior is Behavior.SILENT else self.wire_vote
            commit = on_prepare(self.instance, msg, self.f, own_vote=own, self_id=self.agent_id)
            if commit is not None:
                out.append(commit)
                out.extend(self._absorb(commit))
        elif msg.kind is MessageKind.COMMIT:
            on_commit(self.instance, msg, self.f)
        return out


class ObserverNode:
    """A passive tallying view (the coordinator): receives everything, emits nothing."""

    def __init__(self, node_id: str, f: int, instance: PbftInstance):
        self.agent_id = node_id
        self.f = f
        self.instance = instance

    def handle(self, msg: PbftMessage) -> list[PbftMessage]:
        if msg.kind is MessageKind.PREPARE:
            on_prepare(self.instance, msg, self.f)
        elif msg.kind is MessageKind.COMMIT:
            on_commit(self.instance, msg, self.f)
        return []


@dataclass
class RoundResult:
    """Everything one consensus round produced, from the coordinator's view."""

    memory_id: str
    epoch: int
    instance: PbftInstance
    decided: bool
    decision: Vote | None
    commit_count: int
    agent_decisions: dict[str, Vote | None]
    behaviors: dict[str, Behavior]
    deliveries: int
    dropped: int
    undelivered: int
    elapsed_virtual_s: float


def run_round(
    memory_id: str,
    epoch: int,
    agents: Sequence[AgentProfile],
    votes: Mapping[str, Vote],
    cfg: ProtocolConfig,
    net,
    behaviors: Mapping[str, Behavior] | None = None,
    coordinator_id: str = DEFAULT_COORDINATOR_ID,
    budget: int | None = None,
    registry: dict[tuple[str, int], PbftInstance] | None = None,
) -> RoundResult:
    """Drive one consensus instance to completion over a simulated network.

    `votes` holds each active agent's pre-formed vote; `behaviors` the resolved
    fault behavior per agent (default honest). Delivery stops when the queue
    drains or the message budget (default 10*N) is exhausted.
    """
    if budget is None:
        budget = 10 * cfg.n_agents
    behaviors = dict(behaviors or {})
    active = sorted((a for a in agents if a.active), key=lambda a: a.agent_id)

    coord_instance, evaluates = start_instance(memory_id, epoch, agents, registry)
    coordinator = ObserverNode(coordinator_id, cfg.f, coord_instance)
    nodes: dict[str, AgentNode | ObserverNode] = {coordinator_id: coordinator}
    for agent in active:
        nodes[agent.agent_id] = AgentNode(
            agent,
            cfg.f,
            memory_id,
            epoch,
            votes[agent.agent_id],
            behaviors.get(agent.agent_id, Behavior.HONEST),
        )
    for node_id in nodes:
        net.register(node_id)

    dropped_before = net.dropped
    latency_before = net.delivered_latency_s
    for agent, evaluate in zip(active, evaluates):
        net.submit(evaluate, coordinator_id, agent.agent_id)

    deliveries = 0
    while deliveries < budget:
        event = net.poll()
        if event is None:
            break
        deliveries += 1
        node = nodes.get(event.dest)
        if node is None:
            continue
        for outbound in node.handle(event.msg):
            for peer in nodes:
                if peer != node.agent_id:
                    net.submit(outbound, node.agent_id, peer)
    undelivered = net.drain()

    decision = coord_instance.decision
    commit_count = 0
    if decision is not None:
        commit_count = len(coord_instance.commit_tally.get(decision, ()))
    agent_decisions = {
        agent.agent_id: nodes[agent.agent_id].instance.decision for agent in active
    }
    return RoundResult(
        memory_id=memory_id,
        epoch=epoch,
        instance=coord_instance,
        decided=decision is not None,
        decision=decision,
        commit_count=commit_count,
        agent_decisions=agent_decisions,
        behaviors={a.agent_id: behaviors.get(a.agent_id, Behavior.HONEST) for a in active},
        deliveries=deliveries,
        dropped=net.dropped - dropped_before,
        undelivered=undelivered,
        elapsed_virtual_s=net.delivered_latency_s - latency_before,
    )
