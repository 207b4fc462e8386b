"""Per-agent vote formation and collective weighted scoring with dynamic quorum.

An agent combines a memory's decay score and relevance into C = omega_d*D +
omega_r*R and votes forget when C falls below the vote threshold. Collectively,
forget votes are summed with weight*confidence into S_m and compared against
the quorum Q = alpha * (sum of active agents' weights).
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Iterable, Sequence

from .core import AgentProfile, ProtocolConfig, Vote

__all__ = [
    "NoActiveAgents",
    "UnknownAgent",
    "AgentVote",
    "QuorumDecision",
    "form_vote",
    "quorum_threshold",
    "weighted_forget_score",
    "decide",
    "quorum_decision",
]


class NoActiveAgents(ValueError):
    """Quorum requested over a roster with zero active agents."""


class UnknownAgent(KeyError):
    """A vote references an agent_id missing from the roster."""


@dataclass(frozen=True)
class AgentVote:
    """One agent's vote on one memory, with the combined score that produced it."""

    agent_id: str
    memory_id: str
    vote: Vote
    combined_score: float


@dataclass(frozen=True)
class QuorumDecision:
    """The collective outcome for one memory: S_m against Q."""

    memory_id: str
    s_m: float
    q: float
    outcome: Vote


def form_vote(d: float, r: float, cfg: ProtocolConfig) -> tuple[Vote, float]:
    """Combine decay and relevance into (vote, combined_score).

    The boundary is strict: combined exactly at the threshold keeps.
    """
    combined = cfg.omega_d * d + cfg.omega_r * r
    vote = Vote.FORGET if combined < cfg.vote_threshold else Vote.KEEP
    return vote, combined


def quorum_threshold(agents: Sequence[AgentProfile], alpha: float) -> float:
    """Q = alpha * sum of active agents' weights."""
    total = 0.0
    active = 0
    for agent in agents:
        if agent.active:
            total += agent.weight
            active += 1
    if active == 0:
        raise NoActiveAgents("quorum threshold undefined with zero active agents")
    return alpha * total


def weighted_forget_score(votes: Iterable[AgentVote], agents: Sequence[AgentProfile]) -> float:
    """S_m: sum of weight*confidence over active agents voting forget.

    Votes from inactive agents are discarded entirely; keep votes contribute 0.
    """
    roster = {agent.agent_id: agent for agent in agents}
    seen: set[str] = set()
    total = 0.0
    for vote in votes:
        agent = roster.get(vote.agent_id)
        if agent is None:
            raise UnknownAgent(vote.agent_id)
        if vote.agent_id in seen:
            raise ValueError(f"duplicate vote from agent {vote.agent_id!r}")
        seen.add(vote.agent_id)
        if not agent.active:
            continue
        if vote.vote is Vote.FORGET:
            total += agent.weight * agent.confidence
    return total


def decide(s_m: float, q: float) -> Vote:
    """Forget iff S_m >= Q; the boundary is inclusive."""
    return Vote.FORGET if s_m >= q else Vote.KEEP


def quorum_decision(
    memory_id: str,
    votes: Iterable[AgentVote],
    agents: Sequence[AgentProfile],
    alpha: float,
) -> QuorumDecision:
    """Compose S_m, Q, and the outcome for one memory."""
    q = quorum_threshold(agents, alpha)
    s_m = weighted_forget_score(votes, agents)
    return QuorumDecision(memory_id=memory_id, s_m=s_m, q=q, outcome=decide(s_m, q))
