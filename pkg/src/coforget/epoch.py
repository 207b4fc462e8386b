"""Epoch orchestration: decay, voting, consensus, and committed deletion.

One epoch evaluates a fixed snapshot of the store in four phases: score decay
for every memory, collect votes and the proposal set, run one consensus round
per proposed memory, then delete and persist. Arrivals queued during the
epoch window join the store only after Phase 4, so the snapshot never shifts
underfoot. run_simulation interleaves these epochs with the access workload
and tracks the no-forgetting counterfactual in parallel.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Mapping, Sequence

from .consensus import ConsensusTimeout, PbftInstance, run_round, finalize
from .core import AgentProfile, MemoryRecord, ProtocolConfig, Vote, validate_config
from .decay import decay_score
from .relevance import ContextProfile, RelevanceScorer, relevance
from .store import MemoryStore
from .transport import (
    CoordinatorEndpoint,
    NetworkConfig,
    SimulatedNetwork,
    propose_forgetting,
    resolve_behavior,
)
from .voting import AgentVote, form_vote, quorum_threshold, weighted_forget_score
from .workload import (
    SummaryMetrics,
    WorkloadSpec,
    ZipfSampler,
    aggregate,
    default_agents,
    generate_initial,
    make_arrivals,
    make_context,
    step_interaction,
    traffic_stream,
)

logger = logging.getLogger(__name__)

__all__ = [
    "MemoryAudit",
    "EpochReport",
    "run_epoch",
    "SimulationResult",
    "run_simulation",
]


@dataclass(frozen=True)
class MemoryAudit:
    """Every number behind one memory's fate this epoch."""

    memory_id: str
    votes: tuple[tuple[str, str], ...]
    decision: str  # consensus outcome: "forget" | "keep" | "timeout"
    s_m: float
    q: float
    commit_count: int
    outcome: str  # "deleted" | "retained"


@dataclass
class EpochReport:
    """One epoch's complete accounting, audit trail included."""

    epoch_index: int
    memories_start: int
    memories_end: int
    additions: int
    proposed: int
    consensus_reached: int
    consensus_failed: int
    deleted: int
    deletion_rate: float
    elapsed_virtual_s: float
    cache_hits: int
    cache_misses: int
    per_memory_audit: list[MemoryAudit] = field(default_factory=list)


_VOTE_LABEL = {Vote.KEEP: "keep", Vote.FORGET: "forget"}


def _relevance_for(
    store: MemoryStore,
    memory_id: str,
    context: ContextProfile,
    scorer: RelevanceScorer | None,
    memo: dict,
    key,
) -> float:
    if key in memo:
        return memo[key]
    record = store.peek(memory_id)
    value = relevance(record, context, scorer)
    memo[key] = value
    return value


def run_epoch(
    store: MemoryStore,
    agents: Sequence[AgentProfile],
    context: ContextProfile,
    cfg: ProtocolConfig,
    net,
    *,
    scorer: RelevanceScorer | Mapping[str, RelevanceScorer] | None = None,
    epoch_index: int = 0,
    now: float | None = None,
    arrivals: Sequence[MemoryRecord] = (),
    relevance_memo: dict | None = None,
    coordinator: CoordinatorEndpoint | None = None,
    registry: dict[tuple[str, int], PbftInstance] | None = None,
    budget: int | None = None,
    cache_hits_base: int | None = None,
    cache_misses_base: int | None = None,
) -> EpochReport:
    """Run one full epoch against the store's current snapshot.

    `scorer` is either one scorer shared by every agent or a mapping from
    agent id to that agent's scorer. `arrivals` are queued records that enter
    the store after deletion commits. Consensus timeouts retain the memory and
    are recorded per-memory rather than raised.
    """
    hits_base = store.hits if cache_hits_base is None else cache_hits_base
    misses_base = store.misses if cache_misses_base is None else cache_misses_base
    memories_start = store.count()
    if coordinator is None:
        coordinator = CoordinatorEndpoint()
    if relevance_memo is None:
        relevance_memo = {}

    t_last_by_id = dict(store.scan_t_last())
    if now is None:
        now = max(t_last_by_id.values(), default=0.0)

    # Phase 1: decay for every memory in the snapshot.
    combined_decay = {
        memory_id: decay_score(t_last, now, cfg).combined
        for memory_id, t_last in t_last_by_id.items()
    }

    # Phase 2: independent evaluation. With one shared scorer every honest
    # agent sees identical (D, R) and therefore forms the same vote, so it is
    # computed once and attributed to each agent.
    active = sorted((a for a in agents if a.active), key=lambda a: a.agent_id)
    per_agent_scorers = scorer if isinstance(scorer, Mapping) else None
    memory_order = sorted(t_last_by_id)
    votes_by_memory: dict[str, dict[str, AgentVote]] = {}
    forget_lists: dict[str, list[str]] = {a.agent_id: [] for a in active}
    for memory_id in memory_order:
        d = combined_decay[memory_id]
        cast: dict[str, AgentVote] = {}
        if per_agent_scorers is None:
            r = _relevance_for(store, memory_id, context, scorer, relevance_memo, memory_id)
            vote, combined = form_vote(d, r, cfg)
            for profile in active:
                cast[profile.agent_id] = AgentVote(
                    agent_id=profile.agent_id,
                    memory_id=memory_id,
                    vote=vote,
                    combined_score=combined,
                )
                if vote is Vote.FORGET:
                    forget_lists[profile.agent_id].append(memory_id)
        else:
            for profile in active:
                r = _relevance_for(
                    store,
                    memory_id,
                    context,
                    per_agent_scorers.get(profile.agent_id),
                    relevance_memo,
                    (profile.agent_id, memory_id),
                )
                vote, combined = form_vote(d, r, cfg)
                cast[profile.agent_id] = AgentVote(
                    agent_id=profile.agent_id,
                    memory_id=memory_id,
                    vote=vote,
                    combined_score=combined,
                )
                if vote is Vote.FORGET:
                    forget_lists[profile.agent_id].append(memory_id)
        votes_by_memory[memory_id] = cast

    # Agents ship their forget lists to the coordinator; the proposal set is
    # the union of acknowledged proposals.
    proposed: dict[str, None] = {}
    for profile in active:
        wanted = forget_lists[profile.agent_id]
        if not wanted:
            continue
        for memory_id in propose_forgetting(wanted, profile.agent_id, coordinator, epoch=epoch_index):
            proposed[memory_id] = None

    # Phase 3: one consensus round per proposed memory, then the quorum gate.
    reached = 0
    failed = 0
    elapsed = 0.0
    audits: list[MemoryAudit] = []
    to_delete: list[str] = []
    q = quorum_threshold(agents, cfg.alpha) if active else 0.0
    for memory_id in sorted(proposed):
        cast = votes_by_memory[memory_id]
        behaviors = {
            profile.agent_id: resolve_behavior(profile.fault, epoch_index, memory_id)
            for profile in active
        }
        result = run_round(
            memory_id,
            epoch_index,
            agents,
            {agent_id: agent_vote.vote for agent_id, agent_vote in cast.items()},
            cfg,
            net,
            behaviors=behaviors,
            budget=budget,
            registry=registry,
        )
        elapsed += result.elapsed_virtual_s
        vote_list = [cast[agent_id] for agent_id in sorted(cast)]
        s_m = weighted_forget_score(vote_list, agents)
        try:
            final = finalize(result.instance, vote_list, agents, cfg)
        except ConsensusTimeout:
            failed += 1
            decision = "timeout"
            outcome = "retained"
        else:
            reached += 1
            decision = _VOTE_LABEL[result.instance.decision]
            if final is Vote.FORGET:
                to_delete.append(memory_id)
                outcome = "deleted"
            else:
                outcome = "retained"
        audits.append(
            MemoryAudit(
                memory_id=memory_id,
                votes=tuple((agent_id, _VOTE_LABEL[cast[agent_id].vote]) for agent_id in sorted(cast)),
                decision=decision,
                s_m=s_m,
                q=q,
                commit_count=result.commit_count,
                outcome=outcome,
            )
        )

    # Phase 4: delete, persist, then admit the queued arrivals.
    deleted = store.delete(to_delete)
    store.commit(now)
    for record in arrivals:
        store.put(record, now)

    memories_end = store.count()
    return EpochReport(
        epoch_index=epoch_index,
        memories_start=memories_start,
        memories_end=memories_end,
        additions=len(arrivals),
        proposed=len(proposed),
        consensus_reached=reached,
        consensus_failed=failed,
        deleted=deleted,
        deletion_rate=deleted / memories_start if memories_start else 0.0,
        elapsed_virtual_s=elapsed,
        cache_hits=store.hits - hits_base,
        cache_misses=store.misses - misses_base,
        per_memory_audit=audits,
    )


@dataclass
class SimulationResult:
    """A whole run: per-epoch reports, the rollup, and the counterfactual series."""

    reports: list[EpochReport]
    summary: SummaryMetrics
    baseline_footprints: list[int]


def run_simulation(
    cfg: ProtocolConfig,
    spec: WorkloadSpec,
    epochs: int,
    *,
    agents: Sequence[AgentProfile] | None = None,
    net=None,
    net_cfg: NetworkConfig | None = None,
    scorer: RelevanceScorer | Mapping[str, RelevanceScorer] | None = None,
    strict_pbft: bool = False,
    snapshot_path=None,
) -> SimulationResult:
    """Interleave the access workload with epoch executions.

    The virtual clock starts at the end of the historical window and advances
    one interaction interval per interaction; an epoch fires every
    cfg.epoch_interactions interactions. The baseline series is the footprint
    a no-forgetting twin would have (initial plus cumulative arrivals).
    """
    validate_config(cfg)
    if epochs < 1:
        raise ValueError(f"epochs must be >= 1, got {epochs}")
    if agents is None:
        agents = default_agents()
    if net is None:
        net = SimulatedNetwork(net_cfg or NetworkConfig(seed=cfg.rng_seed))

    context = make_context(spec)
    store = MemoryStore.from_config(
        cfg, spec.dimension, snapshot_path=snapshot_path, start_time=spec.history_window_s
    )
    now = spec.history_window_s
    for record in generate_initial(spec):
        store.put(record, now)
    store.commit(now)

    rng = traffic_stream(spec)
    registry: dict[tuple[str, int], PbftInstance] = {}
    relevance_memo: dict = {}
    coordinator = CoordinatorEndpoint()
    reports: list[EpochReport] = []
    baselines: list[int] = []
    baseline_footprint = spec.initial_items
    hits_base = store.hits
    misses_base = store.misses
    lo, hi = spec.arrivals_per_epoch

    for epoch_index in range(epochs):
        arrival_count = int(rng.integers(lo, hi + 1))
        slots: dict[int, int] = {}
        for _ in range(arrival_count):
            slot = int(rng.integers(0, cfg.epoch_interactions))
            slots[slot] = slots.get(slot, 0) + 1

        live = store.ids()
        sampler = ZipfSampler(len(live), spec.access_skew) if live else None
        pending_arrivals: list[MemoryRecord] = []
        for interaction in range(cfg.epoch_interactions):
            now += spec.interaction_interval_s
            if live:
                step = step_interaction(
                    spec,
                    live,
                    rng,
                    context=context,
                    arrival_count=slots.get(interaction, 0),
                    now=now,
                    sampler=sampler,
                )
                for memory_id in step.access_ids:
                    store.get(memory_id, now)
                pending_arrivals.extend(step.arrivals)
            elif slots.get(interaction, 0):
                pending_arrivals.extend(
                    make_arrivals(spec, rng, slots[interaction], now, context)
                )

        report = run_epoch(
            store,
            agents,
            context,
            cfg,
            net,
            scorer=scorer,
            epoch_index=epoch_index,
            now=now,
            arrivals=pending_arrivals,
            relevance_memo=relevance_memo,
            coordinator=coordinator,
            registry=registry,
            cache_hits_base=hits_base,
            cache_misses_base=misses_base,
        )
        hits_base = store.hits
        misses_base = store.misses
        baseline_footprint += len(pending_arrivals)
        baselines.append(baseline_footprint)
        reports.append(report)

    summary = aggregate(reports, baselines, strict_pbft=strict_pbft)
    return SimulationResult(reports=reports, summary=summary, baseline_footprints=baselines)
