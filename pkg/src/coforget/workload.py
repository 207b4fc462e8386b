"""Synthetic workload generation and run-level metric aggregation.

Builds the seeded corpus (embeddings placed at controlled cosines to a shared
context vector), drives skewed access traffic with mid-epoch arrivals, and
folds per-epoch reports into summary metrics. Everything here is a pure
function of (spec, seed): generators draw from dedicated numpy substreams so
corpus, context, and traffic never share state.
"""

from __future__ import annotations

import uuid
from dataclasses import dataclass
from typing import Mapping, Sequence

import numpy as np

from .core import AgentProfile, ConfigError, FaultProfile, MemoryRecord
from .relevance import ContextProfile

__all__ = [
    "NEAR_COS",
    "FAR_COS",
    "AGENT_IDS",
    "EmptyPopulation",
    "WorkloadSpec",
    "workload_spec_from_items",
    "make_context",
    "generate_initial",
    "make_arrivals",
    "ZipfSampler",
    "InteractionStep",
    "step_interaction",
    "traffic_stream",
    "default_agents",
    "SummaryMetrics",
    "aggregate",
]

# Cosine bands for the two item populations. Near-context items score
# relevance >= 0.80, far items <= 0.55, so the populations straddle the
# forgetting boundary once decay sets in.
NEAR_COS = (0.60, 0.95)
FAR_COS = (-0.80, 0.10)

AGENT_IDS = ("planner-1", "planner-2", "percept-1", "percept-2")
_AGENT_WEIGHTS = {"planner-1": 1.5, "planner-2": 1.5, "percept-1": 1.0, "percept-2": 1.0}

# Substream indices under the workload seed.
_STREAM_CONTEXT = 0
_STREAM_INITIAL = 1
_STREAM_TRAFFIC = 2


class EmptyPopulation(ValueError):
    """Access sampling requested against zero live memories."""


@dataclass(frozen=True)
class WorkloadSpec:
    """Workload shape: corpus size, arrival range, access skew, and timing."""

    initial_items: int = 1000
    arrivals_per_epoch: tuple[int, int] = (10, 20)
    access_skew: float = 1.0
    accesses_per_interaction: int = 1
    relevance_mix: float = 0.5
    seed: int = 0
    dimension: int = 768
    history_window_s: float = 7200.0
    interaction_interval_s: float = 1.0

    def __post_init__(self) -> None:
        arrivals = self.arrivals_per_epoch
        if isinstance(arrivals, int):
            arrivals = (arrivals, arrivals)
        arrivals = (int(arrivals[0]), int(arrivals[1]))
        object.__setattr__(self, "arrivals_per_epoch", arrivals)
        if self.initial_items < 0:
            raise ValueError(f"initial_items must be >= 0, got {self.initial_items}")
        lo, hi = arrivals
        if lo < 0 or hi < lo:
            raise ValueError(f"arrival range invalid: {lo}..{hi}")
        if self.access_skew <= 0.0:
            raise ValueError(f"access_skew must be > 0, got {self.access_skew}")
        if self.accesses_per_interaction < 0:
            raise ValueError(
                f"accesses_per_interaction must be >= 0, got {self.accesses_per_interaction}"
            )
        if not 0.0 <= self.relevance_mix <= 1.0:
            raise ValueError(f"relevance_mix must be in [0, 1], got {self.relevance_mix}")
        if self.dimension < 1:
            raise ValueError(f"dimension must be >= 1, got {self.dimension}")
        if self.history_window_s < 0.0:
            raise ValueError(f"history_window_s must be >= 0, got {self.history_window_s}")
        if self.interaction_interval_s <= 0.0:
            raise ValueError(
                f"interaction_interval_s must be > 0, got {self.interaction_interval_s}"
            )


def workload_spec_from_items(items: Mapping[str, object]) -> WorkloadSpec:
    """Build a WorkloadSpec from parsed config-file items; unknown keys error."""
    known = set(WorkloadSpec.__dataclass_fields__)
    unknown = sorted(set(items) - known)
    if unknown:
        raise ConfigError(f"unknown workload config keys: {', '.join(unknown)}")
    try:
        return WorkloadSpec(**items)  # type: ignore[arg-type]
    except (TypeError, ValueError) as exc:
        raise ConfigError(str(exc)) from exc


# --- corpus generation -----------------------------------------------------------


def _stream(seed: int, index: int) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence([seed, index]))


def _unit_vector(rng: np.random.Generator, dimension: int) -> np.ndarray:
    while True:
        vec = rng.standard_normal(dimension)
        norm = float(np.linalg.norm(vec))
        if norm > 0.0:
            return vec / norm


def _embedding_at_cosine(
    rng: np.random.Generator, context_unit: np.ndarray, cosine: float
) -> np.ndarray:
    """Sample a vector whose cosine to the context is exactly `cosine`.

    Decomposes into a context component plus a random orthogonal component,
    then rescales by a random magnitude (cosine is scale-invariant, and the
    varied norms exercise normalization downstream).
    """
    dimension = context_unit.shape[0]
    while True:
        raw = rng.standard_normal(dimension)
        ortho = raw - float(np.dot(raw, context_unit)) * context_unit
        norm = float(np.linalg.norm(ortho))
        if norm > 0.0:
            ortho /= norm
            break
    direction = cosine * context_unit + np.sqrt(max(0.0, 1.0 - cosine * cosine)) * ortho
    return direction * rng.uniform(0.5, 2.0)


def _fresh_id(rng: np.random.Generator) -> str:
    return str(uuid.UUID(bytes=rng.bytes(16), version=4))


def make_context(spec: WorkloadSpec) -> ContextProfile:
    """The shared task context every relevance score is measured against."""
    rng = _stream(spec.seed, _STREAM_CONTEXT)
    return ContextProfile(
        embedding=_unit_vector(rng, spec.dimension),
        label="shared workspace task context",
    )


def _draw_record(
    spec: WorkloadSpec,
    rng: np.random.Generator,
    context_unit: np.ndarray,
    t_last: float,
) -> MemoryRecord:
    near = rng.random() < spec.relevance_mix
    lo, hi = NEAR_COS if near else FAR_COS
    cosine = rng.uniform(lo, hi)
    return MemoryRecord(
        id=_fresh_id(rng),
        embedding=_embedding_at_cosine(rng, context_unit, cosine),
        agent_id=AGENT_IDS[int(rng.integers(len(AGENT_IDS)))],
        t_last=t_last,
        salience=float(rng.uniform(0.0, 1.0)),
    )


def generate_initial(spec: WorkloadSpec, dimension: int | None = None) -> list[MemoryRecord]:
    """The seeded initial corpus; t_last spread over the historical window."""
    if dimension is not None and dimension != spec.dimension:
        spec = WorkloadSpec(**{**_spec_items(spec), "dimension": dimension})
    context_unit = make_context(spec).embedding
    rng = _stream(spec.seed, _STREAM_INITIAL)
    return [
        _draw_record(spec, rng, context_unit, t_last=float(rng.uniform(0.0, spec.history_window_s)))
        for _ in range(spec.initial_items)
    ]


def _spec_items(spec: WorkloadSpec) -> dict[str, object]:
    return {name: getattr(spec, name) for name in WorkloadSpec.__dataclass_fields__}


def make_arrivals(
    spec: WorkloadSpec,
    rng: np.random.Generator,
    count: int,
    now: float,
    context: ContextProfile,
) -> list[MemoryRecord]:
    """Fresh records arriving mid-run; t_last starts at the arrival instant."""
    return [_draw_record(spec, rng, context.embedding, t_last=now) for _ in range(count)]


# --- access traffic --------------------------------------------------------------


class ZipfSampler:
    """Bounded Zipf over ranks 0..n-1 via the cumulative weight table.

    Rebuilt whenever the live population changes; sampling is a binary search
    over the cumulative mass, so draws are O(log n).
    """

    def __init__(self, population: int, skew: float):
        if population < 1:
            raise EmptyPopulation("cannot sample over zero live memories")
        ranks = np.arange(1, population + 1, dtype=np.float64)
        self._cumulative = np.cumsum(ranks**-skew)
        self.population = population

    def sample(self, rng: np.random.Generator, k: int) -> np.ndarray:
        draws = rng.random(k) * self._cumulative[-1]
        return np.searchsorted(self._cumulative, draws, side="right")


@dataclass(frozen=True)
class InteractionStep:
    """One interaction's traffic: ids to access now, records arriving later."""

    access_ids: tuple[str, ...]
    arrivals: tuple[MemoryRecord, ...]


def step_interaction(
    spec: WorkloadSpec,
    live_ids: Sequence[str],
    rng: np.random.Generator,
    *,
    context: ContextProfile,
    arrival_count: int = 0,
    now: float = 0.0,
    sampler: ZipfSampler | None = None,
) -> InteractionStep:
    """Draw one interaction: Zipf-ranked accesses plus any scheduled arrivals.

    Ranks follow insertion order of live_ids (early ids are popular). Arrival
    records are returned for the caller to queue; they join the store only at
    the next epoch boundary.
    """
    accesses: tuple[str, ...] = ()
    if spec.accesses_per_interaction > 0:
        if not live_ids:
            raise EmptyPopulation("no live memories to access")
        if sampler is None or sampler.population != len(live_ids):
            sampler = ZipfSampler(len(live_ids), spec.access_skew)
        indexes = sampler.sample(rng, spec.accesses_per_interaction)
        accesses = tuple(live_ids[int(i)] for i in indexes)
    arrivals = make_arrivals(spec, rng, arrival_count, now, context) if arrival_count else []
    return InteractionStep(access_ids=accesses, arrivals=tuple(arrivals))


def traffic_stream(spec: WorkloadSpec) -> np.random.Generator:
    """The dedicated RNG for access/arrival draws over a whole run."""
    return _stream(spec.seed, _STREAM_TRAFFIC)


# --- roster and aggregation -------------------------------------------------------


def default_agents(
    faults: Mapping[str, FaultProfile] | None = None,
) -> tuple[AgentProfile, ...]:
    """The evaluation roster: two planners at weight 1.5, two perception agents at 1.0."""
    faults = faults or {}
    return tuple(
        AgentProfile(
            agent_id=agent_id,
            weight=_AGENT_WEIGHTS[agent_id],
            confidence=1.0,
            active=True,
            fault=faults.get(agent_id, FaultProfile()),
        )
        for agent_id in AGENT_IDS
    )


@dataclass(frozen=True)
class SummaryMetrics:
    """Run-level rollup across every epoch report."""

    epochs: int
    footprint_reduction: float
    pbft_success_rate: float
    cache_hit_rate: float
    mean_deletion_rate: float
    total_deleted: int
    final_footprint: int
    final_baseline_footprint: int


def aggregate(
    reports: Sequence,
    baseline_footprints: Sequence[int],
    *,
    strict_pbft: bool = False,
) -> SummaryMetrics:
    """Fold epoch reports into the headline metrics.

    An epoch succeeds when every consensus instance it started decided; with
    no instances it counts as success by default, or is excluded from the
    denominator under strict_pbft.
    """
    if not reports:
        raise ValueError("aggregate requires at least one epoch report")
    if len(baseline_footprints) != len(reports):
        raise ValueError(
            f"baseline series length {len(baseline_footprints)} != report count {len(reports)}"
        )
    final_baseline = baseline_footprints[-1]
    final_footprint = reports[-1].memories_end
    reduction = 1.0 - final_footprint / final_baseline if final_baseline > 0 else 0.0

    successes = 0
    non_vacuous = 0
    non_vacuous_successes = 0
    for report in reports:
        started = report.consensus_reached + report.consensus_failed
        succeeded = report.consensus_failed == 0
        successes += succeeded
        if started > 0:
            non_vacuous += 1
            non_vacuous_successes += succeeded
    if strict_pbft:
        success_rate = non_vacuous_successes / non_vacuous if non_vacuous else 1.0
    else:
        success_rate = successes / len(reports)

    hits = sum(report.cache_hits for report in reports)
    misses = sum(report.cache_misses for report in reports)
    total_gets = hits + misses
    hit_rate = hits / total_gets if total_gets else 0.0

    return SummaryMetrics(
        epochs=len(reports),
        footprint_reduction=reduction,
        pbft_success_rate=success_rate,
        cache_hit_rate=hit_rate,
        mean_deletion_rate=sum(r.deletion_rate for r in reports) / len(reports),
        total_deleted=sum(r.deleted for r in reports),
        final_footprint=final_footprint,
        final_baseline_footprint=final_baseline,
    )
