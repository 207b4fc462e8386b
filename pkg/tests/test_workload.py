"""Workload generation: seeded corpora, cosine band placement, Zipf traffic, rollups."""

from __future__ import annotations

import uuid
from dataclasses import dataclass, replace

import numpy as np
import pytest

from coforget.core import ConfigError, FaultKind, FaultProfile
from coforget.relevance import relevance
from coforget.workload import (
    AGENT_IDS,
    FAR_COS,
    NEAR_COS,
    EmptyPopulation,
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
    workload_spec_from_items,
)


def spec(**kwargs) -> WorkloadSpec:
    defaults = dict(initial_items=50, dimension=16, seed=0)
    defaults.update(kwargs)
    return WorkloadSpec(**defaults)


def cosine(a: np.ndarray, b: np.ndarray) -> float:
    return float(np.dot(a, b) / (np.linalg.norm(a) * np.linalg.norm(b)))


@dataclass
class FakeReport:
    memories_end: int = 100
    consensus_reached: int = 0
    consensus_failed: int = 0
    cache_hits: int = 0
    cache_misses: int = 0
    deletion_rate: float = 0.0
    deleted: int = 0


class TestWorkloadSpec:
    def test_defaults(self):
        ws = WorkloadSpec()
        assert ws.initial_items == 1000
        assert ws.arrivals_per_epoch == (10, 20)
        assert ws.dimension == 768

    def test_scalar_arrivals_normalize_to_range(self):
        assert WorkloadSpec(arrivals_per_epoch=5).arrivals_per_epoch == (5, 5)

    @pytest.mark.parametrize(
        "field,value",
        [
            ("initial_items", -1),
            ("arrivals_per_epoch", (5, 2)),
            ("arrivals_per_epoch", (-1, 2)),
            ("access_skew", 0.0),
            ("accesses_per_interaction", -1),
            ("relevance_mix", 1.5),
            ("dimension", 0),
            ("history_window_s", -1.0),
            ("interaction_interval_s", 0.0),
        ],
    )
    def test_invalid_fields_rejected(self, field, value):
        with pytest.raises(ValueError):
            WorkloadSpec(**{field: value})

    def test_from_items_builds(self):
        ws = workload_spec_from_items({"initial_items": 10, "access_skew": 1.3})
        assert ws.initial_items == 10
        assert ws.access_skew == 1.3

    def test_from_items_rejects_unknown_keys(self):
        with pytest.raises(ConfigError, match="churn"):
            workload_spec_from_items({"churn": 2})

    def test_from_items_wraps_value_errors(self):
        with pytest.raises(ConfigError):
            workload_spec_from_items({"relevance_mix": 7.0})


class TestContext:
    def test_context_is_deterministic_and_unit_norm(self):
        a = make_context(spec())
        b = make_context(spec())
        np.testing.assert_array_equal(a.embedding, b.embedding)
        assert np.linalg.norm(a.embedding) == pytest.approx(1.0)

    def test_context_varies_with_seed(self):
        a = make_context(spec(seed=1))
        b = make_context(spec(seed=2))
        assert not np.array_equal(a.embedding, b.embedding)


class TestGenerateInitial:
    def test_zero_items(self):
        assert generate_initial(spec(initial_items=0)) == []

    def test_exact_count_and_unique_valid_ids(self):
        records = generate_initial(spec(initial_items=80))
        assert len(records) == 80
        ids = {r.id for r in records}
        assert len(ids) == 80
        for mid in ids:
            assert uuid.UUID(mid).version == 4

    def test_same_seed_reproduces_the_corpus(self):
        a = generate_initial(spec())
        b = generate_initial(spec())
        assert [r.id for r in a] == [r.id for r in b]
        for ra, rb in zip(a, b):
            np.testing.assert_array_equal(ra.embedding, rb.embedding)
            assert (ra.t_last, ra.salience, ra.agent_id) == (rb.t_last, rb.salience, rb.agent_id)

    def test_cosines_land_in_the_two_bands(self):
        ws = spec(initial_items=300)
        context_unit = make_context(ws).embedding
        near = far = 0
        for rec in generate_initial(ws):
            c = cosine(rec.embedding, context_unit)
            if NEAR_COS[0] - 1e-9 <= c <= NEAR_COS[1] + 1e-9:
                near += 1
            elif FAR_COS[0] - 1e-9 <= c <= FAR_COS[1] + 1e-9:
                far += 1
            else:
                pytest.fail(f"cosine {c} outside both bands")
        # mix=0.5 over 300 draws: a 6-sigma band around 150 is ~±52.
        assert abs(near - 150) < 52
        assert far == 300 - near

    def test_relevance_mix_extremes(self):
        ws = spec(initial_items=40, relevance_mix=1.0)
        context = make_context(ws)
        for rec in generate_initial(ws):
            assert relevance(rec, context) >= 0.80 - 1e-9
        ws = spec(initial_items=40, relevance_mix=0.0)
        context = make_context(ws)
        for rec in generate_initial(ws):
            assert relevance(rec, context) <= 0.55 + 1e-9

    def test_field_ranges(self):
        ws = spec(initial_items=100, history_window_s=500.0)
        for rec in generate_initial(ws):
            assert 0.0 <= rec.t_last <= 500.0
            assert 0.0 <= rec.salience <= 1.0
            assert rec.agent_id in AGENT_IDS
            norm = float(np.linalg.norm(rec.embedding))
            assert 0.4 <= norm <= 2.1  # uniform(0.5, 2.0) magnitude, pre-normalization

    def test_dimension_override_rebuilds_spec(self):
        records = generate_initial(spec(dimension=16), dimension=8)
        assert records[0].embedding.shape == (8,)

    def test_arrivals_start_at_now(self):
        ws = spec()
        rng = traffic_stream(ws)
        arrivals = make_arrivals(ws, rng, 5, now=123.5, context=make_context(ws))
        assert len(arrivals) == 5
        assert all(r.t_last == 123.5 for r in arrivals)


class TestZipfSampler:
    def test_empty_population_rejected(self):
        with pytest.raises(EmptyPopulation):
            ZipfSampler(0, 1.0)

    def test_single_id_always_rank_zero(self):
        sampler = ZipfSampler(1, 1.0)
        rng = np.random.default_rng(0)
        assert set(sampler.sample(rng, 100)) == {0}

    def test_low_ranks_dominate(self):
        sampler = ZipfSampler(100, 1.0)
        rng = np.random.default_rng(1)
        draws = sampler.sample(rng, 10_000)
        counts = np.bincount(draws, minlength=100)
        assert counts[0] > counts[9] > counts[49]

    def test_frequencies_match_analytic_mass(self):
        population, skew = 50, 1.2
        sampler = ZipfSampler(population, skew)
        rng = np.random.default_rng(2)
        draws = sampler.sample(rng, 50_000)
        counts = np.bincount(draws, minlength=population)
        weights = np.arange(1, population + 1, dtype=float) ** -skew
        expected = weights / weights.sum()
        observed = counts / counts.sum()
        # Top ranks carry enough mass for a tight relative check.
        for rank in range(5):
            assert observed[rank] == pytest.approx(expected[rank], rel=0.1)

    def test_draws_stay_in_range(self):
        sampler = ZipfSampler(7, 2.0)
        rng = np.random.default_rng(3)
        assert set(sampler.sample(rng, 1000)) <= set(range(7))


class TestStepInteraction:
    def test_accesses_and_arrivals(self):
        ws = spec(accesses_per_interaction=3)
        rng = traffic_stream(ws)
        live = [f"m{i}" for i in range(20)]
        step = step_interaction(
            ws, live, rng, context=make_context(ws), arrival_count=2, now=9.0
        )
        assert len(step.access_ids) == 3
        assert set(step.access_ids) <= set(live)
        assert len(step.arrivals) == 2
        assert all(r.t_last == 9.0 for r in step.arrivals)

    def test_empty_population_raises_when_accessing(self):
        ws = spec(accesses_per_interaction=1)
        with pytest.raises(EmptyPopulation):
            step_interaction(ws, [], traffic_stream(ws), context=make_context(ws))

    def test_zero_accesses_tolerates_empty_population(self):
        ws = spec(accesses_per_interaction=0)
        step = step_interaction(ws, [], traffic_stream(ws), context=make_context(ws))
        assert step.access_ids == ()

    def test_sampler_reuse_and_rebuild(self):
        ws = spec(accesses_per_interaction=2)
        rng = traffic_stream(ws)
        context = make_context(ws)
        sampler = ZipfSampler(10, ws.access_skew)
        live = [f"m{i}" for i in range(10)]
        step_interaction(ws, live, rng, context=context, sampler=sampler)
        # Population changed: the stale sampler must not be trusted.
        step = step_interaction(ws, live[:4], rng, context=context, sampler=sampler)
        assert set(step.access_ids) <= set(live[:4])

    def test_early_ids_are_popular(self):
        ws = spec(accesses_per_interaction=1, access_skew=1.2)
        rng = traffic_stream(ws)
        context = make_context(ws)
        live = [f"m{i}" for i in range(30)]
        hits = {mid: 0 for mid in live}
        for _ in range(3000):
            step = step_interaction(ws, live, rng, context=context)
            hits[step.access_ids[0]] += 1
        assert hits["m0"] > hits["m15"]


class TestDefaultAgents:
    def test_reference_roster(self):
        agents = default_agents()
        assert tuple(a.agent_id for a in agents) == AGENT_IDS
        assert [a.weight for a in agents] == [1.5, 1.5, 1.0, 1.0]
        assert all(a.confidence == 1.0 and a.active for a in agents)
        assert all(a.fault.kind is FaultKind.HONEST for a in agents)

    def test_fault_assignment(self):
        fault = FaultProfile(FaultKind.SILENT_HALF, coin_seed=3)
        agents = default_agents({"planner-2": fault})
        by_id = {a.agent_id: a for a in agents}
        assert by_id["planner-2"].fault == fault
        assert by_id["planner-1"].fault.kind is FaultKind.HONEST


class TestAggregate:
    def test_requires_reports_and_matching_baseline(self):
        with pytest.raises(ValueError, match="at least one"):
            aggregate([], [])
        with pytest.raises(ValueError, match="length"):
            aggregate([FakeReport()], [100, 200])

    def test_footprint_reduction(self):
        reports = [FakeReport(memories_end=120), FakeReport(memories_end=60)]
        summary = aggregate(reports, [110, 120])
        assert summary.footprint_reduction == pytest.approx(1.0 - 60 / 120)
        assert summary.final_footprint == 60
        assert summary.final_baseline_footprint == 120

    def test_zero_baseline_means_zero_reduction(self):
        summary = aggregate([FakeReport(memories_end=0)], [0])
        assert summary.footprint_reduction == 0.0

    def test_default_success_rate_counts_vacuous_epochs(self):
        reports = [
            FakeReport(consensus_reached=0, consensus_failed=0),  # vacuous: success
            FakeReport(consensus_reached=5, consensus_failed=0),
            FakeReport(consensus_reached=4, consensus_failed=1),
        ]
        summary = aggregate(reports, [100] * 3)
        assert summary.pbft_success_rate == pytest.approx(2 / 3)

    def test_strict_mode_excludes_vacuous_epochs(self):
        reports = [
            FakeReport(consensus_reached=0, consensus_failed=0),
            FakeReport(consensus_reached=5, consensus_failed=0),
            FakeReport(consensus_reached=4, consensus_failed=1),
        ]
        summary = aggregate(reports, [100] * 3, strict_pbft=True)
        assert summary.pbft_success_rate == pytest.approx(1 / 2)

    def test_strict_mode_with_no_instances_at_all(self):
        summary = aggregate([FakeReport()], [100], strict_pbft=True)
        assert summary.pbft_success_rate == 1.0

    def test_success_rate_example(self):
        reports = [FakeReport(consensus_reached=1) for _ in range(480)]
        reports += [FakeReport(consensus_reached=0, consensus_failed=2) for _ in range(20)]
        summary = aggregate(reports, [100] * 500)
        assert summary.pbft_success_rate == pytest.approx(0.96)

    def test_cache_hit_rate_pools_all_epochs(self):
        reports = [
            FakeReport(cache_hits=70, cache_misses=30),
            FakeReport(cache_hits=0, cache_misses=0),
            FakeReport(cache_hits=30, cache_misses=70),
        ]
        summary = aggregate(reports, [100] * 3)
        assert summary.cache_hit_rate == pytest.approx(0.5)

    def test_no_traffic_means_zero_hit_rate(self):
        summary = aggregate([FakeReport()], [100])
        assert summary.cache_hit_rate == 0.0

    def test_deletion_rollups(self):
        reports = [
            FakeReport(deletion_rate=0.2, deleted=20),
            FakeReport(deletion_rate=0.0, deleted=0),
        ]
        summary = aggregate(reports, [100] * 2)
        assert summary.mean_deletion_rate == pytest.approx(0.1)
        assert summary.total_deleted == 20
        assert summary.epochs == 2
        assert isinstance(summary, SummaryMetrics)
