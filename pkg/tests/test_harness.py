from __future__ import annotations

import pytest

from capstore.errors import ConfigError
from capstore.harness import (
    ExperimentConfig, greedy_cover, hit_rate_bound_report, method_dominance, run_omission_experiment,
    run_simulation,
)
from capstore.synth import SynthParams, independence_world, synth_corpus, synth_world


@pytest.fixture(scope="module")
def world():
    return synth_world()


@pytest.fixture(scope="module")
def metrics(world):
    corpus = synth_corpus(world, SynthParams(n_sessions=150), seed=11)
    return run_simulation(ExperimentConfig(seed=11), world.graph, world.forbidden, world.templates, corpus)


def test_config_validation():
    for bad in (ExperimentConfig(seed=1, methods=("lru",)), ExperimentConfig(seed=1, coverage=(1.2,)),
                ExperimentConfig(seed=1, coverage=(0.5, 0.5)), ExperimentConfig(seed=1, cas_scope="global"),
                ExperimentConfig(seed=1, methods=())):
        with pytest.raises(ConfigError):
            bad.validate()


def test_rag_equals_k_at_full_coverage(metrics):
    for r in metrics.rows("cas_pab", 1.0):
        assert r.rag_calls == r.K
    assert metrics.summary("cas_pab").mean_rag == metrics.summary("cas_pab").mean_K


def test_no_unsafe_certified_hits(metrics):
    for s in metrics.summaries:
        if s.method != "cosine":
            assert s.unsafe_hits == 0


def test_coverage_sweep_shape(metrics):
    hits = [metrics.summary("cas_pab", p).hit_rate for p in (1.0, 0.75, 0.5, 0.25)]
    assert all(a > b for a, b in zip(hits, hits[1:]))
    t2 = [metrics.summary("cas_pab", p).tier2_rate for p in (1.0, 0.75, 0.5, 0.25)]
    assert max(t2) - min(t2) <= 0.02


def test_no_cache_pays_every_turn(metrics):
    s = metrics.summary("no_cache")
    assert s.rag_rate == 1.0 - s.blocked / s.turns and s.hit_rate == 0.0
    assert method_dominance(metrics)


def test_simulation_is_deterministic(world):
    corpus = synth_corpus(world, SynthParams(n_sessions=40), seed=2)
    cfg = ExperimentConfig(seed=2)
    a = run_simulation(cfg, world.graph, world.forbidden, world.templates, corpus)
    b = run_simulation(cfg, world.graph, world.forbidden, world.templates, corpus)
    assert a.sessions == b.sessions and a.summaries == b.summaries


def test_run_scope_shares_store(world):
    corpus = synth_corpus(world, SynthParams(n_sessions=60), seed=4)
    cfg = ExperimentConfig(seed=4, methods=("cas_only",), cas_scope="run")
    m = run_simulation(cfg, world.graph, world.forbidden, world.templates, corpus)
    per = run_simulation(ExperimentConfig(seed=4, methods=("cas_only",)), world.graph, world.forbidden,
                         world.templates, corpus)
    assert m.summary("cas_only").mean_rag <= per.summary("cas_only").mean_rag
    assert m.summary("cas_only").unsafe_hits == 0


def test_tenant_forbidden_blocks(world):
    corpus = synth_corpus(world, SynthParams(n_sessions=40, tenants=("t0", "t1")), seed=5)
    cfg = ExperimentConfig(seed=5, methods=("cas_pab",), coverage=(1.0,), cas_scope="run",
                           tenant_forbidden={"t1": ("hotel-candidates-retrieved",)})
    m = run_simulation(cfg, world.graph, world.forbidden, world.templates, corpus)
    assert m.summary("cas_pab").blocked > 0 and m.summary("cas_pab").unsafe_hits == 0


def test_omission_zero_rate_is_clean():
    world, params = independence_world()
    corpus = synth_corpus(world, SynthParams(**{**params.__dict__, "n_sessions": 300}), seed=1)
    (r0, r1) = run_omission_experiment(world.graph, world.forbidden, world.templates, corpus, (0.0, 0.3), 1, 2)
    assert (r0.safety_violation_rate, r0.false_rejection_rate, r0.pab_recall_loss, r0.and_violation_rate) == (0, 0, 0, 0)
    assert r1.pab_recall < 1.0 and r1.and_violation_rate == 0.0
    assert r1.predicted_recall == pytest.approx(0.49)


def test_greedy_cover():
    sets = [frozenset("a"), frozenset("ab"), frozenset("xyz")]
    assert greedy_cover(sets, 1) == [0, 2]
    assert greedy_cover([], 1) == []


def test_bound_report(world):
    corpus = synth_corpus(world, SynthParams(n_sessions=20), seed=1)
    rep = hit_rate_bound_report(world.graph, world.forbidden, corpus, 1.0, 4, measured=0.5)
    assert rep.cover_size >= 1 and rep.n == world.graph.n
    assert rep.vacuous == (rep.bound <= 0) and (rep.holds is None) == rep.vacuous
    with pytest.raises(ConfigError):
        hit_rate_bound_report(world.graph, world.forbidden, corpus, 1.0, 0)
