from __future__ import annotations

import pytest

from capstore.corpus import phi
from capstore.errors import ConfigError
from capstore.hypergraph import closure
from capstore.session import ontological_class_count
from capstore.synth import SynthParams, independence_world, k_quota, synth_corpus, synth_world


def test_k_quota_largest_remainder():
    assert k_quota(1000, (0.612, 0.287, 0.081, 0.020)) == [612, 287, 81, 20]
    assert sum(k_quota(7, (0.5, 0.5))) == 7
    assert k_quota(0, (1.0,)) == [0]


def test_world_guard_and_templates():
    w = synth_world()
    assert "hotel-booked-unconfirmed" in w.forbidden
    assert all(w.templates.has(v) for v in w.graph.nodes if v.endswith("candidates-retrieved"))
    assert "hotel-booked-unconfirmed" not in synth_world(guard=False).graph


def test_corpus_k_matches_quota():
    w = synth_world()
    c = synth_corpus(w, SynthParams(n_sessions=200), seed=3)
    ks = [ontological_class_count([phi(t, w.graph) for t in s], w.graph) for s in c]
    want = k_quota(200, SynthParams().k_distribution)
    assert [ks.count(k) for k in (1, 2, 3, 4)] == want


def test_corpus_deterministic():
    w = synth_world()
    p = SynthParams(n_sessions=30)
    assert synth_corpus(w, p, 5).sessions == synth_corpus(w, p, 5).sessions
    assert synth_corpus(w, p, 5).sessions != synth_corpus(w, p, 6).sessions


def test_followups_are_derivable():
    w = synth_world()
    c = synth_corpus(w, SynthParams(n_sessions=100), seed=1)
    for s in c:
        held: set[str] = set()
        for t in s:
            held |= phi(t, w.graph)
            assert t.primary_capability in w.graph
        assert not closure(w.graph, held) & w.forbidden.members


def test_params_validation():
    w = synth_world()
    for bad in (SynthParams(k_distribution=(0.5, 0.4)), SynthParams(followups=(3, 1)),
                SynthParams(repeat_rate=2.0), SynthParams(tenants=()), SynthParams(domains=("nope",)),
                SynthParams(k_distribution=(0.2,) * 5 + (0.0,) * 2)):
        with pytest.raises((ConfigError, KeyError)):
            bad.validate(w)


def test_independence_world_witness_is_two_slots():
    w, p = independence_world()
    assert p.n_sessions >= 2000 and not p.emit_outcomes
    arcs = [a for a in w.graph.arcs if any(t.endswith("candidates-retrieved") for t in a.targets)]
    assert arcs and all(a.fan_in == 2 for a in arcs)
