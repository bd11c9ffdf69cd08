from __future__ import annotations

import json

import pytest

from capstore.corpus import (
    Corpus, DialogueSession, Turn, corpus_from_dict, dumps_corpus, inject_slot_omission, iter_turns,
    load_corpus, phi, save_corpus, session_slots,
)
from capstore.errors import CorpusParseError, InputError, UnknownCapability
from capstore.hypergraph import Hypergraph


def hotel_turn(i=0, **kw):
    return Turn(i, {"hotel": {"area": "north", "stars": "4"}}, **kw)


def test_phi_levels():
    t = hotel_turn(outcomes={"hotel-candidates-retrieved"})
    assert phi(t) == {"hotel-area-north", "hotel-stars-4", "hotel-candidates-retrieved"}
    assert phi(t, level="slot") == {"hotel-area", "hotel-stars", "hotel-candidates-retrieved"}
    with pytest.raises(InputError):
        phi(t, level="intent")


def test_phi_resolves_against_graph():
    g = Hypergraph(["hotel-area", "hotel-stars-4", "hotel-candidates-retrieved"])
    t = hotel_turn(outcomes={"hotel-candidates-retrieved"})
    assert phi(t, g) == {"hotel-area", "hotel-stars-4", "hotel-candidates-retrieved"}
    with pytest.raises(UnknownCapability):
        phi(hotel_turn(outcomes={"zz"}), g)
    with pytest.raises(UnknownCapability):
        phi(Turn(0, {"taxi": {"leave": "9"}}), g)


def test_turn_ids_strictly_increasing():
    with pytest.raises(InputError):
        DialogueSession("s", (hotel_turn(1), hotel_turn(1)))


def test_round_trip(tmp_path):
    c = Corpus((DialogueSession("s", (hotel_turn(0, primary_capability="x", tenant="t"), hotel_turn(2))),))
    p = tmp_path / "c.json"
    save_corpus(c, p)
    back = load_corpus(p)
    assert back.sessions == c.sessions and dumps_corpus(back) == p.read_text()
    assert c.n_turns == 2 and len(list(iter_turns(c))) == 2


@pytest.mark.parametrize("payload, where", [
    ([], "$"),
    ({"sessions": [{"turns": 3}]}, "sessions[0]"),
    ({"sessions": [{"turns": [{"turn_id": "x"}]}]}, "sessions[0].turns[0].turn_id"),
    ({"sessions": [{"turns": [{"belief_state": {"hotel": {"area": 3}}}]}]}, "belief_state"),
    ({"sessions": [{"turns": [{"outcomes": "x"}]}]}, "outcomes"),
    ({"sessions": [{"turns": [{"turn_id": 2}, {"turn_id": 1}]}]}, "sessions[0]"),
])
def test_malformed_corpus_names_location(payload, where):
    with pytest.raises(CorpusParseError) as exc:
        corpus_from_dict(payload, "c.json")
    assert where in str(exc.value) and "c.json" in str(exc.value)


def test_bad_json_reports_line(tmp_path):
    p = tmp_path / "c.json"
    p.write_text('{\n "sessions": [\n')
    with pytest.raises(CorpusParseError) as exc:
        load_corpus(p)
    assert exc.value.line is not None


def test_session_slots_order():
    s = DialogueSession("s", (Turn(0, {"hotel": {"area": "n"}}), Turn(1, {"taxi": {"dest": "x"}, "hotel": {"area": "n"}})))
    assert session_slots(s) == [("hotel", "area"), ("taxi", "dest")]


def test_omission_extremes_and_determinism():
    c = Corpus(tuple(DialogueSession(f"s{i}", (hotel_turn(0), hotel_turn(1))) for i in range(50)))
    assert inject_slot_omission(c, 0.0, 1).sessions == c.sessions
    gone = inject_slot_omission(c, 1.0, 1)
    assert all(t.belief_state == {} for _, t in iter_turns(gone))
    a, b = inject_slot_omission(c, 0.3, 9), inject_slot_omission(c, 0.3, 9)
    assert a.sessions == b.sessions and a.provenance["omission"] == {"r": 0.3, "seed": 9}
    assert c.sessions[0].turns[0].belief_state["hotel"]["area"] == "north"
    with pytest.raises(InputError):
        inject_slot_omission(c, 1.2, 0)


def test_omission_is_consistent_within_session():
    c = Corpus(tuple(DialogueSession(f"s{i}", (hotel_turn(0), hotel_turn(1))) for i in range(200)))
    for s in inject_slot_omission(c, 0.5, 4).sessions:
        assert s.turns[0].belief_state == s.turns[1].belief_state
