"""Dialogue corpora: turns carrying belief states, and the assembly map phi.

A turn's belief state is ``{domain: {slot: value}}``.  ``phi`` turns it
into capability labels ``domain-slot-value`` (value level) or
``domain-slot`` (slot level), plus the outcome tokens seen at that turn.
"""

from __future__ import annotations

import copy
import json
import random
from collections.abc import Iterable, Iterator, Mapping
from dataclasses import dataclass, field, replace
from pathlib import Path

from .errors import CorpusParseError, InputError, UnknownCapability
from .hypergraph import Hypergraph


@dataclass(frozen=True)
class Turn:
    turn_id: int
    belief_state: Mapping[str, Mapping[str, str]]
    outcomes: frozenset[str] = frozenset()
    primary_capability: str = ""
    tenant: str | None = None
    answer_text: str | None = None

    def __post_init__(self) -> None:
        object.__setattr__(self, "outcomes", frozenset(self.outcomes))

    def slot_facts(self) -> dict[str, str]:
        return {f"{d}-{s}": v for d, slots in self.belief_state.items() for s, v in slots.items()}

    def to_dict(self) -> dict:
        return {
            "turn_id": self.turn_id,
            "belief_state": {d: dict(s) for d, s in self.belief_state.items()},
            "outcomes": sorted(self.outcomes),
            "primary_capability": self.primary_capability,
            "tenant": self.tenant,
            "answer_text": self.answer_text,
        }


@dataclass(frozen=True)
class DialogueSession:
    session_id: str
    turns: tuple[Turn, ...]

    def __post_init__(self) -> None:
        object.__setattr__(self, "turns", tuple(self.turns))
        ids = [t.turn_id for t in self.turns]
        if any(b <= a for a, b in zip(ids, ids[1:])):
            raise InputError(f"session {self.session_id}: turn ids must be strictly increasing")

    def __len__(self) -> int:
        return len(self.turns)

    def __iter__(self) -> Iterator[Turn]:
        return iter(self.turns)


@dataclass(frozen=True)
class Corpus:
    sessions: tuple[DialogueSession, ...]
    provenance: Mapping = field(default_factory=lambda: {"kind": "native"})

    def __post_init__(self) -> None:
        object.__setattr__(self, "sessions", tuple(self.sessions))

    def __len__(self) -> int:
        return len(self.sessions)

    def __iter__(self) -> Iterator[DialogueSession]:
        return iter(self.sessions)

    @property
    def n_turns(self) -> int:
        return sum(len(s) for s in self.sessions)

    def to_dict(self) -> dict:
        return {
            "provenance": dict(self.provenance),
            "sessions": [
                {"session_id": s.session_id, "turns": [t.to_dict() for t in s.turns]}
                for s in self.sessions
            ],
        }


def value_label(domain: str, slot: str, value: str) -> str:
    return f"{domain}-{slot}-{value}"


def slot_label(domain: str, slot: str) -> str:
    return f"{domain}-{slot}"


def phi(turn: Turn, graph: Hypergraph | None = None, level: str = "value") -> frozenset[str]:
    """Capability set assembled from one turn.

    Without a graph, ``level`` picks value- or slot-level labels.  With a
    graph, each slot-value resolves to its value-level label when that is a
    node, else to its slot-level label; outcome tokens must be nodes.
    """
    if level not in ("value", "slot"):
        raise InputError(f"level must be 'value' or 'slot', not {level!r}")
    out: set[str] = set()
    for d, slots in turn.belief_state.items():
        for s, v in slots.items():
            vl, sl = value_label(d, s, v), slot_label(d, s)
            if graph is None:
                out.add(vl if level == "value" else sl)
            elif vl in graph:
                out.add(vl)
            elif sl in graph:
                out.add(sl)
            else:
                raise UnknownCapability(vl)
    for o in turn.outcomes:
        if graph is not None and o not in graph:
            raise UnknownCapability(o)
        out.add(o)
    return frozenset(out)


def _fail(path, where, msg, line=None):
    raise CorpusParseError(str(path), where, msg, line)


def corpus_from_dict(payload, path: str = "<memory>") -> Corpus:
    if not isinstance(payload, dict) or not isinstance(payload.get("sessions"), list):
        _fail(path, "$", "expected an object with a 'sessions' list")
    sessions = []
    for i, s in enumerate(payload["sessions"]):
        where = f"sessions[{i}]"
        if not isinstance(s, dict) or "turns" not in s or not isinstance(s["turns"], list):
            _fail(path, where, "expected an object with a 'turns' list")
        sid = str(s.get("session_id", i))
        turns = []
        for j, t in enumerate(s["turns"]):
            tw = f"{where}.turns[{j}]"
            if not isinstance(t, dict):
                _fail(path, tw, "expected an object")
            tid = t.get("turn_id", j)
            if not isinstance(tid, int) or isinstance(tid, bool):
                _fail(path, f"{tw}.turn_id", "must be an integer")
            bs = t.get("belief_state", {})
            if not isinstance(bs, dict) or not all(
                isinstance(v, dict) and all(isinstance(x, str) for x in v.values()) for v in bs.values()
            ):
                _fail(path, f"{tw}.belief_state", "must map domain -> slot -> string value")
            outcomes = t.get("outcomes", [])
            if not isinstance(outcomes, list) or not all(isinstance(o, str) for o in outcomes):
                _fail(path, f"{tw}.outcomes", "must be a list of strings")
            primary = t.get("primary_capability", "")
            if not isinstance(primary, str):
                _fail(path, f"{tw}.primary_capability", "must be a string")
            turns.append(Turn(
                tid,
                {d: dict(v) for d, v in bs.items()},
                frozenset(outcomes),
                primary,
                t.get("tenant"),
                t.get("answer_text"),
            ))
        try:
            sessions.append(DialogueSession(sid, tuple(turns)))
        except InputError as exc:
            _fail(path, where, str(exc))
    return Corpus(tuple(sessions), payload.get("provenance", {"kind": "native"}))


def load_corpus(path: str | Path) -> Corpus:
    try:
        payload = json.loads(Path(path).read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise CorpusParseError(str(path), "$", exc.msg, exc.lineno) from exc
    return corpus_from_dict(payload, str(path))


def dumps_corpus(corpus: Corpus) -> str:
    return json.dumps(corpus.to_dict(), indent=1) + "\n"


def save_corpus(corpus: Corpus, path: str | Path) -> None:
    Path(path).write_text(dumps_corpus(corpus), encoding="utf-8")


def session_slots(session: DialogueSession) -> list[tuple[str, str]]:
    seen: dict[tuple[str, str], None] = {}
    for t in session.turns:
        for d, slots in t.belief_state.items():
            for s in slots:
                seen.setdefault((d, s), None)
    return sorted(seen)


def inject_slot_omission(corpus: Corpus, r: float, seed: int) -> Corpus:
    """Drop each (session, domain-slot) with probability ``r``.

    A dropped slot disappears from every belief state of its session, which
    models a tracker that consistently misses it.  The input is untouched.
    """
    if not 0.0 <= r <= 1.0:
        raise InputError(f"omission rate {r} outside [0, 1]")
    rng = random.Random(seed)
    sessions = []
    for sess in corpus.sessions:
        dropped = {ds for ds in session_slots(sess) if rng.random() < r}
        turns = []
        for t in sess.turns:
            bs = {}
            for d, slots in t.belief_state.items():
                kept = {s: v for s, v in slots.items() if (d, s) not in dropped}
                if kept:
                    bs[d] = kept
            turns.append(replace(t, belief_state=bs))
        sessions.append(DialogueSession(sess.session_id, tuple(turns)))
    prov = copy.deepcopy(dict(corpus.provenance))
    prov["omission"] = {"r": r, "seed": seed}
    return Corpus(tuple(sessions), prov)


def iter_turns(corpus: Corpus) -> Iterable[tuple[DialogueSession, Turn]]:
    for s in corpus.sessions:
        for t in s.turns:
            yield s, t
