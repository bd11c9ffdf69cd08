"""Rate-thresholded hyperarc extraction from belief-state corpora.

Counting is per session.  For a candidate source set ``S`` the session's
anchor turn is the first turn at which every member of ``S`` has appeared;
the session supports ``S -> v`` when ``v`` first appears no later than
``horizon`` turns after the anchor.  Nodes are slot-level (``domain-slot``).
"""

from __future__ import annotations

import itertools
import json
import math
from collections.abc import Iterable, Mapping, Sequence
from dataclasses import dataclass, field
from pathlib import Path

from .corpus import Corpus, DialogueSession, slot_label
from .errors import CorpusParseError, InputError
from .hypergraph import ArcKind, ForbiddenSet, Hyperarc, Hypergraph

CANDIDATES = "candidates-retrieved"
BOOKED = "booked"


@dataclass(frozen=True)
class CrossPattern:
    sources: frozenset[str]
    target: str
    rate: float


@dataclass(frozen=True)
class Ontology:
    domains: tuple[str, ...]
    informable_slots: Mapping[str, tuple[str, ...]]
    booking_required: Mapping[str, tuple[str, ...]] = field(default_factory=dict)
    bookable: frozenset[str] = frozenset()
    cross_domain_patterns: tuple[CrossPattern, ...] = ()
    forbidden: tuple[str, ...] = ()

    def __post_init__(self) -> None:
        object.__setattr__(self, "domains", tuple(self.domains))
        object.__setattr__(self, "bookable", frozenset(self.bookable))
        for d in self.domains:
            inf = set(self.informable_slots.get(d, ()))
            extra = set(self.booking_required.get(d, ())) - inf
            if extra:
                raise InputError(f"booking slots {sorted(extra)} of {d!r} are not informable")
        for d in self.bookable:
            if d not in self.domains:
                raise InputError(f"bookable domain {d!r} is not a domain")

    def candidates(self, d: str) -> str:
        return f"{d}-{CANDIDATES}"

    def booked(self, d: str) -> str:
        return f"{d}-{BOOKED}"

    def node_labels(self) -> list[str]:
        out: list[str] = []
        for d in self.domains:
            out += [slot_label(d, s) for s in self.informable_slots.get(d, ())]
            out.append(self.candidates(d))
            if d in self.bookable:
                out.append(self.booked(d))
        for p in self.cross_domain_patterns:
            out += sorted(p.sources) + [p.target]
        out += list(self.forbidden)
        return list(dict.fromkeys(out))

    def to_dict(self) -> dict:
        return {
            "domains": list(self.domains),
            "informable_slots": {d: list(self.informable_slots.get(d, ())) for d in self.domains},
            "booking_required": {d: list(self.booking_required[d]) for d in self.domains
                                 if d in self.booking_required},
            "bookable": sorted(self.bookable),
            "cross_domain_patterns": [
                {"sources": sorted(p.sources), "target": p.target, "rate": p.rate}
                for p in self.cross_domain_patterns
            ],
            "forbidden": list(self.forbidden),
        }

    @classmethod
    def from_dict(cls, d: Mapping, path: str = "<memory>") -> Ontology:
        try:
            pats = tuple(CrossPattern(frozenset(p["sources"]), p["target"], float(p["rate"]))
                         for p in d.get("cross_domain_patterns", ()))
            return cls(
                tuple(d["domains"]),
                {k: tuple(v) for k, v in d["informable_slots"].items()},
                {k: tuple(v) for k, v in d.get("booking_required", {}).items()},
                frozenset(d.get("bookable", ())),
                pats,
                tuple(d.get("forbidden", ())),
            )
        except (KeyError, TypeError, AttributeError) as exc:
            raise CorpusParseError(path, "$", f"malformed ontology: {exc!r}") from exc

    @classmethod
    def load(cls, path: str | Path) -> Ontology:
        try:
            data = json.loads(Path(path).read_text(encoding="utf-8"))
        except json.JSONDecodeError as exc:
            raise CorpusParseError(str(path), "$", exc.msg, exc.lineno) from exc
        return cls.from_dict(data, str(path))

    def save(self, path: str | Path) -> None:
        Path(path).write_text(json.dumps(self.to_dict(), indent=2) + "\n", encoding="utf-8")


@dataclass
class Count:
    kind: ArcKind
    n_s: int = 0
    n_sv: int = 0

    @property
    def rate(self) -> float:
        return self.n_sv / self.n_s if self.n_s else 0.0


Key = tuple[frozenset[str], str]


@dataclass
class CooccurrenceStats:
    horizon: int
    counts: dict[Key, Count] = field(default_factory=dict)
    seeds: dict[Key, float] = field(default_factory=dict)

    def __len__(self) -> int:
        return len(self.counts)

    def get(self, sources: Iterable[str], target: str) -> Count | None:
        return self.counts.get((frozenset(sources), target))

    def n_s(self, sources: Iterable[str], target: str) -> int:
        c = self.get(sources, target)
        return c.n_s if c else 0

    def merge(self, other: CooccurrenceStats) -> CooccurrenceStats:
        if other.horizon != self.horizon:
            raise InputError("cannot merge stats collected with different horizons")
        out = CooccurrenceStats(self.horizon, {k: Count(c.kind, c.n_s, c.n_sv) for k, c in self.counts.items()},
                                dict(self.seeds))
        for k, c in other.counts.items():
            mine = out.counts.setdefault(k, Count(c.kind))
            mine.n_s += c.n_s
            mine.n_sv += c.n_sv
        out.seeds.update(other.seeds)
        return out

    def rows(self) -> list[tuple[Key, Count]]:
        return sorted(self.counts.items(), key=lambda kv: (kv[0][1], len(kv[0][0]), sorted(kv[0][0])))

    def to_dict(self) -> dict:
        return {
            "horizon": self.horizon,
            "counts": [
                {"sources": sorted(k[0]), "target": k[1], "kind": c.kind.value, "n_s": c.n_s, "n_sv": c.n_sv}
                for k, c in self.rows()
            ],
            "seeds": [
                {"sources": sorted(k[0]), "target": k[1], "rate": r}
                for k, r in sorted(self.seeds.items(), key=lambda kv: (kv[0][1], sorted(kv[0][0])))
            ],
        }

    def dumps(self) -> str:
        return json.dumps(self.to_dict(), indent=2) + "\n"

    @classmethod
    def from_dict(cls, d: Mapping) -> CooccurrenceStats:
        stats = cls(int(d["horizon"]))
        for row in d["counts"]:
            stats.counts[(frozenset(row["sources"]), row["target"])] = Count(
                ArcKind(row["kind"]), int(row["n_s"]), int(row["n_sv"]))
        for row in d.get("seeds", ()):
            stats.seeds[(frozenset(row["sources"]), row["target"])] = float(row["rate"])
        return stats


def first_appearance(session: DialogueSession) -> dict[str, int]:
    """Turn position at which each slot-level label or outcome token first shows."""
    first: dict[str, int] = {}
    for t, turn in enumerate(session.turns):
        for d, slots in turn.belief_state.items():
            for s in slots:
                first.setdefault(slot_label(d, s), t)
        for o in turn.outcomes:
            first.setdefault(o, t)
    return first


def _tally(stats: CooccurrenceStats, kind: ArcKind, sources: frozenset[str], target: str,
           first: Mapping[str, int], horizon: int) -> None:
    anchor = max(first[s] for s in sources)
    c = stats.counts.setdefault((sources, target), Count(kind))
    c.n_s += 1
    if first.get(target, math.inf) <= anchor + horizon:
        c.n_sv += 1


def collect_stats(corpus: Corpus, ontology: Ontology, horizon: int = 3, max_subset: int = 5) -> CooccurrenceStats:
    if horizon < 1:
        raise InputError("horizon must be at least 1")
    if max_subset < 1:
        raise InputError("max_subset must be at least 1")
    stats = CooccurrenceStats(horizon)
    for p in ontology.cross_domain_patterns:
        stats.seeds[(p.sources, p.target)] = p.rate
    for session in corpus.sessions:
        first = first_appearance(session)
        for d in ontology.domains:
            present = [slot_label(d, s) for s in ontology.informable_slots.get(d, ()) if slot_label(d, s) in first]
            cand = ontology.candidates(d)
            for size in range(1, min(max_subset, len(present)) + 1):
                for combo in itertools.combinations(present, size):
                    _tally(stats, ArcKind.TYPE_A, frozenset(combo), cand, first, horizon)
            if d in ontology.bookable:
                sb = frozenset([cand] + [slot_label(d, s) for s in ontology.booking_required.get(d, ())])
                if all(s in first for s in sb):
                    _tally(stats, ArcKind.TYPE_B, sb, ontology.booked(d), first, horizon)
        for p in ontology.cross_domain_patterns:
            if all(s in first for s in p.sources):
                _tally(stats, ArcKind.TYPE_C, p.sources, p.target, first, horizon)
    return stats


def minimal_cover(arcs: Iterable[Hyperarc], theta: float | None = None) -> list[Hyperarc]:
    """Drop ``(S, v)`` when a kept ``(S', v)`` with ``S' < S`` has rate at least as high.

    Arcs are visited by target, then ascending source size, then sorted
    sources, which makes one pass reach the fixpoint.
    """
    ordered = sorted(
        (a for a in arcs if theta is None or a.rate >= theta),
        key=lambda a: (sorted(a.targets), len(a.sources), sorted(a.sources)),
    )
    kept: list[Hyperarc] = []
    for a in ordered:
        if not any(k.targets == a.targets and k.sources < a.sources and k.rate >= a.rate for k in kept):
            kept.append(a)
    return kept


def extract_hypergraph(
    stats: CooccurrenceStats,
    ontology: Ontology,
    theta: float = 0.75,
    n_floor: int = 30,
) -> Hypergraph:
    """Arcs whose empirical rate reaches ``theta``, reduced by ``minimal_cover``.

    Mined candidates need at least ``n_floor`` applicable sessions.  Seeded
    cross-domain patterns with no observations keep their seed rate.
    """
    if not 0.0 < theta <= 1.0:
        raise InputError(f"theta {theta} outside (0, 1]")
    arcs: list[Hyperarc] = []
    for (src, tgt), c in stats.rows():
        if c.n_s >= n_floor and c.rate >= theta:
            arcs.append(Hyperarc(src, frozenset({tgt}), c.rate, c.kind))
    for (src, tgt), r in stats.seeds.items():
        if (src, tgt) not in stats.counts and r >= theta:
            arcs.append(Hyperarc(src, frozenset({tgt}), r, ArcKind.TYPE_C))
    return Hypergraph(ontology.node_labels(), minimal_cover(arcs, theta))


def extract_with_forbidden(stats: CooccurrenceStats, ontology: Ontology, theta: float = 0.75,
                           n_floor: int = 30) -> tuple[Hypergraph, ForbiddenSet]:
    graph = extract_hypergraph(stats, ontology, theta, n_floor)
    return graph, ForbiddenSet(frozenset(ontology.forbidden))


def hoeffding_bound(n_s: int, epsilon: float) -> float:
    """One-sided tail ``exp(-2 n eps^2)``."""
    if n_s < 1:
        raise InputError("n_s must be at least 1")
    if not 0.0 < epsilon < 1.0:
        raise InputError("epsilon must lie in (0, 1)")
    return math.exp(-2.0 * n_s * epsilon * epsilon)


@dataclass(frozen=True)
class ArcSoundness:
    arc_index: int
    sources: tuple[str, ...]
    target: str
    rate: float
    n_s: int
    bound: float
    flagged: bool


def soundness_report(
    graph: Hypergraph,
    stats: CooccurrenceStats,
    theta: float = 0.75,
    epsilon: float = 0.15,
    n_floor: int = 100,
) -> tuple[ArcSoundness, ...]:
    rows = []
    for e, arc in enumerate(graph.arcs):
        tgt = graph.ordered(arc.targets)[0]
        n = stats.n_s(arc.sources, tgt)
        bound = hoeffding_bound(n, epsilon) if n >= 1 else 1.0
        rows.append(ArcSoundness(e, tuple(graph.ordered(arc.sources)), tgt, arc.rate, n, bound,
                                 n < n_floor or arc.rate < theta))
    return tuple(rows)


def ontology_for_domains(domains: Sequence, forbidden: Iterable[str] = (),
                         patterns: Iterable[CrossPattern] = ()) -> Ontology:
    """Ontology matching a sequence of synthetic domain specs."""
    return Ontology(
        tuple(d.name for d in domains),
        {d.name: tuple(dict.fromkeys(d.search_slots + d.booking_slots)) for d in domains},
        {d.name: tuple(d.booking_slots) for d in domains if d.booking_slots},
        frozenset(d.name for d in domains if d.booking_slots),
        tuple(patterns),
        tuple(forbidden),
    )
