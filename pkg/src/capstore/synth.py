"""Synthetic task-oriented dialogue worlds with planted statistics.

A world is a capability hypergraph over a few booking-style domains, its
forbidden set and a full template table.  Corpora drawn from a world are
complete by construction: every outcome token a turn carries is derivable
from that turn's cumulative belief state, unless a planted rate below one
makes the outcome skip.
"""

from __future__ import annotations

import random
from collections.abc import Mapping, Sequence
from dataclasses import dataclass, field

from .corpus import Corpus, DialogueSession, Turn
from .errors import ConfigError
from .hypergraph import ArcKind, ForbiddenSet, Hyperarc, Hypergraph
from .store import TemplateDb, _render

CANDIDATES = "candidates-retrieved"
BOOKED = "booked"
REFERENCE = "reference"
NOCONFIRM = "noconfirm"
UNCONFIRMED = "booked-unconfirmed"

_VALUES = ("north", "south", "east", "west", "centre", "cheap", "moderate", "expensive",
           "2", "3", "4", "5", "monday", "friday", "saturday", "cambridge", "london")


@dataclass(frozen=True)
class DomainSpec:
    name: str
    search_slots: tuple[str, ...]
    booking_slots: tuple[str, ...] = ()
    info: tuple[str, ...] = ()
    values: Mapping[str, tuple[str, ...]] = field(default_factory=dict)

    @property
    def bookable(self) -> bool:
        return bool(self.booking_slots)

    def label(self, suffix: str) -> str:
        return f"{self.name}-{suffix}"

    def slot_values(self, slot: str) -> tuple[str, ...]:
        return tuple(self.values.get(slot, _VALUES))


DEFAULT_DOMAINS: tuple[DomainSpec, ...] = (
    DomainSpec("hotel", ("area", "stars"), ("name", "day", "people", "stay"),
               ("parking", "internet", "phone", "address"),
               {"area": ("north", "south", "east", "west", "centre"), "stars": ("2", "3", "4", "5")}),
    DomainSpec("restaurant", ("food", "area", "pricerange"), ("day", "people", "time"),
               ("phone", "address", "postcode"),
               {"food": ("italian", "indian", "chinese", "british"),
                "area": ("north", "south", "centre"), "pricerange": ("cheap", "moderate", "expensive")}),
    DomainSpec("attraction", ("type", "area"), (), ("phone", "entrance", "address"),
               {"type": ("museum", "college", "park"), "area": ("north", "centre", "south")}),
    DomainSpec("train", ("departure", "destination", "day"), ("people",), ("price", "duration"),
               {"departure": ("cambridge", "london", "ely"), "destination": ("cambridge", "london", "ely"),
                "day": ("monday", "friday", "saturday")}),
    DomainSpec("taxi", ("departure", "destination"), (), ("car", "phone"),
               {"departure": ("hotel", "station", "college"), "destination": ("restaurant", "museum", "station")}),
)

# (source domain outcome, target domain outcome, link suffix)
DEFAULT_LINKS: tuple[tuple[str, str, str], ...] = (
    ("hotel-booked", "taxi-candidates-retrieved", "taxi-hotel-pickup"),
    ("restaurant-booked", "taxi-candidates-retrieved", "taxi-restaurant-pickup"),
)


@dataclass(frozen=True)
class World:
    graph: Hypergraph
    forbidden: ForbiddenSet
    templates: TemplateDb
    domains: tuple[DomainSpec, ...]
    links: tuple[tuple[str, str, str], ...] = ()

    def domain(self, name: str) -> DomainSpec:
        for d in self.domains:
            if d.name == name:
                return d
        raise ConfigError(f"unknown domain {name!r}")


def synth_world(
    domains: Sequence[DomainSpec] = DEFAULT_DOMAINS,
    links: Sequence[tuple[str, str, str]] = DEFAULT_LINKS,
    guard: bool = True,
) -> World:
    """Build the hypergraph, forbidden set and templates for ``domains``.

    Per domain: the search slots jointly retrieve candidates; candidates
    unlock every info capability; candidates plus all booking slots book;
    a booking yields a reference.  With ``guard`` each bookable domain also
    gets a ``noconfirm`` capability that, together with candidates, produces
    a forbidden unconfirmed booking.
    """
    names = [d.name for d in domains]
    if len(set(names)) != len(names):
        raise ConfigError("domain names must be unique")
    nodes: list[str] = []
    arcs: list[Hyperarc] = []
    forbidden: list[str] = []
    templates: dict[str, str] = {}
    for d in domains:
        if not d.search_slots:
            raise ConfigError(f"domain {d.name!r} needs at least one search slot")
        slots = list(dict.fromkeys(d.search_slots + d.booking_slots))
        nodes += [d.label(s) for s in slots]
        cand = d.label(CANDIDATES)
        nodes.append(cand)
        arcs.append(Hyperarc(frozenset(d.label(s) for s in d.search_slots), frozenset({cand}),
                             kind=ArcKind.TYPE_A))
        desc = ", ".join(f"{{{d.label(s)}}}" for s in d.search_slots)
        templates[cand] = f"I found {d.name} options matching {desc}."
        for info in d.info:
            node = d.label(info)
            nodes.append(node)
            arcs.append(Hyperarc(frozenset({cand}), frozenset({node})))
            templates[node] = f"{info.capitalize()} ({d.name}): {desc}."
        if d.bookable:
            booked, ref = d.label(BOOKED), d.label(REFERENCE)
            nodes += [booked, ref]
            arcs.append(Hyperarc(frozenset({cand, *(d.label(s) for s in d.booking_slots)}),
                                 frozenset({booked}), kind=ArcKind.TYPE_B))
            arcs.append(Hyperarc(frozenset({booked}), frozenset({ref})))
            what = ", ".join(f"{s} {{{d.label(s)}}}" for s in d.booking_slots)
            templates[booked] = f"Booked {d.name}: {what}."
            templates[ref] = f"Reference number issued for {d.name} ({desc})."
            if guard:
                nc, bad = d.label(NOCONFIRM), d.label(UNCONFIRMED)
                nodes += [nc, bad]
                arcs.append(Hyperarc(frozenset({cand, nc}), frozenset({bad})))
                forbidden.append(bad)
    present = set(nodes)
    for src, tgt, link in links:
        if src in present and tgt in present:
            nodes.append(link)
            arcs.append(Hyperarc(frozenset({src, tgt}), frozenset({link}), kind=ArcKind.TYPE_C))
            templates[link] = f"Pickup arranged: {link}."
    graph = Hypergraph(nodes, arcs)
    return World(graph, ForbiddenSet(frozenset(forbidden)), TemplateDb(templates), tuple(domains),
                 tuple(lk for lk in links if lk[2] in present or lk[2] in graph))


GENERIC_ANSWERS = (
    "Yes, that is available.",
    "Sure, I can help with that.",
    "It is located in the centre of town.",
)


@dataclass(frozen=True)
class SynthParams:
    n_sessions: int = 1000
    k_distribution: tuple[float, ...] = (0.612, 0.287, 0.081, 0.020)
    followups: tuple[int, int] = (3, 8)
    repeat_rate: float = 0.06
    duplicate_answer_rate: float = 0.15
    book_rate: float = 0.6
    blocked_rate: float = 0.0
    candidates_rate: Mapping[str, float] | float = 1.0
    booked_rate: float = 1.0
    tenants: tuple[str, ...] = ("t0",)
    emit_outcomes: bool = True
    domains: tuple[str, ...] | None = None

    def validate(self, world: World) -> None:
        if self.n_sessions < 0:
            raise ConfigError("n_sessions must be non-negative")
        if not self.k_distribution or any(p < 0 for p in self.k_distribution):
            raise ConfigError("k_distribution must be non-empty and non-negative")
        if abs(sum(self.k_distribution) - 1.0) > 1e-6:
            raise ConfigError(f"k_distribution sums to {sum(self.k_distribution)}, not 1")
        names = self.domains if self.domains is not None else tuple(d.name for d in world.domains)
        for n in names:
            world.domain(n)
        if len(self.k_distribution) > len(names):
            raise ConfigError(f"K up to {len(self.k_distribution)} needs that many domains, have {len(names)}")
        lo, hi = self.followups
        if not 0 <= lo <= hi:
            raise ConfigError("followups must be 0 <= lo <= hi")
        rates = [self.repeat_rate, self.duplicate_answer_rate, self.book_rate, self.blocked_rate,
                 self.booked_rate]
        rates += list(self.candidates_rate.values()) if isinstance(self.candidates_rate, Mapping) \
            else [self.candidates_rate]
        if any(not 0.0 <= r <= 1.0 for r in rates):
            raise ConfigError("rates must lie in [0, 1]")
        if not self.tenants:
            raise ConfigError("at least one tenant is required")

    def to_dict(self) -> dict:
        cr = dict(sorted(self.candidates_rate.items())) if isinstance(self.candidates_rate, Mapping) \
            else self.candidates_rate
        return {
            "n_sessions": self.n_sessions,
            "k_distribution": list(self.k_distribution),
            "followups": list(self.followups),
            "repeat_rate": self.repeat_rate,
            "duplicate_answer_rate": self.duplicate_answer_rate,
            "book_rate": self.book_rate,
            "blocked_rate": self.blocked_rate,
            "candidates_rate": cr,
            "booked_rate": self.booked_rate,
            "tenants": list(self.tenants),
            "emit_outcomes": self.emit_outcomes,
            "domains": list(self.domains) if self.domains is not None else None,
        }


def k_quota(n: int, dist: Sequence[float]) -> list[int]:
    """Largest-remainder split of ``n`` sessions over K = 1..len(dist)."""
    raw = [n * p for p in dist]
    counts = [int(x) for x in raw]
    order = sorted(range(len(dist)), key=lambda i: (-(raw[i] - counts[i]), i))
    for i in order[: n - sum(counts)]:
        counts[i] += 1
    return counts


def _candidates_rate(params: SynthParams, domain: str) -> float:
    if isinstance(params.candidates_rate, Mapping):
        return params.candidates_rate.get(domain, 1.0)
    return params.candidates_rate


def synth_corpus(world: World, params: SynthParams, seed: int) -> Corpus:
    """Sessions whose ontological classes follow ``params.k_distribution``.

    A session visits K distinct domains in turn.  The first turn of each
    visit fills the domain's search slots (and booking slots when the
    session books there) and asks for candidates; follow-ups ask for
    distinct capabilities the closure already holds, or repeat the
    candidates question with probability ``repeat_rate``.
    """
    params.validate(world)
    rng = random.Random(seed)
    names = list(params.domains) if params.domains is not None else [d.name for d in world.domains]
    ks = [k + 1 for k, c in enumerate(k_quota(params.n_sessions, params.k_distribution)) for _ in range(c)]
    rng.shuffle(ks)
    full = world.templates
    graph = world.graph
    sessions = []
    for si, k in enumerate(ks):
        tenant = rng.choice(params.tenants)
        visit = rng.sample(names, k)
        belief: dict[str, dict[str, str]] = {}
        booked_domains: set[str] = set()
        turns: list[Turn] = []
        tid = 0
        blocked_at = rng.random() < params.blocked_rate

        def emit(outcomes, primary, generic_ok):
            nonlocal tid
            held = {f"{d}-{s}" for d, sl in belief.items() for s in sl} | set(outcomes)
            facts = {f"{d}-{s}": v for d, sl in belief.items() for s, v in sl.items()}
            facts.update({c: "yes" for c in held})
            if generic_ok and rng.random() < params.duplicate_answer_rate:
                answer = rng.choice(GENERIC_ANSWERS)
            elif full.has(primary):
                answer = _render(full.get(primary), facts)[0]
            else:
                answer = f"RAG({primary})"
            turns.append(Turn(tid, {d: dict(s) for d, s in belief.items()}, frozenset(outcomes),
                              primary, tenant, answer))
            tid += 1

        for j, name in enumerate(visit):
            d = world.domain(name)
            slots = belief.setdefault(name, {})
            for s in d.search_slots:
                slots[s] = rng.choice(d.slot_values(s))
            books = d.bookable and rng.random() < params.book_rate
            if books:
                for s in d.booking_slots:
                    slots.setdefault(s, rng.choice(d.slot_values(s)))
                booked_domains.add(name)
            cand = d.label(CANDIDATES)
            first: set[str] = set()
            if params.emit_outcomes and rng.random() < _candidates_rate(params, name):
                first.add(cand)
            emit(first, cand, False)

            pool = list(d.info)
            pool = [d.label(x) for x in pool]
            if books:
                pool += [d.label(BOOKED), d.label(REFERENCE)]
            for src, tgt, link in world.links:
                dom_src, dom_tgt = src.split("-", 1)[0], tgt.split("-", 1)[0]
                if name in (dom_src, dom_tgt) and dom_src in booked_domains and dom_tgt in belief:
                    pool.append(link)
            pool = [v for v in pool if v in graph and full.has(v)]
            rng.shuffle(pool)
            n_follow = rng.randint(*params.followups)
            booked_pending = books and params.emit_outcomes and rng.random() < params.booked_rate
            noconfirm_turn = rng.randrange(max(n_follow, 1)) if (blocked_at and d.bookable and j == 0) else None
            for f in range(n_follow):
                if rng.random() < params.repeat_rate:
                    primary = cand
                elif pool:
                    primary = pool.pop()
                else:
                    break
                outcomes: set[str] = set()
                if booked_pending:
                    outcomes.add(d.label(BOOKED))
                    booked_pending = False
                if noconfirm_turn == f:
                    outcomes.add(d.label(NOCONFIRM))
                emit(outcomes, primary, primary != cand)
            if booked_pending:
                # no follow-up to carry it: record the booking on the visit's opening turn
                last = turns[-1]
                turns[-1] = Turn(last.turn_id, last.belief_state, last.outcomes | {d.label(BOOKED)},
                                 last.primary_capability, last.tenant, last.answer_text)
        sessions.append(DialogueSession(f"s{si:05d}", tuple(turns)))
    return Corpus(tuple(sessions), {"kind": "synthetic", "seed": seed, "params": params.to_dict()})


def minimal_domains(n: int = 4, slots: int = 2) -> tuple[DomainSpec, ...]:
    """``n`` bare domains with ``slots`` search slots each and no extras."""
    return tuple(
        DomainSpec(f"d{i}", tuple(f"s{j}" for j in range(slots)), (), (),
                   {f"s{j}": ("a", "b", "c") for j in range(slots)})
        for i in range(n)
    )


def independence_world(n_domains: int = 4) -> tuple[World, SynthParams]:
    """World where every pre-answer needs exactly the two search slots of its domain.

    No bookings, no links and no outcome tokens, so slot omissions act
    independently and each entry survives with probability ``(1 - r)**2``.
    """
    domains = tuple(
        DomainSpec(f"d{i}", ("s0", "s1"), (), ("info0", "info1"), {"s0": ("a", "b"), "s1": ("c", "d")})
        for i in range(n_domains)
    )
    world = synth_world(domains, links=(), guard=False)
    params = SynthParams(
        n_sessions=2000, k_distribution=(0.4, 0.3, 0.2, 0.1)[:n_domains] if n_domains >= 4 else (1.0,),
        followups=(1, 3), repeat_rate=0.0, duplicate_answer_rate=0.0, book_rate=0.0, emit_outcomes=False,
    )
    return world, params
