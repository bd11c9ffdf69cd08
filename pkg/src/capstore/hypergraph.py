"""Capability hypergraphs and the closure operator.

A hyperarc ``(S, T)`` fires once every source in ``S`` is held and then
grants every target in ``T``.  ``closure`` is the least superset of ``A``
closed under firings, computed by a worklist with one unsatisfied-source
counter per arc, so every arc fires at most once and the whole run is
O(n + m*k).

Capabilities are plain string labels.  Each graph interns its labels to
dense indices ``0..n-1``; index order is the tie-break used for every
deterministic ordering in the package.
"""

from __future__ import annotations

import enum
import hashlib
import json
from collections.abc import Iterable, Iterator, Sequence
from dataclasses import dataclass, field
from pathlib import Path

from .errors import InputError, RefusalError, UnknownCapability

CapabilityId = str


class ArcKind(str, enum.Enum):
    TYPE_A = "TypeA"
    TYPE_B = "TypeB"
    TYPE_C = "TypeC"
    MANUAL = "Manual"


@dataclass(frozen=True)
class Hyperarc:
    sources: frozenset[str]
    targets: frozenset[str]
    rate: float = 1.0
    kind: ArcKind = ArcKind.MANUAL

    def __post_init__(self) -> None:
        object.__setattr__(self, "sources", frozenset(self.sources))
        object.__setattr__(self, "targets", frozenset(self.targets))
        object.__setattr__(self, "kind", ArcKind(self.kind))
        if not self.sources:
            raise InputError("hyperarc needs at least one source")
        if not self.targets:
            raise InputError("hyperarc needs at least one target")
        if not 0.0 <= self.rate <= 1.0:
            raise InputError(f"hyperarc rate {self.rate} outside [0, 1]")

    @property
    def fan_in(self) -> int:
        return len(self.sources)


@dataclass(frozen=True)
class ForbiddenSet:
    """Capabilities that must never enter a certified closure.

    ``version`` is bumped on every mutation so snapshots taken at different
    times can be told apart even when their members coincide.
    """

    members: frozenset[str] = frozenset()
    version: int = 0

    def __post_init__(self) -> None:
        object.__setattr__(self, "members", frozenset(self.members))

    def __contains__(self, label: object) -> bool:
        return label in self.members

    def __iter__(self) -> Iterator[str]:
        return iter(self.members)

    def __len__(self) -> int:
        return len(self.members)

    def replace(self, members: Iterable[str]) -> ForbiddenSet:
        return ForbiddenSet(frozenset(members), self.version + 1)

    def same_members(self, other: ForbiddenSet) -> bool:
        return self.members == other.members


class Hypergraph:
    """Immutable capability hypergraph: labelled nodes and conjunctive hyperarcs."""

    __slots__ = (
        "nodes", "index", "arcs", "version",
        "_src", "_tgt", "_by_source", "_by_source_unit",
    )

    def __init__(self, nodes: Iterable[str], arcs: Iterable[Hyperarc] = ()) -> None:
        nodes = tuple(nodes)
        index: dict[str, int] = {}
        for label in nodes:
            if not isinstance(label, str) or not label:
                raise InputError(f"capability labels must be non-empty strings, got {label!r}")
            if label in index:
                raise InputError(f"duplicate capability {label!r}")
            index[label] = len(index)
        arcs = tuple(arcs)
        src: list[tuple[int, ...]] = []
        tgt: list[tuple[int, ...]] = []
        by_source: list[list[int]] = [[] for _ in nodes]
        by_source_unit: list[list[int]] = [[] for _ in nodes]
        for e, arc in enumerate(arcs):
            for label in arc.sources | arc.targets:
                if label not in index:
                    raise UnknownCapability(label)
            s = tuple(sorted(index[x] for x in arc.sources))
            src.append(s)
            tgt.append(tuple(sorted(index[x] for x in arc.targets)))
            for u in s:
                by_source[u].append(e)
                if len(s) == 1:
                    by_source_unit[u].append(e)
        self.nodes: tuple[str, ...] = nodes
        self.index: dict[str, int] = index
        self.arcs: tuple[Hyperarc, ...] = arcs
        self._src = tuple(src)
        self._tgt = tuple(tgt)
        self._by_source = tuple(tuple(x) for x in by_source)
        self._by_source_unit = tuple(tuple(x) for x in by_source_unit)
        self.version = hashlib.sha256(
            json.dumps(_graph_payload(self), sort_keys=False).encode()
        ).hexdigest()[:16]

    def __repr__(self) -> str:
        return f"Hypergraph(n={self.n}, m={self.m}, version={self.version})"

    def __contains__(self, label: object) -> bool:
        return label in self.index

    @property
    def n(self) -> int:
        return len(self.nodes)

    @property
    def m(self) -> int:
        return len(self.arcs)

    @property
    def max_fan_in(self) -> int:
        return max((len(s) for s in self._src), default=0)

    def ids(self, labels: Iterable[str]) -> list[int]:
        index = self.index
        out = []
        for label in labels:
            try:
                out.append(index[label])
            except (KeyError, TypeError):
                raise UnknownCapability(label) from None
        return out

    def labels(self, ids: Iterable[int]) -> frozenset[str]:
        nodes = self.nodes
        return frozenset(nodes[i] for i in ids)

    def ordered(self, labels: Iterable[str]) -> list[str]:
        """Labels sorted by dense index."""
        return sorted(labels, key=self.index.__getitem__)

    def arc_sources(self, e: int) -> tuple[int, ...]:
        return self._src[e]

    def arc_targets(self, e: int) -> tuple[int, ...]:
        return self._tgt[e]

    def work_units(self) -> int:
        """Size of one full worklist run, n + sum of fan-ins."""
        return self.n + sum(len(s) for s in self._src)


class Worklist:
    """Resumable closure state: per-arc unsatisfied-source counters.

    Seeding more capabilities continues the fixpoint from where it stopped,
    which is what insertion-only session maintenance needs.  ``fired`` is the
    firing order, a valid replay sequence from everything ever seeded.
    """

    __slots__ = ("graph", "unit_only", "missing", "closed", "fired")

    def __init__(self, graph: Hypergraph, unit_only: bool = False) -> None:
        self.graph = graph
        self.unit_only = unit_only
        if unit_only:
            self.missing = [len(s) if len(s) == 1 else -1 for s in graph._src]
        else:
            self.missing = [len(s) for s in graph._src]
        self.closed = bytearray(graph.n)
        self.fired: list[int] = []

    def add(self, seeds: Iterable[int]) -> list[int]:
        """Close over ``seeds``; return the newly closed indices in entry order."""
        closed = self.closed
        missing = self.missing
        tgt = self.graph._tgt
        by_source = self.graph._by_source_unit if self.unit_only else self.graph._by_source
        fired = self.fired
        added: list[int] = []
        stack: list[int] = []
        for u in seeds:
            if not closed[u]:
                closed[u] = 1
                added.append(u)
                stack.append(u)
        stack.reverse()
        while stack:
            u = stack.pop()
            for e in by_source[u]:
                missing[e] -= 1
                if missing[e] == 0:
                    fired.append(e)
                    for t in tgt[e]:
                        if not closed[t]:
                            closed[t] = 1
                            added.append(t)
                            stack.append(t)
        return added

    def members(self) -> list[int]:
        return [i for i, c in enumerate(self.closed) if c]


def _seed_ids(graph: Hypergraph, capabilities: Iterable[str]) -> list[int]:
    return sorted(set(graph.ids(capabilities)))


def closure(graph: Hypergraph, capabilities: Iterable[str]) -> frozenset[str]:
    """Least fixed point containing ``capabilities``."""
    wl = Worklist(graph)
    wl.add(_seed_ids(graph, capabilities))
    return graph.labels(wl.members())


def closure_unit(graph: Hypergraph, capabilities: Iterable[str]) -> frozenset[str]:
    """Closure using only single-source arcs."""
    wl = Worklist(graph, unit_only=True)
    wl.add(_seed_ids(graph, capabilities))
    return graph.labels(wl.members())


def _check_forbidden(graph: Hypergraph, forbidden: ForbiddenSet | Iterable[str]) -> frozenset[str]:
    members = forbidden.members if isinstance(forbidden, ForbiddenSet) else frozenset(forbidden)
    graph.ids(members)
    return members


def is_safe(graph: Hypergraph, forbidden: ForbiddenSet | Iterable[str], capabilities: Iterable[str]) -> bool:
    members = _check_forbidden(graph, forbidden)
    return not (closure(graph, capabilities) & members)


def emergent(graph: Hypergraph, capabilities: Iterable[str]) -> frozenset[str]:
    """Capabilities reachable only through conjunctive arcs."""
    base = frozenset(capabilities)
    return closure(graph, base) - base - closure_unit(graph, base)


@dataclass(frozen=True)
class FrontierRecord:
    missing: str
    arc_index: int
    arc: Hyperarc
    unlocked: frozenset[str]
    forbidden_productive: bool = False


def near_miss_frontier(
    graph: Hypergraph,
    forbidden: ForbiddenSet | Iterable[str] | None,
    capabilities: Iterable[str],
) -> tuple[FrontierRecord, ...]:
    """Arcs exactly one source short of firing, ordered by arc index.

    Only arcs touching the closure count: at least one source is already
    held.  Arcs whose targets meet the forbidden set are kept and flagged
    rather than dropped.
    """
    members = _check_forbidden(graph, forbidden) if forbidden is not None else frozenset()
    cl = set(graph.ids(closure(graph, capabilities)))
    out = []
    for e, arc in enumerate(graph.arcs):
        gap = [u for u in graph._src[e] if u not in cl]
        if len(gap) == 1 and len(graph._src[e]) > 1:
            out.append(FrontierRecord(
                missing=graph.nodes[gap[0]],
                arc_index=e,
                arc=arc,
                unlocked=arc.targets,
                forbidden_productive=bool(arc.targets & members),
            ))
    return tuple(out)


def closure_gain(graph: Hypergraph, capabilities: Iterable[str], extra: Iterable[str]) -> int:
    base = frozenset(capabilities)
    return len(closure(graph, base | frozenset(extra))) - len(closure(graph, base))


def greedy_topk_gains(
    graph: Hypergraph,
    capabilities: Iterable[str],
    candidates: Iterable[str],
    k: int,
) -> list[tuple[str, int]]:
    """Greedy acquisition order: each round takes the candidate with the
    largest marginal closure gain against the set grown so far."""
    if k < 1:
        raise InputError("k must be at least 1")
    current = set(capabilities)
    cl = closure(graph, current)
    pool = graph.ordered(set(candidates))
    for c in pool:
        if c in cl:
            raise InputError(f"candidate {c!r} is already in the closure")
    ranked: list[tuple[str, int]] = []
    while pool and len(ranked) < k:
        best, best_gain = None, -1
        base_size = len(cl)
        for c in pool:
            gain = len(closure(graph, current | {c})) - base_size
            if gain > best_gain:
                best, best_gain = c, gain
        ranked.append((best, best_gain))
        pool.remove(best)
        current.add(best)
        cl = closure(graph, current)
    return ranked


def minimal_unsafe_antichain_bruteforce(
    graph: Hypergraph,
    forbidden: ForbiddenSet | Iterable[str],
    max_n: int = 20,
) -> frozenset[frozenset[str]]:
    """Every unsafe set whose one-element removals are all safe.

    Enumeration runs over subsets of the non-forbidden nodes; forbidden ones are
    trivially unsafe singletons and are left out.  Refuses graphs with more
    than ``max_n`` nodes.
    """
    members = _check_forbidden(graph, forbidden)
    if graph.n > max_n:
        raise RefusalError(f"antichain enumeration capped at max_n={max_n}, graph has {graph.n} nodes")
    if not members:
        return frozenset()
    universe = [i for i in range(graph.n) if graph.nodes[i] not in members]
    u = len(universe)
    fmask = 0
    for i in graph.ids(members):
        fmask |= 1 << i
    arcs = [(sum(1 << s for s in graph._src[e]), sum(1 << t for t in graph._tgt[e])) for e in range(graph.m)]

    def unsafe(local: int) -> bool:
        cur = 0
        for j in range(u):
            if local >> j & 1:
                cur |= 1 << universe[j]
        changed = True
        while changed:
            changed = False
            for s, t in arcs:
                if cur & s == s and cur | t != cur:
                    cur |= t
                    changed = True
        return bool(cur & fmask)

    # up-closed: a set is unsafe as soon as any one-element removal is
    is_unsafe = bytearray(1 << u)
    found = []
    for mask in range(1, 1 << u):
        sub_unsafe = False
        bits = mask
        while bits:
            low = bits & -bits
            if is_unsafe[mask ^ low]:
                sub_unsafe = True
                break
            bits ^= low
        if sub_unsafe:
            is_unsafe[mask] = 1
        elif unsafe(mask):
            is_unsafe[mask] = 1
            found.append(frozenset(graph.nodes[universe[j]] for j in range(u) if mask >> j & 1))
    return frozenset(found)


@dataclass(frozen=True)
class DefectReport:
    per_arc: tuple[tuple[int, int, int], ...] = field(default=())  # (arc index, fan-in, forced pairs)
    total: int = 0

    @property
    def mean(self) -> float:
        return self.total / len(self.per_arc) if self.per_arc else 0.0


def compositionality_defect(graph: Hypergraph, forbidden: ForbiddenSet | Iterable[str]) -> DefectReport:
    """Forced unsafe pairs ``2**(k-1) - 1`` for every conjunctive arc that
    produces a forbidden capability."""
    members = _check_forbidden(graph, forbidden)
    rows = []
    for e, arc in enumerate(graph.arcs):
        if arc.targets & members and arc.fan_in >= 2:
            rows.append((e, arc.fan_in, 2 ** (arc.fan_in - 1) - 1))
    return DefectReport(tuple(rows), sum(r[2] for r in rows))


def _graph_payload(graph: Hypergraph) -> dict:
    return {
        "nodes": list(graph.nodes),
        "arcs": [
            {
                "sources": [graph.nodes[i] for i in graph._src[e]],
                "targets": [graph.nodes[i] for i in graph._tgt[e]],
                "rate": arc.rate,
                "kind": arc.kind.value,
            }
            for e, arc in enumerate(graph.arcs)
        ],
    }


def hypergraph_to_dict(graph: Hypergraph, forbidden: ForbiddenSet | Iterable[str] = ()) -> dict:
    payload = _graph_payload(graph)
    members = forbidden.members if isinstance(forbidden, ForbiddenSet) else frozenset(forbidden)
    payload["forbidden"] = graph.ordered(members)
    return payload


def hypergraph_from_dict(payload: dict) -> tuple[Hypergraph, ForbiddenSet]:
    try:
        arcs = [
            Hyperarc(
                frozenset(a["sources"]),
                frozenset(a["targets"]),
                float(a.get("rate", 1.0)),
                ArcKind(a.get("kind", "Manual")),
            )
            for a in payload["arcs"]
        ]
        graph = Hypergraph(payload["nodes"], arcs)
    except (KeyError, TypeError, ValueError) as exc:
        if isinstance(exc, InputError):
            raise
        raise InputError(f"malformed hypergraph: {exc}") from exc
    forbidden = ForbiddenSet(frozenset(payload.get("forbidden", ())))
    graph.ids(forbidden.members)
    return graph, forbidden


def dumps_hypergraph(graph: Hypergraph, forbidden: ForbiddenSet | Iterable[str] = ()) -> str:
    return json.dumps(hypergraph_to_dict(graph, forbidden), indent=2) + "\n"


def save_hypergraph(path: str | Path, graph: Hypergraph, forbidden: ForbiddenSet | Iterable[str] = ()) -> None:
    Path(path).write_text(dumps_hypergraph(graph, forbidden), encoding="utf-8")


def load_hypergraph(path: str | Path) -> tuple[Hypergraph, ForbiddenSet]:
    try:
        payload = json.loads(Path(path).read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise InputError(f"{path}:{exc.lineno}: {exc.msg}") from exc
    return hypergraph_from_dict(payload)


def graph_stats(graph: Hypergraph) -> dict:
    """Structural summary in the shape of an extraction report."""
    fan = [a.fan_in for a in graph.arcs]
    kinds = {k.value: 0 for k in ArcKind}
    for a in graph.arcs:
        kinds[a.kind.value] += 1
    conj = sum(1 for f in fan if f >= 2)
    return {
        "nodes": graph.n,
        "arcs": graph.m,
        "arcs_by_kind": kinds,
        "conjunctive_fraction": conj / len(fan) if fan else 0.0,
        "mean_fan_in": sum(fan) / len(fan) if fan else 0.0,
        "max_fan_in": max(fan, default=0),
        "min_rate": min((a.rate for a in graph.arcs), default=None),
    }


def split_witness(graph: Hypergraph, forbidden: ForbiddenSet | Iterable[str], arc_index: int) -> tuple[frozenset[str], frozenset[str]] | None:
    """Find ``A, B`` among the sources of a forbidden-productive arc with
    both halves safe and their union unsafe, or ``None``."""
    members = _check_forbidden(graph, forbidden)
    arc = graph.arcs[arc_index]
    if not arc.targets & members or arc.fan_in < 2:
        return None
    srcs: Sequence[str] = graph.ordered(arc.sources)
    k = len(srcs)
    for mask in range(1, (1 << k) - 1):
        a = frozenset(s for j, s in enumerate(srcs) if mask >> j & 1)
        b = frozenset(srcs) - a
        if is_safe(graph, members, a) and is_safe(graph, members, b) and not is_safe(graph, members, a | b):
            return a, b
    return None
