"""Derivation certificates and why-provenance witnesses.

A certificate is a base set plus an ordered list of arc indices; replaying
the firings from the base never fires an arc before its sources are held.
Certificates name arcs by index, so they are bound to one graph version.
"""

from __future__ import annotations

from collections.abc import Iterable
from dataclasses import dataclass

from .errors import NotDerivable
from .hypergraph import Hypergraph, Worklist, closure


@dataclass(frozen=True)
class Certificate:
    base: frozenset[str]
    firings: tuple[int, ...]
    graph_version: str

    def __len__(self) -> int:
        return len(self.firings)

    def to_dict(self) -> dict:
        return {"base": sorted(self.base), "firings": list(self.firings), "graph_version": self.graph_version}

    @classmethod
    def from_dict(cls, d: dict) -> Certificate:
        return cls(frozenset(d["base"]), tuple(d["firings"]), d["graph_version"])


@dataclass(frozen=True)
class Witness:
    members: frozenset[str]

    def within(self, capabilities: frozenset[str] | set[str]) -> bool:
        return self.members <= capabilities

    def __len__(self) -> int:
        return len(self.members)

    def __iter__(self):
        return iter(self.members)


def closure_certificate(graph: Hypergraph, capabilities: Iterable[str]) -> Certificate:
    """Full firing sequence of the closure run from ``capabilities``."""
    base = frozenset(capabilities)
    wl = Worklist(graph)
    wl.add(sorted(set(graph.ids(base))))
    return Certificate(base, tuple(wl.fired), graph.version)


def _check_version(graph: Hypergraph, cert: Certificate) -> None:
    if cert.graph_version != graph.version:
        raise NotDerivable(
            f"certificate built for graph {cert.graph_version}, not {graph.version}"
        )


def sub_cert(graph: Hypergraph, cert: Certificate, v: str) -> Certificate:
    """Firings of ``cert`` that ``v`` actually depends on, in original order.

    Backward scan in O(len(cert) * k): each needed capability is charged to
    the latest earlier firing that produces it.  The result's base is the
    set of base capabilities those firings consume.
    """
    _check_version(graph, cert)
    if v in cert.base:
        return Certificate(frozenset({v}), (), cert.graph_version)
    (vi,) = graph.ids([v])
    base = set(graph.ids(cert.base))
    needed = {vi}
    kept: list[int] = []
    leaves: set[int] = set()
    for e in reversed(cert.firings):
        if not needed:
            break
        produced = needed.intersection(graph.arc_targets(e))
        if not produced:
            continue
        kept.append(e)
        needed.difference_update(produced)
        for s in graph.arc_sources(e):
            if s in base:
                leaves.add(s)
            else:
                needed.add(s)
    if needed:
        raise NotDerivable(f"{v!r} is not derivable from the certificate")
    kept.reverse()
    return Certificate(graph.labels(leaves), tuple(kept), cert.graph_version)


def derive_certificate(graph: Hypergraph, capabilities: Iterable[str], v: str) -> Certificate:
    base = frozenset(capabilities)
    if v not in closure(graph, base):
        raise NotDerivable(f"{v!r} is not in the closure")
    return sub_cert(graph, closure_certificate(graph, base), v)


def replay(graph: Hypergraph, cert: Certificate) -> frozenset[str] | None:
    """Capabilities held after replaying ``cert``, or None if a firing is premature."""
    try:
        current = set(graph.ids(cert.base))
    except KeyError:
        return None
    for e in cert.firings:
        if not isinstance(e, int) or not 0 <= e < graph.m:
            return None
        if not current.issuperset(graph.arc_sources(e)):
            return None
        current.update(graph.arc_targets(e))
    return graph.labels(current)


def min_witness(graph: Hypergraph, capabilities: Iterable[str], cert: Certificate, v: str) -> Witness:
    """Leaf set of the sub-certificate for ``v``, with redundant leaves dropped.

    A leaf is dropped (ascending index order) when the remaining leaves
    already derive it.  Every dropped leaf stays inside the closure of the
    witness, so the sub-certificate remains valid wherever the witness is
    held.  Minimal relative to this derivation, not globally.
    """
    sub = sub_cert(graph, cert, v)
    held = frozenset(capabilities)
    if not sub.base <= held and not sub.base <= closure(graph, held):
        raise NotDerivable(f"certificate leaves for {v!r} are outside the closure of the given set")
    members = set(sub.base)
    for x in graph.ordered(sub.base):
        rest = members - {x}
        if rest and x in closure(graph, rest):
            members = rest
    return Witness(frozenset(members))


def check_certificate(graph: Hypergraph, capabilities: Iterable[str], cert: Certificate, v: str) -> bool:
    """True iff ``cert`` is valid under ``capabilities`` and derives ``v``."""
    if cert.graph_version != graph.version:
        return False
    try:
        held = closure(graph, capabilities)
    except KeyError:
        return False
    if not cert.base <= held:
        return False
    final = replay(graph, cert)
    return final is not None and v in final
