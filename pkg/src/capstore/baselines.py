"""Similarity-only answer cache and the two-tenant counterexample.

The semantic cache decides hits on cosine similarity alone.  It records the
witness each answer was produced under, but only the audit reads it.
"""

from __future__ import annotations

import json
import threading
from collections.abc import Iterable
from dataclasses import dataclass, field

import numpy as np

from .embedding import DIM, cosine, embed
from .errors import InputError
from .hypergraph import ForbiddenSet, Hypergraph, Hyperarc, closure, is_safe
from .provenance import Witness, check_certificate, derive_certificate
from .store import CasEntry, CasStore

__all__ = [
    "SemanticCache", "SemanticEntry", "SemanticHit", "embed", "cosine",
    "semantic_lookup", "unsafe_hit_audit", "DemoReport", "unsound_demo",
]


@dataclass(frozen=True)
class SemanticEntry:
    answer: str
    emb: tuple[float, ...]
    origin_tenant: str | None
    origin_witness: frozenset[str]


@dataclass(frozen=True)
class SemanticHit:
    entry_id: int
    entry: SemanticEntry
    similarity: float

    @property
    def answer(self) -> str:
        return self.entry.answer


class SemanticCache:
    def __init__(self, tau: float = 0.85, dim: int = DIM) -> None:
        if not -1.0 <= tau <= 1.0:
            raise InputError(f"tau {tau} outside [-1, 1]")
        self.tau = tau
        self.dim = dim
        self.entries: list[SemanticEntry] = []
        self._emb = np.zeros((16, dim))
        self._lock = threading.Lock()

    def __len__(self) -> int:
        return len(self.entries)

    def put(self, answer: str, origin_tenant: str | None = None,
            origin_witness: Iterable[str] = ()) -> int:
        e = SemanticEntry(answer, tuple(float(x) for x in embed(answer, self.dim)),
                          origin_tenant, frozenset(origin_witness))
        with self._lock:
            i = len(self.entries)
            if i == len(self._emb):
                grown = np.zeros((2 * i, self.dim))
                grown[:i] = self._emb
                self._emb = grown
            self._emb[i] = e.emb
            self.entries.append(e)
        return i

    def lookup(self, query_emb) -> SemanticHit | None:
        count = len(self.entries)
        if count == 0:
            return None
        q = np.asarray(query_emb, dtype=float)
        norm = np.linalg.norm(q)
        if norm == 0:
            return None
        sims = self._emb[:count] @ (q / norm)
        # argmax returns the first maximum, so ties go to the oldest entry
        i = int(np.argmax(sims))
        sim = float(sims[i])
        if sim > self.tau:
            return SemanticHit(i, self.entries[i], sim)
        return None


def semantic_lookup(cache: SemanticCache, query_emb) -> SemanticHit | None:
    return cache.lookup(query_emb)


def unsafe_hit_audit(witness: Iterable[str] | SemanticHit, held: Iterable[str]) -> bool:
    """True iff the hit's origin witness is not contained in ``held``."""
    if isinstance(witness, SemanticHit):
        witness = witness.entry.origin_witness
    return not frozenset(witness) <= frozenset(held)


@dataclass(frozen=True)
class DemoReport:
    tau: float
    semantic_unsafe_hits: int
    cas_unsafe_hits: int
    followup_cas_hit_safe: bool
    transcript: tuple[str, ...] = field(default=())

    @property
    def ok(self) -> bool:
        return self.semantic_unsafe_hits == 1 and self.cas_unsafe_hits == 0 and self.followup_cas_hit_safe

    def to_dict(self) -> dict:
        return {
            "tau": self.tau,
            "semantic_unsafe_hits": self.semantic_unsafe_hits,
            "cas_unsafe_hits": self.cas_unsafe_hits,
            "followup_cas_hit_safe": self.followup_cas_hit_safe,
            "ok": self.ok,
            "transcript": list(self.transcript),
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2) + "\n"

    def to_text(self) -> str:
        return "\n".join(self.transcript) + "\n"


def demo_graph() -> tuple[Hypergraph, ForbiddenSet]:
    graph = Hypergraph(
        ["read_PII", "query_db", "gen", "f_leak"],
        [Hyperarc(frozenset({"read_PII", "gen"}), frozenset({"f_leak"}))],
    )
    return graph, ForbiddenSet(frozenset({"f_leak"}))


ANSWER = "Balance: $247.50"


def unsound_demo(tau: float = 0.85) -> DemoReport:
    """Two tenants, one identical answer string, two caches.

    Tenant T2 holds ``read_PII`` and has no forbidden set; its answer lands
    in both caches.  Tenant T1 forbids ``f_leak`` and holds only
    ``{query_db, gen}``.  The similarity cache serves T2's answer to T1;
    the certified store refuses it, then serves T1 its own later entry.
    """
    if not tau < 1.0:
        raise InputError("the counterexample needs tau < 1")
    graph, f1 = demo_graph()
    f2 = ForbiddenSet(frozenset())
    lines = [f"tau = {tau}"]

    t2_caps = frozenset({"read_PII", "query_db", "gen"})
    t2_witness = t2_caps
    t2_cert = derive_certificate(graph, t2_caps, "query_db")
    sem = SemanticCache(tau)
    cas = CasStore()
    sem.put(ANSWER, "T2", t2_witness)
    cas.put(CasEntry.create("query_db", ANSWER, Witness(t2_witness), (), f2, t2_cert, 0, "T2"))
    lines.append(f"T2 stores {ANSWER!r} with witness {sorted(t2_witness)} and no forbidden capabilities")

    t1_caps = frozenset({"query_db", "gen"})
    c1 = closure(graph, t1_caps)
    assert is_safe(graph, f1, t1_caps)
    q = embed(ANSWER)

    semantic_unsafe = 0
    hit = sem.lookup(q)
    if hit is not None:
        unsafe = unsafe_hit_audit(hit, c1)
        semantic_unsafe += unsafe
        lines.append(f"T1 semantic lookup: hit at cosine {hit.similarity:.3f}, "
                     f"origin witness within T1 closure: {not unsafe}")
    else:
        lines.append("T1 semantic lookup: miss")

    cas_unsafe = 0
    chit = cas.lookup(q, c1, f1, capability="query_db", graph=graph)
    if chit is not None:
        bad = unsafe_hit_audit(chit.entry.witness.members, c1) or not check_certificate(
            graph, t1_caps, chit.cert, "query_db")
        cas_unsafe += bad
        lines.append(f"T1 CAS lookup: hit on entry {chit.entry_id}")
    else:
        lines.append("T1 CAS lookup: miss (witness not contained, forbidden snapshot differs)")

    # T1 answers from its own retrieval, stores it, and asks again.
    t1_cert = derive_certificate(graph, t1_caps, "query_db")
    t1_w = Witness(t1_caps)
    cas.put(CasEntry.create("query_db", ANSWER, t1_w, (), f1, t1_cert, 1, "T1"))
    lines.append(f"T1 stores its own answer with witness {sorted(t1_w.members)}")
    again = cas.lookup(q, c1, f1, capability="query_db", graph=graph)
    followup_safe = (
        again is not None
        and not unsafe_hit_audit(again.entry.witness.members, c1)
        and check_certificate(graph, t1_caps, again.cert, "query_db")
    )
    if again is not None:
        lines.append(f"T1 follow-up CAS lookup: hit on entry {again.entry_id}, safe: {followup_safe}")
    else:
        lines.append("T1 follow-up CAS lookup: miss")
    lines.append(f"semantic_unsafe_hits = {semantic_unsafe}, cas_unsafe_hits = {cas_unsafe}")
    return DemoReport(tau, semantic_unsafe, cas_unsafe, followup_safe, tuple(lines))

