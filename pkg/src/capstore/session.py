"""Per-session state: cumulative capabilities, incremental closure, session PAB.

The closure is kept by a resumable worklist, so each turn only pays for the
capabilities it adds.  Revocation rebuilds the closure from scratch and
drops every pre-answer whose witness touched a revoked capability.
"""

from __future__ import annotations

import enum
import json
from collections.abc import Iterable, Mapping, Sequence
from dataclasses import asdict, dataclass, field
from pathlib import Path

from .corpus import Turn, phi
from .embedding import embed
from .errors import InputError, UnknownCapability
from .hypergraph import ForbiddenSet, Hypergraph, Worklist, closure, emergent, near_miss_frontier
from .provenance import Certificate, Witness, min_witness, sub_cert
from .store import CasEntry, CasStore, PabEntry, TemplateDb, build_pab, forbidden_matches, _render


class ServedBy(str, enum.Enum):
    TIER1_PAB = "Tier1Pab"
    TIER2_CAS = "Tier2Cas"
    RAG = "Rag"
    BLOCKED = "Blocked"


class Safety(str, enum.Enum):
    PASS = "Pass"
    BLOCKED = "Blocked"


@dataclass(frozen=True)
class CostModel:
    rag_units: int = 1000
    tier2_units: int = 10
    tier1_units: int = 1

    def __post_init__(self) -> None:
        if min(self.rag_units, self.tier2_units, self.tier1_units) < 0:
            raise InputError("cost units must be non-negative")


@dataclass
class Counters:
    rag_calls: int = 0
    tier1_hits: int = 0
    tier2_hits: int = 0
    blocked: int = 0
    delta_total: int = 0
    cost_units: int = 0
    revocations: int = 0

    def as_dict(self) -> dict[str, int]:
        return asdict(self)


@dataclass(frozen=True)
class LookupHit:
    tier: ServedBy
    capability: str
    answer: str
    cert: Certificate
    witness: Witness
    entry_id: int | None = None


@dataclass(frozen=True)
class TurnOutcome:
    served_by: ServedBy
    answer: str
    cert: Certificate | None
    safety: Safety
    primary: str
    delta: frozenset[str]
    witness: Witness | None = None
    entry_id: int | None = None
    diagnostics: Mapping[str, int] = field(default_factory=dict)

    def record(self, session_id: str, turn_id: int, counters: Counters) -> dict:
        return {
            "session_id": session_id,
            "turn_id": turn_id,
            "served_by": self.served_by.value,
            "safety": self.safety.value,
            "primary": self.primary,
            "delta_size": len(self.delta),
            "counters": counters.as_dict(),
            **({"diagnostics": dict(self.diagnostics)} if self.diagnostics else {}),
        }


@dataclass(frozen=True)
class RecoveryReport:
    recomputed: frozenset[str]
    invalidated: tuple[str, ...]
    stale: tuple[str, ...]
    ignored: frozenset[str]
    cost_units: int
    safe: bool | None


class SessionState:
    """Mutable, single-owner state of one dialogue session."""

    def __init__(self, graph: Hypergraph, forbidden: ForbiddenSet, session_id: str = "") -> None:
        for f in forbidden:
            if f not in graph:
                raise UnknownCapability(f)
        self.graph = graph
        self.f_current = forbidden
        self.session_id = session_id
        self.base: set[str] = set()
        self._wl = Worklist(graph)
        self.pab: dict[str, PabEntry] = {}
        self.deltas: list[frozenset[str]] = []
        self.counters = Counters()

    @property
    def reachable(self) -> frozenset[str]:
        return self.graph.labels(self._wl.members())

    @property
    def safe(self) -> bool:
        return not any(self._wl.closed[self.graph.index[f]] for f in self.f_current)

    @property
    def worklist_state(self) -> tuple[tuple[int, ...], bytes]:
        return tuple(self._wl.missing), bytes(self._wl.closed)

    def main_certificate(self) -> Certificate:
        """The session's firing log; replays from the base set to the reachable set."""
        return Certificate(frozenset(self.base), tuple(self._wl.fired), self.graph.version)

    def advance(self, capabilities: Iterable[str]) -> frozenset[str]:
        caps = set(capabilities)
        ids = sorted(set(self.graph.ids(caps)))
        self.base |= caps
        added = self._wl.add(ids)
        delta = self.graph.labels(added)
        self.deltas.append(delta)
        self.counters.delta_total += len(delta)
        return delta

    def stage0_lookup(
        self,
        primary: str,
        query_emb,
        cas: CasStore | None,
        *,
        use_pab: bool = True,
        mode: str = "strict",
    ) -> LookupHit | None:
        held = self.reachable
        if use_pab:
            entry = self.pab.get(primary)
            if (
                entry is not None
                and entry.witness.members <= held
                and forbidden_matches(entry.f_snap, self.f_current, mode=mode,
                                      graph=self.graph, witness=entry.witness)
            ):
                return LookupHit(ServedBy.TIER1_PAB, primary, entry.answer, entry.cert, entry.witness)
        if cas is None:
            return None
        hit = cas.lookup(query_emb, held, self.f_current, capability=primary, mode=mode, graph=self.graph)
        if hit is None:
            return None
        if use_pab:
            for p in hit.entry.pab:
                self.pab.setdefault(p.capability, p)
        return LookupHit(ServedBy.TIER2_CAS, primary, hit.answer, hit.cert, hit.entry.witness, hit.entry_id)

    def facts(self, turn: Turn) -> dict[str, str]:
        out = {c: "yes" for c in self.reachable}
        out.update(turn.slot_facts())
        return out

    def process_turn(
        self,
        turn: Turn,
        cas: CasStore | None,
        tdb: TemplateDb,
        cost: CostModel = CostModel(),
        *,
        use_pab: bool = True,
        use_cas: bool = True,
        mode: str = "strict",
        diagnostics: bool = False,
    ) -> TurnOutcome:
        caps = phi(turn, self.graph)
        primary = turn.primary_capability
        if primary not in self.graph:
            raise UnknownCapability(primary)
        delta = self.advance(caps)
        diag = self._diagnostics() if diagnostics else {}
        if not self.safe:
            self.counters.blocked += 1
            return TurnOutcome(ServedBy.BLOCKED, "", None, Safety.BLOCKED, primary, delta, diagnostics=diag)

        store = cas if use_cas else None
        hit = None
        if use_pab or store is not None:
            hit = self.stage0_lookup(primary, embed(primary.replace("-", " ")), store,
                                     use_pab=use_pab, mode=mode)
        if hit is not None:
            if hit.tier is ServedBy.TIER1_PAB:
                self.counters.tier1_hits += 1
                self.counters.cost_units += cost.tier1_units
            else:
                self.counters.tier2_hits += 1
                self.counters.cost_units += cost.tier2_units
            return TurnOutcome(hit.tier, hit.answer, hit.cert, Safety.PASS, primary, delta,
                               hit.witness, hit.entry_id, diag)

        # Stage 4 is simulated: the retrieved answer is the template rendering.
        self.counters.rag_calls += 1
        self.counters.cost_units += cost.rag_units
        facts = self.facts(turn)
        if tdb.has(primary):
            answer, _ = _render(tdb.get(primary), facts)
        else:
            answer = f"RAG({primary})"
        if primary not in self.reachable:
            # Nothing certifies the answer, so nothing is stored.
            return TurnOutcome(ServedBy.RAG, answer, None, Safety.PASS, primary, delta, diagnostics=diag)

        cert_main = self.main_certificate()
        cert_v = sub_cert(self.graph, cert_main, primary)
        witness = min_witness(self.graph, self.base, cert_v, primary)
        pab: tuple[PabEntry, ...] = ()
        if use_pab:
            pab = build_pab(self.graph, self.base, self.reachable, self.f_current, cert_main, tdb, facts)
            for p in pab:
                self.pab.setdefault(p.capability, p)
        entry_id = None
        if store is not None:
            entry_id = store.put(CasEntry.create(primary, answer, witness, pab, self.f_current,
                                                 cert_v, len(store), turn.tenant))
        return TurnOutcome(ServedBy.RAG, answer, cert_v, Safety.PASS, primary, delta,
                           witness, entry_id, diag)

    def _diagnostics(self) -> dict[str, int]:
        nmf = near_miss_frontier(self.graph, self.f_current, self.base)
        return {
            "frontier": len(nmf),
            "frontier_forbidden": sum(r.forbidden_productive for r in nmf),
            "emergent": len(emergent(self.graph, self.base)),
        }

    def _rebuild(self) -> None:
        self._wl = Worklist(self.graph)
        self.deltas = []
        self.advance(self.base)

    def revoke(self, revoked: Iterable[str], *, recheck_gate: bool = True) -> RecoveryReport:
        """Remove ``revoked`` from the base and recover.

        Pre-answers whose witness meets ``revoked`` are invalidated; any
        other pre-answer whose witness fell out of the new closure is
        dropped as stale.  Capabilities outside the closure are ignored.
        """
        revoked = frozenset(revoked)
        self.graph.ids(revoked)
        before = self.reachable
        ignored = revoked - before
        live = revoked & before
        if not live:
            return RecoveryReport(before, (), (), ignored, 0, self.safe if recheck_gate else None)
        self.base -= live
        delta_total = self.counters.delta_total
        self._rebuild()
        self.counters.delta_total = delta_total
        self.counters.revocations += 1
        work = self.graph.work_units()
        self.counters.cost_units += work
        now = self.reachable
        invalidated, stale = [], []
        for v in self.graph.ordered(self.pab):
            w = self.pab[v].witness.members
            if w & live:
                invalidated.append(v)
            elif not w <= now:
                stale.append(v)
        for v in invalidated + stale:
            del self.pab[v]
        return RecoveryReport(now, tuple(invalidated), tuple(stale), ignored, work,
                              self.safe if recheck_gate else None)

    def snapshot(self) -> dict:
        return {
            "session_id": self.session_id,
            "base": self.graph.ordered(self.base),
            "reachable": self.graph.ordered(self.reachable),
            "pab": self.graph.ordered(self.pab),
            "deltas": [self.graph.ordered(d) for d in self.deltas],
            "f_version": self.f_current.version,
            "counters": self.counters.as_dict(),
        }


def session_init(graph: Hypergraph, forbidden: ForbiddenSet, session_id: str = "") -> SessionState:
    return SessionState(graph, forbidden, session_id)


def fresh_replay(graph: Hypergraph, forbidden: ForbiddenSet, base: Iterable[str]) -> SessionState:
    """A new session that received ``base`` in one turn."""
    state = SessionState(graph, forbidden)
    state.advance(base)
    return state


def ontological_class_count(turn_caps: Sequence[Iterable[str]], graph: Hypergraph) -> int:
    """Number of distinct per-turn closures."""
    return len({tuple(graph.ordered(closure(graph, caps))) for caps in turn_caps})


def write_trace(records: Iterable[dict], path: str | Path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for r in records:
            fh.write(json.dumps(r, sort_keys=True) + "\n")
