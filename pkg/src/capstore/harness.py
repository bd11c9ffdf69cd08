"""Experiment orchestration: method replays, omission injection, bound check.

Sessions are replayed one after another in corpus order so that every run
with the same inputs and seed produces the same numbers.
"""

from __future__ import annotations

import math
from collections import Counter
from collections.abc import Iterable, Mapping, Sequence
from dataclasses import asdict, dataclass, field

from .baselines import SemanticCache, unsafe_hit_audit
from .corpus import Corpus, DialogueSession, inject_slot_omission, phi
from .embedding import embed
from .errors import ConfigError, UnknownCapability
from .hypergraph import ForbiddenSet, Hypergraph, closure, near_miss_frontier
from .provenance import check_certificate, min_witness, replay, sub_cert
from .session import CostModel, ServedBy, SessionState, ontological_class_count
from .store import CasStore, TemplateDb

METHODS = ("no_cache", "cosine", "cas_only", "cas_pab")
COVERAGE = (1.0, 0.75, 0.5, 0.25)
OMISSION_RATES = (0.0, 0.05, 0.10, 0.20, 0.30)


@dataclass(frozen=True)
class ExperimentConfig:
    seed: int
    methods: tuple[str, ...] = METHODS
    coverage: tuple[float, ...] = COVERAGE
    tau: float = 0.85
    cost: CostModel = CostModel()
    cas_scope: str = "session"
    coverage_seed: int | None = None
    tenant_forbidden: Mapping[str, tuple[str, ...]] = field(default_factory=dict)

    def validate(self) -> None:
        if self.seed is None:
            raise ConfigError("a seed is required")
        bad = [m for m in self.methods if m not in METHODS]
        if bad:
            raise ConfigError(f"unknown methods {bad}; choose from {list(METHODS)}")
        if not self.methods:
            raise ConfigError("no methods selected")
        if any(not 0.0 <= p <= 1.0 for p in self.coverage) or not self.coverage:
            raise ConfigError("coverage levels must lie in [0, 1]")
        if len(set(self.coverage)) != len(self.coverage):
            raise ConfigError("coverage levels must be distinct")
        if not -1.0 <= self.tau <= 1.0:
            raise ConfigError("tau must lie in [-1, 1]")
        if self.cas_scope not in ("session", "run"):
            raise ConfigError("cas_scope must be 'session' or 'run'")

    def to_dict(self) -> dict:
        return {
            "seed": self.seed,
            "methods": list(self.methods),
            "coverage": list(self.coverage),
            "tau": self.tau,
            "cost": asdict(self.cost),
            "cas_scope": self.cas_scope,
            "coverage_seed": self.coverage_seed,
            "tenant_forbidden": {k: list(v) for k, v in sorted(self.tenant_forbidden.items())},
        }


@dataclass(frozen=True)
class SessionMetrics:
    method: str
    coverage: float
    session_id: str
    turns: int
    K: int
    rag_calls: int
    tier1: int
    tier2: int
    blocked: int
    unsafe_hits: int
    cost_units: int
    delta_total: int


SESSION_COLUMNS = tuple(SessionMetrics.__dataclass_fields__)


@dataclass(frozen=True)
class MethodSummary:
    method: str
    coverage: float
    sessions: int
    turns: int
    mean_turns: float
    mean_K: float
    mean_rag: float
    tier1_rate: float
    tier2_rate: float
    rag_rate: float
    hit_rate: float
    blocked: int
    unsafe_hits: int
    unsafe_pct: float
    mean_cost: float
    delta_total: int


SUMMARY_COLUMNS = tuple(MethodSummary.__dataclass_fields__)


def summarize(method: str, p: float, rows: Sequence[SessionMetrics]) -> MethodSummary:
    n = len(rows)
    turns = sum(r.turns for r in rows)
    t1 = sum(r.tier1 for r in rows)
    t2 = sum(r.tier2 for r in rows)
    rag = sum(r.rag_calls for r in rows)
    unsafe = sum(r.unsafe_hits for r in rows)

    def mean(x: float) -> float:
        return x / n if n else 0.0

    def frac(x: float) -> float:
        return x / turns if turns else 0.0

    return MethodSummary(
        method, p, n, turns, mean(turns), mean(sum(r.K for r in rows)), mean(rag),
        frac(t1), frac(t2), frac(rag), frac(t1 + t2), sum(r.blocked for r in rows), unsafe,
        100.0 * unsafe / (t1 + t2) if t1 + t2 else 0.0, mean(sum(r.cost_units for r in rows)),
        sum(r.delta_total for r in rows),
    )


@dataclass
class Metrics:
    config: ExperimentConfig
    sessions: list[SessionMetrics] = field(default_factory=list)
    summaries: list[MethodSummary] = field(default_factory=list)
    k_histogram: dict[int, int] = field(default_factory=dict)
    graph_version: str = ""

    def summary(self, method: str, coverage: float = 1.0) -> MethodSummary:
        for s in self.summaries:
            if s.method == method and s.coverage == coverage:
                return s
        raise KeyError((method, coverage))

    def rows(self, method: str, coverage: float = 1.0) -> list[SessionMetrics]:
        return [r for r in self.sessions if r.method == method and r.coverage == coverage]


def session_forbidden(config: ExperimentConfig, base: ForbiddenSet, session: DialogueSession) -> ForbiddenSet:
    tenant = session.turns[0].tenant if session.turns else None
    extra = config.tenant_forbidden.get(tenant, ()) if tenant is not None else ()
    if not extra:
        return base
    return base.replace(base.members | frozenset(extra))


def _audit(graph: Hypergraph, state: SessionState, primary: str, witness, cert) -> bool:
    """Independent check of a served cached answer; True means a violation."""
    held = state.reachable
    if witness is None or cert is None or not witness.members <= held:
        return True
    return not check_certificate(graph, state.base, cert, primary)


def replay_session(
    method: str,
    session: DialogueSession,
    graph: Hypergraph,
    forbidden: ForbiddenSet,
    tdb: TemplateDb,
    config: ExperimentConfig,
    *,
    cas: CasStore | None = None,
    semantic: SemanticCache | None = None,
    coverage: float = 1.0,
    K: int | None = None,
) -> SessionMetrics:
    state = SessionState(graph, forbidden, session.session_id)
    cost = config.cost
    unsafe = 0
    if method == "cosine":
        if semantic is None:
            raise ConfigError("the cosine method needs a semantic cache")
        for turn in session.turns:
            state.advance(phi(turn, graph))
            primary = turn.primary_capability
            if primary not in graph:
                raise UnknownCapability(primary)
            if not state.safe:
                state.counters.blocked += 1
                continue
            text = turn.answer_text or primary
            hit = semantic.lookup(embed(text))
            if hit is not None:
                state.counters.tier2_hits += 1
                state.counters.cost_units += cost.tier2_units
                unsafe += unsafe_hit_audit(hit, state.reachable)
                continue
            state.counters.rag_calls += 1
            state.counters.cost_units += cost.rag_units
            if primary in state.reachable:
                cert = sub_cert(graph, state.main_certificate(), primary)
                witness = min_witness(graph, state.base, cert, primary).members
            else:
                witness = frozenset(state.base)
            semantic.put(text, turn.tenant, witness)
    else:
        use_cas = method in ("cas_only", "cas_pab")
        use_pab = method == "cas_pab"
        for turn in session.turns:
            out = state.process_turn(turn, cas if use_cas else None, tdb, cost,
                                     use_pab=use_pab, use_cas=use_cas)
            if out.served_by in (ServedBy.TIER1_PAB, ServedBy.TIER2_CAS):
                unsafe += _audit(graph, state, out.primary, out.witness, out.cert)
    c = state.counters
    if K is None:
        K = ontological_class_count([phi(t, graph) for t in session.turns], graph)
    return SessionMetrics(method, coverage, session.session_id, len(session.turns), K, c.rag_calls,
                          c.tier1_hits, c.tier2_hits, c.blocked, unsafe, c.cost_units, c.delta_total)


def run_simulation(
    config: ExperimentConfig,
    graph: Hypergraph,
    forbidden: ForbiddenSet,
    templates: TemplateDb,
    corpus: Corpus,
) -> Metrics:
    """Replay every session under each method.

    Coverage levels apply to ``cas_pab`` only; the other methods do not
    consult pre-answers and run once at full coverage.  The semantic cache
    is shared across the run; the certified store is per session unless
    ``cas_scope`` is ``run``.
    """
    config.validate()
    for f in forbidden:
        if f not in graph:
            raise UnknownCapability(f)
    for tenant_extra in config.tenant_forbidden.values():
        graph.ids(tenant_extra)
    ks = [ontological_class_count([phi(t, graph) for t in s.turns], graph) for s in corpus.sessions]
    metrics = Metrics(config, k_histogram=dict(sorted(Counter(ks).items())), graph_version=graph.version)
    cov_seed = config.seed if config.coverage_seed is None else config.coverage_seed
    for method in config.methods:
        levels = config.coverage if method == "cas_pab" else (1.0,)
        for p in levels:
            tdb = templates.with_coverage(p, cov_seed) if p < 1.0 else templates
            run_cas = CasStore()
            semantic = SemanticCache(config.tau) if method == "cosine" else None
            rows = []
            for session, K in zip(corpus.sessions, ks):
                cas = run_cas if config.cas_scope == "run" else CasStore()
                rows.append(replay_session(method, session, graph,
                                           session_forbidden(config, forbidden, session), tdb, config,
                                           cas=cas, semantic=semantic, coverage=p, K=K))
            metrics.sessions += rows
            metrics.summaries.append(summarize(method, p, rows))
    return metrics


@dataclass(frozen=True)
class OmissionRow:
    r: float
    sessions: int
    safety_violation_rate: float
    false_rejection_rate: float
    pab_recall: float
    pab_recall_loss: float
    and_violation_rate: float
    oracle_entries: int
    multi_slot_turns: int
    predicted_recall: float | None = None


OMISSION_COLUMNS = tuple(OmissionRow.__dataclass_fields__)


def _pab_keys(state: SessionState, tdb: TemplateDb) -> frozenset[str]:
    if not state.safe:
        return frozenset()
    forbidden = state.f_current
    return frozenset(v for v in state.reachable - state.base if v not in forbidden and tdb.has(v))


def omission_row(graph: Hypergraph, forbidden: ForbiddenSet, tdb: TemplateDb, oracle: Corpus,
                 injected: Corpus, r: float, w_star: int | None = None) -> OmissionRow:
    sv = fr = 0
    matched = total = 0
    multi = viol = 0
    for so, si in zip(oracle.sessions, injected.sessions):
        a = SessionState(graph, forbidden)
        b = SessionState(graph, forbidden)
        bad_pass = bad_block = False
        for to, ti in zip(so.turns, si.turns):
            po, pi = phi(to, graph), phi(ti, graph)
            a.advance(po)
            b.advance(pi)
            if a.safe != b.safe:
                if b.safe:
                    bad_pass = True
                else:
                    bad_block = True
            ko = _pab_keys(a, tdb)
            matched += len(ko & _pab_keys(b, tdb))
            total += len(ko)
            if sum(len(s) for s in to.belief_state.values()) >= 2:
                multi += 1
                viol += replay(graph, b.main_certificate()) is None
        sv += bad_pass
        fr += bad_block
    n = len(oracle.sessions)
    recall = matched / total if total else 1.0
    return OmissionRow(
        r, n, sv / n if n else 0.0, fr / n if n else 0.0, recall, 1.0 - recall,
        viol / multi if multi else 0.0, total, multi,
        (1.0 - r) ** w_star if w_star is not None else None,
    )


def run_omission_experiment(
    graph: Hypergraph,
    forbidden: ForbiddenSet,
    templates: TemplateDb,
    corpus: Corpus,
    r_levels: Iterable[float] = OMISSION_RATES,
    seed: int = 0,
    w_star: int | None = None,
) -> list[OmissionRow]:
    """Compare gate verdicts and pre-answer sets under oracle and injected assembly."""
    rows = []
    for r in r_levels:
        injected = inject_slot_omission(corpus, r, seed)
        rows.append(omission_row(graph, forbidden, templates, corpus, injected, r, w_star))
    return rows


def greedy_cover(sets: Sequence[frozenset[str]], radius: float) -> list[int]:
    """Greedy centers such that every set lies within ``radius`` (symmetric difference) of one."""
    uncovered = set(range(len(sets)))
    centers: list[int] = []
    while uncovered:
        best, best_cov = -1, set()
        for i in range(len(sets)):
            cov = {j for j in uncovered if len(sets[i] ^ sets[j]) <= radius}
            if len(cov) > len(best_cov):
                best, best_cov = i, cov
        centers.append(best)
        uncovered -= best_cov
    return centers


@dataclass(frozen=True)
class BoundReport:
    p: float
    delta_star: int
    n: int
    cover_size: int
    mean_frontier: float
    bound: float
    vacuous: bool
    measured: float | None
    holds: bool | None

    def to_dict(self) -> dict:
        return asdict(self)


def hit_rate_bound_report(
    graph: Hypergraph,
    forbidden: ForbiddenSet,
    corpus: Corpus,
    p: float,
    delta_star: int,
    measured: float | None = None,
) -> BoundReport:
    """Lower bound on the hit rate at coverage ``p`` for witnesses of size ``delta_star``.

    The corpus' distinct per-turn closures are covered greedily by balls of
    radius ``delta_star / 2``; the bound shrinks with the cover size and
    with the mean number of distinct one-step-missing capabilities.
    """
    if not 0.0 <= p <= 1.0:
        raise ConfigError("p must lie in [0, 1]")
    if delta_star < 1:
        raise ConfigError("delta_star must be at least 1")
    n = graph.n
    closures: dict[frozenset[str], None] = {}
    frontier = []
    for s in corpus.sessions:
        for t in s.turns:
            caps = phi(t, graph)
            closures.setdefault(closure(graph, caps), None)
            frontier.append(len({r.missing for r in near_miss_frontier(graph, forbidden, caps)}))
    classes = list(closures)
    cover = len(greedy_cover(classes, delta_star / 2)) if classes else 0
    nmf = sum(frontier) / len(frontier) if frontier else 0.0
    bound = p * (1.0 - cover * math.exp(-delta_star / (2 * n))) * (1.0 - nmf / n) if n else 0.0
    vacuous = bound <= 0.0
    holds = None if measured is None or vacuous else measured >= bound
    return BoundReport(p, delta_star, n, cover, nmf, bound, vacuous, measured, holds)


def method_dominance(metrics: Metrics) -> bool:
    """Mean RAG calls ordered no_cache >= cas_only >= cas_pab(p=1)."""
    try:
        a = metrics.summary("no_cache").mean_rag
        b = metrics.summary("cas_only").mean_rag
        c = metrics.summary("cas_pab", 1.0).mean_rag
    except KeyError:
        return True
    return a >= b >= c


__all__ = [
    "ExperimentConfig", "Metrics", "SessionMetrics", "MethodSummary", "OmissionRow", "BoundReport",
    "run_simulation", "replay_session", "run_omission_experiment", "hit_rate_bound_report",
    "greedy_cover", "summarize", "method_dominance", "METHODS", "COVERAGE", "OMISSION_RATES",
    "SESSION_COLUMNS", "SUMMARY_COLUMNS", "OMISSION_COLUMNS",
]
