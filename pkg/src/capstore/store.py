"""Certified Answer Store and Pre-Answer Blocks.

A CAS entry is reusable under a closure ``C`` iff its witness is contained
in ``C`` and the forbidden set it was stored under matches the current
one.  Embeddings only order the scan; they never decide a hit.
"""

from __future__ import annotations

import json
import random
import re
import threading
import warnings
from collections.abc import Iterable, Mapping
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .embedding import DIM, embed
from .errors import GateViolation, InputError, MissingTemplate
from .hypergraph import ForbiddenSet, Hypergraph, closure
from .provenance import Certificate, Witness, min_witness, sub_cert

_SLOT = re.compile(r"\{([^{}]+)\}")


class UnresolvedSlotWarning(UserWarning):
    pass


class TemplateDb:
    """Answer templates keyed by capability, with ``{slot}`` placeholders."""

    def __init__(self, templates: Mapping[str, str] | None = None) -> None:
        self.templates: dict[str, str] = dict(sorted((templates or {}).items()))

    def __len__(self) -> int:
        return len(self.templates)

    def __contains__(self, v: object) -> bool:
        return v in self.templates

    def has(self, v: str) -> bool:
        return v in self.templates

    def get(self, v: str) -> str:
        try:
            return self.templates[v]
        except KeyError:
            raise MissingTemplate(v) from None

    def with_coverage(self, p: float, seed: int = 0) -> TemplateDb:
        """Keep ``floor(p * len(self))`` templates.

        The kept set is a prefix of one seeded permutation of the sorted
        keys, so lower coverage levels are subsets of higher ones.
        """
        if not 0.0 <= p <= 1.0:
            raise InputError(f"coverage {p} outside [0, 1]")
        keys = sorted(self.templates)
        random.Random(seed).shuffle(keys)
        keep = set(keys[: int(p * len(keys) + 1e-9)])
        return TemplateDb({k: v for k, v in self.templates.items() if k in keep})

    @classmethod
    def load(cls, path: str | Path) -> TemplateDb:
        data = json.loads(Path(path).read_text(encoding="utf-8"))
        if not isinstance(data, dict) or not all(isinstance(v, str) for v in data.values()):
            raise InputError(f"{path}: template file must map capability ids to strings")
        return cls(data)

    def save(self, path: str | Path) -> None:
        Path(path).write_text(json.dumps(self.templates, indent=2) + "\n", encoding="utf-8")


def _render(template: str, facts: Mapping[str, str]) -> tuple[str, tuple[str, ...]]:
    missing: list[str] = []

    def sub(m: re.Match) -> str:
        slot = m.group(1)
        if slot in facts:
            return str(facts[slot])
        missing.append(slot)
        return f"{{{slot}:unknown}}"

    return _SLOT.sub(sub, template), tuple(missing)


def render_template(tdb: TemplateDb, v: str, facts: Mapping[str, str]) -> str:
    text, missing = _render(tdb.get(v), facts)
    if missing:
        warnings.warn(
            f"template for {v!r} has unresolved slots: {', '.join(missing)}",
            UnresolvedSlotWarning,
            stacklevel=2,
        )
    return text


@dataclass(frozen=True)
class PabEntry:
    capability: str
    answer: str
    witness: Witness
    cert: Certificate
    f_snap: ForbiddenSet = ForbiddenSet()
    unresolved: tuple[str, ...] = ()


@dataclass(frozen=True)
class CasEntry:
    capability: str
    answer: str
    witness: Witness
    pab: tuple[PabEntry, ...]
    f_snap: ForbiddenSet
    cert: Certificate
    t_store: int
    emb: tuple[float, ...]
    tenant: str | None = None

    @classmethod
    def create(cls, capability: str, answer: str, witness: Witness, pab: Iterable[PabEntry],
               f_snap: ForbiddenSet, cert: Certificate, t_store: int, tenant: str | None = None) -> CasEntry:
        return cls(capability, answer, witness, tuple(pab), f_snap, cert, t_store,
                   tuple(float(x) for x in embed(answer)), tenant)


def build_pab(
    graph: Hypergraph,
    base: Iterable[str],
    base_closure: Iterable[str],
    forbidden: ForbiddenSet,
    cert_main: Certificate,
    tdb: TemplateDb,
    facts: Mapping[str, str] | None = None,
) -> tuple[PabEntry, ...]:
    """Pre-certified answers for every templated ``v`` in ``cl(A) \\ A``.

    Refuses to run on an unsafe closure.  Entries come back in node-index
    order; unresolved template slots are recorded on the entry.
    """
    a_t = frozenset(base)
    cl = frozenset(base_closure)
    if cl & forbidden.members:
        raise GateViolation("closure meets the forbidden set; no pre-answers for unsafe closures")
    facts = facts or {}
    out = []
    for v in graph.ordered(cl - a_t):
        if v in forbidden or not tdb.has(v):
            continue
        cert_v = sub_cert(graph, cert_main, v)
        w = min_witness(graph, a_t, cert_v, v)
        answer, missing = _render(tdb.get(v), facts)
        out.append(PabEntry(v, answer, w, cert_v, forbidden, missing))
    return tuple(out)


def forbidden_matches(
    entry_snap: ForbiddenSet,
    current: ForbiddenSet,
    *,
    mode: str = "strict",
    graph: Hypergraph | None = None,
    witness: Witness | None = None,
) -> bool:
    """Snapshot policy.  ``strict`` demands equal members; ``refined``
    accepts any change whose new members stay out of ``cl(W)``."""
    if mode == "strict":
        return entry_snap.members == current.members
    if mode == "refined":
        if graph is None or witness is None:
            raise InputError("refined snapshot policy needs the graph and the witness")
        added = current.members - entry_snap.members
        return not added or not (added & closure(graph, witness.members))
    raise InputError(f"unknown snapshot policy {mode!r}")


@dataclass(frozen=True)
class CasHit:
    entry_id: int
    entry: CasEntry
    similarity: float

    @property
    def answer(self) -> str:
        return self.entry.answer

    @property
    def cert(self) -> Certificate:
        return self.entry.cert


class CasStore:
    """Append-only entry log with an exact-scan cosine index.

    Writers serialize on a lock; readers take the current length as a
    snapshot and never block on writers.
    """

    def __init__(self, dim: int = DIM) -> None:
        self.dim = dim
        self._entries: list[CasEntry] = []
        self._emb = np.zeros((16, dim))
        self._by_capability: dict[str, list[int]] = {}
        self._lock = threading.Lock()

    def __len__(self) -> int:
        return len(self._entries)

    def __getitem__(self, i: int) -> CasEntry:
        return self._entries[i]

    @property
    def entries(self) -> tuple[CasEntry, ...]:
        return tuple(self._entries)

    def put(self, entry: CasEntry) -> int:
        if len(entry.emb) != self.dim:
            raise InputError(f"embedding has dimension {len(entry.emb)}, store expects {self.dim}")
        with self._lock:
            i = len(self._entries)
            if i == len(self._emb):
                grown = np.zeros((2 * i, self.dim))
                grown[:i] = self._emb
                self._emb = grown
            self._emb[i] = entry.emb
            self._by_capability.setdefault(entry.capability, []).append(i)
            self._entries.append(entry)
        return i

    def _rank(self, query_emb, ids: np.ndarray) -> list[tuple[int, float]]:
        q = np.asarray(query_emb, dtype=float)
        norm = np.linalg.norm(q)
        if norm > 0:
            q = q / norm
        sims = self._emb[ids] @ q
        order = np.lexsort((ids, -sims))
        return [(int(ids[j]), float(sims[j])) for j in order]

    def approx_filter(self, query_emb, top: int | None = None) -> list[tuple[int, CasEntry, float]]:
        """Entries by descending cosine similarity, ties by ascending id."""
        if top is not None and top < 1:
            raise InputError("top must be at least 1")
        count = len(self._entries)
        ranked = self._rank(query_emb, np.arange(count))
        if top is not None:
            ranked = ranked[:top]
        return [(i, self._entries[i], s) for i, s in ranked]

    def lookup(
        self,
        query_emb,
        held: frozenset[str] | set[str],
        forbidden: ForbiddenSet,
        *,
        capability: str | None = None,
        mode: str = "strict",
        graph: Hypergraph | None = None,
        prefilter: bool = True,
    ) -> CasHit | None:
        """First entry, in similarity order, reusable under ``held``.

        With ``capability`` set only entries answering that capability are
        considered.  ``prefilter=False`` scans in insertion order instead;
        hit/miss is the same either way.
        """
        count = len(self._entries)
        if capability is None:
            ids = np.arange(count)
        else:
            ids = np.array([i for i in self._by_capability.get(capability, ()) if i < count], dtype=int)
        if ids.size == 0:
            return None
        if prefilter:
            ranked = self._rank(query_emb, ids)
        else:
            ranked = [(int(i), float("nan")) for i in ids]
        for i, sim in ranked:
            e = self._entries[i]
            if e.witness.members <= held and forbidden_matches(
                e.f_snap, forbidden, mode=mode, graph=graph, witness=e.witness
            ):
                return CasHit(i, e, sim)
        return None

    def dump(self, path: str | Path) -> None:
        with open(path, "w", encoding="utf-8") as fh:
            for e in self._entries:
                fh.write(json.dumps(_entry_to_dict(e), sort_keys=True) + "\n")

    @classmethod
    def restore(cls, path: str | Path) -> CasStore:
        store = cls()
        with open(path, encoding="utf-8") as fh:
            for n, line in enumerate(fh, 1):
                if line.strip():
                    try:
                        store.put(_entry_from_dict(json.loads(line)))
                    except (KeyError, TypeError, json.JSONDecodeError) as exc:
                        raise InputError(f"{path}:{n}: bad CAS record: {exc}") from exc
        return store


def _fs_to_dict(f: ForbiddenSet) -> dict:
    return {"members": sorted(f.members), "version": f.version}


def _pab_to_dict(p: PabEntry) -> dict:
    return {
        "capability": p.capability,
        "answer": p.answer,
        "witness": sorted(p.witness.members),
        "cert": p.cert.to_dict(),
        "f_snap": _fs_to_dict(p.f_snap),
        "unresolved": list(p.unresolved),
    }


def _entry_to_dict(e: CasEntry) -> dict:
    return {
        "capability": e.capability,
        "answer": e.answer,
        "witness": sorted(e.witness.members),
        "pab": [_pab_to_dict(p) for p in e.pab],
        "f_snap": _fs_to_dict(e.f_snap),
        "cert": e.cert.to_dict(),
        "t_store": e.t_store,
        "emb": list(e.emb),
        "tenant": e.tenant,
    }


def _fs_from_dict(d: dict) -> ForbiddenSet:
    return ForbiddenSet(frozenset(d["members"]), d["version"])


def _entry_from_dict(d: dict) -> CasEntry:
    pab = tuple(
        PabEntry(p["capability"], p["answer"], Witness(frozenset(p["witness"])),
                 Certificate.from_dict(p["cert"]), _fs_from_dict(p["f_snap"]), tuple(p["unresolved"]))
        for p in d["pab"]
    )
    return CasEntry(
        d["capability"], d["answer"], Witness(frozenset(d["witness"])), pab,
        _fs_from_dict(d["f_snap"]), Certificate.from_dict(d["cert"]), d["t_store"],
        tuple(d["emb"]), d.get("tenant"),
    )
