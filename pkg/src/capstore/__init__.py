"""Certified answer reuse over capability hypergraphs."""

from __future__ import annotations

from .errors import (
    ConfigError, CorpusParseError, GateViolation, InputError, MissingTemplate, NotDerivable,
    RefusalError, UnknownCapability,
)
from .hypergraph import (
    ArcKind, ForbiddenSet, Hyperarc, Hypergraph, closure, closure_unit, compositionality_defect,
    emergent, greedy_topk_gains, is_safe, minimal_unsafe_antichain_bruteforce, near_miss_frontier,
)
from .provenance import Certificate, Witness, check_certificate, derive_certificate, min_witness, sub_cert
from .session import CostModel, ServedBy, SessionState, ontological_class_count, session_init
from .store import CasEntry, CasStore, PabEntry, TemplateDb, build_pab, render_template

__version__ = "0.1.0"

__all__ = [
    "ArcKind", "CasEntry", "CasStore", "Certificate", "ConfigError", "CorpusParseError", "CostModel",
    "ForbiddenSet", "GateViolation", "Hyperarc", "Hypergraph", "InputError", "MissingTemplate",
    "NotDerivable", "PabEntry", "RefusalError", "ServedBy", "SessionState", "TemplateDb",
    "UnknownCapability", "Witness", "build_pab", "check_certificate", "closure", "closure_unit",
    "compositionality_defect", "derive_certificate", "emergent", "greedy_topk_gains", "is_safe",
    "min_witness", "minimal_unsafe_antichain_bruteforce", "near_miss_frontier",
    "ontological_class_count", "render_template", "session_init", "sub_cert",
]
