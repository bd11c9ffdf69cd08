"""Best-effort reader for MultiWOZ 2.2 in its published JSON layout.

Expected layout under ``root``: ``{split}/dialogues_*.json`` and, optionally,
``dialog_acts.json``.  User turns become corpus turns; the dialogue acts of
the system reply that follows decide the outcome tokens.  Act conventions
differ between releases, so the act mapping is a parameter.
"""

from __future__ import annotations

import json
import warnings
from collections.abc import Mapping
from pathlib import Path

from .corpus import Corpus, DialogueSession, Turn
from .errors import CorpusParseError, InputError

SPLITS = {"train": "train", "dev": "dev", "validation": "dev", "test": "test"}

# act suffix -> outcome suffix; "Booking-*" acts apply to the active booking domain
DEFAULT_ACT_MAP: Mapping[str, str] = {
    "Inform": "candidates-retrieved",
    "Recommend": "candidates-retrieved",
    "Select": "candidates-retrieved",
    "OfferBooked": "booked",
    "Book": "booked",
}


class ProvenanceWarning(UserWarning):
    pass


def _read_json(path: Path):
    try:
        return json.loads(path.read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise CorpusParseError(str(path), "$", exc.msg, exc.lineno) from exc


def _outcomes(acts: Mapping, active: list[str], act_map: Mapping[str, str]) -> set[str]:
    out: set[str] = set()
    for name in acts:
        if "-" not in name:
            continue
        dom, act = name.split("-", 1)
        suffix = act_map.get(act)
        if suffix is None:
            continue
        dom = dom.lower()
        if dom == "booking":
            if suffix == "booked":
                out.update(f"{d}-booked" for d in active)
        elif dom != "general":
            out.add(f"{dom}-{suffix}")
    return out


def load_multiwoz(
    root: str | Path,
    split: str = "test",
    act_map: Mapping[str, str] = DEFAULT_ACT_MAP,
    limit: int | None = None,
) -> Corpus:
    """Read one split into a native corpus, one session per dialogue."""
    root = Path(root)
    if split not in SPLITS:
        raise InputError(f"unknown split {split!r}; expected one of {sorted(SPLITS)}")
    files = sorted((root / SPLITS[split]).glob("dialogues_*.json"))
    if not files:
        raise InputError(f"no dialogues_*.json files under {root / SPLITS[split]}")
    acts_path = root / "dialog_acts.json"
    all_acts = _read_json(acts_path) if acts_path.exists() else {}
    warnings.warn("MultiWOZ act conventions vary by release; outcome tokens are best-effort",
                  ProvenanceWarning, stacklevel=2)
    sessions = []
    for path in files:
        dialogues = _read_json(path)
        if not isinstance(dialogues, list):
            raise CorpusParseError(str(path), "$", "expected a list of dialogues")
        for di, dlg in enumerate(dialogues):
            where = f"[{di}]"
            try:
                did = dlg["dialogue_id"]
                raw_turns = dlg["turns"]
            except (KeyError, TypeError):
                raise CorpusParseError(str(path), where, "dialogue needs dialogue_id and turns") from None
            acts_for = all_acts.get(did, {})
            turns = []
            for ti, t in enumerate(raw_turns):
                if t.get("speaker") != "USER":
                    continue
                belief: dict[str, dict[str, str]] = {}
                primary = ""
                active: list[str] = []
                for fr in t.get("frames", ()):
                    state = fr.get("state") or {}
                    service = fr.get("service", "")
                    for key, vals in (state.get("slot_values") or {}).items():
                        if "-" not in key or not vals:
                            continue
                        d, s = key.split("-", 1)
                        belief.setdefault(d, {})[s] = str(vals[0])
                    intent = state.get("active_intent", "NONE")
                    if intent and intent != "NONE":
                        active.append(service)
                        if not primary:
                            req = state.get("requested_slots") or []
                            if req:
                                primary = req[0]
                            elif intent.startswith("find_"):
                                primary = f"{service}-candidates-retrieved"
                            elif intent.startswith("book_"):
                                primary = f"{service}-booked"
                reply = str(int(t.get("turn_id", ti)) + 1)
                sys_acts = (acts_for.get(reply) or {}).get("dialog_act", {})
                turns.append(Turn(len(turns), belief, frozenset(_outcomes(sys_acts, active, act_map)), primary))
            sessions.append(DialogueSession(did, tuple(turns)))
            if limit is not None and len(sessions) >= limit:
                return Corpus(tuple(sessions), {"kind": "multiwoz", "split": split})
    return Corpus(tuple(sessions), {"kind": "multiwoz", "split": split})
