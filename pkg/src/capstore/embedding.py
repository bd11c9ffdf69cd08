"""Deterministic text embedding by signed feature hashing."""

from __future__ import annotations

import hashlib
import re

import numpy as np

DIM = 64
_TOKEN = re.compile(r"\w+")


def tokenize(text: str) -> list[str]:
    return _TOKEN.findall(text.lower())


def _bucket(token: str, dim: int) -> tuple[int, float]:
    h = int.from_bytes(hashlib.blake2b(token.encode("utf-8"), digest_size=8).digest(), "little")
    return h % dim, (1.0 if (h >> 63) & 1 == 0 else -1.0)


def embed(text: str, dim: int = DIM) -> np.ndarray:
    """Unit-norm hashed bag of lowercase word tokens; empty text maps to zeros."""
    vec = np.zeros(dim)
    for tok in tokenize(text):
        i, sign = _bucket(tok, dim)
        vec[i] += sign
    norm = np.linalg.norm(vec)
    return vec / norm if norm > 0 else vec


def cosine(a, b) -> float:
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    na, nb = np.linalg.norm(a), np.linalg.norm(b)
    if na == 0 or nb == 0:
        return 0.0
    return float(np.dot(a, b) / (na * nb))
