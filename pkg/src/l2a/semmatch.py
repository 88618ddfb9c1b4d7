"""Pairing strategies: which backgrounds may serve each foreground clip.

Semantic pairing sends every class to its nearest neighbor in the class
name-embedding space (cosine similarity, ties to the lowest class id), so
a clip is only composited onto scenes from the most related other class.
Random pairing allows any ordered pair of distinct clips; intra-class
pairing stays within one class.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .tensorstore import PAIRING_MODES, SampleInfo


@dataclass(frozen=True)
class PairCandidate:
    fg_id: str
    bg_id: str
    fg_class: int
    bg_class: int


def cosine_similarity(a: np.ndarray, b: np.ndarray) -> float:
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    denom = max(float(np.linalg.norm(a) * np.linalg.norm(b)), 1e-12)
    return float(a @ b) / denom


def nearest_neighbors(embeddings: dict[int, np.ndarray]) -> dict[int, int]:
    """Most similar other class for every class; ties pick the lowest id."""
    if len(embeddings) < 2:
        raise ValueError("need at least two classes for neighbor matching")
    ids = sorted(embeddings)
    out: dict[int, int] = {}
    for c in ids:
        best_id, best_sim = -1, -np.inf
        for other in ids:  # ascending id order makes ties land on the lowest
            if other == c:
                continue
            sim = cosine_similarity(embeddings[c], embeddings[other])
            if sim > best_sim:
                best_id, best_sim = other, sim
        out[c] = best_id
    return out


def enumerate_pairs(
    samples: list[SampleInfo],
    mode: str,
    neighbor_of: dict[int, int] | None = None,
) -> list[PairCandidate]:
    """All ordered (foreground, background) candidates under a pairing mode.

    Deterministic order: sorted by (fg id, bg id).  A sample never pairs
    with itself.
    """
    if mode not in PAIRING_MODES:
        raise ValueError(f"unknown pairing mode {mode!r}")
    if mode == "semantic" and neighbor_of is None:
        raise ValueError("semantic pairing needs the class neighbor map")
    ordered = sorted(samples, key=lambda s: s.sample_id)
    out: list[PairCandidate] = []
    for fg in ordered:
        for bg in ordered:
            if fg.sample_id == bg.sample_id:
                continue
            if mode == "semantic" and bg.class_id != neighbor_of[fg.class_id]:
                continue
            if mode == "intra-class" and bg.class_id != fg.class_id:
                continue
            out.append(PairCandidate(fg.sample_id, bg.sample_id, fg.class_id, bg.class_id))
    return out


def search_space_size(
    class_counts: dict[int, int],
    mode: str,
    neighbor_of: dict[int, int] | None = None,
) -> int:
    """Closed-form candidate count, cross-checked against enumerate_pairs.

    random       N (N - 1)
    semantic     sum_c n_c * n_{neighbor(c)}
    intra-class  sum_c n_c (n_c - 1)
    """
    if mode not in PAIRING_MODES:
        raise ValueError(f"unknown pairing mode {mode!r}")
    if mode == "random":
        n = sum(class_counts.values())
        return n * (n - 1)
    if mode == "intra-class":
        return sum(n * (n - 1) for n in class_counts.values())
    if neighbor_of is None:
        raise ValueError("semantic pairing needs the class neighbor map")
    return sum(n * class_counts.get(neighbor_of[c], 0) for c, n in class_counts.items())


def sample_pairs(
    candidates: list[PairCandidate],
    batch: int,
    rng: np.random.Generator,
) -> list[PairCandidate]:
    """Uniform batch without replacement; the whole list when it is smaller."""
    if batch < 1:
        raise ValueError(f"batch must be >= 1: {batch}")
    if len(candidates) <= batch:
        return list(candidates)
    picks = rng.choice(len(candidates), size=batch, replace=False)
    return [candidates[i] for i in sorted(picks)]
