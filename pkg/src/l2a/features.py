"""Fixed (untrained) video descriptors for the selector and classifier.

A clip is summarized by uniformly subsampled frames, each pooled to a
coarse grid of per-cell channel means, plus first-order temporal
differences between consecutive pooled frames.  The concatenation is
L2-normalized.  Cheap, deterministic, and rich enough to expose both
appearance (brightness, layout) and motion.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .tensorstore import validate_video


@dataclass(frozen=True)
class FeatureSpec:
    frames: int = 8
    grid: int = 4

    def __post_init__(self):
        if self.frames < 1:
            raise ValueError(f"frames must be >= 1: {self.frames}")
        if self.grid < 1:
            raise ValueError(f"grid must be >= 1: {self.grid}")

    def dim(self, channels: int) -> int:
        per_frame = self.grid * self.grid * channels
        return (2 * self.frames - 1) * per_frame


def subsample_indices(total: int, count: int) -> np.ndarray:
    """Uniform frame picks floor(i * total / count); valid for any total >= 1."""
    if total < 1 or count < 1:
        raise ValueError(f"need total >= 1 and count >= 1, got {total}, {count}")
    return (np.arange(count) * total) // count


def pool_frame(frame: np.ndarray, grid: int) -> np.ndarray:
    """Mean over each cell of a grid x grid partition, per channel.

    Rows and columns are split with np.array_split semantics, so uneven
    sizes put the larger cells first.
    """
    h, w, c = frame.shape
    out = np.empty((grid, grid, c), dtype=np.float64)
    rows = np.array_split(np.arange(h), grid)
    cols = np.array_split(np.arange(w), grid)
    for i, ri in enumerate(rows):
        for j, cj in enumerate(cols):
            if ri.size == 0 or cj.size == 0:
                out[i, j] = 0.0
            else:
                out[i, j] = frame[np.ix_(ri, cj)].mean(axis=(0, 1))
    return out


def extract(video: np.ndarray, spec: FeatureSpec = FeatureSpec()) -> np.ndarray:
    """Descriptor: pooled subsampled frames + temporal diffs, L2-normalized.

    Length (2F - 1) * g * g * C.  The all-zero descriptor (possible only
    for an all-black still clip) is returned as-is instead of dividing
    by zero.
    """
    validate_video(video)
    t = video.shape[0]
    picks = subsample_indices(t, spec.frames)
    pooled = np.stack([pool_frame(video[i].astype(np.float64), spec.grid) for i in picks])
    diffs = pooled[1:] - pooled[:-1]
    vec = np.concatenate([pooled.reshape(-1), diffs.reshape(-1)])
    norm = np.linalg.norm(vec)
    if norm == 0.0:
        return vec
    return vec / norm


def selector_input(
    fg_feature: np.ndarray,
    fg_label: np.ndarray,
    bg_feature: np.ndarray,
    bg_label: np.ndarray,
) -> np.ndarray:
    """Concatenate [fg feature, fg label, bg feature, bg label].

    Length 2 d + 2 K for d-dim features and K classes.
    """
    parts = [
        np.asarray(fg_feature, dtype=np.float64),
        np.asarray(fg_label, dtype=np.float64),
        np.asarray(bg_feature, dtype=np.float64),
        np.asarray(bg_label, dtype=np.float64),
    ]
    if parts[0].shape != parts[2].shape:
        raise ValueError(f"feature dims differ: {parts[0].shape} vs {parts[2].shape}")
    if parts[1].shape != parts[3].shape:
        raise ValueError(f"label dims differ: {parts[1].shape} vs {parts[3].shape}")
    if any(p.ndim != 1 for p in parts):
        raise ValueError("selector input parts must be 1-D")
    return np.concatenate(parts)
