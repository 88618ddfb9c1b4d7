"""Cached access to one dataset: tensors, features, labels, composites.

Everything downstream (selector training, the experiment pipeline) goes
through a SampleBank so clips are read once, per-clip descriptors and
filled background scenes are computed once, and pseudo-label overrides
are honored in one place.
"""

from __future__ import annotations

import numpy as np

from .compositing import CompositeResult, composite_pair
from .features import FeatureSpec, extract, selector_input
from .tensorstore import CompositingFlags, DatasetManifest, read_tensor


class SampleBank:
    def __init__(
        self,
        manifest: DatasetManifest,
        feature_spec: FeatureSpec = FeatureSpec(),
        flags: CompositingFlags = CompositingFlags(),
        label_overrides: dict[str, np.ndarray] | None = None,
    ):
        self.manifest = manifest
        self.feature_spec = feature_spec
        self.flags = flags
        self.class_order = sorted(c.class_id for c in manifest.classes)
        self._class_index = {c: i for i, c in enumerate(self.class_order)}
        self.label_overrides = dict(label_overrides or {})
        self._videos: dict[str, np.ndarray] = {}
        self._masks: dict[str, np.ndarray] = {}
        self._actors: dict[str, np.ndarray] = {}
        self._scenes: dict[str, np.ndarray] = {}
        self._features: dict[str, np.ndarray] = {}
        self._composites: dict[tuple[str, str], tuple[np.ndarray, np.ndarray, float]] = {}

    @property
    def n_classes(self) -> int:
        return len(self.class_order)

    def one_hot(self, class_id: int) -> np.ndarray:
        vec = np.zeros(self.n_classes)
        vec[self._class_index[class_id]] = 1.0
        return vec

    def label_of(self, sample_id: str) -> np.ndarray:
        override = self.label_overrides.get(sample_id)
        if override is not None:
            return np.asarray(override, dtype=np.float64)
        return self.one_hot(self.manifest.sample_by_id(sample_id).class_id)

    def video(self, sample_id: str) -> np.ndarray:
        if sample_id not in self._videos:
            s = self.manifest.sample_by_id(sample_id)
            self._videos[sample_id] = read_tensor(self.manifest.resolve(s.video_path))
        return self._videos[sample_id]

    def mask(self, sample_id: str) -> np.ndarray:
        if sample_id not in self._masks:
            s = self.manifest.sample_by_id(sample_id)
            self._masks[sample_id] = read_tensor(self.manifest.resolve(s.mask_path))
        return self._masks[sample_id]

    def actor_mask(self, sample_id: str) -> np.ndarray | None:
        s = self.manifest.sample_by_id(sample_id)
        if s.actor_mask_path is None:
            return None
        if sample_id not in self._actors:
            self._actors[sample_id] = read_tensor(self.manifest.resolve(s.actor_mask_path))
        return self._actors[sample_id]

    def scene(self, sample_id: str) -> np.ndarray:
        """The clip as a background: its own actor removed and filled in."""
        if sample_id not in self._scenes:
            from .compositing import remove_and_fill

            if self.flags.inpaint:
                self._scenes[sample_id] = remove_and_fill(
                    self.video(sample_id), self.mask(sample_id)
                )
            else:
                self._scenes[sample_id] = self.video(sample_id)
        return self._scenes[sample_id]

    def feature(self, sample_id: str) -> np.ndarray:
        if sample_id not in self._features:
            self._features[sample_id] = extract(self.video(sample_id), self.feature_spec)
        return self._features[sample_id]

    def composite(self, fg_id: str, bg_id: str) -> CompositeResult:
        return composite_pair(
            self.video(fg_id),
            self.mask(fg_id),
            self.label_of(fg_id),
            self.video(bg_id),
            self.mask(bg_id),
            self.label_of(bg_id),
            segmentation=self.flags.segmentation,
            objects=self.flags.objects,
            actor_mask=self.actor_mask(fg_id),
            prepared_background=self.scene(bg_id),
        )

    def composite_feature_label(
        self, fg_id: str, bg_id: str
    ) -> tuple[np.ndarray, np.ndarray, float]:
        """(descriptor, mixed label, mixing weight) for a pair, cached.

        The cache key ignores label overrides changing between calls; banks
        with pseudo-labels are built fresh after relabeling, never mutated.
        """
        key = (fg_id, bg_id)
        if key not in self._composites:
            res = self.composite(fg_id, bg_id)
            feat = extract(res.video, self.feature_spec)
            self._composites[key] = (feat, res.label, res.weight)
        return self._composites[key]

    def selector_vec(self, fg_id: str, bg_id: str) -> np.ndarray:
        return selector_input(
            self.feature(fg_id),
            self.label_of(fg_id),
            self.feature(bg_id),
            self.label_of(bg_id),
        )

    def split_matrices(self, split: str) -> tuple[np.ndarray, np.ndarray, list[str]]:
        """Descriptor matrix, label matrix and ids for one split, id-sorted."""
        rows = sorted(self.manifest.samples_in_split(split), key=lambda s: s.sample_id)
        if not rows:
            d = self.feature_spec.dim(1)
            return np.zeros((0, d)), np.zeros((0, self.n_classes)), []
        x = np.stack([self.feature(s.sample_id) for s in rows])
        y = np.stack([self.label_of(s.sample_id) for s in rows])
        return x, y, [s.sample_id for s in rows]

    def with_overrides(self, label_overrides: dict[str, np.ndarray]) -> "SampleBank":
        """A sibling bank sharing tensor caches but with new soft labels."""
        twin = SampleBank(self.manifest, self.feature_spec, self.flags, label_overrides)
        twin._videos = self._videos
        twin._masks = self._masks
        twin._actors = self._actors
        twin._scenes = self._scenes
        twin._features = self._features
        return twin
