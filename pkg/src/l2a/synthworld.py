"""Procedural video benchmark with a controllable pair-compatibility axis.

Each clip shows a translucent sprite moving over a drifting sinusoidal
background: the sprite is a brightness offset riding on the scene texture,
painted so its absolute level sits a fixed contrast above its own scene
mean.  A per-clip camera-motion value in [0, 1] sets both the drift speed
and the scene brightness.  Compositing carries the sprite's absolute paint
level onto a new scene, so a sprite whose paint level sits near the target
scene's brightness fades into it, and the mixed label claims foreground
mass the pixels cannot support.  That makes pair quality a real,
measurable property with a closed-form oracle: predicted sprite-to-scene
contrast below a threshold marks the pair toxic.

Class identity is carried by the sprite's motion direction alone; the
scene texture is a classless nuisance (random orientation per clip), so a
camouflaged sprite leaves a clip with no class evidence at all.  Sprite
size is shared across classes, so every composite carries the same label
mix.  Per-pixel noise keeps small training splits noise-limited, which is
what gives composited samples their value.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, asdict
from pathlib import Path
from typing import Any

import numpy as np

from .tensorstore import (
    ClassInfo,
    DatasetManifest,
    ManifestError,
    SampleInfo,
    as_mask,
    as_video,
    save_manifest,
    write_tensor,
)

# rng lanes; numeric so seeds stay plain ints
LANE_RENDER = 1
LANE_EMBED = 2
LANE_SPLIT = 3

_VERBS = ["hop", "spin", "dash", "drift", "bounce", "slide", "zig", "weave", "pulse", "sway"]
_SCENES = ["dune", "reef", "grove", "mesa", "fjord", "steppe", "atoll", "tundra", "glade", "karst"]


@dataclass(frozen=True)
class WorldSpec:
    """Knobs of the generator; defaults define the benchmark used in tests."""

    n_classes: int = 10
    samples_per_class: int = 20
    frames: int = 8
    height: int = 20
    width: int = 20
    classes_per_family: int = 2
    embed_dim: int = 8
    embed_noise: float = 0.05
    brightness_base: float = 0.25
    brightness_slope: float = 0.26
    family_amplitude: float = 0.04
    sprite_contrast: float = 0.22
    texture_amplitude: float = 0.12
    texture_base_frequency: float = 0.06
    texture_frequency_step: float = 0.0
    pixel_noise: float = 0.06
    toxicity_threshold: float = 0.15
    drift_max: float = 1.0
    sprite_speed: float = 1.3
    sprite_sizes: tuple[int, ...] = (11,)
    val_fraction: float = 0.25
    test_fraction: float = 0.25
    seed: int = 0

    def __post_init__(self):
        if self.n_classes < 2:
            raise ValueError(f"need at least 2 classes: {self.n_classes}")
        if self.classes_per_family < 1 or self.n_classes % self.classes_per_family:
            raise ValueError("n_classes must be a multiple of classes_per_family")
        if self.samples_per_class < 2:
            raise ValueError(f"need at least 2 samples per class: {self.samples_per_class}")
        if min(self.frames, self.height, self.width) < 1:
            raise ValueError("frames, height and width must be >= 1")
        if self.embed_dim < self.n_families:
            raise ValueError(
                f"embed_dim {self.embed_dim} < number of families {self.n_families}"
            )
        if not 0.0 <= self.val_fraction < 1.0 or not 0.0 <= self.test_fraction < 1.0:
            raise ValueError("val/test fractions must lie in [0, 1)")
        if self.val_fraction + self.test_fraction >= 1.0:
            raise ValueError("val + test fractions leave no training data")
        if max(self.sprite_sizes) > min(self.height, self.width):
            raise ValueError("sprite larger than the frame")
        if min(self.texture_amplitude, self.pixel_noise, self.sprite_contrast) < 0.0:
            raise ValueError("amplitudes must be non-negative")
        if self.texture_base_frequency <= 0.0 or self.texture_frequency_step < 0.0:
            raise ValueError("texture frequencies must be positive")
        hi = self.brightness_base + self.brightness_slope + self.family_amplitude
        lo = self.brightness_base - self.family_amplitude
        if lo - self.texture_amplitude < 0.0 or hi + self.texture_amplitude > 1.0:
            raise ValueError("background brightness range leaves [0, 1]")
        if hi + self.texture_amplitude + self.sprite_contrast > 1.0:
            raise ValueError("sprite values would leave [0, 1]")

    @property
    def n_families(self) -> int:
        return self.n_classes // self.classes_per_family

    def family_of(self, class_id: int) -> int:
        return class_id // self.classes_per_family

    def family_bases(self) -> np.ndarray:
        if self.n_families == 1:
            return np.zeros(1)
        return np.linspace(-self.family_amplitude, self.family_amplitude, self.n_families)

    def sprite_size(self, class_id: int) -> int:
        return self.sprite_sizes[class_id % len(self.sprite_sizes)]

    def motion_angle(self, class_id: int) -> float:
        """The class cue: each class moves its sprite along its own heading."""
        return 2.0 * math.pi * class_id / self.n_classes

    def texture_frequency(self, class_id: int) -> float:
        return self.texture_base_frequency + self.texture_frequency_step * class_id

    def class_name(self, class_id: int) -> str:
        verb = _VERBS[class_id % len(_VERBS)]
        scene = _SCENES[(class_id // len(_VERBS)) % len(_SCENES)]
        return f"{verb}-{scene}" if class_id >= len(_VERBS) else f"{verb}-{_SCENES[class_id]}"


_SPEC_KEYS = set(WorldSpec.__dataclass_fields__)


def world_spec_from_dict(data: dict[str, Any]) -> WorldSpec:
    if not isinstance(data, dict):
        raise ValueError("world spec must be a JSON object")
    unknown = set(data) - _SPEC_KEYS
    if unknown:
        raise ValueError(f"unknown world spec keys: {sorted(unknown)}")
    if "sprite_sizes" in data and isinstance(data["sprite_sizes"], list):
        data = dict(data, sprite_sizes=tuple(data["sprite_sizes"]))
    return WorldSpec(**data)


def scene_brightness(spec_or_meta, class_id: int, camera_motion: float) -> float:
    """Mean background level: base + slope * camera + the family's offset."""
    if isinstance(spec_or_meta, WorldSpec):
        base = spec_or_meta.brightness_base
        slope = spec_or_meta.brightness_slope
        fam = spec_or_meta.family_bases()[spec_or_meta.family_of(class_id)]
    else:
        base = spec_or_meta["brightness_base"]
        slope = spec_or_meta["brightness_slope"]
        fam = spec_or_meta["family_bases"][spec_or_meta["class_family"][str(class_id)]]
    return base + slope * camera_motion + fam


def sprite_value(spec_or_meta, class_id: int, camera_motion: float) -> float:
    """Sprite paint level: scene mean plus a fixed contrast (texture rides on top)."""
    mu = scene_brightness(spec_or_meta, class_id, camera_motion)
    if isinstance(spec_or_meta, WorldSpec):
        contrast = spec_or_meta.sprite_contrast
    else:
        contrast = spec_or_meta["sprite_contrast"]
    return mu + contrast


def render_sample(
    spec: WorldSpec,
    class_id: int,
    rng: np.random.Generator,
    camera_motion: float | None = None,
) -> tuple[np.ndarray, np.ndarray, np.ndarray, float]:
    """One clip: (video, union mask, actor-only mask, camera motion).

    Draw order from ``rng`` is part of the format: camera motion (only when
    not supplied), drift angle, texture orientation, the sprite's start
    position (two uniforms), then one pixel-noise field per frame.  The
    texture's orientation is a per-clip draw, so the scene carries no class
    information; only the sprite's heading does.
    """
    t, h, w = spec.frames, spec.height, spec.width
    cam = float(rng.uniform()) if camera_motion is None else float(camera_motion)
    drift_angle = float(rng.uniform(0.0, 2.0 * math.pi))
    orient = float(rng.uniform(0.0, math.pi))
    start_y = float(rng.uniform(0.0, h))
    start_x = float(rng.uniform(0.0, w))

    mu = scene_brightness(spec, class_id, cam)
    paint = sprite_value(spec, class_id, cam)
    freq = spec.texture_frequency(class_id)
    drift = cam * spec.drift_max * np.array([math.sin(drift_angle), math.cos(drift_angle)])
    angle = spec.motion_angle(class_id)
    sprite_v = spec.sprite_speed * np.array([math.sin(angle), math.cos(angle)]) + drift
    oy, ox = math.sin(orient), math.cos(orient)

    size = spec.sprite_size(class_id)
    ys, xs = np.meshgrid(np.arange(h, dtype=np.float64), np.arange(w, dtype=np.float64), indexing="ij")

    video = np.empty((t, h, w, 1), dtype=np.float32)
    mask = np.zeros((t, h, w), dtype=np.uint8)
    actor = np.zeros((t, h, w), dtype=np.uint8)
    for ti in range(t):
        sy = ys - drift[0] * ti
        sx = xs - drift[1] * ti
        tex = spec.texture_amplitude * np.sin(2.0 * math.pi * freq * (sx * ox + sy * oy))
        frame = mu + tex

        cy = start_y + sprite_v[0] * ti
        cx = start_x + sprite_v[1] * ti
        rows = (np.round(cy) + np.arange(size) - size // 2).astype(int) % h
        cols = (np.round(cx) + np.arange(size) - size // 2).astype(int) % w
        actor[ti][np.ix_(rows, cols)] = 1
        # A carried 2x2 object rides a fixed diagonal offset from the actor.
        orows = (rows[0] + size + np.arange(2)) % h
        ocols = (cols[0] + size + np.arange(2)) % w
        mask[ti][np.ix_(rows, cols)] = 1
        mask[ti][np.ix_(orows, ocols)] = 1
        # The sprite is translucent: a brightness offset over the textured
        # scene, so its absolute level is the paint level plus texture.
        frame = frame[..., None] + (paint - mu) * mask[ti][..., None]
        if spec.pixel_noise > 0.0:
            frame = frame + spec.pixel_noise * rng.standard_normal((h, w, 1))
        video[ti] = np.clip(frame, 0.0, 1.0)
    return as_video(video), as_mask(mask), as_mask(actor), cam


def class_embeddings(spec: WorldSpec) -> dict[int, np.ndarray]:
    """Family-centroid directions plus per-class noise.

    Classes sharing a family come out as mutual nearest neighbors under
    cosine similarity; generation asserts that structure.
    """
    rng = np.random.default_rng([spec.seed, LANE_EMBED])
    out: dict[int, np.ndarray] = {}
    for c in range(spec.n_classes):
        centroid = np.zeros(spec.embed_dim)
        centroid[spec.family_of(c)] = 1.0
        vec = centroid + spec.embed_noise * rng.normal(size=spec.embed_dim)
        out[c] = vec / np.linalg.norm(vec)
    return out


def _split_counts(n: int, val_fraction: float, test_fraction: float) -> tuple[int, int, int]:
    n_test = int(round(n * test_fraction))
    n_val = int(round(n * val_fraction))
    n_train = n - n_val - n_test
    if n_train < 1:
        raise ValueError(f"splits leave no training samples for a class of {n}")
    return n_train, n_val, n_test


def _split_pattern(n_train: int, n_val: int, n_test: int) -> list[str]:
    """Interleave split tags over the per-class camera-motion grid.

    Clip i of every class sits in motion slot i, so handing out tags by a
    shared slot pattern gives each split of each class the same motion
    spectrum.  Largest-remainder rounding keeps the interleave even for
    any split sizes.
    """
    counts = (n_train, n_val, n_test)
    tags = ("train-labeled", "val", "test")
    n = sum(counts)
    taken = [0, 0, 0]
    out = []
    for s in range(n):
        deficits = [c * (s + 1) / n - t for c, t in zip(counts, taken)]
        k = deficits.index(max(deficits))
        taken[k] += 1
        out.append(tags[k])
    return out


def generate_world(spec: WorldSpec, out_dir: str | Path) -> DatasetManifest:
    """Render every clip, write tensors and the manifest; fully seeded.

    Camera motion is stratified per class over a shared slot grid and the
    split tags interleave over that grid, so train, val and test of every
    class cover the same motion (and so brightness) spectrum.  Two calls
    with the same spec produce byte-identical trees.
    """
    from .semmatch import nearest_neighbors  # local import avoids a cycle at module load

    out_dir = Path(out_dir)
    (out_dir / "clips").mkdir(parents=True, exist_ok=True)

    embeddings = class_embeddings(spec)
    neighbor = nearest_neighbors(embeddings)
    if spec.classes_per_family > 1:
        for c, n in neighbor.items():
            if spec.family_of(n) != spec.family_of(c):
                raise RuntimeError(
                    f"embedding noise broke family structure: {c} -> {n}; change the seed"
                )

    classes = [
        ClassInfo(c, spec.class_name(c), tuple(float(v) for v in embeddings[c]))
        for c in range(spec.n_classes)
    ]

    n_train, n_val, n_test = _split_counts(
        spec.samples_per_class, spec.val_fraction, spec.test_fraction
    )
    tags = _split_pattern(n_train, n_val, n_test)
    samples: list[SampleInfo] = []
    for c in range(spec.n_classes):
        for i in range(spec.samples_per_class):
            rng = np.random.default_rng([spec.seed, LANE_RENDER, c, i])
            # Camera motion is stratified: clip i jitters inside slot i of a
            # shared grid, so every class spans the same motion spectrum and
            # every cross-class pairing sees the same motion differences.
            cam = (i + float(rng.uniform())) / spec.samples_per_class
            video, mask, actor, cam = render_sample(spec, c, rng, camera_motion=cam)
            sid = f"c{c:02d}s{i:03d}"
            vp, mp, ap = (f"clips/{sid}_{k}.ten" for k in ("video", "mask", "actor"))
            write_tensor(out_dir / vp, video)
            write_tensor(out_dir / mp, mask)
            write_tensor(out_dir / ap, actor)
            samples.append(
                SampleInfo(
                    sample_id=sid,
                    class_id=c,
                    video_path=vp,
                    mask_path=mp,
                    split=tags[i],
                    actor_mask_path=ap,
                    camera_motion=round(cam, 12),
                )
            )

    world_meta: dict[str, Any] = {
        "brightness_base": spec.brightness_base,
        "brightness_slope": spec.brightness_slope,
        "family_bases": [float(v) for v in spec.family_bases()],
        "class_family": {str(c): spec.family_of(c) for c in range(spec.n_classes)},
        "sprite_contrast": spec.sprite_contrast,
        "texture_amplitude": spec.texture_amplitude,
        "toxicity_threshold": spec.toxicity_threshold,
        "spec": {k: (list(v) if isinstance(v, tuple) else v) for k, v in asdict(spec).items()},
    }
    manifest = DatasetManifest(classes=classes, samples=samples, world=world_meta, root=out_dir)
    save_manifest(manifest, out_dir / "manifest.json")
    return manifest


@dataclass(frozen=True)
class PairQuality:
    toxic: bool
    predicted_contrast: float
    fg_scene_brightness: float
    bg_scene_brightness: float
    sprite_paint: float


def pair_quality(manifest: DatasetManifest, fg_id: str, bg_id: str) -> PairQuality:
    """Closed-form compatibility verdict for compositing fg onto bg's scene.

    Predicts the sprite-to-scene contrast from stored camera-motion values
    and world constants; below the world's threshold the sprite would sink
    into the new background and the pair is toxic.
    """
    meta = manifest.world
    if not meta or "brightness_base" not in meta:
        raise ManifestError("manifest carries no world metadata; pair quality undefined")
    fg = manifest.sample_by_id(fg_id)
    bg = manifest.sample_by_id(bg_id)
    if fg.camera_motion is None or bg.camera_motion is None:
        raise ManifestError("samples lack camera_motion; pair quality undefined")
    paint = sprite_value(meta, fg.class_id, fg.camera_motion)
    mu_bg = scene_brightness(meta, bg.class_id, bg.camera_motion)
    contrast = abs(paint - mu_bg)
    return PairQuality(
        toxic=bool(contrast < meta["toxicity_threshold"]),
        predicted_contrast=float(contrast),
        fg_scene_brightness=float(scene_brightness(meta, fg.class_id, fg.camera_motion)),
        bg_scene_brightness=float(mu_bg),
        sprite_paint=float(paint),
    )


def toxic_fraction(manifest: DatasetManifest, pairs) -> float:
    """Share of toxic pairs in an iterable of (fg_id, bg_id) or candidates."""
    total = 0
    bad = 0
    for p in pairs:
        fg_id, bg_id = (p.fg_id, p.bg_id) if hasattr(p, "fg_id") else p
        total += 1
        bad += pair_quality(manifest, fg_id, bg_id).toxic
    if total == 0:
        raise ValueError("no pairs given")
    return bad / total


def split_world(
    manifest: DatasetManifest, labeled_fraction: float, seed: int
) -> DatasetManifest:
    """Retag part of each class's train-labeled clips as train-unlabeled.

    Keeps round(fraction * n) per class, at least 1.  Val and test rows
    are untouched.  Deterministic in (manifest order, seed).
    """
    if not 0.0 < labeled_fraction <= 1.0:
        raise ValueError(f"labeled_fraction out of range: {labeled_fraction}")
    new_samples: list[SampleInfo] = list(manifest.samples)
    for c in sorted({s.class_id for s in manifest.samples}):
        rows = [
            (i, s)
            for i, s in enumerate(new_samples)
            if s.class_id == c and s.split == "train-labeled"
        ]
        if not rows:
            continue
        keep = max(1, int(round(labeled_fraction * len(rows))))
        order = np.random.default_rng([seed, LANE_SPLIT, c]).permutation(len(rows))
        for pos in order[keep:]:
            i, s = rows[int(pos)]
            new_samples[i] = SampleInfo(
                sample_id=s.sample_id,
                class_id=s.class_id,
                video_path=s.video_path,
                mask_path=s.mask_path,
                split="train-unlabeled",
                actor_mask_path=s.actor_mask_path,
                camera_motion=s.camera_motion,
            )
    return DatasetManifest(
        classes=manifest.classes,
        samples=new_samples,
        world=manifest.world,
        root=manifest.root,
    )
