"""On-disk tensor containers, dataset manifests and run configuration.

The tensor container is a deliberately tiny self-describing format: one
UTF-8 JSON header line ``{"shape": [...], "dtype": "f32"|"u8"}``, a newline,
then the raw little-endian payload in row-major order.  Videos are stored as
f32 in [0, 1] with shape (T, H, W, C); masks as u8 in {0, 1} with shape
(T, H, W).  Any other rank is treated as a raw numeric tensor (used for
model checkpoints) and only checked for finiteness.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field, asdict
from pathlib import Path
from typing import Any, Sequence

import numpy as np

VIDEO_DTYPE = np.float32
MASK_DTYPE = np.uint8

SPLIT_TAGS = ("train-labeled", "train-unlabeled", "val", "test")

PAIRING_MODES = ("semantic", "random", "intra-class")
SETTINGS = ("full", "semi", "fewshot")
REWARD_SIGN_MODES = ("improvement", "literal")
DELTA_UPDATE_MODES = ("normalized", "literal")


class TensorFormatError(ValueError):
    """Malformed container file or tensor outside its declared domain."""


class ManifestError(ValueError):
    """Dataset manifest violates the documented schema."""


class ConfigError(ValueError):
    """Run configuration violates the documented schema or value ranges."""


# ---------------------------------------------------------------------------
# Tensor validation
# ---------------------------------------------------------------------------

def validate_video(frames: np.ndarray) -> np.ndarray:
    """Check a (T, H, W, C) float32 video with values in [0, 1]."""
    if frames.ndim != 4:
        raise TensorFormatError(f"video must be 4-D (T,H,W,C), got shape {frames.shape}")
    if frames.dtype != VIDEO_DTYPE:
        raise TensorFormatError(f"video dtype must be float32, got {frames.dtype}")
    if any(s < 1 for s in frames.shape):
        raise TensorFormatError(f"video dimensions must be >= 1, got shape {frames.shape}")
    if not np.all(np.isfinite(frames)):
        raise TensorFormatError("video contains non-finite values")
    if frames.min() < 0.0 or frames.max() > 1.0:
        raise TensorFormatError("video values outside [0, 1]")
    return frames


def validate_mask(bits: np.ndarray, video_shape: Sequence[int] | None = None) -> np.ndarray:
    """Check a (T, H, W) uint8 mask with values in {0, 1}."""
    if bits.ndim != 3:
        raise TensorFormatError(f"mask must be 3-D (T,H,W), got shape {bits.shape}")
    if bits.dtype != MASK_DTYPE:
        raise TensorFormatError(f"mask dtype must be uint8, got {bits.dtype}")
    if any(s < 1 for s in bits.shape):
        raise TensorFormatError(f"mask dimensions must be >= 1, got shape {bits.shape}")
    if not np.isin(bits, (0, 1)).all():
        raise TensorFormatError("mask values outside {0, 1}")
    if video_shape is not None and tuple(bits.shape) != tuple(video_shape[:3]):
        raise TensorFormatError(
            f"mask shape {bits.shape} does not match video (T,H,W) {tuple(video_shape[:3])}"
        )
    return bits


def as_video(frames: np.ndarray) -> np.ndarray:
    return validate_video(np.ascontiguousarray(frames, dtype=VIDEO_DTYPE))


def as_mask(bits: np.ndarray) -> np.ndarray:
    return validate_mask(np.ascontiguousarray(bits, dtype=MASK_DTYPE))


def _validate_domain(arr: np.ndarray) -> np.ndarray:
    """Dispatch on (dtype, rank): 4-D f32 video, 3-D u8 mask, anything else raw."""
    if arr.dtype == VIDEO_DTYPE and arr.ndim == 4:
        return validate_video(arr)
    if arr.dtype == MASK_DTYPE and arr.ndim == 3:
        return validate_mask(arr)
    if not np.all(np.isfinite(arr.astype(np.float64, copy=False))):
        raise TensorFormatError("tensor contains non-finite values")
    return arr


# ---------------------------------------------------------------------------
# Tensor container I/O
# ---------------------------------------------------------------------------

_DTYPE_TAGS = {"f32": np.dtype("<f4"), "u8": np.dtype("u1")}


def write_tensor(path: str | Path, tensor: np.ndarray) -> None:
    """Write a tensor as header line + raw little-endian payload.

    Round-trips bit-exactly: ``read_tensor(p) == tensor`` after
    ``write_tensor(p, tensor)``.
    """
    arr = np.ascontiguousarray(tensor)
    if arr.dtype == np.uint8:
        tag = "u8"
    elif arr.dtype == np.float32:
        tag = "f32"
    else:
        raise TensorFormatError(f"unsupported dtype {arr.dtype}; use float32 or uint8")
    _validate_domain(arr)
    header = json.dumps({"shape": list(arr.shape), "dtype": tag}, separators=(",", ":"))
    payload = arr.astype(_DTYPE_TAGS[tag], copy=False).tobytes(order="C")
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "wb") as fh:
        fh.write(header.encode("utf-8"))
        fh.write(b"\n")
        fh.write(payload)


def read_tensor(path: str | Path) -> np.ndarray:
    """Exact inverse of :func:`write_tensor`."""
    with open(path, "rb") as fh:
        header_line = fh.readline()
        payload = fh.read()
    try:
        header = json.loads(header_line.decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise TensorFormatError(f"malformed header in {path}: {exc}") from exc
    if not isinstance(header, dict) or set(header) != {"shape", "dtype"}:
        raise TensorFormatError(f"header must have exactly 'shape' and 'dtype' keys: {header!r}")
    shape = header["shape"]
    tag = header["dtype"]
    if tag not in _DTYPE_TAGS:
        raise TensorFormatError(f"unknown dtype tag {tag!r}")
    if (
        not isinstance(shape, list)
        or not shape
        or not all(isinstance(s, int) and s >= 1 for s in shape)
    ):
        raise TensorFormatError(f"bad shape in header: {shape!r}")
    dtype = _DTYPE_TAGS[tag]
    expected = int(np.prod(shape)) * dtype.itemsize
    if len(payload) != expected:
        raise TensorFormatError(
            f"payload is {len(payload)} bytes, expected {expected} for shape {shape}"
        )
    arr = np.frombuffer(payload, dtype=dtype).reshape(shape)
    if tag == "f32":
        arr = arr.astype(np.float32, copy=True)
    else:
        arr = arr.astype(np.uint8, copy=True)
    return _validate_domain(arr)


# ---------------------------------------------------------------------------
# Dataset manifest
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class ClassInfo:
    class_id: int
    name: str
    embedding: tuple[float, ...]


@dataclass(frozen=True)
class SampleInfo:
    sample_id: str
    class_id: int
    video_path: str
    mask_path: str
    split: str
    actor_mask_path: str | None = None
    camera_motion: float | None = None


@dataclass
class DatasetManifest:
    classes: list[ClassInfo]
    samples: list[SampleInfo]
    world: dict[str, Any] | None = None
    root: Path | None = None

    def class_ids(self) -> list[int]:
        return [c.class_id for c in self.classes]

    def class_by_id(self, class_id: int) -> ClassInfo:
        for c in self.classes:
            if c.class_id == class_id:
                return c
        raise ManifestError(f"unknown class id {class_id}")

    def sample_by_id(self, sample_id: str) -> SampleInfo:
        if not hasattr(self, "_index") or len(self._index) != len(self.samples):
            self._index = {s.sample_id: s for s in self.samples}
        try:
            return self._index[sample_id]
        except KeyError:
            raise ManifestError(f"unknown sample id {sample_id!r}") from None

    def samples_in_split(self, split: str) -> list[SampleInfo]:
        return [s for s in self.samples if s.split == split]

    def samples_of_class(self, class_id: int, split: str | None = None) -> list[SampleInfo]:
        return [
            s
            for s in self.samples
            if s.class_id == class_id and (split is None or s.split == split)
        ]

    def embeddings(self) -> dict[int, np.ndarray]:
        return {c.class_id: np.asarray(c.embedding, dtype=np.float64) for c in self.classes}

    def resolve(self, relpath: str) -> Path:
        if self.root is None:
            return Path(relpath)
        return self.root / relpath


_SAMPLE_KEYS = {"id", "class", "video", "mask", "split", "actor_mask", "camera_motion"}
_CLASS_KEYS = {"id", "name", "embedding"}


def manifest_from_dict(data: dict[str, Any], root: Path | None = None) -> DatasetManifest:
    if not isinstance(data, dict):
        raise ManifestError("manifest must be a JSON object")
    unknown = set(data) - {"classes", "samples", "world"}
    if unknown:
        raise ManifestError(f"unknown manifest keys: {sorted(unknown)}")
    if "classes" not in data or "samples" not in data:
        raise ManifestError("manifest requires 'classes' and 'samples'")

    classes: list[ClassInfo] = []
    seen_class_ids: set[int] = set()
    emb_dim: int | None = None
    for entry in data["classes"]:
        extra = set(entry) - _CLASS_KEYS
        if extra or not _CLASS_KEYS <= set(entry):
            raise ManifestError(f"class entry must have keys {sorted(_CLASS_KEYS)}: {entry!r}")
        cid = entry["id"]
        if not isinstance(cid, int):
            raise ManifestError(f"class id must be an integer: {cid!r}")
        if cid in seen_class_ids:
            raise ManifestError(f"duplicate class id {cid}")
        seen_class_ids.add(cid)
        emb = entry["embedding"]
        if not isinstance(emb, list) or not emb:
            raise ManifestError(f"class {cid} embedding must be a non-empty list")
        if not all(isinstance(v, (int, float)) and math.isfinite(v) for v in emb):
            raise ManifestError(f"class {cid} embedding must be finite numbers")
        if emb_dim is None:
            emb_dim = len(emb)
        elif len(emb) != emb_dim:
            raise ManifestError("class embeddings must share one dimension")
        classes.append(ClassInfo(cid, str(entry["name"]), tuple(float(v) for v in emb)))

    samples: list[SampleInfo] = []
    seen_sample_ids: set[str] = set()
    referenced: set[int] = set()
    for entry in data["samples"]:
        keys = set(entry)
        if not {"id", "class", "video", "mask", "split"} <= keys or keys - _SAMPLE_KEYS:
            raise ManifestError(f"bad sample entry keys: {sorted(keys)}")
        sid = entry["id"]
        if not isinstance(sid, str) or not sid:
            raise ManifestError(f"sample id must be a non-empty string: {sid!r}")
        if sid in seen_sample_ids:
            raise ManifestError(f"duplicate sample id {sid!r}")
        seen_sample_ids.add(sid)
        cid = entry["class"]
        if cid not in seen_class_ids:
            raise ManifestError(f"sample {sid!r} references unknown class {cid!r}")
        split = entry["split"]
        if split not in SPLIT_TAGS:
            raise ManifestError(f"sample {sid!r} has unknown split tag {split!r}")
        cam = entry.get("camera_motion")
        if cam is not None and not (isinstance(cam, (int, float)) and math.isfinite(cam)):
            raise ManifestError(f"sample {sid!r} camera_motion must be finite")
        referenced.add(cid)
        samples.append(
            SampleInfo(
                sample_id=sid,
                class_id=cid,
                video_path=str(entry["video"]),
                mask_path=str(entry["mask"]),
                split=split,
                actor_mask_path=entry.get("actor_mask"),
                camera_motion=None if cam is None else float(cam),
            )
        )

    orphans = seen_class_ids - referenced
    if orphans:
        raise ManifestError(f"classes with zero samples: {sorted(orphans)}")

    world = data.get("world")
    if world is not None and not isinstance(world, dict):
        raise ManifestError("world metadata must be an object")
    return DatasetManifest(classes=classes, samples=samples, world=world, root=root)


def manifest_to_dict(manifest: DatasetManifest) -> dict[str, Any]:
    classes = [
        {"id": c.class_id, "name": c.name, "embedding": list(c.embedding)}
        for c in manifest.classes
    ]
    samples = []
    for s in manifest.samples:
        entry: dict[str, Any] = {
            "id": s.sample_id,
            "class": s.class_id,
            "video": s.video_path,
            "mask": s.mask_path,
            "split": s.split,
        }
        if s.actor_mask_path is not None:
            entry["actor_mask"] = s.actor_mask_path
        if s.camera_motion is not None:
            entry["camera_motion"] = s.camera_motion
        samples.append(entry)
    out: dict[str, Any] = {"classes": classes, "samples": samples}
    if manifest.world is not None:
        out["world"] = manifest.world
    return out


def load_manifest(path: str | Path) -> DatasetManifest:
    """Load and validate a manifest JSON file; paths resolve against its directory."""
    path = Path(path)
    if not path.exists():
        raise ManifestError(f"manifest file not found: {path}")
    with open(path, "r", encoding="utf-8") as fh:
        try:
            data = json.load(fh)
        except json.JSONDecodeError as exc:
            raise ManifestError(f"manifest is not valid JSON: {exc}") from exc
    return manifest_from_dict(data, root=path.parent)


def save_manifest(manifest: DatasetManifest, path: str | Path) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(manifest_to_dict(manifest), fh, sort_keys=True, indent=1)
        fh.write("\n")


# ---------------------------------------------------------------------------
# Run configuration
# ---------------------------------------------------------------------------

@dataclass
class OptimizerConfig:
    lr0: float = 0.1
    momentum: float = 0.9
    weight_decay: float = 0.001
    batch_size: int = 8
    epochs: int = 60

    def validate(self) -> None:
        if not 0.0 < self.lr0 <= 100.0:
            raise ConfigError(f"lr0 out of range: {self.lr0}")
        if not 0.0 <= self.momentum < 1.0:
            raise ConfigError(f"momentum out of range: {self.momentum}")
        if not 0.0 <= self.weight_decay < 1.0:
            raise ConfigError(f"weight_decay out of range: {self.weight_decay}")
        if self.batch_size < 1:
            raise ConfigError(f"batch_size must be >= 1: {self.batch_size}")
        if self.epochs < 0:
            raise ConfigError(f"epochs must be >= 0: {self.epochs}")


@dataclass
class SelectorConfig:
    window: int = 5
    omega_min: float = 0.6
    budget: int | None = None
    reward_sign: str = "improvement"
    delta_update: str = "normalized"
    episodes: int = 500
    learning_rate: float = 0.01
    pair_batch: int = 16
    hidden: tuple[int, ...] = (128, 64, 32)
    classifier_lr: float = 0.05
    classifier_steps: int = 1
    warm_epochs: int = 10

    def validate(self) -> None:
        if self.window < 1:
            raise ConfigError(f"selector window must be >= 1: {self.window}")
        if not 0.0 <= self.omega_min <= 1.0:
            raise ConfigError(f"omega_min out of range: {self.omega_min}")
        if self.budget is not None and self.budget < 0:
            raise ConfigError(f"budget must be >= 0: {self.budget}")
        if self.reward_sign not in REWARD_SIGN_MODES:
            raise ConfigError(f"unknown reward_sign mode {self.reward_sign!r}")
        if self.delta_update not in DELTA_UPDATE_MODES:
            raise ConfigError(f"unknown delta_update mode {self.delta_update!r}")
        if self.episodes < 0:
            raise ConfigError(f"episodes must be >= 0: {self.episodes}")
        if not 0.0 <= self.learning_rate <= 100.0:
            raise ConfigError(f"selector learning_rate out of range: {self.learning_rate}")
        if self.pair_batch < 1:
            raise ConfigError(f"pair_batch must be >= 1: {self.pair_batch}")
        if not all(isinstance(h, int) and h >= 1 for h in self.hidden):
            raise ConfigError(f"hidden sizes must be positive integers: {self.hidden}")
        if self.classifier_lr <= 0:
            raise ConfigError(f"classifier_lr must be > 0: {self.classifier_lr}")
        if self.classifier_steps < 1:
            raise ConfigError(f"classifier_steps must be >= 1: {self.classifier_steps}")
        if self.warm_epochs < 0:
            raise ConfigError(f"warm_epochs must be >= 0: {self.warm_epochs}")


@dataclass
class CompositingFlags:
    inpaint: bool = True
    segmentation: bool = True
    objects: bool = True

    def validate(self) -> None:
        for name in ("inpaint", "segmentation", "objects"):
            if not isinstance(getattr(self, name), bool):
                raise ConfigError(f"compositing flag {name} must be a boolean")


@dataclass
class FeatureConfig:
    frames: int = 8
    grid: int = 4

    def validate(self) -> None:
        if self.frames < 1:
            raise ConfigError(f"feature frames must be >= 1: {self.frames}")
        if self.grid < 1:
            raise ConfigError(f"feature grid must be >= 1: {self.grid}")


@dataclass
class SplitConfig:
    labeled_fraction: float = 1.0
    val_fraction: float = 0.15
    test_fraction: float = 0.25
    split_seed: int | None = None

    def validate(self) -> None:
        if not 0.0 < self.labeled_fraction <= 1.0:
            raise ConfigError(f"labeled_fraction out of range: {self.labeled_fraction}")
        if self.split_seed is not None and self.split_seed < 0:
            raise ConfigError(f"split_seed must be >= 0: {self.split_seed}")
        if not 0.0 <= self.val_fraction < 1.0:
            raise ConfigError(f"val_fraction out of range: {self.val_fraction}")
        if not 0.0 <= self.test_fraction < 1.0:
            raise ConfigError(f"test_fraction out of range: {self.test_fraction}")
        if self.val_fraction + self.test_fraction >= 1.0:
            raise ConfigError("val_fraction + test_fraction must leave room for training data")


@dataclass
class SemiConfig:
    confidence: float = 0.8
    stage0_epochs: int | None = None

    def validate(self) -> None:
        if self.confidence < 0.0:
            raise ConfigError(f"confidence must be >= 0: {self.confidence}")
        if self.stage0_epochs is not None and self.stage0_epochs < 0:
            raise ConfigError(f"stage0_epochs must be >= 0: {self.stage0_epochs}")


@dataclass
class FewshotConfig:
    way: int = 5
    shot: int = 1
    query: int = 3
    augments: int = 2
    episodes: int = 1000
    novel_classes: int | None = None

    def validate(self) -> None:
        if self.way < 2:
            raise ConfigError(f"way must be >= 2: {self.way}")
        if self.shot < 1:
            raise ConfigError(f"shot must be >= 1: {self.shot}")
        if self.query < 1:
            raise ConfigError(f"query must be >= 1: {self.query}")
        if self.augments < 0:
            raise ConfigError(f"augments must be >= 0: {self.augments}")
        if self.episodes < 1:
            raise ConfigError(f"episodes must be >= 1: {self.episodes}")
        if self.novel_classes is not None and self.novel_classes < 2:
            raise ConfigError(f"novel_classes must be >= 2: {self.novel_classes}")


@dataclass
class RunConfig:
    seed: int = 0
    dataset: str | None = None
    world: dict[str, Any] | None = None
    setting: str = "full"
    pairing: str = "semantic"
    classifier_hidden: tuple[int, ...] = (64,)
    optimizer: OptimizerConfig = field(default_factory=OptimizerConfig)
    selector: SelectorConfig = field(default_factory=SelectorConfig)
    compositing: CompositingFlags = field(default_factory=CompositingFlags)
    features: FeatureConfig = field(default_factory=FeatureConfig)
    split: SplitConfig = field(default_factory=SplitConfig)
    semi: SemiConfig = field(default_factory=SemiConfig)
    fewshot: FewshotConfig = field(default_factory=FewshotConfig)

    def validate(self) -> None:
        if not isinstance(self.seed, int):
            raise ConfigError(f"seed must be an integer: {self.seed!r}")
        if self.setting not in SETTINGS:
            raise ConfigError(f"unknown setting {self.setting!r}")
        if self.pairing not in PAIRING_MODES:
            raise ConfigError(f"unknown pairing mode {self.pairing!r}")
        if self.dataset is None and self.world is None:
            raise ConfigError("config needs either a 'dataset' path or an inline 'world' spec")
        if not all(isinstance(h, int) and h >= 1 for h in self.classifier_hidden):
            raise ConfigError(f"classifier_hidden must be positive integers: {self.classifier_hidden}")
        for section in (
            self.optimizer,
            self.selector,
            self.compositing,
            self.features,
            self.split,
            self.semi,
            self.fewshot,
        ):
            section.validate()


_SECTION_TYPES = {
    "optimizer": OptimizerConfig,
    "selector": SelectorConfig,
    "compositing": CompositingFlags,
    "features": FeatureConfig,
    "split": SplitConfig,
    "semi": SemiConfig,
    "fewshot": FewshotConfig,
}

_TUPLE_FIELDS = {"hidden", "classifier_hidden"}


def _build_section(cls: type, data: dict[str, Any], name: str) -> Any:
    if not isinstance(data, dict):
        raise ConfigError(f"config section {name!r} must be an object")
    allowed = set(cls.__dataclass_fields__)
    unknown = set(data) - allowed
    if unknown:
        raise ConfigError(f"unknown keys in config section {name!r}: {sorted(unknown)}")
    kwargs = {}
    for key, value in data.items():
        if key in _TUPLE_FIELDS and isinstance(value, list):
            value = tuple(value)
        kwargs[key] = value
    return cls(**kwargs)


def run_config_from_dict(data: dict[str, Any]) -> RunConfig:
    if not isinstance(data, dict):
        raise ConfigError("run config must be a JSON object")
    top_allowed = set(RunConfig.__dataclass_fields__)
    unknown = set(data) - top_allowed
    if unknown:
        raise ConfigError(f"unknown config keys: {sorted(unknown)}")
    kwargs: dict[str, Any] = {}
    for key, value in data.items():
        if key in _SECTION_TYPES:
            kwargs[key] = _build_section(_SECTION_TYPES[key], value, key)
        elif key in _TUPLE_FIELDS and isinstance(value, list):
            kwargs[key] = tuple(value)
        else:
            kwargs[key] = value
    cfg = RunConfig(**kwargs)
    cfg.validate()
    return cfg


def run_config_to_dict(cfg: RunConfig) -> dict[str, Any]:
    data = asdict(cfg)
    data["classifier_hidden"] = list(cfg.classifier_hidden)
    data["selector"]["hidden"] = list(cfg.selector.hidden)
    return data


def load_run_config(path: str | Path) -> RunConfig:
    path = Path(path)
    if not path.exists():
        raise ConfigError(f"config file not found: {path}")
    with open(path, "r", encoding="utf-8") as fh:
        try:
            data = json.load(fh)
        except json.JSONDecodeError as exc:
            raise ConfigError(f"config is not valid JSON: {exc}") from exc
    return run_config_from_dict(data)
