"""End-to-end experiment pipeline.

The full protocol has two stages.  Stage one trains the pair selector
against a warm classifier probe; stage two filters the candidate pairs
with the trained policy, composites the survivors, and retrains a fresh
classifier on labeled data plus composites.  Variants cover random pair
selection, within-class pairing, a joint policy/classifier run without
restore or retrain, semi-supervised pseudo-labeling, and episodic
few-shot evaluation with prototype classifiers.

Randomness is namespaced per purpose: every consumer draws from
``np.random.default_rng([seed, LANE, ...])`` with a lane constant unique
to this module, so adding or removing one phase never shifts another.
In particular the final retrain sees the same stream whether or not a
selector ran, which keeps a zero-budget run bit-identical to a plain
baseline.
"""

from __future__ import annotations

import csv
import hashlib
import json
import math
import tempfile
import time
import warnings
from dataclasses import dataclass, field, replace, asdict
from pathlib import Path

import numpy as np

from .databank import SampleBank
from .features import FeatureSpec
from .neural import MLP, SGD, soft_cross_entropy, softmax
from .selector import select_for_augmentation, train_selector
from .semmatch import PairCandidate, enumerate_pairs, nearest_neighbors, sample_pairs
from .synthworld import generate_world, split_world, toxic_fraction, world_spec_from_dict
from .tensorstore import (
    DatasetManifest,
    ManifestError,
    OptimizerConfig,
    RunConfig,
    load_manifest,
    manifest_to_dict,
    run_config_to_dict,
)

LANE_WARM = 20
LANE_FINAL = 21
LANE_STAGE0 = 22
LANE_RANDOM_PAIRS = 23
LANE_FEWSHOT = 24

# sub-keys under a training lane
_SUB_INIT = 0
_SUB_ORDER = 1


def evaluate(net: MLP, x: np.ndarray, y: np.ndarray) -> tuple[float, float]:
    """Mean cross-entropy and top-1 accuracy; (nan, nan) on empty input."""
    if x.shape[0] == 0:
        return float("nan"), float("nan")
    out, _ = net.forward(x)
    loss, _ = soft_cross_entropy(out, y)
    acc = float(np.mean(np.argmax(out, axis=1) == np.argmax(y, axis=1)))
    return loss, acc


def train_classifier(
    x: np.ndarray,
    y: np.ndarray,
    val_x: np.ndarray,
    val_y: np.ndarray,
    hidden: tuple[int, ...],
    opt: OptimizerConfig,
    key: tuple[int, ...],
) -> tuple[MLP, dict]:
    """Minibatch SGD with a cosine schedule, keeping the best-val epoch.

    Features are standardised per dimension before training, scaled so a
    typical row keeps unit norm (matching the scale the extractor emits,
    which keeps the default learning rate stable); the affine is folded
    into the first layer afterwards, so the returned network consumes raw
    feature vectors.  The head is initialised from the architecture alone,
    which keeps runs with different seeds comparable; ``key`` namespaces
    the per-epoch batch order, so two calls with equal data and key
    produce bit-identical models.  With an empty validation split the
    final-epoch parameters stand.  Zero epochs returns the freshly
    initialised network untouched.
    """
    if x.shape[0] == 0:
        raise ValueError("empty training set")
    if x.shape[0] != y.shape[0]:
        raise ValueError(f"feature/label row mismatch: {x.shape[0]} vs {y.shape[0]}")
    sizes = (x.shape[1], *hidden, y.shape[1])
    net = MLP(sizes, np.random.default_rng([_SUB_INIT]))
    history = {"train_loss": [], "val_loss": [], "best_epoch": -1}
    if opt.epochs == 0:
        return net, history

    mu = x.mean(axis=0)
    sd = (x.std(axis=0) + 1e-8) * math.sqrt(x.shape[1])
    xs = (x - mu) / sd
    vxs = (val_x - mu) / sd
    n = x.shape[0]
    n_batches = -(-n // opt.batch_size)
    sgd = SGD(
        lr0=opt.lr0,
        momentum=opt.momentum,
        weight_decay=opt.weight_decay,
        total_steps=opt.epochs * n_batches,
    )
    best_val = np.inf
    best_params = None
    for epoch in range(opt.epochs):
        order = np.random.default_rng([*key, _SUB_ORDER, epoch]).permutation(n)
        for b in range(n_batches):
            rows = order[b * opt.batch_size : (b + 1) * opt.batch_size]
            out, cache = net.forward(xs[rows])
            _, dout = soft_cross_entropy(out, y[rows])
            sgd.step(net.params, net.backward(cache, dout))
        train_loss, _ = evaluate(net, xs, y)
        val_loss, _ = evaluate(net, vxs, val_y)
        history["train_loss"].append(train_loss)
        history["val_loss"].append(val_loss)
        if val_x.shape[0] > 0 and val_loss < best_val:
            best_val = val_loss
            best_params = net.get_params()
            history["best_epoch"] = epoch
    if best_params is not None:
        net.set_params(best_params)
    w0 = net.params[0]
    net.params[1] = net.params[1] - (mu / sd) @ w0
    net.params[0] = w0 / sd[:, None]
    return net, history


@dataclass
class ExperimentResult:
    """Everything one run produced, flat enough for a CSV row."""

    setting: str
    variant: str
    seed: int
    config_hash: str
    world_hash: str
    train_losses: list[float]
    val_losses: list[float]
    test_accuracy: float
    n_augmented: int
    toxic_fraction: float
    seconds: float
    extras: dict[str, float] = field(default_factory=dict)

    def to_dict(self) -> dict:
        return asdict(self)

    def csv_row(self) -> list:
        final_train = self.train_losses[-1] if self.train_losses else float("nan")
        final_val = self.val_losses[-1] if self.val_losses else float("nan")
        return [
            self.setting,
            self.variant,
            self.seed,
            self.config_hash,
            self.world_hash,
            len(self.train_losses),
            final_train,
            final_val,
            self.test_accuracy,
            self.n_augmented,
            self.toxic_fraction,
            self.seconds,
            json.dumps(self.extras, sort_keys=True),
        ]


CSV_HEADER = [
    "setting",
    "variant",
    "seed",
    "config_hash",
    "world_hash",
    "epochs",
    "final_train_loss",
    "final_val_loss",
    "test_accuracy",
    "n_augmented",
    "toxic_fraction",
    "seconds",
    "extras",
]


def write_results_csv(results: list[ExperimentResult], path: str | Path) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(CSV_HEADER)
        for r in results:
            writer.writerow(r.csv_row())


def config_hash(cfg: RunConfig) -> str:
    blob = json.dumps(run_config_to_dict(cfg), sort_keys=True)
    return hashlib.sha256(blob.encode()).hexdigest()[:12]


def world_hash(manifest: DatasetManifest) -> str:
    blob = json.dumps(manifest_to_dict(manifest), sort_keys=True)
    return hashlib.sha256(blob.encode()).hexdigest()[:12]


def resolve_manifest(
    cfg: RunConfig, out_dir: str | Path | None = None
) -> tuple[DatasetManifest, tempfile.TemporaryDirectory | None]:
    """Load or generate the dataset a config points at.

    Without a dataset path a synthetic world is rendered, seeded by the
    run seed unless the world block pins its own.  The labeled fraction
    is applied here, seeded by ``split.split_seed`` when set (so paired
    runs can share a split while varying everything else) and by the run
    seed otherwise; callers always see final split tags.  The second
    return value owns generated clips when no out_dir was given; keep it
    alive while the samples are in use.
    """
    tmp = None
    if cfg.dataset is not None:
        manifest = load_manifest(cfg.dataset)
    else:
        world = dict(cfg.world or {})
        world.setdefault("seed", cfg.seed)
        spec = world_spec_from_dict(world)
        if out_dir is not None:
            manifest = generate_world(spec, Path(out_dir) / "world")
        else:
            tmp = tempfile.TemporaryDirectory(prefix="l2a-world-")
            manifest = generate_world(spec, tmp.name)
    if cfg.split.labeled_fraction < 1.0:
        seed = cfg.seed if cfg.split.split_seed is None else cfg.split.split_seed
        manifest = split_world(manifest, cfg.split.labeled_fraction, seed)
    return manifest, tmp


def audit_pairs(manifest: DatasetManifest, pairs: list) -> None:
    """Refuse any composite built from a clip outside the labeled pool."""
    for p in pairs:
        fg_id, bg_id = (p.fg_id, p.bg_id) if hasattr(p, "fg_id") else p
        for sid in (fg_id, bg_id):
            tag = manifest.sample_by_id(sid).split
            if tag != "train-labeled":
                raise ManifestError(
                    f"composite would use sample {sid!r} from split {tag!r}"
                )


def _candidates(bank: SampleBank, pairing: str) -> list[PairCandidate]:
    train = bank.manifest.samples_in_split("train-labeled")
    neighbor_of = None
    if pairing == "semantic":
        neighbor_of = nearest_neighbors(bank.manifest.embeddings())
    return enumerate_pairs(train, pairing, neighbor_of)


def _safe_toxic_fraction(manifest: DatasetManifest, pairs: list) -> float:
    if not pairs:
        return float("nan")
    try:
        return toxic_fraction(manifest, pairs)
    except ManifestError:
        return float("nan")  # dataset carries no scene geometry to judge by


def _finish(
    cfg: RunConfig,
    bank: SampleBank,
    picked: list[PairCandidate],
    setting: str,
    variant: str,
    t0: float,
    out_dir: Path | None,
    extras: dict[str, float],
) -> ExperimentResult:
    """Shared tail: audit, composite, retrain from scratch, evaluate."""
    audit_pairs(bank.manifest, picked)
    x, y, _ = bank.split_matrices("train-labeled")
    val_x, val_y, _ = bank.split_matrices("val")
    test_x, test_y, _ = bank.split_matrices("test")

    if picked:
        comp = [bank.composite_feature_label(p.fg_id, p.bg_id) for p in picked]
        comp_x = np.stack([f for f, _, _ in comp])
        comp_y = np.stack([l for _, l, _ in comp])
    else:
        comp_x = np.zeros((0, x.shape[1]))
        comp_y = np.zeros((0, y.shape[1]))
    aug_x = np.vstack([x, comp_x])
    aug_y = np.vstack([y, comp_y])

    net, history = train_classifier(
        aug_x,
        aug_y,
        val_x,
        val_y,
        cfg.classifier_hidden,
        cfg.optimizer,
        (cfg.seed, LANE_FINAL),
    )
    _, test_acc = evaluate(net, test_x, test_y)
    result = ExperimentResult(
        setting=setting,
        variant=variant,
        seed=cfg.seed,
        config_hash=config_hash(cfg),
        world_hash=world_hash(bank.manifest),
        train_losses=history["train_loss"],
        val_losses=history["val_loss"],
        test_accuracy=test_acc,
        n_augmented=len(picked),
        toxic_fraction=_safe_toxic_fraction(bank.manifest, picked),
        seconds=time.perf_counter() - t0,
        extras=extras,
    )
    if out_dir is not None:
        out_dir = Path(out_dir)
        out_dir.mkdir(parents=True, exist_ok=True)
        net.save(out_dir / "classifier")
        with open(out_dir / "result.json", "w", encoding="utf-8") as fh:
            json.dump(result.to_dict(), fh, sort_keys=True, indent=1)
    return result


def _train_and_select(
    cfg: RunConfig,
    bank: SampleBank,
    candidates: list[PairCandidate],
    out_dir: Path | None,
) -> list[PairCandidate]:
    """Stage one: warm probe, policy training, thresholded selection."""
    x, y, _ = bank.split_matrices("train-labeled")
    val_x, val_y, _ = bank.split_matrices("val")
    warm_opt = replace(cfg.optimizer, epochs=cfg.selector.warm_epochs)
    probe, _ = train_classifier(
        x, y, val_x, val_y, cfg.classifier_hidden, warm_opt, (cfg.seed, LANE_WARM)
    )
    log_path = None if out_dir is None else Path(out_dir) / "episodes.jsonl"
    policy, _ = train_selector(
        bank, candidates, probe, val_x, val_y, cfg.selector, cfg.seed, log_path=log_path
    )
    if out_dir is not None:
        policy.save(Path(out_dir) / "selector")
    picked = select_for_augmentation(
        policy, bank, candidates, omega_min=cfg.selector.omega_min, budget=cfg.selector.budget
    )
    return [c for c, _ in picked]


def run_full(
    cfg: RunConfig,
    manifest: DatasetManifest | None = None,
    out_dir: str | Path | None = None,
    setting: str = "full",
    variant: str = "l2a",
    bank: SampleBank | None = None,
    extras: dict[str, float] | None = None,
) -> ExperimentResult:
    """Two-stage run: select pairs, composite, retrain, score on test.

    A budget of exactly zero skips stage one entirely; the retrain then
    sees the labeled matrices untouched and the run reduces to the plain
    baseline, bit for bit.
    """
    cfg.validate()
    t0 = time.perf_counter()
    tmp = None
    try:
        if bank is None:
            if manifest is None:
                manifest, tmp = resolve_manifest(cfg, out_dir)
            bank = SampleBank(
                manifest,
                FeatureSpec(cfg.features.frames, cfg.features.grid),
                cfg.compositing,
            )
        out_dir = None if out_dir is None else Path(out_dir)
        if cfg.selector.budget == 0:
            picked: list[PairCandidate] = []
        else:
            candidates = _candidates(bank, cfg.pairing)
            picked = _train_and_select(cfg, bank, candidates, out_dir)
        return _finish(cfg, bank, picked, setting, variant, t0, out_dir, dict(extras or {}))
    finally:
        if tmp is not None:
            tmp.cleanup()


def _promote(manifest: DatasetManifest, sample_ids: list[str]) -> DatasetManifest:
    """Copy of the manifest with the given clips retagged as labeled."""
    wanted = set(sample_ids)
    samples = [
        replace(s, split="train-labeled") if s.sample_id in wanted else s
        for s in manifest.samples
    ]
    return DatasetManifest(
        classes=manifest.classes, samples=samples, world=manifest.world, root=manifest.root
    )


def run_semi(
    cfg: RunConfig,
    manifest: DatasetManifest | None = None,
    out_dir: str | Path | None = None,
) -> ExperimentResult:
    """Pseudo-label confident unlabeled clips, then run the full protocol.

    A first-stage classifier trained on the labeled pool scores every
    train-unlabeled clip; those whose top softmax clears the confidence
    threshold join the labeled pool with one-hot pseudo-labels.  With no
    unlabeled clips at all this is exactly the full run.
    """
    cfg.validate()
    t0 = time.perf_counter()
    tmp = None
    try:
        if manifest is None:
            manifest, tmp = resolve_manifest(cfg, out_dir)
        bank = SampleBank(
            manifest, FeatureSpec(cfg.features.frames, cfg.features.grid), cfg.compositing
        )
        unlabeled = sorted(
            manifest.samples_in_split("train-unlabeled"), key=lambda s: s.sample_id
        )
        if not unlabeled:
            return run_full(cfg, manifest=manifest, out_dir=out_dir, setting="semi")

        x, y, _ = bank.split_matrices("train-labeled")
        val_x, val_y, _ = bank.split_matrices("val")
        stage0_opt = (
            cfg.optimizer
            if cfg.semi.stage0_epochs is None
            else replace(cfg.optimizer, epochs=cfg.semi.stage0_epochs)
        )
        stage0, _ = train_classifier(
            x, y, val_x, val_y, cfg.classifier_hidden, stage0_opt, (cfg.seed, LANE_STAGE0)
        )
        feats = np.stack([bank.feature(s.sample_id) for s in unlabeled])
        probs = softmax(stage0.forward(feats)[0])
        confident = probs.max(axis=1) >= cfg.semi.confidence
        overrides = {}
        for keep, s, row in zip(confident, unlabeled, probs):
            if keep:
                overrides[s.sample_id] = bank.one_hot(
                    bank.class_order[int(np.argmax(row))]
                )
        if not overrides:
            warnings.warn(
                "no unlabeled clip cleared the pseudo-label confidence threshold",
                stacklevel=2,
            )
        twin = bank.with_overrides(overrides)
        twin.manifest = _promote(manifest, sorted(overrides))
        return run_full(
            cfg,
            out_dir=out_dir,
            setting="semi",
            bank=twin,
            extras={"n_pseudo": float(len(overrides))},
        )
    finally:
        if tmp is not None:
            tmp.cleanup()


def run_fewshot(
    cfg: RunConfig,
    manifest: DatasetManifest | None = None,
    out_dir: str | Path | None = None,
) -> ExperimentResult:
    """Episodic evaluation with prototype classifiers on novel classes.

    Each episode samples ``way`` classes from the novel pool, a support
    and query set per class, and builds ``augments`` composites per
    class: foreground from the class support, background from the most
    similar other class in the episode, label kept from the foreground.
    Class prototypes are the mean of support plus composite descriptors;
    queries go to the nearest prototype.  A paired baseline without the
    composites runs on identical draws.
    """
    cfg.validate()
    fs = cfg.fewshot
    t0 = time.perf_counter()
    tmp = None
    try:
        if manifest is None:
            manifest, tmp = resolve_manifest(cfg, out_dir)
        bank = SampleBank(
            manifest, FeatureSpec(cfg.features.frames, cfg.features.grid), cfg.compositing
        )
        class_ids = sorted(manifest.class_ids())
        novel = class_ids if fs.novel_classes is None else class_ids[-fs.novel_classes :]
        if fs.way > len(novel):
            raise ValueError(f"cannot sample {fs.way} ways from {len(novel)} novel classes")
        need = fs.shot + fs.query
        by_class = {
            c: sorted(manifest.samples_of_class(c), key=lambda s: s.sample_id)
            for c in novel
        }
        for c, rows in by_class.items():
            if len(rows) < need:
                raise ValueError(
                    f"class {c} has {len(rows)} clips, episode needs {need}"
                )
        emb = manifest.embeddings()

        hits = 0
        base_hits = 0
        total = 0
        all_pairs: list[tuple[str, str]] = []
        for episode in range(fs.episodes):
            rng = np.random.default_rng([cfg.seed, LANE_FEWSHOT, episode])
            chosen = sorted(rng.choice(np.array(novel), size=fs.way, replace=False).tolist())
            support: dict[int, list[str]] = {}
            queries: list[tuple[int, str]] = []
            for c in chosen:
                rows = by_class[c]
                idx = rng.choice(len(rows), size=need, replace=False)
                ids = [rows[int(i)].sample_id for i in idx]
                support[c] = ids[: fs.shot]
                queries.extend((c, sid) for sid in ids[fs.shot :])

            protos = {}
            base_protos = {}
            for c in chosen:
                feats = [bank.feature(sid) for sid in support[c]]
                base_protos[c] = np.mean(feats, axis=0)
                others = [d for d in chosen if d != c]
                sims = [float(emb[c] @ emb[d]) for d in others]
                partner = others[int(np.argmax(sims))]
                for _ in range(fs.augments):
                    fg = support[c][int(rng.integers(fs.shot))]
                    bg = support[partner][int(rng.integers(fs.shot))]
                    feats.append(bank.composite_feature_label(fg, bg)[0])
                    all_pairs.append((fg, bg))
                protos[c] = np.mean(feats, axis=0)

            proto_mat = np.stack([protos[c] for c in chosen])
            base_mat = np.stack([base_protos[c] for c in chosen])
            for c, sid in queries:
                f = bank.feature(sid)
                want = chosen.index(c)
                hits += int(np.argmin(np.sum((proto_mat - f) ** 2, axis=1)) == want)
                base_hits += int(np.argmin(np.sum((base_mat - f) ** 2, axis=1)) == want)
                total += 1

        result = ExperimentResult(
            setting="fewshot",
            variant="l2a",
            seed=cfg.seed,
            config_hash=config_hash(cfg),
            world_hash=world_hash(manifest),
            train_losses=[],
            val_losses=[],
            test_accuracy=hits / total,
            n_augmented=len(all_pairs),
            toxic_fraction=_safe_toxic_fraction(manifest, all_pairs),
            seconds=time.perf_counter() - t0,
            extras={
                "baseline_accuracy": base_hits / total,
                "episodes": float(fs.episodes),
            },
        )
        if out_dir is not None:
            out_dir = Path(out_dir)
            out_dir.mkdir(parents=True, exist_ok=True)
            with open(out_dir / "result.json", "w", encoding="utf-8") as fh:
                json.dump(result.to_dict(), fh, sort_keys=True, indent=1)
        return result
    finally:
        if tmp is not None:
            tmp.cleanup()


def run(cfg: RunConfig, out_dir: str | Path | None = None) -> ExperimentResult:
    """Dispatch on the configured setting."""
    if cfg.setting == "full":
        return run_full(cfg, out_dir=out_dir)
    if cfg.setting == "semi":
        return run_semi(cfg, out_dir=out_dir)
    if cfg.setting == "fewshot":
        return run_fewshot(cfg, out_dir=out_dir)
    raise ValueError(f"unknown setting {cfg.setting!r}")


def sweep_budget(
    cfg: RunConfig,
    budgets: list[int],
    manifest: DatasetManifest | None = None,
    out_dir: str | Path | None = None,
) -> list[ExperimentResult]:
    """One selector, many augmentation budgets, one retrain per budget.

    The world, warm probe and policy are shared across the sweep, so
    budgets differ only in how many top-scored pairs reach the retrain.
    Repeated budget values produce identical results.
    """
    cfg.validate()
    if any(b < 0 for b in budgets):
        raise ValueError("budgets must be >= 0")
    tmp = None
    try:
        if manifest is None:
            manifest, tmp = resolve_manifest(cfg, out_dir)
        bank = SampleBank(
            manifest, FeatureSpec(cfg.features.frames, cfg.features.grid), cfg.compositing
        )
        out_dir = None if out_dir is None else Path(out_dir)
        candidates = _candidates(bank, cfg.pairing)
        x, y, _ = bank.split_matrices("train-labeled")
        val_x, val_y, _ = bank.split_matrices("val")
        warm_opt = replace(cfg.optimizer, epochs=cfg.selector.warm_epochs)
        probe, _ = train_classifier(
            x, y, val_x, val_y, cfg.classifier_hidden, warm_opt, (cfg.seed, LANE_WARM)
        )
        log_path = None if out_dir is None else out_dir / "episodes.jsonl"
        policy, _ = train_selector(
            bank, candidates, probe, val_x, val_y, cfg.selector, cfg.seed, log_path=log_path
        )
        if out_dir is not None:
            policy.save(out_dir / "selector")

        results = []
        for b in budgets:
            sub = None if out_dir is None else out_dir / f"budget_{b}"
            picked = [
                c
                for c, _ in select_for_augmentation(
                    policy, bank, candidates, omega_min=cfg.selector.omega_min, budget=b
                )
            ]
            results.append(
                _finish(
                    cfg,
                    bank,
                    picked,
                    cfg.setting,
                    "l2a",
                    time.perf_counter(),
                    sub,
                    {"budget": float(b)},
                )
            )
        if out_dir is not None:
            write_results_csv(results, out_dir / "results.csv")
        return results
    finally:
        if tmp is not None:
            tmp.cleanup()


def compare_baselines(
    cfg: RunConfig,
    manifest: DatasetManifest | None = None,
    out_dir: str | Path | None = None,
) -> list[ExperimentResult]:
    """Four selection strategies on one world at one equal budget.

    l2a: the two-stage protocol.  random-pairs: a uniform subset of the
    same candidate pool, no policy.  intra-class: the full protocol on
    within-class candidates.  joint: policy and classifier trained
    together with no per-episode restore and no final retrain.  At
    budget zero every row collapses to the plain baseline.
    """
    cfg.validate()
    if cfg.selector.budget is None:
        raise ValueError("comparison needs an explicit selector budget")
    budget = cfg.selector.budget
    tmp = None
    try:
        if manifest is None:
            manifest, tmp = resolve_manifest(cfg, out_dir)
        bank = SampleBank(
            manifest, FeatureSpec(cfg.features.frames, cfg.features.grid), cfg.compositing
        )
        out_dir = None if out_dir is None else Path(out_dir)
        results = []

        sub = None if out_dir is None else out_dir / "l2a"
        results.append(
            run_full(cfg, out_dir=sub, bank=bank, extras={"budget": float(budget)})
        )

        t0 = time.perf_counter()
        if budget == 0:
            picked = []
        else:
            candidates = _candidates(bank, cfg.pairing)
            rng = np.random.default_rng([cfg.seed, LANE_RANDOM_PAIRS])
            picked = sample_pairs(candidates, budget, rng)
        sub = None if out_dir is None else out_dir / "random-pairs"
        results.append(
            _finish(
                cfg,
                bank,
                picked,
                cfg.setting,
                "random-pairs",
                t0,
                sub,
                {"budget": float(budget)},
            )
        )

        sub = None if out_dir is None else out_dir / "intra-class"
        intra_cfg = replace(cfg, pairing="intra-class")
        results.append(
            run_full(
                intra_cfg,
                out_dir=sub,
                variant="intra-class",
                bank=bank,
                extras={"budget": float(budget)},
            )
        )

        sub = None if out_dir is None else out_dir / "joint"
        results.append(_run_joint(cfg, bank, budget, sub))

        if out_dir is not None:
            write_results_csv(results, out_dir / "results.csv")
        return results
    finally:
        if tmp is not None:
            tmp.cleanup()


def _run_joint(
    cfg: RunConfig, bank: SampleBank, budget: int, out_dir: Path | None
) -> ExperimentResult:
    """Policy and classifier trained together; the probe IS the model.

    The classifier starts from the plain baseline, every episode's probe
    update sticks, and no retrain follows.  A zero budget runs zero
    episodes, leaving the baseline untouched.
    """
    t0 = time.perf_counter()
    x, y, _ = bank.split_matrices("train-labeled")
    val_x, val_y, _ = bank.split_matrices("val")
    test_x, test_y, _ = bank.split_matrices("test")
    net, history = train_classifier(
        x, y, val_x, val_y, cfg.classifier_hidden, cfg.optimizer, (cfg.seed, LANE_FINAL)
    )

    consumed = 0
    pairs: list[tuple[str, str]] = []
    if budget > 0:
        candidates = _candidates(bank, cfg.pairing)
        log_path = None if out_dir is None else Path(out_dir) / "episodes.jsonl"
        policy, records = train_selector(
            bank,
            candidates,
            net,
            val_x,
            val_y,
            cfg.selector,
            cfg.seed,
            log_path=log_path,
            persist_updates=True,
        )
        if out_dir is not None:
            policy.save(Path(out_dir) / "selector")
        seen = set()
        for rec in records:
            consumed += len(rec.selected)
            for p in rec.selected:
                key = tuple(p)
                if key not in seen:
                    seen.add(key)
                    pairs.append(key)
        audit_pairs(bank.manifest, pairs)

    _, test_acc = evaluate(net, test_x, test_y)
    result = ExperimentResult(
        setting=cfg.setting,
        variant="joint",
        seed=cfg.seed,
        config_hash=config_hash(cfg),
        world_hash=world_hash(bank.manifest),
        train_losses=history["train_loss"],
        val_losses=history["val_loss"],
        test_accuracy=test_acc,
        n_augmented=consumed,
        toxic_fraction=_safe_toxic_fraction(bank.manifest, pairs),
        seconds=time.perf_counter() - t0,
        extras={"budget": float(budget)},
    )
    if out_dir is not None:
        out_dir = Path(out_dir)
        out_dir.mkdir(parents=True, exist_ok=True)
        net.save(out_dir / "classifier")
        with open(out_dir / "result.json", "w", encoding="utf-8") as fh:
            json.dump(result.to_dict(), fh, sort_keys=True, indent=1)
    return result


def ablate_compositing(
    cfg: RunConfig,
    manifest: DatasetManifest | None = None,
    out_dir: str | Path | None = None,
) -> list[ExperimentResult]:
    """Full run per on/off combination of the three compositing flags."""
    cfg.validate()
    tmp = None
    try:
        if manifest is None:
            manifest, tmp = resolve_manifest(cfg, out_dir)
        out_dir = None if out_dir is None else Path(out_dir)
        results = []
        for bits in range(8):
            flags = replace(
                cfg.compositing,
                inpaint=bool(bits & 4),
                segmentation=bool(bits & 2),
                objects=bool(bits & 1),
            )
            tag = f"flags-{int(flags.inpaint)}{int(flags.segmentation)}{int(flags.objects)}"
            sub = None if out_dir is None else out_dir / tag
            results.append(
                run_full(
                    replace(cfg, compositing=flags),
                    manifest=manifest,
                    out_dir=sub,
                    variant=tag,
                    extras={
                        "inpaint": float(flags.inpaint),
                        "segmentation": float(flags.segmentation),
                        "objects": float(flags.objects),
                    },
                )
            )
        if out_dir is not None:
            write_results_csv(results, out_dir / "results.csv")
        return results
    finally:
        if tmp is not None:
            tmp.cleanup()
