"""Policy-gradient pair selector.

A small MLP scores each candidate (foreground, background) pair from the
two clips' descriptors and labels; the sigmoid score is the probability
of keeping the pair.  Training samples keep/drop actions for a batch of
candidates, takes a few probe gradient steps on a frozen classifier with
the kept composites, and rewards the policy by how much the resulting
validation loss improves on a running baseline.  The log-policy gradient
for independent Bernoulli actions has the closed form
d log pi / d logit_i = a_i - omega_i, so one backward pass through the
scorer per episode suffices.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, asdict
from pathlib import Path

import numpy as np

from .databank import SampleBank
from .neural import MLP, soft_cross_entropy
from .semmatch import PairCandidate, sample_pairs
from .tensorstore import SelectorConfig

LANE_SELECTOR_INIT = 10
LANE_EPISODE = 11

SCORE_FLOOR = 1e-6


class PairSelector:
    """Sigmoid scorer over selector input vectors."""

    def __init__(self, input_dim: int, hidden: tuple[int, ...], rng: np.random.Generator):
        self.net = MLP((input_dim, *hidden, 1), rng)

    @property
    def params(self) -> list[np.ndarray]:
        return self.net.params

    def save(self, directory: str | Path) -> None:
        self.net.save(directory)

    @classmethod
    def load(cls, directory: str | Path) -> "PairSelector":
        net = MLP.load(directory)
        sel = cls.__new__(cls)
        sel.net = net
        return sel

    def logits(self, x: np.ndarray) -> np.ndarray:
        out, _ = self.net.forward(np.atleast_2d(x))
        return out[:, 0]

    def score_batch(self, x: np.ndarray) -> np.ndarray:
        """Keep-probabilities, clamped away from exactly 0 and 1."""
        z = self.logits(x)
        omega = 1.0 / (1.0 + np.exp(-z))
        return np.clip(omega, SCORE_FLOOR, 1.0 - SCORE_FLOOR)

    def score_pair(self, vec: np.ndarray) -> float:
        return float(self.score_batch(vec[None, :])[0])


def sample_actions(omegas: np.ndarray, rng: np.random.Generator) -> np.ndarray:
    """Independent Bernoulli keep/drop draws, one per candidate."""
    omegas = np.asarray(omegas, dtype=np.float64)
    if omegas.ndim != 1:
        raise ValueError("omegas must be 1-D")
    return (rng.random(omegas.shape[0]) < omegas).astype(np.float64)


def log_policy(omegas: np.ndarray, actions: np.ndarray) -> float:
    """log pi(a) = sum a log w + (1 - a) log(1 - w), scores pre-clamped."""
    w = np.clip(np.asarray(omegas, dtype=np.float64), SCORE_FLOOR, 1.0 - SCORE_FLOOR)
    a = np.asarray(actions, dtype=np.float64)
    return float((a * np.log(w) + (1.0 - a) * np.log(1.0 - w)).sum())


def policy_gradient(
    selector: PairSelector, x: np.ndarray, actions: np.ndarray, reward: float
) -> list[np.ndarray]:
    """Gradient of reward * log pi wrt the scorer's parameters (ascent sense)."""
    out, cache = selector.net.forward(np.atleast_2d(x))
    omega = np.clip(1.0 / (1.0 + np.exp(-out[:, 0])), SCORE_FLOOR, 1.0 - SCORE_FLOOR)
    dlogits = reward * (np.asarray(actions, dtype=np.float64) - omega)
    return selector.net.backward(cache, dlogits[:, None])


def reinforce_update(
    selector: PairSelector,
    x: np.ndarray,
    actions: np.ndarray,
    reward: float,
    learning_rate: float,
) -> None:
    """One ascent step theta += lr * grad(reward * log pi)."""
    grads = policy_gradient(selector, x, actions, reward)
    for p, g in zip(selector.net.params, grads):
        p += learning_rate * g


def compute_reward(val_loss: float, delta: float, mode: str = "improvement") -> float:
    """Reward against the moving reference: positive when loss is below it.

    'improvement' gives delta - loss; 'literal' keeps the opposite sign
    convention of rewarding loss above the reference.
    """
    if mode == "improvement":
        return delta - val_loss
    if mode == "literal":
        return val_loss - delta
    raise ValueError(f"unknown reward mode {mode!r}")


def update_delta(delta: float, val_loss: float, window: int, mode: str = "normalized") -> float:
    """Moving reference update over an effective window of S episodes.

    'normalized' is the convex form ((S-1)/S) delta + (1/S) loss, which
    contracts the gap to a constant loss by exactly (S-1)/S per step.
    'literal' adds the raw loss without the 1/S weight and is kept for
    comparison; it diverges for constant positive losses.
    """
    if window < 1:
        raise ValueError(f"window must be >= 1: {window}")
    if mode == "normalized":
        return ((window - 1) / window) * delta + val_loss / window
    if mode == "literal":
        return ((window - 1) / window) * delta + val_loss
    raise ValueError(f"unknown delta update mode {mode!r}")


@dataclass
class EpisodeRecord:
    """One training episode: the candidate batch and what came of it.

    ``batch`` and ``selected`` hold (foreground id, background id) pairs;
    ``selected`` is exactly the batch entries whose action is 1.
    """

    episode: int
    batch: list[tuple[str, str]]
    actions: list[int]
    selected: list[tuple[str, str]]
    mean_omega: float
    log_policy: float
    val_loss: float
    reward: float
    delta: float
    skipped: bool

    @property
    def batch_size(self) -> int:
        return len(self.batch)

    @property
    def n_selected(self) -> int:
        return len(self.selected)


def _probe_and_eval(
    classifier: MLP,
    snapshot: list[np.ndarray] | None,
    comp_x: np.ndarray,
    comp_y: np.ndarray,
    val_x: np.ndarray,
    val_y: np.ndarray,
    lr: float,
    steps: int,
) -> float:
    """Val loss after a few plain gradient steps on the composites.

    With a ``snapshot`` the classifier is reset to it first and restored
    afterwards, so episodes never leak into each other.  With ``None``
    the probe steps start from the current parameters and stick.
    """
    if snapshot is not None:
        classifier.set_params(snapshot)
    try:
        for _ in range(steps):
            out, cache = classifier.forward(comp_x)
            _, dout = soft_cross_entropy(out, comp_y)
            grads = classifier.backward(cache, dout)
            for p, g in zip(classifier.params, grads):
                p -= lr * g
        out, _ = classifier.forward(val_x)
        loss, _ = soft_cross_entropy(out, val_y)
    finally:
        if snapshot is not None:
            classifier.set_params(snapshot)
    return loss


def train_selector(
    bank: SampleBank,
    candidates: list[PairCandidate],
    classifier: MLP,
    val_x: np.ndarray,
    val_y: np.ndarray,
    cfg: SelectorConfig,
    seed: int,
    log_path: str | Path | None = None,
    selector: PairSelector | None = None,
    persist_updates: bool = False,
) -> tuple[PairSelector, list[EpisodeRecord]]:
    """REINFORCE over keep/drop decisions on candidate pairs.

    Per episode: draw a candidate batch, score, sample actions, probe the
    frozen classifier with the kept composites, reward by validation-loss
    improvement over the moving reference, ascend, update the reference.
    Episodes that keep nothing are logged and skipped: no parameter or
    reference update.  Fully deterministic in (bank, candidates, seed).
    Pass ``selector`` to continue training an existing scorer.  With
    ``persist_updates`` the probe steps accumulate on the classifier
    instead of being rolled back, training both nets together.
    """
    if not candidates:
        raise ValueError("no candidate pairs to train on")
    if val_x.shape[0] == 0:
        raise ValueError("selector training needs a non-empty validation split")

    if selector is None:
        input_dim = bank.selector_vec(candidates[0].fg_id, candidates[0].bg_id).shape[0]
        selector = PairSelector(
            input_dim, cfg.hidden, np.random.default_rng([seed, LANE_SELECTOR_INIT])
        )

    snapshot = None if persist_updates else classifier.get_params()
    out, _ = classifier.forward(val_x)
    delta, _ = soft_cross_entropy(out, val_y)

    records: list[EpisodeRecord] = []
    for episode in range(cfg.episodes):
        rng = np.random.default_rng([seed, LANE_EPISODE, episode])
        batch = sample_pairs(candidates, cfg.pair_batch, rng)
        x = np.stack([bank.selector_vec(c.fg_id, c.bg_id) for c in batch])
        omegas = selector.score_batch(x)
        actions = sample_actions(omegas, rng)
        chosen = [c for c, a in zip(batch, actions) if a > 0.5]
        batch_ids = [(c.fg_id, c.bg_id) for c in batch]
        chosen_ids = [(c.fg_id, c.bg_id) for c in chosen]
        logp = log_policy(omegas, actions)

        if not chosen:
            records.append(
                EpisodeRecord(
                    episode=episode,
                    batch=batch_ids,
                    actions=[int(a) for a in actions],
                    selected=[],
                    mean_omega=float(omegas.mean()),
                    log_policy=logp,
                    val_loss=float("nan"),
                    reward=0.0,
                    delta=delta,
                    skipped=True,
                )
            )
            continue

        comp = [bank.composite_feature_label(c.fg_id, c.bg_id) for c in chosen]
        comp_x = np.stack([f for f, _, _ in comp])
        comp_y = np.stack([l for _, l, _ in comp])
        val_loss = _probe_and_eval(
            classifier,
            snapshot,
            comp_x,
            comp_y,
            val_x,
            val_y,
            cfg.classifier_lr,
            cfg.classifier_steps,
        )
        reward = compute_reward(val_loss, delta, cfg.reward_sign)
        reinforce_update(selector, x, actions, reward, cfg.learning_rate)
        delta = update_delta(delta, val_loss, cfg.window, cfg.delta_update)
        records.append(
            EpisodeRecord(
                episode=episode,
                batch=batch_ids,
                actions=[int(a) for a in actions],
                selected=chosen_ids,
                mean_omega=float(omegas.mean()),
                log_policy=logp,
                val_loss=val_loss,
                reward=reward,
                delta=delta,
                skipped=False,
            )
        )

    if log_path is not None:
        log_path = Path(log_path)
        log_path.parent.mkdir(parents=True, exist_ok=True)
        with open(log_path, "w", encoding="utf-8") as fh:
            for rec in records:
                fh.write(json.dumps(asdict(rec), sort_keys=True) + "\n")
    return selector, records


def select_for_augmentation(
    selector: PairSelector,
    bank: SampleBank,
    candidates: list[PairCandidate],
    omega_min: float = 0.6,
    budget: int | None = None,
) -> list[tuple[PairCandidate, float]]:
    """Deterministic post-training selection; no sampling involved.

    Threshold mode keeps every candidate scoring at least ``omega_min``,
    in (fg id, bg id) order.  With a ``budget`` the top-scoring pairs win
    instead, ties broken by (fg id, bg id), so the result is invariant to
    the order candidates are passed in.
    """
    ordered = sorted(candidates, key=lambda c: (c.fg_id, c.bg_id))
    if not ordered:
        return []
    x = np.stack([bank.selector_vec(c.fg_id, c.bg_id) for c in ordered])
    scores = selector.score_batch(x)
    scored = list(zip(ordered, (float(s) for s in scores)))
    if budget is None:
        return [(c, s) for c, s in scored if s >= omega_min]
    if budget <= 0:
        return []
    ranked = sorted(scored, key=lambda cs: (-cs[1], cs[0].fg_id, cs[0].bg_id))
    return ranked[:budget]
