"""Small dense networks with hand-written backprop, in float64.

Everything the experiments need from a deep-learning stack, scaled down:
an MLP with ReLU hidden layers, soft-label cross-entropy, SGD with
momentum and weight decay on a cosine learning-rate schedule, and a
finite-difference gradient checker used by the tests.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .tensorstore import read_tensor, write_tensor


def glorot_uniform(fan_in: int, fan_out: int, rng: np.random.Generator) -> np.ndarray:
    limit = math.sqrt(6.0 / (fan_in + fan_out))
    return rng.uniform(-limit, limit, size=(fan_in, fan_out))


class MLP:
    """Fully connected net: ReLU after every hidden layer, identity output.

    Weights have shape (fan_in, fan_out) so a batch flows as ``x @ W + b``.
    All math is float64; parameters live in ``self.params`` as a flat list
    alternating W0, b0, W1, b1, ...
    """

    def __init__(self, sizes: tuple[int, ...], rng: np.random.Generator):
        if len(sizes) < 2:
            raise ValueError(f"need at least input and output sizes: {sizes}")
        if any(s < 1 for s in sizes):
            raise ValueError(f"layer sizes must be positive: {sizes}")
        self.sizes = tuple(int(s) for s in sizes)
        self.params: list[np.ndarray] = []
        for fan_in, fan_out in zip(sizes, sizes[1:]):
            self.params.append(glorot_uniform(fan_in, fan_out, rng))
            self.params.append(np.zeros(fan_out))

    @property
    def n_layers(self) -> int:
        return len(self.sizes) - 1

    def forward(self, x: np.ndarray) -> tuple[np.ndarray, list[np.ndarray]]:
        """Return (output, cache); cache holds each layer's input activation."""
        x = np.asarray(x, dtype=np.float64)
        squeeze = x.ndim == 1
        if squeeze:
            x = x[None, :]
        if x.shape[1] != self.sizes[0]:
            raise ValueError(f"input width {x.shape[1]} != {self.sizes[0]}")
        cache = []
        h = x
        for layer in range(self.n_layers):
            cache.append(h)
            w, b = self.params[2 * layer], self.params[2 * layer + 1]
            h = h @ w + b
            if layer < self.n_layers - 1:
                h = np.maximum(h, 0.0)
        if squeeze:
            h = h[0]
        return h, cache

    def __call__(self, x: np.ndarray) -> np.ndarray:
        return self.forward(x)[0]

    def backward(self, cache: list[np.ndarray], dout: np.ndarray) -> list[np.ndarray]:
        """Gradients of a scalar loss wrt every parameter, given d loss/d output."""
        dout = np.asarray(dout, dtype=np.float64)
        if dout.ndim == 1:
            dout = dout[None, :]
        grads: list[np.ndarray] = [np.empty(0)] * len(self.params)
        dh = dout
        for layer in reversed(range(self.n_layers)):
            h_in = cache[layer]
            w = self.params[2 * layer]
            if layer < self.n_layers - 1:
                # ReLU was applied to this layer's output on the forward pass.
                b = self.params[2 * layer + 1]
                pre = h_in @ w + b
                dh = dh * (pre > 0.0)
            grads[2 * layer] = h_in.T @ dh
            grads[2 * layer + 1] = dh.sum(axis=0)
            dh = dh @ w.T
        return grads

    def get_params(self) -> list[np.ndarray]:
        return [p.copy() for p in self.params]

    def set_params(self, params: list[np.ndarray]) -> None:
        if len(params) != len(self.params):
            raise ValueError("parameter count mismatch")
        for mine, theirs in zip(self.params, params):
            if mine.shape != theirs.shape:
                raise ValueError(f"shape mismatch: {mine.shape} vs {theirs.shape}")
        self.params = [p.copy() for p in params]

    def save(self, directory: str | Path) -> None:
        directory = Path(directory)
        directory.mkdir(parents=True, exist_ok=True)
        (directory / "sizes.txt").write_text(",".join(map(str, self.sizes)) + "\n")
        for i, p in enumerate(self.params):
            arr = p.astype(np.float32)
            if arr.ndim == 1:
                arr = arr[None, :]  # container needs rank >= 1; keep 2-D for clarity
            write_tensor(directory / f"param_{i:02d}.ten", arr)

    @classmethod
    def load(cls, directory: str | Path) -> "MLP":
        directory = Path(directory)
        sizes = tuple(int(s) for s in (directory / "sizes.txt").read_text().strip().split(","))
        net = cls(sizes, np.random.default_rng(0))
        params = []
        for i, ref in enumerate(net.params):
            arr = read_tensor(directory / f"param_{i:02d}.ten").astype(np.float64)
            if ref.ndim == 1:
                arr = arr[0]
            if arr.shape != ref.shape:
                raise ValueError(f"checkpoint param {i} has shape {arr.shape}, want {ref.shape}")
            params.append(arr)
        net.params = params
        return net

    @staticmethod
    def wrapping(params: list[np.ndarray], sizes: tuple[int, ...]) -> "MLP":
        net = MLP(sizes, np.random.default_rng(0))
        net.set_params(params)
        return net


def min_abs_preactivation(net: MLP, x: np.ndarray) -> float:
    """Smallest |pre-ReLU value| over all hidden units for this batch.

    Finite-difference checks sit on a kink when this is ~eps; callers
    resample inputs until it is comfortably large.
    """
    x = np.asarray(x, dtype=np.float64)
    if x.ndim == 1:
        x = x[None, :]
    smallest = math.inf
    h = x
    for layer in range(net.n_layers - 1):
        w, b = net.params[2 * layer], net.params[2 * layer + 1]
        pre = h @ w + b
        smallest = min(smallest, float(np.abs(pre).min()))
        h = np.maximum(pre, 0.0)
    return smallest


def softmax(logits: np.ndarray) -> np.ndarray:
    z = np.asarray(logits, dtype=np.float64)
    z = z - z.max(axis=-1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=-1, keepdims=True)


def soft_cross_entropy(logits: np.ndarray, targets: np.ndarray) -> tuple[float, np.ndarray]:
    """Mean loss -sum(t * log softmax(z)) over the batch, and d loss/d logits.

    The gradient is (softmax - target) / batch.  Targets may be any soft
    distribution, not just one-hot.
    """
    z = np.asarray(logits, dtype=np.float64)
    t = np.asarray(targets, dtype=np.float64)
    squeeze = z.ndim == 1
    if squeeze:
        z, t = z[None, :], t[None, :]
    if z.shape != t.shape:
        raise ValueError(f"logits {z.shape} and targets {t.shape} differ")
    zs = z - z.max(axis=1, keepdims=True)
    log_probs = zs - np.log(np.exp(zs).sum(axis=1, keepdims=True))
    n = z.shape[0]
    loss = float(-(t * log_probs).sum() / n)
    grad = (np.exp(log_probs) - t) / n
    if squeeze:
        grad = grad[0]
    return loss, grad


def cosine_lr(step: int, total_steps: int, lr0: float) -> float:
    """Half-cosine decay from lr0 at step 0 to 0 at step total_steps."""
    if total_steps < 1:
        raise ValueError(f"total_steps must be >= 1: {total_steps}")
    if not 0 <= step <= total_steps:
        raise ValueError(f"step {step} outside [0, {total_steps}]")
    return lr0 * 0.5 * (1.0 + math.cos(math.pi * step / total_steps))


@dataclass
class SGD:
    """SGD with classical momentum and decoupled-from-nothing weight decay.

    The decay term joins the gradient before the momentum buffer:
        v <- momentum * v + (grad + weight_decay * param)
        param <- param - lr * v
    """

    lr0: float
    momentum: float = 0.9
    weight_decay: float = 0.001
    total_steps: int = 1

    def __post_init__(self):
        self.step_count = 0
        self.velocity: list[np.ndarray] | None = None

    @property
    def lr(self) -> float:
        return cosine_lr(min(self.step_count, self.total_steps), self.total_steps, self.lr0)

    def step(self, params: list[np.ndarray], grads: list[np.ndarray]) -> None:
        if self.velocity is None:
            self.velocity = [np.zeros_like(p) for p in params]
        lr = self.lr
        for p, g, v in zip(params, grads, self.velocity):
            np.multiply(v, self.momentum, out=v)
            v += g + self.weight_decay * p
            p -= lr * v
        self.step_count += 1


def grad_check(
    fn,
    params: list[np.ndarray],
    analytic: list[np.ndarray],
    rng: np.random.Generator,
    n_probes: int = 12,
    eps: float = 1e-5,
) -> float:
    """Worst relative error between analytic and central-difference gradients.

    Each probe draws a random unit direction d over all parameters jointly
    and compares the analytic directional derivative sum(g . d) against
    (fn(p + eps d) - fn(p - eps d)) / (2 eps).  Directional probes keep the
    compared quantity away from zero, where single-coordinate differences
    drown in float64 roundoff.  Relative error is
    |a - n| / max(|a|, |n|, 1e-12).
    """
    worst = 0.0
    originals = [p.copy() for p in params]
    for _ in range(n_probes):
        direction = [rng.normal(size=p.shape) for p in params]
        norm = math.sqrt(sum(float((d * d).sum()) for d in direction))
        direction = [d / norm for d in direction]
        for p, o, d in zip(params, originals, direction):
            p[...] = o + eps * d
        plus = fn(params)
        for p, o, d in zip(params, originals, direction):
            p[...] = o - eps * d
        minus = fn(params)
        for p, o in zip(params, originals):
            p[...] = o
        numeric = (plus - minus) / (2.0 * eps)
        a = sum(float((g * d).sum()) for g, d in zip(analytic, direction))
        err = abs(a - numeric) / max(abs(a), abs(numeric), 1e-12)
        worst = max(worst, err)
    return worst
