"""Two-layer ReLU network with hand-written backprop and a momentum SGD loop."""

from __future__ import annotations

import json
import logging
import math
import struct
from dataclasses import dataclass, field, replace
from typing import Callable

import numpy as np

logger = logging.getLogger(__name__)

PARAM_NAMES = ("w1", "b1", "w2", "b2")


class TrainingDivergedError(RuntimeError):
    pass


@dataclass
class MlpParams:
    w1: np.ndarray  # [hidden, d]
    b1: np.ndarray  # [hidden]
    w2: np.ndarray  # [c, hidden]
    b2: np.ndarray  # [c]

    def __post_init__(self):
        h, d = self.w1.shape
        c = self.w2.shape[0]
        if self.b1.shape != (h,) or self.w2.shape != (c, h) or self.b2.shape != (c,):
            raise ValueError("inconsistent parameter shapes")

    @property
    def dims(self) -> tuple[int, int, int]:
        """``(d, hidden, c)``."""
        return self.w1.shape[1], self.w1.shape[0], self.w2.shape[0]

    def arrays(self) -> list[np.ndarray]:
        return [self.w1, self.b1, self.w2, self.b2]

    def flat(self) -> np.ndarray:
        return np.concatenate([a.ravel() for a in self.arrays()])

    @classmethod
    def from_flat(cls, vec, dims) -> "MlpParams":
        d, h, c = dims
        sizes = [h * d, h, c * h, c]
        parts = np.split(np.asarray(vec, dtype=np.float64), np.cumsum(sizes)[:-1])
        return cls(parts[0].reshape(h, d), parts[1].copy(), parts[2].reshape(c, h), parts[3].copy())

    def copy(self) -> "MlpParams":
        return MlpParams(*(a.copy() for a in self.arrays()))

    def map(self, fn, other: "MlpParams | None" = None) -> "MlpParams":
        if other is None:
            return MlpParams(*(fn(a) for a in self.arrays()))
        return MlpParams(*(fn(a, b) for a, b in zip(self.arrays(), other.arrays())))

    def sq_norm(self) -> float:
        return float(sum(np.sum(a * a) for a in self.arrays()))

    def all_finite(self) -> bool:
        return all(np.all(np.isfinite(a)) for a in self.arrays())

    def save(self, path) -> None:
        """Little-endian float64 payload after a length-prefixed JSON header."""
        header = json.dumps({"format": "subgreedy-mlp", "dtype": "<f8",
                             "shapes": {n: list(a.shape) for n, a in zip(PARAM_NAMES, self.arrays())}}).encode()
        with open(path, "wb") as fh:
            fh.write(struct.pack("<I", len(header)))
            fh.write(header)
            fh.write(self.flat().astype("<f8").tobytes())

    @classmethod
    def load(cls, path) -> "MlpParams":
        with open(path, "rb") as fh:
            (size,) = struct.unpack("<I", fh.read(4))
            header = json.loads(fh.read(size))
            data = np.frombuffer(fh.read(), dtype="<f8").astype(np.float64)
        arrays, offset = [], 0
        for name in PARAM_NAMES:
            shape = tuple(header["shapes"][name])
            count = math.prod(shape)
            arrays.append(data[offset:offset + count].reshape(shape).copy())
            offset += count
        if offset != len(data):
            raise ValueError("parameter file size does not match header")
        return cls(*arrays)


def init_params(d: int, c: int, hidden: int = 128, seed=0) -> MlpParams:
    """Per-layer U(-1/sqrt(fan_in), 1/sqrt(fan_in)) for weights and biases."""
    rng = np.random.default_rng(seed)
    s1, s2 = 1.0 / math.sqrt(d), 1.0 / math.sqrt(hidden)
    return MlpParams(
        rng.uniform(-s1, s1, (hidden, d)),
        rng.uniform(-s1, s1, hidden),
        rng.uniform(-s2, s2, (c, hidden)),
        rng.uniform(-s2, s2, c),
    )


def zero_params(d: int, c: int, hidden: int = 128) -> MlpParams:
    return MlpParams(np.zeros((hidden, d)), np.zeros(hidden), np.zeros((c, hidden)), np.zeros(c))


def softmax(logits: np.ndarray) -> np.ndarray:
    z = logits - logits.max(axis=1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=1, keepdims=True)


@dataclass
class ForwardCache:
    x: np.ndarray
    pre: np.ndarray
    hidden: np.ndarray
    logits: np.ndarray
    probs: np.ndarray


def forward_cache(params: MlpParams, x) -> ForwardCache:
    x = np.asarray(x, dtype=np.float64)
    if x.ndim != 2 or x.shape[1] != params.dims[0]:
        raise ValueError(f"expected inputs of width {params.dims[0]}, got shape {x.shape}")
    pre = x @ params.w1.T + params.b1
    hidden = np.maximum(pre, 0.0)
    logits = hidden @ params.w2.T + params.b2
    return ForwardCache(x, pre, hidden, logits, softmax(logits))


def forward(params: MlpParams, x) -> np.ndarray:
    """Class probabilities, one row per input."""
    return forward_cache(params, x).probs


def backward_logits(params: MlpParams, cache: ForwardCache, dlogits: np.ndarray) -> MlpParams:
    """Parameter gradient given the gradient with respect to the logits."""
    dw2 = dlogits.T @ cache.hidden
    db2 = dlogits.sum(axis=0)
    dpre = (dlogits @ params.w2) * (cache.pre > 0)
    dw1 = dpre.T @ cache.x
    db1 = dpre.sum(axis=0)
    return MlpParams(dw1, db1, dw2, db2)


def backward_probs(params: MlpParams, cache: ForwardCache, dprobs: np.ndarray) -> MlpParams:
    """Parameter gradient given the gradient with respect to the probabilities."""
    p = cache.probs
    dlogits = p * (dprobs - np.sum(dprobs * p, axis=1, keepdims=True))
    return backward_logits(params, cache, dlogits)


def cross_entropy(probs: np.ndarray, labels) -> float:
    labels = np.asarray(labels)
    return float(-np.mean(np.log(probs[np.arange(len(labels)), labels])))


def loss_and_grad(params: MlpParams, x, labels, weight_decay: float = 0.0) -> tuple[float, MlpParams]:
    """Mean cross-entropy plus ``weight_decay * ||theta||^2`` and its gradient."""
    labels = np.asarray(labels, dtype=np.int64)
    cache = forward_cache(params, x)
    c = params.dims[2]
    if np.any(labels < 0) or np.any(labels >= c):
        raise ValueError(f"labels must lie in [0, {c})")
    n = len(labels)
    logp = cache.logits - cache.logits.max(axis=1, keepdims=True)
    logp = logp - np.log(np.exp(logp).sum(axis=1, keepdims=True))
    loss = -float(np.mean(logp[np.arange(n), labels])) + weight_decay * params.sq_norm()
    dlogits = cache.probs.copy()
    dlogits[np.arange(n), labels] -= 1.0
    grad = backward_logits(params, cache, dlogits / n)
    grad = grad.map(lambda g, w: g + 2.0 * weight_decay * w, params)
    return loss, grad


@dataclass
class Schedule:
    """Learning-rate multiplier over the fraction of training completed.

    ``warmup_linear`` ramps from ``warmup_start_scale`` to 1 over
    ``warmup_frac``, holds, then anneals linearly to ``final_scale`` between
    ``anneal_start_frac`` and ``anneal_end_frac``.
    """

    kind: str = "constant"
    warmup_frac: float = 0.05
    anneal_start_frac: float = 0.5
    anneal_end_frac: float = 0.9
    final_scale: float = 0.01
    warmup_start_scale: float = 0.1

    def scale(self, progress: float) -> float:
        if self.kind == "constant":
            return 1.0
        if self.kind != "warmup_linear":
            raise ValueError(f"unknown schedule {self.kind!r}")
        if progress < self.warmup_frac:
            frac = progress / self.warmup_frac
            return self.warmup_start_scale + (1.0 - self.warmup_start_scale) * frac
        if progress < self.anneal_start_frac:
            return 1.0
        if progress < self.anneal_end_frac:
            frac = (progress - self.anneal_start_frac) / (self.anneal_end_frac - self.anneal_start_frac)
            return 1.0 + (self.final_scale - 1.0) * frac
        return self.final_scale


@dataclass
class TrainConfig:
    learning_rate: float = 0.05
    momentum: float = 0.9
    weight_decay: float = 1e-4
    epochs: int = 200
    batch_size: int = 32
    seed: int = 0
    hidden: int = 128
    schedule: Schedule = field(default_factory=Schedule)
    val_fraction: float = 0.0

    def __post_init__(self):
        if self.learning_rate < 0:
            raise ValueError("learning_rate must be non-negative")
        if not 0 <= self.momentum < 1:
            raise ValueError("momentum must lie in [0, 1)")
        if self.weight_decay < 0:
            raise ValueError("weight_decay must be non-negative")
        if not 0 <= self.val_fraction < 1:
            raise ValueError("val_fraction must lie in [0, 1)")


@dataclass
class TrainResult:
    params: MlpParams
    losses: list[float]
    extra: list[float]
    best_epoch: int | None = None


ExtraGrad = Callable[[MlpParams], "tuple[float, MlpParams]"]


def _split_validation(n: int, frac: float, labels, rng) -> tuple[np.ndarray, np.ndarray]:
    """Stratified split of row indices into (train, validation)."""
    train, val = [], []
    for cls in np.unique(labels):
        idx = rng.permutation(np.flatnonzero(labels == cls))
        k = int(round(frac * len(idx)))
        val.extend(idx[:k])
        train.extend(idx[k:])
    return np.sort(np.array(train, dtype=np.int64)), np.sort(np.array(val, dtype=np.int64))


def sgd_train(params: MlpParams, x, labels, cfg: TrainConfig, extra_grad: ExtraGrad | None = None) -> TrainResult:
    """Minibatch SGD with heavy-ball momentum.

    ``extra_grad(params)`` is called once per minibatch and its gradient added
    to the loss gradient. Shuffling uses ``cfg.seed`` only, so two runs with
    the same seed follow identical trajectories.
    """
    x = np.asarray(x, dtype=np.float64)
    labels = np.asarray(labels, dtype=np.int64)
    if len(x) == 0:
        raise ValueError("empty dataset")
    rng = np.random.default_rng(cfg.seed)
    train_idx = np.arange(len(x))
    val_idx = np.array([], dtype=np.int64)
    if cfg.val_fraction > 0:
        train_idx, val_idx = _split_validation(len(x), cfg.val_fraction, labels, rng)
    params = params.copy()
    velocity = params.map(np.zeros_like)
    n = len(train_idx)
    steps_per_epoch = math.ceil(n / cfg.batch_size)
    total = cfg.epochs * steps_per_epoch
    losses, extras = [], []
    best = (-1.0, None, None)
    step = 0
    for epoch in range(cfg.epochs):
        order = train_idx[rng.permutation(n)]
        for start in range(0, n, cfg.batch_size):
            batch = order[start:start + cfg.batch_size]
            loss, grad = loss_and_grad(params, x[batch], labels[batch], cfg.weight_decay)
            extra_value = 0.0
            if extra_grad is not None:
                extra_value, extra_g = extra_grad(params)
                grad = grad.map(np.add, extra_g)
            if not (math.isfinite(loss) and math.isfinite(extra_value)):
                raise TrainingDivergedError(
                    f"non-finite objective at epoch {epoch}, step {step}: loss={loss!r}, extra={extra_value!r}")
            lr = cfg.learning_rate * cfg.schedule.scale(step / total)
            velocity = velocity.map(lambda v, g: cfg.momentum * v + g, grad)
            params = params.map(lambda w, v: w - lr * v, velocity)
            losses.append(loss)
            extras.append(extra_value)
            step += 1
        if len(val_idx):
            acc = float(np.mean(np.argmax(forward(params, x[val_idx]), axis=1) == labels[val_idx]))
            if acc > best[0]:
                best = (acc, epoch, params.copy())
    if not params.all_finite():
        raise TrainingDivergedError("parameters became non-finite")
    if len(val_idx):
        return TrainResult(best[2], losses, extras, best[1])
    return TrainResult(params, losses, extras)


def train_member(x, labels, cfg: TrainConfig, seed, n_classes: int | None = None,
                 extra_grad: ExtraGrad | None = None) -> TrainResult:
    """Initialize and shuffle from two streams derived from ``seed``."""
    init_seed, shuffle_seed = (int(s.generate_state(1)[0]) for s in np.random.SeedSequence(seed).spawn(2))
    c = n_classes or int(np.max(labels)) + 1
    params = init_params(np.asarray(x).shape[1], c, cfg.hidden, init_seed)
    return sgd_train(params, x, labels, replace(cfg, seed=shuffle_seed), extra_grad)
