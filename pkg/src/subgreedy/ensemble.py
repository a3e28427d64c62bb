"""Greedy ensemble training with a log-sum-exp diversity term.

Member ``k`` minimizes its own risk plus weight decay plus

    log sum_{j<k} exp(-(lambda_m / M) * mean_x ||z_k(x) - z_j(x)||^2)

where ``x`` runs over samples from a broad weighting distribution. Outputs of
earlier members on the weighting samples are computed once per step.
"""

from __future__ import annotations

import hashlib
import json
import logging
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np
from scipy.special import logsumexp

from .data import rng_for
from .nn import (MlpParams, TrainConfig, backward_logits, backward_probs, forward, forward_cache, loss_and_grad,
                 train_member)

logger = logging.getLogger(__name__)


@dataclass
class DiversityConfig:
    lambda_m: float = 0.0
    capacity_m: int = 11
    alpha: float = 5.0
    weighting_source: str = "gaussian_heuristic"  # or a path to a CSV/.npy of feature rows
    n_weighting_samples: int | None = None  # defaults to the training-set size
    output_space: str = "probs"  # probs | logits

    def __post_init__(self):
        if self.lambda_m < 0:
            raise ValueError("lambda_m must be non-negative")
        if self.capacity_m < 1:
            raise ValueError("capacity_m must be >= 1")
        if self.weighting_source == "gaussian_heuristic" and self.alpha < 1:
            raise ValueError("alpha must be >= 1 for the Gaussian heuristic")
        if self.output_space not in ("probs", "logits"):
            raise ValueError(f"unknown output space {self.output_space!r}")


def sample_weighting(x, alpha: float = 5.0, n: int | None = None, seed=0) -> np.ndarray:
    """Draws from N(mean_j, (alpha * std_j)^2) fitted per input dimension."""
    x = np.asarray(x, dtype=np.float64)
    if x.ndim != 2 or len(x) < 2:
        raise ValueError("need at least two rows to estimate the weighting distribution")
    n = len(x) if n is None else int(n)
    mu = x.mean(axis=0)
    sigma = np.maximum(x.std(axis=0), 1e-8)
    rng = rng_for(seed, "weighting")
    return mu + alpha * sigma * rng.standard_normal((n, x.shape[1]))


def load_weighting(path) -> np.ndarray:
    path = Path(path)
    if path.suffix == ".npy":
        return np.load(path).astype(np.float64)
    return np.loadtxt(path, delimiter=",", ndmin=2)


def diversity_term(current, cached, lambda_m: float, capacity_m: int) -> tuple[float, np.ndarray]:
    """Value and gradient (with respect to ``current``) of the diversity term.

    ``current`` is ``[n, c]``; ``cached`` holds one ``[n, c]`` array per
    earlier member. With no earlier members the term is zero.
    """
    current = np.asarray(current, dtype=np.float64)
    if len(cached) == 0:
        return 0.0, np.zeros_like(current)
    cached = np.stack([np.asarray(c, dtype=np.float64) for c in cached])
    if cached.shape[1:] != current.shape:
        raise ValueError(f"cached outputs {cached.shape[1:]} do not match current outputs {current.shape}")
    n = current.shape[0]
    diff = current[None] - cached  # [k-1, n, c]
    dist = np.sum(diff * diff, axis=(1, 2)) / n
    scale = lambda_m / capacity_m
    logits = -scale * dist
    value = float(logsumexp(logits))
    if scale == 0:
        return value, np.zeros_like(current)
    weights = np.exp(logits - value)
    grad = -scale * np.tensordot(weights, diff, axes=1) * (2.0 / n)
    return value, grad


def mean_pairwise_distance(outputs) -> float:
    """Mean over member pairs of ``mean_x ||z_i(x) - z_j(x)||^2``."""
    outputs = np.asarray(outputs)
    m = len(outputs)
    if m < 2:
        return 0.0
    total = [np.mean(np.sum((outputs[i] - outputs[j]) ** 2, axis=1)) for i in range(m) for j in range(i + 1, m)]
    return float(np.mean(total))


def member_seeds(seed: int, m: int) -> list[int]:
    return [int(s.generate_state(1)[0]) for s in np.random.SeedSequence(seed).spawn(m)]


def _outputs(params: MlpParams, x, space: str) -> np.ndarray:
    cache = forward_cache(params, x)
    return cache.probs if space == "probs" else cache.logits


@dataclass
class MemberLog:
    seed: int
    final_loss: float
    final_diversity: float
    best_epoch: int | None = None


@dataclass
class MlpEnsemble:
    members: list[MlpParams] = field(default_factory=list)
    diversity: DiversityConfig = field(default_factory=DiversityConfig)
    logs: list[MemberLog] = field(default_factory=list)

    def __len__(self) -> int:
        return len(self.members)

    def save(self, directory, extra_manifest: dict | None = None) -> None:
        directory = Path(directory)
        directory.mkdir(parents=True, exist_ok=True)
        files = []
        for k, params in enumerate(self.members):
            name = f"member_{k:03d}.bin"
            params.save(directory / name)
            files.append(name)
        manifest = {
            "members": files,
            "diversity": asdict(self.diversity),
            "logs": [asdict(log) for log in self.logs],
            **(extra_manifest or {}),
        }
        (directory / "manifest.json").write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n")

    @classmethod
    def load(cls, directory) -> "MlpEnsemble":
        directory = Path(directory)
        manifest = json.loads((directory / "manifest.json").read_text())
        members = [MlpParams.load(directory / name) for name in manifest["members"]]
        return cls(members, DiversityConfig(**manifest["diversity"]), [MemberLog(**log) for log in manifest["logs"]])


def config_hash(*configs) -> str:
    text = json.dumps([asdict(c) for c in configs], sort_keys=True, default=str)
    return hashlib.sha256(text.encode()).hexdigest()


def train_greedy_ensemble(x, labels, train_cfg: TrainConfig, div_cfg: DiversityConfig, seed: int = 0,
                          weighting: np.ndarray | None = None) -> MlpEnsemble:
    """Train ``div_cfg.capacity_m`` members one after another.

    Member ``k`` uses ``member_seeds(seed, M)[k]`` for initialization and
    shuffling, so with ``lambda_m = 0`` every member equals an independent run
    with that seed.
    """
    x = np.asarray(x, dtype=np.float64)
    labels = np.asarray(labels, dtype=np.int64)
    n_classes = int(labels.max()) + 1
    M = div_cfg.capacity_m
    seeds = member_seeds(seed, M)
    ens = MlpEnsemble(diversity=div_cfg)
    if M > 1 and weighting is None:
        if div_cfg.weighting_source == "gaussian_heuristic":
            weighting = sample_weighting(x, div_cfg.alpha, div_cfg.n_weighting_samples, seed)
        else:
            weighting = load_weighting(div_cfg.weighting_source)
    for k in range(M):
        extra = None
        if k > 0:
            cached = np.stack([_outputs(m, weighting, div_cfg.output_space) for m in ens.members])
            extra = _diversity_grad(weighting, cached, div_cfg, train_cfg.batch_size,
                                    np.random.default_rng(np.random.SeedSequence(seeds[k], spawn_key=(99,))))
        result = train_member(x, labels, train_cfg, seeds[k], n_classes, extra)
        ens.members.append(result.params)
        ens.logs.append(MemberLog(seeds[k], float(result.losses[-1]), float(result.extra[-1]), result.best_epoch))
        logger.info("member %d/%d trained: loss=%.4f diversity=%.4f", k + 1, M, result.losses[-1], result.extra[-1])
    return ens


def _diversity_grad(weighting, cached, div_cfg: DiversityConfig, batch_size: int, rng):
    """Callback for ``sgd_train``: diversity value and parameter gradient on a
    fresh minibatch of weighting samples."""
    n = len(weighting)

    def extra(params: MlpParams):
        idx = rng.integers(0, n, min(batch_size, n))
        cache = forward_cache(params, weighting[idx])
        out = cache.probs if div_cfg.output_space == "probs" else cache.logits
        value, dout = diversity_term(out, list(cached[:, idx]), div_cfg.lambda_m, div_cfg.capacity_m)
        if div_cfg.output_space == "probs":
            return value, backward_probs(params, cache, dout)
        return value, backward_logits(params, cache, dout)

    return extra


def composite_objective(params: MlpParams, x, labels, weight_decay: float, weighting_batch, cached_batch,
                        div_cfg: DiversityConfig) -> tuple[float, MlpParams]:
    """Per-step objective of member k on one minibatch and one weighting batch."""
    loss, grad = loss_and_grad(params, x, labels, weight_decay)
    cache = forward_cache(params, weighting_batch)
    out = cache.probs if div_cfg.output_space == "probs" else cache.logits
    value, dout = diversity_term(out, list(cached_batch), div_cfg.lambda_m, div_cfg.capacity_m)
    back = backward_probs if div_cfg.output_space == "probs" else backward_logits
    return loss + value, grad.map(np.add, back(params, cache, dout))


def ensemble_predict(ens: MlpEnsemble | list, x) -> tuple[np.ndarray, np.ndarray]:
    """Equal-weight mean of member probabilities and the ``[M, n, c]`` stack."""
    members = ens.members if isinstance(ens, MlpEnsemble) else list(ens)
    if not members:
        raise ValueError("empty ensemble")
    stack = np.stack([forward(m, x) for m in members])
    return stack.mean(axis=0), stack


def ensemble_loss_bound(stack, labels) -> tuple[np.ndarray, np.ndarray]:
    """Per-sample cross-entropy of the averaged prediction and the average of
    member cross-entropies; by convexity the first never exceeds the second."""
    stack = np.asarray(stack, dtype=np.float64)
    labels = np.asarray(labels, dtype=np.int64)
    rows = np.arange(stack.shape[1])
    picked = stack[:, rows, labels]  # [M, n]
    with np.errstate(divide="ignore"):
        ens = -np.log(picked.mean(axis=0))
        members = -np.log(picked).mean(axis=0)
    return ens, members
