"""Toy datasets, grid targets and synthetic out-of-distribution inputs.

Every generator draws from numpy's PCG64 bit generator seeded through
``SeedSequence(seed, spawn_key=(STREAM,))`` where ``STREAM`` is a fixed small
integer per generator, so two generators given the same seed never share a
stream.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass

import numpy as np

from .divergence import DEFAULT_GRID, Grid, GridDensity

_STREAMS = {"two_moons": 1, "gaussian_noise": 2, "uniform_noise": 3, "bernoulli_noise": 4, "blobs": 5,
            "split": 6, "weighting": 7}


def rng_for(seed: int, stream: str) -> np.random.Generator:
    return np.random.Generator(np.random.PCG64(np.random.SeedSequence(int(seed), spawn_key=(_STREAMS[stream],))))


@dataclass
class Dataset:
    features: np.ndarray
    labels: np.ndarray
    name: str = "dataset"
    seed: int | None = None

    def __post_init__(self):
        self.features = np.asarray(self.features, dtype=np.float64)
        self.labels = np.asarray(self.labels, dtype=np.int64)
        if self.features.ndim != 2 or len(self.features) < 1:
            raise ValueError("features must be a non-empty [n, d] matrix")
        if len(self.labels) != len(self.features) or np.any(self.labels < 0):
            raise ValueError("labels must be non-negative, one per row")

    @property
    def n_classes(self) -> int:
        return int(self.labels.max()) + 1

    def __len__(self) -> int:
        return len(self.labels)

    def to_csv(self, path) -> None:
        d = self.features.shape[1]
        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow([f"x{i}" for i in range(d)] + ["label"])
            for row, y in zip(self.features, self.labels):
                writer.writerow([repr(float(v)) for v in row] + [int(y)])

    @classmethod
    def from_csv(cls, path, name: str | None = None) -> "Dataset":
        data = np.loadtxt(path, delimiter=",", skiprows=1, ndmin=2)
        return cls(data[:, :-1], data[:, -1].astype(np.int64), name or str(path))


def two_moons(n: int = 300, noise: float = 0.3, seed: int = 0) -> Dataset:
    """Two interleaved unit half-circles; the second is shifted by (1, -0.5).

    Class 0 is the upper arc. Rows are shuffled.
    """
    if n < 2:
        raise ValueError("two_moons needs at least 2 points")
    if n % 2:
        raise ValueError("two_moons needs an even number of points")
    half = n // 2
    rng = rng_for(seed, "two_moons")
    t = np.linspace(0.0, math.pi, half)
    upper = np.stack([np.cos(t), np.sin(t)], axis=1)
    lower = np.stack([1.0 - np.cos(t), 0.5 - np.sin(t)], axis=1)
    x = np.concatenate([upper, lower])
    y = np.concatenate([np.zeros(half, np.int64), np.ones(half, np.int64)])
    if noise > 0:
        x = x + rng.normal(scale=noise, size=x.shape)
    order = rng.permutation(n)
    return Dataset(x[order], y[order], "two_moons", seed)


def gaussian_mixture_target(means, stds, weights, grid: Grid = DEFAULT_GRID) -> GridDensity:
    """Isotropic Gaussian mixture tabulated on ``grid``.

    Values are rescaled by the grid integral, which only matters when a
    component has visible mass outside the grid.
    """
    means = np.asarray(means, dtype=np.float64).reshape(len(stds), -1) if len(stds) else np.zeros((0, 1))
    stds = np.asarray(stds, dtype=np.float64)
    weights = np.asarray(weights, dtype=np.float64)
    if not (len(means) == len(stds) == len(weights)) or len(stds) == 0:
        raise ValueError("means, stds and weights must have the same non-zero length")
    if means.shape[1] != grid.dim:
        raise ValueError(f"means have dimension {means.shape[1]}, grid has {grid.dim}")
    if np.any(stds <= 0) or np.any(weights < 0) or abs(weights.sum() - 1.0) > 1e-9:
        raise ValueError("stds must be positive and weights a probability vector")
    values = mixture_pdf(grid.points(), means, stds, weights)
    return GridDensity(grid, values).normalize()


def mixture_pdf(points, means, stds, weights) -> np.ndarray:
    points = np.asarray(points, dtype=np.float64)
    means = np.asarray(means, dtype=np.float64).reshape(len(stds), -1)
    dim = means.shape[1]
    out = np.zeros(len(points))
    for m, s, w in zip(means, stds, weights):
        sq = np.sum((points - m) ** 2, axis=1)
        out += w * (2 * math.pi * s * s) ** (-0.5 * dim) * np.exp(-0.5 * sq / (s * s))
    return out


def synthetic_ood(kind: str, n: int, d: int, seed: int = 0, low: float = 0.0, high: float = 1.0) -> np.ndarray:
    """Noise inputs of shape ``[n, d]``.

    gaussian_noise: standard normal. uniform_noise: U[low, high].
    bernoulli_noise: {0, 1} with p = 0.5. blobs: four centers drawn from
    U[low, high]^d, points scattered around them with std 0.05 * (high - low).
    """
    if n < 0 or d < 1:
        raise ValueError("n must be >= 0 and d >= 1")
    if kind not in ("gaussian_noise", "uniform_noise", "bernoulli_noise", "blobs"):
        raise ValueError(f"unknown OOD kind {kind!r}")
    rng = rng_for(seed, kind)
    if kind == "gaussian_noise":
        return rng.standard_normal((n, d))
    if kind == "uniform_noise":
        return rng.uniform(low, high, (n, d))
    if kind == "bernoulli_noise":
        return rng.integers(0, 2, (n, d)).astype(np.float64)
    centers = rng.uniform(low, high, (4, d))
    which = rng.integers(0, 4, n)
    return centers[which] + rng.normal(scale=0.05 * (high - low), size=(n, d))


def eval_grid(bounds, resolution: int) -> np.ndarray:
    """Row-major lattice (last coordinate varies fastest) over ``bounds``."""
    bounds = np.asarray(bounds, dtype=np.float64).reshape(-1, 2)
    if resolution < 2:
        raise ValueError("resolution must be >= 2")
    axes = [np.linspace(lo, hi, resolution) for lo, hi in bounds]
    mesh = np.meshgrid(*axes, indexing="ij")
    return np.stack([m.ravel() for m in mesh], axis=1)
