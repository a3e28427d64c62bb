"""Equal-weight Gaussian kernel mixtures with a fixed 1/M normalization."""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field

import numpy as np

from .divergence import Grid, GridDensity


@dataclass(frozen=True)
class Kernel:
    """Isotropic Gaussian; ``bandwidth`` is the standard deviation."""

    center: tuple[float, ...]
    bandwidth: float

    def __post_init__(self):
        center = tuple(float(c) for c in np.atleast_1d(self.center))
        object.__setattr__(self, "center", center)
        if not self.bandwidth > 0:
            raise ValueError("bandwidth must be positive")

    @property
    def dim(self) -> int:
        return len(self.center)

    def density(self, z) -> np.ndarray:
        """Evaluate at points ``z`` of shape ``(N, dim)`` (or one point)."""
        z = np.asarray(z, dtype=np.float64)
        single = z.ndim <= 1
        z = z.reshape(-1, self.dim)
        sq = np.sum((z - np.asarray(self.center)) ** 2, axis=1)
        norm = (2.0 * math.pi * self.bandwidth**2) ** (-0.5 * self.dim)
        out = norm * np.exp(-0.5 * sq / self.bandwidth**2)
        return out[0] if single else out


def kernel_matrix(centers, bandwidth: float, points) -> np.ndarray:
    """Densities of one kernel per row of ``centers`` at every point; ``(K, N)``."""
    centers = np.asarray(centers, dtype=np.float64)
    points = np.asarray(points, dtype=np.float64)
    if centers.ndim == 1:
        centers = centers[:, None]
    dim = centers.shape[1]
    sq = np.sum((centers[:, None, :] - points[None, :, :]) ** 2, axis=2)
    return (2.0 * math.pi * bandwidth**2) ** (-0.5 * dim) * np.exp(-0.5 * sq / bandwidth**2)


@dataclass
class KernelMixture:
    """``q(z) = (1/capacity_m) * sum_j K_j(z)``.

    The weight stays ``1/capacity_m`` while the mixture is being filled, so a
    mixture with ``k`` kernels carries mass ``k / capacity_m``.
    """

    capacity_m: int
    kernels: list[Kernel] = field(default_factory=list)

    def __post_init__(self):
        if self.capacity_m < 1:
            raise ValueError("capacity_m must be >= 1")
        if len(self.kernels) > self.capacity_m:
            raise ValueError("more kernels than capacity_m")

    def __len__(self) -> int:
        return len(self.kernels)

    @property
    def is_full(self) -> bool:
        return len(self.kernels) == self.capacity_m

    def add(self, kernel: Kernel) -> "KernelMixture":
        """Return a new mixture with ``kernel`` appended."""
        if self.is_full:
            raise ValueError("mixture already holds capacity_m kernels")
        return KernelMixture(self.capacity_m, [*self.kernels, kernel])

    def density(self, z) -> np.ndarray:
        z = np.asarray(z, dtype=np.float64)
        single = z.ndim <= 1
        pts = z.reshape(1, -1) if single else z
        total = np.zeros(len(pts))
        for k in self.kernels:
            total = total + k.density(pts)
        total = total / self.capacity_m
        return total[0] if single else total

    def to_json(self) -> str:
        payload = {
            "capacity_m": self.capacity_m,
            "kernels": [{"center": list(k.center), "bandwidth": k.bandwidth} for k in self.kernels],
        }
        return json.dumps(payload, indent=2)

    @classmethod
    def from_json(cls, text: str) -> "KernelMixture":
        payload = json.loads(text)
        kernels = [Kernel(tuple(k["center"]), float(k["bandwidth"])) for k in payload["kernels"]]
        return cls(int(payload["capacity_m"]), kernels)


def mixture_density(mix: KernelMixture, z) -> float:
    return float(mix.density(np.atleast_1d(np.asarray(z, dtype=np.float64))))


def mixture_on_grid(mix: KernelMixture, grid: Grid) -> GridDensity:
    """Tabulate the mixture; flagged normalized only once it is full."""
    values = mix.density(grid.points()) if mix.kernels else np.zeros(int(np.prod(grid.shape)))
    dens = GridDensity(grid, values)
    dens.normalized = mix.is_full and abs(dens.integral() - 1.0) <= 1e-6
    return dens
