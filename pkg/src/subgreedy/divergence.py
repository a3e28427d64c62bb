"""f-divergence generators and midpoint-rule divergences between grid densities."""

from __future__ import annotations

import csv
import enum
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

# Added to both arguments before forming p / q.
EPS = 1e-12


class FGenerator(str, enum.Enum):
    """Convex generators with f(1) = 0."""

    FORWARD_KL = "forward_kl"
    REVERSE_KL = "reverse_kl"
    CHI_SQUARED = "chi_squared"
    SQUARED_HELLINGER = "squared_hellinger"
    TOTAL_VARIATION = "total_variation"


def _as_generator(gen) -> FGenerator:
    return gen if isinstance(gen, FGenerator) else FGenerator(gen)


def generator_eval(gen, t):
    """Evaluate the generator ``f(t)`` elementwise.

    ``t = 0`` uses the right limit (``t log t -> 0`` for forward KL, ``+inf``
    for reverse KL). Negative or non-finite ``t`` raises ``ValueError``.
    """
    gen = _as_generator(gen)
    arr = np.asarray(t, dtype=np.float64)
    if not np.all(np.isfinite(arr)) or np.any(arr < 0):
        raise ValueError("generator argument must be finite and non-negative")
    with np.errstate(divide="ignore", invalid="ignore"):
        if gen is FGenerator.FORWARD_KL:
            out = np.where(arr > 0, arr * np.log(np.where(arr > 0, arr, 1.0)), 0.0)
        elif gen is FGenerator.REVERSE_KL:
            out = -np.log(arr)
        elif gen is FGenerator.CHI_SQUARED:
            out = (arr - 1.0) ** 2
        elif gen is FGenerator.SQUARED_HELLINGER:
            out = (np.sqrt(arr) - 1.0) ** 2
        else:
            out = 0.5 * np.abs(arr - 1.0)
    if np.ndim(t) == 0:
        return float(out)
    return out


def perspective(gen, p, q):
    """Pointwise integrand ``f(p / q) * q`` with both arguments shifted by EPS.

    The shift is affine in ``q`` so the integrand stays convex in ``q``, which
    is what makes the mixture divergence supermodular in the kernel set.
    """
    gen = _as_generator(gen)
    p = np.asarray(p, dtype=np.float64) + EPS
    q = np.asarray(q, dtype=np.float64) + EPS
    # closed forms avoid forming huge ratios where q is tiny
    if gen is FGenerator.FORWARD_KL:
        return p * (np.log(p) - np.log(q))
    if gen is FGenerator.REVERSE_KL:
        return q * (np.log(q) - np.log(p))
    if gen is FGenerator.CHI_SQUARED:
        return (p - q) ** 2 / q
    if gen is FGenerator.SQUARED_HELLINGER:
        return (np.sqrt(p) - np.sqrt(q)) ** 2
    return 0.5 * np.abs(p - q)


@dataclass(frozen=True)
class Grid:
    """Uniform lattice over a 1D interval or a 2D box.

    Points include both bounds; the midpoint rule assigns each point a cell of
    volume ``prod(step)``.
    """

    lower: tuple[float, ...]
    upper: tuple[float, ...]
    points_per_dim: int

    def __post_init__(self):
        lower = tuple(float(v) for v in np.atleast_1d(self.lower))
        upper = tuple(float(v) for v in np.atleast_1d(self.upper))
        object.__setattr__(self, "lower", lower)
        object.__setattr__(self, "upper", upper)
        if len(lower) != len(upper) or len(lower) not in (1, 2):
            raise ValueError("grid must be 1D or 2D with matching bounds")
        if any(hi <= lo for lo, hi in zip(lower, upper)):
            raise ValueError("upper bound must exceed lower bound")
        if int(self.points_per_dim) < 2:
            raise ValueError("points_per_dim must be at least 2")
        object.__setattr__(self, "points_per_dim", int(self.points_per_dim))

    @property
    def dim(self) -> int:
        return len(self.lower)

    @property
    def shape(self) -> tuple[int, ...]:
        return (self.points_per_dim,) * self.dim

    @property
    def step(self) -> np.ndarray:
        return (np.array(self.upper) - np.array(self.lower)) / (self.points_per_dim - 1)

    @property
    def cell_volume(self) -> float:
        return float(np.prod(self.step))

    def axes(self) -> list[np.ndarray]:
        return [np.linspace(lo, hi, self.points_per_dim) for lo, hi in zip(self.lower, self.upper)]

    def points(self) -> np.ndarray:
        """Row-major ``(N, dim)`` array of lattice points."""
        mesh = np.meshgrid(*self.axes(), indexing="ij")
        return np.stack([m.ravel() for m in mesh], axis=1)

    def refine(self, factor: int) -> "Grid":
        return Grid(self.lower, self.upper, (self.points_per_dim - 1) * factor + 1)


DEFAULT_GRID = Grid((-10.0,), (10.0,), 2001)


@dataclass
class GridDensity:
    grid: Grid
    values: np.ndarray
    normalized: bool = field(default=False)

    def __post_init__(self):
        values = np.asarray(self.values, dtype=np.float64).reshape(self.grid.shape)
        if not np.all(np.isfinite(values)) or np.any(values < 0):
            raise ValueError("density values must be finite and non-negative")
        self.values = values
        if self.normalized and abs(self.integral() - 1.0) > 1e-6:
            raise ValueError(f"density flagged normalized but integrates to {self.integral():.9g}")

    @property
    def dim(self) -> int:
        return self.grid.dim

    def integral(self) -> float:
        return float(np.sum(self.values) * self.grid.cell_volume)

    def normalize(self) -> "GridDensity":
        return GridDensity(self.grid, self.values / self.integral(), normalized=True)

    def at(self, z) -> float:
        """Linear (1D) or bilinear (2D) interpolation; zero outside the grid."""
        return float(self.at_many(np.atleast_1d(np.asarray(z, dtype=np.float64))[None, :])[0])

    def at_many(self, points) -> np.ndarray:
        points = np.asarray(points, dtype=np.float64).reshape(-1, self.dim)
        if self.dim == 1:
            return np.interp(points[:, 0], self.grid.axes()[0], self.values, left=0.0, right=0.0)
        from scipy.interpolate import RegularGridInterpolator

        interp = RegularGridInterpolator(self.grid.axes(), self.values, bounds_error=False, fill_value=0.0)
        return interp(points)

    def to_csv(self, path) -> None:
        pts = self.grid.points()
        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow([f"z{i}" for i in range(self.dim)] + ["value"])
            for row, v in zip(pts, self.values.ravel()):
                writer.writerow([repr(float(c)) for c in row] + [repr(float(v))])

    @classmethod
    def from_csv(cls, path, normalized: bool | None = None) -> "GridDensity":
        data = np.loadtxt(Path(path), delimiter=",", skiprows=1, ndmin=2)
        coords, values = data[:, :-1], data[:, -1]
        dim = coords.shape[1]
        n = round(len(values) ** (1.0 / dim))
        if n**dim != len(values):
            raise ValueError("CSV rows do not form a square lattice")
        grid = Grid(tuple(coords.min(axis=0)), tuple(coords.max(axis=0)), n)
        if not np.allclose(grid.points(), coords, rtol=0, atol=1e-9 * max(1.0, np.abs(coords).max())):
            raise ValueError("CSV coordinates are not a row-major uniform lattice")
        dens = cls(grid, values)
        if normalized is None:
            normalized = abs(dens.integral() - 1.0) <= 1e-6
        dens.normalized = bool(normalized)
        return dens


def _check_same_grid(p: GridDensity, q: GridDensity) -> None:
    if p.grid != q.grid or p.values.shape != q.values.shape:
        raise ValueError(f"grid mismatch: {p.grid} vs {q.grid}")


def f_divergence(p: GridDensity, q: GridDensity, gen) -> float:
    """Midpoint-rule approximation of ``D_f(p || q) = int f(p/q) q dz``.

    ``q`` may be unnormalized (a partially filled mixture).
    """
    _check_same_grid(p, q)
    return float(np.sum(perspective(gen, p.values, q.values)) * p.grid.cell_volume)


def f_divergence_values(p_values, q_values, gen, cell_volume: float):
    """Divergence for raw arrays; ``q_values`` may carry leading batch axes."""
    integrand = perspective(gen, p_values, q_values)
    axes = tuple(range(integrand.ndim - np.ndim(p_values), integrand.ndim))
    return np.sum(integrand, axis=axes) * cell_volume
