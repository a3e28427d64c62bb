"""Set functions over ``{0, ..., n-1}``: marginal gains, greedy maximizers,
brute-force optima and exhaustive/sampled submodularity checks."""

from __future__ import annotations

import itertools
import json
import logging
import math
from dataclasses import asdict, dataclass, field
from typing import Callable, Iterable

import numpy as np

logger = logging.getLogger(__name__)

TOLERANCE = 1e-9
BRUTE_FORCE_BUDGET = 10**6
EXHAUSTIVE_LIMIT = 12


class BudgetExceededError(RuntimeError):
    pass


def _key(subset: Iterable[int]) -> frozenset:
    return frozenset(int(i) for i in subset)


@dataclass
class SubsetObjective:
    """A deterministic set function; evaluations are memoized."""

    ground_set_size: int
    evaluate_fn: Callable[[frozenset], float]
    name: str = "objective"
    _cache: dict = field(default_factory=dict, repr=False)

    def evaluate(self, subset) -> float:
        key = _key(subset)
        if key not in self._cache:
            if any(i < 0 or i >= self.ground_set_size for i in key):
                raise IndexError(f"subset {sorted(key)} outside ground set of size {self.ground_set_size}")
            self._cache[key] = float(self.evaluate_fn(key))
        return self._cache[key]

    def __call__(self, subset) -> float:
        return self.evaluate(subset)

    def all_values(self) -> np.ndarray:
        """Values indexed by bitmask (bit i set means element i is present)."""
        n = self.ground_set_size
        return np.array([self.evaluate(_mask_to_set(b)) for b in range(1 << n)])

    def shifted(self, constant: float) -> "SubsetObjective":
        return SubsetObjective(self.ground_set_size, lambda s: self.evaluate(s) + constant, f"{self.name}+C")


def _mask_to_set(mask: int) -> frozenset:
    return frozenset(i for i in range(mask.bit_length()) if mask >> i & 1)


def modular_objective(weights) -> SubsetObjective:
    w = [float(v) for v in weights]
    return SubsetObjective(len(w), lambda s: math.fsum(w[i] for i in s), "modular")


def coverage_objective(covers: list[set]) -> SubsetObjective:
    """Number of universe items covered by the chosen sets."""
    covers = [frozenset(c) for c in covers]
    return SubsetObjective(len(covers), lambda s: float(len(frozenset().union(*(covers[i] for i in s)))), "coverage")


def marginal_gain(obj: SubsetObjective, base, candidate: int) -> float:
    base = _key(base)
    if candidate in base:
        raise ValueError(f"candidate {candidate} already in base set")
    return obj.evaluate(base | {candidate}) - obj.evaluate(base)


@dataclass
class SubmodularityReport:
    holds: bool
    worst_violation: float
    witness: dict | None
    checks: int
    mode: str

    def to_dict(self) -> dict:
        return asdict(self)


def check_submodular(obj: SubsetObjective, mode: str = "exhaustive", trials: int = 1000, seed=0,
                     tol: float = TOLERANCE) -> SubmodularityReport:
    """Test ``gain(x | A) >= gain(x | B) - tol`` over chains ``A <= B``, ``x not in B``.

    ``worst_violation`` is the minimum of ``gain(x | A) - gain(x | B)``; the
    witness holds the minimizing ``(A, B, x)``.
    """
    n = obj.ground_set_size
    if mode == "exhaustive":
        if n > EXHAUSTIVE_LIMIT:
            raise ValueError(f"exhaustive mode supports at most {EXHAUSTIVE_LIMIT} elements, got {n}")
        return _check_exhaustive(obj, tol)
    if mode != "sampled":
        raise ValueError(f"unknown mode {mode!r}")
    if trials == 0:
        logger.warning("sampled submodularity check with zero trials holds vacuously")
        return SubmodularityReport(True, 0.0, None, 0, "sampled")
    rng = np.random.default_rng(seed)
    worst, witness = math.inf, None
    done = 0
    for _ in range(trials):
        x = int(rng.integers(n))
        rest = np.array([i for i in range(n) if i != x])
        in_b = rest[rng.random(len(rest)) < 0.5]
        in_a = in_b[rng.random(len(in_b)) < 0.5]
        a, b = frozenset(int(i) for i in in_a), frozenset(int(i) for i in in_b)
        gap = marginal_gain(obj, a, x) - marginal_gain(obj, b, x)
        done += 1
        if gap < worst:
            worst, witness = gap, {"A": sorted(a), "B": sorted(b), "x": x}
    return SubmodularityReport(bool(worst >= -tol), float(worst), witness, done, "sampled")


def _check_exhaustive(obj: SubsetObjective, tol: float) -> SubmodularityReport:
    n = obj.ground_set_size
    if n == 0:
        return SubmodularityReport(True, 0.0, None, 0, "exhaustive")
    values = obj.all_values()
    size = 1 << n
    masks = np.arange(size)
    worst, witness, checks = math.inf, None, 0
    for x in range(n):
        bit = 1 << x
        free = (masks & bit) == 0
        gains = np.full(size, np.inf)
        gains[free] = values[masks[free] | bit] - values[masks[free]]
        # running minimum of gains over submasks (sum-over-subsets recursion)
        best = gains.copy()
        arg = masks.copy()
        for i in range(n):
            if i == x:
                continue
            has = (masks >> i & 1).astype(bool)
            src = masks[has] ^ (1 << i)
            better = best[src] < best[has]
            idx = masks[has][better]
            best[idx] = best[src][better]
            arg[idx] = arg[src][better]
        gap = best[free] - gains[free]
        checks += int(np.sum([1 << bin(int(m)).count("1") for m in masks[free]]))
        j = int(np.argmin(gap))
        if gap[j] < worst:
            b_mask = int(masks[free][j])
            worst = float(gap[j])
            witness = {"A": sorted(_mask_to_set(int(arg[b_mask]))), "B": sorted(_mask_to_set(b_mask)), "x": x}
    return SubmodularityReport(bool(worst >= -tol), worst, witness, checks, "exhaustive")


def brute_force_max(obj: SubsetObjective, m: int, budget: int = BRUTE_FORCE_BUDGET) -> tuple[tuple[int, ...], float]:
    """Exact maximizer over size-``m`` subsets; ties go to the lexicographically smallest."""
    n = obj.ground_set_size
    if not 0 <= m <= n:
        raise ValueError(f"cardinality {m} outside [0, {n}]")
    if math.comb(n, m) > budget:
        raise BudgetExceededError(f"C({n}, {m}) = {math.comb(n, m)} exceeds budget {budget}")
    best, best_val = None, -math.inf
    for combo in itertools.combinations(range(n), m):
        v = obj.evaluate(combo)
        if v > best_val:
            best, best_val = combo, v
    return best, best_val


def brute_force_min(obj: SubsetObjective, m: int, budget: int = BRUTE_FORCE_BUDGET) -> tuple[tuple[int, ...], float]:
    n = obj.ground_set_size
    if math.comb(n, m) > budget:
        raise BudgetExceededError(f"C({n}, {m}) = {math.comb(n, m)} exceeds budget {budget}")
    best, best_val = None, math.inf
    for combo in itertools.combinations(range(n), m):
        v = obj.evaluate(combo)
        if v < best_val:
            best, best_val = combo, v
    return best, best_val


@dataclass
class GreedyTrace:
    chosen: list[int]
    gains: list[float]
    objective_values: list[float]
    initial_value: float

    def to_json(self) -> str:
        return json.dumps(asdict(self), indent=2)


def _ranked_gains(obj: SubsetObjective, current: frozenset) -> list[tuple[float, int]]:
    remaining = [i for i in range(obj.ground_set_size) if i not in current]
    gains = [(marginal_gain(obj, current, i), i) for i in remaining]
    # highest gain first, lowest index among ties
    return sorted(gains, key=lambda t: (-t[0], t[1]))


def random_greedy(obj: SubsetObjective, m: int, seed=None) -> GreedyTrace:
    """Random Greedy for cardinality-constrained maximization.

    Each step ranks the remaining elements by marginal gain, keeps the top
    ``m`` (fewer if fewer remain) and adds one of them uniformly at random.
    """
    if m > obj.ground_set_size:
        raise ValueError("cardinality exceeds ground set size")
    rng = np.random.default_rng(seed)
    current: frozenset = frozenset()
    start = obj.evaluate(current)
    trace = GreedyTrace([], [], [], start)
    for _ in range(m):
        top = _ranked_gains(obj, current)[:m]
        gain, choice = top[int(rng.integers(len(top)))]
        current = current | {choice}
        trace.chosen.append(choice)
        trace.gains.append(gain)
        trace.objective_values.append(obj.evaluate(current))
    return trace


def naive_greedy(obj: SubsetObjective, m: int) -> GreedyTrace:
    if m > obj.ground_set_size:
        raise ValueError("cardinality exceeds ground set size")
    current: frozenset = frozenset()
    trace = GreedyTrace([], [], [], obj.evaluate(current))
    for _ in range(m):
        gain, choice = _ranked_gains(obj, current)[0]
        current = current | {choice}
        trace.chosen.append(choice)
        trace.gains.append(gain)
        trace.objective_values.append(obj.evaluate(current))
    return trace
