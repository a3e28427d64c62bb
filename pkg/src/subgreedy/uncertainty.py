"""Entropy and ensemble mutual information (epistemic uncertainty), in nats."""

from __future__ import annotations

import numpy as np

_SIMPLEX_TOL = 1e-9


def _check_simplex(p: np.ndarray) -> None:
    if not np.all(np.isfinite(p)) or np.any(p < 0) or np.any(np.abs(p.sum(axis=-1) - 1.0) > _SIMPLEX_TOL):
        raise ValueError("input rows must be probability vectors")


def entropy(p) -> np.ndarray | float:
    """``-sum p log p`` along the last axis with ``0 log 0 = 0``."""
    p = np.asarray(p, dtype=np.float64)
    _check_simplex(p)
    terms = np.where(p > 0, -p * np.log(np.where(p > 0, p, 1.0)), 0.0)
    out = terms.sum(axis=-1)
    return float(out) if out.ndim == 0 else out


def epistemic_mi(stack) -> float | np.ndarray:
    """Mutual information between the label and the ensemble member.

    ``stack`` is ``[members, classes]`` for one input or ``[members, n, classes]``
    for a batch. Returns ``H(mean) - mean(H)``.
    """
    stack = np.asarray(stack, dtype=np.float64)
    if stack.ndim < 2 or stack.shape[0] == 0:
        raise ValueError("need at least one member")
    _check_simplex(stack)
    mi = entropy(stack.mean(axis=0)) - np.mean(entropy(stack), axis=0)
    # identical members carry no epistemic uncertainty; avoid rounding residue
    same = np.all(stack == stack[:1], axis=(0, -1))
    mi = np.where(same, 0.0, mi)
    mi = np.where((mi < 0) & (mi >= -1e-12), 0.0, mi)
    return float(mi) if np.ndim(mi) == 0 else mi
