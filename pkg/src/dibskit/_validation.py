"""Input validation helpers shared by the estimators and the functional API."""
from __future__ import annotations

import numbers

import numpy as np


def check_rng(rng) -> np.random.Generator:
    """Turn ``None``, an int seed or a Generator into a Generator."""
    if rng is None:
        return np.random.default_rng()
    if isinstance(rng, np.random.Generator):
        return rng
    if isinstance(rng, (numbers.Integral, np.random.SeedSequence)):
        return np.random.default_rng(rng)
    raise TypeError(f"cannot build a random generator from {type(rng).__name__}")


def check_adjacency(g, *, hard: bool = False) -> np.ndarray:
    """Validate a square adjacency matrix with zero diagonal."""
    g = np.asarray(g)
    if g.ndim != 2 or g.shape[0] != g.shape[1]:
        raise ValueError(f"adjacency matrix must be square, got shape {g.shape}")
    if np.any(np.diagonal(g) != 0):
        raise ValueError("adjacency matrix must have a zero diagonal")
    if hard:
        if not np.all((g == 0) | (g == 1)):
            raise ValueError("hard adjacency matrix must be binary")
        return g.astype(np.int8)
    if not np.all(np.isfinite(g)):
        raise ValueError("adjacency matrix contains non-finite values")
    return g


def check_data(x, *, n_vars: int | None = None, min_samples: int = 1) -> np.ndarray:
    """Validate an ``(N, d)`` observation matrix of finite floats."""
    x = np.asarray(x, dtype=np.float64)
    if x.ndim != 2:
        raise ValueError(f"data must be a 2D array of shape (n_samples, n_vars), got {x.shape}")
    if x.shape[0] < min_samples:
        raise ValueError(f"need at least {min_samples} observation(s), got {x.shape[0]}")
    if n_vars is not None and x.shape[1] != n_vars:
        raise ValueError(f"data has {x.shape[1]} variables, expected {n_vars}")
    if not np.all(np.isfinite(x)):
        raise ValueError("data contains non-finite values")
    return x


def check_targets(targets, d: int) -> tuple[int, ...]:
    targets = tuple(sorted({int(t) for t in (targets or ())}))
    for t in targets:
        if not 0 <= t < d:
            raise ValueError(f"intervention target {t} out of range for d={d}")
    return targets


def check_positive(name: str, value, *, strict: bool = True) -> float:
    value = float(value)
    if not np.isfinite(value) or value < 0 or (strict and value == 0):
        bound = "> 0" if strict else ">= 0"
        raise ValueError(f"{name} must be {bound}, got {value}")
    return value
