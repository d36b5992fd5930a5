"""Deterministic seed derivation.

Every stochastic routine in the package derives its randomness from a master
seed plus a structured path (estimator name, trial index, ...).  Trial-level
streams are therefore independent of scheduling: running trials in parallel
or in a different order cannot change any result.
"""

from __future__ import annotations

import hashlib

import numpy as np

__all__ = ["derive_rng", "derive_seeds", "path_entropy"]


def _component_to_int(part) -> int:
    """Map a path component to a stable 64-bit integer."""
    if isinstance(part, (int, np.integer)):
        return int(part) & 0xFFFFFFFFFFFFFFFF
    if isinstance(part, str):
        digest = hashlib.sha256(part.encode("utf-8")).digest()
        return int.from_bytes(digest[:8], "little")
    raise TypeError(f"seed path components must be int or str, got {type(part)!r}")


def path_entropy(master_seed: int, *path) -> list[int]:
    """Entropy list for ``np.random.SeedSequence`` from a master seed and path."""
    if master_seed < 0:
        raise ValueError("master seed must be non-negative")
    return [int(master_seed)] + [_component_to_int(p) for p in path]


def derive_rng(master_seed: int, *path) -> np.random.Generator:
    """A fresh ``numpy`` generator for the given (seed, path) address."""
    return np.random.default_rng(np.random.SeedSequence(path_entropy(master_seed, *path)))


def derive_seeds(master_seed: int, *path, n: int) -> np.ndarray:
    """``n`` 64-bit trial seeds for the given address, as ``uint64``.

    Seed ``i`` of the returned array is the seed for trial ``i``; batches of
    trials draw from here so that per-trial streams never depend on how the
    batch is scheduled.
    """
    ss = np.random.SeedSequence(path_entropy(master_seed, *path))
    return ss.generate_state(n, dtype=np.uint64)
