"""Seeded sample generation for residual checks.

Everything that samples goes through a numpy Generator seeded from the config,
so reports are reproducible run to run.
"""

from __future__ import annotations

import math

import numpy as np

__all__ = ["rng_for", "uniform_box", "jet_bindings", "clip_box", "DEFAULT_BOX"]

DEFAULT_BOX = ((-2.0, 2.0), (-2.0, 2.0))
VELOCITY_RANGE = (-2.0, 2.0)
TIME_RANGE = (-1.0, 1.0)


def rng_for(seed: int, *stream: str) -> np.random.Generator:
    """Independent generator for a named purpose (stable across runs)."""
    label = abs(hash("/".join(stream))) % (2**31)
    return np.random.default_rng(np.random.PCG64(seed * 1_000_003 + label))


def clip_box(box, limit: float = 2.0):
    """Replace unbounded interval ends by +-limit for sampling purposes."""
    out = []
    for lo, hi in box:
        lo = -limit if math.isinf(lo) else lo
        hi = limit if math.isinf(hi) else hi
        out.append((lo, hi))
    return tuple(out)


def uniform_box(rng: np.random.Generator, box, n: int) -> np.ndarray:
    """n points uniform in a product of intervals; shape (n, len(box))."""
    cols = [rng.uniform(lo, hi, size=n) for lo, hi in clip_box(box)]
    return np.stack(cols, axis=1)


def jet_bindings(
    rng: np.random.Generator,
    n: int,
    position_box=DEFAULT_BOX,
    order: int = 2,
    velocity_range=VELOCITY_RANGE,
    time_range=TIME_RANGE,
) -> dict:
    """Array-valued binding of jet coordinates up to ``order`` (vectorised)."""
    pos = uniform_box(rng, position_box, n)
    binding = {
        "t": rng.uniform(*time_range, size=n),
        "x": pos[:, 0],
        "y": pos[:, 1],
    }
    names = [("xd", "yd"), ("xdd", "ydd"), ("xddd", "yddd"), ("xdddd", "ydddd")]
    for level in range(order):
        for name in names[level]:
            binding[name] = rng.uniform(*velocity_range, size=n)
    return binding


def binding_at(binding: dict, i: int) -> dict:
    """Extract the i-th scalar point from an array-valued binding."""
    return {k: float(v[i]) for k, v in binding.items()}
