"""Finite-difference oracles and verification stencils.

Used in two roles: as the independent test oracle against exact AST
differentiation, and as the verification path for quadrature-backed
(callable) coefficients, where symbolic partials are unavailable by design.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Mapping

__all__ = ["FDConfig", "partial_fd", "partial2_fd", "d_dt_fd"]

ScalarField = Callable[[Mapping[str, float]], float]


@dataclass(frozen=True)
class FDConfig:
    """Central-difference steps; Richardson extrapolation once on first partials."""

    step: float = 1e-5
    step2: float = 1e-4  # second/mixed partials
    richardson: bool = True


def _shift(binding: Mapping[str, float], var: str, delta: float) -> dict:
    b = dict(binding)
    b[var] = b.get(var, 0.0) + delta
    return b


def partial_fd(f: ScalarField, binding: Mapping[str, float], var: str, cfg: FDConfig = FDConfig()) -> float:
    h = cfg.step

    def central(step):
        return (f(_shift(binding, var, step)) - f(_shift(binding, var, -step))) / (2 * step)

    if not cfg.richardson:
        return central(h)
    d1, d2 = central(h), central(h / 2)
    return (4 * d2 - d1) / 3


def partial2_fd(
    f: ScalarField,
    binding: Mapping[str, float],
    var1: str,
    var2: str,
    cfg: FDConfig = FDConfig(),
) -> float:
    h = cfg.step2

    def mixed(step):
        if var1 == var2:
            return (
                f(_shift(binding, var1, step))
                - 2 * f(binding)
                + f(_shift(binding, var1, -step))
            ) / step**2
        fpp = f(_shift(_shift(binding, var1, step), var2, step))
        fpm = f(_shift(_shift(binding, var1, step), var2, -step))
        fmp = f(_shift(_shift(binding, var1, -step), var2, step))
        fmm = f(_shift(_shift(binding, var1, -step), var2, -step))
        return (fpp - fpm - fmp + fmm) / (4 * step**2)

    if not cfg.richardson:
        return mixed(h)
    d1, d2 = mixed(h), mixed(h / 2)
    return (4 * d2 - d1) / 3


_JET_CHAIN = (("t", None), ("x", "xd"), ("y", "yd"), ("xd", "xdd"), ("yd", "ydd"))


def d_dt_fd(f: ScalarField, binding: Mapping[str, float], cfg: FDConfig = FDConfig()) -> float:
    """Total time derivative of a first-order field f(t, x, y, xd, yd) along the jet."""
    total = partial_fd(f, binding, "t", cfg)
    for coord, dot in _JET_CHAIN[1:]:
        total += binding.get(dot, 0.0) * partial_fd(f, binding, coord, cfg)
    return total
