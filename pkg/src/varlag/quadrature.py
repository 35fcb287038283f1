"""Composite Gauss-Legendre quadrature with frozen panel counts.

All quadrature-backed coefficients in the pipeline calibrate their panel count
once (doubling panels until two successive composite values agree to ``tol``)
and then freeze it.  A frozen rule makes the resulting callable a smooth
function of its parameters, which the finite-difference verification layers
rely on; per-point adaptivity would introduce non-smooth jumps.
"""

from __future__ import annotations

from typing import Callable, Mapping, Sequence

import numpy as np

from .errors import QuadratureError
from .expr import Expression

__all__ = ["GaussLegendre", "PathIntegral", "TensorIntegral2", "calibrate_panels"]

DEFAULT_ORDER = 16
DEFAULT_TOL = 1e-10
MAX_PANELS = 2**10


class GaussLegendre:
    """Composite rule of fixed order on [0, 1] with a given panel count."""

    _cache: dict = {}

    def __init__(self, panels: int, order: int = DEFAULT_ORDER):
        self.panels = panels
        self.order = order
        key = (panels, order)
        if key not in self._cache:
            x, w = np.polynomial.legendre.leggauss(order)
            # map [-1, 1] nodes into each of `panels` equal subintervals of [0, 1]
            h = 1.0 / panels
            starts = np.arange(panels) * h
            nodes = (starts[:, None] + (x[None, :] + 1.0) * (h / 2.0)).ravel()
            weights = np.tile(w * (h / 2.0), panels)
            self._cache[key] = (nodes, weights)
        self.nodes, self.weights = self._cache[key]

    def integrate(self, f: Callable[[np.ndarray], np.ndarray]) -> float:
        return float(np.dot(f(self.nodes), self.weights))


def calibrate_panels(
    value: Callable[[int], float],
    tol: float = DEFAULT_TOL,
    start: int = 1,
) -> int:
    """Double panel counts until two successive values agree to ``tol``."""
    panels = start
    prev = value(panels)
    while panels < MAX_PANELS:
        panels *= 2
        cur = value(panels)
        if abs(cur - prev) <= tol * (1.0 + abs(cur)):
            return panels
        prev = cur
    raise QuadratureError(
        f"composite quadrature did not converge within {MAX_PANELS} panels"
    )


def _eval_on_nodes(expr: Expression, binding: Mapping, var: str, nodes: np.ndarray):
    """Evaluate ``expr`` broadcasting point-binding values against node arrays.

    Scalars stay scalars; array-valued bindings of shape (N,) broadcast against
    nodes to produce an (N, len(nodes)) panel.
    """
    b = {}
    vectorised = False
    for name, val in binding.items():
        if isinstance(val, np.ndarray) and val.ndim == 1:
            b[name] = val[:, None]
            vectorised = True
        else:
            b[name] = val
    b[var] = nodes[None, :] if vectorised else nodes
    return expr.evaluate(b), vectorised


class PathIntegral:
    """``point -> integral of integrand(point, s) ds over s in [0, 1]``.

    The integrand is a symbolic :class:`Expression` over the point variables
    plus the integration variable, so values are smooth in the point and the
    panel count can be calibrated once on probe bindings.
    """

    def __init__(
        self,
        integrand: Expression,
        var: str = "s",
        order: int = DEFAULT_ORDER,
        panels: int = 1,
    ):
        self.integrand = integrand
        self.var = var
        self.order = order
        self.panels = panels
        self._rule = GaussLegendre(panels, order)

    def with_panels(self, panels: int) -> "PathIntegral":
        return PathIntegral(self.integrand, self.var, self.order, panels)

    def calibrate(self, probes: Sequence[Mapping], tol: float = DEFAULT_TOL) -> "PathIntegral":
        worst = 1
        for probe in probes:
            n = calibrate_panels(
                lambda p: PathIntegral(self.integrand, self.var, self.order, p)(probe),
                tol=tol,
            )
            worst = max(worst, n)
        return self.with_panels(worst)

    def partial(self, name: str) -> "PathIntegral":
        """Differentiation under the integral sign (limits are constant)."""
        return PathIntegral(self.integrand.diff(name), self.var, self.order, self.panels)

    def __call__(self, binding: Mapping):
        vals, vectorised = _eval_on_nodes(self.integrand, binding, self.var, self._rule.nodes)
        if vectorised:
            return np.asarray(vals) @ self._rule.weights
        return float(np.dot(np.broadcast_to(vals, self._rule.nodes.shape), self._rule.weights))


class TensorIntegral2:
    """Double integral of a symbolic integrand over [0, 1]^2 (tensor GL rule)."""

    def __init__(
        self,
        integrand: Expression,
        vars: tuple[str, str] = ("s", "u"),
        order: int = DEFAULT_ORDER,
        panels: int = 1,
    ):
        self.integrand = integrand
        self.vars = vars
        self.order = order
        self.panels = panels
        rule = GaussLegendre(panels, order)
        s, u = np.meshgrid(rule.nodes, rule.nodes, indexing="ij")
        w2 = np.outer(rule.weights, rule.weights)
        self._s, self._u, self._w = s.ravel(), u.ravel(), w2.ravel()

    def with_panels(self, panels: int) -> "TensorIntegral2":
        return TensorIntegral2(self.integrand, self.vars, self.order, panels)

    def calibrate(self, probes: Sequence[Mapping], tol: float = DEFAULT_TOL) -> "TensorIntegral2":
        worst = 1
        for probe in probes:
            n = calibrate_panels(
                lambda p: TensorIntegral2(self.integrand, self.vars, self.order, p)(probe),
                tol=tol,
            )
            worst = max(worst, n)
        return self.with_panels(worst)

    def partial(self, name: str) -> "TensorIntegral2":
        return TensorIntegral2(self.integrand.diff(name), self.vars, self.order, self.panels)

    def __call__(self, binding: Mapping) -> float:
        b = dict(binding)
        b[self.vars[0]] = self._s
        b[self.vars[1]] = self._u
        vals = self.integrand.evaluate(b)
        return float(np.dot(np.broadcast_to(vals, self._s.shape), self._w))
