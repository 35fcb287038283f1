"""Euler-Lagrange operators, the Cartan form, and the fiber-integral Lagrangian.

Symbolic Lagrangians get exact Euler-Lagrange expressions (orders one and two,
with the formal third/fourth-order coordinates checked to cancel before being
substituted away).  Quadrature-backed Lagrangians are verified with central
finite differences instead; their numeric parts must be first order, which
every construction in this package arranges (the horizontal part of a
time-potential is symbolic, everything quadrature-backed multiplies plain
velocities).
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Mapping, Sequence

import numpy as np

from .errors import HelmholtzFailure, HigherOrderResidueError
from .expr import Expression
from .helmholtz import ABDecomposition, HelmholtzReport, SourceForm, decompose, helmholtz
from .jet import BASE_COORDS, DifferentialForm, Lagrangian, total_derivative
from .numdiff import FDConfig, partial2_fd, partial_fd
from .quadrature import PathIntegral, TensorIntegral2
from .sampling import DEFAULT_BOX, binding_at, jet_bindings, rng_for

__all__ = [
    "euler_lagrange",
    "ELEvaluator",
    "cartan",
    "vainberg_tonti",
    "VainbergTonti",
    "equivalent",
    "EquivalenceReport",
]

_FORMAL = ("xddd", "yddd", "xdddd", "ydddd")


def _symbolic_el(L: Expression) -> tuple[Expression, Expression]:
    """E_q = dL/dq - d_t(dL/dqd) + d_t^2(dL/dqdd), before zeroing formal coordinates."""
    out = []
    for q, qd, qdd in (("x", "xd", "xdd"), ("y", "yd", "ydd")):
        e = L.diff(q) - total_derivative(L.diff(qd))
        if qdd in L.free_vars:
            e = e + total_derivative(total_derivative(L.diff(qdd)))
        out.append(e)
    return out[0], out[1]


def euler_lagrange(
    lag: Lagrangian,
    position_box=DEFAULT_BOX,
    n: int = 30,
    seed: int = 42,
    tol: float = 1e-10,
) -> SourceForm:
    """Euler-Lagrange source form of a symbolic Lagrangian.

    For second-order Lagrangians the raw expressions contain formal third and
    fourth order coordinates; independence of those is verified by sampling
    two independent draws, then they are substituted to zero.  Residual
    dependence raises :class:`HigherOrderResidueError`.
    """
    if not lag.is_symbolic() or lag.expr is None:
        raise ValueError("euler_lagrange needs a symbolic Lagrangian; use ELEvaluator for callables")
    ex, ey = _symbolic_el(lag.expr)
    formal = (set(ex.free_vars) | set(ey.free_vars)) & set(_FORMAL)
    if formal:
        rng = rng_for(seed, "el-higher-order")
        b1 = jet_bindings(rng, n, position_box, order=4)
        b2 = dict(b1)
        for name in _FORMAL:
            b2[name] = rng.uniform(-2.0, 2.0, size=n)
        worst = 0.0
        for e in (ex, ey):
            v1 = np.broadcast_to(np.atleast_1d(np.asarray(e.evaluate(b1))), (n,))
            v2 = np.broadcast_to(np.atleast_1d(np.asarray(e.evaluate(b2))), (n,))
            worst = max(worst, float(np.max(np.abs(v1 - v2))))
        if worst > tol:
            raise HigherOrderResidueError(
                f"Euler-Lagrange expressions depend on jets above order two (residual {worst:.3e})"
            )
        zero = {name: 0.0 for name in _FORMAL}
        ex, ey = ex.subs(zero), ey.subs(zero)
    time_independent = "t" not in (ex.free_vars | ey.free_vars)
    return SourceForm(ex, ey, time_independent=time_independent)


class ELEvaluator:
    """Pointwise Euler-Lagrange evaluation for mixed symbolic/numeric Lagrangians.

    The symbolic part is processed once through :func:`euler_lagrange`; each
    numeric part N(t, x, y, xd, yd) contributes
    ``E_q(N) = N_q - sum_z zdot N_{qd z}`` via finite-difference stencils.
    """

    def __init__(
        self,
        lag: Lagrangian,
        fd: FDConfig = FDConfig(),
        seed: int = 42,
        time_dependent_numeric: bool = False,
    ):
        self.lag = lag
        self.fd = fd
        self.time_dependent_numeric = time_dependent_numeric
        self._sym: SourceForm | None = None
        if lag.expr is not None:
            self._sym = euler_lagrange(Lagrangian(lag.order, lag.expr), seed=seed)

    def __call__(self, binding: Mapping[str, float]) -> tuple[float, float]:
        ex = ey = 0.0
        if self._sym is not None:
            ex += float(self._sym.eps_x.evaluate(binding))
            ey += float(self._sym.eps_y.evaluate(binding))
        for term in self.lag.numeric:
            dx, dy = self._numeric_el(term, binding)
            ex += dx
            ey += dy
        return ex, ey

    # chain pairs (coordinate, its time derivative in the binding)
    _CHAIN = (("x", "xd"), ("y", "yd"), ("xd", "xdd"), ("yd", "ydd"))

    def _numeric_el(self, term, binding) -> tuple[float, float]:
        out = []
        for q, qd in (("x", "xd"), ("y", "yd")):
            val = partial_fd(term, binding, q, self.fd)
            if self.time_dependent_numeric:
                val -= partial2_fd(term, binding, qd, "t", self.fd)
            for coord, dot in self._CHAIN:
                rate = binding.get(dot, 0.0)
                if rate != 0.0:
                    val -= rate * partial2_fd(term, binding, qd, coord, self.fd)
            out.append(val)
        return out[0], out[1]


def cartan(lag: Lagrangian) -> DifferentialForm:
    """The unique first-order Lepage equivalent ``L dt + dL/dxd w^x + dL/dyd w^y``."""
    if lag.order != 1 or lag.expr is None or not lag.is_symbolic():
        raise ValueError("cartan expects a symbolic first-order Lagrangian")
    L = lag.expr
    px, py = L.diff("xd"), L.diff("yd")
    xd, yd = Expression.variable("xd"), Expression.variable("yd")
    return DifferentialForm(
        1,
        BASE_COORDS,
        {
            ("t",): L - px * xd - py * yd,
            ("x",): px,
            ("y",): py,
        },
    )


def _scaled(e: Expression, factors: Mapping[str, Expression]) -> Expression:
    return e.subs(factors)


@dataclass(frozen=True)
class VainbergTonti:
    """Fiber-integral Lagrangian and its certified first-order reduction."""

    second_order: Lagrangian
    reduced: Lagrangian
    first_order_residual: float


def vainberg_tonti(
    sf: SourceForm,
    report: HelmholtzReport | None = None,
    position_box=DEFAULT_BOX,
    n_check: int = 20,
    seed: int = 42,
    quad_tol: float = 1e-10,
) -> VainbergTonti:
    """Construct the fiber-integral Lagrangian and reduce it to first order.

    ``L_T(p) = x Int eps_x(s p) ds + y Int eps_y(s p) ds`` over s in [0, 1],
    which is affine in the accelerations; subtracting the total time derivative
    of the velocity-homotopy potential of its acceleration coefficients leaves
    a first-order Lagrangian with the same Euler-Lagrange form.  The chart box
    must be star-shaped about the origin for the scaled points to stay inside.
    """
    if report is None:
        report = helmholtz(sf, position_box=position_box, seed=seed)
    if not report.verdict:
        raise HelmholtzFailure(f"source form fails Helmholtz conditions: {report.failures}")
    ab = decompose(sf, position_box=position_box, seed=seed)

    s = Expression.variable("s")
    u = Expression.variable("u")
    jet2 = ("x", "y", "xd", "yd", "xdd", "ydd")
    scale_s = {v: s * Expression.variable(v) for v in jet2}
    probes = _probe_bindings(position_box, seed)

    ix = PathIntegral(_scaled(sf.eps_x, scale_s)).calibrate(probes, quad_tol)
    iy = PathIntegral(_scaled(sf.eps_y, scale_s)).calibrate(probes, quad_tol)

    def l_t(b):
        return b["x"] * ix(b) + b["y"] * iy(b)

    # acceleration coefficients of L_T and their velocity-homotopy potential G
    x, y, xd, yd = (Expression.variable(v) for v in ("x", "y", "xd", "yd"))
    scale_su = {"x": s * x, "y": s * y, "xd": s * u * xd, "yd": s * u * yd}
    bxx, bxy, byy = (
        _scaled(ab.b_xx, scale_su),
        _scaled(ab.b_xy, scale_su),
        _scaled(ab.b_yy, scale_su),
    )
    g_integrand = s * ((x * bxx + y * bxy) * xd + (x * bxy + y * byy) * yd)
    g = TensorIntegral2(g_integrand).calibrate(probes, quad_tol)
    g_parts = {v: g.partial(v) for v in ("x", "y", "xd", "yd")}

    def l_reduced(b):
        dtg = (
            g_parts["x"](b) * b["xd"]
            + g_parts["y"](b) * b["yd"]
            + g_parts["xd"](b) * b["xdd"]
            + g_parts["yd"](b) * b["ydd"]
        )
        return l_t(b) - dtg

    # certify the reduction really is first order
    rng = rng_for(seed, "vt-first-order")
    check = jet_bindings(rng, n_check, position_box, order=2)
    fd = FDConfig()
    worst = 0.0
    for i in range(n_check):
        b = binding_at(check, i)
        for acc in ("xdd", "ydd"):
            worst = max(worst, abs(partial_fd(l_reduced, b, acc, fd)))
    return VainbergTonti(
        second_order=Lagrangian(2, None, (l_t,)),
        reduced=Lagrangian(1, None, (l_reduced,)),
        first_order_residual=worst,
    )


def _probe_bindings(position_box, seed: int, n: int = 4) -> list[dict]:
    rng = rng_for(seed, "quad-probes")
    b = jet_bindings(rng, n, position_box, order=2)
    return [binding_at(b, i) for i in range(n)]


@dataclass(frozen=True)
class EquivalenceReport:
    verdict: bool
    max_residual: float
    tol: float

    def to_dict(self) -> dict:
        return {
            "verdict": "pass" if self.verdict else "fail",
            "max_residual": self.max_residual,
            "tol": self.tol,
        }


def equivalent(
    lag1: Lagrangian,
    lag2: Lagrangian,
    position_box=DEFAULT_BOX,
    n: int = 50,
    seed: int = 42,
    tol: float = 1e-6,
    fd: FDConfig = FDConfig(),
) -> EquivalenceReport:
    """Two Lagrangians are equivalent when their Euler-Lagrange forms agree at samples."""
    e1 = ELEvaluator(lag1, fd, seed=seed)
    e2 = ELEvaluator(lag2, fd, seed=seed)
    rng = rng_for(seed, "equivalence")
    samples = jet_bindings(rng, n, position_box, order=2)
    worst = 0.0
    for i in range(n):
        b = binding_at(samples, i)
        ax, ay = e1(b)
        bx, by = e2(b)
        worst = max(worst, abs(ax - bx), abs(ay - by))
    return EquivalenceReport(verdict=worst < tol, max_residual=worst, tol=tol)
