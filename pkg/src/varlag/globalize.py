"""Construction of the global Lagrangian pieces on the first jet space.

Three ingredients: the time-potential 1-form (whose exterior derivative is the
time part of the closed equivalent), the velocity fiber integral of the
velocity-space part, and the leftover position 2-form.  When the latter
vanishes identically the horizontal part of (time-potential + fiber integral)
is already a global Lagrangian; otherwise the cohomology solver must supply a
primitive for the position 2-form first.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import NotSimpleError, TimeDependenceError
from .expr import Expression
from .helmholtz import ABDecomposition, HelmholtzReport, SourceForm, decompose, helmholtz
from .jet import BASE_COORDS, DifferentialForm, Lagrangian, horizontalize
from .quadrature import PathIntegral
from .sampling import DEFAULT_BOX, binding_at, jet_bindings, rng_for

__all__ = [
    "mu0",
    "kappa",
    "omega_form",
    "fiber_integrate",
    "section_restrict",
    "omega_vanishes",
    "simple_global_lagrangian",
]


def _ab(sf: SourceForm, ab: ABDecomposition | None, seed: int) -> ABDecomposition:
    return ab if ab is not None else decompose(sf, seed=seed)


def mu0(sf: SourceForm, ab: ABDecomposition | None = None, seed: int = 42) -> DifferentialForm:
    """Time-potential 1-form: minus t times the time part of the closed equivalent.

    Its exterior derivative reproduces the time part wedged with dt, and its
    horizontal component is ``-(eps_x xd + eps_y yd) t dt``.
    """
    if not sf.time_independent:
        raise TimeDependenceError("the time-potential construction needs an autonomous source")
    ab = _ab(sf, ab, seed)
    t = Expression.variable("t")
    xd, yd = Expression.variable("xd"), Expression.variable("yd")
    c = 0.5 * ab.curl_velocity()
    return DifferentialForm(
        1,
        BASE_COORDS,
        {
            ("x",): -(ab.a_x - c * yd) * t,
            ("y",): -(ab.a_y + c * xd) * t,
            ("xd",): -(ab.b_xx * xd + ab.b_xy * yd) * t,
            ("yd",): -(ab.b_xy * xd + ab.b_yy * yd) * t,
        },
    )


def _segment_integral(integrand: Expression, limit_var: str, probes, quad_tol: float):
    """``Int_0^{q} f(..., nu) d nu`` as ``q * Int_0^1 f(..., s q) ds`` (frozen panels)."""
    s = Expression.variable("s")
    scaled = integrand.subs({limit_var: s * Expression.variable(limit_var)})
    return PathIntegral(scaled).calibrate(probes, quad_tol)


def kappa(
    sf: SourceForm,
    ab: ABDecomposition | None = None,
    position_box=DEFAULT_BOX,
    seed: int = 42,
    quad_tol: float = 1e-10,
) -> DifferentialForm:
    """Velocity fiber integral of the B block, quadrature-backed.

    ``kappa_x = -Int_0^xd B_xx(x,y,nu,yd) dnu - Int_0^yd B_xy(x,y,0,sigma) dsigma``
    and the mirrored expression on dy.  The integration path is canonical:
    first along xd at fixed yd, then along yd on the xd = 0 section.
    """
    ab = _ab(sf, ab, seed)
    probes = _kappa_probes(position_box, seed)
    leg1_xx = _segment_integral(ab.b_xx, "xd", probes, quad_tol)
    leg2_xy = _segment_integral(ab.b_xy.subs({"xd": 0.0}), "yd", probes, quad_tol)
    leg1_xy = _segment_integral(ab.b_xy, "xd", probes, quad_tol)
    leg2_yy = _segment_integral(ab.b_yy.subs({"xd": 0.0}), "yd", probes, quad_tol)

    def coeff_x(b):
        return -(b["xd"] * leg1_xx(b) + b["yd"] * leg2_xy(b))

    def coeff_y(b):
        return -(b["xd"] * leg1_xy(b) + b["yd"] * leg2_yy(b))

    return DifferentialForm(1, ("x", "y", "xd", "yd"), {("x",): coeff_x, ("y",): coeff_y})


def _kappa_probes(position_box, seed: int, n: int = 4):
    rng = rng_for(seed, "kappa-probes")
    b = jet_bindings(rng, n, position_box, order=1)
    return [binding_at(b, i) for i in range(n)]


def section_restrict(rho: DifferentialForm, var: str) -> DifferentialForm:
    """Pull back along the zero section of one velocity: drop d(var), set var = 0."""
    coords = tuple(c for c in rho.coords if c != var)
    coeffs = {}
    for key, c in rho.coeffs.items():
        if var in key:
            continue
        if not isinstance(c, Expression):
            raise ValueError("section_restrict expects symbolic coefficients")
        coeffs[key] = c.subs({var: 0.0})
    return DifferentialForm(rho.degree, coords, coeffs)


def fiber_integrate(
    rho: DifferentialForm,
    which: str,
    position_box=DEFAULT_BOX,
    seed: int = 42,
    quad_tol: float = 1e-10,
) -> DifferentialForm:
    """Homotopy operator along one velocity fiber.

    Contract with the coordinate field of ``xd`` (K1) or ``yd`` (K2), then
    integrate the coefficient along the straight segment from the zero section
    to the point; quadrature-backed with frozen panels.
    """
    if which not in ("K1", "K2"):
        raise ValueError("which must be 'K1' or 'K2'")
    var = "xd" if which == "K1" else "yd"
    if rho.degree != 2:
        raise ValueError("fiber integration implemented for 2-forms")
    probes = _kappa_probes(position_box, seed)
    out: dict = {}
    for (za, zb), c in rho.coeffs.items():
        if not isinstance(c, Expression):
            raise ValueError("fiber_integrate expects symbolic coefficients")
        if var == za:
            other, sign = zb, 1.0  # i_V(d var ^ dz) = dz
        elif var == zb:
            other, sign = za, -1.0  # i_V(dz ^ d var) = -dz
        else:
            continue
        integral = _segment_integral(c, var, probes, quad_tol)
        key = (other,)
        prev = out.get(key)

        def coeff(b, _i=integral, _s=sign, _prev=prev):
            val = _s * b[var] * _i(b)
            return val + _prev(b) if _prev is not None else val

        out[key] = coeff
    coords = tuple(c for c in rho.coords if c != var) + (var,)
    coords = tuple(c for c in ("x", "y", "xd", "yd") if c in coords)
    return DifferentialForm(1, coords, out)


def omega_form(sf: SourceForm, ab: ABDecomposition | None = None, seed: int = 42) -> DifferentialForm:
    """Position 2-form: half the velocity curl of A restricted to the zero section."""
    ab = _ab(sf, ab, seed)
    w = (0.5 * ab.curl_velocity()).subs({"xd": 0.0, "yd": 0.0})
    return DifferentialForm(2, ("x", "y"), {("x", "y"): w})


def omega_vanishes(
    omega: DifferentialForm,
    position_box=DEFAULT_BOX,
    n: int = 1000,
    seed: int = 42,
    tol: float = 1e-12,
) -> tuple[bool, float]:
    """Sampled zero test of the (exact, symbolic) position coefficient."""
    w = omega.coefficient(("x", "y"))
    if isinstance(w, Expression) and w.is_zero_constant():
        return True, 0.0
    rng = rng_for(seed, "omega-zero")
    binding = jet_bindings(rng, n, position_box, order=0)
    vals = np.broadcast_to(np.atleast_1d(np.asarray(w.evaluate(binding))), (n,))
    worst = float(np.max(np.abs(vals)))
    return worst < tol, worst


@dataclass(frozen=True)
class SimpleConstruction:
    lagrangian: Lagrangian
    omega_residual: float


def simple_global_lagrangian(
    sf: SourceForm,
    report: HelmholtzReport | None = None,
    position_box=DEFAULT_BOX,
    seed: int = 42,
    omega_tol: float = 1e-12,
    quad_tol: float = 1e-10,
) -> SimpleConstruction:
    """Horizontal part of (time-potential + fiber integral), valid when omega vanishes.

    Raises :class:`NotSimpleError` when the position 2-form does not vanish on
    samples; the caller must then solve for its primitive first.
    """
    if report is None:
        report = helmholtz(sf, position_box=position_box, seed=seed)
    if not report.verdict:
        raise NotSimpleError(f"source form fails Helmholtz conditions: {report.failures}")
    ab = decompose(sf, position_box=position_box, seed=seed)
    ok, worst = omega_vanishes(omega_form(sf, ab), position_box, seed=seed, tol=omega_tol)
    if not ok:
        raise NotSimpleError(f"position 2-form does not vanish (residual {worst:.3e})")
    lag = horizontalize(mu0(sf, ab, seed)) + horizontalize(
        kappa(sf, ab, position_box, seed, quad_tol)
    )
    return SimpleConstruction(lagrangian=lag, omega_residual=worst)
