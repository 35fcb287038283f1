"""The closed 2-form equivalent of a variational source form and its canonical split.

The construction converts the contact-basis coefficients (source components,
the antisymmetric velocity-curl of A, and the B block) to the coordinate basis
once, symbolically; every later numeric check runs on those coordinate
coefficients.  The split into a time part and a velocity-space part exists for
time-independent sources only and both pieces are closed by the Helmholtz
identities.
"""

from __future__ import annotations

from .errors import HelmholtzFailure, TimeDependenceError
from .expr import Expression
from .helmholtz import HelmholtzReport, SourceForm, decompose, helmholtz
from .jet import BASE_COORDS, DifferentialForm

__all__ = ["lepage_equivalent", "decompose_alpha", "alpha_prime_of", "alpha0_of"]


def _require_variational(sf: SourceForm, report: HelmholtzReport | None, seed: int):
    if report is None:
        report = helmholtz(sf, seed=seed)
    if not report.verdict:
        raise HelmholtzFailure(f"source form fails Helmholtz conditions: {report.failures}")
    return report


def lepage_equivalent(
    sf: SourceForm,
    report: HelmholtzReport | None = None,
    seed: int = 42,
) -> DifferentialForm:
    """The unique closed 2-form on the first jet space whose 1-contact part is the source.

    Coefficients are expanded in the coordinate basis; the formal acceleration
    dependence of the contact-basis expression cancels exactly, so every
    coefficient is a function of (x, y, xd, yd) only.
    """
    if not sf.time_independent:
        raise TimeDependenceError("the closed-form equivalent is built for autonomous sources")
    _require_variational(sf, report, seed)
    ab = decompose(sf, seed=seed)
    xd, yd = Expression.variable("xd"), Expression.variable("yd")
    c = 0.5 * ab.curl_velocity()
    return DifferentialForm(
        2,
        BASE_COORDS,
        {
            # dt^dz row: the negatives of the time-part coefficients
            ("t", "x"): -(ab.a_x - c * yd),
            ("t", "y"): -(ab.a_y + c * xd),
            ("t", "xd"): -(ab.b_xx * xd + ab.b_xy * yd),
            ("t", "yd"): -(ab.b_xy * xd + ab.b_yy * yd),
            ("x", "y"): c,
            ("x", "xd"): ab.b_xx,
            ("x", "yd"): ab.b_xy,
            ("y", "xd"): ab.b_xy,
            ("y", "yd"): ab.b_yy,
        },
    )


def decompose_alpha(alpha: DifferentialForm) -> tuple[DifferentialForm, DifferentialForm]:
    """Split a 2-form into ``alpha0 ^ dt + alpha_prime`` with both factors dt-free.

    ``alpha0`` collects the dt-row with flipped sign (``a dz ^ dt = -a dt ^ dz``),
    ``alpha_prime`` keeps the rest.  Rejects time-dependent coefficients: the
    split is canonical only in the autonomous setting.
    """
    if alpha.degree != 2:
        raise ValueError("decompose_alpha expects a 2-form")
    for key, coeff in alpha.coeffs.items():
        if isinstance(coeff, Expression) and "t" in coeff.free_vars:
            raise TimeDependenceError(f"coefficient of {key} depends on t; split unavailable")
    reduced = tuple(c for c in alpha.coords if c != "t")
    zero_coeffs = {}
    prime_coeffs = {}
    for key, coeff in alpha.coeffs.items():
        if key[0] == "t":
            neg = -coeff if isinstance(coeff, Expression) else (lambda b, _c=coeff: -_c(b))
            zero_coeffs[(key[1],)] = neg
        else:
            prime_coeffs[key] = coeff
    return (
        DifferentialForm(1, reduced, zero_coeffs),
        DifferentialForm(2, reduced, prime_coeffs),
    )


def alpha0_of(sf: SourceForm, report: HelmholtzReport | None = None, seed: int = 42) -> DifferentialForm:
    return decompose_alpha(lepage_equivalent(sf, report, seed))[0]


def alpha_prime_of(sf: SourceForm, report: HelmholtzReport | None = None, seed: int = 42) -> DifferentialForm:
    return decompose_alpha(lepage_equivalent(sf, report, seed))[1]
