"""Jet-coordinate bookkeeping and exterior calculus on coordinate-coefficient forms.

Coordinates follow the canonical naming ``t, x, y, xd, yd, xdd, ydd, ...`` up
to fourth derivatives (the second-order Euler-Lagrange operator needs two
total time derivatives of second-jet functions, nothing deeper).  Differential
forms are stored over the coordinate basis ``dt, dx, dy, dxd, dyd``; the
contact basis (``dx - xd dt`` and friends) is a conversion applied by
:func:`horizontalize`, :func:`contact_decompose` and :func:`p1`, not a storage
format.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Mapping, Union

from .errors import JetOrderError
from .expr import Expression
from .numdiff import FDConfig, partial_fd

__all__ = [
    "JET_VARS",
    "BASE_COORDS",
    "JetPoint",
    "DifferentialForm",
    "Lagrangian",
    "ContactSplit",
    "P1Components",
    "total_derivative",
    "horizontalize",
    "contact_decompose",
    "exterior_derivative",
    "p1",
]

JET_VARS = ("t", "x", "y", "xd", "yd", "xdd", "ydd", "xddd", "yddd", "xdddd", "ydddd")
BASE_COORDS = ("t", "x", "y", "xd", "yd")
_COORD_RANK = {name: i for i, name in enumerate(BASE_COORDS)}

# x -> xd -> xdd -> xddd -> xdddd under the total time derivative
_SUCCESSOR = {
    "x": "xd", "y": "yd",
    "xd": "xdd", "yd": "ydd",
    "xdd": "xddd", "ydd": "yddd",
    "xddd": "xdddd", "yddd": "ydddd",
}

Coefficient = Union[Expression, Callable[[Mapping[str, float]], float]]


@dataclass(frozen=True)
class JetPoint:
    """A point of a prolonged space: time, position, and derivatives up to ``order``."""

    order: int
    t: float
    derivatives: tuple[tuple[float, float], ...]  # ((x, y), (xd, yd), ...)

    def __post_init__(self):
        if not 0 <= self.order <= 4:
            raise JetOrderError(f"jet order must be in 0..4, got {self.order}")
        if len(self.derivatives) != self.order + 1:
            raise JetOrderError(
                f"expected {self.order + 1} derivative pairs, got {len(self.derivatives)}"
            )
        for pair in self.derivatives:
            for v in pair:
                if not _finite(v):
                    raise ValueError("jet coordinates must be finite")

    @staticmethod
    def make(t: float = 0.0, **coords: float) -> "JetPoint":
        """Build from named coordinates, inferring the order from what is given."""
        order = 0
        for name in coords:
            if name not in JET_VARS or name == "t":
                raise KeyError(f"unknown jet coordinate {name!r}")
            order = max(order, (JET_VARS.index(name) - 1) // 2)
        pairs = []
        for k in range(order + 1):
            xn, yn = JET_VARS[1 + 2 * k], JET_VARS[2 + 2 * k]
            pairs.append((float(coords.get(xn, 0.0)), float(coords.get(yn, 0.0))))
        return JetPoint(order, float(t), tuple(pairs))

    def value(self, name: str) -> float:
        if name == "t":
            return self.t
        idx = JET_VARS.index(name)
        level, side = (idx - 1) // 2, (idx - 1) % 2
        if level > self.order:
            raise JetOrderError(f"{name} exceeds jet order {self.order}")
        return self.derivatives[level][side]

    def binding(self) -> dict:
        out = {"t": self.t}
        for level, (xv, yv) in enumerate(self.derivatives):
            out[JET_VARS[1 + 2 * level]] = xv
            out[JET_VARS[2 + 2 * level]] = yv
        return out


def _finite(v: float) -> bool:
    return v == v and abs(v) != float("inf")


def total_derivative(f: Expression) -> Expression:
    """Total time derivative, promoting each jet coordinate one level.

    ``d_t f = df/dt + xd df/dx + yd df/dy + xdd df/dxd + ...``.  Variables
    outside the jet family are treated as constants.  Input order tops out at
    three (the output then reaches the fourth-order coordinates).
    """
    for name in ("xdddd", "ydddd"):
        if name in f.free_vars:
            raise JetOrderError("total derivative of a fourth-order expression not supported")
    out = f.diff("t")
    for var, nxt in _SUCCESSOR.items():
        if var in f.free_vars:
            out = out + Expression.variable(nxt) * f.diff(var)
    return out


@dataclass(frozen=True)
class DifferentialForm:
    """Degree-graded form over a subset of the base coordinates.

    ``coeffs`` maps strictly increasing multi-indices (tuples of coordinate
    names, ordered t < x < y < xd < yd) to coefficients.  Coefficients are
    either symbolic Expressions or plain callables ``binding -> float`` for
    quadrature-backed forms.
    """

    degree: int
    coords: tuple[str, ...]
    coeffs: Mapping[tuple[str, ...], Coefficient] = field(default_factory=dict)

    def __post_init__(self):
        for c in self.coords:
            if c not in _COORD_RANK:
                raise ValueError(f"unknown base coordinate {c!r}")
        for key in self.coeffs:
            if len(key) != self.degree:
                raise ValueError(f"multi-index {key} does not match degree {self.degree}")
            ranks = [_COORD_RANK[c] for c in key]
            if ranks != sorted(set(ranks)):
                raise ValueError(f"multi-index {key} is not strictly increasing")
            if any(c not in self.coords for c in key):
                raise ValueError(f"multi-index {key} uses coordinates outside {self.coords}")

    def coefficient(self, key: tuple[str, ...]) -> Coefficient:
        return self.coeffs.get(tuple(key), Expression.constant(0.0))

    def is_symbolic(self) -> bool:
        return all(isinstance(c, Expression) for c in self.coeffs.values())

    def eval_coefficient(self, key: tuple[str, ...], binding: Mapping[str, float]) -> float:
        c = self.coefficient(key)
        if isinstance(c, Expression):
            return float(c.evaluate(binding))
        return float(c(binding))

    def eval_all(self, binding: Mapping[str, float]) -> dict:
        return {key: self.eval_coefficient(key, binding) for key in sorted_keys(self)}

    def map_coefficients(self, fn) -> "DifferentialForm":
        return DifferentialForm(self.degree, self.coords, {k: fn(v) for k, v in self.coeffs.items()})

    def __add__(self, other: "DifferentialForm") -> "DifferentialForm":
        if self.degree != other.degree:
            raise ValueError("cannot add forms of different degree")
        coords = tuple(c for c in BASE_COORDS if c in set(self.coords) | set(other.coords))
        out: dict = {}
        for form in (self, other):
            for key, c in form.coeffs.items():
                if key in out and isinstance(out[key], Expression) and isinstance(c, Expression):
                    out[key] = out[key] + c
                elif key in out:
                    prev, cur = out[key], c
                    out[key] = _callable_sum(prev, cur)
                else:
                    out[key] = c
        return DifferentialForm(self.degree, coords, out)

    def scale(self, factor: float) -> "DifferentialForm":
        def scaled(c):
            if isinstance(c, Expression):
                return c * factor
            return lambda b, _c=c: factor * _c(b)

        return self.map_coefficients(scaled)


def _callable_sum(a: Coefficient, b: Coefficient):
    def total(binding):
        va = a.evaluate(binding) if isinstance(a, Expression) else a(binding)
        vb = b.evaluate(binding) if isinstance(b, Expression) else b(binding)
        return va + vb

    return total


def sorted_keys(form: DifferentialForm):
    return sorted(form.coeffs, key=lambda key: tuple(_COORD_RANK[c] for c in key))


@dataclass(frozen=True)
class Lagrangian:
    """A horizontal 1-form ``L dt``; ``L`` may carry numeric (quadrature-backed) parts.

    Numeric parts are callables of first-jet bindings only; the symbolic part
    may reach second order.
    """

    order: int
    expr: Expression | None = None
    numeric: tuple[Callable[[Mapping[str, float]], float], ...] = ()

    def __post_init__(self):
        if self.order not in (1, 2):
            raise ValueError("Lagrangian order must be 1 or 2")
        if self.order == 1 and self.expr is not None:
            bad = self.expr.free_vars & {"xdd", "ydd", "xddd", "yddd", "xdddd", "ydddd"}
            if bad:
                raise ValueError(f"first-order Lagrangian depends on {sorted(bad)}")

    def evaluate(self, binding: Mapping[str, float]) -> float:
        total = 0.0
        if self.expr is not None:
            total += float(self.expr.evaluate(binding))
        for term in self.numeric:
            total += float(term(binding))
        return total

    def is_symbolic(self) -> bool:
        return not self.numeric

    def __add__(self, other: "Lagrangian") -> "Lagrangian":
        expr = self.expr
        if other.expr is not None:
            expr = other.expr if expr is None else expr + other.expr
        return Lagrangian(max(self.order, other.order), expr, self.numeric + other.numeric)


# Contact split of the coordinate differentials: dz = (contact form) + v dt.
# Keys are the coordinate names; values: (contact label, velocity expression).
_CONTACT_OF = {
    "t": (None, Expression.constant(1.0)),
    "x": ("wx", Expression.variable("xd")),
    "y": ("wy", Expression.variable("yd")),
    "xd": ("wxd", Expression.variable("xdd")),
    "yd": ("wyd", Expression.variable("ydd")),
}


def horizontalize(rho: DifferentialForm) -> Lagrangian:
    """Horizontal component of a 1-form: ``h(rho) = L dt``.

    ``L = rho_t + rho_x xd + rho_y yd + rho_xd xdd + rho_yd ydd``; the result
    is second order exactly when dxd/dyd coefficients are present.
    """
    if rho.degree != 1:
        raise ValueError("horizontalize expects a 1-form")
    order = 2 if any(key[0] in ("xd", "yd") for key in rho.coeffs) else 1
    expr = None
    numeric = []
    for key, c in rho.coeffs.items():
        v = _CONTACT_OF[key[0]][1]
        if isinstance(c, Expression):
            term = c * v
            expr = term if expr is None else expr + term
        else:
            vel = key[0]
            numeric.append(_horizontal_term(c, vel))
    return Lagrangian(order, expr, tuple(numeric))


_VELOCITY_NAME = {"x": "xd", "y": "yd", "xd": "xdd", "yd": "ydd"}


def _horizontal_term(coeff, coord):
    def term(binding):
        factor = 1.0 if coord == "t" else binding[_VELOCITY_NAME[coord]]
        return coeff(binding) * factor

    return term


@dataclass(frozen=True)
class ContactSplit:
    """1-form split ``rho = L dt + A_x w^x + A_y w^y + Adot_x wdot^x + Adot_y wdot^y``."""

    horizontal: Lagrangian
    a_x: Expression
    a_y: Expression
    adot_x: Expression
    adot_y: Expression

    def reassemble(self) -> DifferentialForm:
        """Rebuild the coordinate-basis 1-form (evaluated equality with the input)."""
        L = self.horizontal.expr if self.horizontal.expr is not None else Expression.constant(0.0)
        xd, yd = Expression.variable("xd"), Expression.variable("yd")
        xdd, ydd = Expression.variable("xdd"), Expression.variable("ydd")
        coeffs = {
            ("t",): L - self.a_x * xd - self.a_y * yd - self.adot_x * xdd - self.adot_y * ydd,
            ("x",): self.a_x,
            ("y",): self.a_y,
            ("xd",): self.adot_x,
            ("yd",): self.adot_y,
        }
        return DifferentialForm(1, BASE_COORDS, coeffs)


def contact_decompose(rho: DifferentialForm) -> ContactSplit:
    if rho.degree != 1:
        raise ValueError("contact_decompose expects a 1-form")
    if not rho.is_symbolic():
        raise ValueError("contact_decompose expects symbolic coefficients")

    def coeff(name):
        c = rho.coefficient((name,))
        return c if isinstance(c, Expression) else Expression.constant(0.0)

    return ContactSplit(
        horizontal=horizontalize(rho),
        a_x=coeff("x"),
        a_y=coeff("y"),
        adot_x=coeff("xd"),
        adot_y=coeff("yd"),
    )


def exterior_derivative(form: DifferentialForm, fd: FDConfig | None = None) -> DifferentialForm:
    """d on coordinate-coefficient forms.

    Symbolic coefficients get exact partials; callable coefficients fall back
    to central finite differences (``fd`` defaults to :class:`FDConfig`).
    """
    if form.degree >= 3:
        raise ValueError("exterior derivative only supported up to 2-forms")
    out: dict = {}
    for key, c in form.coeffs.items():
        for z in form.coords:
            if z in key:
                continue
            ranks = sorted([z, *key], key=_COORD_RANK.get)
            pos = ranks.index(z)
            sign = -1.0 if pos % 2 else 1.0
            if isinstance(c, Expression):
                dc = c.diff(z)
                if dc.is_zero_constant():
                    continue
                term = dc if sign > 0 else -dc
            else:
                cfg = fd or FDConfig()
                term = _fd_partial_coeff(c, z, sign, cfg)
            newkey = tuple(ranks)
            if newkey in out:
                prev = out[newkey]
                if isinstance(prev, Expression) and isinstance(term, Expression):
                    out[newkey] = prev + term
                else:
                    out[newkey] = _callable_sum(prev, term)
            else:
                out[newkey] = term
    return DifferentialForm(form.degree + 1, form.coords, out)


def _fd_partial_coeff(c, z, sign, cfg):
    def numeric(binding):
        return sign * partial_fd(c, binding, z, cfg)

    return numeric


@dataclass(frozen=True)
class P1Components:
    """1-contact part of a 2-form in the basis ``w^x^dt, w^y^dt, wdot^x^dt, wdot^y^dt``.

    For source-form shaped inputs the last two components vanish; they are kept
    so that callers can assert it.
    """

    eps_x: Expression
    eps_y: Expression
    extra_xd: Expression
    extra_yd: Expression


def p1(rho: DifferentialForm) -> P1Components:
    """1-contact component after pulling back one jet level up.

    Each ``dz_i ^ dz_j`` term splits through ``dz = C(z) + v(z) dt``; the
    coefficient landing on ``C ^ dt`` is collected per contact label.
    """
    if rho.degree != 2:
        raise ValueError("p1 expects a 2-form")
    if not rho.is_symbolic():
        raise ValueError("p1 expects symbolic coefficients")
    zero = Expression.constant(0.0)
    acc = {"wx": zero, "wy": zero, "wxd": zero, "wyd": zero}
    for (zi, zj), c in rho.coeffs.items():
        if not isinstance(c, Expression):  # pragma: no cover - guarded above
            raise ValueError("p1 expects symbolic coefficients")
        ci, vi = _CONTACT_OF[zi]
        cj, vj = _CONTACT_OF[zj]
        # c dz_i ^ dz_j = c C_i ^ C_j + (c v_j) C_i ^ dt - (c v_i) C_j ^ dt
        if ci is not None:
            acc[ci] = acc[ci] + c * vj
        if cj is not None:
            acc[cj] = acc[cj] - c * vi
    return P1Components(acc["wx"], acc["wy"], acc["wxd"], acc["wyd"])
