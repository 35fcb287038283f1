"""Solve ``omega = d eta`` on a finite chain cover with a bump partition of unity.

The cover is an ordered list of box cells, each inside one chart; a smooth
bump lives on every cell and the normalised family is the partition of unity.
Localised masses are chained toward the last cell exactly as the inductive
construction prescribes: each cell's compactly-supported Poincare problem
receives the masses forwarded by its predecessors and hands its own integral
on to its successor via a unit-mass bump parked in the shared overlap.  The
mass left in the last cell is the obstruction residual; the run succeeds only
when it falls below tolerance, and every cell's primitive is compactly
supported inside its cell.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, Mapping, Optional

import numpy as np

from .atlas import Atlas, Box
from .errors import ConfigError, NonzeroMassError, ObstructionError
from .expr import Expression
from .jet import DifferentialForm
from .quadrature import GaussLegendre, calibrate_panels

__all__ = [
    "CoverCell",
    "CoveredSurface",
    "PartitionOfUnity",
    "compact_poincare",
    "solve_exactness",
    "ExactnessSolution",
]

Field2D = Callable[[np.ndarray, np.ndarray], np.ndarray]


def bump_profile(u):
    """The standard mollifier profile exp(-1/(1-u^2)) on (-1, 1), zero outside."""
    u = np.asarray(u, dtype=float)
    out = np.zeros_like(u)
    inside = np.abs(u) < 1.0
    v = u[inside]
    out[inside] = np.exp(-1.0 / (1.0 - v * v))
    return out


def box_bump(box: Box) -> Field2D:
    """Tensorised bump supported exactly on the open box."""
    (x0, x1), (y0, y1) = box

    def bump(x, y):
        u = (2.0 * np.asarray(x, dtype=float) - (x0 + x1)) / (x1 - x0)
        v = (2.0 * np.asarray(y, dtype=float) - (y0 + y1)) / (y1 - y0)
        return bump_profile(u) * bump_profile(v)

    return bump


@dataclass(frozen=True)
class CoverCell:
    """A precompact box in one chart, with the overlap box carrying its outgoing bump.

    ``overlap_box`` must lie inside the cell and inside the successor cell
    (via transitions); for the final cell it is an interior outlet where any
    leftover mass is parked and reported.
    """

    name: str
    chart: str
    box: Box
    overlap_box: Box
    successor: Optional[int] = None  # index into the cover, defaults to the next cell


@dataclass
class CoveredSurface:
    """Finite ordered open cover with successor links forming chains."""

    cells: tuple[CoverCell, ...]
    atlas: Atlas
    support: Optional[dict[str, Box]] = None  # declared support region of omega, per chart

    def successor_index(self, j: int) -> Optional[int]:
        cell = self.cells[j]
        if cell.successor is not None:
            return cell.successor if cell.successor < len(self.cells) else None
        return j + 1 if j + 1 < len(self.cells) else None

    def predecessors(self, j: int) -> list[int]:
        return [i for i in range(len(self.cells)) if self.successor_index(i) == j]

    def validate(self, seed: int = 42):
        if not self.cells:
            raise ConfigError("cover has no cells")
        for j, cell in enumerate(self.cells):
            domain = self.atlas.chart(cell.chart).domain
            for (lo, hi), (dlo, dhi) in zip(cell.box, domain):
                if not (dlo < lo < hi < dhi):
                    raise ConfigError(
                        f"cell {cell.name}: box ({lo}, {hi}) not precompact in chart "
                        f"{cell.chart} domain ({dlo}, {dhi})"
                    )
            for (lo, hi), (clo, chi) in zip(cell.overlap_box, cell.box):
                if not (clo <= lo < hi <= chi):
                    raise ConfigError(f"cell {cell.name}: overlap box escapes the cell box")
            succ = self.successor_index(j)
            if succ is not None:
                if succ <= j:
                    raise ConfigError(f"cell {cell.name}: successor index must exceed {j}")
                self._check_overlap_lands_in(j, succ)

    def _check_overlap_lands_in(self, j: int, succ: int):
        cell, target = self.cells[j], self.cells[succ]
        grid = np.linspace(0.15, 0.85, 3)
        (x0, x1), (y0, y1) = cell.overlap_box
        xs = x0 + grid * (x1 - x0)
        ys = y0 + grid * (y1 - y0)
        X, Y = (a.ravel() for a in np.meshgrid(xs, ys))
        if cell.chart != target.chart:
            tmap = self.atlas.transition(cell.chart, target.chart)
            if tmap is None:
                raise ConfigError(
                    f"no transition {cell.chart}->{target.chart} linking cells "
                    f"{cell.name} and {target.name}"
                )
            X, Y, valid = tmap.apply_base_array(X, Y)
            if not valid.all():
                raise ConfigError(
                    f"overlap box of {cell.name} leaves the {cell.chart}->{target.chart} overlap"
                )
        (tx0, tx1), (ty0, ty1) = target.box
        if not ((X > tx0) & (X < tx1) & (Y > ty0) & (Y < ty1)).all():
            raise ConfigError(
                f"overlap box of {cell.name} does not land inside successor cell {target.name}"
            )


class PartitionOfUnity:
    """Normalised cell bumps: psi_j = b_j / sum_k b_k wherever b_j > 0."""

    def __init__(self, cover: CoveredSurface):
        self.cover = cover
        self._bumps = [box_bump(cell.box) for cell in cover.cells]

    def raw(self, j: int, chart: str, x: np.ndarray, y: np.ndarray) -> np.ndarray:
        cell = self.cover.cells[j]
        x = np.asarray(x, dtype=float)
        y = np.asarray(y, dtype=float)
        if cell.chart == chart:
            return self._bumps[j](x, y)
        tmap = self.cover.atlas.transition(chart, cell.chart)
        if tmap is None:
            return np.zeros_like(x)
        xb, yb, valid = tmap.apply_base_array(x, y)
        out = np.zeros_like(x)
        if valid.any():
            out[valid] = self._bumps[j](xb[valid], yb[valid])
        return out

    def total(self, chart: str, x: np.ndarray, y: np.ndarray) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        total = np.zeros_like(x)
        for j in range(len(self.cover.cells)):
            total += self.raw(j, chart, x, y)
        return total

    def psi(self, j: int, chart: str, x: np.ndarray, y: np.ndarray) -> np.ndarray:
        num = self.raw(j, chart, x, y)
        out = np.zeros_like(num)
        pos = num > 0.0
        if pos.any():
            den = self.total(chart, np.asarray(x)[pos], np.asarray(y)[pos])
            out[pos] = num[pos] / den
        return out


class BoxQuadrature:
    """Tensor Gauss-Legendre rule over a box with a frozen panel count."""

    def __init__(self, box: Box, panels: int, order: int = 16):
        (x0, x1), (y0, y1) = box
        rule = GaussLegendre(panels, order)
        self.xn = x0 + rule.nodes * (x1 - x0)
        self.yn = y0 + rule.nodes * (y1 - y0)
        self.wx = rule.weights * (x1 - x0)
        self.wy = rule.weights * (y1 - y0)
        X, Y = np.meshgrid(self.xn, self.yn, indexing="ij")
        self._X, self._Y = X.ravel(), Y.ravel()
        self._W = np.outer(self.wx, self.wy).ravel()

    def integrate(self, f: Field2D) -> float:
        return float(np.dot(np.asarray(f(self._X, self._Y), dtype=float), self._W))


def _calibrated_box_quad(f: Field2D, box: Box, tol: float = 1e-10) -> BoxQuadrature:
    panels = calibrate_panels(lambda p: BoxQuadrature(box, p).integrate(f), tol=tol, start=2)
    return BoxQuadrature(box, panels)


class UnitBump2Form:
    """Unit-mass 2-form bump on a box, evaluable in other charts with the Jacobian factor."""

    def __init__(self, chart: str, box: Box, atlas: Atlas):
        self.chart = chart
        self.box = box
        self.atlas = atlas
        self._bump = box_bump(box)
        self.mass = _calibrated_box_quad(self._bump, box).integrate(self._bump)

    def coefficient(self, chart: str, x: np.ndarray, y: np.ndarray) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        y = np.asarray(y, dtype=float)
        if chart == self.chart:
            return self._bump(x, y) / self.mass
        tmap = self.atlas.transition(chart, self.chart)
        if tmap is None:
            return np.zeros_like(x)
        xb, yb, valid, J = tmap.apply_base_with_jacobian_array(x, y)
        out = np.zeros_like(x)
        if valid.any():
            det = J[0][valid] * J[3][valid] - J[1][valid] * J[2][valid]
            out[valid] = self._bump(xb[valid], yb[valid]) / self.mass * det
        return out


class PoincareSolution:
    """Compactly supported primitive ``h dy - e(x) g(y) dx`` of a zero-mass 2-form.

    ``F(y) = Int f(x, y) dx`` over the cell, ``g(y) = Int_{y0}^{y} F`` (with a
    per-panel prefix cache so single evaluations stay cheap), ``e`` a
    unit-mass bump in x, and ``h(x, y) = Int_{x0}^{x} (f(u, y) - e(u) F(y)) du``.
    All rules are frozen after calibration, so both coefficients are smooth
    functions fit for finite-difference verification.
    """

    def __init__(self, f: Field2D, box: Box, mass: float, panels_x: int, panels_y: int):
        (x0, x1), (y0, y1) = box
        self.box = box
        self.mass = mass
        self._f = f
        self._x0, self._y0, self._y1 = x0, y0, y1
        rule_x = GaussLegendre(panels_x)
        self._xnodes = x0 + rule_x.nodes * (x1 - x0)
        self._xweights = rule_x.weights * (x1 - x0)
        self._rule01 = GaussLegendre(1)  # single-panel 16-node rule for partial spans
        self._rule_full_x = rule_x

        # unit-mass 1-d bump in x
        raw = lambda u: bump_profile((2.0 * np.asarray(u, dtype=float) - (x0 + x1)) / (x1 - x0))
        e_mass = float(np.dot(raw(self._xnodes), self._xweights))
        self._e = lambda u: raw(u) / e_mass

        # prefix panel integrals of F over [y0, y1]
        self._ny = panels_y
        self._hy = (y1 - y0) / panels_y
        starts = y0 + np.arange(panels_y) * self._hy
        ynodes = (starts[:, None] + (self._rule01.nodes[None, :]) * self._hy).ravel()
        Fvals = self._F_vec(ynodes).reshape(panels_y, -1)
        panel_ints = Fvals @ (self._rule01.weights * self._hy)
        self._g_prefix = np.concatenate([[0.0], np.cumsum(panel_ints)])

    def _F_vec(self, y_arr: np.ndarray) -> np.ndarray:
        y_arr = np.atleast_1d(np.asarray(y_arr, dtype=float))
        X = np.broadcast_to(self._xnodes[None, :], (y_arr.size, self._xnodes.size))
        Y = np.broadcast_to(y_arr[:, None], X.shape)
        vals = np.asarray(self._f(X.ravel(), Y.ravel()), dtype=float).reshape(X.shape)
        return vals @ self._xweights

    def F(self, y: float) -> float:
        return float(self._F_vec(np.array([y]))[0])

    def g(self, y: float) -> float:
        if y <= self._y0:
            return 0.0
        if y >= self._y1:
            return float(self._g_prefix[-1])
        k = min(int((y - self._y0) / self._hy), self._ny - 1)
        base = self._y0 + k * self._hy
        span = y - base
        if span == 0.0:
            return float(self._g_prefix[k])
        u = base + self._rule01.nodes * span
        partial = float(np.dot(self._F_vec(u), self._rule01.weights) * span)
        return float(self._g_prefix[k]) + partial

    def h(self, x: float, y: float) -> float:
        span = x - self._x0
        if span == 0.0:
            return 0.0
        u = self._x0 + self._rule_full_x.nodes * span
        vals = np.asarray(self._f(u, np.full_like(u, y)), dtype=float) - self._e(u) * self.F(y)
        return float(np.dot(vals, self._rule_full_x.weights) * span)

    def coeff_dx(self, x: float, y: float) -> float:
        return -float(self._e(np.array([x]))[0]) * self.g(y)

    def coeff_dy(self, x: float, y: float) -> float:
        return self.h(x, y)

    @property
    def form(self) -> DifferentialForm:
        return DifferentialForm(
            1,
            ("x", "y"),
            {
                ("x",): lambda b: self.coeff_dx(b["x"], b["y"]),
                ("y",): lambda b: self.coeff_dy(b["x"], b["y"]),
            },
        )


def compact_poincare(
    f: Field2D,
    box: Box,
    tol_mass: float = 1e-8,
    boundary_tol: float = 1e-10,
    quad_tol: float = 1e-10,
    boundary_samples: int = 40,
) -> PoincareSolution:
    """Primitive of ``f dx^dy`` with support inside the box, given zero total mass.

    ``f`` must accept equal-shape numpy arrays.  Support of the primitive
    follows from the zero-mass hypothesis; inputs carrying mass above
    ``tol_mass`` raise :class:`NonzeroMassError`, inputs reaching the box
    boundary above ``boundary_tol`` are rejected.
    """
    (x0, x1), (y0, y1) = box

    edge = np.linspace(0.0, 1.0, boundary_samples)
    xs = x0 + edge * (x1 - x0)
    ys = y0 + edge * (y1 - y0)
    border_x = np.concatenate([xs, xs, np.full_like(ys, x0), np.full_like(ys, x1)])
    border_y = np.concatenate([np.full_like(xs, y0), np.full_like(xs, y1), ys, ys])
    worst_boundary = float(np.max(np.abs(f(border_x, border_y))))
    if worst_boundary > boundary_tol:
        raise ValueError(
            f"input 2-form is not supported inside the cell (boundary value {worst_boundary:.3e})"
        )

    quad = _calibrated_box_quad(f, box, quad_tol)
    mass = quad.integrate(f)
    if abs(mass) > tol_mass:
        raise NonzeroMassError(
            f"total mass {mass:.3e} exceeds tolerance {tol_mass:.1e}", mass
        )

    mid_y = 0.5 * (y0 + y1)
    panels_x = calibrate_panels(
        lambda p: _line_integral(lambda u: f(u, np.full_like(u, mid_y)), x0, x1, p),
        tol=quad_tol,
        start=2,
    )
    rule_x = GaussLegendre(panels_x)
    xnodes = x0 + rule_x.nodes * (x1 - x0)
    xweights = rule_x.weights * (x1 - x0)

    def F_probe(y_arr):
        y_arr = np.atleast_1d(y_arr)
        X = np.broadcast_to(xnodes[None, :], (y_arr.size, xnodes.size))
        Y = np.broadcast_to(np.asarray(y_arr, dtype=float)[:, None], X.shape)
        return np.asarray(f(X.ravel(), Y.ravel()), dtype=float).reshape(X.shape) @ xweights

    panels_y = calibrate_panels(lambda p: _line_integral(F_probe, y0, y1, p), tol=quad_tol, start=2)
    return PoincareSolution(f, box, mass, panels_x, panels_y)


def _line_integral(g, a: float, b: float, panels: int) -> float:
    rule = GaussLegendre(panels)
    u = a + rule.nodes * (b - a)
    return float(np.dot(np.asarray(g(u), dtype=float).reshape(u.shape), rule.weights) * (b - a))


@dataclass
class CellSolution:
    cell: CoverCell
    c_value: float
    primitive: PoincareSolution


class ExactnessSolution:
    """Global 1-form primitive of omega assembled from per-cell compact primitives."""

    def __init__(self, cover: CoveredSurface, solutions: list[CellSolution], pou: PartitionOfUnity):
        self.cover = cover
        self.solutions = solutions
        self.pou = pou

    @property
    def c_values(self) -> list[float]:
        return [s.c_value for s in self.solutions]

    def eta_at(self, chart: str, x: float, y: float) -> tuple[float, float]:
        """Coefficients of the assembled 1-form in the coordinates of ``chart``."""
        out_x = out_y = 0.0
        for sol in self.solutions:
            cell = sol.cell
            if cell.chart == chart:
                cx, cy, J = x, y, (1.0, 0.0, 0.0, 1.0)
            else:
                tmap = self.cover.atlas.transition(chart, cell.chart)
                if tmap is None:
                    continue
                xb, yb, valid, Jarr = tmap.apply_base_with_jacobian_array(
                    np.array([x]), np.array([y])
                )
                if not valid[0]:
                    continue
                cx, cy = float(xb[0]), float(yb[0])
                J = tuple(float(j[0]) for j in Jarr)
            (bx0, bx1), (by0, by1) = cell.box
            if not (bx0 < cx < bx1 and by0 < cy < by1):
                continue
            ex = sol.primitive.coeff_dx(cx, cy)
            ey = sol.primitive.coeff_dy(cx, cy)
            # covector pullback: eta_x += ex dx'/dx + ey dy'/dx
            out_x += ex * J[0] + ey * J[2]
            out_y += ex * J[1] + ey * J[3]
        return out_x, out_y


def solve_exactness(
    cover: CoveredSurface,
    omega_by_chart: Mapping[str, Expression],
    tol_obstruction: float = 1e-4,
    tol_mass: float = 1e-8,
    quad_tol: float = 1e-10,
    seed: int = 42,
    diagnose: bool = True,
) -> ExactnessSolution:
    """Run the chained induction and assemble the global primitive.

    ``omega_by_chart`` gives the position 2-form coefficient of each chart in
    canonical variables.  Raises :class:`ObstructionError` when the terminal
    mass exceeds ``tol_obstruction``; the error carries a diagnosis of whether
    enlarging the last cell helps (truncation) or not (genuine obstruction).
    """
    cover.validate(seed=seed)
    pou = PartitionOfUnity(cover)
    thetas = [
        UnitBump2Form(cell.chart, cell.overlap_box, cover.atlas) for cell in cover.cells
    ]
    omega_fns = {
        chart: _omega_field(expr) for chart, expr in omega_by_chart.items()
    }

    solutions: list[CellSolution] = []
    c_values: list[float] = []
    for j, cell in enumerate(cover.cells):
        if cell.chart not in omega_fns:
            raise ConfigError(f"cell {cell.name}: no omega coefficient for chart {cell.chart}")
        w = omega_fns[cell.chart]
        preds = cover.predecessors(j)

        def incoming(x, y, _w=w, _j=j, _preds=tuple(preds)):
            total = pou.psi(_j, cover.cells[_j].chart, x, y) * _w(x, y)
            for i in _preds:
                total = total + c_values[i] * thetas[i].coefficient(
                    cover.cells[_j].chart, x, y
                )
            return total

        quad = _calibrated_box_quad(incoming, cell.box, quad_tol)
        c_j = quad.integrate(incoming)
        c_values.append(c_j)

        def localized(x, y, _inc=incoming, _c=c_j, _th=thetas[j], _chart=cell.chart):
            return _inc(x, y) - _c * _th.coefficient(_chart, x, y)

        primitive = compact_poincare(
            localized, cell.box, tol_mass=tol_mass, quad_tol=quad_tol
        )
        solutions.append(CellSolution(cell, c_j, primitive))

    c_last = c_values[-1]
    if abs(c_last) >= tol_obstruction:
        diagnosis = ""
        if diagnose:
            diagnosis = _diagnose_obstruction(cover, omega_by_chart, c_last, quad_tol, seed)
        raise ObstructionError(
            f"terminal mass {c_last:.6e} exceeds tolerance {tol_obstruction:.1e}; {diagnosis}",
            c_last=c_last,
            diagnosis=diagnosis,
        )
    return ExactnessSolution(cover, solutions, pou)


def _omega_field(expr: Expression) -> Field2D:
    def w(x, y):
        vals = expr.evaluate({"x": np.asarray(x, dtype=float), "y": np.asarray(y, dtype=float)})
        return np.broadcast_to(np.atleast_1d(np.asarray(vals, dtype=float)), np.asarray(x).shape)

    return w


def _grow_box(box: Box, domain: Box, factor: float = 1.5) -> Box:
    out = []
    for (lo, hi), (dlo, dhi) in zip(box, domain):
        mid, half = 0.5 * (lo + hi), 0.5 * (hi - lo) * factor
        margin = 1e-3 * (dhi - dlo) if math.isfinite(dhi - dlo) else 1e-3
        out.append((max(mid - half, dlo + margin), min(mid + half, dhi - margin)))
    return tuple(out)


def _c_values_only(cover: CoveredSurface, omega_fns: Mapping[str, Field2D], quad_tol: float):
    """The chained masses without the (expensive) per-cell primitives."""
    pou = PartitionOfUnity(cover)
    thetas = [UnitBump2Form(c.chart, c.overlap_box, cover.atlas) for c in cover.cells]
    c_values: list[float] = []
    for j, cell in enumerate(cover.cells):
        w = omega_fns[cell.chart]
        preds = cover.predecessors(j)

        def incoming(x, y, _w=w, _j=j, _preds=tuple(preds)):
            total = pou.psi(_j, cover.cells[_j].chart, x, y) * _w(x, y)
            for i in _preds:
                total = total + c_values[i] * thetas[i].coefficient(cover.cells[_j].chart, x, y)
            return total

        c_values.append(_calibrated_box_quad(incoming, cell.box, quad_tol).integrate(incoming))
    return c_values


def _diagnose_obstruction(cover, omega_by_chart, c_last, quad_tol, seed) -> str:
    last = cover.cells[-1]
    domain = cover.atlas.chart(last.chart).domain
    grown = CoverCell(last.name, last.chart, _grow_box(last.box, domain), last.overlap_box, last.successor)
    trial = CoveredSurface(cover.cells[:-1] + (grown,), cover.atlas, cover.support)
    try:
        trial.validate(seed=seed)
        omega_fns = {chart: _omega_field(e) for chart, e in omega_by_chart.items()}
        c_trial = _c_values_only(trial, omega_fns, quad_tol)[-1]
    except Exception:
        return "terminal mass persists (could not test a larger final cell)"
    if abs(c_trial) < 0.9 * abs(c_last):
        return (
            f"enlarging the last cell reduced the terminal mass to {c_trial:.3e}: "
            "the cover truncation is too small"
        )
    return (
        f"enlarging the last cell left the terminal mass at {c_trial:.3e}: "
        "the 2-form carries genuine cohomological mass (top cohomology obstruction)"
    )
