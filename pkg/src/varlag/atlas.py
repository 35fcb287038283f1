"""Charts with box domains, piecewise transitions, jet prolongation, globality checks.

Transitions are lists of guarded pieces; a piece is active at a point when all
of its guard expressions are strictly positive.  Guard boundaries are measure
zero and rejected rather than resolved, so seeded sampling never lands on
them.  Prolongation is symbolic: velocities transform by the Jacobian of the
base map and accelerations by its total time derivative, which also hands the
pullback machinery exact Jacobians to evaluate.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Mapping, Optional, Sequence, Union

import numpy as np

from .errors import ConfigError, TransitionDomainError
from .expr import Expression
from .helmholtz import SourceForm
from .jet import BASE_COORDS, DifferentialForm, JetPoint, total_derivative
from .sampling import binding_at, clip_box, rng_for, uniform_box

__all__ = [
    "Chart",
    "TransitionPiece",
    "TransitionMap",
    "Atlas",
    "prolong_transition",
    "pullback_form_at",
    "pullback_source_at",
    "check_global",
    "GlobalityReport",
]

Box = tuple[tuple[float, float], tuple[float, float]]


@dataclass(frozen=True)
class Chart:
    """A coordinate chart with an open box domain.

    ``coord_names`` are the user-facing names (e.g. ("phi", "tau")); all
    internal math runs on the canonical names x, y and their d-suffixed jets.
    """

    name: str
    coord_names: tuple[str, str]
    domain: Box
    sample_box: Optional[Box] = None

    def __post_init__(self):
        if len(set(self.coord_names)) != 2:
            raise ConfigError(f"chart {self.name}: coordinate names must be two distinct names")
        for lo, hi in self.domain:
            if not lo < hi:
                raise ConfigError(f"chart {self.name}: empty domain interval ({lo}, {hi})")

    def sampling_box(self) -> Box:
        return self.sample_box if self.sample_box is not None else clip_box(self.domain)


@dataclass(frozen=True)
class TransitionPiece:
    """One guarded branch of a piecewise transition (expressions in x, y)."""

    guards: tuple[Expression, ...]
    map_x: Expression
    map_y: Expression

    def active(self, binding: Mapping[str, float]) -> bool:
        return all(float(g.evaluate(binding)) > 0.0 for g in self.guards)


@dataclass(frozen=True)
class TransitionMap:
    from_chart: str
    to_chart: str
    pieces: tuple[TransitionPiece, ...]
    overlap_boxes: tuple[Box, ...] = ()

    def piece_at(self, x: float, y: float) -> TransitionPiece:
        b = {"x": x, "y": y}
        for piece in self.pieces:
            if piece.active(b):
                return piece
        raise TransitionDomainError(
            f"point ({x}, {y}) outside every guard region of {self.from_chart}->{self.to_chart}"
        )

    def apply_base(self, x: float, y: float) -> tuple[float, float]:
        piece = self.piece_at(x, y)
        b = {"x": x, "y": y}
        return float(piece.map_x.evaluate(b)), float(piece.map_y.evaluate(b))

    def apply_base_array(self, x: np.ndarray, y: np.ndarray):
        """Vectorised base map; returns (xb, yb, valid) with invalid entries zeroed."""
        xb, yb, valid, _ = self._apply_array(x, y, jacobian=False)
        return xb, yb, valid

    def apply_base_with_jacobian_array(self, x: np.ndarray, y: np.ndarray):
        """Vectorised base map plus Jacobian entries (J11, J12, J21, J22)."""
        return self._apply_array(x, y, jacobian=True)

    def _apply_array(self, x: np.ndarray, y: np.ndarray, jacobian: bool):
        b = {"x": x, "y": y}
        masks = []
        for piece in self.pieces:
            m = np.ones_like(x, dtype=bool)
            for g in piece.guards:
                m &= np.broadcast_to(np.atleast_1d(np.asarray(g.evaluate(b))), x.shape) > 0.0
            masks.append(m)
        valid = np.logical_or.reduce(masks) if masks else np.zeros_like(x, dtype=bool)
        xb = np.zeros_like(x, dtype=float)
        yb = np.zeros_like(y, dtype=float)
        J = [np.zeros_like(x, dtype=float) for _ in range(4)] if jacobian else None
        for piece, m in zip(self.pieces, masks):
            if not m.any():
                continue
            sub = {"x": x[m], "y": y[m]}
            xb[m] = piece.map_x.evaluate(sub)
            yb[m] = piece.map_y.evaluate(sub)
            if jacobian:
                entries = (
                    piece.map_x.diff("x"), piece.map_x.diff("y"),
                    piece.map_y.diff("x"), piece.map_y.diff("y"),
                )
                for slot, expr in zip(J, entries):
                    slot[m] = np.broadcast_to(
                        np.atleast_1d(np.asarray(expr.evaluate(sub))), sub["x"].shape
                    )
        if jacobian:
            return xb, yb, valid, tuple(J)
        return xb, yb, valid, None


@dataclass(frozen=True)
class ProlongedPiece:
    """Symbolic jet prolongation of one transition piece up to a given order."""

    guards: tuple[Expression, ...]
    outputs: Mapping[str, Expression]  # canonical coordinate name -> expression

    def jacobian_entry(self, out: str, inp: str) -> Expression:
        return self.outputs[out].diff(inp)


class JetTransition:
    """Callable jet-level map assembled from prolonged pieces."""

    def __init__(self, tmap: TransitionMap, order: int):
        if order not in (0, 1, 2):
            raise ValueError("prolongation order must be 0, 1 or 2")
        self.tmap = tmap
        self.order = order
        self.pieces = tuple(_prolong_piece(p, order) for p in tmap.pieces)
        self._jac_cache: dict = {}

    def _piece_for(self, binding: Mapping[str, float]) -> int:
        for i, piece in enumerate(self.pieces):
            if all(float(g.evaluate(binding)) > 0.0 for g in piece.guards):
                return i
        raise TransitionDomainError(
            f"point outside every guard region of {self.tmap.from_chart}->{self.tmap.to_chart}"
        )

    def apply_binding(self, binding: Mapping[str, float]) -> dict:
        i = self._piece_for(binding)
        out = {"t": binding.get("t", 0.0)}
        for name, expr in self.pieces[i].outputs.items():
            out[name] = float(expr.evaluate(binding))
        return out

    def apply(self, point: JetPoint) -> JetPoint:
        if point.order < self.order:
            raise ValueError(f"jet point of order {point.order} below map order {self.order}")
        binding = point.binding()
        mapped = self.apply_binding(binding)
        return JetPoint.make(t=mapped["t"], **{k: v for k, v in mapped.items() if k != "t"})

    def jacobian(self, binding: Mapping[str, float], coords: Sequence[str]) -> np.ndarray:
        """Matrix d(out_k)/d(in_i) over the requested coordinates (t maps to t)."""
        i = self._piece_for(binding)
        key = (i, tuple(coords))
        if key not in self._jac_cache:
            piece = self.pieces[i]
            exprs = []
            for out in coords:
                row = []
                for inp in coords:
                    if out == "t" or inp == "t":
                        row.append(Expression.constant(1.0 if out == inp else 0.0))
                    else:
                        row.append(piece.outputs[out].diff(inp))
                exprs.append(row)
            self._jac_cache[key] = exprs
        exprs = self._jac_cache[key]
        n = len(coords)
        J = np.empty((n, n))
        for r in range(n):
            for c in range(n):
                J[r, c] = float(exprs[r][c].evaluate(binding))
        return J


def _prolong_piece(piece: TransitionPiece, order: int) -> ProlongedPiece:
    xd, yd = Expression.variable("xd"), Expression.variable("yd")
    outputs = {"x": piece.map_x, "y": piece.map_y}
    if order >= 1:
        outputs["xd"] = piece.map_x.diff("x") * xd + piece.map_x.diff("y") * yd
        outputs["yd"] = piece.map_y.diff("x") * xd + piece.map_y.diff("y") * yd
    if order >= 2:
        outputs["xdd"] = total_derivative(outputs["xd"])
        outputs["ydd"] = total_derivative(outputs["yd"])
    return ProlongedPiece(piece.guards, outputs)


def prolong_transition(tmap: TransitionMap, order: int) -> JetTransition:
    """Jet-level map: velocities by the Jacobian, accelerations by its total derivative."""
    return JetTransition(tmap, order)


@dataclass
class Atlas:
    """Charts plus directed transitions for every overlapping pair."""

    charts: dict[str, Chart]
    transitions: dict[tuple[str, str], TransitionMap] = field(default_factory=dict)
    orientable: bool = True
    compact: bool = False

    def chart(self, name: str) -> Chart:
        try:
            return self.charts[name]
        except KeyError:
            raise ConfigError(f"unknown chart {name!r}") from None

    def transition(self, from_chart: str, to_chart: str) -> Optional[TransitionMap]:
        return self.transitions.get((from_chart, to_chart))

    def validate(self, seed: int = 42, n: int = 20, tol: float = 1e-9):
        """Sampled invariants: guard exclusivity, nonvanishing Jacobians, round trips."""
        for (a, b), tmap in sorted(self.transitions.items()):
            reverse = self.transition(b, a)
            for box_i, box in enumerate(tmap.overlap_boxes):
                rng = rng_for(seed, "atlas-validate", a, b, str(box_i))
                pts = uniform_box(rng, box, n)
                for x, y in pts:
                    binding = {"x": x, "y": y}
                    active = [p for p in tmap.pieces if p.active(binding)]
                    if len(active) != 1:
                        raise ConfigError(
                            f"transition {a}->{b}: {len(active)} guards active at ({x:.4f}, {y:.4f})"
                        )
                    piece = active[0]
                    det = float(
                        (
                            piece.map_x.diff("x") * piece.map_y.diff("y")
                            - piece.map_x.diff("y") * piece.map_y.diff("x")
                        ).evaluate(binding)
                    )
                    if abs(det) < 1e-12:
                        raise ConfigError(
                            f"transition {a}->{b}: vanishing Jacobian at ({x:.4f}, {y:.4f})"
                        )
                    if reverse is not None:
                        xb, yb = tmap.apply_base(x, y)
                        xr, yr = reverse.apply_base(xb, yb)
                        if max(abs(xr - x), abs(yr - y)) > tol:
                            raise ConfigError(
                                f"transitions {a}->{b}->{a} do not compose to identity at "
                                f"({x:.4f}, {y:.4f}): got ({xr:.4f}, {yr:.4f})"
                            )


def _form_order(coords: Sequence[str]) -> int:
    return 1 if ("xd" in coords or "yd" in coords) else 0


def pullback_form_at(
    jet_map: JetTransition, form: DifferentialForm, binding: Mapping[str, float]
) -> dict:
    """Numeric coefficients of the pulled-back form at one point of the source chart."""
    coords = form.coords
    mapped = jet_map.apply_binding(binding)
    J = jet_map.jacobian(binding, coords)
    idx = {c: i for i, c in enumerate(coords)}
    out = {}
    if form.degree == 1:
        vals = {key: form.eval_coefficient(key, mapped) for key in form.coeffs}
        for i, ci in enumerate(coords):
            total = 0.0
            for (k,), v in vals.items():
                total += v * J[idx[k], i]
            out[(ci,)] = total
        return out
    vals = {key: form.eval_coefficient(key, mapped) for key in form.coeffs}
    for i in range(len(coords)):
        for j in range(i + 1, len(coords)):
            total = 0.0
            for (k, l), v in vals.items():
                ki, li = idx[k], idx[l]
                total += v * (J[ki, i] * J[li, j] - J[ki, j] * J[li, i])
            out[(coords[i], coords[j])] = total
    return out


def pullback_source_at(
    jet_map: JetTransition, sf: SourceForm, binding: Mapping[str, float]
) -> tuple[float, float]:
    """Covector transformation of source components through the order-2 prolongation."""
    if jet_map.order != 2:
        raise ValueError("source pullback needs an order-2 prolongation")
    mapped = jet_map.apply_binding(binding)
    J = jet_map.jacobian(binding, ("x", "y"))
    ex = float(sf.eps_x.evaluate(mapped))
    ey = float(sf.eps_y.evaluate(mapped))
    return ex * J[0, 0] + ey * J[1, 0], ex * J[0, 1] + ey * J[1, 1]


@dataclass(frozen=True)
class OverlapMismatch:
    from_chart: str
    to_chart: str
    box_index: int
    samples: int
    max_mismatch: float
    worst_point: Optional[dict] = None

    def to_dict(self) -> dict:
        return {
            "from": self.from_chart,
            "to": self.to_chart,
            "box": self.box_index,
            "samples": self.samples,
            "max_mismatch": self.max_mismatch,
            "worst_point": self.worst_point,
        }


@dataclass(frozen=True)
class GlobalityReport:
    rows: tuple[OverlapMismatch, ...]

    @property
    def max_mismatch(self) -> float:
        return max((r.max_mismatch for r in self.rows), default=0.0)

    def to_dict(self) -> dict:
        return {"max_mismatch": self.max_mismatch, "overlaps": [r.to_dict() for r in self.rows]}


Family = Mapping[str, Union[SourceForm, DifferentialForm]]


def check_global(
    atlas: Atlas,
    family: Family,
    n: int = 20,
    seed: int = 42,
    velocity_range=(-2.0, 2.0),
) -> GlobalityReport:
    """Compare each locally-defined member with the pullback of its neighbours.

    For every directed transition between charts carrying family members, the
    target object is pulled back to the source chart at seeded overlap samples
    and compared coefficient by coefficient (source forms transform through
    the order-2 prolongation as covectors).
    """
    rows = []
    for (a, b), tmap in sorted(atlas.transitions.items()):
        if a not in family or b not in family:
            continue
        if not tmap.overlap_boxes:
            raise ConfigError(f"transition {a}->{b} lacks overlap sample boxes")
        local = family[a]
        remote = family[b]
        if isinstance(local, SourceForm):
            order = 2
        else:
            order = _form_order(local.coords)
        jet_map = prolong_transition(tmap, order)
        for box_i, box in enumerate(tmap.overlap_boxes):
            rng = rng_for(seed, "check-global", a, b, str(box_i))
            pts = uniform_box(rng, box, n)
            worst, worst_pt = 0.0, None
            for x, y in pts:
                binding = {
                    "t": float(rng.uniform(-1.0, 1.0)),
                    "x": float(x),
                    "y": float(y),
                }
                for name in ("xd", "yd", "xdd", "ydd")[: 2 * order]:
                    binding[name] = float(rng.uniform(*velocity_range))
                if isinstance(local, SourceForm):
                    px, py = pullback_source_at(jet_map, remote, binding)
                    lx = float(local.eps_x.evaluate(binding))
                    ly = float(local.eps_y.evaluate(binding))
                    mism = max(abs(px - lx), abs(py - ly))
                else:
                    pulled = pullback_form_at(jet_map, remote, binding)
                    mism = 0.0
                    keys = set(pulled) | set(local.coeffs)
                    for key in keys:
                        lv = local.eval_coefficient(key, binding)
                        pv = pulled.get(key, 0.0)
                        mism = max(mism, abs(pv - lv))
                if mism > worst:
                    worst, worst_pt = mism, dict(binding)
            rows.append(OverlapMismatch(a, b, box_i, len(pts), worst, worst_pt))
    return GlobalityReport(tuple(rows))
