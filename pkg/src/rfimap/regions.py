"""Region geometry on the (rx power, C/N0) plane and per-point classification.

Layout, with the optimised threshold ellipse as the nominal region:

* Unrealistic  rx power below the ellipse's leftmost point (the noise floor)
* Nominal      inside the ellipse (boundary included)
* SignalLoss   no C/N0; caused by blockage inside the nominal power band,
               otherwise by jamming
* Spoofing     right of the nominal band and strictly above the spoof
               boundary: the slope ``jam_slope`` line through the ellipse's
               top-right tangent point, floored at ``cn0_floor``
* Blocked      inside the nominal power band, below the ellipse
* Jamming      everything else, including the strip between the jamming
               path and the blocked region

The rules are applied in that order, so every finite point gets exactly one
label.
"""

from __future__ import annotations

import math
from collections import Counter
from dataclasses import dataclass, field
from enum import Enum
from typing import Iterable

import numpy as np

from .calibration import MetricPoint
from .errors import EllipseExcludesMean
from .nominal import NominalModel, SiteOffset, cell_centers


class Label(str, Enum):
    NOMINAL = "Nominal"
    JAMMING = "Jamming"
    BLOCKED = "Blocked"
    SPOOFING = "Spoofing"
    UNREALISTIC = "Unrealistic"
    SIGNAL_LOSS = "SignalLoss"

    def __str__(self):
        return self.value


_LABELS = list(Label)
_CODE = {lab: i for i, lab in enumerate(_LABELS)}
# Points within this many dB of the spoof boundary count as on it (Jamming).
BOUNDARY_TOL = 1e-9


def _wrap_rotation(theta: float) -> float:
    return (theta + math.pi / 2) % math.pi - math.pi / 2


@dataclass(frozen=True)
class ThresholdEllipse:
    center: tuple
    semi_axes: tuple
    rotation: float = 0.0

    def __post_init__(self):
        object.__setattr__(self, "center", tuple(float(c) for c in self.center))
        object.__setattr__(self, "semi_axes", tuple(float(s) for s in self.semi_axes))
        if not all(s > 0 and math.isfinite(s) for s in self.semi_axes):
            raise ValueError("semi-axes must be positive")
        object.__setattr__(self, "rotation", _wrap_rotation(float(self.rotation)))

    @property
    def area(self) -> float:
        return math.pi * self.semi_axes[0] * self.semi_axes[1]

    def _rot(self) -> np.ndarray:
        c, s = math.cos(self.rotation), math.sin(self.rotation)
        return np.array([[c, -s], [s, c]])

    def shape_matrix(self) -> np.ndarray:
        """``A`` with ``d^T A d <= 1`` for points inside."""
        r = self._rot()
        a, b = self.semi_axes
        return r @ np.diag([1 / a ** 2, 1 / b ** 2]) @ r.T

    def quad_form(self, x, y):
        A = self.shape_matrix()
        dx = np.asarray(x, dtype=float) - self.center[0]
        dy = np.asarray(y, dtype=float) - self.center[1]
        return A[0, 0] * dx * dx + 2 * A[0, 1] * dx * dy + A[1, 1] * dy * dy

    def contains(self, x, y):
        return self.quad_form(x, y) <= 1.0

    def support_point(self, direction) -> tuple:
        """Boundary point maximising ``direction . p``."""
        d = np.asarray(direction, dtype=float)
        r = self._rot()
        m = r @ np.diag(self.semi_axes)
        s = m @ m.T
        p = np.asarray(self.center) + s @ d / math.sqrt(float(d @ s @ d))
        return (float(p[0]), float(p[1]))

    def x_halfwidth(self) -> float:
        a, b = self.semi_axes
        c, s = math.cos(self.rotation), math.sin(self.rotation)
        return math.sqrt(a * a * c * c + b * b * s * s)

    def lower_edge(self, x):
        """C/N0 of the ellipse's lower boundary at rx power ``x`` (nan outside)."""
        A = self.shape_matrix()
        dx = np.asarray(x, dtype=float) - self.center[0]
        disc = (A[0, 1] * dx) ** 2 - A[1, 1] * (A[0, 0] * dx * dx - 1.0)
        with np.errstate(invalid="ignore"):
            root = np.sqrt(np.where(disc >= 0, disc, np.nan))
        return self.center[1] + (-A[0, 1] * dx - root) / A[1, 1]

    def boundary_distance(self, x, y):
        """Euclidean distance from each point to the ellipse curve."""
        x = np.atleast_1d(np.asarray(x, dtype=float))
        y = np.atleast_1d(np.asarray(y, dtype=float))
        c, s = math.cos(self.rotation), math.sin(self.rotation)
        dx, dy = x - self.center[0], y - self.center[1]
        u = c * dx + s * dy
        v = -s * dx + c * dy
        a, b = self.semi_axes
        ts = np.linspace(-math.pi, math.pi, 128, endpoint=False)
        cu, sv = a * np.cos(ts), b * np.sin(ts)
        out = np.empty_like(u)
        for start in range(0, u.size, 65536):
            sl = slice(start, start + 65536)
            d2 = (cu[None, :] - u[sl, None]) ** 2 + (sv[None, :] - v[sl, None]) ** 2
            t = ts[np.argmin(d2, axis=1)]
            for _ in range(8):
                ct, st = np.cos(t), np.sin(t)
                g = (a * ct - u[sl]) * (-a * st) + (b * st - v[sl]) * (b * ct)
                gp = (a * st) ** 2 - (a * ct - u[sl]) * a * ct + (b * ct) ** 2 - (b * st - v[sl]) * b * st
                step = np.where(np.abs(gp) > 1e-12, g / np.where(gp == 0, 1.0, gp), 0.0)
                t = t - np.clip(step, -0.5, 0.5)
            out[sl] = np.hypot(a * np.cos(t) - u[sl], b * np.sin(t) - v[sl])
        return out

    def shifted(self, offset: SiteOffset) -> "ThresholdEllipse":
        return ThresholdEllipse(
            (self.center[0] + offset.d_rx_power, self.center[1] + offset.d_cn0),
            self.semi_axes,
            self.rotation,
        )

    def to_dict(self) -> dict:
        return {"center": list(self.center), "semi_axes": list(self.semi_axes), "rotation": self.rotation}

    @classmethod
    def from_dict(cls, d: dict) -> "ThresholdEllipse":
        return cls(tuple(d["center"]), tuple(d["semi_axes"]), float(d["rotation"]))


def ellipse_area(ellipse: ThresholdEllipse) -> float:
    return ellipse.area


@dataclass(frozen=True)
class RegionConfig:
    cn0_floor: float = 27.0
    jam_slope: float = -1.0
    # Upper rx bound of the blocked band: "anchor" (x of the top-right tangent
    # point) or "ellipse" (rightmost point of the ellipse).
    blocked_upper: str = "anchor"
    quantize: bool = False

    def __post_init__(self):
        if not self.jam_slope < 0:
            raise ValueError("jam_slope must be negative")
        if self.blocked_upper not in ("anchor", "ellipse"):
            raise ValueError("blocked_upper must be 'anchor' or 'ellipse'")


@dataclass(frozen=True)
class RegionMap:
    ellipse: ThresholdEllipse
    cn0_floor: float
    jam_slope: float
    anchor: tuple
    floor_rx: float
    noise_floor: float
    band_upper: float
    nominal_max_rx: float
    blocked_upper: str = "anchor"
    quantize: bool = False
    model_hash: str | None = None

    @property
    def config(self) -> RegionConfig:
        return RegionConfig(self.cn0_floor, self.jam_slope, self.blocked_upper, self.quantize)

    def spoof_boundary(self, x):
        """C/N0 of the jamming/spoofing boundary at rx power ``x``."""
        line = self.anchor[1] + self.jam_slope * (np.asarray(x, dtype=float) - self.anchor[0])
        return np.maximum(line, self.cn0_floor)

    def shifted(self, offset: SiteOffset, model_hash: str | None = None) -> "RegionMap":
        """Same geometry moved by a site offset.  The C/N0 floor is physical and stays put."""
        return _build(self.ellipse.shifted(offset), self.config, model_hash or self.model_hash)

    def to_dict(self) -> dict:
        return {
            "ellipse": self.ellipse.to_dict(),
            "cn0_floor": self.cn0_floor,
            "jam_slope": self.jam_slope,
            "blocked_upper": self.blocked_upper,
            "quantize": self.quantize,
            "anchor": list(self.anchor),
            "floor_rx": self.floor_rx,
            "noise_floor": self.noise_floor,
            "band_upper": self.band_upper,
            "nominal_max_rx": self.nominal_max_rx,
            "model_hash": self.model_hash,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "RegionMap":
        cfg = RegionConfig(d["cn0_floor"], d["jam_slope"], d.get("blocked_upper", "anchor"),
                           bool(d.get("quantize", False)))
        return _build(ThresholdEllipse.from_dict(d["ellipse"]), cfg, d.get("model_hash"))


def _build(ellipse: ThresholdEllipse, cfg: RegionConfig, model_hash: str | None) -> RegionMap:
    anchor = ellipse.support_point((1.0, 1.0))
    floor_rx = anchor[0] + (cfg.cn0_floor - anchor[1]) / cfg.jam_slope
    half = ellipse.x_halfwidth()
    noise_floor = ellipse.center[0] - half
    nominal_max = ellipse.center[0] + half
    band_upper = anchor[0] if cfg.blocked_upper == "anchor" else nominal_max
    return RegionMap(ellipse, cfg.cn0_floor, cfg.jam_slope, anchor, floor_rx, noise_floor,
                     band_upper, nominal_max, cfg.blocked_upper, cfg.quantize, model_hash)


def build_regions(model: NominalModel, ellipse: ThresholdEllipse, cfg: RegionConfig | None = None) -> RegionMap:
    cfg = cfg or RegionConfig()
    if not bool(ellipse.contains(*model.mean)):
        raise EllipseExcludesMean(f"ellipse centred at {ellipse.center} does not contain model mean {model.mean}")
    return _build(ellipse, cfg, model.content_hash())


# -- classification ---------------------------------------------------------------

@dataclass(frozen=True)
class ClassifiedPoint:
    point: MetricPoint
    label: Label
    margin: float
    cause: Label | None = None  # Blocked or Jamming when label is SignalLoss

    @property
    def resolved(self) -> Label:
        """The label with signal loss attributed to its cause."""
        return self.cause if self.label is Label.SIGNAL_LOSS else self.label

    @property
    def label_text(self) -> str:
        if self.label is Label.SIGNAL_LOSS:
            return f"{self.label.value}/{self.cause.value}"
        return self.label.value


def _segment_distance(px, py, ax, ay, bx, by):
    vx, vy = bx - ax, by - ay
    L2 = vx * vx + vy * vy
    t = np.clip(((px - ax) * vx + (py - ay) * vy) / L2, 0.0, 1.0) if L2 > 0 else 0.0
    return np.hypot(px - (ax + t * vx), py - (ay + t * vy))


def classify_arrays(regions: RegionMap, x, y, with_margin: bool = True):
    """Vectorised classifier.  ``y`` is NaN where C/N0 is absent.

    Returns ``(labels, causes, margins)`` as integer code arrays (indices into
    ``list(Label)``, cause ``-1`` when not applicable) and a float array, or
    ``None`` for margins when ``with_margin`` is false.
    """
    x = np.atleast_1d(np.asarray(x, dtype=float))
    y = np.atleast_1d(np.asarray(y, dtype=float))
    if regions.quantize:
        x, y = cell_centers(x, y)
    n = x.size
    labels = np.full(n, _CODE[Label.JAMMING], dtype=np.int8)
    causes = np.full(n, -1, dtype=np.int8)
    lost = np.isnan(y)
    undecided = np.ones(n, dtype=bool)

    def assign(mask, label):
        nonlocal undecided
        m = mask & undecided
        labels[m] = _CODE[label]
        undecided &= ~m
        return m

    in_band = (x >= regions.noise_floor) & (x <= regions.band_upper)
    assign(x < regions.noise_floor, Label.UNREALISTIC)
    with np.errstate(invalid="ignore"):
        assign(~lost & regions.ellipse.contains(x, np.where(lost, 0.0, y)), Label.NOMINAL)
        m = assign(lost, Label.SIGNAL_LOSS)
        causes[m & in_band] = _CODE[Label.BLOCKED]
        causes[m & ~in_band] = _CODE[Label.JAMMING]
        assign((y > regions.spoof_boundary(x) + BOUNDARY_TOL) & (x > regions.band_upper), Label.SPOOFING)
        assign(in_band & (y < regions.ellipse.lower_edge(x)), Label.BLOCKED)
    # Remaining points keep the Jamming default.

    margins = None
    if with_margin:
        d_lines = np.minimum(np.abs(x - regions.noise_floor), np.abs(x - regions.band_upper))
        margins = d_lines.copy()
        ok = ~lost
        if np.any(ok):
            px, py = x[ok], y[ok]
            ax, ay = regions.anchor
            d_seg = _segment_distance(px, py, ax, ay, regions.floor_rx, regions.cn0_floor)
            d_ray = np.where(px >= regions.floor_rx, np.abs(py - regions.cn0_floor),
                             np.hypot(px - regions.floor_rx, py - regions.cn0_floor))
            d_ell = regions.ellipse.boundary_distance(px, py)
            margins[ok] = np.minimum.reduce([d_lines[ok], d_seg, d_ray, d_ell])
    return labels, causes, margins


def _point_arrays(points):
    x = np.array([p.rx_power for p in points], dtype=float)
    y = np.array([np.nan if p.cn0 is None else p.cn0 for p in points], dtype=float)
    return x, y


def classify(point: MetricPoint, regions: RegionMap) -> ClassifiedPoint:
    return classify_stream([point], regions).items[0]


@dataclass
class StreamClassification:
    items: list
    counts: dict = field(default_factory=dict)

    def __iter__(self):
        return iter(self.items)

    def __len__(self):
        return len(self.items)


def classify_stream(points: Iterable[MetricPoint], regions: RegionMap) -> StreamClassification:
    pts = list(points)
    counts = {lab: 0 for lab in Label}
    if not pts:
        return StreamClassification([], counts)
    x, y = _point_arrays(pts)
    labels, causes, margins = classify_arrays(regions, x, y)
    items = []
    for p, lc, cc, mg in zip(pts, labels, causes, margins):
        items.append(ClassifiedPoint(p, _LABELS[lc], float(mg), _LABELS[cc] if cc >= 0 else None))
    counts.update(Counter(it.label for it in items))
    return StreamClassification(items, counts)
