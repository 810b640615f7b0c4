"""Nominal C/N0-over-received-power model.

A bivariate Gaussian is fitted to interference-free metric points (rx power in
dBW/Hz, C/N0 in dB-Hz) and integrated onto the 1 dB x 1 dB-Hz observation
grid.  Cell ``(i, j)`` covers ``[i, i+1) x [j, j+1)``.
"""

from __future__ import annotations

import hashlib
import json
import math
from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np
from scipy.special import ndtr, owens_t

from .calibration import MetricPoint
from .errors import DegenerateCovariance, TooFewPoints

MIN_POINTS = 100
TRUNCATION_RADIUS = 8.0
MAX_OFFSET = 20.0


def cell_of(point) -> tuple:
    """Floor-quantise a point (MetricPoint or ``(rx, cn0)``) onto the unit grid."""
    if isinstance(point, MetricPoint):
        x, y = point.rx_power, point.cn0
    else:
        x, y = point
    return (math.floor(x), math.floor(y))


def cell_centers(x, y):
    """Vectorised cell-centre representative of each point."""
    return np.floor(x) + 0.5, np.floor(y) + 0.5


def bvn_cdf(h, k, rho):
    """Standard bivariate normal CDF P(X <= h, Y <= k) via Owen's T function."""
    h, k = np.broadcast_arrays(np.asarray(h, dtype=float), np.asarray(k, dtype=float))
    s = math.sqrt(1.0 - rho * rho)
    with np.errstate(divide="ignore", invalid="ignore"):
        ah = np.where(h != 0, (k - rho * h) / (h * s), np.copysign(np.inf, k - rho * h))
        ak = np.where(k != 0, (h - rho * k) / (k * s), np.copysign(np.inf, h - rho * k))
    hk = h * k
    corr = np.where((hk > 0) | ((hk == 0) & (h + k >= 0)), 0.0, 0.5)
    out = 0.5 * (ndtr(h) + ndtr(k)) - owens_t(h, ah) - owens_t(k, ak) - corr
    both_zero = (h == 0) & (k == 0)
    if np.any(both_zero):
        out = np.where(both_zero, 0.25 + math.asin(rho) / (2 * math.pi), out)
    return np.clip(out, 0.0, 1.0)


def discretize(mean, cov, radius: float = TRUNCATION_RADIUS) -> dict:
    """Gaussian mass per unit cell, truncated at a Mahalanobis radius and renormalised."""
    mean = np.asarray(mean, dtype=float)
    cov = np.asarray(cov, dtype=float)
    sx, sy = math.sqrt(cov[0, 0]), math.sqrt(cov[1, 1])
    rho = float(np.clip(cov[0, 1] / (sx * sy), -1.0, 1.0))
    i0 = math.floor(mean[0] - radius * sx)
    i1 = math.floor(mean[0] + radius * sx)
    j0 = math.floor(mean[1] - radius * sy)
    j1 = math.floor(mean[1] + radius * sy)
    xe = np.arange(i0, i1 + 2, dtype=float)
    ye = np.arange(j0, j1 + 2, dtype=float)
    H, K = np.meshgrid((xe - mean[0]) / sx, (ye - mean[1]) / sy, indexing="ij")
    F = bvn_cdf(H, K, rho)
    mass = F[1:, 1:] - F[:-1, 1:] - F[1:, :-1] + F[:-1, :-1]
    mass = np.clip(mass, 0.0, None)

    # Keep cells that touch the truncation ellipse: sample each cell on a 9x9 lattice.
    inv = np.linalg.inv(cov)
    sub = np.linspace(0.0, 1.0, 9)
    ci, cj = np.meshgrid(np.arange(i0, i1 + 1), np.arange(j0, j1 + 1), indexing="ij")
    px = ci[..., None, None] + sub[:, None] - mean[0]
    py = cj[..., None, None] + sub[None, :] - mean[1]
    d2 = inv[0, 0] * px * px + 2 * inv[0, 1] * px * py + inv[1, 1] * py * py
    near = d2.min(axis=(-2, -1)) <= radius * radius
    home = (ci == math.floor(mean[0])) & (cj == math.floor(mean[1]))
    keep = near | home
    total = float(mass[keep].sum())
    if total <= 0:
        raise DegenerateCovariance("grid has no mass")
    grid = {}
    for a, b in zip(*np.nonzero(keep)):
        grid[(int(ci[a, b]), int(cj[a, b]))] = float(mass[a, b] / total)
    return grid


@dataclass(frozen=True)
class SiteOffset:
    d_rx_power: float = 0.0
    d_cn0: float = 0.0

    def __post_init__(self):
        if not (math.isfinite(self.d_rx_power) and math.isfinite(self.d_cn0)):
            raise ValueError("site offset must be finite")
        if math.hypot(self.d_rx_power, self.d_cn0) > MAX_OFFSET:
            raise ValueError(f"site offset ({self.d_rx_power:.2f}, {self.d_cn0:.2f}) exceeds {MAX_OFFSET} dB")

    def __add__(self, other: "SiteOffset") -> "SiteOffset":
        return SiteOffset(self.d_rx_power + other.d_rx_power, self.d_cn0 + other.d_cn0)


@dataclass(frozen=True)
class NominalModel:
    mean: tuple
    covariance: tuple
    grid: dict = field(repr=False)
    elevation_bin: tuple | None = None
    sat_filter: tuple | None = None
    offset: SiteOffset = field(default_factory=SiteOffset)
    n_points: int = 0

    def __post_init__(self):
        object.__setattr__(self, "mean", tuple(float(m) for m in self.mean))
        cov = np.asarray(self.covariance, dtype=float)
        if cov.shape != (2, 2) or not np.allclose(cov, cov.T, rtol=0, atol=1e-12):
            raise DegenerateCovariance("covariance must be a symmetric 2x2 matrix")
        try:
            np.linalg.cholesky(cov)
        except np.linalg.LinAlgError:
            raise DegenerateCovariance("covariance is not positive definite") from None
        object.__setattr__(self, "covariance", tuple(tuple(float(v) for v in row) for row in cov))

    @property
    def mean_array(self) -> np.ndarray:
        return np.array(self.mean)

    @property
    def cov_array(self) -> np.ndarray:
        return np.array(self.covariance)

    def grid_mass(self, cells: Iterable[tuple]) -> float:
        return math.fsum(self.grid.get(c, 0.0) for c in cells)

    def to_dict(self) -> dict:
        return {
            "mean": list(self.mean),
            "covariance": [list(r) for r in self.covariance],
            "grid": [[i, j, m] for (i, j), m in sorted(self.grid.items())],
            "elevation_bin": list(self.elevation_bin) if self.elevation_bin else None,
            "sat_filter": list(self.sat_filter) if self.sat_filter else None,
            "site_offset": {"d_rx_power": self.offset.d_rx_power, "d_cn0": self.offset.d_cn0},
            "n_points": self.n_points,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "NominalModel":
        off = d.get("site_offset") or {}
        return cls(
            mean=tuple(d["mean"]),
            covariance=tuple(tuple(r) for r in d["covariance"]),
            grid={(int(i), int(j)): float(m) for i, j, m in d["grid"]},
            elevation_bin=tuple(d["elevation_bin"]) if d.get("elevation_bin") else None,
            sat_filter=tuple(d["sat_filter"]) if d.get("sat_filter") else None,
            offset=SiteOffset(off.get("d_rx_power", 0.0), off.get("d_cn0", 0.0)),
            n_points=int(d.get("n_points", 0)),
        )

    def content_hash(self) -> str:
        blob = json.dumps(self.to_dict(), sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(blob.encode()).hexdigest()


def _xy(points: Sequence[MetricPoint]) -> np.ndarray:
    return np.array([(p.rx_power, p.cn0) for p in points], dtype=float).reshape(-1, 2)


def select_points(points: Iterable[MetricPoint], elevation_bin=None, sat_filter=None) -> list:
    sats = set(sat_filter) if sat_filter else None
    out = []
    for p in points:
        if p.cn0 is None:
            continue
        if elevation_bin is not None and not (elevation_bin[0] <= p.elevation_deg <= elevation_bin[1]):
            continue
        if sats is not None and p.sat_id not in sats:
            continue
        out.append(p)
    return out


def fit_nominal(points: Iterable[MetricPoint], elevation_bin=None, sat_filter=None,
                min_points: int = MIN_POINTS) -> NominalModel:
    """Fit the Gaussian on raw points, then integrate it onto the grid.

    Points without C/N0 never enter the fit.  ``elevation_bin`` is an
    inclusive ``(lo, hi)`` range in degrees.
    """
    chosen = select_points(points, elevation_bin, sat_filter)
    if len(chosen) < min_points:
        raise TooFewPoints(f"{len(chosen)} points after filtering, need {min_points}")
    xy = _xy(chosen)
    for axis, name in ((0, "rx_power"), (1, "cn0")):
        if np.unique(np.floor(xy[:, axis])).size < 2:
            raise DegenerateCovariance(f"points occupy a single grid cell along {name}")
    mean = xy.mean(axis=0)
    cov = np.cov(xy, rowvar=False, ddof=1)
    if np.linalg.eigvalsh(cov).min() <= 1e-12 * max(np.trace(cov), 1e-300):
        raise DegenerateCovariance("sample covariance is singular")
    return NominalModel(
        mean=tuple(mean),
        covariance=cov,
        grid=discretize(mean, cov),
        elevation_bin=tuple(elevation_bin) if elevation_bin is not None else None,
        sat_filter=tuple(sorted(sat_filter)) if sat_filter else None,
        n_points=len(chosen),
    )


def recenter(model: NominalModel, local_points: Iterable[MetricPoint],
             min_points: int = MIN_POINTS) -> tuple:
    """Move the model to the mean of local nominal data.

    Returns ``(new_model, offset)`` where ``offset`` is this step's shift; the
    model keeps the cumulative offset from its training site.
    """
    local = [p for p in local_points if p.cn0 is not None]
    if len(local) < min_points:
        raise TooFewPoints(f"{len(local)} local points, need {min_points}")
    local_mean = _xy(local).mean(axis=0)
    delta = SiteOffset(float(local_mean[0] - model.mean[0]), float(local_mean[1] - model.mean[1]))
    if delta.d_rx_power == 0.0 and delta.d_cn0 == 0.0:
        return model, delta
    moved = NominalModel(
        mean=tuple(local_mean),
        covariance=model.covariance,
        grid=discretize(local_mean, model.cov_array),
        elevation_bin=model.elevation_bin,
        sat_filter=model.sat_filter,
        offset=model.offset + delta,
        n_points=model.n_points,
    )
    return moved, delta
