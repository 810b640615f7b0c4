"""Detection-threshold falsification and optimisation.

The false-positive probability of a candidate ellipse is the nominal mass
outside it.  It is estimated by importance sampling: rollouts come from a
widened Gaussian ``q`` (same mean, covariance x ``proposal_scale**2``) and
are weighted by ``p/q``.  Nelder-Mead then searches for the smallest ellipse
whose estimate meets the target rate, with a soft penalty on either side of
the target so the search does not over-shoot into needlessly large regions.

The simplex moves the centre, the axis ratio and the rotation.  For each such
shape the overall size is profiled out: the semi-axes are scaled to the
tightest ellipse whose estimate stays at or below the target, which follows
exactly from the sorted Mahalanobis radii of the rollouts.  Searching size
and shape jointly stalls, because any shape step knocks the estimate off the
target and into one of the steep penalties.
"""

from __future__ import annotations

import logging
import math
from dataclasses import asdict, dataclass, field

import numpy as np
from scipy.optimize import minimize

from .errors import DegenerateProposal, NoFeasiblePoint
from .nominal import NominalModel, cell_centers
from .regions import ThresholdEllipse, ellipse_area

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class FalsificationConfig:
    rollouts: int = 100_000
    proposal_scale: float = 3.0
    target_fpr: float = 1e-6
    seed: int = 0
    # Snap rollouts to grid-cell centres before the outside test.
    quantize: bool = True

    def __post_init__(self):
        if self.rollouts < 10_000:
            raise ValueError("rollouts must be >= 1e4")
        if not self.proposal_scale >= 1.0:
            raise ValueError("proposal_scale must be >= 1")
        if not 0.0 < self.target_fpr < 1.0:
            raise ValueError("target_fpr must lie in (0, 1)")


@dataclass(frozen=True)
class FprEstimate:
    p_hat: float
    std_err: float
    rollouts_used: int


@dataclass(frozen=True)
class SimplexConfig:
    max_iter: int = 500
    tol: float = 1e-3
    perturb: float = 0.1
    reflection: float = 1.0  # documented; scipy's fixed non-adaptive coefficients
    expansion: float = 2.0
    contraction: float = 0.5
    shrink: float = 0.5
    w_over: float = 1e6
    w_under: float = 1e2
    restarts: int = 2


@dataclass
class OptimizerReport:
    ellipse: ThresholdEllipse
    achieved_fpr: FprEstimate
    area: float
    iterations: int
    converged: bool
    seed: int = 0
    config: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        return {
            "ellipse": self.ellipse.to_dict(),
            "achieved_fpr": asdict(self.achieved_fpr),
            "area": self.area,
            "iterations": self.iterations,
            "converged": self.converged,
            "seed": self.seed,
            "config": self.config,
        }


class Rollouts:
    """Weighted rollouts from the proposal, drawn once and reused.

    With quantisation on, samples sharing a grid cell are merged; ``wsum`` and
    ``w2sum`` keep the per-cell sums of weights and squared weights so the
    estimator and its standard error are unchanged.
    """

    def __init__(self, model: NominalModel, cfg: FalsificationConfig):
        s = float(cfg.proposal_scale)
        if not math.isfinite(s) or s < 1.0:
            raise DegenerateProposal("proposal scale must be finite and >= 1")
        try:
            chol = np.linalg.cholesky(model.cov_array * s * s)
        except np.linalg.LinAlgError:
            raise DegenerateProposal("proposal covariance is not positive definite") from None
        rng = np.random.default_rng(cfg.seed)
        z = rng.standard_normal((cfg.rollouts, 2))
        tau = model.mean_array + z @ chol.T
        # p/q for two same-mean Gaussians in 2-D: s^2 exp(-|z|^2 (s^2 - 1) / 2).
        if s == 1.0:
            w = np.ones(cfg.rollouts)
        else:
            w = s * s * np.exp(-0.5 * np.einsum("ij,ij->i", z, z) * (s * s - 1.0))
        self.m = cfg.rollouts
        x, y = tau[:, 0], tau[:, 1]
        if cfg.quantize:
            x, y = cell_centers(x, y)
            keys, inv = np.unique(np.stack([x, y], axis=1), axis=0, return_inverse=True)
            inv = inv.ravel()
            self.x, self.y = keys[:, 0], keys[:, 1]
            self.wsum = np.bincount(inv, weights=w, minlength=len(keys))
            self.w2sum = np.bincount(inv, weights=w * w, minlength=len(keys))
        else:
            self.x, self.y = x, y
            self.wsum = w
            self.w2sum = w * w

    def estimate(self, ellipse: ThresholdEllipse) -> FprEstimate:
        outside = ~ellipse.contains(self.x, self.y)
        s1 = float(np.sum(self.wsum[outside]))
        s2 = float(np.sum(self.w2sum[outside]))
        m = self.m
        p = s1 / m
        var = max((s2 - m * p * p) / (m - 1), 0.0)
        return FprEstimate(p, math.sqrt(var / m), m)


    def tight_scale(self, ellipse: ThresholdEllipse, target: float) -> float:
        """Smallest factor on ``ellipse``'s semi-axes keeping the estimate <= ``target``."""
        r2 = ellipse.quad_form(self.x, self.y)
        n = r2.size
        top = min(n, 2048)
        while True:
            # sort only the outermost rollouts, widening until they carry the target mass
            cand = np.argpartition(-r2, top - 1)[:top] if top < n else np.arange(n)
            order = cand[np.argsort(-r2[cand], kind="stable")]
            cum = np.cumsum(self.wsum[order]) / self.m
            k = int(np.searchsorted(cum, target, side="right"))
            if k < top:
                # rollout order[k] is the outermost one that has to stay inside
                return math.sqrt(float(r2[order[k]])) * (1.0 + 1e-9)
            if top == n:
                return 1e-6
            top = min(n, top * 4)


def estimate_fpr(model: NominalModel, ellipse: ThresholdEllipse, cfg: FalsificationConfig) -> FprEstimate:
    """Importance-sampling estimate of the nominal mass outside ``ellipse``."""
    return Rollouts(model, cfg).estimate(ellipse)


def initial_ellipse(model: NominalModel, target: float) -> ThresholdEllipse:
    """Mahalanobis level set holding ``1 - target`` of a continuous Gaussian."""
    r0 = math.sqrt(-2.0 * math.log(target))
    vals, vecs = np.linalg.eigh(model.cov_array)
    major = vecs[:, 1]
    return ThresholdEllipse(model.mean, (r0 * math.sqrt(vals[1]), r0 * math.sqrt(vals[0])),
                            math.atan2(major[1], major[0]))


def optimize_threshold(model: NominalModel, cfg: FalsificationConfig,
                       nm_cfg: SimplexConfig | None = None) -> OptimizerReport:
    """Smallest-area ellipse whose estimated false-positive rate meets the target."""
    nm_cfg = nm_cfg or SimplexConfig()
    target = cfg.target_fpr
    rollouts = Rollouts(model, cfg)
    e0 = initial_ellipse(model, target)
    a0, b0 = e0.semi_axes
    area0 = e0.area
    sx, sy = math.sqrt(model.cov_array[0, 0]), math.sqrt(model.cov_array[1, 1])
    mx, my = model.mean

    # u = [cx / sigma_x, cy / sigma_y, log axis ratio, rotation offset]
    def unpack(u):
        q = math.exp(u[2])
        shape = ThresholdEllipse((mx + sx * u[0], my + sy * u[1]), (a0 * q, b0 / q), e0.rotation + u[3])
        k = rollouts.tight_scale(shape, target)
        return ThresholdEllipse(shape.center, (shape.semi_axes[0] * k, shape.semi_axes[1] * k), shape.rotation)

    best_feasible = [math.inf, None, None]

    def objective(u):
        if abs(u[2]) > 5.0:
            return 1e300
        ell = unpack(u)
        est = rollouts.estimate(ell)
        area = ell.area
        over = max(0.0, est.p_hat - target) / target
        under = max(0.0, target - est.p_hat) / target
        if est.p_hat <= target and area < best_feasible[0]:
            best_feasible[:] = [area, np.array(u), est]
        return area + area0 * (nm_cfg.w_over * over + nm_cfg.w_under * under)

    x0 = np.zeros(4)
    total_iter = 0
    converged = False
    for attempt in range(nm_cfg.restarts + 1):
        simplex = np.vstack([x0] + [x0 + nm_cfg.perturb * np.eye(4)[i] for i in range(4)])
        res = minimize(
            objective, x0, method="Nelder-Mead",
            options={"initial_simplex": simplex, "xatol": nm_cfg.tol, "fatol": math.inf,
                     "maxiter": nm_cfg.max_iter, "adaptive": False},
        )
        total_iter += int(res.nit)
        converged = bool(res.success)
        moved = float(np.max(np.abs(res.x - x0)))
        x0 = np.array(res.x)
        log.debug("simplex run %d: J=%.6g after %d iterations", attempt, res.fun, res.nit)
        if moved <= nm_cfg.tol:
            break

    ell = unpack(x0)
    est = rollouts.estimate(ell)
    if est.p_hat > target:
        if best_feasible[1] is None:
            raise NoFeasiblePoint(f"no evaluated ellipse reached p_hat <= {target:g}")
        ell = unpack(best_feasible[1])
        est = best_feasible[2]
    return OptimizerReport(
        ellipse=ell,
        achieved_fpr=est,
        area=ellipse_area(ell),
        iterations=total_iter,
        converged=converged,
        seed=cfg.seed,
        config={"falsification": asdict(cfg), "simplex": asdict(nm_cfg)},
    )
