"""Fit growth weights against 2-D silhouette statistics.

The objective grows a tree with candidate weights, meshes it, renders
binary silhouettes from the default camera rig and compares summary shape
statistics against the target statistics extracted from reference masks.
A derivative-free (1+1) evolution strategy with 1/5th-success-rule step
adaptation drives the search: the growth process is discrete, so the loss
is noisy and non-differentiable.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .attractors import sample_attractors
from .errors import EmptyForegroundError, ValidationError
from .formats import write_csv
from .growth import grow
from .meshing import build_mesh, compute_sizes
from .model import GrowthParams, SizingParams
from .render import default_camera_rig, render_silhouette, scene_bounds
from .rng import stream_seed, substream

PROFILE_BINS = 16

# sigma *= on acceptance / rejection; zero log-drift at a 1/5 success rate.
# The floor (relative to the initial step) keeps the search alive on the
# plateaus the discrete growth process produces.
_STEP_UP = math.exp(1.0 / 3.0)
_STEP_DOWN = math.exp(-1.0 / 12.0)
_STEP_FLOOR_FRACTION = 0.1
_STD_FLOOR = 1e-3


@dataclass
class SilhouetteStats:
    """Shape summary of a binary silhouette, bbox-relative.

    aspect_ratio: bbox height / width. fill_ratio: foreground fraction of
    the bbox. vertical_profile: per-bin row fill fractions, 16 bins from the
    bbox top down. trunk_fraction: share of foreground pixels in the bottom
    quarter of the bbox.
    """

    aspect_ratio: float
    fill_ratio: float
    vertical_profile: np.ndarray
    trunk_fraction: float

    def as_vector(self) -> np.ndarray:
        return np.concatenate(
            [[self.aspect_ratio, self.fill_ratio], self.vertical_profile, [self.trunk_fraction]]
        )


def stats_from_mask(mask: np.ndarray) -> SilhouetteStats:
    """Compute silhouette statistics from a boolean (or >0) foreground mask."""
    fg = np.asarray(mask) != 0
    if fg.ndim != 2 or fg.size == 0:
        raise ValidationError("mask must be a non-empty 2-D image")
    rows = np.flatnonzero(fg.any(axis=1))
    cols = np.flatnonzero(fg.any(axis=0))
    if len(rows) == 0:
        raise EmptyForegroundError("mask has no foreground pixels")
    r0, r1 = int(rows[0]), int(rows[-1])
    c0, c1 = int(cols[0]), int(cols[-1])
    box = fg[r0 : r1 + 1, c0 : c1 + 1]
    box_h, box_w = box.shape
    total = int(box.sum())

    profile = np.zeros(PROFILE_BINS)
    edges = [box_h * k // PROFILE_BINS for k in range(PROFILE_BINS + 1)]
    for k in range(PROFILE_BINS):
        lo, hi = edges[k], edges[k + 1]
        if hi > lo:
            profile[k] = box[lo:hi].sum() / ((hi - lo) * box_w)

    bottom_start = int(0.75 * box_h)
    trunk = box[bottom_start:].sum() / total
    return SilhouetteStats(
        aspect_ratio=box_h / box_w,
        fill_ratio=total / (box_h * box_w),
        vertical_profile=profile,
        trunk_fraction=float(trunk),
    )


def stats_matrix(stats: list[SilhouetteStats]) -> np.ndarray:
    return np.stack([s.as_vector() for s in stats], axis=0)


def silhouette_stats_for_params(
    params: GrowthParams,
    sizing: SizingParams,
    seed: int,
    views: int = 4,
    resolution: int = 96,
    distance_range: tuple[float, float] = (2.5, 4.0),
    fov_deg: float = 50.0,
) -> list[SilhouetteStats]:
    """Grow, size, mesh and render; one SilhouetteStats per rig view.

    Attractors and cameras come from named substreams of ``seed``, so the
    result is a pure function of (params, sizing, seed, render settings).
    """
    fld = sample_attractors(params.R, params.n_attractors, stream_seed(seed, "attractors"))
    skeleton, _ = grow(fld, params)
    sized = compute_sizes(skeleton, sizing)
    mesh = build_mesh(sized, sizing)
    center, radius = scene_bounds(skeleton.positions())
    cams = default_camera_rig(
        center,
        radius,
        n_views=views,
        distance_range=distance_range,
        seed=stream_seed(seed, "cameras"),
        width=resolution,
        height=resolution,
        fov_deg=fov_deg,
    )
    return [stats_from_mask(render_silhouette(mesh.vertices, mesh.faces, cam)) for cam in cams]


def loss(
    theta,
    targets: list[SilhouetteStats],
    base_params: GrowthParams,
    sizing: SizingParams,
    seed: int,
    **render_kwargs,
) -> float:
    """Mean squared z-normalized deviation of the rendered mean statistics
    vector from the target mean; 0 exactly when targets are the candidate's
    own renders under the same seed."""
    if not targets:
        raise ValidationError("need at least one target statistics entry")
    rendered = silhouette_stats_for_params(
        base_params.with_theta(theta), sizing, seed, **render_kwargs
    )
    t = stats_matrix(targets)
    t_mean = t.mean(axis=0)
    t_std = np.maximum(t.std(axis=0), _STD_FLOOR)
    r_mean = stats_matrix(rendered).mean(axis=0)
    zdev = (r_mean - t_mean) / t_std
    return float(np.mean(zdev**2))


@dataclass(frozen=True)
class FitConfig:
    theta_init: tuple[float, float, float, float]
    theta_lo: tuple[float, float, float, float]
    theta_hi: tuple[float, float, float, float]
    step_sigma: float = 0.25
    budget: int = 200
    views: int = 4
    seed: int = 0

    def validate(self) -> None:
        for t in (self.theta_init, self.theta_lo, self.theta_hi):
            if len(t) != 4 or not all(math.isfinite(float(v)) for v in t):
                raise ValidationError(f"theta vectors must be 4 finite reals, got {t!r}")
        for lo, init, hi in zip(self.theta_lo, self.theta_init, self.theta_hi):
            if not lo <= init <= hi:
                raise ValidationError(
                    f"theta_init must lie within bounds: {lo} <= {init} <= {hi} fails"
                )
        if self.budget < 1:
            raise ValidationError(f"budget must be >= 1, got {self.budget}")
        if not self.step_sigma > 0:
            raise ValidationError(f"step_sigma must be positive, got {self.step_sigma}")
        if self.views < 1:
            raise ValidationError(f"views must be >= 1, got {self.views}")


@dataclass(frozen=True)
class FitTraceEntry:
    evaluation: int
    theta: tuple[float, float, float, float]
    loss: float
    accepted: bool
    best_loss: float
    step_sigma: float


@dataclass
class FitResult:
    theta_best: tuple[float, float, float, float]
    loss_best: float
    loss_initial: float
    trace: list[FitTraceEntry] = field(default_factory=list)

    def accepted_losses(self) -> list[float]:
        return [e.best_loss for e in self.trace]

    def write_trace_csv(self, path) -> None:
        write_csv(
            path,
            ["evaluation", "theta0", "theta1", "theta2", "theta3",
             "loss", "accepted", "best_loss", "step_sigma"],
            [
                (e.evaluation, *map(float, e.theta), float(e.loss),
                 int(e.accepted), float(e.best_loss), float(e.step_sigma))
                for e in self.trace
            ],
        )


def fit(
    cfg: FitConfig,
    targets: list[SilhouetteStats],
    base_params: GrowthParams,
    sizing: SizingParams,
    **render_kwargs,
) -> FitResult:
    """(1+1)-ES minimization of :func:`loss` within the configured bounds.

    Proposals are per-coordinate Gaussian perturbations clamped into
    [theta_lo, theta_hi]; a proposal is accepted when its loss does not
    exceed the incumbent's, so the accepted-loss sequence is non-increasing.
    The whole run is a pure function of (cfg, targets, growth inputs).
    """
    cfg.validate()
    lo = np.asarray(cfg.theta_lo, dtype=np.float64)
    hi = np.asarray(cfg.theta_hi, dtype=np.float64)
    rng = substream(cfg.seed, "fitting")

    def evaluate(theta: np.ndarray) -> float:
        return loss(tuple(theta), targets, base_params, sizing, cfg.seed,
                    views=cfg.views, **render_kwargs)

    theta = np.clip(np.asarray(cfg.theta_init, dtype=np.float64), lo, hi)
    current = evaluate(theta)
    sigma = float(cfg.step_sigma)
    sigma_cap = max(float(np.max(hi - lo)), cfg.step_sigma)
    sigma_floor = _STEP_FLOOR_FRACTION * float(cfg.step_sigma)
    result = FitResult(theta_best=tuple(theta), loss_best=current, loss_initial=current)
    result.trace.append(FitTraceEntry(1, tuple(theta), current, True, current, sigma))

    for evaluation in range(2, cfg.budget + 1):
        proposal = np.clip(theta + rng.normal(0.0, sigma, size=4), lo, hi)
        cand = evaluate(proposal)
        accepted = cand <= current
        if accepted:
            theta, current = proposal, cand
            sigma = min(sigma * _STEP_UP, sigma_cap)
        else:
            sigma = max(sigma * _STEP_DOWN, sigma_floor)
        result.trace.append(
            FitTraceEntry(evaluation, tuple(proposal), cand, accepted, current, sigma)
        )
    result.theta_best = tuple(theta)
    result.loss_best = current
    return result
