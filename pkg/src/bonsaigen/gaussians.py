"""Isotropic Gaussian splat cloud: initialization from surface points,
kernel evaluation and front-to-back alpha compositing."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.spatial import cKDTree

from .errors import ParseError, SingularCovarianceError, TooFewPointsError, ValidationError
from .formats import read_ply_points, write_ply_points
from .meshing import LABEL_EXTREMITY, SurfaceCloud

DEFAULT_TRUNK_COLOR = (0.42, 0.30, 0.18)
DEFAULT_EXTREMITY_COLOR = (0.28, 0.52, 0.22)


@dataclass
class GaussianCloud:
    """Per splat: center mu, covariance (n, 3, 3), RGB color in [0,1], opacity in (0,1]."""

    mu: np.ndarray
    cov: np.ndarray
    color: np.ndarray
    opacity: np.ndarray

    def __len__(self) -> int:
        return len(self.mu)

    def sigmas(self) -> np.ndarray:
        """Isotropic stddev per splat (sqrt of the mean diagonal entry)."""
        return np.sqrt(np.einsum("ijj->i", self.cov) / 3.0)

    def save_ply(self, path) -> None:
        sig = self.sigmas()
        write_ply_points(
            path,
            [
                ("x", "float", self.mu[:, 0]),
                ("y", "float", self.mu[:, 1]),
                ("z", "float", self.mu[:, 2]),
                ("sigma", "float", sig),
                ("r", "float", self.color[:, 0]),
                ("g", "float", self.color[:, 1]),
                ("b", "float", self.color[:, 2]),
                ("opacity", "float", self.opacity),
            ],
        )


def load_gaussians(path) -> GaussianCloud:
    data = read_ply_points(path)
    required = ("x", "y", "z", "sigma", "r", "g", "b", "opacity")
    missing = [k for k in required if k not in data]
    if missing:
        raise ParseError(f"{path}: gaussian cloud lacks properties {missing}")
    mu = np.stack([data["x"], data["y"], data["z"]], axis=1)
    sigma = data["sigma"]
    if np.any(sigma <= 0):
        raise ParseError(f"{path}: sigma must be positive")
    opacity = data["opacity"]
    if np.any((opacity <= 0) | (opacity > 1)):
        raise ParseError(f"{path}: opacity must lie in (0, 1]")
    cov = np.einsum("i,jk->ijk", sigma**2, np.eye(3))
    color = np.stack([data["r"], data["g"], data["b"]], axis=1)
    return GaussianCloud(mu=mu, cov=cov, color=color, opacity=opacity)


def mean_knn_distance(points: np.ndarray, k: int = 3) -> np.ndarray:
    """Per point, mean distance to its k nearest other points (kd-tree query)."""
    pts = np.asarray(points, dtype=np.float64).reshape(-1, 3)
    if len(pts) <= k:
        raise TooFewPointsError(f"need more than {k} points, got {len(pts)}")
    tree = cKDTree(pts)
    dists, _ = tree.query(pts, k=k + 1)  # column 0 is the point itself
    return dists[:, 1:].mean(axis=1)


def init_gaussians(
    cloud: SurfaceCloud,
    opacity0: float = 0.8,
    trunk_color=DEFAULT_TRUNK_COLOR,
    extremity_color=DEFAULT_EXTREMITY_COLOR,
) -> GaussianCloud:
    """One isotropic splat per surface point.

    sigma is the mean distance to the 3 nearest sampled neighbors, the
    covariance is sigma^2 * I, color comes from the trunk/extremity label and
    every splat starts at opacity0.
    """
    n = len(cloud)
    if n < 4:
        raise TooFewPointsError(f"gaussian init needs >= 4 points, got {n}")
    if not 0.0 < opacity0 <= 1.0:
        raise ValidationError(f"opacity0 must lie in (0, 1], got {opacity0!r}")
    sigma = mean_knn_distance(cloud.points, k=3)
    cov = np.einsum("i,jk->ijk", sigma**2, np.eye(3))
    palette = np.array([trunk_color, extremity_color], dtype=np.float64)
    color = palette[(cloud.labels == LABEL_EXTREMITY).astype(int)]
    return GaussianCloud(
        mu=cloud.points.copy(),
        cov=cov,
        color=color,
        opacity=np.full(n, float(opacity0)),
    )


def eval_gaussian(cov: np.ndarray, x_rel) -> float:
    """Unnormalized Gaussian kernel exp(-0.5 * x^T cov^-1 x) in (0, 1]."""
    cov = np.asarray(cov, dtype=np.float64)
    x = np.asarray(x_rel, dtype=np.float64).reshape(3)
    try:
        chol = np.linalg.cholesky(cov)
    except np.linalg.LinAlgError as exc:
        raise SingularCovarianceError(f"covariance is not SPD: {exc}") from exc
    y = np.linalg.solve(chol, x)
    return float(np.exp(-0.5 * np.dot(y, y)))


def composite_ray(colors: np.ndarray, sigmas: np.ndarray) -> tuple[np.ndarray, float]:
    """Front-to-back alpha compositing over splats already sorted by depth.

    ``sigmas`` are the effective per-splat opacities alpha_i * G_i in [0, 1].
    Returns (accumulated RGB, remaining transmittance).
    """
    colors = np.asarray(colors, dtype=np.float64).reshape(-1, 3)
    sigmas = np.asarray(sigmas, dtype=np.float64).reshape(-1)
    if len(colors) != len(sigmas):
        raise ValueError("colors and sigmas differ in length")
    if len(sigmas) == 0:
        return np.zeros(3), 1.0
    trans = np.empty(len(sigmas), dtype=np.float64)
    trans[0] = 1.0
    np.cumprod(1.0 - sigmas[:-1], out=trans[1:])
    weights = sigmas * trans
    color = (weights[:, None] * colors).sum(axis=0)
    return color, float(trans[-1] * (1.0 - sigmas[-1]))
