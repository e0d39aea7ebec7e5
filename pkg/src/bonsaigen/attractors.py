"""Attraction-point ("leaf") field inside the crown domain.

The crown is the solid half-height ellipsoid centered at (0, 0, R) with
semi-axes (R, R, R/2): the region between the two caps
z = R +/- sqrt(R^2 - x^2 - y^2) / 2.

Points are drawn literally as P = center + D * d with D uniform on the unit
sphere and d uniform in [0, R], rejection-resampled until they land inside
the domain; this biases density toward the crown center. Set
``uniform_volume=True`` for a volume-uniform alternative.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import NonPositiveValueError
from .formats import write_ply_points
from .model import Skeleton, Vec3

_BATCH = 4096


@dataclass
class AttractorField:
    """Attraction points with alive flags; dead points keep their index."""

    points: np.ndarray  # (n, 3) float64
    alive: np.ndarray  # (n,) bool
    domain_R: float

    def __post_init__(self):
        self.points = np.ascontiguousarray(self.points, dtype=np.float64).reshape(-1, 3)
        self.alive = np.asarray(self.alive, dtype=bool).reshape(-1)
        if len(self.points) != len(self.alive):
            raise ValueError("points and alive flags differ in length")

    def __len__(self) -> int:
        return len(self.points)

    @property
    def n_alive(self) -> int:
        return int(self.alive.sum())

    def alive_points(self) -> np.ndarray:
        return self.points[self.alive]

    def copy(self) -> "AttractorField":
        return AttractorField(self.points.copy(), self.alive.copy(), self.domain_R)


def domain_contains(p, R: float) -> bool:
    """True iff p lies inside the crown domain of radius R (boundary inclusive)."""
    if isinstance(p, Vec3):
        x, y, z = p.x, p.y, p.z
    else:
        x, y, z = float(p[0]), float(p[1]), float(p[2])
    rho2 = x * x + y * y
    if rho2 > R * R:
        return False
    half = R / 2.0
    return rho2 / (R * R) + ((z - R) / half) ** 2 <= 1.0


def domain_contains_many(points: np.ndarray, R: float) -> np.ndarray:
    pts = np.asarray(points, dtype=np.float64).reshape(-1, 3)
    rho2 = pts[:, 0] ** 2 + pts[:, 1] ** 2
    half = R / 2.0
    ell = rho2 / (R * R) + ((pts[:, 2] - R) / half) ** 2
    return (rho2 <= R * R) & (ell <= 1.0)


def sample_attractors(R: float, n: int, seed: int, uniform_volume: bool = False) -> AttractorField:
    """Sample exactly n attraction points inside the crown domain.

    Deterministic for a fixed (R, n, seed, uniform_volume). Rejection always
    terminates: the acceptance probability per draw is bounded below.
    """
    if not R > 0:
        raise NonPositiveValueError(f"R must be positive, got {R!r}")
    if not n > 0:
        raise NonPositiveValueError(f"n must be positive, got {n!r}")
    rng = np.random.default_rng(seed)
    center = np.array([0.0, 0.0, R])
    chunks: list[np.ndarray] = []
    remaining = int(n)
    while remaining > 0:
        if uniform_volume:
            cand = rng.uniform(-1.0, 1.0, size=(_BATCH, 3)) * np.array([R, R, R / 2.0])
            cand[:, 2] += R
        else:
            normals = rng.normal(size=(_BATCH, 3))
            norms = np.linalg.norm(normals, axis=1)
            norms[norms == 0.0] = 1.0  # astronomically unlikely; maps to the center
            d = rng.uniform(0.0, R, size=_BATCH)
            cand = center + normals / norms[:, None] * d[:, None]
        accepted = cand[domain_contains_many(cand, R)]
        take = accepted[:remaining]
        chunks.append(take)
        remaining -= len(take)
    points = np.concatenate(chunks, axis=0)
    return AttractorField(points=points, alive=np.ones(n, dtype=bool), domain_R=float(R))


def kill_pass(field: AttractorField, skeleton: Skeleton, d_kill: float) -> int:
    """Mark every alive attractor strictly within d_kill of any node as dead.

    Returns the number of newly killed attractors. Comparison is strict `<`
    on squared distances, so a point at exactly d_kill survives.
    """
    if not d_kill > 0:
        raise NonPositiveValueError(f"d_kill must be positive, got {d_kill!r}")
    alive_idx = np.flatnonzero(field.alive)
    if len(alive_idx) == 0 or len(skeleton) == 0:
        return 0
    node_pos = skeleton.positions()
    d2 = min_squared_distances(field.points[alive_idx], node_pos)
    doomed = alive_idx[d2 < d_kill * d_kill]
    field.alive[doomed] = False
    return int(len(doomed))


def min_squared_distances(points: np.ndarray, targets: np.ndarray) -> np.ndarray:
    """Per point, the squared distance to its nearest target (chunked O(n*m))."""
    points = np.asarray(points, dtype=np.float64).reshape(-1, 3)
    targets = np.asarray(targets, dtype=np.float64).reshape(-1, 3)
    out = np.empty(len(points), dtype=np.float64)
    # Bound the temporary distance matrix to ~32 MB.
    chunk = max(1, int(4_000_000 // max(len(targets), 1)))
    for start in range(0, len(points), chunk):
        block = points[start : start + chunk]
        diff = block[:, None, :] - targets[None, :, :]
        d2 = np.einsum("ijk,ijk->ij", diff, diff)
        out[start : start + chunk] = d2.min(axis=1)
    return out


def write_attractors_ply(field: AttractorField, path) -> None:
    """Dump the alive attractors as an ascii PLY point cloud."""
    pts = field.alive_points()
    write_ply_points(
        path,
        [("x", "float", pts[:, 0]), ("y", "float", pts[:, 1]), ("z", "float", pts[:, 2])],
    )
