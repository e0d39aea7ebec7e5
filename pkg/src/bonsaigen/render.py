"""Multi-view rendering: pinhole cameras, a z-buffered triangle rasterizer
for tube meshes and an elliptical-footprint splatter for Gaussian clouds.

Depth images store the euclidean distance from the camera eye (mesh path:
to the surface hit point; splat path: transmittance-weighted expected
distance of the splat centers). Background pixels are +inf. All rendering
is sequential and deterministic: identical inputs give bit-identical images.
Triangles or splats with any support at camera-forward depth <= 1e-6 are
dropped whole (no near-plane clipping).
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import ValidationError
from .gaussians import GaussianCloud
from .meshing import TubeMesh
from .model import Vec3

_Z_NEAR = 1e-6
_COVERAGE_MIN = 1e-4  # below this accumulated opacity a pixel stays background
_FOOTPRINT_MAHALANOBIS = 3.0  # splat support cut at 3 sigma
_CHUNK_CANDIDATES = 1 << 21

ELEVATION_RANGE_DEG = (-15.0, 45.0)


@dataclass(frozen=True)
class Camera:
    """Pinhole look-at camera; vertical_fov in degrees."""

    eye: Vec3
    target: Vec3
    up: Vec3 = Vec3(0.0, 0.0, 1.0)
    vertical_fov: float = 50.0
    width: int = 512
    height: int = 512

    def __post_init__(self):
        if (self.eye - self.target).norm() == 0.0:
            raise ValidationError("camera eye and target coincide")
        if not 0.0 < self.vertical_fov < 180.0:
            raise ValidationError(f"vertical_fov must be in (0, 180), got {self.vertical_fov}")
        if self.width < 1 or self.height < 1:
            raise ValidationError("image dimensions must be positive")

    def basis(self) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        """(right, up, forward) orthonormal world-space axes."""
        fwd = (self.target - self.eye).to_array()
        fwd /= np.linalg.norm(fwd)
        up_hint = self.up.to_array()
        right = np.cross(fwd, up_hint)
        n = np.linalg.norm(right)
        if n < 1e-9:
            raise ValidationError("camera up vector is parallel to the view direction")
        right /= n
        return right, np.cross(right, fwd), fwd

    @property
    def focal_px(self) -> float:
        return (self.height / 2.0) / math.tan(math.radians(self.vertical_fov) / 2.0)


@dataclass
class ColorImage:
    data: np.ndarray  # (h, w, 3) float64 in [0, 1]

    @property
    def width(self) -> int:
        return self.data.shape[1]

    @property
    def height(self) -> int:
        return self.data.shape[0]


@dataclass
class DepthImage:
    data: np.ndarray  # (h, w) float64, +inf where uncovered

    @property
    def width(self) -> int:
        return self.data.shape[1]

    @property
    def height(self) -> int:
        return self.data.shape[0]

    def coverage_mask(self) -> np.ndarray:
        return np.isfinite(self.data)


def default_camera_rig(
    center: Vec3,
    scene_radius: float,
    n_views: int = 4,
    distance_range: tuple[float, float] = (2.5, 4.0),
    seed: int = 0,
    width: int = 512,
    height: int = 512,
    fov_deg: float = 50.0,
) -> list[Camera]:
    """Cameras on random orbits around the scene center.

    Per view (drawn in this order): distance uniform in
    [lo, hi] * scene_radius, azimuth uniform in [0, 2pi), elevation uniform
    in [-15 deg, +45 deg]. Deterministic per seed.
    """
    lo, hi = distance_range
    if not (0.0 < lo <= hi):
        raise ValidationError(f"bad distance range {distance_range!r}")
    if n_views < 1:
        raise ValidationError("need at least one view")
    if not scene_radius > 0:
        raise ValidationError(f"scene_radius must be positive, got {scene_radius!r}")
    rng = np.random.default_rng(seed)
    cams = []
    for _ in range(n_views):
        dist = rng.uniform(lo, hi) * scene_radius
        azimuth = rng.uniform(0.0, 2.0 * math.pi)
        elevation = math.radians(rng.uniform(*ELEVATION_RANGE_DEG))
        offset = Vec3(
            dist * math.cos(elevation) * math.cos(azimuth),
            dist * math.cos(elevation) * math.sin(azimuth),
            dist * math.sin(elevation),
        )
        cams.append(
            Camera(eye=center + offset, target=center, width=width, height=height,
                   vertical_fov=fov_deg)
        )
    return cams


def scene_bounds(points: np.ndarray) -> tuple[Vec3, float]:
    """Bounding-box center and half-diagonal radius of a point set."""
    pts = np.asarray(points, dtype=np.float64).reshape(-1, 3)
    if len(pts) == 0:
        raise ValidationError("cannot bound an empty point set")
    lo = pts.min(axis=0)
    hi = pts.max(axis=0)
    center = (lo + hi) / 2.0
    radius = float(np.linalg.norm(hi - center))
    return Vec3.from_array(center), max(radius, 1e-9)


def render_views(source, cameras: list[Camera]) -> list[tuple[ColorImage, DepthImage]]:
    """Render color + depth per camera from a GaussianCloud or a tube mesh."""
    if not cameras:
        raise ValidationError("need at least one camera")
    if isinstance(source, GaussianCloud):
        return [_render_gaussians(source, cam) for cam in cameras]
    if isinstance(source, TubeMesh):
        vf = (source.vertices, source.faces)
    else:
        vf = source  # (vertices, faces) pair
    vertices, faces = vf
    return [_render_mesh(np.asarray(vertices), np.asarray(faces), cam) for cam in cameras]


def render_silhouette(vertices: np.ndarray, faces: np.ndarray, cam: Camera) -> np.ndarray:
    """Boolean coverage mask; identical to the finite set of the mesh depth render."""
    mask = np.zeros(cam.height * cam.width, dtype=bool)
    for flat, _, _, _ in _mesh_fragments(np.asarray(vertices), np.asarray(faces), cam):
        mask[flat] = True
    return mask.reshape(cam.height, cam.width)


# ---------------------------------------------------------------------------
# mesh path


def _camera_space(points: np.ndarray, cam: Camera) -> np.ndarray:
    right, up, fwd = cam.basis()
    rel = points - cam.eye.to_array()
    return rel @ np.stack([right, up, fwd], axis=1)


def _mesh_fragments(vertices: np.ndarray, faces: np.ndarray, cam: Camera):
    """Yield covered-fragment arrays (flat_pixel, depth, face_id, shade) chunkwise.

    Coverage: the ray through the pixel center hits the triangle (evaluated
    with screen-space edge functions, both windings accepted); depth is the
    perspective-correct euclidean eye distance; shade is the headlight factor
    |normal . ray|.
    """
    h, w = cam.height, cam.width
    if len(faces) == 0:
        return
    pcam = _camera_space(vertices, cam)
    focal, cx, cy = cam.focal_px, w / 2.0, h / 2.0
    z = pcam[:, 2]
    in_front = z > _Z_NEAR
    # Triangles with any vertex at z <= near are dropped whole.
    px = np.where(in_front, cx + focal * pcam[:, 0] / np.where(in_front, z, 1.0), 0.0)
    py = np.where(in_front, cy - focal * pcam[:, 1] / np.where(in_front, z, 1.0), 0.0)
    v0, v1, v2 = faces[:, 0], faces[:, 1], faces[:, 2]
    ok = in_front[v0] & in_front[v1] & in_front[v2]

    ix0 = np.ceil(np.minimum.reduce([px[v0], px[v1], px[v2]]) - 0.5).astype(np.int64)
    ix1 = np.floor(np.maximum.reduce([px[v0], px[v1], px[v2]]) - 0.5).astype(np.int64)
    iy0 = np.ceil(np.minimum.reduce([py[v0], py[v1], py[v2]]) - 0.5).astype(np.int64)
    iy1 = np.floor(np.maximum.reduce([py[v0], py[v1], py[v2]]) - 0.5).astype(np.int64)
    np.clip(ix0, 0, w - 1, out=ix0)
    np.clip(ix1, 0, w - 1, out=ix1)
    np.clip(iy0, 0, h - 1, out=iy0)
    np.clip(iy1, 0, h - 1, out=iy1)
    nx = ix1 - ix0 + 1
    ny = iy1 - iy0 + 1
    counts = np.where(ok & (nx > 0) & (ny > 0), nx * ny, 0)
    live = np.flatnonzero(counts > 0)
    if len(live) == 0:
        return

    a = vertices[faces[:, 0]]
    normals = np.cross(vertices[faces[:, 1]] - a, vertices[faces[:, 2]] - a)
    nrm = np.linalg.norm(normals, axis=1)
    nrm[nrm == 0.0] = 1.0
    right, up, fwd = cam.basis()
    ncam = (normals / nrm[:, None]) @ np.stack([right, up, fwd], axis=1)

    csum = np.cumsum(counts[live])
    start = 0
    while start < len(live):
        base = csum[start - 1] if start else 0
        end = int(np.searchsorted(csum, base + _CHUNK_CANDIDATES, side="left")) + 1
        end = min(max(end, start + 1), len(live))
        yield from _rasterize_chunk(
            live[start:end], counts, ix0, iy0, nx, px, py, pcam, faces, ncam, focal, cx, cy, w
        )
        start = end


def _rasterize_chunk(fids, counts, ix0, iy0, nx, px, py, pcam, faces, ncam, focal, cx, cy, w):
    reps = counts[fids]
    face_of = np.repeat(fids, reps)
    local = np.arange(len(face_of)) - np.repeat(np.cumsum(reps) - reps, reps)
    ix = ix0[face_of] + local % nx[face_of]
    iy = iy0[face_of] + local // nx[face_of]
    sx = ix + 0.5
    sy = iy + 0.5

    i0, i1, i2 = faces[face_of, 0], faces[face_of, 1], faces[face_of, 2]
    e0 = (px[i1] - px[i0]) * (sy - py[i0]) - (py[i1] - py[i0]) * (sx - px[i0])
    e1 = (px[i2] - px[i1]) * (sy - py[i1]) - (py[i2] - py[i1]) * (sx - px[i1])
    e2 = (px[i0] - px[i2]) * (sy - py[i2]) - (py[i0] - py[i2]) * (sx - px[i2])
    area = e0 + e1 + e2
    pos = (e0 >= 0.0) & (e1 >= 0.0) & (e2 >= 0.0)
    neg = (e0 <= 0.0) & (e1 <= 0.0) & (e2 <= 0.0)
    cover = (pos | neg) & (area != 0.0)
    if not cover.any():
        return
    keep = np.flatnonzero(cover)
    face_of = face_of[keep]
    l0 = e1[keep] / area[keep]
    l1 = e2[keep] / area[keep]
    l2 = e0[keep] / area[keep]
    i0, i1, i2 = i0[keep], i1[keep], i2[keep]

    z0, z1, z2 = pcam[i0, 2], pcam[i1, 2], pcam[i2, 2]
    inv_z = l0 / z0 + l1 / z1 + l2 / z2
    hit = (
        l0[:, None] * pcam[i0] / z0[:, None]
        + l1[:, None] * pcam[i1] / z1[:, None]
        + l2[:, None] * pcam[i2] / z2[:, None]
    ) / inv_z[:, None]
    depth = np.sqrt(np.einsum("ij,ij->i", hit, hit))

    sx, sy = sx[keep], sy[keep]
    ray = np.stack([(sx - cx) / focal, (cy - sy) / focal, np.ones(len(sx))], axis=1)
    ray /= np.linalg.norm(ray, axis=1)[:, None]
    shade = np.abs(np.einsum("ij,ij->i", ncam[face_of], ray))

    flat = (iy[keep] * w + ix[keep]).astype(np.int64)
    yield flat, depth, face_of, shade


def _render_mesh(vertices: np.ndarray, faces: np.ndarray, cam: Camera):
    h, w = cam.height, cam.width
    depth_flat = np.full(h * w, np.inf)
    frags: list[tuple[np.ndarray, np.ndarray, np.ndarray, np.ndarray]] = []
    for flat, depth, face_of, shade in _mesh_fragments(vertices, faces, cam):
        np.minimum.at(depth_flat, flat, depth)
        frags.append((flat, depth, face_of, shade))
    # Winner resolution: among fragments at the stored minimum depth, the
    # lowest face id wins, making shading deterministic under depth ties.
    winner_flat = np.full(h * w, np.iinfo(np.int64).max, dtype=np.int64)
    for flat, depth, face_of, _ in frags:
        at_min = depth == depth_flat[flat]
        np.minimum.at(winner_flat, flat[at_min], face_of[at_min])
    gray_flat = np.zeros(h * w)
    for flat, depth, face_of, shade in frags:
        final = (depth == depth_flat[flat]) & (face_of == winner_flat[flat])
        gray_flat[flat[final]] = shade[final]
    color = np.repeat(gray_flat.reshape(h, w, 1), 3, axis=2)
    return ColorImage(color), DepthImage(depth_flat.reshape(h, w))


# ---------------------------------------------------------------------------
# gaussian path


def _render_gaussians(cloud: GaussianCloud, cam: Camera):
    h, w = cam.height, cam.width
    color = np.zeros((h, w, 3))
    transmit = np.ones((h, w))
    depth_num = np.zeros((h, w))
    depth_den = np.zeros((h, w))

    n = len(cloud)
    if n:
        right, up, fwd = cam.basis()
        rot = np.stack([right, up, fwd], axis=0)
        rel = cloud.mu - cam.eye.to_array()
        pcam = rel @ rot.T
        dist = np.linalg.norm(rel, axis=1)
        focal, cx, cy = cam.focal_px, w / 2.0, h / 2.0

        x, y, z = pcam[:, 0], pcam[:, 1], pcam[:, 2]
        zs = np.where(z > _Z_NEAR, z, 1.0)
        pxs = cx + focal * x / zs
        pys = cy - focal * y / zs
        # Screen-space covariance via the perspective Jacobian
        # J = [[f/z, 0, -f x/z^2], [0, -f/z, f y/z^2]], expanded directly.
        cov_cam = np.einsum("ab,nbc,dc->nad", rot, cloud.cov, rot)
        s00, s01, s02 = cov_cam[:, 0, 0], cov_cam[:, 0, 1], cov_cam[:, 0, 2]
        s11, s12, s22 = cov_cam[:, 1, 1], cov_cam[:, 1, 2], cov_cam[:, 2, 2]
        a = focal / zs
        bx = -focal * x / (zs * zs)
        by = focal * y / (zs * zs)
        c00 = a * a * s00 + 2.0 * a * bx * s02 + bx * bx * s22 + 1e-10
        c01 = -a * a * s01 + a * by * s02 - a * bx * s12 + bx * by * s22
        c11 = a * a * s11 - 2.0 * a * by * s12 + by * by * s22 + 1e-10
        exts_x = _FOOTPRINT_MAHALANOBIS * np.sqrt(c00)
        exts_y = _FOOTPRINT_MAHALANOBIS * np.sqrt(c11)
        dets = c00 * c11 - c01 * c01

        order = np.argsort(dist, kind="stable")
        for i in order:
            if z[i] <= _Z_NEAR or dets[i] <= 0.0:
                continue
            pxc, pyc = pxs[i], pys[i]
            ix0 = max(0, math.ceil(pxc - exts_x[i] - 0.5))
            ix1 = min(w - 1, math.floor(pxc + exts_x[i] - 0.5))
            iy0 = max(0, math.ceil(pyc - exts_y[i] - 0.5))
            iy1 = min(h - 1, math.floor(pyc + exts_y[i] - 0.5))
            if ix0 > ix1 or iy0 > iy1:
                continue
            inv00 = c11[i] / dets[i]
            inv01 = -c01[i] / dets[i]
            inv11 = c00[i] / dets[i]
            dx = np.arange(ix0, ix1 + 1) + 0.5 - pxc
            dy = np.arange(iy0, iy1 + 1) + 0.5 - pyc
            q = (
                inv00 * dx[None, :] ** 2
                + 2.0 * inv01 * dy[:, None] * dx[None, :]
                + inv11 * dy[:, None] ** 2
            )
            g = np.where(q <= _FOOTPRINT_MAHALANOBIS**2, np.exp(-0.5 * q), 0.0)
            sigma = cloud.opacity[i] * g
            patch = (slice(iy0, iy1 + 1), slice(ix0, ix1 + 1))
            contrib = sigma * transmit[patch]
            color[patch] += contrib[:, :, None] * cloud.color[i]
            depth_num[patch] += contrib * dist[i]
            depth_den[patch] += contrib
            transmit[patch] *= 1.0 - sigma

    depth = np.full((h, w), np.inf)
    covered = depth_den >= _COVERAGE_MIN
    depth[covered] = depth_num[covered] / depth_den[covered]
    return ColorImage(color), DepthImage(depth)
