"""Skeleton -> sized branches -> tube mesh -> surface point cloud.

Sizing: extremities get radius r_e; an internal branch aggregates its
children as (sum children_size^i_g)^(1/i_g), computed children-first
(i_g = 2 is the classic pipe model).

Meshing: one ring of ``ring_segments`` vertices per node (root included),
ring radius = node size, ring plane perpendicular to the node's growth
direction. Ring frames are parallel-transported down the tree so adjacent
rings do not twist against each other. Each branch connects its parent's
ring to its own with ring_segments quads = 2 * ring_segments triangles, so
vertex/face counts are exactly (n_branches + 1) * S and n_branches * S * 2.
Junctions reuse the parent ring for every child (faces may interpenetrate
there) and extremities are left uncapped; the mesh feeds sampling and depth
rendering, which tolerate both.
"""

from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np

from .errors import EmptyMeshError, NonPositiveValueError, UnsizedSkeletonError
from .formats import write_obj, write_ply_points
from .model import Skeleton, SizingParams, validate_sizing

LABEL_TRUNK = 0
LABEL_EXTREMITY = 1
_EXTREMITY_SIZE_SLACK = 1.0 + 1e-9  # size <= r_e * slack counts as extremity


def compute_sizes(skeleton: Skeleton, sp: SizingParams) -> Skeleton:
    """Return a copy of the skeleton with every node size filled in."""
    validate_sizing(sp)
    n = len(skeleton)
    sizes = np.zeros(n, dtype=np.float64)
    # Children always carry higher ids than their parent, so reverse id order
    # is a valid children-first schedule.
    for nid in range(n - 1, -1, -1):
        node = skeleton.nodes[nid]
        if not node.children:
            sizes[nid] = sp.r_e
        else:
            acc = sum(sizes[c] ** sp.i_g for c in node.children)
            sizes[nid] = acc ** (1.0 / sp.i_g)
    nodes = tuple(replace(node, size=float(sizes[node.id])) for node in skeleton.nodes)
    return Skeleton(nodes=nodes, root_id=skeleton.root_id, params_used=skeleton.params_used)


@dataclass
class TubeMesh:
    """Triangle tube mesh around a skeleton.

    ``face_source_node``/``face_source_size`` record, per face, the child
    node of the branch the face belongs to and that node's size (used for
    trunk/extremity labelling when sampling).
    """

    vertices: np.ndarray  # (n_v, 3) float64
    faces: np.ndarray  # (n_f, 3) int64
    ring_of_node: dict[int, np.ndarray]
    face_source_node: np.ndarray  # (n_f,) int64
    face_source_size: np.ndarray  # (n_f,) float64
    sizing_used: SizingParams

    @property
    def n_vertices(self) -> int:
        return len(self.vertices)

    @property
    def n_faces(self) -> int:
        return len(self.faces)

    def face_areas(self) -> np.ndarray:
        a = self.vertices[self.faces[:, 0]]
        b = self.vertices[self.faces[:, 1]]
        c = self.vertices[self.faces[:, 2]]
        return 0.5 * np.linalg.norm(np.cross(b - a, c - a), axis=1)

    def face_normals(self) -> np.ndarray:
        a = self.vertices[self.faces[:, 0]]
        b = self.vertices[self.faces[:, 1]]
        c = self.vertices[self.faces[:, 2]]
        n = np.cross(b - a, c - a)
        norms = np.linalg.norm(n, axis=1)
        norms[norms == 0.0] = 1.0
        return n / norms[:, None]

    def total_area(self) -> float:
        return float(self.face_areas().sum())

    def save_obj(self, path) -> None:
        write_obj(path, self.vertices, self.faces)


def _perp_seed(direction: np.ndarray) -> np.ndarray:
    """First frame axis: global x projected off the direction, else global y."""
    for axis in (np.array([1.0, 0.0, 0.0]), np.array([0.0, 1.0, 0.0])):
        e = axis - np.dot(axis, direction) * direction
        norm = np.linalg.norm(e)
        if norm > 1e-9:
            return e / norm
    raise AssertionError("direction cannot be parallel to both x and y axes")


def _transport(e1_parent: np.ndarray, e2_parent: np.ndarray, direction: np.ndarray) -> np.ndarray:
    e1 = e1_parent - np.dot(e1_parent, direction) * direction
    norm = np.linalg.norm(e1)
    if norm <= 1e-9:  # direction flipped onto the old frame axis
        e1 = e2_parent - np.dot(e2_parent, direction) * direction
        norm = np.linalg.norm(e1)
    return e1 / norm


def build_mesh(skeleton: Skeleton, sp: SizingParams) -> TubeMesh:
    """Build the ring tube mesh for a sized skeleton."""
    validate_sizing(sp)
    if not skeleton.is_sized():
        raise UnsizedSkeletonError("skeleton has zero-size nodes; run compute_sizes first")
    s = int(sp.ring_segments)
    n = len(skeleton)
    angles = 2.0 * np.pi * np.arange(s) / s
    cos_a, sin_a = np.cos(angles), np.sin(angles)

    vertices = np.empty((n * s, 3), dtype=np.float64)
    frames: dict[int, tuple[np.ndarray, np.ndarray]] = {}
    ring_of_node: dict[int, np.ndarray] = {}
    for node in skeleton.nodes:  # parents precede children in id order
        d = node.direction.to_array()
        if node.parent is None:
            e1 = _perp_seed(d)
        else:
            e1 = _transport(*frames[node.parent], d)
        e2 = np.cross(d, e1)
        frames[node.id] = (e1, e2)
        ring = node.position.to_array() + node.size * (
            cos_a[:, None] * e1 + sin_a[:, None] * e2
        )
        vertices[node.id * s : (node.id + 1) * s] = ring
        ring_of_node[node.id] = np.arange(node.id * s, (node.id + 1) * s, dtype=np.int64)

    n_faces = (n - 1) * s * 2
    faces = np.empty((n_faces, 3), dtype=np.int64)
    face_node = np.empty(n_faces, dtype=np.int64)
    face_size = np.empty(n_faces, dtype=np.float64)
    fi = 0
    for node in skeleton.nodes:
        if node.parent is None:
            continue
        pr = ring_of_node[node.parent]
        cr = ring_of_node[node.id]
        for k in range(s):
            k1 = (k + 1) % s
            faces[fi] = (pr[k], pr[k1], cr[k1])
            faces[fi + 1] = (pr[k], cr[k1], cr[k])
            face_node[fi : fi + 2] = node.id
            face_size[fi : fi + 2] = node.size
            fi += 2
    return TubeMesh(
        vertices=vertices,
        faces=faces,
        ring_of_node=ring_of_node,
        face_source_node=face_node,
        face_source_size=face_size,
        sizing_used=sp,
    )


@dataclass
class SurfaceCloud:
    """Points sampled uniformly (per unit area) on the tube mesh surface."""

    points: np.ndarray  # (n, 3)
    normals: np.ndarray  # (n, 3) unit
    source_face: np.ndarray  # (n,) int64
    labels: np.ndarray  # (n,) int: LABEL_TRUNK or LABEL_EXTREMITY

    def __len__(self) -> int:
        return len(self.points)

    def save_ply(self, path) -> None:
        write_ply_points(
            path,
            [
                ("x", "float", self.points[:, 0]),
                ("y", "float", self.points[:, 1]),
                ("z", "float", self.points[:, 2]),
                ("nx", "float", self.normals[:, 0]),
                ("ny", "float", self.normals[:, 1]),
                ("nz", "float", self.normals[:, 2]),
                ("label", "uchar", self.labels),
            ],
        )


def load_surface_cloud(path) -> SurfaceCloud:
    from .formats import read_ply_points

    data = read_ply_points(path)
    required = ("x", "y", "z", "nx", "ny", "nz", "label")
    missing = [k for k in required if k not in data]
    if missing:
        from .errors import ParseError

        raise ParseError(f"{path}: surface cloud lacks properties {missing}")
    points = np.stack([data["x"], data["y"], data["z"]], axis=1)
    normals = np.stack([data["nx"], data["ny"], data["nz"]], axis=1)
    n = len(points)
    return SurfaceCloud(
        points=points,
        normals=normals,
        source_face=np.full(n, -1, dtype=np.int64),
        labels=data["label"].astype(np.int64),
    )


def sample_surface(mesh: TubeMesh, density: float, seed: int) -> SurfaceCloud:
    """Sample round(density * total_area) points, triangles chosen by area.

    In-triangle placement is uniform via reflected barycentric coordinates;
    deterministic for a fixed seed. A point is labelled extremity when its
    source branch size is <= r_e (up to 1e-9 relative slack), trunk otherwise.
    """
    if not density > 0:
        raise NonPositiveValueError(f"density must be positive, got {density!r}")
    if mesh.n_faces == 0:
        raise EmptyMeshError("cannot sample an empty mesh")
    areas = mesh.face_areas()
    total = float(areas.sum())
    if total <= 0.0:
        raise EmptyMeshError("mesh has zero total area")
    count = int(round(density * total))
    rng = np.random.default_rng(seed)
    chosen = rng.choice(mesh.n_faces, size=count, p=areas / total)
    uv = rng.random((count, 2))
    flip = uv.sum(axis=1) > 1.0
    uv[flip] = 1.0 - uv[flip]
    a = mesh.vertices[mesh.faces[chosen, 0]]
    b = mesh.vertices[mesh.faces[chosen, 1]]
    c = mesh.vertices[mesh.faces[chosen, 2]]
    points = a + uv[:, :1] * (b - a) + uv[:, 1:] * (c - a)
    normals = mesh.face_normals()[chosen]
    r_e = mesh.sizing_used.r_e
    labels = np.where(
        mesh.face_source_size[chosen] <= r_e * _EXTREMITY_SIZE_SLACK,
        LABEL_EXTREMITY,
        LABEL_TRUNK,
    ).astype(np.int64)
    return SurfaceCloud(points=points, normals=normals, source_face=chosen.astype(np.int64), labels=labels)
