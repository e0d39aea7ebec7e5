"""Core domain types: skeleton graph, growth/sizing parameters, serialization.

The skeleton file format is UTF-8 JSON with sorted keys, no whitespace and
floats printed at 9 significant digits, so equal skeletons always serialize
to identical bytes. Schema (version 1)::

    {
      "nodes": [
        {"children": [int, ...], "direction": [x, y, z], "id": int,
         "parent": int | null, "position": [x, y, z], "size": float},
        ...
      ],
      "params": {"R": float, "assignment": str, "d_influence": float,
                 "d_kill": float, "delta_l": float, "max_iterations": int,
                 "n_attractors": int, "seed": int, "stall_limit": int,
                 "theta": [w, fall, trop, reserved]},
      "version": 1
    }

Node ids are dense integers in creation order; the scene is dimensionless
with the domain radius R ~ O(1) as the scale anchor (the 9-digit float
encoding keeps the 1e-6 step-length tolerance meaningful at that scale).
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, replace
from typing import Iterator, Optional, Sequence

import numpy as np

from .errors import (
    InvariantViolationError,
    NonPositiveValueError,
    OrderingViolationError,
    ParseError,
)
from .formats import fmt
from .rng import check_seed

SCHEMA_VERSION = 1
STEP_LENGTH_TOL = 1e-6
UNIT_DIRECTION_TOL = 1e-9

ASSIGNMENT_MODES = ("closest", "all_in_range")


@dataclass(frozen=True)
class Vec3:
    """Immutable 3-vector in world units."""

    x: float
    y: float
    z: float

    def __post_init__(self):
        for c in (self.x, self.y, self.z):
            if not math.isfinite(c):
                raise InvariantViolationError(f"non-finite vector component {c!r}")

    @classmethod
    def from_array(cls, a) -> "Vec3":
        return cls(float(a[0]), float(a[1]), float(a[2]))

    def to_array(self) -> np.ndarray:
        return np.array([self.x, self.y, self.z], dtype=np.float64)

    def __iter__(self) -> Iterator[float]:
        return iter((self.x, self.y, self.z))

    def __add__(self, other: "Vec3") -> "Vec3":
        return Vec3(self.x + other.x, self.y + other.y, self.z + other.z)

    def __sub__(self, other: "Vec3") -> "Vec3":
        return Vec3(self.x - other.x, self.y - other.y, self.z - other.z)

    def scaled(self, k: float) -> "Vec3":
        return Vec3(self.x * k, self.y * k, self.z * k)

    def dot(self, other: "Vec3") -> float:
        return self.x * other.x + self.y * other.y + self.z * other.z

    def norm(self) -> float:
        return math.sqrt(self.dot(self))


@dataclass(frozen=True)
class BranchNode:
    """One branch extremity: a tree node with its incoming growth direction."""

    id: int
    parent: Optional[int]
    children: tuple[int, ...]
    position: Vec3
    direction: Vec3
    size: float = 0.0  # stays 0 until the sizing pass runs


@dataclass(frozen=True)
class GrowthParams:
    """Growth-loop configuration; ``theta`` is the learnable weight vector.

    theta = (w, fall, trop, reserved): w scales every attractor weight,
    fall is the exponential distance falloff rate, trop biases weights
    toward upward-pointing attractor directions. The reserved slot is kept
    for forward compatibility and must be finite.
    """

    R: float
    n_attractors: int
    delta_l: float
    d_kill: float
    d_influence: float
    theta: tuple[float, float, float, float] = (1.0, 0.0, 0.0, 0.0)
    max_iterations: int = 200
    stall_limit: int = 50
    seed: int = 0
    assignment: str = "closest"

    def with_theta(self, theta: Sequence[float]) -> "GrowthParams":
        return replace(self, theta=tuple(float(t) for t in theta))


@dataclass(frozen=True)
class SizingParams:
    """Branch sizing and ring meshing configuration."""

    r_e: float  # extremity (leaf branch) radius
    i_g: float  # aggregation exponent; 2 reproduces the classic pipe model
    ring_segments: int  # vertices per ring, >= 3


def validate_params(p: GrowthParams) -> None:
    """Raise unless every GrowthParams invariant holds."""
    positives = [
        ("R", p.R),
        ("n_attractors", p.n_attractors),
        ("delta_l", p.delta_l),
        ("d_kill", p.d_kill),
        ("d_influence", p.d_influence),
        ("max_iterations", p.max_iterations),
        ("stall_limit", p.stall_limit),
    ]
    for name, value in positives:
        if not (value > 0 and math.isfinite(float(value))):
            raise NonPositiveValueError(f"{name} must be positive, got {value!r}")
    for name, value in (("n_attractors", p.n_attractors),
                        ("max_iterations", p.max_iterations),
                        ("stall_limit", p.stall_limit)):
        if int(value) != value:
            raise NonPositiveValueError(f"{name} must be an integer, got {value!r}")
    if len(p.theta) != 4 or not all(math.isfinite(float(t)) for t in p.theta):
        raise NonPositiveValueError(f"theta must be 4 finite reals, got {p.theta!r}")
    if p.theta[0] <= 0:
        raise NonPositiveValueError(f"theta[0] (weight scale) must be positive, got {p.theta[0]!r}")
    if not (p.delta_l < p.d_kill < p.d_influence):
        raise OrderingViolationError(
            "required ordering delta_l < d_kill < d_influence violated: "
            f"delta_l={p.delta_l}, d_kill={p.d_kill}, d_influence={p.d_influence}"
        )
    if p.assignment not in ASSIGNMENT_MODES:
        raise NonPositiveValueError(
            f"assignment must be one of {ASSIGNMENT_MODES}, got {p.assignment!r}"
        )
    check_seed(p.seed)


def validate_sizing(sp: SizingParams) -> None:
    if not (sp.r_e > 0 and math.isfinite(sp.r_e)):
        raise NonPositiveValueError(f"r_e must be positive, got {sp.r_e!r}")
    if not (sp.i_g >= 1 and math.isfinite(sp.i_g)):
        raise NonPositiveValueError(f"i_g must be >= 1, got {sp.i_g!r}")
    if int(sp.ring_segments) != sp.ring_segments or sp.ring_segments < 3:
        raise NonPositiveValueError(f"ring_segments must be an integer >= 3, got {sp.ring_segments!r}")


@dataclass(frozen=True)
class Skeleton:
    """Directed branch tree; nodes are indexed by their dense integer id."""

    nodes: tuple[BranchNode, ...]
    root_id: int
    params_used: GrowthParams

    def node(self, node_id: int) -> BranchNode:
        return self.nodes[node_id]

    def __len__(self) -> int:
        return len(self.nodes)

    @property
    def n_branches(self) -> int:
        """Number of branches (edges) = non-root node count."""
        return len(self.nodes) - 1

    def positions(self) -> np.ndarray:
        """(n, 3) array of node positions ordered by id."""
        return np.array([[n.position.x, n.position.y, n.position.z] for n in self.nodes])

    def leaf_ids(self) -> list[int]:
        return [n.id for n in self.nodes if not n.children]

    def is_sized(self) -> bool:
        return all(n.size > 0 for n in self.nodes)


def validate_skeleton(s: Skeleton) -> None:
    """Check every structural invariant; raises InvariantViolationError."""
    n = len(s.nodes)
    if n < 1:
        raise InvariantViolationError("skeleton must contain at least one node")
    for i, node in enumerate(s.nodes):
        if node.id != i:
            raise InvariantViolationError(f"node ids must be dense, got {node.id} at index {i}")
        if node.size < 0 or not math.isfinite(node.size):
            raise InvariantViolationError(f"node {i}: size must be finite and >= 0")
    roots = [node.id for node in s.nodes if node.parent is None]
    if len(roots) != 1:
        raise InvariantViolationError(f"expected exactly one root, found {len(roots)}")
    if s.root_id != roots[0]:
        raise InvariantViolationError(f"root_id {s.root_id} does not match parentless node {roots[0]}")
    for node in s.nodes:
        if len(set(node.children)) != len(node.children):
            raise InvariantViolationError(f"node {node.id}: duplicate child entries")
        for c in node.children:
            if not 0 <= c < n:
                raise InvariantViolationError(f"node {node.id}: child {c} out of range")
            if s.nodes[c].parent != node.id:
                raise InvariantViolationError(
                    f"node {c} does not list {node.id} as parent but is listed as its child"
                )
        if node.parent is not None:
            if not 0 <= node.parent < n:
                raise InvariantViolationError(f"node {node.id}: parent {node.parent} out of range")
            if node.id not in s.nodes[node.parent].children:
                raise InvariantViolationError(
                    f"node {node.id} not registered as child of its parent {node.parent}"
                )
        dn = node.direction.norm()
        if abs(dn - 1.0) > UNIT_DIRECTION_TOL:
            raise InvariantViolationError(f"node {node.id}: direction norm {dn} not unit")
    delta_l = s.params_used.delta_l
    for node in s.nodes:
        if node.parent is None:
            continue
        step = (node.position - s.nodes[node.parent].position).norm()
        if abs(step - delta_l) > STEP_LENGTH_TOL:
            raise InvariantViolationError(
                f"node {node.id}: step length {step} deviates from delta_l={delta_l}"
            )
    # Parent/child references are mutually consistent and each non-root node has
    # exactly one parent, so full reachability from the root rules out cycles.
    reached = 0
    stack = [s.root_id]
    while stack:
        reached += 1
        stack.extend(s.nodes[stack.pop()].children)
    if reached != n:
        raise InvariantViolationError(
            f"only {reached} of {n} nodes reachable from the root (cycle or orphan subtree)"
        )


# ---------------------------------------------------------------------------
# canonical serialization


def _emit(value) -> str:
    if value is None:
        return "null"
    if isinstance(value, bool):
        raise TypeError("unexpected bool in skeleton document")
    if isinstance(value, (int, np.integer)):
        return str(int(value))
    if isinstance(value, float):
        return fmt(value)
    if isinstance(value, Vec3):
        return f"[{fmt(value.x)},{fmt(value.y)},{fmt(value.z)}]"
    if isinstance(value, (list, tuple)):
        return "[" + ",".join(_emit(v) for v in value) + "]"
    if isinstance(value, dict):
        items = (f'"{k}":{_emit(value[k])}' for k in sorted(value))
        return "{" + ",".join(items) + "}"
    if isinstance(value, str):
        return json.dumps(value)
    raise TypeError(f"cannot serialize {type(value).__name__}")


def serialize_skeleton(s: Skeleton) -> bytes:
    """Canonical byte encoding; equal skeletons produce equal bytes."""
    doc = {
        "version": SCHEMA_VERSION,
        "params": {
            "R": float(s.params_used.R),
            "assignment": s.params_used.assignment,
            "d_influence": float(s.params_used.d_influence),
            "d_kill": float(s.params_used.d_kill),
            "delta_l": float(s.params_used.delta_l),
            "max_iterations": int(s.params_used.max_iterations),
            "n_attractors": int(s.params_used.n_attractors),
            "seed": int(s.params_used.seed),
            "stall_limit": int(s.params_used.stall_limit),
            "theta": [float(t) for t in s.params_used.theta],
        },
        "nodes": [
            {
                "children": list(node.children),
                "direction": node.direction,
                "id": node.id,
                "parent": node.parent,
                "position": node.position,
                "size": float(node.size),
            }
            for node in s.nodes
        ],
    }
    return (_emit(doc) + "\n").encode("utf-8")


def _require(cond: bool, message: str) -> None:
    if not cond:
        raise ParseError(message)


def _as_vec3(value, what: str) -> Vec3:
    _require(isinstance(value, list) and len(value) == 3, f"{what} must be a 3-element array")
    _require(all(isinstance(c, (int, float)) and not isinstance(c, bool) for c in value),
             f"{what} components must be numbers")
    try:
        return Vec3(float(value[0]), float(value[1]), float(value[2]))
    except InvariantViolationError as exc:
        raise ParseError(f"{what}: {exc}") from exc


def deserialize_skeleton(data: bytes | str) -> Skeleton:
    """Parse and fully validate a skeleton document."""
    if isinstance(data, bytes):
        try:
            data = data.decode("utf-8")
        except UnicodeDecodeError as exc:
            raise ParseError(f"skeleton document is not UTF-8: {exc}") from exc
    try:
        doc = json.loads(data)
    except (json.JSONDecodeError, RecursionError) as exc:
        raise ParseError(f"skeleton document is not valid JSON: {exc}") from exc
    _require(isinstance(doc, dict), "top level must be an object")
    _require(doc.get("version") == SCHEMA_VERSION,
             f"unsupported schema version {doc.get('version')!r}")
    raw_params = doc.get("params")
    _require(isinstance(raw_params, dict), "missing params object")
    try:
        params = GrowthParams(
            R=float(raw_params["R"]),
            n_attractors=int(raw_params["n_attractors"]),
            delta_l=float(raw_params["delta_l"]),
            d_kill=float(raw_params["d_kill"]),
            d_influence=float(raw_params["d_influence"]),
            theta=tuple(float(t) for t in raw_params["theta"]),
            max_iterations=int(raw_params["max_iterations"]),
            stall_limit=int(raw_params["stall_limit"]),
            seed=int(raw_params["seed"]),
            assignment=str(raw_params.get("assignment", "closest")),
        )
    except (KeyError, TypeError, ValueError) as exc:
        raise ParseError(f"bad params object: {exc}") from exc
    if len(params.theta) != 4:
        raise ParseError(f"theta must have 4 entries, got {len(params.theta)}")
    raw_nodes = doc.get("nodes")
    _require(isinstance(raw_nodes, list) and raw_nodes, "nodes must be a non-empty array")
    nodes = []
    for i, raw in enumerate(raw_nodes):
        _require(isinstance(raw, dict), f"node {i} must be an object")
        try:
            parent = raw["parent"]
            _require(parent is None or isinstance(parent, int), f"node {i}: parent must be int or null")
            children = raw["children"]
            _require(isinstance(children, list) and all(isinstance(c, int) for c in children),
                     f"node {i}: children must be an int array")
            nodes.append(
                BranchNode(
                    id=int(raw["id"]),
                    parent=parent,
                    children=tuple(children),
                    position=_as_vec3(raw["position"], f"node {i} position"),
                    direction=_as_vec3(raw["direction"], f"node {i} direction"),
                    size=float(raw["size"]),
                )
            )
        except KeyError as exc:
            raise ParseError(f"node {i}: missing key {exc}") from exc
        except (TypeError, ValueError) as exc:
            raise ParseError(f"node {i}: {exc}") from exc
    roots = [n for n in nodes if n.parent is None]
    if len(roots) != 1:
        raise InvariantViolationError(f"expected exactly one root, found {len(roots)}")
    skeleton = Skeleton(nodes=tuple(nodes), root_id=roots[0].id, params_used=params)
    validate_skeleton(skeleton)
    return skeleton


def load_skeleton(path) -> Skeleton:
    with open(path, "rb") as fh:
        return deserialize_skeleton(fh.read())


def save_skeleton(s: Skeleton, path) -> None:
    with open(path, "wb") as fh:
        fh.write(serialize_skeleton(s))
