"""Iterative branch growth driven by attraction points.

The loop keeps the classic colonization structure: every alive attractor
within the influence distance pulls its nearest branch node (default
``closest`` assignment; ``all_in_range`` lets one attractor pull every node
in range), each pulled node spawns a child one step along the weighted mean
direction, then attractors within the kill distance are consumed.

Determinism: ``grow`` uses no randomness at all; the skeleton is a pure
function of the attractor field and the parameters. Threshold comparisons
happen on squared distances so strict-inequality boundaries are exact.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .attractors import AttractorField
from .errors import DegenerateDirectionError, NonPositiveValueError
from .formats import write_csv
from .model import BranchNode, GrowthParams, Skeleton, Vec3, validate_params

_DUPLICATE_TOL_SQ = 1e-12  # "within 1e-6 of an existing sibling" suppression
_DEGENERATE_NORM = 1e-12

_UP = np.array([0.0, 0.0, 1.0])


@dataclass(frozen=True)
class IterationRecord:
    iteration: int
    nodes_added: int
    killed: int
    alive: int
    skipped_degenerate: int = 0


@dataclass
class GrowthTrace:
    """Per-iteration observability for a growth run."""

    records: list[IterationRecord] = field(default_factory=list)

    @property
    def total_killed(self) -> int:
        return sum(r.killed for r in self.records)

    @property
    def iterations(self) -> int:
        return len(self.records)

    def to_csv(self, path) -> None:
        write_csv(
            path,
            ["iteration", "nodes_added", "killed", "alive"],
            [(r.iteration, r.nodes_added, r.killed, r.alive) for r in self.records],
        )


def weight(v, dist: float, theta, d_influence: float) -> float:
    """Influence weight of one attractor at offset v and distance dist.

    w = theta0 * exp(-theta1 * dist / d_influence) * (1 + theta2 * max(0, vz/dist)),
    clamped at 0. With theta1 = theta2 = 0 this is the constant theta0.
    """
    if not dist > 0:
        raise NonPositiveValueError(f"dist must be positive, got {dist!r}")
    vz = v.z if isinstance(v, Vec3) else float(v[2])
    w0, fall, trop = float(theta[0]), float(theta[1]), float(theta[2])
    w = w0 * math.exp(-fall * dist / d_influence) * (1.0 + trop * max(0.0, vz / dist))
    return max(0.0, w)


def _weights(vecs: np.ndarray, dists: np.ndarray, theta, d_influence: float) -> np.ndarray:
    w0, fall, trop = float(theta[0]), float(theta[1]), float(theta[2])
    up = np.maximum(0.0, vecs[:, 2] / dists)
    w = w0 * np.exp(-fall * dists / d_influence) * (1.0 + trop * up)
    return np.maximum(0.0, w)


def _direction(position: np.ndarray, points: np.ndarray, theta, d_influence: float) -> np.ndarray:
    vecs = points - position
    dists = np.sqrt(np.einsum("ij,ij->i", vecs, vecs))
    if np.any(dists == 0.0):
        raise DegenerateDirectionError("attractor coincides with the node position")
    w = _weights(vecs, dists, theta, d_influence)
    summed = (w[:, None] * (vecs / dists[:, None])).sum(axis=0) / len(points)
    norm = float(np.linalg.norm(summed))
    if norm < _DEGENERATE_NORM:
        raise DegenerateDirectionError("weighted attractor directions cancel out")
    return summed / norm


def child_direction(node: BranchNode, attractor_points, theta, d_influence: float) -> Vec3:
    """Unit growth direction for a child of ``node``: the normalized weighted
    mean of unit vectors from the node to each attractor."""
    points = np.asarray(attractor_points, dtype=np.float64).reshape(-1, 3)
    if len(points) == 0:
        raise NonPositiveValueError("attractor list must be non-empty")
    d = _direction(node.position.to_array(), points, theta, d_influence)
    return Vec3.from_array(d)


def assign_attractors(
    field_: AttractorField,
    skeleton: Skeleton,
    d_influence: float,
    mode: str = "closest",
) -> dict[int, np.ndarray]:
    """Map node id -> indices of the alive attractors that influence it.

    ``closest``: each alive attractor influences only its nearest node, and
    only if strictly closer than d_influence; distance ties go to the lowest
    node id. ``all_in_range``: every node strictly within d_influence of an
    attractor is influenced by it.
    """
    node_pos = skeleton.positions()
    alive_idx = np.flatnonzero(field_.alive)
    d_inf2 = d_influence * d_influence
    if len(alive_idx) == 0:
        return {}
    if mode == "closest":
        d2, nearest = _nearest_nodes(field_.points[alive_idx], node_pos)
        mask = d2 < d_inf2
        return _group_by_node(nearest[mask], alive_idx[mask])
    if mode == "all_in_range":
        return _assign_all_in_range(field_.points, alive_idx, node_pos, d_inf2)
    raise ValueError(f"unknown assignment mode {mode!r}")


def _nearest_nodes(points: np.ndarray, node_pos: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Per point: (squared distance to nearest node, nearest node id)."""
    out_d2 = np.empty(len(points), dtype=np.float64)
    out_id = np.empty(len(points), dtype=np.int64)
    chunk = max(1, int(4_000_000 // max(len(node_pos), 1)))
    for start in range(0, len(points), chunk):
        block = points[start : start + chunk]
        diff = block[:, None, :] - node_pos[None, :, :]
        d2 = np.einsum("ijk,ijk->ij", diff, diff)
        idx = d2.argmin(axis=1)  # first occurrence = lowest node id on ties
        out_id[start : start + chunk] = idx
        out_d2[start : start + chunk] = d2[np.arange(len(block)), idx]
    return out_d2, out_id


def _group_by_node(node_ids: np.ndarray, attractor_ids: np.ndarray) -> dict[int, np.ndarray]:
    order = np.argsort(node_ids, kind="stable")
    sorted_nodes = node_ids[order]
    sorted_attr = attractor_ids[order]
    uniq, starts = np.unique(sorted_nodes, return_index=True)
    bounds = list(starts[1:]) + [len(sorted_nodes)]
    return {int(nid): sorted_attr[s:e] for nid, s, e in zip(uniq, starts, bounds)}


def _assign_all_in_range(
    points: np.ndarray, alive_idx: np.ndarray, node_pos: np.ndarray, d_inf2: float
) -> dict[int, np.ndarray]:
    out: dict[int, np.ndarray] = {}
    pts = points[alive_idx]
    for nid in range(len(node_pos)):
        diff = pts - node_pos[nid]
        d2 = np.einsum("ij,ij->i", diff, diff)
        hit = alive_idx[d2 < d_inf2]
        if len(hit):
            out[nid] = hit
    return out


def grow(field_: AttractorField, params: GrowthParams, observer=None):
    """Run the growth loop; returns (Skeleton, GrowthTrace).

    Marks consumed attractors dead in ``field_`` (flags only, indices are
    stable). The root sits at the origin pointing up; until the first
    attractor comes within d_influence of any node the trunk bootstraps
    straight up one step per iteration. Terminates at max_iterations, when
    influence contact has happened but no assignment is possible anymore, or
    after stall_limit consecutive iterations without kills or attractor-driven
    growth (bootstrap steps do not reset the stall counter). A degenerate
    direction skips that node for the iteration and is logged in the trace; a
    new node within 1e-6 of an existing child of the same parent is dropped.

    ``observer(iteration, node_positions, alive_flags)`` is called after each
    iteration's kill pass with read-only snapshots, for replay-style checks.
    """
    validate_params(params)
    delta_l = params.delta_l
    d_inf2 = params.d_influence * params.d_influence
    d_kill2 = params.d_kill * params.d_kill
    theta = params.theta

    positions = [np.array([0.0, 0.0, 0.0])]
    directions = [_UP.copy()]
    parents: list[int | None] = [None]
    children: list[list[int]] = [[]]

    pts = field_.points
    alive = field_.alive
    # Nearest-node tracking: only newly added nodes can lower the minimum, so
    # these arrays stay exact under incremental updates (ties keep the lower id).
    nearest_d2, nearest_id = _nearest_nodes(pts, np.asarray(positions))

    trace = GrowthTrace()
    influence_contact = False
    stall = 0
    trunk_tip = 0

    for iteration in range(params.max_iterations):
        alive_idx = np.flatnonzero(alive)
        if params.assignment == "closest":
            in_range = nearest_d2[alive_idx] < d_inf2
            groups = _group_by_node(nearest_id[alive_idx][in_range], alive_idx[in_range])
        else:
            groups = _assign_all_in_range(pts, alive_idx, np.asarray(positions), d_inf2)

        new_ids: list[int] = []
        grown = 0
        skipped = 0
        if groups:
            influence_contact = True
            for nid in sorted(groups):
                try:
                    direction = _direction(positions[nid], pts[groups[nid]], theta, params.d_influence)
                except DegenerateDirectionError:
                    skipped += 1
                    continue
                new_pos = positions[nid] + delta_l * direction
                dup = any(
                    float(np.sum((new_pos - positions[c]) ** 2)) <= _DUPLICATE_TOL_SQ
                    for c in children[nid]
                )
                if dup:
                    continue
                new_id = len(positions)
                positions.append(new_pos)
                directions.append(direction)
                parents.append(nid)
                children.append([])
                children[nid].append(new_id)
                new_ids.append(new_id)
                grown += 1
        elif influence_contact:
            break  # nodes and attractors are both frozen; nothing can change
        else:
            # Trunk bootstrap: extend straight up until the crown is in reach.
            new_pos = positions[trunk_tip] + delta_l * _UP
            new_id = len(positions)
            positions.append(new_pos)
            directions.append(_UP.copy())
            parents.append(trunk_tip)
            children.append([])
            children[trunk_tip].append(new_id)
            new_ids.append(new_id)
            trunk_tip = new_id

        if new_ids and len(alive_idx):
            block = np.asarray([positions[i] for i in new_ids])
            diff = pts[alive_idx, None, :] - block[None, :, :]
            d2 = np.einsum("ijk,ijk->ij", diff, diff)
            col = d2.argmin(axis=1)
            best = d2[np.arange(len(alive_idx)), col]
            better = best < nearest_d2[alive_idx]
            upd = alive_idx[better]
            nearest_d2[upd] = best[better]
            nearest_id[upd] = np.asarray(new_ids, dtype=np.int64)[col[better]]

        doomed = alive_idx[nearest_d2[alive_idx] < d_kill2]
        alive[doomed] = False
        killed = int(len(doomed))

        trace.records.append(
            IterationRecord(
                iteration=iteration,
                nodes_added=len(new_ids),
                killed=killed,
                alive=int(alive.sum()),
                skipped_degenerate=skipped,
            )
        )
        if observer is not None:
            observer(iteration, np.asarray(positions), alive.copy())

        if killed == 0 and grown == 0:
            stall += 1
            if stall >= params.stall_limit:
                break
        else:
            stall = 0

    nodes = tuple(
        BranchNode(
            id=i,
            parent=parents[i],
            children=tuple(children[i]),
            position=Vec3.from_array(positions[i]),
            direction=Vec3.from_array(directions[i]),
        )
        for i in range(len(positions))
    )
    return Skeleton(nodes=nodes, root_id=0, params_used=params), trace
