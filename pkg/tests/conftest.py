"""Shared builders for the test suite."""

from __future__ import annotations

import json
from pathlib import Path

import numpy as np
import pytest

from bonsaigen import (
    AttractorField,
    BranchNode,
    FitConfig,
    GrowthParams,
    Skeleton,
    SizingParams,
    Vec3,
)

FIXTURES = Path(__file__).parent / "fixtures"


def random_skeleton(n_nodes: int, seed: int, delta_l: float = 0.05) -> Skeleton:
    """Random valid tree: each new node hangs off a uniformly chosen parent."""
    rng = np.random.default_rng(seed)
    positions = [np.zeros(3)]
    directions = [np.array([0.0, 0.0, 1.0])]
    parents: list[int | None] = [None]
    children: list[list[int]] = [[]]
    for i in range(1, n_nodes):
        parent = int(rng.integers(0, i))
        d = rng.normal(size=3)
        d /= np.linalg.norm(d)
        positions.append(positions[parent] + delta_l * d)
        directions.append(d)
        parents.append(parent)
        children.append([])
        children[parent].append(i)
    params = GrowthParams(
        R=1.0,
        n_attractors=1,
        delta_l=delta_l,
        d_kill=2.0 * delta_l,
        d_influence=4.0 * delta_l,
        seed=seed,
    )
    nodes = tuple(
        BranchNode(
            id=i,
            parent=parents[i],
            children=tuple(children[i]),
            position=Vec3.from_array(positions[i]),
            direction=Vec3.from_array(directions[i]),
        )
        for i in range(n_nodes)
    )
    return Skeleton(nodes=nodes, root_id=0, params_used=params)


def chain_skeleton(n_nodes: int, delta_l: float = 0.05) -> Skeleton:
    """Straight vertical chain root -> ... -> tip."""
    params = GrowthParams(
        R=1.0, n_attractors=1, delta_l=delta_l, d_kill=2 * delta_l, d_influence=4 * delta_l
    )
    up = Vec3(0.0, 0.0, 1.0)
    nodes = []
    for i in range(n_nodes):
        nodes.append(
            BranchNode(
                id=i,
                parent=None if i == 0 else i - 1,
                children=(i + 1,) if i < n_nodes - 1 else (),
                position=Vec3(0.0, 0.0, i * delta_l),
                direction=up,
            )
        )
    return Skeleton(nodes=tuple(nodes), root_id=0, params_used=params)


def field_from_points(points, R: float = 1.0) -> AttractorField:
    pts = np.asarray(points, dtype=np.float64).reshape(-1, 3)
    return AttractorField(points=pts, alive=np.ones(len(pts), dtype=bool), domain_R=R)


@pytest.fixture(scope="session")
def recovery_fixture() -> dict:
    with open(FIXTURES / "recovery_fixture.json", "r", encoding="utf-8") as fh:
        return json.load(fh)


def recovery_setup(fx: dict) -> tuple[GrowthParams, SizingParams, FitConfig]:
    g = fx["growth"]
    base = GrowthParams(
        R=g["R"],
        n_attractors=g["n_attractors"],
        delta_l=g["delta_l"],
        d_kill=g["d_kill"],
        d_influence=g["d_influence"],
        max_iterations=g["max_iterations"],
        stall_limit=g["stall_limit"],
    )
    s = fx["sizing"]
    sizing = SizingParams(r_e=s["r_e"], i_g=s["i_g"], ring_segments=s["ring_segments"])
    f = fx["fit"]
    cfg = FitConfig(
        theta_init=tuple(f["theta_init"]),
        theta_lo=tuple(f["theta_lo"]),
        theta_hi=tuple(f["theta_hi"]),
        step_sigma=f["step_sigma"],
        budget=f["budget"],
        views=f["views"],
    )
    return base, sizing, cfg
