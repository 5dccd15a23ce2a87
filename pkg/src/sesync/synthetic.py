"""Cube-world pose graphs: a robot sweeping a regular lattice with noisy odometry
and random loop closures between lattice neighbours."""

from __future__ import annotations

import json
import math
import os
from dataclasses import asdict, dataclass

import numpy as np
from scipy.spatial.transform import Rotation

from .graph import MeasurementGraph, Pose, RelativePoseMeasurement, relative_pose, rotation_2d
from .langevin import LangevinParams, sample_langevin


@dataclass(frozen=True)
class CubeConfig:
    """Generator settings; ``d = 2`` gives the planar s x s grid variant."""

    s: int = 10
    p_lc: float = 0.1
    kappa: float = 16.67
    tau: float = 75.0
    seed: int = 0
    d: int = 3
    noiseless: bool = False

    def __post_init__(self):
        if self.s < 2:
            raise ValueError("side length s must be at least 2")
        if not 0.0 <= self.p_lc <= 1.0:
            raise ValueError("loop-closure probability must lie in [0, 1]")
        if not self.kappa >= 0 or not self.tau > 0:
            raise ValueError("need kappa >= 0 and tau > 0")
        if self.d not in (2, 3):
            raise ValueError("d must be 2 or 3")

    def to_dict(self) -> dict:
        return asdict(self)


def boustrophedon_path(s: int, d: int = 3) -> np.ndarray:
    """Lattice points of {0..s-1}^d in snake order (x fastest, then y, then z)."""
    pts = []
    row = 0
    for z in range(s if d == 3 else 1):
        ys = range(s) if z % 2 == 0 else range(s - 1, -1, -1)
        for y in ys:
            xs = range(s) if row % 2 == 0 else range(s - 1, -1, -1)
            for x in xs:
                pts.append((x, y, z)[:d])
            row += 1
    return np.array(pts, dtype=float)


def loop_closure_candidates(points: np.ndarray) -> list[tuple[int, int]]:
    """Lattice-adjacent pairs (i < j) that are not consecutive along the path."""
    index = {tuple(p.astype(int)): k for k, p in enumerate(points)}
    d = points.shape[1]
    pairs = []
    for i, p in enumerate(points.astype(int)):
        for axis in range(d):
            q = p.copy()
            q[axis] += 1
            j = index.get(tuple(q))
            if j is None or abs(i - j) == 1:
                continue
            pairs.append((min(i, j), max(i, j)))
    return sorted(pairs)


def expected_candidate_count(s: int, d: int = 3) -> int:
    """Adjacent lattice pairs minus the s^d - 1 odometry pairs."""
    return d * s ** (d - 1) * (s - 1) - (s ** d - 1)


def _random_rotation(d: int, rng: np.random.Generator) -> np.ndarray:
    if d == 2:
        return rotation_2d(rng.uniform(-math.pi, math.pi))
    return Rotation.random(random_state=rng).as_matrix()


def sample_measurement(xi: Pose, xj: Pose, kappa: float, tau: float, rng: np.random.Generator | None,
                       tail: int = 0, head: int = 1, noiseless: bool = False) -> RelativePoseMeasurement:
    """Noisy relative transform from ``xi`` to ``xj``.

    Translation noise is N(0, I/tau); the rotation is right-multiplied by a
    Langevin(I, kappa) draw. With ``noiseless`` the exact transform is returned
    (tau and kappa are still recorded as weights).
    """
    rel = relative_pose(xi, xj)
    d = xi.d
    t, R = rel.t, rel.R
    if not noiseless:
        t = t + rng.standard_normal(d) / math.sqrt(tau)
        R = R @ sample_langevin(LangevinParams(np.eye(d), kappa), rng)
    return RelativePoseMeasurement(tail, head, t, R, tau, kappa)


def generate_cube(cfg: CubeConfig) -> tuple[MeasurementGraph, list[Pose]]:
    """Sample a cube-world graph and its ground truth."""
    rng = np.random.default_rng(cfg.seed)
    pts = boustrophedon_path(cfg.s, cfg.d)
    n = len(pts)
    truth = [Pose(pts[i], _random_rotation(cfg.d, rng)) for i in range(n)]
    pairs = [(i, i + 1) for i in range(n - 1)]
    for i, j in loop_closure_candidates(pts):
        if rng.random() < cfg.p_lc:
            pairs.append((i, j))
    edges = [
        sample_measurement(truth[i], truth[j], cfg.kappa, cfg.tau, rng, i, j, cfg.noiseless)
        for i, j in pairs
    ]
    return MeasurementGraph(n, tuple(edges), cfg.d), truth


def poses_to_records(poses: list[Pose]) -> list[dict]:
    return [{"t": p.t.tolist(), "R": p.R.tolist()} for p in poses]


def write_ground_truth(path: str | os.PathLike, poses: list[Pose], cfg: CubeConfig | None = None):
    data = {"schema": 1, "poses": poses_to_records(poses)}
    if cfg is not None:
        data["config"] = cfg.to_dict()
    with open(path, "w") as fh:
        json.dump(data, fh, indent=2)


def read_ground_truth(path: str | os.PathLike) -> list[Pose]:
    with open(path) as fh:
        data = json.load(fh)
    return [Pose(np.array(r["t"]), np.array(r["R"])) for r in data["poses"]]
