"""Shared fixtures: small random pose graphs with known ground truth."""

from __future__ import annotations

import numpy as np
import pytest

from sesync.graph import MeasurementGraph, Pose
from sesync.synthetic import _random_rotation, sample_measurement

ACCEPTANCE_LINES: list[str] = []


def random_poses(n: int, d: int, rng: np.random.Generator, spread: float = 3.0) -> list[Pose]:
    return [Pose(spread * rng.standard_normal(d), _random_rotation(d, rng)) for _ in range(n)]


def random_graph(
    n: int,
    d: int,
    seed: int = 0,
    extra_edges: int | None = None,
    noiseless: bool = True,
    kappa: float | tuple[float, float] = (0.5, 5.0),
    tau: float | tuple[float, float] = (0.5, 5.0),
) -> tuple[MeasurementGraph, list[Pose]]:
    """Random connected graph: a random tree plus ``extra_edges`` chords.

    Edge weights are drawn uniformly from the given ranges; with
    ``noiseless=False`` measurements get noise at the drawn precisions.
    """
    rng = np.random.default_rng(seed)
    truth = random_poses(n, d, rng)
    if extra_edges is None:
        extra_edges = int(rng.integers(0, n + 1))
    pairs = []
    for v in range(1, n):
        u = int(rng.integers(0, v))
        pairs.append((u, v) if rng.random() < 0.5 else (v, u))
    for _ in range(extra_edges):
        i, j = rng.choice(n, size=2, replace=False)
        pairs.append((int(i), int(j)))

    def draw(spec):
        return float(rng.uniform(*spec)) if isinstance(spec, tuple) else float(spec)

    edges = []
    for i, j in pairs:
        k, t = draw(kappa), draw(tau)
        edges.append(sample_measurement(truth[i], truth[j], k, t, rng, i, j, noiseless))
    return MeasurementGraph(n, tuple(edges), d), truth


def rotations_of(poses) -> np.ndarray:
    return np.hstack([p.R for p in poses])


def translations_of(poses) -> np.ndarray:
    return np.array([p.t for p in poses])


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
