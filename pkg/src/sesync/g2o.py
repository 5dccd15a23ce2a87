"""Reading and writing pose graphs in the g2o text format.

Supported records::

    VERTEX_SE2 id x y theta
    VERTEX_SE3:QUAT id x y z qx qy qz qw
    EDGE_SE2 i j dx dy dtheta I11 I12 I13 I22 I23 I33
    EDGE_SE3:QUAT i j dx dy dz qx qy qz qw <21 upper-triangular information entries>

``FIX`` records are accepted and ignored. Anisotropic information matrices are
collapsed to the isotropic (tau, kappa) model by averaging diagonals, see
:func:`precisions_from_information`.
"""

from __future__ import annotations

import os
from typing import Sequence

import numpy as np
from scipy.spatial.transform import Rotation

from .graph import MeasurementGraph, Pose, RelativePoseMeasurement, angle_2d, rotation_2d

QUAT_NORM_TOL = 1e-6

# tau = mean of the translational information diagonal,
# kappa = ROTATION_INFO_TO_KAPPA * mean of the rotational information diagonal
ROTATION_INFO_TO_KAPPA = 0.5

_EDGE_FIELDS = {"EDGE_SE2": 3 + 6, "EDGE_SE3:QUAT": 7 + 21}
_VERTEX_FIELDS = {"VERTEX_SE2": 3, "VERTEX_SE3:QUAT": 7}
_IGNORED = {"FIX"}


class G2OParseError(ValueError):
    def __init__(self, message: str, lineno: int | None = None):
        self.lineno = lineno
        super().__init__(f"line {lineno}: {message}" if lineno is not None else message)


def upper_triangle_to_matrix(values: Sequence[float], size: int) -> np.ndarray:
    """Symmetric matrix from its row-major upper triangle."""
    M = np.zeros((size, size))
    M[np.triu_indices(size)] = values
    return M + np.triu(M, 1).T


def matrix_to_upper_triangle(M: np.ndarray) -> np.ndarray:
    return M[np.triu_indices(M.shape[0])]


def precisions_from_information(info: np.ndarray, d: int) -> tuple[float, float]:
    """Collapse a (translation, rotation)-ordered information matrix to (tau, kappa)."""
    diag = np.diag(info)
    tau = float(np.mean(diag[:d]))
    kappa = ROTATION_INFO_TO_KAPPA * float(np.mean(diag[d:]))
    return tau, kappa


def information_from_precisions(tau: float, kappa: float, d: int) -> np.ndarray:
    rot_dim = 1 if d == 2 else 3
    return np.diag(np.r_[np.full(d, tau), np.full(rot_dim, kappa / ROTATION_INFO_TO_KAPPA)])


def quaternion_to_rotation(q: Sequence[float], lineno: int | None = None) -> np.ndarray:
    """Hamilton quaternion ``(qx, qy, qz, qw)`` to a rotation matrix."""
    q = np.asarray(q, dtype=float)
    norm = np.linalg.norm(q)
    if abs(norm - 1.0) >= QUAT_NORM_TOL:
        raise G2OParseError(f"quaternion norm {norm:.9g} is not 1", lineno)
    return Rotation.from_quat(q / norm).as_matrix()


def rotation_to_quaternion(R: np.ndarray) -> np.ndarray:
    q = Rotation.from_matrix(R).as_quat()
    # canonical sign: qw >= 0
    return -q if q[3] < 0 else q


def parse_g2o(path: str | os.PathLike) -> MeasurementGraph:
    """Read a g2o file into a :class:`MeasurementGraph`.

    Vertex ids are remapped to contiguous indices in order of first
    appearance; vertices referenced only by edges are created implicitly.
    """
    ids: dict[int, int] = {}
    initial: dict[int, Pose] = {}
    edges: list[RelativePoseMeasurement] = []
    dim: int | None = None

    def index(vid: int) -> int:
        if vid not in ids:
            ids[vid] = len(ids)
        return ids[vid]

    def set_dim(tag_dim: int, lineno: int):
        nonlocal dim
        if dim is None:
            dim = tag_dim
        elif dim != tag_dim:
            raise G2OParseError("mixed SE(2) and SE(3) records", lineno)

    with open(path) as fh:
        for lineno, line in enumerate(fh, start=1):
            tokens = line.split()
            if not tokens or tokens[0].startswith("#"):
                continue
            tag = tokens[0]
            if tag in _IGNORED:
                continue
            if tag not in _EDGE_FIELDS and tag not in _VERTEX_FIELDS:
                raise G2OParseError(f"unsupported tag {tag!r}", lineno)
            expected = _EDGE_FIELDS.get(tag, _VERTEX_FIELDS.get(tag))
            n_ids = 2 if tag in _EDGE_FIELDS else 1
            if len(tokens) != 1 + n_ids + expected:
                raise G2OParseError(
                    f"{tag} expects {n_ids + expected} fields, got {len(tokens) - 1}", lineno
                )
            try:
                vids = [int(tok) for tok in tokens[1 : 1 + n_ids]]
                vals = np.array([float(tok) for tok in tokens[1 + n_ids :]])
            except ValueError as exc:
                raise G2OParseError(f"malformed number ({exc})", lineno) from None
            if not np.all(np.isfinite(vals)):
                raise G2OParseError("non-finite value", lineno)

            if tag == "VERTEX_SE2":
                set_dim(2, lineno)
                initial[index(vids[0])] = Pose(vals[:2], rotation_2d(vals[2]))
            elif tag == "VERTEX_SE3:QUAT":
                set_dim(3, lineno)
                initial[index(vids[0])] = Pose(vals[:3], quaternion_to_rotation(vals[3:7], lineno))
            else:
                if vids[0] == vids[1]:
                    raise G2OParseError(f"self-loop on vertex {vids[0]}", lineno)
                if tag == "EDGE_SE2":
                    set_dim(2, lineno)
                    t, R = vals[:2], rotation_2d(vals[2])
                    info = upper_triangle_to_matrix(vals[3:], 3)
                    d = 2
                else:
                    set_dim(3, lineno)
                    t, R = vals[:3], quaternion_to_rotation(vals[3:7], lineno)
                    info = upper_triangle_to_matrix(vals[7:], 6)
                    d = 3
                tau, kappa = precisions_from_information(info, d)
                try:
                    edges.append(
                        RelativePoseMeasurement(index(vids[0]), index(vids[1]), t, R, tau, kappa)
                    )
                except ValueError as exc:
                    raise G2OParseError(str(exc), lineno) from None

    if dim is None:
        raise G2OParseError("file contains no vertices or edges")
    vertex_ids = tuple(sorted(ids, key=ids.get))
    return MeasurementGraph(len(ids), tuple(edges), dim, vertex_ids, initial)


def _fmt(x: float) -> str:
    return repr(float(x))


def write_g2o(
    g: MeasurementGraph,
    path: str | os.PathLike,
    ground_truth: Sequence[Pose] | None = None,
) -> None:
    """Write ``g`` (and optionally one VERTEX record per pose) to ``path``."""
    def vid(i: int):
        v = g.vertex_ids[i]
        return v if isinstance(v, (int, np.integer)) else i

    lines: list[str] = []
    if ground_truth is not None:
        if len(ground_truth) != g.n:
            raise ValueError("ground truth must contain one pose per vertex")
        for i, pose in enumerate(ground_truth):
            if g.d == 2:
                vals = [*pose.t, angle_2d(pose.R)]
                lines.append(" ".join(["VERTEX_SE2", str(vid(i)), *map(_fmt, vals)]))
            else:
                vals = [*pose.t, *rotation_to_quaternion(pose.R)]
                lines.append(" ".join(["VERTEX_SE3:QUAT", str(vid(i)), *map(_fmt, vals)]))
    for e in g.edges:
        info = matrix_to_upper_triangle(information_from_precisions(e.tau, e.kappa, g.d))
        if g.d == 2:
            vals = [*e.translation, angle_2d(e.rotation), *info]
            tag = "EDGE_SE2"
        else:
            vals = [*e.translation, *rotation_to_quaternion(e.rotation), *info]
            tag = "EDGE_SE3:QUAT"
        lines.append(" ".join([tag, str(vid(e.tail)), str(vid(e.head)), *map(_fmt, vals)]))
    with open(path, "w") as fh:
        fh.write("\n".join(lines) + "\n")
