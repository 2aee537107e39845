"""Gaze directions from eye meshes, fusion, and angular-error reporting."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np

from .errors import ParameterError
from .geometry import angle_between_deg, as_unit
from .labeling import EyeMesh


def gaze_from_mesh(mesh: EyeMesh) -> np.ndarray:
    """Unit gaze direction: from the eyeball center through the iris centroid.

    The center comes from the stored rigid pose; the raw vertex centroid is
    biased toward the anterior side by the open posterior pole.  Use
    `fit_sphere_center` when only raw vertices are available.
    """
    iris_idx = mesh.template.region_labels["iris"]
    iris_center = mesh.vertices[iris_idx].mean(axis=0)
    d = iris_center - mesh.center
    n = np.linalg.norm(d)
    if n < 1e-12:
        raise ParameterError("degenerate mesh: iris centroid coincides with the center")
    return d / n


def fit_sphere_center(vertices: np.ndarray) -> np.ndarray:
    """Least-squares sphere center of a point cloud (linear algebraic fit)."""
    v = np.asarray(vertices, dtype=float)
    if v.ndim != 2 or v.shape[1] != 3 or v.shape[0] < 4:
        raise ParameterError("need at least 4 points of shape (N, 3)")
    # |x - c|^2 = r^2  <=>  2 x.c + (r^2 - |c|^2) = |x|^2, linear in (c, k).
    A = np.hstack([2.0 * v, np.ones((v.shape[0], 1))])
    b = np.sum(v * v, axis=1)
    sol, *_ = np.linalg.lstsq(A, b, rcond=None)
    return sol[:3]


def fuse_gaze(left, right, direct=None) -> np.ndarray:
    """Combine per-eye mesh gazes (vector sum) and optionally a direct
    prediction (equal-weight mean with the mesh result), renormalized."""
    left = as_unit(left, "left")
    right = as_unit(right, "right")
    combined = left + right
    n = np.linalg.norm(combined)
    if n < 1e-9:
        raise ParameterError("left and right gazes cancel; cannot fuse")
    mesh_mean = combined / n
    if direct is None:
        return mesh_mean
    direct = as_unit(direct, "direct")
    total = mesh_mean + direct
    n = np.linalg.norm(total)
    if n < 1e-9:
        raise ParameterError("direct gaze opposes the mesh gaze; cannot fuse")
    return total / n


def angular_error(g, g_star) -> float:
    """Angle between prediction and reference in degrees (same scalar
    definition as the gaze loss)."""
    g = as_unit(g, "g", tol=1e-3)
    g_star = as_unit(g_star, "g_star", tol=1e-3)
    return angle_between_deg(g, g_star)


@dataclass
class YawBinRow:
    max_yaw_deg: float
    mean_error_deg: Optional[float]  # None when the bin is empty
    count: int


def yaw_binned_report(errors, bins) -> list[YawBinRow]:
    """Mean error per cumulative |yaw| bin.

    ``errors`` is a sequence of (yaw_degrees, error_degrees) pairs and
    ``bins`` a strictly increasing sequence of max-yaw thresholds.  Empty
    bins report ``mean_error_deg = None`` rather than zero.
    """
    bins = [float(b) for b in bins]
    if any(b2 <= b1 for b1, b2 in zip(bins, bins[1:])):
        raise ParameterError("bin thresholds must be strictly increasing")
    pairs = [(float(y), float(e)) for y, e in errors]
    rows = []
    for b in bins:
        selected = [e for y, e in pairs if abs(y) < b]
        mean = float(np.mean(selected)) if selected else None
        rows.append(YawBinRow(max_yaw_deg=b, mean_error_deg=mean, count=len(selected)))
    return rows
