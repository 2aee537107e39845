"""Core 3D math: rotations, similarity transforms, and Euler helpers.

Conventions used throughout the package:

* Point sets are float64 arrays of shape (N, 3), one point per row.
* A similarity transform maps points as ``out = s * R @ p + t`` and is
  stored as the 3x4 matrix ``[s * R | t]``.
* Yaw is a rotation about +y, pitch a rotation about +x, composed
  intrinsically in that order.  The reference forward direction is
  (0, 0, -1), so ``yaw_pitch_rotation(y, p) @ (0, 0, -1)`` is the posed
  forward axis.
* Angles at API boundaries are degrees.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import DecompositionError, EstimationError, ParameterError

# Orthonormality slack accepted at type boundaries.  Rotations produced by
# this module are orthonormal to ~1e-12; ingested matrices get more room.
ORTHO_TOL = 1e-6


def as_unit(v, name: str = "vector", tol: float = 1e-6) -> np.ndarray:
    """Validate that ``v`` is a unit 3-vector (within ``tol``) and renormalize."""
    v = np.asarray(v, dtype=float)
    if v.shape != (3,):
        raise ParameterError(f"{name} must be a 3-vector, got shape {v.shape}")
    n = float(np.linalg.norm(v))
    if not np.isfinite(n) or abs(n - 1.0) > tol:
        raise ParameterError(f"{name} must be unit length, got |v| = {n:.6g}")
    return v / n


def as_point_set(pts, name: str = "points") -> np.ndarray:
    pts = np.asarray(pts, dtype=float)
    if pts.ndim != 2 or pts.shape[1] != 3 or pts.shape[0] < 1:
        raise ParameterError(f"{name} must have shape (N, 3) with N >= 1")
    if not np.all(np.isfinite(pts)):
        raise ParameterError(f"{name} contains non-finite values")
    return pts


def check_rotation(R, tol: float = ORTHO_TOL, name: str = "rotation") -> np.ndarray:
    """Validate a proper rotation matrix (orthonormal, det +1)."""
    R = np.asarray(R, dtype=float)
    if R.shape != (3, 3):
        raise ParameterError(f"{name} must be 3x3, got {R.shape}")
    err = np.max(np.abs(R.T @ R - np.eye(3)))
    det = float(np.linalg.det(R))
    if err > tol or abs(det - 1.0) > tol:
        raise ParameterError(
            f"{name} is not a proper rotation (orthonormality error {err:.3g}, det {det:.6g})"
        )
    return R


def _skew(v: np.ndarray) -> np.ndarray:
    return np.array(
        [
            [0.0, -v[2], v[1]],
            [v[2], 0.0, -v[0]],
            [-v[1], v[0], 0.0],
        ]
    )


def _perp_axis(a: np.ndarray) -> np.ndarray:
    # Deterministic axis perpendicular to a: project +x onto the plane
    # orthogonal to a, falling back to +y when a is close to the x axis.
    p = np.array([1.0, 0.0, 0.0]) - a[0] * a
    n = np.linalg.norm(p)
    if n < 1e-6:
        p = np.array([0.0, 1.0, 0.0]) - a[1] * a
        n = np.linalg.norm(p)
    return p / n


def rotation_between(a, b) -> np.ndarray:
    """Minimal-angle rotation R with ``R @ a == b`` for unit vectors.

    Antiparallel inputs get a 180 degree turn about a deterministic axis
    perpendicular to ``a`` (see `_perp_axis`).  Inputs within ~1e-6 of
    antiparallel resolve through the same branch; the mapping error there
    is bounded by the residual ``|a + b|``, which is tiny by definition.
    """
    a = as_unit(a, "a")
    b = as_unit(b, "b")
    h = a + b
    denom = 0.5 * float(h @ h)  # equals 1 + a.b, computed without cancellation
    if denom < 1e-12:
        axis = _perp_axis(a)
        return 2.0 * np.outer(axis, axis) - np.eye(3)
    K = _skew(np.cross(a, b))
    return np.eye(3) + K + (K @ K) / denom


def rotation_x(deg: float) -> np.ndarray:
    c, s = np.cos(np.radians(deg)), np.sin(np.radians(deg))
    return np.array([[1.0, 0.0, 0.0], [0.0, c, -s], [0.0, s, c]])


def rotation_y(deg: float) -> np.ndarray:
    c, s = np.cos(np.radians(deg)), np.sin(np.radians(deg))
    return np.array([[c, 0.0, s], [0.0, 1.0, 0.0], [-s, 0.0, c]])


def rotation_z(deg: float) -> np.ndarray:
    c, s = np.cos(np.radians(deg)), np.sin(np.radians(deg))
    return np.array([[c, -s, 0.0], [s, c, 0.0], [0.0, 0.0, 1.0]])


def axis_angle_rotation(axis, deg: float) -> np.ndarray:
    """Rotation of ``deg`` degrees about a unit ``axis`` (Rodrigues)."""
    axis = as_unit(axis, "axis")
    K = _skew(axis)
    th = np.radians(deg)
    return np.eye(3) + np.sin(th) * K + (1.0 - np.cos(th)) * (K @ K)


def random_rotation(rng: np.random.Generator) -> np.ndarray:
    """Uniform-ish random rotation: random axis, uniform angle in [0, 180)."""
    v = rng.normal(size=3)
    v /= np.linalg.norm(v)
    return axis_angle_rotation(v, rng.uniform(0.0, 180.0))


def rotation_angle_deg(R) -> float:
    """Rotation angle of R in degrees, in [0, 180]."""
    R = np.asarray(R, dtype=float)
    c = (np.trace(R) - 1.0) / 2.0
    return float(np.degrees(np.arccos(np.clip(c, -1.0, 1.0))))


def angle_between_deg(a, b) -> float:
    """Angle between two unit vectors in degrees.

    Shared scalar definition for the gaze loss and the evaluation metric;
    the dot product is clipped to [-1, 1] so identical inputs give exactly 0.
    """
    dot = float(np.dot(a, b))
    return float(np.degrees(np.arccos(np.clip(dot, -1.0, 1.0))))


def angle_between_stable_deg(a, b) -> float:
    """Angle between unit vectors via the chord length, 2 asin(|a - b| / 2).

    Unlike the arccos form, this resolves angles far below its ~1e-6 degree
    rounding floor; use it when asserting near-zero angles.
    """
    chord = 0.5 * float(np.linalg.norm(np.asarray(a, dtype=float) - np.asarray(b, dtype=float)))
    return float(np.degrees(2.0 * np.arcsin(np.clip(chord, 0.0, 1.0))))


def yaw_pitch_rotation(yaw_deg: float, pitch_deg: float) -> np.ndarray:
    return rotation_y(yaw_deg) @ rotation_x(pitch_deg)


def yaw_pitch_to_direction(yaw_deg: float, pitch_deg: float) -> np.ndarray:
    """Forward direction of the yaw/pitch pose; inverse of `direction_to_yaw_pitch`."""
    return yaw_pitch_rotation(yaw_deg, pitch_deg) @ np.array([0.0, 0.0, -1.0])


def direction_to_yaw_pitch(f) -> tuple[float, float]:
    """Yaw/pitch angles (degrees) of a forward direction vector."""
    f = as_unit(f, "forward")
    pitch = np.degrees(np.arcsin(np.clip(f[1], -1.0, 1.0)))
    if 1.0 - f[1] * f[1] < 1e-24:
        yaw = 0.0  # gimbal: pin yaw
    else:
        yaw = np.degrees(np.arctan2(-f[0], -f[2]))
    return float(yaw), float(pitch)


def euler_yaw_pitch(R) -> tuple[float, float]:
    """Yaw in [-180, 180] and pitch in [-90, 90] of a rotation, roll ignored.

    Defined through the posed forward axis ``R @ (0, 0, -1)``, so any roll
    component about that axis does not affect the result.
    """
    R = np.asarray(R, dtype=float)
    forward = -R[:, 2]
    return direction_to_yaw_pitch(forward / np.linalg.norm(forward))


@dataclass(frozen=True)
class SimilarityTransform:
    """Scale + rotation + translation, stored as the 3x4 matrix [s*R | t]."""

    matrix: np.ndarray

    def __post_init__(self):
        m = np.asarray(self.matrix, dtype=float)
        if m.shape != (3, 4):
            raise ParameterError(f"transform matrix must be 3x4, got {m.shape}")
        if not np.all(np.isfinite(m)):
            raise ParameterError("transform matrix contains non-finite values")
        m = m.copy()
        m.setflags(write=False)
        object.__setattr__(self, "matrix", m)

    @classmethod
    def from_parts(cls, scale: float, rotation, translation) -> "SimilarityTransform":
        if not np.isfinite(scale) or scale <= 0.0:
            raise ParameterError(f"scale must be positive, got {scale}")
        R = check_rotation(rotation)
        t = np.asarray(translation, dtype=float).reshape(3)
        return cls(np.hstack([scale * R, t[:, None]]))

    @classmethod
    def identity(cls) -> "SimilarityTransform":
        return cls.from_parts(1.0, np.eye(3), np.zeros(3))

    @property
    def scale(self) -> float:
        return decompose(self)[0]

    @property
    def rotation(self) -> np.ndarray:
        return decompose(self)[1]

    @property
    def translation(self) -> np.ndarray:
        return self.matrix[:, 3].copy()

    def apply(self, pts) -> np.ndarray:
        pts = as_point_set(pts)
        return pts @ self.matrix[:, :3].T + self.matrix[:, 3]

    def compose(self, inner: "SimilarityTransform") -> "SimilarityTransform":
        """self after inner: ``compose(p2, p1).apply(x) == p2.apply(p1.apply(x))``."""
        a, b = self.matrix, inner.matrix
        linear = a[:, :3] @ b[:, :3]
        t = a[:, :3] @ b[:, 3] + a[:, 3]
        return SimilarityTransform(np.hstack([linear, t[:, None]]))


def decompose(p: SimilarityTransform) -> tuple[float, np.ndarray, np.ndarray]:
    """Split ``[s*R | t]`` into (s, R, t); s is the cube root of det of the block."""
    A = p.matrix[:, :3]
    det = float(np.linalg.det(A))
    if det <= 0.0:
        raise DecompositionError(f"linear block has det {det:.6g}; reflection or degenerate")
    s = det ** (1.0 / 3.0)
    R = A / s
    err = np.max(np.abs(R.T @ R - np.eye(3)))
    if err > ORTHO_TOL:
        raise DecompositionError(f"linear block is not a scaled rotation (error {err:.3g})")
    return s, R, p.matrix[:, 3].copy()


def apply_transform(p: SimilarityTransform, pts) -> np.ndarray:
    return p.apply(pts)


def estimate_similarity(src, dst) -> SimilarityTransform:
    """Least-squares similarity aligning ``src`` onto ``dst``.

    Closed-form solution through the SVD of the cross-covariance with
    reflection correction, minimizing ``sum |s R src_i + t - dst_i|^2``
    with det(R) = +1.
    """
    src = as_point_set(src, "src")
    dst = as_point_set(dst, "dst")
    if src.shape != dst.shape:
        raise EstimationError(f"point counts differ: {src.shape[0]} vs {dst.shape[0]}")
    n = src.shape[0]
    if n < 3:
        raise EstimationError(f"need at least 3 point pairs, got {n}")

    mu_s = src.mean(axis=0)
    mu_d = dst.mean(axis=0)
    X = src - mu_s
    Y = dst - mu_d

    sx = np.linalg.svd(X, compute_uv=False)
    if sx[1] <= 1e-9 * max(sx[0], 1.0):
        raise EstimationError("source points are collinear or degenerate")

    var_s = float(np.sum(X * X)) / n
    cov = (Y.T @ X) / n
    U, S, Vt = np.linalg.svd(cov)
    d = 1.0 if np.linalg.det(U @ Vt) >= 0.0 else -1.0
    R = U @ np.diag([1.0, 1.0, d]) @ Vt
    s = float(S[0] + S[1] + d * S[2]) / var_s
    if s <= 0.0:
        raise EstimationError(f"estimated non-positive scale {s:.6g}")
    t = mu_d - s * (R @ mu_s)
    return SimilarityTransform.from_parts(s, R, t)
