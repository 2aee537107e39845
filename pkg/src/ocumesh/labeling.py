"""Eye mesh poses and the label-generation pipelines.

Two pipelines produce supervision targets:

* `fit_gt_eyeball` places the template from sparse 2D iris landmarks plus
  a known gaze direction (exact ground truth).
* `pseudo_label` places both eyeballs from 3D face anchors and 2D iris
  points alone, with no gaze information: align the template to the face,
  lift the 2D iris onto the aligned surface by nearest xy vertex, then
  rotate the eyeball so its axis passes through the lifted iris center.

All image-space reasoning is orthographic: x/y are image coordinates and
z is depth, increasing away from the camera.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from . import geometry
from .errors import FitError, ParameterError
from .geometry import as_unit, estimate_similarity, rotation_between
from .template import EyeballTemplate

SIDES = ("left", "right")


@dataclass
class EyeMesh:
    """A rigid-similarity pose of the template: vertices = center + scale * R @ M.

    Vertices and edge lengths are derived on demand from the compact pose,
    which keeps large sample sets cheap to hold in memory.
    """

    template: EyeballTemplate
    side: str
    center: np.ndarray  # (3,)
    scale: float
    rotation: np.ndarray  # (3, 3)

    def __post_init__(self):
        if self.side not in SIDES:
            raise ParameterError(f"side must be one of {SIDES}, got {self.side!r}")
        if self.side != self.template.side:
            raise ParameterError(
                f"mesh side {self.side!r} does not match template side {self.template.side!r}"
            )
        self.center = np.asarray(self.center, dtype=float).reshape(3)
        if not np.all(np.isfinite(self.center)):
            raise ParameterError("center contains non-finite values")
        if not np.isfinite(self.scale) or self.scale <= 0.0:
            raise ParameterError(f"scale must be positive, got {self.scale}")
        self.rotation = geometry.check_rotation(self.rotation)
        self._vertices_cache = None

    @property
    def vertices(self) -> np.ndarray:
        if self._vertices_cache is None:
            self._vertices_cache = (
                self.center + self.scale * (self.template.vertices @ self.rotation.T)
            )
        return self._vertices_cache

    @property
    def edge_lengths(self) -> np.ndarray:
        # A rigid similarity pose scales every template edge uniformly.
        return self.scale * self.template.unit_edge_lengths

    @classmethod
    def from_vertices(
        cls,
        template: EyeballTemplate,
        side: str,
        vertices: np.ndarray,
        rigidity_tol: float = 1e-6,
    ) -> "EyeMesh":
        """Recover the pose of raw vertices; rejects non-rigid deformations."""
        vertices = np.asarray(vertices, dtype=float)
        if vertices.shape != template.vertices.shape:
            raise ParameterError(
                f"expected vertices of shape {template.vertices.shape}, got {vertices.shape}"
            )
        p = estimate_similarity(template.vertices, vertices)
        s, R, t = geometry.decompose(p)
        residual = np.sqrt(np.mean(np.sum((p.apply(template.vertices) - vertices) ** 2, axis=1)))
        if residual > rigidity_tol * s:
            raise ParameterError(
                f"vertices are not a rigid pose of the template (residual {residual:.3g})"
            )
        return cls(template=template, side=side, center=t, scale=s, rotation=R)


@dataclass
class RawEyeMesh:
    """Free-vertex eye mesh sharing the template topology.

    Unlike `EyeMesh` it carries arbitrary vertices (no rigidity guarantee);
    losses accept it interchangeably, which is how non-rigid predictions
    from external systems are evaluated.
    """

    template: EyeballTemplate
    side: str
    vertices: np.ndarray

    def __post_init__(self):
        if self.side not in SIDES:
            raise ParameterError(f"side must be one of {SIDES}, got {self.side!r}")
        self.vertices = np.asarray(self.vertices, dtype=float)
        if self.vertices.shape != self.template.vertices.shape:
            raise ParameterError(
                f"expected vertices of shape {self.template.vertices.shape}, "
                f"got {self.vertices.shape}"
            )
        if not np.all(np.isfinite(self.vertices)):
            raise ParameterError("vertices contain non-finite values")

    @property
    def edge_lengths(self) -> np.ndarray:
        return self.template.edge_lengths_of(self.vertices)


@dataclass
class EyeMeshPair:
    left: EyeMesh
    right: EyeMesh

    def __post_init__(self):
        if self.left.side != "left" or self.right.side != "right":
            raise ParameterError("pair sides must be (left, right)")

    def eye(self, side: str) -> EyeMesh:
        return self.left if side == "left" else self.right


@dataclass
class EyeAnchors:
    """Per-eye observations: two corner points, the eye-region centroid, and
    K 2D iris landmarks in pixels."""

    corners: np.ndarray  # (2, 3)
    centroid: np.ndarray  # (3,)
    iris_2d: np.ndarray  # (K, 2)

    def __post_init__(self):
        self.corners = np.asarray(self.corners, dtype=float).reshape(2, 3)
        self.centroid = np.asarray(self.centroid, dtype=float).reshape(3)
        self.iris_2d = np.asarray(self.iris_2d, dtype=float)
        if self.iris_2d.ndim != 2 or self.iris_2d.shape[1] != 2:
            raise ParameterError("iris_2d must have shape (K, 2)")
        for arr in (self.corners, self.centroid, self.iris_2d):
            if not np.all(np.isfinite(arr)):
                raise ParameterError("anchors contain non-finite values")


@dataclass
class FaceAnchors:
    """Face-level observation bundle consumed by the labeling pipelines.

    ``forward`` is the face-forward axis delivered by upstream 3D face
    alignment (equivalently the head pose); the pseudo-label pipeline
    needs it to orient the aligned eyeballs.
    """

    left: EyeAnchors
    right: EyeAnchors
    forward: np.ndarray  # unit 3-vector
    gaze: Optional[np.ndarray] = None  # optional gaze label

    def __post_init__(self):
        self.forward = as_unit(self.forward, "forward")
        if self.gaze is not None:
            self.gaze = as_unit(self.gaze, "gaze")

    def eye(self, side: str) -> EyeAnchors:
        return self.left if side == "left" else self.right


@dataclass
class PseudoLabelDiagnostics:
    correction_angle_deg: dict[str, float]
    lift_residual: dict[str, float]
    warnings: list[str] = field(default_factory=list)


@dataclass
class LabeledSample:
    """Feature vector plus (pseudo-)labels for one training sample."""

    sample_id: str
    feature: np.ndarray
    eyes: EyeMeshPair
    gaze: np.ndarray
    head_pose: tuple[float, float]  # (yaw, pitch) degrees, used for binning
    kind: str  # "gt" or "pseudo"


def template_iris_radius(template: EyeballTemplate) -> float:
    """RMS radius of the iris border ring about its centroid, in template units."""
    ring = template.vertices[template.region_labels["iris_border"]]
    centered = ring - ring.mean(axis=0)
    return float(np.sqrt(np.mean(np.sum(centered**2, axis=1))))


def fit_gt_eyeball(
    iris_2d: np.ndarray,
    gaze: np.ndarray,
    side: str,
    template: EyeballTemplate,
) -> EyeMesh:
    """Exact eyeball placement from iris landmarks and a known gaze.

    Scale comes from the RMS radius of the landmarks against the template
    iris ring; the center sits one (scaled) apex distance behind the 2D
    iris centroid along the gaze ray, putting the apex in the z = 0 plane;
    orientation is the minimal rotation taking the optical axis to gaze.
    """
    gaze = as_unit(gaze, "gaze")
    iris_2d = np.asarray(iris_2d, dtype=float)
    if iris_2d.ndim != 2 or iris_2d.shape[1] != 2:
        raise ParameterError("iris_2d must have shape (K, 2)")
    if iris_2d.shape[0] < 3:
        raise FitError(f"need at least 3 iris landmarks, got {iris_2d.shape[0]}")

    centroid = iris_2d.mean(axis=0)
    centered = iris_2d - centroid
    sv = np.linalg.svd(centered, compute_uv=False)
    r_rms = float(np.sqrt(np.mean(np.sum(centered**2, axis=1))))
    if r_rms <= 0.0 or sv[1] <= 1e-9 * max(sv[0], 1.0):
        raise FitError("iris landmarks are collinear or coincident")

    scale = r_rms / template_iris_radius(template)
    apex_depth = float(np.linalg.norm(template.vertices[0]))  # 1 for unit templates
    center = np.array([centroid[0], centroid[1], 0.0]) - scale * apex_depth * gaze
    rotation = rotation_between(template.optical_axis, gaze)
    return EyeMesh(template=template, side=side, center=center, scale=scale, rotation=rotation)


def lift_to_3d(points_2d: np.ndarray, mesh: EyeMesh) -> tuple[np.ndarray, np.ndarray]:
    """Snap 2D points to the nearest anterior mesh vertices in x/y.

    Only vertices whose outward normal faces the camera (normal z < 0)
    participate; without the restriction, posterior vertices at similar
    x/y can win.  Ties break to the lowest vertex index.
    """
    points_2d = np.asarray(points_2d, dtype=float)
    if points_2d.ndim != 2 or points_2d.shape[1] != 2 or points_2d.shape[0] < 1:
        raise ParameterError("points_2d must have shape (M, 2) with M >= 1")
    vertices = mesh.vertices
    anterior = np.nonzero(vertices[:, 2] - mesh.center[2] < 0.0)[0]
    cand = vertices[anterior]
    d2 = (cand[None, :, 0] - points_2d[:, 0, None]) ** 2 + (
        cand[None, :, 1] - points_2d[:, 1, None]
    ) ** 2
    picks = anterior[np.argmin(d2, axis=1)]  # argmin keeps the lowest index on ties
    return picks, vertices[picks]


def _aligned_eyeball(anchors: EyeAnchors, forward: np.ndarray, template: EyeballTemplate,
                     side: str) -> EyeMesh:
    # Eyeball diameter spans the eye opening: scale = half the corner gap.
    scale = 0.5 * float(np.linalg.norm(anchors.corners[0] - anchors.corners[1]))
    if scale <= 0.0:
        raise ParameterError("eye corners coincide; cannot derive scale")
    rotation = rotation_between(template.optical_axis, forward)
    return EyeMesh(template=template, side=side, center=anchors.centroid,
                   scale=scale, rotation=rotation)


def pseudo_label(
    anchors: FaceAnchors,
    templates: dict[str, EyeballTemplate],
) -> tuple[EyeMeshPair, PseudoLabelDiagnostics]:
    """Eyeball placement without gaze information.

    Per eye: (1) align the template to the face (center at the eye-region
    centroid, scale from the corner distance, orientation from the face
    forward axis); (2) lift the 2D iris onto the aligned surface; (3)
    rotate the eyeball so its iris-center direction matches the lifted
    iris-center direction, both measured from the eyeball center.
    """
    meshes: dict[str, EyeMesh] = {}
    corrections: dict[str, float] = {}
    residuals: dict[str, float] = {}
    warnings: list[str] = []

    for side in SIDES:
        eye = anchors.eye(side)
        if eye.iris_2d.shape[0] < 1:
            raise ParameterError(f"{side} eye has no iris landmarks")
        template = templates[side]
        aligned = _aligned_eyeball(eye, anchors.forward, template, side)

        _, lifted_pts = lift_to_3d(eye.iris_2d, aligned)
        residuals[side] = float(
            np.mean(np.linalg.norm(lifted_pts[:, :2] - eye.iris_2d, axis=1))
        )
        radial = np.linalg.norm(eye.iris_2d - aligned.center[:2], axis=1)
        if np.all(radial > aligned.scale):
            warnings.append(
                f"{side}: iris landmarks fall outside the eyeball footprint; "
                "nearest silhouette vertices used"
            )

        iris_center_2d = eye.iris_2d.mean(axis=0, keepdims=True)
        _, lifted_center = lift_to_3d(iris_center_2d, aligned)
        target_dir = lifted_center[0] - aligned.center
        target_dir /= np.linalg.norm(target_dir)
        # Direction of the aligned iris centroid from the center is the
        # face forward axis itself (the iris centroid sits on the axis).
        correction = rotation_between(anchors.forward, target_dir)
        corrections[side] = geometry.rotation_angle_deg(correction)
        meshes[side] = EyeMesh(
            template=template,
            side=side,
            center=aligned.center,
            scale=aligned.scale,
            rotation=correction @ aligned.rotation,
        )

    pair = EyeMeshPair(left=meshes["left"], right=meshes["right"])
    diag = PseudoLabelDiagnostics(
        correction_angle_deg=corrections, lift_residual=residuals, warnings=warnings
    )
    return pair, diag


def verify_rigidity(mesh: EyeMesh, template: EyeballTemplate) -> float:
    """Per-vertex RMS residual of the best similarity fit of the template."""
    if template.side != mesh.side:
        raise ParameterError("template side does not match mesh side")
    p = estimate_similarity(template.vertices, mesh.vertices)
    residual = p.apply(template.vertices) - mesh.vertices
    return float(np.sqrt(np.mean(np.sum(residual**2, axis=1))))
