"""Deterministic synthetic oracle world.

Generates desk-scale subjects with exact 3D eyeball poses, orthographic
landmark observations with configurable noise, and multi-view pairs with
exactly known inter-view transforms.  It stands in for image datasets and
view synthesis: every quantity a real pipeline would estimate from pixels
(anchors, iris landmarks, head pose) is emitted as a noisy observation,
while the clean truth is kept alongside for evaluation only.

Observation model (orthographic, x/y in pixels, z depth): the iris is
reported as K points on an ellipse centered at the projected apex with
the template iris radius, foreshortened along the gaze direction.  The
feature vector is a fixed-length stand-in for CNN features, computed from
noisy observations only: per-eye iris offsets expressed in the projected
eye-axis frame, the 3D inter-corner axes, head-pose sines/cosines, and an
observation-context tail (eye centroids and scales) consumed by the model
decoder.

Randomness is counter-based: every stream is a Philox generator keyed on
(seed, stream salt, element index), so generation is order-independent
and reproducible across platforms, and draws happen in a fixed field
order regardless of the noise settings.
"""

from __future__ import annotations

from dataclasses import dataclass, replace
from typing import Optional

import numpy as np

from .errors import ParameterError
from .geometry import (
    SimilarityTransform,
    axis_angle_rotation,
    direction_to_yaw_pitch,
    rotation_between,
    rotation_x,
    rotation_y,
    yaw_pitch_rotation,
)
from .labeling import (
    EyeAnchors,
    EyeMesh,
    EyeMeshPair,
    FaceAnchors,
    LabeledSample,
)
from .template import EyeballTemplate, default_templates

# Feature vector layout.  The first NET_INPUT_DIM entries feed the
# regressor; the tail is observation context used by the pose decoder.
FEATURE_LAYOUT = {
    "iris_offset_left": slice(0, 2),
    "iris_offset_right": slice(2, 4),
    "axis_left": slice(4, 7),
    "axis_right": slice(7, 10),
    "head_sincos": slice(10, 14),  # sin/cos yaw, sin/cos pitch
    "centroid_left": slice(14, 17),
    "centroid_right": slice(17, 20),
    "scale_left": slice(20, 21),
    "scale_right": slice(21, 22),
}
NET_INPUT_DIM = 14
FEATURE_DIM = 22

# Distance between the two eye centroids, in eye-scale units.
INTER_EYE_FACTOR = 3.0

_SALT_SAMPLE = 0x0
_SALT_PAIR = 0x9E3779B97F4A7C15
_SALT_CORRUPT = 0xC2B2AE3D27D4EB4F


def _rng(seed: int, salt: int, index: int) -> np.random.Generator:
    key = np.array([(int(seed) ^ salt) & 0xFFFFFFFFFFFFFFFF, int(index)], dtype=np.uint64)
    return np.random.Generator(np.random.Philox(key=key))


@dataclass
class SceneConfig:
    """Knobs of the synthetic world; all noise sigmas may be zero."""

    seed: int = 0
    n_samples: int = 100
    yaw_range: tuple[float, float] = (-30.0, 30.0)
    pitch_range: tuple[float, float] = (-15.0, 15.0)
    gaze_cone_deg: float = 15.0
    iris_noise_px: float = 0.0
    pitch_label_noise_deg: float = 0.0
    yaw_label_noise_deg: float = 0.0
    anchor_noise_px: float = 0.0
    eye_scale_px: float = 20.0
    iris_points: int = 8
    # When set, sampled gazes are replaced by the direction of the nearest
    # anterior template vertex of the face-aligned eyeball, which makes the
    # pseudo-label pipeline exactly invertible on noise-free samples.
    snap_gaze_to_vertices: bool = False

    def __post_init__(self):
        if self.n_samples < 0:
            raise ParameterError("n_samples must be >= 0")
        for name in ("yaw_range", "pitch_range"):
            lo, hi = getattr(self, name)
            if not (np.isfinite(lo) and np.isfinite(hi) and lo <= hi):
                raise ParameterError(f"{name} must be a well-ordered (lo, hi) pair")
            setattr(self, name, (float(lo), float(hi)))
        for name in (
            "gaze_cone_deg",
            "iris_noise_px",
            "pitch_label_noise_deg",
            "yaw_label_noise_deg",
            "anchor_noise_px",
        ):
            v = float(getattr(self, name))
            if not np.isfinite(v) or v < 0.0:
                raise ParameterError(f"{name} must be finite and >= 0")
            setattr(self, name, v)
        if self.eye_scale_px <= 0.0:
            raise ParameterError("eye_scale_px must be positive")
        if self.iris_points < 3:
            raise ParameterError("iris_points must be >= 3")


@dataclass
class SyntheticSample:
    """One subject observation with clean truth kept for evaluation."""

    id: str
    true_gaze: np.ndarray
    true_eyeballs: EyeMeshPair
    head_pose: tuple[float, float]  # true (yaw, pitch), degrees
    anchors: FaceAnchors  # noisy observations (plus the gt gaze label)
    feature: np.ndarray
    config: SceneConfig


@dataclass
class ViewPair:
    """Two views of one subject with the exact view1 -> view2 transform."""

    view1: SyntheticSample
    view2: SyntheticSample
    transform: SimilarityTransform


def observed_head_pose(anchors: FaceAnchors) -> tuple[float, float]:
    return direction_to_yaw_pitch(anchors.forward)


def build_feature(anchors: FaceAnchors) -> np.ndarray:
    """Feature vector from noisy observations only (never from the truth)."""
    yaw, pitch = observed_head_pose(anchors)
    out = np.zeros(FEATURE_DIM)
    for side, off_key, axis_key, cen_key, scale_key in (
        ("left", "iris_offset_left", "axis_left", "centroid_left", "scale_left"),
        ("right", "iris_offset_right", "axis_right", "centroid_right", "scale_right"),
    ):
        eye = anchors.eye(side)
        axis = eye.corners[1] - eye.corners[0]
        scale = 0.5 * float(np.linalg.norm(axis))
        if scale <= 0.0:
            raise ParameterError(f"{side} eye corners coincide")
        axis = axis / np.linalg.norm(axis)
        raw = (eye.iris_2d.mean(axis=0) - eye.centroid[:2]) / scale
        # Express the offset in the projected eye-axis frame; unstable near
        # profile poses where the axis collapses in projection, which is the
        # regime wide-pose supervision is supposed to teach.
        axy = axis[:2]
        n = np.linalg.norm(axy)
        u = axy / n if n > 1e-6 else np.array([1.0, 0.0])
        v = np.array([-u[1], u[0]])
        out[FEATURE_LAYOUT[off_key]] = (float(raw @ u), float(raw @ v))
        out[FEATURE_LAYOUT[axis_key]] = axis
        out[FEATURE_LAYOUT[cen_key]] = eye.centroid
        out[FEATURE_LAYOUT[scale_key]] = scale
    sy, cy = np.sin(np.radians(yaw)), np.cos(np.radians(yaw))
    sp, cp = np.sin(np.radians(pitch)), np.cos(np.radians(pitch))
    out[FEATURE_LAYOUT["head_sincos"]] = (sy, cy, sp, cp)
    return out


def _iris_ellipse(apex_xy: np.ndarray, gaze: np.ndarray, radius: float, k: int) -> np.ndarray:
    t = 2.0 * np.pi * np.arange(k) / k
    gxy = gaze[:2]
    n = np.linalg.norm(gxy)
    if n < 1e-12:
        u = np.array([1.0, 0.0])
        minor = radius
    else:
        u = gxy / n
        minor = radius * abs(gaze[2])
    w = np.array([-u[1], u[0]])
    return apex_xy + radius * np.cos(t)[:, None] * w + minor * np.sin(t)[:, None] * u


def _make_observations(
    corners: dict[str, np.ndarray],
    centroids: dict[str, np.ndarray],
    forward: np.ndarray,
    eyeballs: dict[str, EyeMesh],
    gaze: np.ndarray,
    cfg: SceneConfig,
    rng: np.random.Generator,
    iris_radius_factor: float,
) -> FaceAnchors:
    # Fixed draw order so the stream does not depend on the sigma values:
    # anchors (left corners, left centroid, right corners, right centroid),
    # forward, iris left, iris right.
    eyes = {}
    noise = {}
    for side in ("left", "right"):
        noise[side] = (
            rng.normal(size=(2, 3)),
            rng.normal(size=3),
        )
    dir_noise = rng.normal(size=3)
    forward_obs = forward + (cfg.anchor_noise_px / cfg.eye_scale_px) * dir_noise
    forward_obs = forward_obs / np.linalg.norm(forward_obs)
    for side in ("left", "right"):
        mesh = eyeballs[side]
        apex_xy = (mesh.center + mesh.scale * gaze)[:2]
        iris = _iris_ellipse(apex_xy, gaze, mesh.scale * iris_radius_factor, cfg.iris_points)
        iris = iris + cfg.iris_noise_px * rng.normal(size=iris.shape)
        eyes[side] = EyeAnchors(
            corners=corners[side] + cfg.anchor_noise_px * noise[side][0],
            centroid=centroids[side] + cfg.anchor_noise_px * noise[side][1],
            iris_2d=iris,
        )
    return FaceAnchors(left=eyes["left"], right=eyes["right"], forward=forward_obs, gaze=gaze)


class _World:
    """Shared immutable context for one scene: templates and derived constants."""

    def __init__(self, templates: Optional[dict[str, EyeballTemplate]] = None):
        self.templates = templates if templates is not None else default_templates()
        from .labeling import template_iris_radius

        self.iris_radius_factor = template_iris_radius(self.templates["left"])


_WORLD_CACHE: Optional[_World] = None


def _world() -> _World:
    global _WORLD_CACHE
    if _WORLD_CACHE is None:
        _WORLD_CACHE = _World()
    return _WORLD_CACHE


def _subject_geometry(cfg: SceneConfig, yaw: float, pitch: float):
    head = yaw_pitch_rotation(yaw, pitch)
    forward = head @ np.array([0.0, 0.0, -1.0])
    half_gap = 0.5 * INTER_EYE_FACTOR * cfg.eye_scale_px
    centroids = {
        "left": head @ np.array([-half_gap, 0.0, 0.0]),
        "right": head @ np.array([half_gap, 0.0, 0.0]),
    }
    corners = {}
    for side in ("left", "right"):
        arm = head @ np.array([cfg.eye_scale_px, 0.0, 0.0])
        corners[side] = np.stack([centroids[side] - arm, centroids[side] + arm])
    return head, forward, centroids, corners


def _snap_gaze(gaze: np.ndarray, forward: np.ndarray, template: EyeballTemplate) -> np.ndarray:
    align = rotation_between(template.optical_axis, forward)
    dirs = template.vertices @ align.T
    anterior = dirs[:, 2] < 0.0
    dots = dirs @ gaze
    dots[~anterior] = -np.inf
    return dirs[int(np.argmax(dots))].copy()


def _sample_from_pose(
    cfg: SceneConfig,
    sample_id: str,
    yaw: float,
    pitch: float,
    gaze_world: np.ndarray,
    eye_rotation: np.ndarray,
    rng: np.random.Generator,
) -> SyntheticSample:
    world = _world()
    head, forward, centroids, corners = _subject_geometry(cfg, yaw, pitch)
    eyeballs = {
        side: EyeMesh(
            template=world.templates[side],
            side=side,
            center=centroids[side],
            scale=cfg.eye_scale_px,
            rotation=eye_rotation,
        )
        for side in ("left", "right")
    }
    anchors = _make_observations(
        corners, centroids, forward, eyeballs, gaze_world, cfg, rng, world.iris_radius_factor
    )
    return SyntheticSample(
        id=sample_id,
        true_gaze=gaze_world,
        true_eyeballs=EyeMeshPair(left=eyeballs["left"], right=eyeballs["right"]),
        head_pose=(float(yaw), float(pitch)),
        anchors=anchors,
        feature=build_feature(anchors),
        config=cfg,
    )


def generate(cfg: SceneConfig) -> list[SyntheticSample]:
    """Deterministic sample stream; head poses are uniform over the config
    ranges and gaze deviates from head-forward by at most the gaze cone."""
    world = _world()
    samples = []
    for i in range(cfg.n_samples):
        rng = _rng(cfg.seed, _SALT_SAMPLE, i)
        yaw = rng.uniform(*cfg.yaw_range)
        pitch = rng.uniform(*cfg.pitch_range)
        psi = rng.uniform(0.0, 360.0)
        omega = rng.uniform(0.0, cfg.gaze_cone_deg)

        head = yaw_pitch_rotation(yaw, pitch)
        forward = head @ np.array([0.0, 0.0, -1.0])
        off_axis = np.array([np.cos(np.radians(psi)), np.sin(np.radians(psi)), 0.0])
        offset = axis_angle_rotation(off_axis, omega)
        gaze_world = head @ (offset @ np.array([0.0, 0.0, -1.0]))
        if cfg.snap_gaze_to_vertices:
            gaze_world = _snap_gaze(gaze_world, forward, world.templates["left"])
            eye_rotation = rotation_between(forward, gaze_world) @ rotation_between(
                world.templates["left"].optical_axis, forward
            )
        else:
            eye_rotation = head @ offset
        samples.append(
            _sample_from_pose(cfg, f"s{i:06d}", yaw, pitch, gaze_world, eye_rotation, rng)
        )
    return samples


def make_view_pair(
    sample: SyntheticSample,
    delta_sigma_deg: float = 20.0,
    rng: Optional[np.random.Generator] = None,
    deltas: Optional[tuple[float, float]] = None,
) -> ViewPair:
    """Second view of a subject: the head and eyeballs rotate rigidly, so
    the exact inter-view transform and gaze-preservation hold by
    construction.  Pose deltas are Gaussian, clamped to keep |yaw| <= 90."""
    if deltas is None:
        if rng is None:
            raise ParameterError("make_view_pair needs an rng when deltas are not given")
        deltas = (
            float(rng.normal(0.0, delta_sigma_deg)),
            float(rng.normal(0.0, delta_sigma_deg)),
        )
    elif rng is None:
        rng = _rng(sample.config.seed, _SALT_PAIR, 0)

    yaw1, pitch1 = sample.head_pose
    yaw2 = float(np.clip(yaw1 + deltas[0], -90.0, 90.0))
    pitch2 = float(np.clip(pitch1 + deltas[1], -89.0, 89.0))
    r1 = yaw_pitch_rotation(yaw1, pitch1)
    r2 = yaw_pitch_rotation(yaw2, pitch2)
    r_delta = r2 @ r1.T

    pivot = 0.5 * (sample.true_eyeballs.left.center + sample.true_eyeballs.right.center)
    t = pivot - r_delta @ pivot
    transform = SimilarityTransform.from_parts(1.0, r_delta, t)

    gaze2 = r_delta @ sample.true_gaze
    rotation2 = r_delta @ sample.true_eyeballs.left.rotation
    view2 = _sample_from_pose(
        sample.config,
        sample.id + "_v2",
        yaw2,
        pitch2,
        gaze2,
        rotation2,
        rng,
    )
    return ViewPair(view1=sample, view2=view2, transform=transform)


def generate_view_pairs(
    samples: list[SyntheticSample],
    delta_sigma_deg: float = 20.0,
    seed: Optional[int] = None,
) -> list[ViewPair]:
    pairs = []
    for i, sample in enumerate(samples):
        base = sample.config.seed if seed is None else seed
        pairs.append(make_view_pair(sample, delta_sigma_deg, rng=_rng(base, _SALT_PAIR, i)))
    return pairs


def corrupt_pseudo_labels(
    labels: list[LabeledSample],
    cfg: SceneConfig,
    seed: Optional[int] = None,
) -> list[LabeledSample]:
    """Anisotropic zero-mean rotational noise on label meshes and gazes.

    Pitch noise dominates yaw noise; each label's meshes and gaze rotate
    together about the eye centers, so rigidity is preserved exactly."""
    base = cfg.seed if seed is None else seed
    out = []
    for i, lab in enumerate(labels):
        rng = _rng(base, _SALT_CORRUPT, i)
        d_pitch = float(rng.normal(0.0, cfg.pitch_label_noise_deg))
        d_yaw = float(rng.normal(0.0, cfg.yaw_label_noise_deg))
        if cfg.pitch_label_noise_deg == 0.0 and cfg.yaw_label_noise_deg == 0.0:
            out.append(lab)
            continue
        r_noise = rotation_y(d_yaw) @ rotation_x(d_pitch)
        eyes = EyeMeshPair(
            left=replace(lab.eyes.left, rotation=r_noise @ lab.eyes.left.rotation),
            right=replace(lab.eyes.right, rotation=r_noise @ lab.eyes.right.rotation),
        )
        out.append(
            LabeledSample(
                sample_id=lab.sample_id,
                feature=lab.feature,
                eyes=eyes,
                gaze=r_noise @ lab.gaze,
                head_pose=lab.head_pose,
                kind=lab.kind,
            )
        )
    return out
