"""Batch labeling pipelines: samples in, training labels out."""

from __future__ import annotations

from typing import Optional

import numpy as np

from .errors import ParameterError
from .gaze import fuse_gaze, gaze_from_mesh
from .geometry import direction_to_yaw_pitch
from .labeling import (
    EyeMeshPair,
    LabeledSample,
    PseudoLabelDiagnostics,
    fit_gt_eyeball,
    pseudo_label,
)
from .template import EyeballTemplate, default_templates


def label_sample_gt(sample, templates: dict[str, EyeballTemplate]) -> LabeledSample:
    anchors = sample.anchors
    if anchors.gaze is None:
        raise ParameterError(f"sample {sample.id}: gt labeling requires a gaze label")
    eyes = EyeMeshPair(
        left=fit_gt_eyeball(anchors.left.iris_2d, anchors.gaze, "left", templates["left"]),
        right=fit_gt_eyeball(anchors.right.iris_2d, anchors.gaze, "right", templates["right"]),
    )
    return LabeledSample(
        sample_id=sample.id,
        feature=np.asarray(sample.feature, dtype=float),
        eyes=eyes,
        gaze=anchors.gaze.copy(),
        head_pose=direction_to_yaw_pitch(anchors.forward),
        kind="gt",
    )


def label_sample_pseudo(
    sample, templates: dict[str, EyeballTemplate]
) -> tuple[LabeledSample, PseudoLabelDiagnostics]:
    eyes, diag = pseudo_label(sample.anchors, templates)
    gaze = fuse_gaze(gaze_from_mesh(eyes.left), gaze_from_mesh(eyes.right))
    label = LabeledSample(
        sample_id=sample.id,
        feature=np.asarray(sample.feature, dtype=float),
        eyes=eyes,
        gaze=gaze,
        head_pose=direction_to_yaw_pitch(sample.anchors.forward),
        kind="pseudo",
    )
    return label, diag


def label_world_gt(samples, templates: Optional[dict] = None) -> list[LabeledSample]:
    templates = templates if templates is not None else default_templates()
    return [label_sample_gt(s, templates) for s in samples]


def label_world_pseudo(
    samples, templates: Optional[dict] = None
) -> tuple[list[LabeledSample], list[PseudoLabelDiagnostics]]:
    templates = templates if templates is not None else default_templates()
    labels = []
    diags = []
    for s in samples:
        label, diag = label_sample_pseudo(s, templates)
        labels.append(label)
        diags.append(diag)
    return labels, diags
