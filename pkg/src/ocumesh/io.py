"""File-format codecs and run manifests.

Formats (all numbers serialized with full round-trip precision):

* mesh JSON: one template or posed mesh document.
* samples JSONL: one observation record per line (the synthetic world
  emits these; the labeling pipelines consume them).
* labels JSONL: compact pose-form eye meshes plus gaze and diagnostics.
* transform JSON: {"P": 3x4 nested lists}.
* model JSON: descriptor plus the flat parameter vector.
* report CSV: delimited tables with a fixed column order.

Decoders reject non-finite numbers and attach line numbers to errors;
unknown fields are preserved through decode/encode round trips.
"""

from __future__ import annotations

import hashlib
import json
import time
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Optional

import numpy as np

from . import __version__
from .errors import DataFormatError
from .gaze import YawBinRow
from .geometry import SimilarityTransform
from .labeling import (
    EyeAnchors,
    EyeMesh,
    EyeMeshPair,
    FaceAnchors,
    LabeledSample,
    PseudoLabelDiagnostics,
    RawEyeMesh,
)
from .synthworld import SceneConfig, SyntheticSample, ViewPair, build_feature
from .template import EyeballTemplate
from .trainer import Model, ModelDescriptor, PairExample, TrainConfig
from .losses import LossWeights


def _require(condition: bool, message: str, path=None, line=None):
    if not condition:
        raise DataFormatError(message, path=path, line=line)


def _finite_array(values, shape, message: str, path=None, line=None) -> np.ndarray:
    try:
        arr = np.asarray(values, dtype=float)
    except (TypeError, ValueError):
        raise DataFormatError(message + " (not numeric)", path=path, line=line)
    _require(arr.shape == shape, message + f" (expected shape {shape}, got {arr.shape})",
             path, line)
    _require(bool(np.all(np.isfinite(arr))), message + " (non-finite values)", path, line)
    return arr


# ---------------------------------------------------------------------------
# mesh JSON

def template_to_dict(t: EyeballTemplate) -> dict:
    return {
        "side": t.side,
        "vertices": t.vertices.tolist(),
        "triangles": t.triangles.tolist(),
        "regions": {k: v.tolist() for k, v in t.region_labels.items()},
        "optical_axis": t.optical_axis.tolist(),
        "sectors": t.sectors,
        "stacks": t.stacks,
    }


def template_from_dict(doc: dict, path=None) -> EyeballTemplate:
    for key in ("side", "vertices", "triangles", "regions", "optical_axis"):
        _require(key in doc, f"mesh document missing field {key!r}", path)
    vertices = np.asarray(doc["vertices"], dtype=float)
    _require(bool(np.all(np.isfinite(vertices))), "vertices contain non-finite values", path)
    triangles = np.asarray(doc["triangles"], dtype=np.int32)
    _require(triangles.ndim == 2 and triangles.shape[1] == 3, "triangles must be index triples", path)
    _require(int(triangles.min(initial=0)) >= 0
             and int(triangles.max(initial=0)) < len(vertices),
             "triangle indices out of range", path)
    return EyeballTemplate(
        side=doc["side"],
        vertices=vertices,
        triangles=triangles,
        region_labels={k: np.asarray(v, dtype=np.int32) for k, v in doc["regions"].items()},
        optical_axis=np.asarray(doc["optical_axis"], dtype=float),
        sectors=int(doc.get("sectors", 0)),
        stacks=int(doc.get("stacks", 0)),
    )


# ---------------------------------------------------------------------------
# eye poses and label records

def eye_mesh_to_dict(mesh: EyeMesh) -> dict:
    return {
        "center": mesh.center.tolist(),
        "scale": mesh.scale,
        "rotation": mesh.rotation.tolist(),
    }


def eye_mesh_from_dict(doc: dict, template: EyeballTemplate, side: str,
                       path=None, line=None) -> EyeMesh:
    if "vertices" in doc:
        vertices = _finite_array(doc["vertices"], template.vertices.shape,
                                 "mesh vertices", path, line)
        return RawEyeMesh(template=template, side=side, vertices=vertices)
    for key in ("center", "scale", "rotation"):
        _require(key in doc, f"eye mesh missing field {key!r}", path, line)
    return EyeMesh(
        template=template,
        side=side,
        center=_finite_array(doc["center"], (3,), "mesh center", path, line),
        scale=float(doc["scale"]),
        rotation=_finite_array(doc["rotation"], (3, 3), "mesh rotation", path, line),
    )


def labeled_sample_to_dict(lab: LabeledSample,
                           diagnostics: Optional[PseudoLabelDiagnostics] = None) -> dict:
    doc = {
        "id": lab.sample_id,
        "kind": lab.kind,
        "eyes": {
            "left": eye_mesh_to_dict(lab.eyes.left),
            "right": eye_mesh_to_dict(lab.eyes.right),
        },
        "gaze": np.asarray(lab.gaze, dtype=float).tolist(),
        "head_pose": {"yaw": lab.head_pose[0], "pitch": lab.head_pose[1]},
        "feature": np.asarray(lab.feature, dtype=float).tolist(),
    }
    if diagnostics is not None:
        doc["diagnostics"] = {
            "correction_angle_deg": diagnostics.correction_angle_deg,
            "lift_residual": diagnostics.lift_residual,
            "warnings": diagnostics.warnings,
        }
    return doc


def labeled_sample_from_dict(doc: dict, templates: dict, path=None, line=None) -> LabeledSample:
    for key in ("id", "eyes", "gaze", "head_pose"):
        _require(key in doc, f"label record missing field {key!r}", path, line)
    eyes = EyeMeshPair(
        left=eye_mesh_from_dict(doc["eyes"]["left"], templates["left"], "left", path, line),
        right=eye_mesh_from_dict(doc["eyes"]["right"], templates["right"], "right", path, line),
    )
    feature = np.asarray(doc.get("feature", []), dtype=float)
    hp = doc["head_pose"]
    return LabeledSample(
        sample_id=str(doc["id"]),
        feature=feature,
        eyes=eyes,
        gaze=_finite_array(doc["gaze"], (3,), "gaze", path, line),
        head_pose=(float(hp["yaw"]), float(hp["pitch"])),
        kind=str(doc.get("kind", "gt")),
    )


# ---------------------------------------------------------------------------
# samples JSONL

_SAMPLE_KNOWN_KEYS = {"id", "anchors", "iris_2d", "gaze", "head_pose"}


def sample_to_dict(s: SyntheticSample) -> dict:
    anchors = s.anchors
    doc = {
        "id": s.id,
        "anchors": {
            "left": {
                "corners": anchors.left.corners.tolist(),
                "centroid": anchors.left.centroid.tolist(),
            },
            "right": {
                "corners": anchors.right.corners.tolist(),
                "centroid": anchors.right.centroid.tolist(),
            },
            "forward": anchors.forward.tolist(),
        },
        "iris_2d": {
            "left": anchors.left.iris_2d.tolist(),
            "right": anchors.right.iris_2d.tolist(),
        },
        "gaze": None if anchors.gaze is None else anchors.gaze.tolist(),
        "head_pose": None,
        # Oracle-only extras; consumers that bin by pose or score against
        # the truth read these, the labeling pipelines do not.
        "true_gaze": s.true_gaze.tolist(),
        "true_head_pose": {"yaw": s.head_pose[0], "pitch": s.head_pose[1]},
        "true_eyes": {
            "left": eye_mesh_to_dict(s.true_eyeballs.left),
            "right": eye_mesh_to_dict(s.true_eyeballs.right),
        },
    }
    from .synthworld import observed_head_pose

    yaw, pitch = observed_head_pose(anchors)
    doc["head_pose"] = {"yaw": yaw, "pitch": pitch}
    return doc


@dataclass
class SampleRecord:
    """Decoded observation record, with unknown fields preserved."""

    id: str
    anchors: FaceAnchors
    head_pose: Optional[tuple[float, float]]
    true_gaze: Optional[np.ndarray]
    true_head_pose: Optional[tuple[float, float]]
    true_eyes: Optional[EyeMeshPair]
    extras: dict = field(default_factory=dict)

    @property
    def feature(self) -> np.ndarray:
        return build_feature(self.anchors)


def sample_from_dict(doc: dict, templates: Optional[dict] = None,
                     path=None, line=None) -> SampleRecord:
    for key in ("id", "anchors", "iris_2d"):
        _require(key in doc, f"sample record missing field {key!r}", path, line)
    anchors_doc = doc["anchors"]
    iris_doc = doc["iris_2d"]
    for side in ("left", "right"):
        _require(side in anchors_doc, f"anchors missing side {side!r}", path, line)
        _require(side in iris_doc, f"iris_2d missing side {side!r}", path, line)

    head_pose = None
    if doc.get("head_pose") is not None:
        hp = doc["head_pose"]
        head_pose = (float(hp["yaw"]), float(hp["pitch"]))

    if "forward" in anchors_doc:
        forward = _finite_array(anchors_doc["forward"], (3,), "forward axis", path, line)
    else:
        _require(head_pose is not None,
                 "sample needs either anchors.forward or head_pose", path, line)
        from .geometry import yaw_pitch_to_direction

        forward = yaw_pitch_to_direction(*head_pose)

    gaze = None
    if doc.get("gaze") is not None:
        gaze = _finite_array(doc["gaze"], (3,), "gaze", path, line)

    eyes = {}
    for side in ("left", "right"):
        a = anchors_doc[side]
        iris = np.asarray(iris_doc[side], dtype=float)
        _require(iris.ndim == 2 and iris.shape[1] == 2 and iris.shape[0] >= 1,
                 f"{side} iris_2d must be a (K, 2) array", path, line)
        _require(bool(np.all(np.isfinite(iris))), f"{side} iris_2d has non-finite values",
                 path, line)
        eyes[side] = EyeAnchors(
            corners=_finite_array(a["corners"], (2, 3), f"{side} corners", path, line),
            centroid=_finite_array(a["centroid"], (3,), f"{side} centroid", path, line),
            iris_2d=iris,
        )
    anchors = FaceAnchors(left=eyes["left"], right=eyes["right"], forward=forward, gaze=gaze)

    true_gaze = None
    if doc.get("true_gaze") is not None:
        true_gaze = _finite_array(doc["true_gaze"], (3,), "true_gaze", path, line)
    true_head_pose = None
    if doc.get("true_head_pose") is not None:
        hp = doc["true_head_pose"]
        true_head_pose = (float(hp["yaw"]), float(hp["pitch"]))
    true_eyes = None
    if doc.get("true_eyes") is not None and templates is not None:
        true_eyes = EyeMeshPair(
            left=eye_mesh_from_dict(doc["true_eyes"]["left"], templates["left"], "left",
                                    path, line),
            right=eye_mesh_from_dict(doc["true_eyes"]["right"], templates["right"], "right",
                                     path, line),
        )
    extras = {k: v for k, v in doc.items()
              if k not in _SAMPLE_KNOWN_KEYS and not k.startswith("true_")}
    return SampleRecord(
        id=str(doc["id"]),
        anchors=anchors,
        head_pose=head_pose,
        true_gaze=true_gaze,
        true_head_pose=true_head_pose,
        true_eyes=true_eyes,
        extras=extras,
    )


# ---------------------------------------------------------------------------
# view pairs JSONL

def view_pair_to_dict(vp: ViewPair) -> dict:
    return {
        "view1": sample_to_dict(vp.view1),
        "view2": sample_to_dict(vp.view2),
        "P": vp.transform.matrix.tolist(),
    }


def pair_example_from_dict(doc: dict, path=None, line=None) -> PairExample:
    for key in ("view1", "view2", "P"):
        _require(key in doc, f"pair record missing field {key!r}", path, line)
    v1 = sample_from_dict(doc["view1"], path=path, line=line)
    v2 = sample_from_dict(doc["view2"], path=path, line=line)
    return PairExample(
        feature1=v1.feature,
        feature2=v2.feature,
        transform=transform_from_dict(doc, path=path, line=line),
    )


# ---------------------------------------------------------------------------
# transform JSON

def transform_to_dict(p: SimilarityTransform) -> dict:
    return {"P": p.matrix.tolist()}


def transform_from_dict(doc: dict, path=None, line=None) -> SimilarityTransform:
    _require("P" in doc, "transform document missing field 'P'", path, line)
    return SimilarityTransform(_finite_array(doc["P"], (3, 4), "transform P", path, line))


# ---------------------------------------------------------------------------
# model JSON

def model_to_dict(m: Model) -> dict:
    return {
        "descriptor": {
            "hidden": list(m.descriptor.hidden),
            "input_dim": m.descriptor.input_dim,
            "activation": m.descriptor.activation,
        },
        "seed": m.seed,
        "params": m.params.tolist(),
    }


def model_from_dict(doc: dict, path=None) -> Model:
    for key in ("descriptor", "params"):
        _require(key in doc, f"model document missing field {key!r}", path)
    d = doc["descriptor"]
    descriptor = ModelDescriptor(
        hidden=tuple(d.get("hidden", (48, 48))),
        input_dim=int(d.get("input_dim", 14)),
        activation=d.get("activation", "tanh"),
    )
    params = np.asarray(doc["params"], dtype=float)
    _require(bool(np.all(np.isfinite(params))), "model params contain non-finite values", path)
    return Model(descriptor=descriptor, params=params, seed=int(doc.get("seed", 0)))


# ---------------------------------------------------------------------------
# configs

def scene_config_from_dict(doc: dict, path=None) -> SceneConfig:
    known = {f for f in SceneConfig.__dataclass_fields__}
    kwargs = {k: v for k, v in doc.items() if k in known}
    for rng_key in ("yaw_range", "pitch_range"):
        if rng_key in kwargs:
            kwargs[rng_key] = tuple(kwargs[rng_key])
    return SceneConfig(**kwargs)


def train_config_from_dict(doc: dict, path=None) -> TrainConfig:
    doc = dict(doc)
    weights = doc.pop("weights", None)
    known = {f for f in TrainConfig.__dataclass_fields__}
    kwargs = {k: v for k, v in doc.items() if k in known}
    if "decay_epochs" in kwargs:
        kwargs["decay_epochs"] = tuple(kwargs["decay_epochs"])
    if weights is not None:
        kwargs["weights"] = LossWeights(**weights)
    return TrainConfig(**kwargs)


# ---------------------------------------------------------------------------
# JSON / JSONL plumbing

def write_json(path, doc: dict) -> None:
    text = json.dumps(doc, indent=2, allow_nan=False)
    if str(path) == "-":
        import sys

        sys.stdout.write(text + "\n")
    else:
        Path(path).write_text(text + "\n")


def read_json(path) -> dict:
    try:
        return json.loads(Path(path).read_text())
    except FileNotFoundError:
        raise DataFormatError("file not found", path=path)
    except json.JSONDecodeError as e:
        raise DataFormatError(f"invalid JSON: {e.msg}", path=path, line=e.lineno)


def write_jsonl(path, docs) -> None:
    lines = [json.dumps(doc, allow_nan=False) for doc in docs]
    text = "\n".join(lines) + ("\n" if lines else "")
    if str(path) == "-":
        import sys

        sys.stdout.write(text)
    else:
        Path(path).write_text(text)


def read_jsonl(path) -> list[tuple[int, dict]]:
    """Returns (line_number, document) pairs; raises with the line number
    of the first malformed line."""
    try:
        text = Path(path).read_text()
    except FileNotFoundError:
        raise DataFormatError("file not found", path=path)
    out = []
    for i, raw in enumerate(text.splitlines(), start=1):
        if not raw.strip():
            continue
        try:
            doc = json.loads(raw)
        except json.JSONDecodeError as e:
            raise DataFormatError(f"invalid JSON: {e.msg}", path=path, line=i)
        if not isinstance(doc, dict):
            raise DataFormatError("each line must hold a JSON object", path=path, line=i)
        out.append((i, doc))
    return out


# ---------------------------------------------------------------------------
# report CSV

def format_float(x: float) -> str:
    return repr(float(x))


def write_report_csv(path, rows: list[YawBinRow]) -> None:
    lines = ["bin_max_yaw,mean_error_deg,count"]
    for r in rows:
        mean = "" if r.mean_error_deg is None else format_float(r.mean_error_deg)
        lines.append(f"{format_float(r.max_yaw_deg)},{mean},{r.count}")
    Path(path).write_text("\n".join(lines) + "\n")


def write_table_csv(path, header: list[str], rows: list[list]) -> None:
    def cell(x):
        if x is None:
            return ""
        if isinstance(x, float):
            return format_float(x)
        return str(x)

    lines = [",".join(header)]
    for row in rows:
        lines.append(",".join(cell(x) for x in row))
    Path(path).write_text("\n".join(lines) + "\n")


# ---------------------------------------------------------------------------
# run manifests

def config_hash(doc: Any) -> str:
    canonical = json.dumps(doc, sort_keys=True, separators=(",", ":"), allow_nan=False)
    return hashlib.sha256(canonical.encode("utf-8")).hexdigest()


def write_manifest(out_path, command: str, config: Any, seed: Optional[int],
                   inputs: list, outputs: list, wall_time_s: float) -> None:
    """Sidecar record written next to every produced file.

    The wall time field varies run to run by design; all data artifacts
    themselves are byte-deterministic for fixed seeds.
    """
    if str(out_path) == "-":
        return
    manifest = {
        "command": command,
        "config_hash": config_hash(config),
        "seed": seed,
        "tool_version": __version__,
        "inputs": [str(p) for p in inputs],
        "outputs": [str(p) for p in outputs],
        "wall_time_s": wall_time_s,
    }
    Path(str(out_path) + ".manifest.json").write_text(
        json.dumps(manifest, indent=2) + "\n"
    )
