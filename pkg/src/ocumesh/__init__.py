"""ocumesh: rigid 3D eyeball meshes, gaze geometry, consistency losses,
and a deterministic synthetic benchmarking harness."""

__version__ = "0.1.0"

from .errors import (
    DataFormatError,
    DecompositionError,
    EstimationError,
    FitError,
    OcumeshError,
    ParameterError,
    TrainingDivergedError,
)
from .geometry import (
    SimilarityTransform,
    angle_between_deg,
    apply_transform,
    decompose,
    estimate_similarity,
    euler_yaw_pitch,
    rotation_between,
)
from .template import (
    EyeballTemplate,
    MeshValidationReport,
    build_template,
    default_templates,
    region_indices,
    validate,
)
from .labeling import (
    EyeAnchors,
    EyeMesh,
    EyeMeshPair,
    FaceAnchors,
    LabeledSample,
    PseudoLabelDiagnostics,
    RawEyeMesh,
    fit_gt_eyeball,
    lift_to_3d,
    pseudo_label,
    verify_rigidity,
)
from .losses import (
    LossValueGrad,
    LossWeights,
    combined_supervised_loss,
    edge_loss,
    gaze_loss,
    mv_gaze_loss,
    mv_loss,
    mv_vertex_loss,
    total_loss,
    vertex_loss,
)
from .gaze import angular_error, fuse_gaze, gaze_from_mesh, yaw_binned_report
from .synthworld import (
    SceneConfig,
    SyntheticSample,
    ViewPair,
    build_feature,
    corrupt_pseudo_labels,
    generate,
    generate_view_pairs,
    make_view_pair,
)
from .trainer import (
    Model,
    ModelDescriptor,
    TrainConfig,
    TrainData,
    TrainHistory,
    forward,
    grad_check,
    init_model,
    predict_gaze,
    train,
)
from .pipelines import label_world_gt, label_world_pseudo

__all__ = [name for name in dir() if not name.startswith("_")]
