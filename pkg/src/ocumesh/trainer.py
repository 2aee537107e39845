"""Desk-scale gaze regressor trained with the full loss system.

The model is a small tanh MLP over the observation features.  Its heads
emit rigid-pose parameters per eye (a continuous 6-value rotation
encoding, a center offset, and a log-scale correction) plus a direct
gaze vector.  Poses decode relative to the face-aligned eyeball derived
from the observation context carried in the feature tail, so a freshly
initialized model predicts the aligned template exactly.  Decoding to
dense vertices keeps outputs rigid by construction while the dense
vertex and edge losses run unchanged.

All gradients are analytic and hand-propagated; `grad_check` compares
them against central finite differences.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace
from typing import Optional

import numpy as np

from . import losses as L
from .errors import ParameterError, TrainingDivergedError
from .gaze import angular_error, fuse_gaze, gaze_from_mesh
from .geometry import SimilarityTransform, rotation_between, yaw_pitch_to_direction
from .labeling import EyeMesh, EyeMeshPair, LabeledSample
from .losses import LossWeights
from .synthworld import FEATURE_DIM, FEATURE_LAYOUT, NET_INPUT_DIM, ViewPair, _rng
from .template import default_templates

_SALT_INIT = 0x8B7DF5E1D1C2A3B4
_SALT_SHUFFLE = 0x5851F42D4C957F2D

OUT_DIM = 23  # per eye: 6 rotation + 3 center + 1 log-scale; plus 3 direct gaze
_EYE_SLOTS = {"left": 0, "right": 10}
_IDENT6 = np.array([1.0, 0.0, 0.0, 0.0, 1.0, 0.0])
_NEG_Z = np.array([0.0, 0.0, -1.0])


@dataclass
class ModelDescriptor:
    hidden: tuple[int, ...] = (48, 48)
    input_dim: int = NET_INPUT_DIM
    activation: str = "tanh"

    def __post_init__(self):
        self.hidden = tuple(int(h) for h in self.hidden)
        if any(h <= 0 for h in self.hidden) or self.input_dim <= 0:
            raise ParameterError("layer widths must be positive")
        if self.activation != "tanh":
            raise ParameterError(f"unsupported activation {self.activation!r}")

    @property
    def layer_dims(self) -> list[tuple[int, int]]:
        dims = [self.input_dim, *self.hidden, OUT_DIM]
        return [(dims[i], dims[i + 1]) for i in range(len(dims) - 1)]

    @property
    def param_count(self) -> int:
        return sum(n_in * n_out + n_out for n_in, n_out in self.layer_dims)


@dataclass
class Model:
    descriptor: ModelDescriptor
    params: np.ndarray
    seed: int = 0

    def __post_init__(self):
        self.params = np.asarray(self.params, dtype=float)
        if self.params.shape != (self.descriptor.param_count,):
            raise ParameterError(
                f"expected {self.descriptor.param_count} parameters, got {self.params.shape}"
            )

    def clone(self) -> "Model":
        return Model(descriptor=self.descriptor, params=self.params.copy(), seed=self.seed)


def init_model(descriptor: ModelDescriptor, seed: int = 0) -> Model:
    """Deterministic init; the zeroed output layer makes the decoded pose
    exactly the aligned template (residual parameterization)."""
    chunks = []
    for li, (n_in, n_out) in enumerate(descriptor.layer_dims):
        rng = _rng(seed, _SALT_INIT, li)
        last = li == len(descriptor.layer_dims) - 1
        w = np.zeros((n_in, n_out)) if last else rng.normal(0.0, 1.0 / np.sqrt(n_in), (n_in, n_out))
        chunks.append(w.ravel())
        chunks.append(np.zeros(n_out))
    return Model(descriptor=descriptor, params=np.concatenate(chunks), seed=seed)


def _unpack(model: Model):
    layers = []
    pos = 0
    for n_in, n_out in model.descriptor.layer_dims:
        w = model.params[pos : pos + n_in * n_out].reshape(n_in, n_out)
        pos += n_in * n_out
        b = model.params[pos : pos + n_out]
        pos += n_out
        layers.append((w, b))
    return layers


def _cross3(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    # np.cross has high per-call overhead for single vectors.
    return np.array(
        [
            a[1] * b[2] - a[2] * b[1],
            a[2] * b[0] - a[0] * b[2],
            a[0] * b[1] - a[1] * b[0],
        ]
    )


def rotation_to_6d(R: np.ndarray) -> np.ndarray:
    """Continuous encoding: the first two columns of the matrix."""
    R = np.asarray(R, dtype=float)
    return np.concatenate([R[:, 0], R[:, 1]])


def rotation_from_6d(r6: np.ndarray):
    """Gram-Schmidt decode of the 6-value encoding; returns (R, cache)."""
    u = r6[:3]
    v = r6[3:]
    n1 = float(np.sqrt(u @ u))
    if n1 < 1e-8:
        raise ParameterError("degenerate rotation encoding (first triple ~ 0)")
    b1 = u / n1
    d = float(b1 @ v)
    w = v - d * b1
    n2 = float(np.sqrt(w @ w))
    if n2 < 1e-8:
        raise ParameterError("degenerate rotation encoding (parallel triples)")
    b2 = w / n2
    b3 = _cross3(b1, b2)
    R = np.stack([b1, b2, b3], axis=1)
    return R, (v, n1, b1, d, n2, b2, b3)


def _rotation_6d_backward(cache, dR: np.ndarray) -> np.ndarray:
    v, n1, b1, d, n2, b2, b3 = cache
    g1, g2, g3 = dR[:, 0], dR[:, 1], dR[:, 2]
    db2 = g2 + _cross3(g3, b1)
    dw = (db2 - b2 * float(b2 @ db2)) / n2
    db1 = g1 + _cross3(b2, g3) - float(dw @ b1) * v - d * dw
    dv = dw - b1 * float(b1 @ dw)
    du = (db1 - b1 * float(b1 @ db1)) / n1
    return np.concatenate([du, dv])


class _Cache:
    """Per-sample forward cache consumed by the backward pass."""

    __slots__ = (
        "feature",
        "acts",
        "out",
        "r_align",
        "eye",
        "direct_raw",
        "direct_norm",
        "direct",
        "pair",
    )


def _mlp_forward(layers, x):
    acts = [x]
    h = x
    for i, (w, b) in enumerate(layers):
        h = h @ w + b
        if i < len(layers) - 1:
            h = np.tanh(h)
        acts.append(h)
    return h, acts


def _mlp_backward(layers, acts, d_out):
    grads = []
    delta = d_out
    for i in range(len(layers) - 1, -1, -1):
        w, _ = layers[i]
        if i < len(layers) - 1:
            delta = delta * (1.0 - acts[i + 1] ** 2)
        grads.append((np.outer(acts[i], delta), delta.copy()))
        delta = w @ delta
    grads.reverse()
    return grads


def _forward_core(model: Model, feature, templates) -> _Cache:
    feature = np.asarray(feature, dtype=float)
    if feature.shape != (FEATURE_DIM,):
        raise ParameterError(f"feature must have shape ({FEATURE_DIM},), got {feature.shape}")
    layers = _unpack(model)
    out, acts = _mlp_forward(layers, feature[:NET_INPUT_DIM])

    sy, cy, sp, cp = feature[FEATURE_LAYOUT["head_sincos"]]
    yaw = np.degrees(np.arctan2(sy, cy))
    pitch = np.degrees(np.arctan2(sp, cp))
    forward_obs = yaw_pitch_to_direction(yaw, pitch)
    r_align = rotation_between(_NEG_Z, forward_obs)

    cache = _Cache()
    cache.feature = feature
    cache.acts = acts
    cache.out = out
    cache.r_align = r_align
    cache.eye = {}
    meshes = {}
    for side, base in _EYE_SLOTS.items():
        centroid = feature[FEATURE_LAYOUT[f"centroid_{side}"]]
        scale_obs = float(feature[FEATURE_LAYOUT[f"scale_{side}"]][0])
        r6 = out[base : base + 6] + _IDENT6
        r_res, gs_cache = rotation_from_6d(r6)
        rotation = r_res @ r_align
        center = centroid + scale_obs * out[base + 6 : base + 9]
        scale = scale_obs * float(np.exp(out[base + 9]))
        meshes[side] = EyeMesh(
            template=templates[side], side=side, center=center, scale=scale, rotation=rotation
        )
        cache.eye[side] = (gs_cache, scale_obs, scale)
    cache.pair = EyeMeshPair(left=meshes["left"], right=meshes["right"])

    raw = out[20:23] + forward_obs
    norm = float(np.linalg.norm(raw))
    if norm < 1e-9:
        raise ParameterError("degenerate direct gaze output")
    cache.direct_raw = raw
    cache.direct_norm = norm
    cache.direct = raw / norm
    return cache


def _backward_core(model: Model, cache: _Cache, grad_vertices, grad_gaze) -> np.ndarray:
    """Map loss gradients (w.r.t. decoded vertices and the normalized direct
    gaze) to a flat parameter gradient."""
    layers = _unpack(model)
    d_out = np.zeros(OUT_DIM)
    template_v = {s: cache.pair.eye(s).template.vertices for s in _EYE_SLOTS}
    for side, base in _EYE_SLOTS.items():
        if grad_vertices is None or side not in grad_vertices:
            continue
        G = grad_vertices[side]
        mesh = cache.pair.eye(side)
        gs_cache, scale_obs, scale = cache.eye[side]
        M = template_v[side]
        dc = G.sum(axis=0)
        rotated = M @ mesh.rotation.T
        ds = float(np.sum(G * rotated))
        d_rot = scale * (G.T @ M)
        d_res = d_rot @ cache.r_align.T
        d_out[base : base + 6] += _rotation_6d_backward(gs_cache, d_res)
        d_out[base + 6 : base + 9] += scale_obs * dc
        d_out[base + 9] += ds * scale
    if grad_gaze is not None:
        g = cache.direct
        d_raw = (grad_gaze - g * float(g @ grad_gaze)) / cache.direct_norm
        d_out[20:23] += d_raw

    layer_grads = _mlp_backward(layers, cache.acts, d_out)
    flat = np.empty_like(model.params)
    pos = 0
    for (w, b), (gw, gb) in zip(layers, layer_grads):
        flat[pos : pos + w.size] = gw.ravel()
        pos += w.size
        flat[pos : pos + b.size] = gb
        pos += b.size
    return flat


def forward(model: Model, feature, templates: Optional[dict] = None):
    """Decode one feature vector to (EyeMeshPair, fused gaze prediction)."""
    templates = templates if templates is not None else default_templates()
    cache = _forward_core(model, feature, templates)
    fused = fuse_gaze(
        gaze_from_mesh(cache.pair.left), gaze_from_mesh(cache.pair.right), cache.direct
    )
    return cache.pair, fused


def predict_gaze(model: Model, feature, templates: Optional[dict] = None) -> np.ndarray:
    return forward(model, feature, templates)[1]


@dataclass
class PairExample:
    """Feature pair plus the exact inter-view transform."""

    feature1: np.ndarray
    feature2: np.ndarray
    transform: SimilarityTransform


def pair_examples(view_pairs: list[ViewPair]) -> list[PairExample]:
    return [
        PairExample(vp.view1.feature, vp.view2.feature, vp.transform) for vp in view_pairs
    ]


@dataclass
class TrainData:
    gt: list[LabeledSample] = field(default_factory=list)
    pgt: list[LabeledSample] = field(default_factory=list)
    pairs: list[PairExample] = field(default_factory=list)


@dataclass
class TrainConfig:
    seed: int = 0
    epochs: int = 100
    batch_size: int = 64
    lr: float = 1e-2
    momentum: float = 0.9
    warmup_epochs: int = 3
    decay_epochs: tuple[int, ...] = (60, 80)
    decay_factor: float = 10.0
    weights: LossWeights = field(default_factory=LossWeights)
    use_gt: bool = True
    use_pgt: bool = False
    use_mv: bool = False
    mixing: str = "round_robin"
    # The angular losses have unbounded gradients approaching zero error, so
    # batch gradients are norm-clipped before the momentum update.
    grad_clip: float = 10.0  # 0 disables
    grad_check_every: int = 0  # 0 disables periodic gradient checks

    def __post_init__(self):
        if self.epochs <= 0 or self.batch_size <= 0:
            raise ParameterError("epochs and batch_size must be positive")
        if self.lr <= 0 or not (0.0 <= self.momentum < 1.0):
            raise ParameterError("invalid optimizer settings")
        if self.grad_clip < 0:
            raise ParameterError("grad_clip must be >= 0")
        self.decay_epochs = tuple(sorted(int(e) for e in self.decay_epochs))
        if self.mixing not in ("round_robin",):
            raise ParameterError(f"unknown mixing mode {self.mixing!r}")


@dataclass
class TrainHistory:
    epochs: list[int] = field(default_factory=list)
    loss_gt: list[Optional[float]] = field(default_factory=list)
    loss_pgt: list[Optional[float]] = field(default_factory=list)
    loss_mv: list[Optional[float]] = field(default_factory=list)
    val_error_deg: list[Optional[float]] = field(default_factory=list)
    grad_checks: list[tuple[int, float]] = field(default_factory=list)


def _lr_at(cfg: TrainConfig, epoch: int) -> float:
    lr = cfg.lr
    if cfg.warmup_epochs > 0 and epoch < cfg.warmup_epochs:
        lr *= (epoch + 1) / cfg.warmup_epochs
    for de in cfg.decay_epochs:
        if epoch >= de:
            lr /= cfg.decay_factor
    return lr


def _supervised_step(model, batch, w, templates):
    """Mean loss value and parameter gradient over one labeled batch."""
    total = 0.0
    grad = np.zeros_like(model.params)
    for lab in batch:
        cache = _forward_core(model, lab.feature, templates)
        lvg = L.combined_supervised_loss(cache.pair, cache.direct, lab.eyes, lab.gaze, w)
        total += lvg.value
        grad += _backward_core(model, cache, lvg.grad_vertices, lvg.grad_gaze)
    n = len(batch)
    return total / n, grad / n


def _mv_step(model, batch, w, templates):
    total = 0.0
    grad = np.zeros_like(model.params)
    for ex in batch:
        c1 = _forward_core(model, ex.feature1, templates)
        c2 = _forward_core(model, ex.feature2, templates)
        lvg = L.mv_loss(c1.pair, c1.direct, c2.pair, c2.direct, ex.transform, w)
        total += lvg.value
        grad += _backward_core(model, c1, lvg.grad_vertices, lvg.grad_gaze)
        grad += _backward_core(model, c2, lvg.grad_vertices_2, lvg.grad_gaze_2)
    n = len(batch)
    return total / n, grad / n


def grad_check(
    model: Model,
    batch: list[LabeledSample],
    w: Optional[LossWeights] = None,
    n_params: int = 60,
    h: float = 1e-5,
    seed: int = 0,
    templates: Optional[dict] = None,
) -> float:
    """Max relative error between analytic and central-difference parameter
    gradients on a (non-kink) batch."""
    w = w if w is not None else LossWeights()
    templates = templates if templates is not None else default_templates()
    value, analytic = _supervised_step(model, batch, w, templates)
    rng = _rng(seed, _SALT_INIT, 999)
    idx = rng.choice(model.params.size, size=min(n_params, model.params.size), replace=False)
    # Central differences cannot resolve gradients below the roundoff floor
    # value * eps / h, so the relative comparison bottoms out there.
    floor = max(1e-6, 1e-6 * (1.0 + abs(value)))
    worst = 0.0
    probe = model.clone()
    for i in idx:
        orig = probe.params[i]
        probe.params[i] = orig + h
        up, _ = _supervised_step(probe, batch, w, templates)
        probe.params[i] = orig - h
        dn, _ = _supervised_step(probe, batch, w, templates)
        probe.params[i] = orig
        numeric = (up - dn) / (2.0 * h)
        denom = max(abs(numeric), abs(analytic[i]), floor)
        worst = max(worst, abs(numeric - analytic[i]) / denom)
    return worst


def _batches(indices: np.ndarray, size: int) -> list[np.ndarray]:
    return [indices[i : i + size] for i in range(0, len(indices), size)]


def train(
    model: Model,
    data: TrainData,
    cfg: TrainConfig,
    val: Optional[list[LabeledSample]] = None,
    templates: Optional[dict] = None,
) -> tuple[Model, TrainHistory]:
    """Mini-batch SGD with momentum on the weighted objective.

    Enabled supervision sources are interleaved round robin within each
    epoch; shuffling is derived from the config seed, so identical inputs
    give identical histories."""
    templates = templates if templates is not None else default_templates()
    sources = []
    if cfg.use_gt:
        if not data.gt:
            raise ParameterError("use_gt is set but no gt samples were provided")
        sources.append("gt")
    if cfg.use_pgt:
        if not data.pgt:
            raise ParameterError("use_pgt is set but no pseudo-labeled samples were provided")
        sources.append("pgt")
    if cfg.use_mv:
        if not data.pairs:
            raise ParameterError("use_mv is set but no view pairs were provided")
        sources.append("mv")
    if not sources:
        raise ParameterError("no supervision source enabled")

    w = cfg.weights
    model = model.clone()
    velocity = np.zeros_like(model.params)
    history = TrainHistory()
    pools = {"gt": data.gt, "pgt": data.pgt, "mv": data.pairs}
    top_weight = {"gt": w.gt, "pgt": w.pgt, "mv": w.mv}

    for epoch in range(cfg.epochs):
        lr = _lr_at(cfg, epoch)
        rng = _rng(cfg.seed, _SALT_SHUFFLE, epoch)
        queues = {}
        for name in sources:
            order = rng.permutation(len(pools[name]))
            queues[name] = _batches(order, cfg.batch_size)
        sums = {name: 0.0 for name in sources}
        counts = {name: 0 for name in sources}

        slot = 0
        while any(queues[name] for name in sources):
            name = sources[slot % len(sources)]
            slot += 1
            if not queues[name]:
                continue
            batch_idx = queues[name].pop(0)
            pool = pools[name]
            batch = [pool[int(i)] for i in batch_idx]
            if name == "mv":
                value, grad = _mv_step(model, batch, w, templates)
            else:
                value, grad = _supervised_step(model, batch, w, templates)
            if not np.isfinite(value) or not np.all(np.isfinite(grad)):
                raise TrainingDivergedError(
                    f"non-finite {name} loss at epoch {epoch} (value {value})"
                )
            sums[name] += value
            counts[name] += 1
            if cfg.grad_clip > 0.0:
                norm = float(np.linalg.norm(grad))
                if norm > cfg.grad_clip:
                    grad = grad * (cfg.grad_clip / norm)
            velocity = cfg.momentum * velocity - lr * top_weight[name] * grad
            model.params += velocity

        history.epochs.append(epoch)
        history.loss_gt.append(sums["gt"] / counts["gt"] if "gt" in sources else None)
        history.loss_pgt.append(sums["pgt"] / counts["pgt"] if "pgt" in sources else None)
        history.loss_mv.append(sums["mv"] / counts["mv"] if "mv" in sources else None)
        if val:
            errs = [
                angular_error(predict_gaze(model, lab.feature, templates), lab.gaze)
                for lab in val
            ]
            history.val_error_deg.append(float(np.mean(errs)))
        else:
            history.val_error_deg.append(None)
        if cfg.grad_check_every and epoch % cfg.grad_check_every == 0 and data.gt:
            check = grad_check(model, data.gt[:4], w, n_params=20, templates=templates)
            history.grad_checks.append((epoch, check))
            if check > 1e-3:
                raise TrainingDivergedError(
                    f"gradient check failed at epoch {epoch}: {check:.3g}"
                )

    return model, history


@dataclass
class AblationScenario:
    """One training recipe in a supervision-source comparison."""

    name: str
    use_gt: bool = False
    use_pgt: bool = False
    use_mv: bool = False
    pgt_yaw_cap_deg: Optional[float] = None  # restricts the pseudo world's head yaw


@dataclass
class AblationSpec:
    """Scenario grid plus the worlds every scenario shares.

    All scenarios train from the same seed and evaluate on the same test
    world, so differences come only from the supervision sources.
    """

    scenarios: list
    test_world: "SceneConfig"
    gt_world: Optional["SceneConfig"] = None
    pgt_world: Optional["SceneConfig"] = None
    train: TrainConfig = field(default_factory=TrainConfig)
    seed: int = 0
    bins: tuple[float, ...] = (5.0, 20.0, 40.0, 90.0)
    delta_sigma_deg: float = 20.0
    descriptor: ModelDescriptor = field(default_factory=ModelDescriptor)


def run_ablation(spec: AblationSpec, templates: Optional[dict] = None,
                 log=None) -> list[dict]:
    """Train every scenario and tabulate mean test error per |yaw| bin.

    Returns one row dict per (scenario, bin): scenario, bin_max_yaw,
    mean_error_deg, count.  Pseudo worlds are regenerated per distinct yaw
    cap; view pairs always come from the pseudo world.
    """
    from dataclasses import replace as _replace

    from .gaze import yaw_binned_report
    from .pipelines import label_world_gt, label_world_pseudo
    from .synthworld import corrupt_pseudo_labels, generate, generate_view_pairs

    templates = templates if templates is not None else default_templates()
    test_samples = generate(spec.test_world)
    test_labels = label_world_gt(test_samples, templates)

    gt_labels = None
    if spec.gt_world is not None:
        gt_labels = label_world_gt(generate(spec.gt_world), templates)

    pgt_cache: dict = {}

    def pgt_data(cap):
        if cap in pgt_cache:
            return pgt_cache[cap]
        world = spec.pgt_world
        if cap is not None:
            world = _replace(world, yaw_range=(-float(cap), float(cap)))
        samples = generate(world)
        labels, _ = label_world_pseudo(samples, templates)
        labels = corrupt_pseudo_labels(labels, world)
        pairs = pair_examples(
            generate_view_pairs(samples, spec.delta_sigma_deg, seed=world.seed)
        )
        pgt_cache[cap] = (labels, pairs)
        return pgt_cache[cap]

    rows = []
    for scenario in spec.scenarios:
        data = TrainData()
        if scenario.use_gt:
            if gt_labels is None:
                raise ParameterError(f"scenario {scenario.name!r} needs a gt world")
            data.gt = gt_labels
        if scenario.use_pgt or scenario.use_mv:
            if spec.pgt_world is None:
                raise ParameterError(f"scenario {scenario.name!r} needs a pseudo world")
            labels, pairs = pgt_data(scenario.pgt_yaw_cap_deg)
            if scenario.use_pgt:
                data.pgt = labels
            if scenario.use_mv:
                data.pairs = pairs
        cfg = _replace(
            spec.train,
            seed=spec.seed,
            use_gt=scenario.use_gt,
            use_pgt=scenario.use_pgt,
            use_mv=scenario.use_mv,
        )
        model = init_model(spec.descriptor, seed=spec.seed)
        trained, _ = train(model, data, cfg, templates=templates)
        pairs_err = [
            (
                lab.head_pose[0],
                angular_error(predict_gaze(trained, lab.feature, templates), lab.gaze),
            )
            for lab in test_labels
        ]
        report = yaw_binned_report(pairs_err, spec.bins)
        if log is not None:
            wide = report[-1].mean_error_deg
            log(f"{scenario.name}: wide-pose error {wide:.3f} deg")
        for row in report:
            rows.append(
                {
                    "scenario": scenario.name,
                    "bin_max_yaw": row.max_yaw_deg,
                    "mean_error_deg": row.mean_error_deg,
                    "count": row.count,
                }
            )
    return rows
