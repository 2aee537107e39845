"""Command-line surface tying the toolkit together.

Subcommands: template, label, loss, synth, train, ablate, eval.
Conventions: diagnostics go to stderr, data to files or stdout ('-');
exit 0 on success, 1 on usage errors, 2 on data errors.  Every produced
file gets a ``<name>.manifest.json`` sidecar recording the command,
config hash, seed, and wall time.  The ``OCUMESH_SEED`` environment
variable overrides config seeds.
"""

from __future__ import annotations

import argparse
import os
import sys
import time
from dataclasses import replace
from pathlib import Path

import numpy as np

from . import __version__, io
from .errors import DataFormatError, OcumeshError
from .gaze import angular_error, fuse_gaze, gaze_from_mesh, yaw_binned_report
from .labeling import EyeMeshPair
from .losses import (
    LossWeights,
    combined_supervised_loss,
    edge_loss,
    gaze_loss,
    mv_loss,
    vertex_loss,
)
from .pipelines import label_sample_gt, label_sample_pseudo
from .synthworld import SceneConfig, corrupt_pseudo_labels, generate, generate_view_pairs
from .template import build_template, default_templates
from .trainer import (
    AblationScenario,
    AblationSpec,
    ModelDescriptor,
    TrainData,
    init_model,
    pair_examples,
    predict_gaze,
    train,
)


class _Parser(argparse.ArgumentParser):
    # Usage problems exit 1 (argparse defaults to 2, which we reserve for
    # data errors).
    def error(self, message):
        self.print_usage(sys.stderr)
        sys.stderr.write(f"{self.prog}: error: {message}\n")
        raise SystemExit(1)


def _env_seed():
    raw = os.environ.get("OCUMESH_SEED")
    if raw is None:
        return None
    try:
        return int(raw)
    except ValueError:
        raise DataFormatError(f"OCUMESH_SEED must be an integer, got {raw!r}")


def _load_templates(template_dir):
    if template_dir is None:
        return default_templates()
    d = Path(template_dir)
    return {
        side: io.template_from_dict(io.read_json(d / f"eyeball_{side}.json"))
        for side in ("left", "right")
    }


def build_parser() -> _Parser:
    parser = _Parser(prog="ocumesh", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=f"ocumesh {__version__}")
    parser.add_argument(
        "--threads",
        type=int,
        default=1,
        metavar="N",
        help="cap on worker parallelism (the numpy backend runs single-process)",
    )
    sub = parser.add_subparsers(dest="command", metavar="command", parser_class=_Parser)

    p = sub.add_parser("template", help="emit a template mesh JSON")
    p.add_argument("--side", choices=("left", "right"), required=True)
    p.add_argument("--sectors", type=int, default=32)
    p.add_argument("--stacks", type=int, default=16)
    p.add_argument("--out", required=True, help="output path or '-' for stdout")

    p = sub.add_parser("label", help="generate (pseudo-)labels")
    p.add_argument("--mode", choices=("gt", "pseudo"), required=True)
    p.add_argument("--in", dest="inp", required=True, metavar="SAMPLES")
    p.add_argument("--template-dir", default=None)
    p.add_argument("--out", required=True)
    p.add_argument("--pitch-noise-deg", type=float, default=0.0,
                   help="pseudo-label pitch corruption sigma")
    p.add_argument("--yaw-noise-deg", type=float, default=0.0)
    p.add_argument("--noise-seed", type=int, default=0)

    p = sub.add_parser("loss", help="evaluate a loss on documents")
    p.add_argument("--kind", choices=("vertex", "edge", "gaze", "gt", "mv"), required=True)
    p.add_argument("--a", required=True)
    p.add_argument("--b", required=True)
    p.add_argument("--transform", default=None)
    p.add_argument("--weights", default=None)
    p.add_argument("--template-dir", default=None)
    p.add_argument("--out", default="-")

    p = sub.add_parser("synth", help="generate a synthetic world")
    p.add_argument("--config", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--pairs", default=None)
    p.add_argument("--delta-sigma", type=float, default=20.0)

    p = sub.add_parser("train", help="train the gaze regressor")
    p.add_argument("--world", required=True)
    p.add_argument("--pairs", default=None)
    p.add_argument("--config", required=True)
    p.add_argument("--out", required=True, metavar="MODEL")
    p.add_argument("--history", default=None)
    p.add_argument("--plot", default=None, help="training-curve figure path")
    p.add_argument("--val-world", default=None)
    p.add_argument("--template-dir", default=None)
    p.add_argument("--pgt-pitch-noise-deg", type=float, default=0.0)
    p.add_argument("--pgt-yaw-noise-deg", type=float, default=0.0)
    p.add_argument("--noise-seed", type=int, default=0)

    p = sub.add_parser("ablate", help="run a scenario comparison")
    p.add_argument("--spec", required=True)
    p.add_argument("--out", required=True)

    p = sub.add_parser("eval", help="score predictions against labels")
    p.add_argument("--pred", default=None)
    p.add_argument("--model", default=None)
    p.add_argument("--world", default=None)
    p.add_argument("--pred-out", default=None)
    p.add_argument("--gt", required=True, metavar="LABELS")
    p.add_argument("--bins", default="5,20,40,90")
    p.add_argument("--out", required=True, metavar="REPORT")
    p.add_argument("--plot", default=None, help="gaze overlap scatter figure path")
    p.add_argument("--template-dir", default=None)
    return parser


def _cmd_template(args) -> int:
    t0 = time.time()
    t = build_template(args.sectors, args.stacks, args.side)
    doc = io.template_to_dict(t)
    io.write_json(args.out, doc)
    io.write_manifest(
        args.out,
        "template",
        {"side": args.side, "sectors": args.sectors, "stacks": args.stacks},
        None,
        [],
        [args.out],
        time.time() - t0,
    )
    return 0


def _cmd_label(args) -> int:
    t0 = time.time()
    templates = _load_templates(args.template_dir)
    records = io.read_jsonl(args.inp)
    docs = []
    labels = []
    diags = []
    for line, doc in records:
        rec = io.sample_from_dict(doc, templates, path=args.inp, line=line)
        if args.mode == "gt":
            if rec.anchors.gaze is None:
                raise DataFormatError(
                    f"sample {rec.id!r}: gt labeling requires a gaze field",
                    path=args.inp,
                    line=line,
                )
            labels.append(label_sample_gt(rec, templates))
            diags.append(None)
        else:
            label, diag = label_sample_pseudo(rec, templates)
            labels.append(label)
            diags.append(diag)
    if args.mode == "pseudo" and (args.pitch_noise_deg > 0 or args.yaw_noise_deg > 0):
        seed = _env_seed()
        noise_cfg = SceneConfig(
            seed=args.noise_seed if seed is None else seed,
            pitch_label_noise_deg=args.pitch_noise_deg,
            yaw_label_noise_deg=args.yaw_noise_deg,
        )
        labels = corrupt_pseudo_labels(labels, noise_cfg)
    for lab, diag in zip(labels, diags):
        docs.append(io.labeled_sample_to_dict(lab, diag))
    io.write_jsonl(args.out, docs)
    io.write_manifest(
        args.out,
        "label",
        {
            "mode": args.mode,
            "pitch_noise_deg": args.pitch_noise_deg,
            "yaw_noise_deg": args.yaw_noise_deg,
        },
        args.noise_seed,
        [args.inp],
        [args.out],
        time.time() - t0,
    )
    return 0


def _loss_inputs(doc, templates, path):
    eyes = None
    if "eyes" in doc:
        eyes = EyeMeshPair(
            left=io.eye_mesh_from_dict(doc["eyes"]["left"], templates["left"], "left", path),
            right=io.eye_mesh_from_dict(doc["eyes"]["right"], templates["right"], "right", path),
        )
    gaze = None
    if doc.get("gaze") is not None:
        gaze = np.asarray(doc["gaze"], dtype=float)
    return eyes, gaze


def _cmd_loss(args) -> int:
    templates = _load_templates(args.template_dir)
    doc_a = io.read_json(args.a)
    doc_b = io.read_json(args.b)
    eyes_a, gaze_a = _loss_inputs(doc_a, templates, args.a)
    eyes_b, gaze_b = _loss_inputs(doc_b, templates, args.b)
    weights = LossWeights(**io.read_json(args.weights)) if args.weights else LossWeights()

    def need(cond, what):
        if not cond:
            raise DataFormatError(f"loss kind {args.kind!r} needs {what}")

    if args.kind == "vertex":
        need(eyes_a is not None and eyes_b is not None, "eye meshes in both documents")
        result = vertex_loss(eyes_a, eyes_b)
    elif args.kind == "edge":
        need(eyes_a is not None and eyes_b is not None, "eye meshes in both documents")
        result = edge_loss(eyes_a, eyes_b)
    elif args.kind == "gaze":
        need(gaze_a is not None and gaze_b is not None, "gaze vectors in both documents")
        result = gaze_loss(gaze_a, gaze_b)
    elif args.kind == "gt":
        need(eyes_a is not None and eyes_b is not None, "eye meshes in both documents")
        need(gaze_a is not None and gaze_b is not None, "gaze vectors in both documents")
        result = combined_supervised_loss(eyes_a, gaze_a, eyes_b, gaze_b, weights)
    else:  # mv
        need(args.transform is not None, "--transform")
        need(eyes_a is not None and eyes_b is not None, "eye meshes in both documents")
        need(gaze_a is not None and gaze_b is not None, "gaze vectors in both documents")
        p = io.transform_from_dict(io.read_json(args.transform), path=args.transform)
        result = mv_loss(eyes_a, gaze_a, eyes_b, gaze_b, p, weights)

    out_doc = {"value": result.value}
    grads = {}
    if result.grad_vertices is not None:
        for side in ("left", "right"):
            grads[f"vertices_{side}_norm"] = float(
                np.linalg.norm(result.grad_vertices[side])
            )
    if result.grad_gaze is not None:
        grads["gaze_norm"] = float(np.linalg.norm(result.grad_gaze))
    if grads:
        out_doc["grad_norms"] = grads
    io.write_json(args.out, out_doc)
    return 0


def _cmd_synth(args) -> int:
    t0 = time.time()
    cfg_doc = io.read_json(args.config)
    cfg = io.scene_config_from_dict(cfg_doc, path=args.config)
    seed = _env_seed()
    if seed is not None:
        cfg = replace(cfg, seed=seed)
    samples = generate(cfg)
    io.write_jsonl(args.out, [io.sample_to_dict(s) for s in samples])
    outputs = [args.out]
    if args.pairs:
        pairs = generate_view_pairs(samples, args.delta_sigma, seed=cfg.seed)
        io.write_jsonl(args.pairs, [io.view_pair_to_dict(vp) for vp in pairs])
        outputs.append(args.pairs)
    wall = time.time() - t0
    for out in outputs:
        io.write_manifest(out, "synth", cfg_doc, cfg.seed, [args.config], outputs, wall)
    return 0


def _cmd_train(args) -> int:
    t0 = time.time()
    templates = _load_templates(args.template_dir)
    cfg_doc = io.read_json(args.config)
    cfg = io.train_config_from_dict(cfg_doc, path=args.config)
    seed = _env_seed()
    if seed is not None:
        cfg = replace(cfg, seed=seed)

    records = [
        io.sample_from_dict(doc, templates, path=args.world, line=line)
        for line, doc in io.read_jsonl(args.world)
    ]
    data = TrainData()
    if cfg.use_gt:
        data.gt = [label_sample_gt(r, templates) for r in records if r.anchors.gaze is not None]
    if cfg.use_pgt:
        labels = [label_sample_pseudo(r, templates)[0] for r in records]
        if args.pgt_pitch_noise_deg > 0 or args.pgt_yaw_noise_deg > 0:
            noise_cfg = SceneConfig(
                seed=args.noise_seed,
                pitch_label_noise_deg=args.pgt_pitch_noise_deg,
                yaw_label_noise_deg=args.pgt_yaw_noise_deg,
            )
            labels = corrupt_pseudo_labels(labels, noise_cfg)
        data.pgt = labels
    if cfg.use_mv:
        if not args.pairs:
            raise DataFormatError("training config enables use_mv but --pairs was not given")
        data.pairs = [
            io.pair_example_from_dict(doc, path=args.pairs, line=line)
            for line, doc in io.read_jsonl(args.pairs)
        ]

    val = None
    if args.val_world:
        val = [
            label_sample_gt(io.sample_from_dict(doc, templates, path=args.val_world, line=line),
                            templates)
            for line, doc in io.read_jsonl(args.val_world)
        ]

    descriptor = ModelDescriptor(**cfg_doc.get("model", {}))
    model = init_model(descriptor, seed=cfg.seed)
    trained, history = train(model, data, cfg, val=val, templates=templates)

    io.write_json(args.out, io.model_to_dict(trained))
    outputs = [args.out]
    if args.history:
        rows = []
        for i, epoch in enumerate(history.epochs):
            rows.append(
                [
                    epoch,
                    history.loss_gt[i],
                    history.loss_pgt[i],
                    history.loss_mv[i],
                    history.val_error_deg[i],
                ]
            )
        io.write_table_csv(
            args.history,
            ["epoch", "loss_gt", "loss_pgt", "loss_mv", "val_error_deg"],
            rows,
        )
        outputs.append(args.history)
    if args.plot:
        from .plots import history_curves

        history_curves(history, args.plot)
        outputs.append(args.plot)
    wall = time.time() - t0
    for out in outputs:
        io.write_manifest(out, "train", cfg_doc, cfg.seed, [args.world], outputs, wall)
    return 0


def _cmd_ablate(args) -> int:
    t0 = time.time()
    from .trainer import run_ablation

    spec_doc = io.read_json(args.spec)
    seed = _env_seed()
    if seed is not None:
        spec_doc["seed"] = seed
    spec = AblationSpec(
        scenarios=[AblationScenario(**sc) for sc in spec_doc["scenarios"]],
        test_world=io.scene_config_from_dict(spec_doc["test_world"]),
        gt_world=(
            io.scene_config_from_dict(spec_doc["gt_world"])
            if spec_doc.get("gt_world")
            else None
        ),
        pgt_world=(
            io.scene_config_from_dict(spec_doc["pgt_world"])
            if spec_doc.get("pgt_world")
            else None
        ),
        train=io.train_config_from_dict(spec_doc.get("train", {})),
        seed=int(spec_doc.get("seed", 0)),
        bins=tuple(spec_doc.get("bins", (5.0, 20.0, 40.0, 90.0))),
        delta_sigma_deg=float(spec_doc.get("delta_sigma_deg", 20.0)),
        descriptor=ModelDescriptor(**spec_doc.get("model", {})),
    )
    rows = run_ablation(spec, log=lambda msg: print(msg, file=sys.stderr))
    io.write_table_csv(
        args.out,
        ["scenario", "bin_max_yaw", "mean_error_deg", "count"],
        [[r["scenario"], r["bin_max_yaw"], r["mean_error_deg"], r["count"]] for r in rows],
    )
    io.write_manifest(args.out, "ablate", spec_doc, spec.seed, [args.spec], [args.out],
                      time.time() - t0)
    return 0


def _cmd_eval(args) -> int:
    t0 = time.time()
    templates = _load_templates(args.template_dir)
    try:
        bins = [float(b) for b in args.bins.split(",") if b]
    except ValueError:
        raise DataFormatError(f"--bins must be comma-separated numbers, got {args.bins!r}")

    gt_labels = {}
    for line, doc in io.read_jsonl(args.gt):
        lab = io.labeled_sample_from_dict(doc, templates, path=args.gt, line=line)
        gt_labels[lab.sample_id] = lab

    preds = {}
    if args.pred is not None:
        for line, doc in io.read_jsonl(args.pred):
            if "id" not in doc or "gaze" not in doc:
                raise DataFormatError("prediction records need 'id' and 'gaze'",
                                      path=args.pred, line=line)
            preds[str(doc["id"])] = np.asarray(doc["gaze"], dtype=float)
    else:
        if args.model is None or args.world is None:
            raise DataFormatError("eval needs either --pred or both --model and --world")
        model = io.model_from_dict(io.read_json(args.model), path=args.model)
        pred_docs = []
        for line, doc in io.read_jsonl(args.world):
            rec = io.sample_from_dict(doc, templates, path=args.world, line=line)
            g = predict_gaze(model, rec.feature, templates)
            preds[rec.id] = g
            pred_docs.append({"id": rec.id, "gaze": g.tolist()})
        if args.pred_out:
            io.write_jsonl(args.pred_out, pred_docs)

    pairs = []
    pred_list = []
    gt_list = []
    skipped = 0
    for sample_id, gaze in preds.items():
        lab = gt_labels.get(sample_id)
        if lab is None:
            skipped += 1
            continue
        err = angular_error(gaze, lab.gaze)
        pairs.append((lab.head_pose[0], err))
        pred_list.append(gaze)
        gt_list.append(lab.gaze)
    if skipped:
        print(f"eval: {skipped} predictions had no matching label", file=sys.stderr)
    if not pairs:
        raise DataFormatError("no prediction/label pairs to evaluate")

    rows = yaw_binned_report(pairs, bins)
    io.write_report_csv(args.out, rows)
    outputs = [args.out]
    if args.plot:
        from .plots import gaze_overlap_scatter

        gaze_overlap_scatter(pred_list, gt_list, args.plot)
        outputs.append(args.plot)
    wall = time.time() - t0
    for out in outputs:
        io.write_manifest(out, "eval", {"bins": bins}, None, [args.gt], outputs, wall)
    return 0


_COMMANDS = {
    "template": _cmd_template,
    "label": _cmd_label,
    "loss": _cmd_loss,
    "synth": _cmd_synth,
    "train": _cmd_train,
    "ablate": _cmd_ablate,
    "eval": _cmd_eval,
}


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as e:
        return int(e.code or 0)
    if args.command is None:
        parser.print_usage(sys.stderr)
        return 1
    if args.threads < 1:
        sys.stderr.write("ocumesh: error: --threads must be >= 1\n")
        return 1
    try:
        return _COMMANDS[args.command](args)
    except DataFormatError as e:
        print(f"ocumesh {args.command}: {e}", file=sys.stderr)
        return 2
    except OcumeshError as e:
        print(f"ocumesh {args.command}: {e}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
