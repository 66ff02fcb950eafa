"""Command-line entry points.

Subcommands: synth, train, eval, ablate, gradcheck, predict, bench.
Every command is deterministic given its flags and seed; HG_SEED
provides the seed default when --seed is not passed.
"""

from __future__ import annotations

import argparse
import json
import math
import os
import sys
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .annotations import AnnotationError, read_image
from .bench import format_table, run_benchmark, to_csv as bench_csv
from .checkpoint import CheckpointError, load_checkpoint, save_checkpoint
from .evaluation import evaluate_predictions, predict_dataset
from .gradcheck import standard_checks
from .model import ModelConfig, count_parameters, init_params, parameter_count
from .svgplot import line_chart
from .synth import default_skeleton, export, generate, load_dataset
from .training import TrainCallbacks, TrainConfig, TrainState, train


def _default_seed():
    return int(os.environ.get("HG_SEED", "0"))


def _resolve_seed(args):
    return args.seed if args.seed is not None else _default_seed()


# ---------------------------------------------------------------------------
# Experiment configuration files
# ---------------------------------------------------------------------------

@dataclass
class ExperimentConfig:
    """Declarative description of one training run.

    JSON shape (all fields optional unless noted):
      {
        "model": {... ModelConfig fields, num_joints from data if absent},
        "train": {... TrainConfig fields},
        "data": {"train_annotations": path (required), "val_annotations": path},
        "out_dir": "runs/exp1",
        "seed": 0,
        "eval": {"threshold": 0.5, "flip": false},
        "checkpoint_every": 1000
      }
    Unknown keys anywhere are rejected.
    """

    model: dict
    train: dict
    train_annotations: str
    val_annotations: str | None
    out_dir: str
    seed: int
    eval_threshold: float
    eval_flip: bool
    checkpoint_every: int


def _check_keys(obj, allowed, where):
    unknown = sorted(set(obj) - set(allowed))
    if unknown:
        raise ValueError(f"unknown key(s) {unknown} in {where}; allowed: {sorted(allowed)}")


def load_experiment_config(path):
    with open(path, encoding="utf-8") as fh:
        raw = json.load(fh)
    _check_keys(raw, {"model", "train", "data", "out_dir", "seed", "eval", "checkpoint_every"}, str(path))
    data = raw.get("data", {})
    _check_keys(data, {"train_annotations", "val_annotations"}, f"{path}:data")
    if "train_annotations" not in data:
        raise ValueError(f"{path}: data.train_annotations is required")
    eval_cfg = raw.get("eval", {})
    _check_keys(eval_cfg, {"threshold", "flip"}, f"{path}:eval")
    model = raw.get("model", {})
    _check_keys(
        model,
        {
            "num_joints",
            "num_stacks",
            "num_features",
            "hourglass_depth",
            "modules_per_location",
            "input_resolution",
        },
        f"{path}:model",
    )
    train_d = raw.get("train", {})
    _check_keys(train_d, set(TrainConfig().__dict__), f"{path}:train")
    return ExperimentConfig(
        model=model,
        train=train_d,
        train_annotations=data["train_annotations"],
        val_annotations=data.get("val_annotations"),
        out_dir=raw.get("out_dir", "runs/default"),
        seed=int(raw.get("seed", _default_seed())),
        eval_threshold=float(eval_cfg.get("threshold", 0.5)),
        eval_flip=bool(eval_cfg.get("flip", False)),
        checkpoint_every=int(raw.get("checkpoint_every", 1000)),
    )


# ---------------------------------------------------------------------------
# synth
# ---------------------------------------------------------------------------

def cli_synth(args):
    seed = _resolve_seed(args)
    dataset = generate(
        default_skeleton(),
        count=args.count,
        image_size=args.size,
        seed=seed,
        occlusion_prob=args.occlusion,
        truncation_prob=args.truncation,
        distractor_prob=args.distractors,
    )
    path = export(dataset, args.out)
    occluded = sum(int((~s.annotation.visible & s.annotation.present).any()) for s in dataset.samples)
    truncated = sum(int((~s.annotation.present).any()) for s in dataset.samples)
    print(f"wrote {len(dataset)} samples to {path}")
    print(f"image size {args.size}, seed {seed}, {occluded} samples with occlusion, {truncated} truncated")
    return 0


# ---------------------------------------------------------------------------
# train
# ---------------------------------------------------------------------------

def _model_config_from(model_dict, num_joints, args=None):
    d = dict(model_dict)
    d.setdefault("num_joints", num_joints)
    if args is not None:
        for key, flag in (
            ("num_stacks", "stacks"),
            ("num_features", "features"),
            ("hourglass_depth", "depth"),
            ("modules_per_location", "modules"),
            ("input_resolution", "input_res"),
        ):
            value = getattr(args, flag, None)
            if value is not None:
                d[key] = value
    base = ModelConfig.desk_scale(num_joints).to_dict()
    base.update(d)
    return ModelConfig.from_dict(base)


def _write_train_outputs(out_dir, log, params, state, optimizer, train_config, seed):
    out_dir.mkdir(parents=True, exist_ok=True)
    (out_dir / "train_log.csv").write_text(log.to_csv(), encoding="utf-8")
    save_checkpoint(
        out_dir / "checkpoint_latest.hgnet",
        params,
        state,
        optimizer,
        train_config,
        rng={"scheme": "counter", "seed": seed},
    )
    if log.records:
        iters = [r.iteration for r in log.records]
        loss_svg = line_chart(
            [("train loss", iters, [r.train_loss for r in log.records])],
            title="training loss",
            xlabel="iteration",
            ylabel="loss",
        )
        (out_dir / "loss_curve.svg").write_text(loss_svg, encoding="utf-8")
        stacks = len(log.records[0].val_acc)
        acc_series = [
            (f"stack {s}", iters, [r.val_acc[s] for r in log.records]) for s in range(stacks)
        ]
        (out_dir / "accuracy_curves.svg").write_text(
            line_chart(acc_series, title="validation accuracy", xlabel="iteration", ylabel="PCK"),
            encoding="utf-8",
        )


def cli_train(args):
    if args.config:
        exp = load_experiment_config(args.config)
    else:
        if not args.annotations:
            raise ValueError("either --config or --annotations is required")
        exp = ExperimentConfig(
            model={},
            train={},
            train_annotations=args.annotations,
            val_annotations=args.val_annotations,
            out_dir=args.out or "runs/default",
            seed=_default_seed(),
            eval_threshold=0.5,
            eval_flip=False,
            checkpoint_every=1000,
        )
    if args.out:
        exp.out_dir = args.out
    if args.seed is not None:
        exp.seed = args.seed
    out_dir = Path(exp.out_dir)

    aset, images = load_dataset(exp.train_annotations)
    val_data = None
    if exp.val_annotations or args.val_annotations:
        val_aset, val_images = load_dataset(args.val_annotations or exp.val_annotations)
        val_data = (val_aset, val_images)

    if args.resume:
        loaded = load_checkpoint(args.resume)
        params, state, optimizer = loaded.params, loaded.state, loaded.optimizer
        train_config = loaded.train_config or TrainConfig(seed=exp.seed)
        print(f"resuming from {args.resume} at iteration {state.iteration}")
    else:
        train_dict = dict(exp.train)
        train_dict.setdefault("seed", exp.seed)
        for key, flag in (
            ("max_iterations", "iters"),
            ("batch_size", "batch_size"),
            ("learning_rate", "lr"),
            ("eval_every", "eval_every"),
        ):
            value = getattr(args, flag, None)
            if value is not None:
                train_dict[key] = value
        if args.no_intermediate_supervision:
            train_dict["intermediate_supervision"] = False
        train_config = TrainConfig.from_dict(train_dict)
        model_config = _model_config_from(exp.model, aset.num_joints, args)
        if model_config.num_joints != aset.num_joints:
            raise ValueError(
                f"model has {model_config.num_joints} joints, dataset has {aset.num_joints}"
            )
        params = init_params(model_config, seed=exp.seed)
        state, optimizer = None, None
    if args.iters is not None:
        train_config.max_iterations = args.iters

    from .model import named_parameters
    from .optim import RMSprop
    from .training import TrainLog

    log = TrainLog()
    state = state or TrainState(lr=train_config.learning_rate)
    if optimizer is None:
        optimizer = RMSprop([t for _, t in named_parameters(params)], lr=state.lr)

    def on_checkpoint(iteration):
        # train() mutates params/state/optimizer in place, so the
        # closure always snapshots the current run.
        if iteration % exp.checkpoint_every == 0:
            _write_train_outputs(out_dir, log, params, state, optimizer, train_config, exp.seed)

    def on_eval(record):
        accs = " ".join(f"{a:.3f}" for a in record.val_acc)
        print(
            f"iter {record.iteration:>6}  lr {record.lr:.6g}  loss {record.train_loss:.6g}  pck/stack [{accs}]"
        )

    callbacks = TrainCallbacks(on_eval=on_eval, on_checkpoint=on_checkpoint)
    log, state, optimizer = train(
        params,
        (aset, images),
        train_config,
        val_data=val_data,
        callbacks=callbacks,
        state=state,
        optimizer=optimizer,
        log=log,
    )
    _write_train_outputs(out_dir, log, params, state, optimizer, train_config, exp.seed)
    print(f"done: {state.iteration} iterations, outputs in {out_dir}")
    print(f"model parameters: {count_parameters(params)}")
    return 0


# ---------------------------------------------------------------------------
# eval
# ---------------------------------------------------------------------------

def cli_eval(args):
    loaded = load_checkpoint(args.checkpoint)
    params = loaded.params
    aset, images = load_dataset(args.annotations)
    if params.config.num_joints != aset.num_joints:
        raise ValueError(
            f"checkpoint expects {params.config.num_joints} joints, dataset has {aset.num_joints}"
        )
    preds = predict_dataset(
        params, aset.samples, images, flip=args.flip, flip_pairs=aset.flip_pairs
    )
    report = evaluate_predictions(
        preds.final,
        aset.samples,
        aset.joint_names,
        threshold=args.threshold,
        presence_stats=preds.mean_activation,
    )
    print(report.summary_table())
    vis = report.split
    print(
        f"visible-only: {100 * vis.visible_only.mean:.1f}   "
        f"occluded-only: {100 * vis.occluded_only.mean:.1f}"
        if math.isfinite(vis.occluded_only.mean)
        else f"visible-only: {100 * vis.visible_only.mean:.1f}   occluded-only: n/a"
    )
    print("presence AUC (mean activation):")
    for name, curve in zip(aset.joint_names, report.presence):
        auc = f"{curve.auc:.3f}" if math.isfinite(curve.auc) else "n/a (single class)"
        print(f"  {name:<12} {auc}")
    if args.out:
        out_dir = Path(args.out)
        out_dir.mkdir(parents=True, exist_ok=True)
        (out_dir / "report.csv").write_text(report.to_csv(), encoding="utf-8")
        (out_dir / "summary.txt").write_text(report.summary_table(), encoding="utf-8")
        curve_svg = line_chart(
            [("Total", report.curve_thresholds, [r.mean for r in report.curve])],
            title=f"PCK vs threshold (flip={'on' if args.flip else 'off'})",
            xlabel="threshold (fraction of head segment)",
            ylabel="PCK",
        )
        (out_dir / "pck_curves.svg").write_text(curve_svg, encoding="utf-8")
        print(f"report written to {out_dir}")
    return 0


# ---------------------------------------------------------------------------
# ablate
# ---------------------------------------------------------------------------

def _parse_variants(text):
    variants = []
    for part in text.split(","):
        s, _, m = part.strip().partition("x")
        variants.append((int(s), int(m)))
    return variants


def cli_ablate(args):
    seed = _resolve_seed(args)
    aset, images = load_dataset(args.annotations)
    val_data = None
    if args.val_annotations:
        val_data = load_dataset(args.val_annotations)
    variants = _parse_variants(args.variants)
    configs = [
        ModelConfig(
            num_joints=aset.num_joints,
            num_stacks=s,
            num_features=args.features,
            hourglass_depth=args.depth,
            modules_per_location=m,
            input_resolution=args.input_res,
        )
        for s, m in variants
    ]
    counts = [parameter_count(c) for c in configs]
    spread = (max(counts) - min(counts)) / min(counts)
    if spread > 0.10:
        print(f"warning: parameter counts differ by {100 * spread:.1f}% (> 10%)", file=sys.stderr)
    rows = ["variant,stacks,modules,parameters,final_acc,midpoint_acc"]
    print(f"{'variant':<8} {'params':>10} {'final':>7} {'midpoint':>9}")
    for (s, m), cfg, cnt in zip(variants, configs, counts):
        t_cfg = TrainConfig(
            max_iterations=args.iters,
            eval_every=max(1, args.iters),
            batch_size=args.batch_size,
            seed=seed,
        )
        params = init_params(cfg, seed=seed)
        log, _, _ = train(params, (aset, images), t_cfg, val_data=val_data)
        accs = log.records[-1].val_acc
        final_acc = accs[-1]
        midpoint = accs[max(0, math.ceil(s / 2) - 1)]
        rows.append(f"{s}x{m},{s},{m},{cnt},{final_acc:.6g},{midpoint:.6g}")
        print(f"{s}x{m:<6} {cnt:>10} {final_acc:>7.3f} {midpoint:>9.3f}")
    if args.out:
        out = Path(args.out)
        out.parent.mkdir(parents=True, exist_ok=True)
        out.write_text("\n".join(rows) + "\n", encoding="utf-8")
        print(f"ablation table written to {out}")
    return 0


# ---------------------------------------------------------------------------
# gradcheck
# ---------------------------------------------------------------------------

def cli_gradcheck(args):
    checks = standard_checks(step=args.step, tolerance=args.tolerance, seed=_resolve_seed(args))
    failed = 0
    print(f"{'check':<34} {'max rel err':>12} {'status':>8}")
    for name, report in checks:
        status = "pass" if report.passed else "FAIL"
        failed += 0 if report.passed else 1
        print(f"{name:<34} {report.max_rel_error:>12.3e} {status:>8}")
    if failed:
        print(f"{failed} check(s) failed", file=sys.stderr)
        return 1
    print("all gradient checks passed")
    return 0


# ---------------------------------------------------------------------------
# predict
# ---------------------------------------------------------------------------

def cli_predict(args):
    loaded = load_checkpoint(args.checkpoint)
    params = loaded.params
    image = read_image(args.image)

    @dataclass
    class _Ann:
        center: np.ndarray
        scale: float
        joints: np.ndarray
        present: np.ndarray
        visible: np.ndarray
        norm_length: float
        image_id: str = ""

    k = params.config.num_joints
    ann = _Ann(
        center=np.array(args.center, dtype=np.float64),
        scale=args.scale,
        joints=np.zeros((k, 2)),
        present=np.ones(k, dtype=bool),
        visible=np.ones(k, dtype=bool),
        norm_length=1.0,
    )
    flip_pairs = [list(p) for p in default_skeleton().flip_pairs] if args.flip else []
    preds = predict_dataset(params, [ann], [image], flip=args.flip, flip_pairs=flip_pairs)
    names = list(default_skeleton().joint_names) if k == 14 else [f"joint_{i}" for i in range(k)]
    out = [
        {
            "joint": names[j],
            "x": round(float(preds.final[0, j, 0]), 6),
            "y": round(float(preds.final[0, j, 1]), 6),
            "max_activation": round(float(preds.max_activation[0, j]), 6),
            "mean_activation": round(float(preds.mean_activation[0, j]), 6),
        }
        for j in range(k)
    ]
    print(json.dumps(out, indent=2))
    if args.heatmaps:
        from .evaluation import _eval_crop
        from .model import stacked_forward
        from .tensor import Tensor

        crop, _ = _eval_crop(image, ann, params.config.input_resolution)
        hm = stacked_forward(Tensor(crop[None]), params, "eval")[-1].data[0]
        np.save(args.heatmaps, hm)
        print(f"heatmaps ({hm.shape[0]}x{hm.shape[1]}x{hm.shape[2]}) saved to {args.heatmaps}", file=sys.stderr)
    return 0


# ---------------------------------------------------------------------------
# bench
# ---------------------------------------------------------------------------

def cli_bench(args):
    rows = run_benchmark(repeats=args.repeats, seed=_resolve_seed(args))
    print(format_table(rows))
    if args.csv:
        Path(args.csv).write_text(bench_csv(rows), encoding="utf-8")
        print(f"csv written to {args.csv}")
    return 0


# ---------------------------------------------------------------------------
# parser
# ---------------------------------------------------------------------------

def build_parser():
    parser = argparse.ArgumentParser(
        prog="hgnet", description="stacked-hourglass keypoint estimation toolkit"
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("synth", help="generate a synthetic figure dataset")
    p.add_argument("--out", required=True, help="output directory")
    p.add_argument("--count", type=int, required=True, help="number of samples (>= 1)")
    p.add_argument("--size", type=int, default=128, help="image side in pixels")
    p.add_argument("--seed", type=int, default=None, help="generator seed (default: HG_SEED or 0)")
    p.add_argument("--occlusion", type=float, default=0.15, help="per-sample occlusion probability")
    p.add_argument("--truncation", type=float, default=0.10, help="per-sample truncation probability")
    p.add_argument("--distractors", type=float, default=0.0, help="second-figure probability")
    p.set_defaults(func=cli_synth)

    p = sub.add_parser("train", help="train a model")
    p.add_argument("--config", help="experiment config JSON")
    p.add_argument("--annotations", help="training annotation file")
    p.add_argument("--val-annotations", help="held-out annotation file")
    p.add_argument("--out", help="output directory")
    p.add_argument("--iters", type=int, default=None, help="max iterations")
    p.add_argument("--batch-size", type=int, default=None)
    p.add_argument("--lr", type=float, default=None)
    p.add_argument("--eval-every", type=int, default=None)
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--stacks", type=int, default=None)
    p.add_argument("--features", type=int, default=None)
    p.add_argument("--depth", type=int, default=None)
    p.add_argument("--modules", type=int, default=None)
    p.add_argument("--input-res", type=int, default=None)
    p.add_argument("--no-intermediate-supervision", action="store_true", help="loss on final stack only")
    p.add_argument("--resume", help="checkpoint to continue from")
    p.add_argument(
        "--deterministic",
        action="store_true",
        help="accepted for compatibility; loading is always serial and counter-seeded",
    )
    p.set_defaults(func=cli_train)

    p = sub.add_parser("eval", help="evaluate a checkpoint")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--annotations", required=True)
    p.add_argument("--flip", action="store_true", help="flip-averaged inference")
    p.add_argument("--threshold", type=float, default=0.5)
    p.add_argument("--out", help="directory for report.csv / summary.txt / pck_curves.svg")
    p.set_defaults(func=cli_eval)

    p = sub.add_parser("ablate", help="equal-capacity stacking comparison")
    p.add_argument("--annotations", required=True)
    p.add_argument("--val-annotations")
    p.add_argument("--variants", default="8x1,4x2,2x4", help="comma-separated stacks x modules")
    p.add_argument("--features", type=int, default=64)
    p.add_argument("--depth", type=int, default=2)
    p.add_argument("--input-res", type=int, default=64)
    p.add_argument("--iters", type=int, default=100)
    p.add_argument("--batch-size", type=int, default=4)
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--out", help="CSV output path")
    p.set_defaults(func=cli_ablate)

    p = sub.add_parser("gradcheck", help="finite-difference checks for every op")
    p.add_argument("--step", type=float, default=1e-5)
    p.add_argument("--tolerance", type=float, default=1e-4)
    p.add_argument("--seed", type=int, default=None)
    p.set_defaults(func=cli_gradcheck)

    p = sub.add_parser("predict", help="keypoints for one image")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--image", required=True)
    p.add_argument("--center", type=float, nargs=2, required=True, metavar=("X", "Y"))
    p.add_argument("--scale", type=float, required=True)
    p.add_argument("--flip", action="store_true")
    p.add_argument("--heatmaps", help="also dump final-stack heatmaps (.npy)")
    p.set_defaults(func=cli_predict)

    p = sub.add_parser("bench", help="compare kernel backends")
    p.add_argument("--repeats", type=int, default=5)
    p.add_argument("--csv", help="optional CSV output path")
    p.add_argument("--seed", type=int, default=None)
    p.set_defaults(func=cli_bench)

    return parser


def main(argv=None):
    args = build_parser().parse_args(argv)
    try:
        return args.func(args) or 0
    except (ValueError, RuntimeError, OSError, AnnotationError, CheckpointError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
