"""Command-line entry points: train, sample, evaluate, extract-conditions, serve.

Exit codes: 0 success, 2 usage error (argparse), 1 runtime error.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
from pathlib import Path

import numpy as np

from . import conditions, metrics, training
from .diffusion import ConditionPair, ControlSettings, sample_loop
from .images import bilinear_resize, center_crop_square, load_png, save_png
from .schedule import make_schedule
from .service import bundle_from_checkpoint, create_app
from .unet import NetworkConfig, make_denoiser


def _load_train_config(path: Path) -> dict:
    with open(path, "r", encoding="utf-8") as f:
        cfg = json.load(f)
    if not isinstance(cfg, dict):
        raise ValueError(f"{path}: training config must be a JSON object")
    return cfg


def _image_size(cfg: dict) -> tuple[int, int]:
    size = cfg.get("image_size", 32)
    if isinstance(size, int):
        return size, size
    return int(size[0]), int(size[1])


def cmd_train(args: argparse.Namespace) -> int:
    cfg_path = Path(args.config)
    cfg = _load_train_config(cfg_path)
    base = cfg_path.parent
    out_dir = base / cfg.get("out_dir", "runs")
    out_dir.mkdir(parents=True, exist_ok=True)
    h, w = _image_size(cfg)

    if args.stage == 2 and not args.resume:
        print("error: --stage 2 requires --resume with a stage-1 checkpoint", file=sys.stderr)
        return 2

    if args.resume:
        state, sched, _meta = training.load_checkpoint(args.resume)
    else:
        net_cfg = NetworkConfig(**cfg.get("network", {}))
        state = training.init_state(net_cfg, int(cfg.get("seed", 0)))
        sch = cfg.get("schedule", {})
        sched = make_schedule(
            int(sch.get("T", 1000)),
            float(sch.get("beta_start", 1e-4)),
            float(sch.get("beta_end", 0.02)),
        )

    train_cfg = training.TrainConfig(
        stage=args.stage,
        steps=int(cfg.get("steps", 1000)),
        batch_size=int(cfg.get("batch_size", 8)),
        learning_rate=float(cfg.get("learning_rate", 1e-3)),
        ema_decay=float(cfg.get("ema_decay", 0.999)),
        stage2_mask_probs=(
            cfg.get("stage2_mask_probs", training.DEFAULT_STAGE2_MASK_PROBS) if args.stage == 2 else {}
        ),
        seed=int(cfg.get("seed", 0)),
        checkpoint_every=int(cfg.get("checkpoint_every", 0)),
    )

    manifest = base / cfg["manifest"]
    data = list(
        conditions.load_dataset(manifest, (h, w), seed=cfg.get("data_seed"))
    )
    if not data:
        raise RuntimeError(f"no usable records in {manifest}")

    log_path = out_dir / "train_log.jsonl"
    with open(log_path, "a", encoding="utf-8") as log_file:

        def log_fn(entry: dict) -> None:
            log_file.write(json.dumps(entry) + "\n")
            if entry["step"] % 100 == 0 or entry["step"] == 1:
                print(
                    f"step {entry['step']}  loss {entry['loss']:.5f}  ema {entry['ema_loss']:.5f}",
                    flush=True,
                )

        training.train_stage(
            state, train_cfg, data, sched, checkpoint_dir=out_dir, log_fn=log_fn
        )

    final = out_dir / "last.ckpt"
    training.save_checkpoint(state, final, sched, stage=args.stage, image_size=(h, w))
    print(f"saved {final}")
    return 0


def _load_sketch(path, h: int, w: int) -> np.ndarray:
    raw = load_png(path, channels=1)
    if raw.shape[:2] != (h, w):
        raise ValueError(f"sketch must be {h}x{w}, got {raw.shape[0]}x{raw.shape[1]}")
    return np.where(raw < 0.0, -1.0, 1.0).astype(np.float32)


def _load_rgb(path, h: int, w: int, what: str) -> np.ndarray:
    img = load_png(path, channels=3)
    if img.shape[:2] != (h, w):
        raise ValueError(f"{what} must be {h}x{w}, got {img.shape[0]}x{img.shape[1]}")
    return img


def cmd_sample(args: argparse.Namespace) -> int:
    size = (args.size, args.size) if args.size else None
    bundle = bundle_from_checkpoint(args.ckpt, use_raw=args.raw_params, size=size)
    h, w = bundle.height, bundle.width
    sched = bundle.sched
    if args.steps:
        sched = make_schedule(args.steps, float(sched.betas[0]), float(sched.betas[-1]))

    sketch = _load_sketch(args.sketch, h, w) if args.sketch else None
    stroke = _load_rgb(args.stroke, h, w, "stroke") if args.stroke else None
    reference = _load_rgb(args.reference, h, w, "reference") if args.reference else None
    if args.realism > 0 and reference is None:
        if stroke is None:
            raise ValueError("realism > 0 requires --reference or --stroke")
        reference = stroke

    settings = ControlSettings(
        s_sketch=args.s_sketch,
        s_stroke=args.s_stroke,
        realism_stop=args.realism,
        reference=reference if args.realism > 0 else None,
    )
    rng = np.random.default_rng(args.seed)
    img = sample_loop(
        make_denoiser(bundle.model),
        (h, w),
        ConditionPair(sketch=sketch, stroke=stroke),
        settings,
        sched,
        rng,
    )
    save_png(img, args.out)
    print(f"saved {args.out}")
    return 0


def cmd_evaluate(args: argparse.Namespace) -> int:
    size = (args.size, args.size) if args.size else None
    bundle = bundle_from_checkpoint(args.ckpt, size=size)
    h, w = bundle.height, bundle.width

    real_paths = sorted(Path(args.real).glob("*.png"))
    if len(real_paths) < 2:
        raise ValueError(f"need at least 2 real PNGs in {args.real}, found {len(real_paths)}")
    real = [
        bilinear_resize(center_crop_square(load_png(p, channels=3)), h, w) for p in real_paths
    ]

    if args.n < 2:
        raise ValueError(f"--n must be >= 2, got {args.n}")
    denoiser = make_denoiser(bundle.model)
    fakes = []
    for i in range(args.n):
        rng = np.random.default_rng(args.seed + i)
        fakes.append(
            sample_loop(denoiser, (h, w), ConditionPair(), ControlSettings(), bundle.sched, rng)
        )

    emb = metrics.default_embedder(seed=0, d=64)
    fid = metrics.frechet_distance(
        metrics.feature_stats(real, emb), metrics.feature_stats(fakes, emb)
    )
    perceptual = float(
        np.mean(
            [metrics.perceptual_distance(f, real[i % len(real)], emb) for i, f in enumerate(fakes)]
        )
    )
    result = {
        "fid": fid,
        "perceptual": perceptual,
        "n_real": len(real),
        "n_fake": len(fakes),
        "embedder": emb.identifier,
    }
    with open(args.out, "w", encoding="utf-8") as f:
        json.dump(result, f, indent=2)
    print(json.dumps(result))
    return 0


def cmd_extract_conditions(args: argparse.Namespace) -> int:
    in_dir = Path(args.in_dir)
    out_dir = Path(args.out_dir)
    paths = sorted(in_dir.glob("*.png"))
    if not paths:
        raise ValueError(f"no PNGs found in {in_dir}")
    out_dir.mkdir(parents=True, exist_ok=True)
    for p in paths:
        img = load_png(p, channels=3)
        sketch = conditions.extract_sketch(img, args.low, args.high)
        stroke = conditions.extract_strokes(img, sketch)
        save_png(sketch, out_dir / f"{p.stem}_sketch.png")
        save_png(stroke, out_dir / f"{p.stem}_stroke.png")
    print(f"wrote conditions for {len(paths)} images to {out_dir}")
    return 0


def cmd_serve(args: argparse.Namespace) -> int:
    import uvicorn

    port = args.port
    env_port = os.environ.get("VISIOBLEND_PORT")
    if env_port:
        port = int(env_port)
    size = (args.size, args.size) if args.size else None
    bundle = bundle_from_checkpoint(args.ckpt, size=size)
    static_dir = Path(args.ui_dir) if args.ui_dir else Path("frontend") / "dist"
    app = create_app(
        bundle,
        workers=args.workers,
        static_dir=static_dir if static_dir.is_dir() else None,
    )
    uvicorn.run(app, host=args.host, port=port)
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="visioblend",
        description="Sketch- and stroke-guided diffusion: training, sampling, evaluation and serving.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("train", help="run one training stage from a JSON config")
    p.add_argument("--config", required=True, help="JSON training config")
    p.add_argument("--stage", type=int, choices=(1, 2), required=True)
    p.add_argument("--resume", help="checkpoint to resume from (required for stage 2)")
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("sample", help="generate one image from a checkpoint")
    p.add_argument("--ckpt", required=True)
    p.add_argument("--sketch", help="grayscale sketch PNG")
    p.add_argument("--stroke", help="RGB stroke PNG")
    p.add_argument("--reference", help="RGB reference PNG for realism refinement")
    p.add_argument("--s-sketch", type=float, default=0.0)
    p.add_argument("--s-stroke", type=float, default=0.0)
    p.add_argument("--realism", type=float, default=0.0)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--steps", type=int, help="override the number of diffusion steps")
    p.add_argument("--raw-params", action="store_true", help="sample with raw instead of EMA weights")
    p.add_argument("--size", type=int, help="image size when the checkpoint does not record one")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_sample)

    p = sub.add_parser("evaluate", help="distribution and patch distances vs a real image folder")
    p.add_argument("--ckpt", required=True)
    p.add_argument("--real", required=True, help="directory of real PNGs")
    p.add_argument("--n", type=int, required=True, help="number of images to generate")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--size", type=int)
    p.add_argument("--out", required=True, help="output JSON path")
    p.set_defaults(func=cmd_evaluate)

    p = sub.add_parser("extract-conditions", help="derive sketch/stroke PNGs from images")
    p.add_argument("--in", dest="in_dir", required=True)
    p.add_argument("--out", dest="out_dir", required=True)
    p.add_argument("--low", type=float, default=conditions.DEFAULT_CANNY_LOW)
    p.add_argument("--high", type=float, default=conditions.DEFAULT_CANNY_HIGH)
    p.set_defaults(func=cmd_extract_conditions)

    p = sub.add_parser("serve", help="run the HTTP inference service")
    p.add_argument("--ckpt", required=True)
    p.add_argument("--port", type=int, default=8000)
    p.add_argument("--host", default="127.0.0.1")
    p.add_argument("--workers", type=int, default=1)
    p.add_argument("--size", type=int)
    p.add_argument("--ui-dir", help="directory with the built canvas UI")
    p.set_defaults(func=cmd_serve)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as e:
        return int(e.code) if e.code is not None else 0
    try:
        return args.func(args)
    except KeyboardInterrupt:
        return 1
    except Exception as e:
        print(f"error: {e}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
