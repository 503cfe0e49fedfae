"""Two-stage trainer: noise-prediction MSE, adaptive-moment updates, EMA
tracking and bit-exact checkpoint resume.

Stage 1 trains on complete sketch/stroke conditions; stage 2 fine-tunes with
per-sample gray masking so the network also learns the partially- and
un-conditioned branches used at sampling time.
"""

from __future__ import annotations

import json
import time
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Iterable, Optional, Sequence

import numpy as np
import torch

from . import checkpoint as ckpt
from .conditions import MaskSpec, TrainingTriplet, mask_condition
from .schedule import NoiseSchedule, make_schedule
from .unet import NetworkConfig, UNet, assemble_input
from .diffusion import ConditionPair, q_sample

ADAM_BETA1 = 0.9
ADAM_BETA2 = 0.999
ADAM_EPS = 1e-8

# Area fraction grayed out by the "partial" stage-2 mode.
STAGE2_PARTIAL_FRACTION = 0.5

_MASK_MODE_ORDER = ("drop_sketch", "drop_stroke", "drop_both", "partial")

DEFAULT_STAGE2_MASK_PROBS = {
    "drop_sketch": 0.1,
    "drop_stroke": 0.1,
    "drop_both": 0.1,
    "partial": 0.2,
}


class TrainingDiverged(Exception):
    def __init__(self, step: int, loss: float, dump_path: Optional[Path] = None):
        self.step = step
        self.loss = loss
        self.dump_path = dump_path
        where = f", state dumped to {dump_path}" if dump_path else ""
        super().__init__(f"non-finite loss {loss} at step {step}{where}")


@dataclass
class TrainConfig:
    stage: int = 1
    steps: int = 1000
    batch_size: int = 8
    learning_rate: float = 1e-3
    ema_decay: float = 0.999
    stage2_mask_probs: dict = field(default_factory=dict)
    seed: int = 0
    checkpoint_every: int = 0  # 0 disables periodic checkpoints

    def __post_init__(self) -> None:
        if self.stage not in (1, 2):
            raise ValueError(f"stage must be 1 or 2, got {self.stage}")
        if self.steps < 1:
            raise ValueError(f"steps must be >= 1, got {self.steps}")
        if self.batch_size < 1:
            raise ValueError(f"batch_size must be >= 1, got {self.batch_size}")
        if self.learning_rate <= 0:
            raise ValueError(f"learning_rate must be > 0, got {self.learning_rate}")
        if not 0.0 <= self.ema_decay < 1.0:
            raise ValueError(f"ema_decay must be in [0, 1), got {self.ema_decay}")
        if self.checkpoint_every < 0:
            raise ValueError(f"checkpoint_every must be >= 0, got {self.checkpoint_every}")
        probs = dict(self.stage2_mask_probs)
        unknown = set(probs) - set(_MASK_MODE_ORDER)
        if unknown:
            raise ValueError(f"unknown mask modes {sorted(unknown)}")
        for k in _MASK_MODE_ORDER:
            probs.setdefault(k, 0.0)
        if any(p < 0 for p in probs.values()):
            raise ValueError("mask probabilities must be nonnegative")
        if sum(probs.values()) > 1.0 + 1e-12:
            raise ValueError("mask probabilities must sum to <= 1")
        if self.stage == 1 and any(p != 0 for p in probs.values()):
            raise ValueError("stage 1 requires all mask probabilities to be 0")
        self.stage2_mask_probs = probs


@dataclass
class TrainState:
    model: UNet
    net_config: NetworkConfig
    ema: dict          # param name -> float32 tensor, shapes mirror params
    opt_m: dict        # first moments
    opt_v: dict        # second moments
    step: int
    data_rng: np.random.Generator   # batch indices, timesteps, noise
    mask_rng: np.random.Generator   # stage-2 mode draws and rectangle seeds


def _named_params(model: UNet) -> dict:
    return dict(model.named_parameters())


def init_state(net_cfg: NetworkConfig, seed: int) -> TrainState:
    """Fresh state: seeded parameter init, EMA = params, zero moments, step 0.

    Two independent random streams are derived from the seed so that stage-2
    mask draws never perturb the data/noise sequence: a stage-2 run with all
    mask probabilities zero replays the stage-1 trajectory exactly.
    """
    torch.manual_seed(seed)
    model = UNet(net_cfg)
    params = _named_params(model)
    ema = {k: v.detach().clone() for k, v in params.items()}
    opt_m = {k: torch.zeros_like(v) for k, v in params.items()}
    opt_v = {k: torch.zeros_like(v) for k, v in params.items()}
    data_ss, mask_ss = np.random.SeedSequence(seed).spawn(2)
    return TrainState(
        model=model,
        net_config=net_cfg,
        ema=ema,
        opt_m=opt_m,
        opt_v=opt_v,
        step=0,
        data_rng=np.random.default_rng(data_ss),
        mask_rng=np.random.default_rng(mask_ss),
    )


def _pair(trip: TrainingTriplet) -> ConditionPair:
    return ConditionPair(sketch=trip.sketch, stroke=trip.stroke)


def _check_batch(batch: Sequence[TrainingTriplet]) -> tuple[int, int]:
    if len(batch) == 0:
        raise ValueError("batch must be nonempty")
    h, w = batch[0].image.shape[:2]
    for trip in batch:
        if trip.image.shape[:2] != (h, w) or trip.sketch.shape[:2] != (h, w) or trip.stroke.shape[:2] != (h, w):
            raise ValueError(f"shape mismatch within batch (expected spatial {(h, w)})")
    return h, w


def _draw_batch_noise(
    batch: Sequence[TrainingTriplet], sched: NoiseSchedule, rng: np.random.Generator
) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Per-sample t ~ U[1,T] and unit Gaussian eps; x_t via the forward process."""
    t = rng.integers(1, sched.T + 1, size=len(batch))
    xs = []
    eps = []
    for trip, ti in zip(batch, t):
        e = rng.standard_normal(trip.image.shape).astype(np.float32)
        xs.append(q_sample(trip.image, int(ti), e, sched))
        eps.append(e)
    return t.astype(np.int64), np.stack(xs), np.stack(eps)


def training_loss(
    model,
    batch: Sequence[TrainingTriplet],
    sched: NoiseSchedule,
    rng: np.random.Generator,
) -> float:
    """Mean squared error between predicted and true noise, averaged over the
    batch and all pixels.  `model` is either the network or any callable
    (x7: (B,h,w,7), t: (B,)) -> (B,h,w,3) prediction, which lets tests swap in
    closed-form predictors.
    """
    _check_batch(batch)
    t, x_t, eps = _draw_batch_noise(batch, sched, rng)
    x7 = np.stack([assemble_input(x_t[i], _pair(batch[i])) for i in range(len(batch))])
    if isinstance(model, torch.nn.Module):
        with torch.inference_mode():
            pred = _forward_torch(model, x7, t)
        pred = pred.numpy()
    else:
        pred = model(x7, t)
    return float(np.mean((pred.astype(np.float64) - eps.astype(np.float64)) ** 2))


def _forward_torch(model: UNet, x7: np.ndarray, t: np.ndarray) -> torch.Tensor:
    xt = torch.from_numpy(np.ascontiguousarray(x7.transpose(0, 3, 1, 2)))
    tt = torch.from_numpy(t)
    return model(xt, tt).permute(0, 2, 3, 1)


def _draw_mask_specs(cfg: TrainConfig, n: int, rng: np.random.Generator) -> list[MaskSpec]:
    probs = cfg.stage2_mask_probs
    specs = []
    for _ in range(n):
        u = float(rng.random())
        acc = 0.0
        mode = "none"
        for name in _MASK_MODE_ORDER:
            acc += probs[name]
            if u < acc:
                mode = name
                break
        if mode == "partial":
            seed = int(rng.integers(0, 2**31))
            specs.append(MaskSpec(mode="partial", partial_fraction=STAGE2_PARTIAL_FRACTION, rng_seed=seed))
        else:
            specs.append(MaskSpec(mode=mode))
    return specs


def _adam_step(state: TrainState, lr: float) -> None:
    t = state.step  # already incremented by the caller
    bc1 = 1.0 - ADAM_BETA1**t
    bc2 = 1.0 - ADAM_BETA2**t
    with torch.no_grad():
        for name, p in _named_params(state.model).items():
            g = p.grad
            if g is None:
                continue
            m = state.opt_m[name]
            v = state.opt_v[name]
            m.mul_(ADAM_BETA1).add_(g, alpha=1.0 - ADAM_BETA1)
            v.mul_(ADAM_BETA2).addcmul_(g, g, value=1.0 - ADAM_BETA2)
            denom = (v / bc2).sqrt_().add_(ADAM_EPS)
            p.addcdiv_(m / bc1, denom, value=-lr)


def _ema_step(state: TrainState, decay: float) -> None:
    with torch.no_grad():
        for name, p in _named_params(state.model).items():
            state.ema[name].mul_(decay).add_(p, alpha=1.0 - decay)


def train_stage(
    state: TrainState,
    cfg: TrainConfig,
    data: Iterable[TrainingTriplet],
    sched: NoiseSchedule,
    checkpoint_dir: Optional[Path] = None,
    log_fn: Optional[Callable[[dict], None]] = None,
) -> TrainState:
    """Run cfg.steps optimization steps over the triplet stream.

    The stream is materialized once and batches are drawn with replacement, so
    the loss trajectory is a pure function of the seed and the data.  Emits a
    checkpoint every cfg.checkpoint_every steps when checkpoint_dir is given.
    A non-finite loss dumps the current state and aborts.
    """
    triplets = list(data)
    if not triplets:
        raise ValueError("empty training stream")
    img_h, img_w = _check_batch(triplets)
    if checkpoint_dir is not None:
        checkpoint_dir = Path(checkpoint_dir)
        checkpoint_dir.mkdir(parents=True, exist_ok=True)

    model = state.model
    model.train()
    ema_loss = None
    t0 = time.monotonic()
    for _ in range(cfg.steps):
        idx = state.data_rng.integers(0, len(triplets), size=cfg.batch_size)
        batch = [triplets[int(i)] for i in idx]
        if cfg.stage == 2:
            specs = _draw_mask_specs(cfg, len(batch), state.mask_rng)
            batch = [mask_condition(trip, spec) for trip, spec in zip(batch, specs)]

        t, x_t, eps = _draw_batch_noise(batch, sched, state.data_rng)
        x7 = np.stack([assemble_input(x_t[i], _pair(batch[i])) for i in range(len(batch))])
        pred = _forward_torch(model, x7, t)
        loss = torch.mean((pred - torch.from_numpy(eps)) ** 2)

        loss_val = float(loss.detach())
        if not np.isfinite(loss_val):
            # abort before the update so the dump holds the last finite
            # parameters, the ones that actually produced this loss
            dump = None
            if checkpoint_dir is not None:
                dump = checkpoint_dir / f"diverged_{state.step:07d}.ckpt"
                save_checkpoint(state, dump, sched, stage=cfg.stage, image_size=(img_h, img_w))
            raise TrainingDiverged(state.step + 1, loss_val, dump)

        model.zero_grad(set_to_none=True)
        loss.backward()
        state.step += 1
        _adam_step(state, cfg.learning_rate)
        _ema_step(state, cfg.ema_decay)

        ema_loss = loss_val if ema_loss is None else 0.98 * ema_loss + 0.02 * loss_val
        if log_fn is not None:
            log_fn(
                {
                    "step": state.step,
                    "loss": loss_val,
                    "ema_loss": ema_loss,
                    "wallclock_s": time.monotonic() - t0,
                }
            )
        if (
            checkpoint_dir is not None
            and cfg.checkpoint_every > 0
            and state.step % cfg.checkpoint_every == 0
        ):
            save_checkpoint(
                state,
                checkpoint_dir / f"ckpt_{state.step:07d}.ckpt",
                sched,
                stage=cfg.stage,
                image_size=(img_h, img_w),
            )
    model.eval()
    return state


def _tensors_to_arrays(d: dict) -> dict:
    return {k: v.detach().cpu().numpy().astype(np.float32) for k, v in d.items()}


def save_checkpoint(
    state: TrainState,
    path,
    sched: NoiseSchedule,
    stage: int = 1,
    image_size: Optional[tuple[int, int]] = None,
) -> None:
    """Full trainer snapshot: params, EMA, optimizer moments, step and both
    random-stream states, plus the network/schedule config needed to rebuild.
    """
    params = _tensors_to_arrays(_named_params(state.model))
    ema = _tensors_to_arrays(state.ema)
    opt = {}
    for name, v in _tensors_to_arrays(state.opt_m).items():
        opt[f"m/{name}"] = v
    for name, v in _tensors_to_arrays(state.opt_v).items():
        opt[f"v/{name}"] = v
    train_meta = {
        "step": state.step,
        "stage": stage,
        "data_rng": state.data_rng.bit_generator.state,
        "mask_rng": state.mask_rng.bit_generator.state,
        "schedule": {
            "T": sched.T,
            "beta_start": float(sched.betas[0]),
            "beta_end": float(sched.betas[-1]),
        },
    }
    if image_size is not None:
        train_meta["image_size"] = [int(image_size[0]), int(image_size[1])]
    ckpt.write_checkpoint(
        path,
        params=params,
        config=state.net_config.to_dict(),
        ema=ema,
        opt=opt,
        train_meta=train_meta,
    )


def load_checkpoint(path) -> tuple[TrainState, NoiseSchedule, dict]:
    """Rebuild (state, schedule, train metadata) from a trainer checkpoint,
    bit-exactly."""
    data = ckpt.read_checkpoint(path)
    net_cfg = NetworkConfig.from_dict(data.config)
    model = UNet(net_cfg)
    expected = {k: tuple(v.shape) for k, v in model.named_parameters()}
    ckpt.check_shapes(data.params, expected, "params")

    with torch.no_grad():
        for name, p in model.named_parameters():
            p.copy_(torch.from_numpy(data.params[name]))
    model.eval()

    if data.ema is None or data.opt is None or data.train_meta is None:
        raise ckpt.CheckpointError(f"{path}: missing trainer sections (ema/opt/train_meta)")
    ckpt.check_shapes(data.ema, expected, "ema")
    ema = {k: torch.from_numpy(v.copy()) for k, v in data.ema.items()}
    opt_m = {}
    opt_v = {}
    for key, arr in data.opt.items():
        kind, _, name = key.partition("/")
        if name not in expected:
            raise ckpt.CheckpointShapeError(name, None, tuple(arr.shape))
        if kind == "m":
            opt_m[name] = torch.from_numpy(arr.copy())
        elif kind == "v":
            opt_v[name] = torch.from_numpy(arr.copy())
    meta = data.train_meta
    data_rng = np.random.default_rng()
    mask_rng = np.random.default_rng()
    data_rng.bit_generator.state = meta["data_rng"]
    mask_rng.bit_generator.state = meta["mask_rng"]
    sched = make_schedule(
        int(meta["schedule"]["T"]),
        float(meta["schedule"]["beta_start"]),
        float(meta["schedule"]["beta_end"]),
    )
    state = TrainState(
        model=model,
        net_config=net_cfg,
        ema=ema,
        opt_m=opt_m,
        opt_v=opt_v,
        step=int(meta["step"]),
        data_rng=data_rng,
        mask_rng=mask_rng,
    )
    return state, sched, dict(meta)
