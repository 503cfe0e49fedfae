"""Diffusion core: forward noising, ancestral reverse steps, two-scale
classifier-free guidance and low-frequency reference refinement.

All operations are pure given their inputs and RNG, and work on (h, w, c)
float32 buffers in [-1, 1] model space.  The reverse-process variance is
sigma_t^2 = beta_t and intermediate samples are never clipped; only the
final output is clipped to [-1, 1].
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Optional

import numpy as np

from .images import ensure_image, ensure_same_shape
from .schedule import NoiseSchedule

# A denoiser handle maps an assembled (h, w, 7) input and a step index to an
# (h, w, 3) noise prediction.
DenoiserFn = Callable[[np.ndarray, int], np.ndarray]
ProgressFn = Callable[[int, int], None]


@dataclass
class ConditionPair:
    """Optional sketch (h, w, 1) and stroke (h, w, 3) conditions.

    An absent condition stands for neutral gray: its channels are filled
    with 0.0 in model space when the network input is assembled.
    """

    sketch: Optional[np.ndarray] = None
    stroke: Optional[np.ndarray] = None

    def __post_init__(self) -> None:
        if self.sketch is not None:
            ensure_image(self.sketch, channels=1, name="sketch")
        if self.stroke is not None:
            ensure_image(self.stroke, channels=3, name="stroke")

    def without_stroke(self) -> "ConditionPair":
        return ConditionPair(sketch=self.sketch, stroke=None)


@dataclass
class ControlSettings:
    """User-facing control knobs for one sampling run.

    s_sketch / s_stroke are the two guidance scales.  realism_stop is the
    fraction of timesteps (counted from t = T downward) during which the
    low-frequency content of the sample is pulled toward `reference`
    through a factor-realism_n low-pass filter.
    """

    s_sketch: float = 0.0
    s_stroke: float = 0.0
    realism_n: int = 8
    realism_stop: float = 0.0
    reference: Optional[np.ndarray] = None

    def __post_init__(self) -> None:
        if self.s_sketch < 0 or self.s_stroke < 0:
            raise ValueError("guidance scales must be >= 0")
        if not 0.0 <= self.realism_stop <= 1.0:
            raise ValueError(f"realism_stop must be in [0, 1], got {self.realism_stop}")
        if self.realism_n < 1 or (self.realism_n & (self.realism_n - 1)) != 0:
            raise ValueError(f"realism_n must be a power of two >= 1, got {self.realism_n}")
        if self.reference is not None:
            ensure_image(self.reference, channels=3, name="reference")


def q_sample(x0: np.ndarray, t: int, eps: np.ndarray, sched: NoiseSchedule) -> np.ndarray:
    """Forward process: x_t = sqrt(ab_t) * x0 + sqrt(1 - ab_t) * eps."""
    ensure_same_shape(x0, eps, "x0", "eps")
    ab = sched.alpha_bar(t)
    c0 = np.float32(np.sqrt(ab))
    c1 = np.float32(np.sqrt(1.0 - ab))
    return c0 * x0 + c1 * eps


def ddpm_step(x_t: np.ndarray, eps_hat: np.ndarray, t: int, z: np.ndarray, sched: NoiseSchedule) -> np.ndarray:
    """One ancestral reverse step from x_t to x_{t-1}.

    x_{t-1} = (x_t - beta_t / sqrt(1 - ab_t) * eps_hat) / sqrt(alpha_t) + sigma_t * z
    with sigma_t = sqrt(beta_t); no noise is added at t = 1.
    """
    ensure_same_shape(x_t, eps_hat, "x_t", "eps_hat")
    sched.check_step(t)
    beta = sched.betas[t - 1]
    alpha = sched.alphas[t - 1]
    ab = sched.alpha_bars[t - 1]
    c_eps = np.float32(beta / np.sqrt(1.0 - ab))
    c_mean = np.float32(1.0 / np.sqrt(alpha))
    mean = c_mean * (x_t - c_eps * eps_hat)
    if t == 1:
        return mean
    ensure_same_shape(x_t, z, "x_t", "z")
    return mean + np.float32(np.sqrt(beta)) * z


def cfg_epsilon(
    denoiser: DenoiserFn,
    x_t: np.ndarray,
    t: int,
    cond: ConditionPair,
    scales: ControlSettings,
) -> np.ndarray:
    """Two-scale classifier-free guidance.

    eps_hat = eps(x, 0, 0)
            + s_sketch * (eps(x, sketch, 0)      - eps(x, 0, 0))
            + s_stroke * (eps(x, sketch, stroke) - eps(x, sketch, 0))

    where 0 is the gray-filled absent condition.  Branches whose inputs
    coincide (absent condition, zero scale) reuse the already-computed
    prediction, so the output is bit-identical with at most three
    denoiser evaluations.
    """
    from .unet import assemble_input

    s_sk = float(scales.s_sketch)
    s_st = float(scales.s_stroke)
    if s_sk < 0 or s_st < 0:
        raise ValueError("guidance scales must be >= 0")

    eps_unc = denoiser(assemble_input(x_t, ConditionPair()), t)
    if s_sk == 0.0 and s_st == 0.0:
        return eps_unc

    if cond.sketch is None:
        eps_sketch = eps_unc
    else:
        eps_sketch = denoiser(assemble_input(x_t, cond.without_stroke()), t)

    if s_st == 0.0 or cond.stroke is None:
        eps_full = eps_sketch
    else:
        eps_full = denoiser(assemble_input(x_t, cond), t)

    return eps_unc + np.float32(s_sk) * (eps_sketch - eps_unc) + np.float32(s_st) * (eps_full - eps_sketch)


def low_pass(img: np.ndarray, n: int) -> np.ndarray:
    """Keep frequencies below the n-fold cut: box-average each n x n block
    and broadcast the block mean back to full resolution.

    This is an exact projection: applying it twice equals applying it once,
    and the image mean is preserved.
    """
    if n < 1 or (n & (n - 1)) != 0:
        raise ValueError(f"low-pass factor must be a power of two >= 1, got {n}")
    if n == 1:
        return img.copy()
    h, w = img.shape[:2]
    if h % n or w % n:
        raise ValueError(f"low-pass factor {n} must divide image size {h}x{w}")
    c = img.shape[2]
    small = img.reshape(h // n, n, w // n, n, c).mean(axis=(1, 3), dtype=np.float64)
    out = np.repeat(np.repeat(small, n, axis=0), n, axis=1)
    return out.astype(img.dtype, copy=False)


def ilvr_window_active(t: int, sched: NoiseSchedule, settings: ControlSettings) -> bool:
    """Refinement runs while t > T * (1 - realism_stop)."""
    return settings.realism_stop > 0.0 and t > sched.T * (1.0 - settings.realism_stop)


def ilvr_refine(
    x_t_cand: np.ndarray,
    reference: Optional[np.ndarray],
    t: int,
    settings: ControlSettings,
    sched: NoiseSchedule,
    rng: np.random.Generator,
) -> np.ndarray:
    """Replace the candidate's low frequencies with those of the noised reference.

    Inside the refinement window, draws y_t = q_sample(reference, t, eps')
    and returns phi(y_t) + (x - phi(x)); outside it returns the candidate
    unchanged without consuming randomness.
    """
    if not ilvr_window_active(t, sched, settings):
        return x_t_cand
    if reference is None:
        raise ValueError("realism refinement is active but no reference image was provided")
    ensure_same_shape(x_t_cand, reference, "x_t_cand", "reference")
    eps = rng.standard_normal(x_t_cand.shape, dtype=np.float32)
    y_t = q_sample(reference, t, eps, sched)
    n = settings.realism_n
    # computed as phi(y) + (x - phi(x)) so that n = 1 returns y_t bit-exactly
    return low_pass(y_t, n) + (x_t_cand - low_pass(x_t_cand, n))


def sample_loop(
    denoiser: DenoiserFn,
    shape: tuple[int, int],
    cond: ConditionPair,
    settings: ControlSettings,
    sched: NoiseSchedule,
    rng: np.random.Generator,
    progress: Optional[ProgressFn] = None,
) -> np.ndarray:
    """Full reverse process from seeded Gaussian noise to a [-1, 1] image.

    Deterministic given the RNG seed.  `progress` is called as
    progress(t, T) at the start of every step.
    """
    h, w = shape
    if settings.realism_stop > 0.0 and (h % settings.realism_n or w % settings.realism_n):
        raise ValueError(f"realism_n={settings.realism_n} must divide the sample size {h}x{w}")
    x = rng.standard_normal((h, w, 3), dtype=np.float32)
    for t in range(sched.T, 0, -1):
        if progress is not None:
            progress(t, sched.T)
        eps_hat = cfg_epsilon(denoiser, x, t, cond, settings)
        z = rng.standard_normal(x.shape, dtype=np.float32) if t > 1 else np.zeros_like(x)
        x = ddpm_step(x, eps_hat, t, z, sched)
        if ilvr_window_active(t - 1, sched, settings):
            x = ilvr_refine(x, settings.reference, t - 1, settings, sched, rng)
    return np.clip(x, -1.0, 1.0)
