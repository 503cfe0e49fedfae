"""Noise schedule tables for the diffusion process."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np


@dataclass(frozen=True)
class NoiseSchedule:
    """Precomputed beta_t / alpha_t / alpha_bar_t tables for T steps.

    Arrays are indexed 0..T-1 for steps t = 1..T.
    """

    T: int
    betas: np.ndarray
    alphas: np.ndarray
    alpha_bars: np.ndarray

    def alpha_bar(self, t: int) -> float:
        self.check_step(t)
        return float(self.alpha_bars[t - 1])

    def check_step(self, t: int) -> None:
        if not 1 <= t <= self.T:
            raise ValueError(f"step index {t} outside [1, {self.T}]")


def make_schedule(T: int, beta_start: float, beta_end: float) -> NoiseSchedule:
    """Linear beta schedule from beta_start to beta_end inclusive."""
    if not isinstance(T, (int, np.integer)) or T < 1:
        raise ValueError(f"T must be a positive integer, got {T!r}")
    if not (0.0 < beta_start <= beta_end < 1.0):
        raise ValueError(f"beta bounds must satisfy 0 < start <= end < 1, got ({beta_start}, {beta_end})")
    betas = np.linspace(beta_start, beta_end, T, dtype=np.float64)
    alphas = 1.0 - betas
    alpha_bars = np.cumprod(alphas)
    return NoiseSchedule(T=int(T), betas=betas, alphas=alphas, alpha_bars=alpha_bars)
