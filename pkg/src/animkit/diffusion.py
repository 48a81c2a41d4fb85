"""Noise schedule, forward noising, the epsilon loss and deterministic DDIM."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np
import torch


class ScheduleError(ValueError):
    pass


@dataclass(frozen=True)
class NoiseSchedule:
    T: int
    beta_start: float
    beta_end: float
    alphas: np.ndarray
    alpha_bars: np.ndarray

    def alpha_bar(self, t: int) -> float:
        """Cumulative product at step ``t``; ``t == -1`` denotes the clean latent."""
        if t == -1:
            return 1.0
        if not 0 <= t < self.T:
            raise ScheduleError(f"timestep {t} outside [0, {self.T})")
        return float(self.alpha_bars[t])

    def to_json(self) -> dict:
        return {"T": self.T, "beta_start": self.beta_start, "beta_end": self.beta_end}

    @classmethod
    def from_json(cls, data: dict) -> "NoiseSchedule":
        return make_schedule(int(data["T"]), float(data["beta_start"]), float(data["beta_end"]))

    def timesteps(self, steps: int) -> list[int]:
        """Descending sampling timesteps, evenly spaced and ending near 0."""
        if not 1 <= steps <= self.T:
            raise ScheduleError(f"steps must be in [1, {self.T}], got {steps}")
        stride = self.T // steps
        return [self.T - 1 - i * stride for i in range(steps)]


def make_schedule(T: int, beta_start: float, beta_end: float) -> NoiseSchedule:
    """Linear betas; ``alpha_bars`` is the running product of ``1 - beta``."""
    if T < 2:
        raise ScheduleError("T must be at least 2")
    if not 0.0 < beta_start <= beta_end < 1.0:
        raise ScheduleError(f"need 0 < beta_start <= beta_end < 1, got {beta_start}, {beta_end}")
    betas = np.linspace(beta_start, beta_end, T, dtype=np.float64)
    alphas = 1.0 - betas
    return NoiseSchedule(int(T), float(beta_start), float(beta_end), alphas, np.cumprod(alphas))


def _check_same_shape(a: torch.Tensor, b: torch.Tensor, what: str) -> None:
    if a.shape != b.shape:
        raise ValueError(f"{what} shape mismatch: {tuple(a.shape)} vs {tuple(b.shape)}")


def _per_sample(values, ref: torch.Tensor) -> torch.Tensor:
    v = torch.as_tensor(values, dtype=ref.dtype, device=ref.device)
    if v.ndim == 0:
        return v
    return v.reshape(-1, *([1] * (ref.ndim - 1)))


def q_sample(z0: torch.Tensor, t, eps: torch.Tensor, sched: NoiseSchedule) -> torch.Tensor:
    """sqrt(abar_t) * z0 + sqrt(1 - abar_t) * eps; ``t`` may be a scalar or one step per batch row."""
    _check_same_shape(z0, eps, "q_sample")
    t_arr = np.atleast_1d(np.asarray(t))
    if t_arr.min() < 0 or t_arr.max() >= sched.T:
        raise ScheduleError(f"timestep outside [0, {sched.T})")
    abar = sched.alpha_bars[np.asarray(t)]
    return _per_sample(np.sqrt(abar), z0) * z0 + _per_sample(np.sqrt(1.0 - abar), z0) * eps


def training_loss(eps_pred: torch.Tensor, eps: torch.Tensor) -> torch.Tensor:
    _check_same_shape(eps_pred, eps, "training_loss")
    return torch.mean((eps_pred - eps) ** 2)


def predict_x0(z_t: torch.Tensor, eps_pred: torch.Tensor, abar: float) -> torch.Tensor:
    return (z_t - np.sqrt(1.0 - abar) * eps_pred) / np.sqrt(abar)


def _transfer(z: torch.Tensor, eps_pred: torch.Tensor, abar_from: float, abar_to: float) -> torch.Tensor:
    x0 = predict_x0(z, eps_pred, abar_from)
    return np.sqrt(abar_to) * x0 + np.sqrt(1.0 - abar_to) * eps_pred


def ddim_step(z_t: torch.Tensor, eps_pred: torch.Tensor, t: int, t_prev: int, sched: NoiseSchedule,
              clip_x0: float | None = None) -> torch.Tensor:
    """One eta=0 DDIM update from ``t`` down to ``t_prev`` (``-1`` means clean).

    With ``clip_x0`` the predicted clean latent is clamped to that magnitude and
    the noise estimate re-derived from it, as in clipped DDPM sampling.
    """
    _check_same_shape(z_t, eps_pred, "ddim_step")
    if t <= t_prev:
        raise ScheduleError(f"ddim_step needs t > t_prev, got {t} and {t_prev}")
    abar, abar_prev = sched.alpha_bar(t), sched.alpha_bar(t_prev)
    if clip_x0 is None:
        return _transfer(z_t, eps_pred, abar, abar_prev)
    x0 = predict_x0(z_t, eps_pred, abar).clamp(-clip_x0, clip_x0)
    eps = (z_t - np.sqrt(abar) * x0) / np.sqrt(1.0 - abar)
    return np.sqrt(abar_prev) * x0 + np.sqrt(1.0 - abar_prev) * eps


def ddim_sample(z_T: torch.Tensor, model: Callable, steps: int, sched: NoiseSchedule,
                clip_x0: float | None = None) -> torch.Tensor:
    """Run ``steps`` DDIM updates from the terminal step to the clean latent.

    ``model(z, t)`` returns the noise prediction for integer timestep ``t``.
    """
    ts = sched.timesteps(steps)
    z = z_T
    for i, t in enumerate(ts):
        t_prev = ts[i + 1] if i + 1 < len(ts) else -1
        z = ddim_step(z, model(z, t), t, t_prev, sched, clip_x0)
    return z


def ddim_invert(z0: torch.Tensor, model: Callable, steps: int, sched: NoiseSchedule) -> torch.Tensor:
    """Map a clean latent to the terminal step by running DDIM backwards in time.

    Each update uses the model's prediction at the destination timestep,
    evaluated on the current (less noisy) latent.
    """
    ts = sched.timesteps(steps)[::-1]
    z = z0
    t_from = -1
    for t in ts:
        eps = model(z, t)
        _check_same_shape(z, eps, "ddim_invert")
        z = _transfer(z, eps, sched.alpha_bar(t_from), sched.alpha_bar(t))
        t_from = t
    return z


@dataclass(frozen=True)
class PriorBlendSchedule:
    alpha_first: float = 0.033
    alpha_last: float = 0.016

    def coefficient(self, n: int, n_frames: int) -> float:
        if not 0 <= n < n_frames:
            raise ValueError(f"frame index {n} outside [0, {n_frames})")
        if n_frames == 1:
            return self.alpha_first
        return self.alpha_first + (self.alpha_last - self.alpha_first) * n / (n_frames - 1)

    def coefficients(self, n_frames: int) -> list[float]:
        return [self.coefficient(n, n_frames) for n in range(n_frames)]


def prior_blend(z_T: torch.Tensor, inv_r0: torch.Tensor, n: int, n_frames: int, sched: PriorBlendSchedule = PriorBlendSchedule()):
    """Mix the inverted reference into frame ``n``'s starting noise."""
    _check_same_shape(z_T, inv_r0, "prior_blend")
    a = sched.coefficient(n, n_frames)
    return a * inv_r0 + (1.0 - a) * z_T
