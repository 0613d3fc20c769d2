"""Diffusion primitives: noise schedule, forward noising, the denoiser port and DDIM stepping."""

from __future__ import annotations

import math
from typing import Any, Protocol

import numpy as np
from numpy.typing import NDArray
from pydantic import BaseModel, ConfigDict, field_validator
from scipy.special import softmax

from dyadic.models import GaussianPrior, MotionState, PriorComponent
from dyadic.motion import FloatArray, frozen_array


class DiffusionError(Exception):
    """Base class for sampler errors."""


class InvalidSchedule(DiffusionError):
    """Raised for out-of-range schedule parameters."""


class NumericalDomain(DiffusionError):
    """Raised when a formula would divide by a vanishing signal level."""


class InvalidConstraint(DiffusionError):
    """Raised when a constraint does not fit the segment it guides."""


class InvalidOverlap(DiffusionError):
    """Raised when an inpainted prefix does not fit the segment."""


class NoiseSchedule(BaseModel):
    """Linear beta schedule; ``alpha_bars[t]`` for t in 0..T with ``alpha_bars[0] == 1``."""

    model_config = ConfigDict(arbitrary_types_allowed=True, frozen=True)

    betas: np.ndarray
    alpha_bars: np.ndarray

    @field_validator("betas", "alpha_bars", mode="before")
    @classmethod
    def _freeze(cls, value: Any) -> FloatArray:
        return frozen_array(value)

    @property
    def steps(self) -> int:
        return int(self.betas.shape[0])

    def alpha_bar(self, t: int) -> float:
        if not 0 <= t <= self.steps:
            raise DiffusionError(f"timestep {t} outside [0, {self.steps}]")
        return float(self.alpha_bars[t])


def make_schedule(steps: int, beta_min: float, beta_max: float) -> NoiseSchedule:
    if steps < 2:
        raise InvalidSchedule(f"schedule needs at least 2 steps, got {steps}")
    if not 0 < beta_min <= beta_max < 1:
        raise InvalidSchedule(
            f"betas must satisfy 0 < beta_min <= beta_max < 1, got [{beta_min}, {beta_max}]"
        )
    betas = np.linspace(beta_min, beta_max, steps)
    alpha_bars = np.concatenate([[1.0], np.cumprod(1.0 - betas)])
    return NoiseSchedule(betas=betas, alpha_bars=alpha_bars)


def _same_shape(a: FloatArray, b: FloatArray, what: str) -> None:
    if a.shape != b.shape:
        raise DiffusionError(f"{what}: shapes {a.shape} and {b.shape} differ")


def forward_noise(x0: FloatArray, t: int, eps: FloatArray, schedule: NoiseSchedule) -> FloatArray:
    """Sample of q(x_t | x_0) for a given noise draw."""
    x0, eps = np.asarray(x0, dtype=np.float64), np.asarray(eps, dtype=np.float64)
    _same_shape(x0, eps, "forward_noise")
    ab = schedule.alpha_bar(t)
    return math.sqrt(ab) * x0 + math.sqrt(1.0 - ab) * eps


def predict_x0(x_t: FloatArray, t: int, eps_hat: FloatArray, schedule: NoiseSchedule) -> FloatArray:
    ab = schedule.alpha_bar(t)
    if ab <= 0.0:
        raise NumericalDomain(f"alpha_bar at t={t} is zero; x0 is not recoverable")
    x_t = np.asarray(x_t, dtype=np.float64)
    return (x_t - math.sqrt(1.0 - ab) * np.asarray(eps_hat)) / math.sqrt(ab)


def _eps_from_x0(x_t: FloatArray, x0: FloatArray, ab: float) -> FloatArray:
    if 1.0 - ab <= 0.0:
        return np.zeros_like(x_t)
    return (x_t - math.sqrt(ab) * x0) / math.sqrt(1.0 - ab)


class Conditions(BaseModel):
    """Denoiser conditions. Speech vectors are opaque and may be nulled for CFG."""

    model_config = ConfigDict(arbitrary_types_allowed=True, frozen=True)

    state: MotionState = "stand"
    self_speech: np.ndarray | None = None
    partner_speech: np.ndarray | None = None
    null_self: bool = False
    null_partner: bool = False

    def unconditional(self) -> Conditions:
        return self.model_copy(update={"null_self": True, "null_partner": True})


class DenoiserPort(Protocol):
    def predict(self, x_t: FloatArray, t: int, conditions: Conditions) -> FloatArray: ...


def _component_mean(component: PriorComponent, shape: tuple[int, ...]) -> FloatArray:
    mean = np.asarray(component.mean, dtype=np.float64)
    try:
        return np.broadcast_to(mean, shape)
    except ValueError:
        raise DiffusionError(
            f"prior mean of shape {mean.shape} does not broadcast to segment {shape}"
        ) from None


def posterior_mean(
    x_t: FloatArray, t: int, components: list[PriorComponent], schedule: NoiseSchedule
) -> FloatArray:
    """E[x0 | x_t] under an isotropic Gaussian (mixture) prior."""
    x_t = np.asarray(x_t, dtype=np.float64)
    ab = schedule.alpha_bar(t)
    root_ab = math.sqrt(ab)
    means, log_weights = [], []
    for component in components:
        mu = _component_mean(component, x_t.shape)
        var = ab * component.stddev**2 + 1.0 - ab
        means.append((root_ab * component.stddev**2 * x_t + (1.0 - ab) * mu) / var)
        log_weights.append(
            math.log(component.weight)
            - 0.5 * float(np.sum((x_t - root_ab * mu) ** 2)) / var
            - 0.5 * x_t.size * math.log(2.0 * math.pi * var)
        )
    if len(means) == 1:
        return means[0]
    responsibilities = softmax(np.asarray(log_weights))
    result: FloatArray = np.tensordot(responsibilities, np.stack(means), axes=1)
    return result


def gaussian_denoiser(
    x_t: FloatArray,
    t: int,
    prior: GaussianPrior,
    state: MotionState,
    schedule: NoiseSchedule,
) -> FloatArray:
    """Closed-form noise estimate of the MSE-optimal denoiser for ``prior``."""
    if state not in prior.states:
        raise DiffusionError(f"prior defines no components for state '{state}'")
    x_t = np.asarray(x_t, dtype=np.float64)
    x0 = posterior_mean(x_t, t, prior.states[state], schedule)
    return _eps_from_x0(x_t, x0, schedule.alpha_bar(t))


class GaussianDenoiser:
    """Reference :class:`DenoiserPort`; ignores speech conditions."""

    def __init__(self, prior: GaussianPrior, schedule: NoiseSchedule) -> None:
        self.prior = prior
        self.schedule = schedule

    def predict(self, x_t: FloatArray, t: int, conditions: Conditions) -> FloatArray:
        return gaussian_denoiser(x_t, t, self.prior, conditions.state, self.schedule)


def cfg_combine(eps_cond: FloatArray, eps_uncond: FloatArray, scale: float) -> FloatArray:
    result: FloatArray = scale * np.asarray(eps_cond) + (1.0 - scale) * np.asarray(eps_uncond)
    return result


def ddim_timesteps(steps: int, ddim_steps: int) -> list[int]:
    """Descending timesteps from ``steps`` to 0 visited by a DDIM run."""
    if not 1 <= ddim_steps <= steps:
        raise InvalidSchedule(f"ddim_steps must lie in [1, {steps}], got {ddim_steps}")
    grid: NDArray[np.int64] = np.linspace(steps, 0, ddim_steps + 1).round().astype(np.int64)
    return [int(t) for t in grid]


def ddim_step(
    x_t: FloatArray,
    x0_hat: FloatArray,
    t: int,
    t_next: int,
    schedule: NoiseSchedule,
    eps: FloatArray | None = None,
) -> FloatArray:
    """Deterministic DDIM update.

    ``eps`` is the noise estimate to carry forward; when omitted it is
    recomputed from ``(x_t, x0_hat)``.
    """
    if t_next > t:
        raise DiffusionError(f"reverse step must not increase t ({t} -> {t_next})")
    x0_hat = np.asarray(x0_hat, dtype=np.float64)
    if t_next == 0:
        return x0_hat.copy()
    if eps is None:
        eps = _eps_from_x0(np.asarray(x_t, dtype=np.float64), x0_hat, schedule.alpha_bar(t))
    ab_next = schedule.alpha_bar(t_next)
    return math.sqrt(ab_next) * x0_hat + math.sqrt(1.0 - ab_next) * np.asarray(eps)


def inpaint_prefix(
    x_t: FloatArray,
    prev_tail: FloatArray,
    t: int,
    eps: FloatArray,
    schedule: NoiseSchedule,
) -> FloatArray:
    """Overwrite the first frames of ``x_t`` with the noised tail of the previous segment."""
    x_t = np.asarray(x_t, dtype=np.float64)
    prev_tail = np.asarray(prev_tail, dtype=np.float64)
    overlap = prev_tail.shape[0]
    if overlap > x_t.shape[0]:
        raise InvalidOverlap(f"overlap of {overlap} frames exceeds segment of {x_t.shape[0]}")
    if overlap and prev_tail.shape[1] != x_t.shape[1]:
        raise InvalidOverlap(
            f"tail width {prev_tail.shape[1]} does not match segment width {x_t.shape[1]}"
        )
    out = x_t.copy()
    if overlap:
        out[:overlap] = forward_noise(prev_tail, t, np.asarray(eps)[:overlap], schedule)
    return out


def training_loss(
    denoiser: DenoiserPort,
    x0: FloatArray,
    t: int,
    eps: FloatArray,
    conditions: Conditions,
    schedule: NoiseSchedule,
    rng: np.random.Generator | None = None,
    dropout: float = 0.2,
) -> float:
    """Noise-prediction MSE at ``t``.

    With ``rng`` each speech condition is nulled with probability ``dropout``.
    """
    if rng is not None:
        conditions = conditions.model_copy(
            update={
                "null_self": conditions.null_self or bool(rng.random() < dropout),
                "null_partner": conditions.null_partner or bool(rng.random() < dropout),
            }
        )
    x_t = forward_noise(x0, t, eps, schedule)
    predicted = denoiser.predict(x_t, t, conditions)
    return float(np.mean((np.asarray(eps) - predicted) ** 2))
