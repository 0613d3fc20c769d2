"""Guided DDIM sampling of one character's motion segment."""

from __future__ import annotations

from itertools import pairwise

import numpy as np
from loguru import logger

from dyadic.constraints import ConstraintSet
from dyadic.diffusion import (
    Conditions,
    DenoiserPort,
    NoiseSchedule,
    cfg_combine,
    ddim_step,
    ddim_timesteps,
    inpaint_prefix,
    predict_x0,
)
from dyadic.guidance import guide_x0, similarity_replace
from dyadic.models import GuidanceConfig
from dyadic.motion import FloatArray


def sample_segment(
    denoiser: DenoiserPort,
    conditions: Conditions,
    constraints: ConstraintSet,
    prev_tail: FloatArray | None,
    config: GuidanceConfig,
    schedule: NoiseSchedule,
    seed: int | np.random.SeedSequence,
    shape: tuple[int, int],
) -> FloatArray:
    """Run the reverse process for a ``shape`` (frames x channels) segment.

    Per step: inpaint the previous tail, classifier-free guided noise estimate,
    clean estimate, similarity replacement, interaction guidance, then a DDIM
    step from the guided clean estimate. With ``noise_estimate="recompute"``
    the step's noise is derived from ``x_t`` and the guided estimate; with
    ``"denoiser"`` the denoiser's estimate is carried forward. The final clean
    estimate is returned with the tail frames restored exactly.
    """
    rng = np.random.default_rng(seed)
    x = rng.standard_normal(shape)
    tail = None if prev_tail is None else np.asarray(prev_tail, dtype=np.float64)
    tail_noise = None if tail is None else rng.standard_normal(tail.shape)
    unconditional = conditions.unconditional()

    timesteps = ddim_timesteps(schedule.steps, config.ddim_steps)
    total = len(timesteps) - 1
    x0 = x
    for index, (t, t_next) in enumerate(pairwise(timesteps)):
        if tail is not None and tail_noise is not None:
            x = inpaint_prefix(x, tail, t, tail_noise, schedule)
        eps = denoiser.predict(x, t, conditions)
        if config.lambda_ != 1.0:
            eps = cfg_combine(eps, denoiser.predict(x, t, unconditional), config.lambda_)
        x0 = predict_x0(x, t, eps, schedule)
        x0 = similarity_replace(x0, constraints.similarity, t, schedule, config.similarity_window)
        x0 = guide_x0(x0, constraints, config, index, total)
        carried = eps if config.noise_estimate == "denoiser" else None
        x = ddim_step(x, x0, t, t_next, schedule, eps=carried)

    if tail is not None and len(tail):
        x0 = np.array(x0)
        x0[: len(tail)] = tail
    logger.debug(
        "sampled {} frames x {} channels in {} steps ({} constraints)",
        shape[0],
        shape[1],
        total,
        len(constraints.trajectory),
    )
    return x0


class MotionSampler:
    """Binds a denoiser, schedule and guidance settings for repeated segment sampling."""

    def __init__(
        self, denoiser: DenoiserPort, schedule: NoiseSchedule, config: GuidanceConfig
    ) -> None:
        self.denoiser = denoiser
        self.schedule = schedule
        self.config = config

    def sample(
        self,
        conditions: Conditions,
        constraints: ConstraintSet,
        prev_tail: FloatArray | None,
        seed: int | np.random.SeedSequence,
        shape: tuple[int, int],
    ) -> FloatArray:
        return sample_segment(
            self.denoiser,
            conditions,
            constraints,
            prev_tail,
            self.config,
            self.schedule,
            seed,
            shape,
        )
