"""Interaction guidance applied to the clean-motion estimate during sampling."""

from __future__ import annotations

from collections.abc import Sequence
from typing import Literal

import numpy as np

from dyadic.constraints import ConstraintSet, SimilarityConstraint, TrajectoryConstraint
from dyadic.diffusion import InvalidConstraint, NoiseSchedule
from dyadic.models import GuidanceConfig
from dyadic.motion import FloatArray, InvalidSelector, extract, extract_adjoint

LossNorm = Literal["squared", "l2"]


def _trajectory(
    constraints: ConstraintSet | Sequence[TrajectoryConstraint],
) -> list[TrajectoryConstraint]:
    if isinstance(constraints, ConstraintSet):
        return list(constraints.trajectory)
    return list(constraints)


def trajectory_loss(
    x0_hat: FloatArray, constraint: TrajectoryConstraint, norm: LossNorm = "squared"
) -> tuple[float, FloatArray]:
    """Loss and gradient of one masked trajectory constraint.

    ``squared`` is the sum of squared masked residuals; ``l2`` is their
    Euclidean norm, whose gradient is zero at the target.
    """
    x = np.asarray(x0_hat, dtype=np.float64)
    try:
        current = extract(x, constraint.selector)
    except InvalidSelector as exc:
        raise InvalidConstraint(str(exc)) from exc
    if current.shape != constraint.targets.shape:
        raise InvalidConstraint(
            f"{constraint.group} targets {constraint.targets.shape} do not match "
            f"extracted {current.shape}"
        )
    residual = constraint.mask * (current - constraint.targets)
    if norm == "squared":
        loss = float(np.sum(residual**2))
        grad = 2.0 * constraint.mask * residual
    else:
        loss = float(np.linalg.norm(residual))
        grad = np.zeros_like(residual) if loss == 0.0 else constraint.mask * residual / loss
    return loss, extract_adjoint(grad, constraint.selector, x.shape[1])


def constraint_loss(
    x0_hat: FloatArray,
    constraints: ConstraintSet | Sequence[TrajectoryConstraint],
    norm: LossNorm = "squared",
) -> tuple[float, FloatArray]:
    """Summed loss of every trajectory constraint and its gradient with respect to ``x0_hat``."""
    x = np.asarray(x0_hat, dtype=np.float64)
    total, grad = 0.0, np.zeros_like(x)
    for constraint in _trajectory(constraints):
        loss, g = trajectory_loss(x, constraint, norm)
        total += loss
        grad += g
    return total, grad


def guide_x0(
    x0_hat: FloatArray,
    constraints: ConstraintSet | Sequence[TrajectoryConstraint],
    config: GuidanceConfig,
    step_index: int,
    total_steps: int,
) -> FloatArray:
    """Gradient steps on the clean estimate during the first ``tau`` share of reverse steps.

    Each of ``updates_per_step`` passes visits every constraint in turn and
    re-evaluates its loss at the current estimate. A group's step is its
    ``alpha_map`` strength times its ``group_variance``: strengths are stated
    for unit-variance channels, so a squared-loss update moves every active
    entry by ``2 * alpha * variance`` of its residual.
    """
    x = np.array(x0_hat, dtype=np.float64)
    trajectory = _trajectory(constraints)
    if not trajectory or step_index >= config.tau * total_steps:
        return x
    for _ in range(config.updates_per_step):
        for constraint in trajectory:
            step = config.step_size(constraint.group)
            if step == 0.0:
                continue
            _, grad = trajectory_loss(x, constraint, config.loss_norm)
            x -= step * grad
    return x


def similarity_replace(
    x0_hat: FloatArray,
    constraint: SimilarityConstraint | None,
    t: int,
    schedule: NoiseSchedule,
    window: Literal["early", "literal"] = "early",
) -> FloatArray:
    """Overwrite the constrained channels with the target motion while ``t`` is in scope.

    ``early`` replaces during the first ``cutoff`` timesteps of the reverse
    process (``t > T - cutoff``); ``literal`` replaces while ``t < cutoff``.
    """
    x = np.array(x0_hat, dtype=np.float64)
    if constraint is None:
        return x
    if constraint.target.shape != x.shape:
        raise InvalidConstraint(
            f"similarity target {constraint.target.shape} does not match segment {x.shape}"
        )
    if window == "early":
        active = t > schedule.steps - constraint.cutoff
    else:
        active = t < constraint.cutoff
    if active:
        x[:, constraint.selector] = constraint.target[:, constraint.selector]
    return x
