"""Interaction metrics: delayed motion synchrony (DMSS) and Fréchet distance of distances (FDD)."""

from __future__ import annotations

from typing import Any

import numpy as np
from pydantic import BaseModel, ConfigDict, field_validator
from scipy import linalg

from dyadic.models import DmssConfig, SkeletonConfig
from dyadic.motion import FloatArray, TooShort, frozen_array, group_channels, velocities
from dyadic.trace import MotionTrace


class MetricsError(Exception):
    """Base class for metric errors."""


class UndefinedCorrelation(MetricsError):
    """Raised when every channel of a window has zero variance."""


class SkeletonMismatch(MetricsError):
    """Raised when two populations do not share a feature layout."""


def _shifted(v1: FloatArray, v2: FloatArray, lag: int) -> tuple[FloatArray, FloatArray]:
    length = v1.shape[0]
    if lag > 0:
        return v1[lag:], v2[: length - lag]
    if lag < 0:
        return v1[: length + lag], v2[-lag:]
    return v1, v2


def _lag_correlation(a: FloatArray, b: FloatArray) -> float | None:
    std_a, std_b = a.std(axis=0), b.std(axis=0)
    keep = (std_a > 0) & (std_b > 0)
    if not keep.any():
        return None
    za = (a[:, keep] - a[:, keep].mean(axis=0)) / std_a[keep]
    zb = (b[:, keep] - b[:, keep].mean(axis=0)) / std_b[keep]
    flat_a, flat_b = za.ravel(), zb.ravel()
    if flat_a.std() == 0 or flat_b.std() == 0:
        return None
    return float(np.corrcoef(flat_a, flat_b)[0, 1])


def dmss_window(v1: FloatArray, v2: FloatArray, max_lag: int) -> float:
    """Maximum Pearson correlation of two z-scored velocity windows over lags in [-L, L]."""
    v1 = np.asarray(v1, dtype=np.float64)
    v2 = np.asarray(v2, dtype=np.float64)
    if v1.ndim == 1:
        v1, v2 = v1[:, None], v2[:, None]
    if v1.shape != v2.shape:
        raise MetricsError(f"window shapes differ: {v1.shape} vs {v2.shape}")
    if v1.shape[0] - max_lag < 2:
        raise TooShort(f"window of {v1.shape[0]} rows cannot cover lag {max_lag}")
    scores = [
        score
        for lag in range(-max_lag, max_lag + 1)
        if (score := _lag_correlation(*_shifted(v1, v2, lag))) is not None
    ]
    if not scores:
        raise UndefinedCorrelation("all channels have zero variance at every lag")
    return max(scores)


class DmssReport(BaseModel):
    scores: list[float | None]
    excluded: int
    mean: float

    @property
    def windows(self) -> int:
        return len(self.scores)


def dmss_report(
    frames_i: FloatArray,
    frames_ii: FloatArray,
    selector: list[int],
    config: DmssConfig,
) -> DmssReport:
    """Sliding-window DMSS of two equally long traces over ``selector`` channel velocities.

    Windows whose correlation is undefined are excluded from the mean.
    """
    frames_i = np.asarray(frames_i, dtype=np.float64)
    frames_ii = np.asarray(frames_ii, dtype=np.float64)
    if frames_i.shape != frames_ii.shape:
        raise MetricsError(f"traces differ in shape: {frames_i.shape} vs {frames_ii.shape}")
    if frames_i.shape[0] < config.window + 1:
        raise TooShort(f"DMSS needs at least {config.window + 1} frames, got {frames_i.shape[0]}")
    v1, v2 = velocities(frames_i, selector), velocities(frames_ii, selector)
    scores: list[float | None] = []
    for start in range(0, v1.shape[0] - config.window + 1, config.stride):
        end = start + config.window
        try:
            scores.append(dmss_window(v1[start:end], v2[start:end], config.max_lag))
        except UndefinedCorrelation:
            scores.append(None)
    valid = [s for s in scores if s is not None]
    if not valid:
        raise UndefinedCorrelation("every DMSS window is undefined")
    return DmssReport(scores=scores, excluded=len(scores) - len(valid), mean=float(np.mean(valid)))


def dmss(
    frames_i: FloatArray, frames_ii: FloatArray, selector: list[int], config: DmssConfig
) -> float:
    return dmss_report(frames_i, frames_ii, selector, config).mean


class GaussianSummary(BaseModel):
    model_config = ConfigDict(arbitrary_types_allowed=True, frozen=True)

    mean: np.ndarray
    covariance: np.ndarray

    @field_validator("mean", "covariance", mode="before")
    @classmethod
    def _freeze(cls, value: Any) -> FloatArray:
        return frozen_array(value)


def fit_gaussian(features: FloatArray) -> GaussianSummary:
    samples = np.asarray(features, dtype=np.float64)
    if samples.ndim == 1:
        samples = samples[:, None]
    if samples.shape[0] < 2:
        raise MetricsError(f"need at least 2 samples to fit a Gaussian, got {samples.shape[0]}")
    return GaussianSummary(
        mean=samples.mean(axis=0),
        covariance=np.atleast_2d(np.cov(samples, rowvar=False)),
    )


def frechet_distance(a: GaussianSummary, b: GaussianSummary, eps: float = 1e-6) -> float:
    if a.mean.shape != b.mean.shape:
        raise SkeletonMismatch(f"feature sizes differ: {a.mean.shape} vs {b.mean.shape}")
    diff = a.mean - b.mean
    covmean = linalg.sqrtm(a.covariance @ b.covariance)
    if not np.isfinite(covmean).all():
        offset = np.eye(a.covariance.shape[0]) * eps
        covmean = linalg.sqrtm((a.covariance + offset) @ (b.covariance + offset))
    covmean = np.real(covmean)
    distance = float(
        diff @ diff + np.trace(a.covariance) + np.trace(b.covariance) - 2.0 * np.trace(covmean)
    )
    return max(distance, 0.0)


def joint_proxies(frames: FloatArray, skeleton: SkeletonConfig) -> FloatArray:
    """Per-frame 3-vectors standing in for joint positions: the root position and upper body."""
    frames = np.asarray(frames, dtype=np.float64)
    if frames.shape[-1] != skeleton.width:
        raise SkeletonMismatch(f"frame width {frames.shape[-1]} does not match {skeleton.width}")
    channels = group_channels(skeleton, "root_position")
    if "upper_body" in skeleton.named_groups:
        channels = channels + group_channels(skeleton, "upper_body")
    return frames[:, channels].reshape(frames.shape[0], -1, 3)


def distance_features(
    frames_i: FloatArray, frames_ii: FloatArray, skeleton: SkeletonConfig
) -> FloatArray:
    """Flattened cross-character proxy distance matrices, one row per frame pair."""
    a, b = joint_proxies(frames_i, skeleton), joint_proxies(frames_ii, skeleton)
    if a.shape != b.shape:
        raise SkeletonMismatch(f"frame pairs differ: {a.shape} vs {b.shape}")
    distances = np.linalg.norm(a[:, :, None, :] - b[:, None, :, :], axis=-1)
    features: FloatArray = distances.reshape(a.shape[0], -1)
    return features


def fdd(features_gen: FloatArray, features_real: FloatArray, eps: float = 1e-6) -> float:
    """Fréchet distance between two populations of distance features."""
    gen, real = np.asarray(features_gen), np.asarray(features_real)
    if gen.ndim != real.ndim or gen.shape[1:] != real.shape[1:]:
        raise SkeletonMismatch(f"feature layouts differ: {gen.shape[1:]} vs {real.shape[1:]}")
    return frechet_distance(fit_gaussian(gen), fit_gaussian(real), eps)


class DyadReport(BaseModel):
    trace: str
    frames: int
    dmss: DmssReport


class ComparisonReport(BaseModel):
    dmss: dict[str, float]
    fdd: float


class EvalReport(BaseModel):
    dyads: list[DyadReport]
    comparison: ComparisonReport | None = None


def evaluate(
    traces: list[tuple[str, MotionTrace]],
    config: DmssConfig,
    eps: float = 1e-6,
) -> EvalReport:
    """DMSS between the characters of each trace, and with two traces a comparison.

    The comparison scores each character's DMSS across the two traces over
    their common length, and the FDD of their cross-character distances.
    """
    if not 1 <= len(traces) <= 2:
        raise MetricsError(f"evaluate takes one or two traces, got {len(traces)}")
    skeleton = traces[0][1].skeleton
    selector = group_channels(skeleton, "upper_body")
    dyads = [
        DyadReport(
            trace=name,
            frames=trace.frame_count,
            dmss=dmss_report(trace.frames("I"), trace.frames("II"), selector, config),
        )
        for name, trace in traces
    ]
    if len(traces) == 1:
        return EvalReport(dyads=dyads)

    (_, first), (_, second) = traces
    if first.skeleton.width != second.skeleton.width:
        raise SkeletonMismatch(
            f"trace widths differ: {first.skeleton.width} vs {second.skeleton.width}"
        )
    length = min(first.frame_count, second.frame_count)
    cross = {
        c: dmss(first.frames(c)[:length], second.frames(c)[:length], selector, config)
        for c in ("I", "II")
    }
    distance = fdd(
        distance_features(first.frames("I"), first.frames("II"), skeleton),
        distance_features(second.frames("I"), second.frames("II"), skeleton),
        eps,
    )
    return EvalReport(dyads=dyads, comparison=ComparisonReport(dmss=cross, fdd=distance))
