"""Streaming normalization statistics for velocities and accelerations."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .._errors import StatsError


@dataclass
class RunningMoments:
    """Per-axis running mean and sum of squared deviations (Welford).

    Attributes:
        count: Number of samples seen.
        mean: Per-axis mean.
        m2: Per-axis sum of squared deviations from the mean.
    """

    count: int = 0
    mean: np.ndarray = field(default_factory=lambda: np.zeros(2))
    m2: np.ndarray = field(default_factory=lambda: np.zeros(2))

    def push(self, sample: np.ndarray) -> None:
        """Welford update with a single sample."""
        sample = np.asarray(sample, dtype=np.float64)
        self.count += 1
        delta = sample - self.mean
        self.mean = self.mean + delta / self.count
        self.m2 = self.m2 + delta * (sample - self.mean)

    def merge(self, other: RunningMoments) -> None:
        """Fold another stream into this one (Chan et al. pairwise update)."""
        if other.count == 0:
            return
        if self.count == 0:
            self.count, self.mean, self.m2 = other.count, other.mean.copy(), other.m2.copy()
            return
        total = self.count + other.count
        delta = other.mean - self.mean
        self.mean = self.mean + delta * (other.count / total)
        self.m2 = self.m2 + other.m2 + delta * delta * (self.count * other.count / total)
        self.count = total

    def extend(self, samples: np.ndarray) -> None:
        """Add a batch of samples ``[n, axes]`` in a single pass."""
        samples = np.asarray(samples, dtype=np.float64).reshape(-1, self.mean.shape[0])
        if len(samples) == 0:
            return
        batch_mean = samples.mean(axis=0)
        batch = RunningMoments(
            count=len(samples),
            mean=batch_mean,
            m2=((samples - batch_mean) ** 2).sum(axis=0),
        )
        self.merge(batch)

    @property
    def std(self) -> np.ndarray:
        """Population standard deviation; undefined below two samples."""
        if self.count < 2:
            raise StatsError(f"standard deviation undefined with {self.count} sample(s)")
        return np.sqrt(self.m2 / self.count)

    def to_dict(self) -> dict[str, object]:
        return {"count": self.count, "mean": self.mean.tolist(), "m2": self.m2.tolist()}

    @classmethod
    def from_dict(cls, data: dict) -> RunningMoments:
        return cls(
            count=int(data["count"]),
            mean=np.asarray(data["mean"], dtype=np.float64),
            m2=np.asarray(data["m2"], dtype=np.float64),
        )


@dataclass
class NormStats:
    """Dataset-level normalization statistics.

    Attributes:
        velocity: Moments of per-step velocities of fluid particles.
        acceleration: Moments of per-step accelerations of fluid particles.
    """

    velocity: RunningMoments = field(default_factory=RunningMoments)
    acceleration: RunningMoments = field(default_factory=RunningMoments)

    @property
    def count(self) -> int:
        return self.velocity.count

    @property
    def velocity_mean(self) -> np.ndarray:
        return self.velocity.mean

    @property
    def velocity_std(self) -> np.ndarray:
        return self.velocity.std

    @property
    def acceleration_mean(self) -> np.ndarray:
        return self.acceleration.mean

    @property
    def acceleration_std(self) -> np.ndarray:
        return self.acceleration.std

    def merge(self, other: NormStats) -> None:
        self.velocity.merge(other.velocity)
        self.acceleration.merge(other.acceleration)

    def to_dict(self) -> dict[str, object]:
        return {
            "velocity": self.velocity.to_dict(),
            "acceleration": self.acceleration.to_dict(),
        }

    @classmethod
    def from_dict(cls, data: dict) -> NormStats:
        return cls(
            velocity=RunningMoments.from_dict(data["velocity"]),
            acceleration=RunningMoments.from_dict(data["acceleration"]),
        )

    def copy(self) -> NormStats:
        return NormStats.from_dict(self.to_dict())


def accumulate_stats(
    stats: NormStats, velocities: np.ndarray, accelerations: np.ndarray
) -> NormStats:
    """Fold velocity and acceleration samples ``[..., 2]`` into ``stats`` in place.

    Returns:
        NormStats: ``stats``, for chaining.
    """
    velocities = np.asarray(velocities, dtype=np.float64).reshape(-1, 2)
    accelerations = np.asarray(accelerations, dtype=np.float64).reshape(-1, 2)
    if not (np.all(np.isfinite(velocities)) and np.all(np.isfinite(accelerations))):
        raise StatsError("non-finite samples passed to accumulate_stats")
    stats.velocity.extend(velocities)
    stats.acceleration.extend(accelerations)
    return stats


def checked_std(std: np.ndarray) -> np.ndarray:
    std = np.asarray(std, dtype=np.float64)
    if np.any(~(std > 0.0)):
        raise StatsError(f"normalization needs positive std, got {std.tolist()}")
    return std


def normalize(x: np.ndarray, mean: np.ndarray, std: np.ndarray) -> np.ndarray:
    """Element-wise ``(x - mean) / std``."""
    return (np.asarray(x, dtype=np.float64) - mean) / checked_std(std)


def denormalize(x_hat: np.ndarray, mean: np.ndarray, std: np.ndarray) -> np.ndarray:
    """Element-wise ``x_hat * std + mean``."""
    return np.asarray(x_hat, dtype=np.float64) * checked_std(std) + mean
