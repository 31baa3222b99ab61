"""Displacement metrics and miss rate with min-over-modes variants."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np


@dataclass(frozen=True)
class MissRateThresholds:
    """Final-step miss thresholds in meters.

    Longitudinal: ``low_value`` up to ``low_speed``, linear to ``high_value``
    at ``high_speed``, constant above. These are a configurable default, not
    the benchmark's authoritative values.
    """
    lateral: float = 1.0
    low_speed: float = 1.4
    high_speed: float = 11.0
    low_value: float = 1.0
    high_value: float = 2.0

    def longitudinal(self, speed: float) -> float:
        return float(np.interp(speed, [self.low_speed, self.high_speed],
                               [self.low_value, self.high_value]))

    def describe(self) -> str:
        return (f"lat={self.lateral}m;lon={self.low_value}m@<={self.low_speed}m/s"
                f"..{self.high_value}m@>={self.high_speed}m/s")


def _pair(pred, truth):
    pred, truth = np.asarray(pred, dtype=np.float64), np.asarray(truth, dtype=np.float64)
    if pred.shape != truth.shape or pred.ndim != 2 or len(pred) == 0:
        raise ValueError(f"prediction {pred.shape} and truth {truth.shape} must be equal (n>=1, 2)")
    return pred, truth


def ade(pred, truth) -> float:
    pred, truth = _pair(pred, truth)
    return float(np.mean(np.linalg.norm(pred - truth, axis=1)))


def fde(pred, truth) -> float:
    pred, truth = _pair(pred, truth)
    return float(np.linalg.norm(pred[-1] - truth[-1]))


def min_over_modes(metric, predictions, truth) -> float:
    if len(predictions) == 0:
        raise ValueError("need at least one mode")
    return min(metric(p, truth) for p in predictions)


def is_miss(predictions, truth, speed: float, final_heading: float,
            thresholds: MissRateThresholds = MissRateThresholds()) -> bool:
    truth = np.asarray(truth, dtype=np.float64)
    c, s = np.cos(final_heading), np.sin(final_heading)
    lon_limit = thresholds.longitudinal(speed)
    for p in predictions:
        err = np.asarray(p, dtype=np.float64)[-1] - truth[-1]
        lon, lat = c * err[0] + s * err[1], -s * err[0] + c * err[1]
        if abs(lon) <= lon_limit and abs(lat) <= thresholds.lateral:
            return False
    return True


def miss_rate(samples, thresholds: MissRateThresholds = MissRateThresholds()) -> float:
    """Fraction of samples where every mode misses.

    ``samples`` yields ``(predictions, truth, speed, final_heading)`` with
    predictions shaped (K, F, 2).
    """
    samples = list(samples)
    if not samples:
        raise ValueError("miss_rate needs at least one sample")
    return sum(is_miss(p, t, v, h, thresholds) for p, t, v, h in samples) / len(samples)
