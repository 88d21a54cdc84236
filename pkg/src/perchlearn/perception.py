"""Emulated optical-flow cues and accelerometer-aided distance estimation.

Cues come straight from the true state: RREV = V_z / d and OF_y = -V_x / d,
with d the vertical distance from the COM to the ceiling.  Distance is
recovered from RREV, its time derivative and vertical acceleration via

    d = z_acc / (dRREV/dt - RREV**2)

which has no answer for a constant-velocity approach (the denominator
vanishes), so the estimator reports ``None`` there.  See :func:`rrev_rate`
for how the RREV derivative is filtered.
"""

from __future__ import annotations

from collections import deque
from dataclasses import dataclass, replace
from typing import Sequence

import numpy as np

from .config import PerceptionParams, WorldConfig
from .dynamics import QuadState


class ContactRegimeError(ValueError):
    """Cues requested at or above the ceiling plane."""


@dataclass(frozen=True)
class PerceptionState:
    d_ceiling: float
    rrev: float
    of_y: float
    rrev_rate: float = float("nan")
    z_accel: float = 0.0
    timestamp: float = 0.0
    v_x: float = 0.0
    v_z: float = 0.0


def compute_cues(state: QuadState, world: WorldConfig, z_accel: float = 0.0,
                 rng: np.random.Generator | None = None, noise_std: float = 0.0) -> PerceptionState:
    d = world.ceiling_height - state.position[2]
    if d <= 0:
        raise ContactRegimeError(f"COM at or above ceiling (d={d:.4g} m)")
    vx, vz = float(state.velocity[0]), float(state.velocity[2])
    rrev, of_y = vz / d, -vx / d
    if noise_std > 0:
        if rng is None:
            raise ValueError("noise injection needs an rng")
        rrev += rng.normal(0.0, noise_std)
        of_y += rng.normal(0.0, noise_std)
    return PerceptionState(float(d), rrev, of_y, float("nan"), float(z_accel),
                           float(state.time), vx, vz)


def rrev_rate(times: Sequence[float], rrevs: Sequence[float]) -> float:
    """Time derivative of RREV at the newest sample.

    The least-squares quadratic is fitted to the time to contact 1/RREV and
    differentiated at the newest sample (the end-point Savitzky-Golay filter
    for evenly spaced samples), then mapped back: RREV' = -tau' RREV**2.
    1/RREV is linear for a constant-velocity approach and far smoother than
    RREV close to the surface.  When RREV touches zero or changes sign
    inside the window the quadratic is fitted to RREV itself.  A 2-sample
    window falls back to a plain difference.
    """
    t = np.asarray(times, dtype=float)
    y = np.asarray(rrevs, dtype=float)
    if len(t) < 2:
        raise ValueError("need at least two samples for a derivative")
    if len(t) == 2:
        return float((y[1] - y[0]) / (t[1] - t[0]))
    if np.all(y > 0) or np.all(y < 0):
        tau_rate = np.polyfit(t - t[-1], 1.0 / y, 2)[1]
        return float(-tau_rate * y[-1] ** 2)
    return float(np.polyfit(t - t[-1], y, 2)[1])


def estimate_distance(history: Sequence[PerceptionState], window: int = 5,
                      delta: float = 0.05) -> float | None:
    """Distance to the ceiling from the newest ``window`` samples, or None.

    None means the estimate is undefined: the RREV-rate denominator is within
    ``delta`` of zero (constant-velocity approach) or the result is not a
    positive finite distance.
    """
    if len(history) < 3:
        raise ValueError("distance estimation needs at least 3 samples")
    recent = list(history)[-window:]
    rate = rrev_rate([s.timestamp for s in recent], [s.rrev for s in recent])
    last = recent[-1]
    den = rate - last.rrev ** 2
    if not np.isfinite(den) or abs(den) < delta:
        return None
    d = last.z_accel / den
    if not np.isfinite(d) or d <= 0:
        return None
    return float(d)


class DistanceEstimator:
    """Sliding-window wrapper around :func:`estimate_distance`."""

    def __init__(self, params: PerceptionParams | None = None):
        self.params = params or PerceptionParams()
        self.samples: deque[PerceptionState] = deque(maxlen=self.params.window)

    def update(self, sample: PerceptionState) -> tuple[PerceptionState, float | None]:
        """Add a sample; return it with ``rrev_rate`` filled in, plus the estimate."""
        self.samples.append(sample)
        if len(self.samples) < 3:
            return sample, None
        rate = rrev_rate([s.timestamp for s in self.samples], [s.rrev for s in self.samples])
        est = estimate_distance(self.samples, self.params.window, self.params.singularity_delta)
        filled = replace(sample, rrev_rate=rate)
        self.samples[-1] = filled
        return filled, est
