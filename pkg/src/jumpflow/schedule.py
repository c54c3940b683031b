"""Reveal schedules, hazards, and training-time sampling.

A schedule ``kappa: [0, 1] -> [0, 1]`` fixes the expected fraction of revealed
(visible) frames as a function of global time.  Treating a single frame's
reveal time as a random variable with CDF ``kappa``, the instantaneous reveal
hazard is ``kappa'(t) / (1 - kappa(t))``, which diverges at t -> 1; consumers
stepping across an interval should prefer the integrated hazard, which is
finite whenever the interval stays away from 1.

Training draws per-frame insertion delays by inverse-CDF sampling
(``kappa^{-1}(u)``, u uniform) and a global extended time from a configurable
distribution, then derives per-frame extended times as global time minus
delay.  The appendix-style refinement used here first caps the extended-time
range at ``max(delay) + 1`` so the sampled window always contains at least one
frame mid-denoise.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .frames import clip_time

# Hazard is considered divergent this close to t = 1.
HAZARD_EDGE = 1e-9


@dataclass(frozen=True)
class Scheduler:
    """Reveal schedule family: linear or power (kappa(t) = t**p, p > 0)."""

    family: str = "linear"
    power_p: float = 1.0

    def __post_init__(self):
        if self.family not in ("linear", "power"):
            raise ValueError(f"unknown schedule family {self.family!r}")
        if self.family == "power" and not self.power_p > 0:
            raise ValueError("power schedule needs p > 0")

    @property
    def _p(self) -> float:
        return 1.0 if self.family == "linear" else float(self.power_p)

    def kappa(self, t):
        t = np.asarray(t, dtype=np.float64)
        out = np.power(np.clip(t, 0.0, 1.0), self._p)
        return float(out) if out.ndim == 0 else out

    def kappa_dot(self, t):
        t = np.asarray(t, dtype=np.float64)
        p = self._p
        if p == 1.0:
            out = np.ones_like(t)
        else:
            out = p * np.power(np.clip(t, 0.0, 1.0), p - 1.0)
        return float(out) if out.ndim == 0 else out

    def kappa_inv(self, u):
        u = np.asarray(u, dtype=np.float64)
        if ((u < 0) | (u > 1)).any():
            raise ValueError("kappa_inv domain is [0, 1]")
        out = np.power(u, 1.0 / self._p)
        return float(out) if out.ndim == 0 else out

    def hazard(self, t: float) -> float:
        """Instantaneous reveal hazard kappa'/(1 - kappa).

        Zero for t < 0 (nothing reveals before the window opens); rejects
        t >= 1 - 1e-9 where the hazard diverges.
        """
        if np.isnan(t):
            raise ValueError("hazard: NaN time")
        if t >= 1.0 - HAZARD_EDGE:
            raise ValueError(f"hazard diverges at t={t}; use integrated_hazard or clamp")
        if t < 0.0:
            return 0.0
        return self.kappa_dot(t) / (1.0 - self.kappa(t))

    def integrated_hazard(self, t: float, h: float) -> float:
        """Exact integral of the hazard over [t, t + h].

        Equals ``log((1 - kappa(t)) / (1 - kappa(t + h)))``; the interval must
        satisfy 0 <= t <= t + h <= 1 - 1e-9.  h = 0 returns 0.
        """
        if h < 0:
            raise ValueError("integrated_hazard: negative interval")
        if t < 0:
            raise ValueError("integrated_hazard: t < 0")
        if t + h > 1.0 - HAZARD_EDGE:
            raise ValueError("integrated_hazard: interval touches the divergence at 1")
        if h == 0:
            return 0.0
        return math.log((1.0 - self.kappa(t)) / (1.0 - self.kappa(t + h)))

    def sample_offsets(self, n: int, n_start: int, rng: np.random.Generator) -> np.ndarray:
        """Per-frame insertion delays: 0 for starting frames, kappa^{-1}(U) otherwise."""
        if not (0 <= n_start <= n):
            raise ValueError(f"n_start={n_start} out of range for n={n}")
        offsets = np.zeros(n, dtype=np.float64)
        if n > n_start:
            offsets[n_start:] = self.kappa_inv(rng.uniform(0.0, 1.0, size=n - n_start))
        return offsets


@dataclass(frozen=True)
class GlobalTimeDist:
    """Distribution of the extended global time on [0, tau_max].

    kinds:
      - ``uniform``: U(0, tau_max)
      - ``logit_normal``: tau_max * sigmoid(N(mu, sigma))
      - ``lognorm_scaled``: tau_max * Y with Y ~ exp(N(mu, sigma)) conditioned
        on Y <= 1 (the raw lognormal is unbounded, so it is truncated to keep
        samples inside the window)
    """

    kind: str = "lognorm_scaled"
    mu: float = 0.0
    sigma: float = 1.0

    def __post_init__(self):
        if self.kind not in ("uniform", "logit_normal", "lognorm_scaled"):
            raise ValueError(f"unknown global-time distribution {self.kind!r}")
        if self.sigma <= 0:
            raise ValueError("sigma must be positive")

    def sample(self, tau_max: float, rng: np.random.Generator) -> float:
        if self.kind == "uniform":
            return float(rng.uniform(0.0, tau_max))
        if self.kind == "logit_normal":
            x = rng.normal(self.mu, self.sigma)
            return float(tau_max / (1.0 + math.exp(-x)))
        # lognorm_scaled: rejection-sample the truncation Y <= 1
        while True:
            y = math.exp(rng.normal(self.mu, self.sigma))
            if y <= 1.0:
                return float(tau_max * y)


@dataclass(frozen=True)
class TrainingTimes:
    """Sampled extended times for one training example.

    ``tau[i] = tau_g - offsets[i]``; visible frames are those with tau >= 0;
    at least one frame is guaranteed to be mid-denoise (flowing).
    """

    tau_g: float
    offsets: np.ndarray
    tau: np.ndarray

    @property
    def t_g(self) -> float:
        return clip_time(self.tau_g)

    @property
    def t(self) -> np.ndarray:
        return clip_time(self.tau)

    @property
    def visible_mask(self) -> np.ndarray:
        return self.tau >= 0.0

    @property
    def flowing_mask(self) -> np.ndarray:
        return (self.tau >= 0.0) & (self.tau < 1.0)


def sample_training_times(
    scheduler: Scheduler,
    dist: GlobalTimeDist,
    n: int,
    n_start: int,
    rng: np.random.Generator,
    max_resamples: int = 10_000,
) -> TrainingTimes:
    """Draw per-frame extended times for training.

    Offsets are drawn once; the global time is resampled until at least one
    frame is flowing (with n_start >= 1 this only rejects the boundary draw
    tau_g = max(offsets) + 1).
    """
    if n < 1:
        raise ValueError("need at least one frame")
    offsets = scheduler.sample_offsets(n, n_start, rng)
    tau_max = float(np.max(offsets)) + 1.0
    for _ in range(max_resamples):
        tau_g = dist.sample(tau_max, rng)
        tau = tau_g - offsets
        if np.any((tau >= 0.0) & (tau < 1.0)):
            return TrainingTimes(tau_g=tau_g, offsets=offsets, tau=tau)
    raise RuntimeError("could not sample a window with a flowing frame")
