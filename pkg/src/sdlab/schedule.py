"""Forward-process noise schedules and the noising operation."""

from dataclasses import dataclass

import numpy as np

SCHEDULE_FAMILIES = ("cosine", "linear-sigma")


@dataclass(frozen=True)
class NoiseSchedule:
    """Per-timestep coefficients of x_t = alpha_t * x0 + sigma_t * eps.

    Arrays have length T+1, indexed by integer timestep; sigma rises
    monotonically from 0 to 1 and alpha_t^2 + sigma_t^2 = 1 at every t.
    """

    num_timesteps: int
    alphas: np.ndarray
    sigmas: np.ndarray
    family: str = "cosine"

    @property
    def T(self):
        return self.num_timesteps


def make_schedule(T, family="cosine"):
    if T < 2:
        raise ValueError(f"schedule needs T >= 2, got {T}")
    if family not in SCHEDULE_FAMILIES:
        raise ValueError(f"unknown schedule family {family!r}")
    t = np.arange(T + 1, dtype=np.float64)
    if family == "cosine":
        alphas = np.cos(0.5 * np.pi * t / T)
        sigmas = np.sin(0.5 * np.pi * t / T)
    else:
        sigmas = t / T
        alphas = np.sqrt(1.0 - sigmas**2)
    alphas.setflags(write=False)
    sigmas.setflags(write=False)
    return NoiseSchedule(T, alphas, sigmas, family)


def add_noise(x0, eps, t, sched):
    """x_t = alpha_t * x0 + sigma_t * eps, elementwise.

    Works on a single sample or a batch whose trailing shape matches x0.
    """
    x0 = np.asarray(x0, dtype=np.float64)
    eps = np.asarray(eps, dtype=np.float64)
    if eps.shape[-x0.ndim:] != x0.shape:
        raise ValueError(f"shape mismatch: x0 {x0.shape} vs eps {eps.shape}")
    if not 0 <= t <= sched.T:
        raise ValueError(f"timestep {t} outside [0, {sched.T}]")
    return sched.alphas[t] * x0 + sched.sigmas[t] * eps
