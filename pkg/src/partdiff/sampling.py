"""Reverse-time pose sampling: predictor-corrector and its fast variant.

The predictor integrates the reverse SDE of the drift-free forward
process with Euler-Maruyama steps; the corrector is Langevin MCMC whose
step size is set from the score-to-noise norm ratio.

The plain sampler alternates correct/predict from time T down to T/N
and finishes with one noiseless predictor step.  The fast variant runs
the same main loop, then holds the state at time T/N for a block of
final corrector steps whose injected noise decays polynomially to zero,
and only then takes the noiseless predictor step.  The decay removes
the kernel-scale jitter from the finished poses without touching the
mode-seeking main loop, so sample diversity is unaffected.

Reported step counts: N for the plain sampler, N + final corrector
steps for the fast one.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field

import numpy as np

from .errors import ContractError, NumericalError
from .sde import DiffusionSchedule


@dataclass(frozen=True)
class SamplerConfig:
    n_steps: int
    corrector_steps: int = 1
    final_corrector_steps: int = 50
    snr: float = 0.16
    decay_exponent: float = 2.0
    snr_squared: bool = False
    schedule: DiffusionSchedule = field(default_factory=DiffusionSchedule)

    def __post_init__(self):
        if self.n_steps < 2:
            raise ContractError("n_steps must be >= 2")
        if self.corrector_steps < 0:
            raise ContractError("corrector_steps must be >= 0")
        if self.final_corrector_steps < 1:
            raise ContractError("final_corrector_steps must be >= 1")
        if self.snr <= 0:
            raise ContractError("snr must be positive")
        if self.decay_exponent < 0:
            raise ContractError("decay_exponent must be >= 0")

    @property
    def pc_total_steps(self) -> int:
        return self.n_steps

    @property
    def fpc_total_steps(self) -> int:
        return self.n_steps + self.final_corrector_steps


def predictor_step(
    field_fn,
    schedule: DiffusionSchedule,
    q: np.ndarray,
    t_prev: float,
    t: float,
    step: float,
    rng: np.random.Generator,
    with_noise: bool,
) -> np.ndarray:
    """One reverse Euler-Maruyama step from t_prev towards t.

    q' = q + step * sigma**(2 t_prev) * score(q, t_prev)
           [+ sqrt(step * sigma**(2 t_prev)) * z  when with_noise]

    The diffusion coefficient is evaluated at the departure time t_prev,
    the time the state actually has.
    """
    if not t_prev > t or t < 0.0:
        raise ContractError(f"predictor needs t_prev > t >= 0, got {t_prev}, {t}")
    q = np.asarray(q, dtype=float)
    g2 = float(schedule.diffusion_coeff(t_prev)) ** 2
    s = np.asarray(field_fn(q, t_prev), dtype=float)
    if not np.all(np.isfinite(s)):
        raise NumericalError(
            f"non-finite score in predictor step at t_prev={t_prev}"
        )
    out = q + step * g2 * s
    if with_noise:
        out = out + np.sqrt(step * g2) * rng.standard_normal(q.shape)
    return out


def corrector_step(
    field_fn,
    q: np.ndarray,
    t: float,
    r: float,
    noise_scale: float,
    rng: np.random.Generator,
    squared: bool = False,
) -> np.ndarray:
    """One Langevin MCMC step at fixed time t.

    eps = 2 (r ||z|| / ||g||), or 2 (r ||z|| / ||g||)^2 with ``squared``
    (the form common in earlier predictor-corrector samplers);
    q' = q + eps * g + sqrt(2 eps) * noise_scale * z.

    noise_scale is 1 for plain correction and (1 - i/C_F)^(d/2) during
    the decayed final block.  A zero-norm score makes eps undefined; the
    step is skipped with a warning.
    """
    q = np.asarray(q, dtype=float)
    z = rng.standard_normal(q.shape)
    g = np.asarray(field_fn(q, t), dtype=float)
    if not np.all(np.isfinite(g)):
        raise NumericalError(f"non-finite score in corrector step at t={t}")
    g_norm = float(np.linalg.norm(g))
    if g_norm == 0.0:
        warnings.warn(f"corrector skipped at t={t}: zero score norm")
        return q.copy()
    ratio = r * float(np.linalg.norm(z)) / g_norm
    eps = 2.0 * ratio**2 if squared else 2.0 * ratio
    return q + eps * g + np.sqrt(2.0 * eps) * noise_scale * z


def noise_decay_multipliers(final_steps: int, decay_exponent: float) -> np.ndarray:
    """The non-increasing noise multipliers (1 - i/C_F)^(d/2), i=0..C_F-1."""
    i = np.arange(final_steps, dtype=float)
    return (1.0 - i / final_steps) ** (decay_exponent / 2.0)


def _main_loop(field_fn, q, config: SamplerConfig, rng) -> np.ndarray:
    """Shared correct/predict sweep from level N-1 down to 1."""
    sched = config.schedule
    n, h = config.n_steps, config.schedule.T / config.n_steps
    for level in range(n - 1, 0, -1):
        t_prev = (level + 1) * h
        t = level * h
        for _ in range(config.corrector_steps):
            q = corrector_step(
                field_fn, q, t_prev, config.snr, 1.0, rng, config.snr_squared
            )
        q = predictor_step(field_fn, sched, q, t_prev, t, h, rng, with_noise=True)
    return q


def pc_sample(
    field_fn, n_parts: int, config: SamplerConfig, rng: np.random.Generator
) -> np.ndarray:
    """Plain predictor-corrector sampling; returns an (n_parts, 6) pose set."""
    q = config.schedule.prior_sample(n_parts, rng)
    q = _main_loop(field_fn, q, config, rng)
    h = config.schedule.T / config.n_steps
    return predictor_step(
        field_fn, config.schedule, q, h, 0.0, h, rng, with_noise=False
    )


def fpc_sample(
    field_fn, n_parts: int, config: SamplerConfig, rng: np.random.Generator
) -> np.ndarray:
    """Fast predictor-corrector sampling with final-stage noise decay."""
    q = config.schedule.prior_sample(n_parts, rng)
    q = _main_loop(field_fn, q, config, rng)
    h = config.schedule.T / config.n_steps
    t_p = h
    for mult in noise_decay_multipliers(
        config.final_corrector_steps, config.decay_exponent
    ):
        q = corrector_step(
            field_fn, q, t_p, config.snr, float(mult), rng, config.snr_squared
        )
    return predictor_step(
        field_fn, config.schedule, q, t_p, 0.0, h, rng, with_noise=False
    )
