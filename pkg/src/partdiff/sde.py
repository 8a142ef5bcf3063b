"""Variance-exploding diffusion over pose sets.

The forward process is the drift-free SDE

    dQ = sigma**t dW,   t in [0, T],

whose perturbation kernel is Gaussian with per-coordinate variance

    kernel_variance(t) = (sigma**(2t) - 1) / (2 ln sigma),

the integral of the squared diffusion coefficient.  The same quantity
serves as the loss weight during training, and its value at T gives the
prior distribution N(0, kernel_variance(T) I) that sampling starts from.

All randomness is drawn from an injected ``numpy.random.Generator``;
nothing in this module touches global RNG state.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import ContractError, NumericalError

POSE_DIM = 6


@dataclass(frozen=True)
class DiffusionSchedule:
    """Noise schedule of the variance-exploding pose diffusion.

    sigma must exceed 1 so that the kernel variance is positive and
    strictly increasing for t > 0.
    """

    sigma: float = 25.0
    T: float = 1.0

    def __post_init__(self):
        if not self.sigma > 1.0:
            raise ContractError(f"sigma must be > 1, got {self.sigma}")
        if not self.T > 0.0:
            raise ContractError(f"T must be > 0, got {self.T}")

    def _check_time(self, t) -> None:
        t = np.asarray(t, dtype=float)
        if np.any(t < 0.0) or np.any(t > self.T):
            raise ContractError(f"t={t} outside [0, {self.T}]")

    def diffusion_coeff(self, t):
        """g(t) = sigma**t, the diffusion coefficient of the forward SDE."""
        self._check_time(t)
        return self.sigma ** np.asarray(t, dtype=float)

    def kernel_variance(self, t):
        """Per-coordinate variance of the perturbation kernel at time t.

        Equals the integral of g(s)**2 over [0, t]; strictly increasing,
        zero at t = 0.  Also used as the time-dependent loss weight.
        """
        self._check_time(t)
        t = np.asarray(t, dtype=float)
        return (self.sigma ** (2.0 * t) - 1.0) / (2.0 * math.log(self.sigma))

    def kernel_std(self, t):
        """Square root of :meth:`kernel_variance`."""
        return np.sqrt(self.kernel_variance(t))

    def perturb(
        self, q0: np.ndarray, t: float, rng: np.random.Generator
    ) -> tuple[np.ndarray, np.ndarray]:
        """Diffuse a pose set forward to time t in one shot.

        Returns ``(qt, z)`` with ``qt = q0 + sqrt(kernel_variance(t)) * z``
        and ``z`` a standard normal draw of q0's shape.  The raw draw is
        returned so callers can form the closed-form score target
        ``-z / kernel_std(t)`` without re-deriving it.
        """
        q0 = np.asarray(q0, dtype=float)
        if not np.all(np.isfinite(q0)):
            raise NumericalError("perturb: q0 contains non-finite entries")
        self._check_time(t)
        z = rng.standard_normal(q0.shape)
        qt = q0 + self.kernel_std(t) * z
        return qt, z

    def prior_sample(self, n_parts: int, rng: np.random.Generator) -> np.ndarray:
        """Draw an (n_parts, 6) pose set from N(0, kernel_variance(T) I)."""
        if n_parts < 1:
            raise ContractError(f"n_parts must be >= 1, got {n_parts}")
        return self.kernel_std(self.T) * rng.standard_normal((n_parts, POSE_DIM))
