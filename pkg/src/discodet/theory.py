"""Closed-form statistics used as oracles and as the analytic half of the test.

Covers the Gamma null distribution of the radiometer statistic, the
large-surface Gaussian limit of the cascaded disco-surface channel, and
the asymptotic signal-to-jamming-plus-noise ratio (SJNR) at the receiver.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

__all__ = [
    "GammaNull",
    "alpha_bar",
    "prop_variance",
    "gamma_h0_logpdf",
    "sjnr_theory",
    "sjnr_empirical",
]


@dataclass(frozen=True)
class GammaNull:
    """Null distribution of the accumulated power statistic: Gamma(N, noise_power)."""

    shape: int          # samples accumulated per statistic (N)
    scale: float        # per-sample noise power (delta_w^2), watts

    def __post_init__(self):
        if int(self.shape) != self.shape or self.shape < 1:
            raise ValueError(f"shape must be a positive integer, got {self.shape}")
        if self.scale <= 0:
            raise ValueError(f"scale must be positive, got {self.scale}")

    @property
    def mean(self) -> float:
        return self.shape * self.scale


def _log_gamma_int(n: int) -> float:
    # N is small (5 in the default configuration); exact factorial below 21.
    if n <= 20:
        return math.log(math.factorial(n - 1))
    return math.lgamma(n)


def alpha_bar(profile) -> float:
    """Mean squared reflection amplitude: sum_i p_i * amp_i^2.

    ``profile`` is any object exposing ``probabilities`` and ``amplitudes``
    sequences of equal length (see :class:`discodet.channel.DrisProfile`).
    """
    p = np.asarray(profile.probabilities, dtype=float)
    a = np.asarray(profile.amplitudes, dtype=float)
    return float(np.sum(p * a * a))


def prop_variance(n_elements: int, abar: float, loss_g: float, loss_i: float) -> float:
    """Variance of the cascaded surface channel in its Gaussian limit.

    Equals n_elements * abar / (loss_g * loss_i) where the losses are the
    linear large-scale attenuations of the two hops.
    """
    if loss_g <= 0 or loss_i <= 0:
        raise ValueError("large-scale losses must be positive")
    if abar < 0 or n_elements < 0:
        raise ValueError("n_elements and abar must be non-negative")
    return n_elements * abar / (loss_g * loss_i)


def gamma_h0_logpdf(null: GammaNull, y) -> np.ndarray | float:
    """Log-density of the null Gamma distribution, valid for y >= 0.

    y = 0 is handled as the density limit: -inf for shape > 1 and
    -log(scale) for shape = 1.
    """
    arr = np.asarray(y, dtype=float)
    if np.any(arr < 0):
        raise ValueError("gamma_h0_logpdf requires y >= 0")
    n, s = null.shape, null.scale
    norm = _log_gamma_int(n) + n * math.log(s)
    with np.errstate(divide="ignore", invalid="ignore"):
        out = (n - 1) * np.log(arr) - arr / s - norm
    if n == 1:
        out = np.where(arr == 0.0, -math.log(s), out)
    else:
        out = np.where(arr == 0.0, -np.inf, out)
    if np.isscalar(y) or np.ndim(y) == 0:
        return float(out)
    return out


def sjnr_theory(p0: float, n_elements: int, abar: float, loss_direct: float,
                loss_g: float, loss_i: float, noise_power: float) -> float:
    """Asymptotic SJNR at the legitimate receiver (linear ratio).

    (p0 / loss_direct) / (p0 * n_elements * abar / (loss_g * loss_i) + noise_power)
    """
    if min(p0, loss_direct, loss_g, loss_i, noise_power) <= 0:
        raise ValueError("powers and losses must be positive")
    jam = p0 * n_elements * abar / (loss_g * loss_i)
    return (p0 / loss_direct) / (jam + noise_power)


def sjnr_empirical(signal_powers, jamming_powers, noise_power: float) -> float:
    """Ergodic SJNR as a ratio of sample means over per-symbol powers."""
    sig = np.asarray(signal_powers, dtype=float)
    jam = np.asarray(jamming_powers, dtype=float)
    if sig.size == 0:
        raise ValueError("sjnr_empirical requires at least one symbol")
    return float(sig.mean() / (jam.mean() + noise_power))
