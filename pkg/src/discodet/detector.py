"""Unsupervised Neyman-Pearson detection pipeline at the warden.

The null side is analytic (the accumulated-power statistic is exactly
Gamma distributed when the transmitter is silent); the alternative side
is learned by a masked autoregressive flow.  The unsupervised variant
first discards the fraction of observations most likely under the null,
then fits the flow on the remainder; the threshold on the log-likelihood
ratio is calibrated by Monte Carlo against the analytic null.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field

import numpy as np

from . import flow as flowmod
from .statkit import binomial_ci, empirical_quantile, sample_gamma
from .theory import GammaNull, gamma_h0_logpdf

__all__ = [
    "ObservationBatch",
    "DetectorConfig",
    "FittedDetector",
    "DetectionReport",
    "h0_likelihood",
    "prefilter",
    "fit_unsupervised",
    "fit_supervised",
    "llr",
    "calibrate_threshold",
    "classify",
    "evaluate",
]


@dataclass
class ObservationBatch:
    """Accumulated-power statistics with hidden ground-truth labels.

    Labels (0 = silent, 1 = transmitting) exist only for evaluation and
    the supervised baseline; the unsupervised fit never reads them.
    """

    statistics: np.ndarray
    hidden_labels: np.ndarray
    provenance: dict = field(default_factory=dict)

    def __post_init__(self):
        self.statistics = np.asarray(self.statistics, dtype=float)
        self.hidden_labels = np.asarray(self.hidden_labels, dtype=np.int8)
        if self.statistics.shape != self.hidden_labels.shape:
            raise ValueError("statistics and hidden_labels must have equal length")
        if np.any(self.statistics < 0):
            raise ValueError("power statistics must be non-negative")

    def __len__(self) -> int:
        return self.statistics.size

    @staticmethod
    def concatenate(batches: list["ObservationBatch"]) -> "ObservationBatch":
        return ObservationBatch(
            np.concatenate([b.statistics for b in batches]),
            np.concatenate([b.hidden_labels for b in batches]),
        )

    def shuffled(self, gen: np.random.Generator) -> "ObservationBatch":
        order = gen.permutation(len(self))
        return ObservationBatch(self.statistics[order], self.hidden_labels[order],
                                dict(self.provenance))


@dataclass(frozen=True)
class DetectorConfig:
    """Operating point and calibration knobs of the detector."""

    alpha: float = 0.05          # target false alarm rate
    rho: float = 0.5             # prefilter discard proportion
    n_samples: int = 5           # samples accumulated per statistic (N)
    n_threshold: int = 1_000_000  # Monte-Carlo draws for threshold calibration
    mixture_h1: float = 0.5      # H1 fraction of the unlabeled training stream

    def __post_init__(self):
        if not 0.0 < self.alpha < 1.0:
            raise ValueError("alpha must lie in (0, 1)")
        if not 0.0 < self.rho < 1.0:
            raise ValueError("rho must lie in (0, 1)")
        if self.n_threshold < 1:
            raise ValueError("n_threshold must be >= 1")


@dataclass
class FittedDetector:
    """A trained alternative-density flow, the analytic null, and the
    calibrated log-likelihood-ratio threshold."""

    flow: flowmod.FlowModel
    null: GammaNull
    threshold: float
    metadata: dict = field(default_factory=dict)


@dataclass
class DetectionReport:
    """Empirical error rates with Wilson confidence intervals.

    A rate is None when the evaluation batch contains no sample of the
    corresponding hypothesis.
    """

    threshold: float
    far: float | None
    far_ci: tuple[float, float] | None
    mdr: float | None
    mdr_ci: tuple[float, float] | None
    n_h0: int
    n_h1: int
    alpha: float
    ci_level: float = 0.95


def h0_likelihood(null: GammaNull, y) -> np.ndarray | float:
    """Null-density value exp(log-pdf); log-domain internally."""
    return np.exp(gamma_h0_logpdf(null, y))


def prefilter(batch: ObservationBatch, null: GammaNull, rho: float) -> ObservationBatch:
    """Discard the observations most likely under the null.

    The cut point is the smallest likelihood value v with
    #{p_t >= v} <= rho * n; samples with p_t >= v are discarded, so
    ties at the cut are removed deterministically.
    """
    if not 0.0 < rho < 1.0:
        raise ValueError("rho must lie in (0, 1)")
    n = len(batch)
    if n == 0:
        raise ValueError("prefilter requires a non-empty batch")
    probs = np.asarray(h0_likelihood(null, batch.statistics))
    order = np.sort(probs)
    idx = min(int(np.ceil((1.0 - rho) * n)), n - 1)
    tau = order[idx]
    keep = probs < tau
    if not np.any(keep):
        raise ValueError("prefilter discarded every observation (degenerate split)")
    return ObservationBatch(batch.statistics[keep], batch.hidden_labels[keep],
                            {**batch.provenance, "prefilter_rho": rho,
                             "prefilter_tau": float(tau)})


def calibrate_threshold(model: flowmod.FlowModel, null: GammaNull, alpha: float,
                        n_mc: int, gen: np.random.Generator) -> float:
    """Monte-Carlo threshold: the (1 - alpha) quantile of the LLR under the null."""
    if n_mc < 1:
        raise ValueError("n_mc must be >= 1")
    if not 0.0 < alpha < 1.0:
        raise ValueError("alpha must lie in (0, 1)")
    if n_mc * min(alpha, 1.0 - alpha) < 100:
        warnings.warn(
            f"threshold calibration with n_mc={n_mc} resolves the alpha={alpha} "
            "tail with fewer than 100 samples; the threshold will be noisy",
            stacklevel=2)
    draws = sample_gamma(gen, null.shape, null.scale, size=n_mc)
    values = model.log_prob(draws[:, None]) - gamma_h0_logpdf(null, draws)
    return empirical_quantile(values, 1.0 - alpha)


def fit_unsupervised(batch: ObservationBatch, null: GammaNull, config: DetectorConfig,
                     train_config: flowmod.TrainConfig,
                     gen: np.random.Generator) -> FittedDetector:
    """Prefilter, fit the flow on the retained statistics, calibrate.

    Never reads the batch's hidden labels; ``gen`` drives only the
    threshold Monte Carlo.
    """
    retained = prefilter(batch, null, config.rho)
    model = flowmod.train(retained.statistics, train_config)
    eta = calibrate_threshold(model, null, config.alpha, config.n_threshold, gen)
    meta = {"mode": "unsupervised", "alpha": config.alpha, "rho": config.rho,
            "n_threshold": config.n_threshold, "n_train": len(retained)}
    return FittedDetector(model, null, eta, meta)


def fit_supervised(batch: ObservationBatch, null: GammaNull, config: DetectorConfig,
                   train_config: flowmod.TrainConfig,
                   gen: np.random.Generator) -> FittedDetector:
    """Supervised baseline: the batch is known to be transmit-hypothesis only."""
    if np.any(batch.hidden_labels != 1):
        raise ValueError("supervised fit expects a batch labeled H1 throughout")
    model = flowmod.train(batch.statistics, train_config)
    eta = calibrate_threshold(model, null, config.alpha, config.n_threshold, gen)
    meta = {"mode": "supervised", "alpha": config.alpha,
            "n_threshold": config.n_threshold, "n_train": len(batch)}
    return FittedDetector(model, null, eta, meta)


def llr(detector: FittedDetector, y) -> np.ndarray | float:
    """Log-likelihood ratio: learned alternative log-density minus null log-pdf."""
    arr = np.asarray(y, dtype=float)
    if np.any(arr < 0):
        raise ValueError("llr requires y >= 0")
    flat = np.atleast_1d(arr).astype(float)
    out = detector.flow.log_prob(flat[:, None]) - gamma_h0_logpdf(detector.null, flat)
    if np.ndim(y) == 0:
        return float(out[0])
    return out.reshape(arr.shape)


def classify(detector: FittedDetector, y) -> np.ndarray | bool:
    """True for H1 iff the LLR strictly exceeds the threshold (ties decide H0)."""
    values = llr(detector, y)
    out = np.asarray(values) > detector.threshold
    if np.ndim(y) == 0:
        return bool(out)
    return out


def evaluate(detector: FittedDetector, batch: ObservationBatch,
             ci_level: float = 0.95) -> DetectionReport:
    """Empirical FAR/MDR with Wilson intervals on a labeled evaluation batch."""
    pred_h1 = classify(detector, batch.statistics)
    labels = batch.hidden_labels
    is_h0 = labels == 0
    is_h1 = labels == 1
    n_h0 = int(is_h0.sum())
    n_h1 = int(is_h1.sum())
    far = far_ci = mdr = mdr_ci = None
    if n_h0:
        k = int(pred_h1[is_h0].sum())
        far = k / n_h0
        far_ci = binomial_ci(k, n_h0, ci_level)
    if n_h1:
        k = int((~pred_h1[is_h1]).sum())
        mdr = k / n_h1
        mdr_ci = binomial_ci(k, n_h1, ci_level)
    alpha = float(detector.metadata.get("alpha", np.nan))
    return DetectionReport(detector.threshold, far, far_ci, mdr, mdr_ci,
                           n_h0, n_h1, alpha, ci_level)
