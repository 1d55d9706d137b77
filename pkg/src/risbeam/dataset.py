"""Supervised dataset assembly: sampled channels become bounded real
feature vectors, consecutive features become history windows, and oracle
rate vectors become normalized regression targets.
"""
from __future__ import annotations

import csv
from dataclasses import dataclass

import numpy as np

from .ris import RateVector, SampledChannel


@dataclass(frozen=True)
class FeatureVector:
    """Flat real encoding of one sampled channel, entries in [-1, 1]."""

    values: np.ndarray

    def __post_init__(self):
        values = np.ascontiguousarray(self.values, dtype=np.float64)
        if values.ndim != 1 or values.size < 1:
            raise ValueError("values must be a non-empty 1-D vector")
        if not np.isfinite(values).all():
            raise ValueError("values must be finite")
        if np.abs(values).max() > 1.0 + 1e-12:
            raise ValueError("encoded features must lie in [-1, 1]")
        values.flags.writeable = False
        object.__setattr__(self, "values", values)


@dataclass(frozen=True)
class TrainingSample:
    """History-windowed input (t_s rows, newest first) and its target vector."""

    history: np.ndarray
    target: np.ndarray

    def __post_init__(self):
        history = np.ascontiguousarray(self.history, dtype=np.float64)
        target = np.ascontiguousarray(self.target, dtype=np.float64)
        if history.ndim != 2:
            raise ValueError("history must be 2-D (t_s x feature_width)")
        if target.ndim != 1 or target.size < 1:
            raise ValueError("target must be a non-empty vector")
        if not (np.isfinite(history).all() and np.isfinite(target).all()):
            raise ValueError("history and target must be finite")
        history.flags.writeable = False
        target.flags.writeable = False
        object.__setattr__(self, "history", history)
        object.__setattr__(self, "target", target)

    @property
    def flat_input(self) -> np.ndarray:
        """Row-concatenated history, the network's input layout."""
        return self.history.reshape(-1)


@dataclass(frozen=True)
class SplitSpec:
    """Deterministic shuffle-then-cut partition sizes."""

    train_count: int
    test_count: int
    seed: int

    def __post_init__(self):
        if self.train_count < 1 or self.test_count < 1:
            raise ValueError("train_count and test_count must both be >= 1")


def encode_features(sampled: SampledChannel, k_in: int) -> FeatureVector:
    """Real/imag-interleaved encoding of the first k_in subcarriers.

    Element-major layout: for each active element, subcarriers 0..k_in-1
    contribute (real, imag) pairs.  The whole vector is scaled by its
    largest absolute component so entries land in [-1, 1]; an all-zero
    sample is passed through unscaled.
    """
    h_bar = sampled.h_bar
    if not 1 <= k_in <= h_bar.shape[1]:
        raise ValueError(
            f"k_in must be in [1, {h_bar.shape[1]}], got {k_in}"
        )
    block = h_bar[:, :k_in]
    interleaved = np.empty((block.shape[0], k_in, 2), dtype=np.float64)
    interleaved[:, :, 0] = block.real
    interleaved[:, :, 1] = block.imag
    values = interleaved.reshape(-1)
    peak = np.abs(values).max()
    if peak > 0.0:
        values = values / peak
    return FeatureVector(values=values)


def normalize_targets(rates: RateVector) -> np.ndarray:
    """Scale a rate vector by its maximum; all-zero vectors pass through."""
    values = np.array(rates.rates, dtype=np.float64)
    if rates.best_rate > 0.0:
        values /= rates.best_rate
    return values


def build_history_samples(
    features: list[FeatureVector],
    rate_vectors: list[RateVector],
    t_s: int,
) -> list[TrainingSample]:
    """Pair each time step s >= t_s-1 with its t_s most recent features.

    Row i of a sample's history holds the features of time s-i, so row 0
    is the current step.  The first t_s-1 steps yield no sample (no
    fabricated padding), leaving S - t_s + 1 samples total.
    """
    if t_s < 1:
        raise ValueError("t_s must be >= 1")
    if len(features) != len(rate_vectors):
        raise ValueError("features and rate_vectors must have equal length")
    if len(features) < t_s:
        raise ValueError(
            f"need at least t_s={t_s} time steps, got {len(features)}"
        )
    samples = []
    for s in range(t_s - 1, len(features)):
        history = np.stack([features[s - i].values for i in range(t_s)])
        samples.append(
            TrainingSample(history=history, target=normalize_targets(rate_vectors[s]))
        )
    return samples


def _shuffled_indices(n: int, seed: int) -> np.ndarray:
    rng = np.random.default_rng(seed)
    return rng.permutation(n)


def split_indices(n: int, spec: SplitSpec) -> tuple[np.ndarray, np.ndarray]:
    """Index-level variant of :func:`split`, for callers that track positions."""
    if spec.train_count + spec.test_count > n:
        raise ValueError(
            f"train+test = {spec.train_count + spec.test_count} exceeds {n} samples"
        )
    order = _shuffled_indices(n, spec.seed)
    train = order[: spec.train_count]
    test = order[spec.train_count : spec.train_count + spec.test_count]
    return train, test


def split(
    samples: list[TrainingSample], spec: SplitSpec
) -> tuple[list[TrainingSample], list[TrainingSample]]:
    """Disjoint train/test partition via a seed-deterministic shuffle."""
    train_idx, test_idx = split_indices(len(samples), spec)
    return [samples[i] for i in train_idx], [samples[i] for i in test_idx]


def export_dataset(samples: list[TrainingSample], path) -> None:
    """CSV dump: one row per sample, flattened history columns then target."""
    if not samples:
        raise ValueError("nothing to export")
    t_s, width = samples[0].history.shape
    p_size = samples[0].target.size
    header = [f"h{i}" for i in range(t_s * width)] + [f"r{i}" for i in range(p_size)]
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(header)
        for sample in samples:
            writer.writerow(
                [repr(v) for v in sample.flat_input] + [repr(v) for v in sample.target]
            )
