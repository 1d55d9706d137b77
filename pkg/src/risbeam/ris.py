"""RIS interaction vectors: codebook construction, rate evaluation and
exhaustive search, plus the active-element channel sampling used as the
predictor's observation.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .channel import ArrayGeometry, ChannelRealization, TWO_PI

UNIT_MODULUS_ATOL = 1e-8


@dataclass(frozen=True)
class Codebook:
    """Candidate interaction vectors as columns of an M x P matrix.

    Every entry is a pure phase (phase-shifter hardware), |entry| = 1.
    """

    vectors: np.ndarray

    def __post_init__(self):
        vectors = np.ascontiguousarray(self.vectors, dtype=np.complex128)
        if vectors.ndim != 2 or vectors.shape[1] < 1:
            raise ValueError("codebook must be a 2-D matrix with >= 1 column")
        if not np.allclose(np.abs(vectors), 1.0, atol=UNIT_MODULUS_ATOL, rtol=0.0):
            raise ValueError("codebook entries must have unit modulus")
        vectors.flags.writeable = False
        object.__setattr__(self, "vectors", vectors)

    @property
    def p_size(self) -> int:
        return self.vectors.shape[1]

    @property
    def num_elements(self) -> int:
        return self.vectors.shape[0]


@dataclass(frozen=True)
class SelectionMatrix:
    """Row-selection operator picking the actively sensed RIS elements."""

    active_indices: tuple[int, ...]

    def __post_init__(self):
        indices = tuple(int(i) for i in self.active_indices)
        if not indices:
            raise ValueError("selection must contain at least one index")
        if any(i < 0 for i in indices):
            raise ValueError("indices must be non-negative")
        if any(b <= a for a, b in zip(indices, indices[1:])):
            raise ValueError("indices must be strictly increasing")
        object.__setattr__(self, "active_indices", indices)

    @property
    def m_bar(self) -> int:
        return len(self.active_indices)


@dataclass(frozen=True)
class SampledChannel:
    """Cascade channel observed at the active elements (m_bar x K)."""

    h_bar: np.ndarray

    def __post_init__(self):
        h_bar = np.ascontiguousarray(self.h_bar, dtype=np.complex128)
        if h_bar.ndim != 2:
            raise ValueError("h_bar must be 2-D")
        if not np.isfinite(h_bar).all():
            raise ValueError("h_bar must be finite")
        h_bar.flags.writeable = False
        object.__setattr__(self, "h_bar", h_bar)


@dataclass(frozen=True)
class RateVector:
    """Achievable rate of every codebook entry plus the argmax summary."""

    rates: np.ndarray
    best_index: int
    best_rate: float

    def __post_init__(self):
        rates = np.ascontiguousarray(self.rates, dtype=np.float64)
        if rates.ndim != 1 or rates.size < 1:
            raise ValueError("rates must be a non-empty vector")
        if (rates < 0).any():
            raise ValueError("rates must be non-negative")
        if self.best_index != int(np.argmax(rates)):
            raise ValueError("best_index must be the first argmax of rates")
        if self.best_rate != rates[self.best_index]:
            raise ValueError("best_rate must equal rates[best_index]")
        rates.flags.writeable = False
        object.__setattr__(self, "rates", rates)


@dataclass(frozen=True)
class LinkBudget:
    """Transmit power and noise floor; fixes the per-subcarrier SNR."""

    total_power: float
    noise_power: float
    num_subcarriers: int

    def __post_init__(self):
        if not self.total_power > 0:
            raise ValueError("total_power must be positive")
        if not self.noise_power > 0:
            raise ValueError("noise_power must be positive")
        if self.num_subcarriers < 1:
            raise ValueError("num_subcarriers must be >= 1")

    @property
    def snr(self) -> float:
        """Per-subcarrier SNR: power splits evenly over the subcarriers."""
        return self.total_power / (self.num_subcarriers * self.noise_power)


def cascade(realization: ChannelRealization) -> np.ndarray:
    """Elementwise two-hop product, column k = h_t[:, k] * h_r[:, k]."""
    return realization.h_t * realization.h_r


def received_signal(
    realization: ChannelRealization,
    psi: np.ndarray,
    symbols: np.ndarray,
    noise: np.ndarray,
) -> np.ndarray:
    """Per-subcarrier received symbol y_k = h_r,k^T diag(psi) h_t,k s_k + n_k."""
    psi = np.asarray(psi, dtype=np.complex128)
    if psi.shape != (realization.num_elements,):
        raise ValueError(
            f"psi must have shape ({realization.num_elements},), got {psi.shape}"
        )
    if not np.allclose(np.abs(psi), 1.0, atol=UNIT_MODULUS_ATOL, rtol=0.0):
        raise ValueError("interaction vector entries must have unit modulus")
    symbols = np.asarray(symbols, dtype=np.complex128)
    noise = np.asarray(noise, dtype=np.complex128)
    k_count = realization.num_subcarriers
    if symbols.shape != (k_count,) or noise.shape != (k_count,):
        raise ValueError(f"symbols and noise must have shape ({k_count},)")
    interaction = np.diag(psi)
    out = np.empty(k_count, dtype=np.complex128)
    for k in range(k_count):
        out[k] = realization.h_r[:, k] @ interaction @ realization.h_t[:, k] * symbols[k] + noise[k]
    return out


def achievable_rate(cascade_matrix: np.ndarray, psi: np.ndarray, budget: LinkBudget) -> float:
    """Mean over subcarriers of log2(1 + SNR * |c_k^T psi|^2), in bits/s/Hz."""
    cascade_matrix = np.asarray(cascade_matrix, dtype=np.complex128)
    psi = np.asarray(psi, dtype=np.complex128)
    if cascade_matrix.ndim != 2 or psi.shape != (cascade_matrix.shape[0],):
        raise ValueError(
            f"shape mismatch: cascade {cascade_matrix.shape}, psi {psi.shape}"
        )
    gains = np.abs(cascade_matrix.T @ psi) ** 2
    return float(np.mean(np.log2(1.0 + budget.snr * gains)))


def exhaustive_search(
    cascade_matrix: np.ndarray, codebook: Codebook, budget: LinkBudget
) -> RateVector:
    """Achievable rate of every codebook column; ties go to the lowest index."""
    cascade_matrix = np.asarray(cascade_matrix, dtype=np.complex128)
    if cascade_matrix.shape[0] != codebook.num_elements:
        raise ValueError(
            f"cascade has {cascade_matrix.shape[0]} rows, codebook {codebook.num_elements}"
        )
    gains = np.abs(cascade_matrix.T @ codebook.vectors) ** 2  # (K, P)
    rates = np.mean(np.log2(1.0 + budget.snr * gains), axis=0)
    best = int(np.argmax(rates))
    return RateVector(rates=rates, best_index=best, best_rate=float(rates[best]))


def _axis_grid_sizes(dims: tuple[int, int, int], size: int) -> tuple[int, int, int]:
    """Per-axis beam-grid sizes whose product is >= size.

    Grid density scales with the element count of each active axis, so the
    angular resolution stays proportional to the aperture.
    """
    active = [d for d in dims if d > 1]
    if not active:
        return (1, 1, 1)
    total = int(np.prod(dims))
    ratio = (size / total) ** (1.0 / len(active))
    return tuple(int(np.ceil(d * ratio)) if d > 1 else 1 for d in dims)


def build_dft_codebook(geometry: ArrayGeometry, size: int) -> Codebook:
    """Beamsteering codebook from per-axis DFT grids of the planar array.

    Each axis with n elements contributes beams exp(-j*2*pi*m*f) on a
    uniform normalized-frequency grid f = i/g; a column of the codebook is
    the Kronecker product over the three axes (x index fastest, matching
    the steering-vector flattening).  When ``size`` equals the element
    count the construction reduces to the exact DFT grid; otherwise the
    flattened grid is uniformly strided down to exactly ``size`` columns
    (grids are oversampled in angle first whenever size exceeds it).
    """
    if size < 1:
        raise ValueError("size must be >= 1")
    dims = geometry.dims
    grid = _axis_grid_sizes(dims, size)
    total = int(np.prod(grid))

    picks = (np.arange(size) * total) // size  # uniform stride over the flat grid
    ix = picks % grid[0]
    iy = (picks // grid[0]) % grid[1]
    iz = picks // (grid[0] * grid[1])
    freqs = (ix / grid[0], iy / grid[1], iz / grid[2])

    m_total = geometry.num_elements
    elem = np.arange(m_total)
    ex = elem % dims[0]
    ey = (elem // dims[0]) % dims[1]
    ez = elem // (dims[0] * dims[1])

    phase = (
        ex[:, None] * freqs[0][None, :]
        + ey[:, None] * freqs[1][None, :]
        + ez[:, None] * freqs[2][None, :]
    )
    return Codebook(vectors=np.exp(-1j * TWO_PI * phase))


def select_active_elements(M: int, m_bar: int, seed: int) -> SelectionMatrix:
    """Uniformly place m_bar active elements among M, without replacement."""
    if not 1 <= m_bar <= M:
        raise ValueError(f"m_bar must satisfy 1 <= m_bar <= {M}, got {m_bar}")
    rng = np.random.default_rng(seed)
    indices = np.sort(rng.choice(M, size=m_bar, replace=False))
    return SelectionMatrix(active_indices=tuple(int(i) for i in indices))


def sampled_channel(
    selection: SelectionMatrix, realization: ChannelRealization
) -> SampledChannel:
    """Cascade restricted to the active elements."""
    indices = np.asarray(selection.active_indices)
    if indices[-1] >= realization.num_elements:
        raise IndexError(
            f"selection index {indices[-1]} out of range for M={realization.num_elements}"
        )
    h_bar = realization.h_t[indices, :] * realization.h_r[indices, :]
    return SampledChannel(h_bar=h_bar)
