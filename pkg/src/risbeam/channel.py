"""Wideband geometric channel synthesis for an RIS-assisted link.

Both hops (transmitter -> RIS and RIS -> receiver) are modeled as sums of
L rays over D delay taps, evaluated in the frequency domain on K OFDM
subcarriers.  Temporal correlation between successive channel realizations
comes from a seeded random walk on the ray parameters.
"""
from __future__ import annotations

import struct
from dataclasses import dataclass

import numpy as np

TWO_PI = 2.0 * np.pi

CHANNEL_FILE_MAGIC = b"RISC1\x00"


class ChannelFileError(ValueError):
    """Base error for the binary channel container."""


class MalformedHeaderError(ChannelFileError):
    """Magic bytes or header fields are missing/invalid."""


class TruncatedPayloadError(ChannelFileError):
    """Payload length does not match the header dimensions."""


class NonFiniteValueError(ChannelFileError):
    """Payload contains NaN or Inf samples."""


@dataclass(frozen=True)
class ArrayGeometry:
    """Uniform planar array: element counts per axis and spacing in wavelengths."""

    dims: tuple[int, int, int]
    spacing: float = 0.5

    def __post_init__(self):
        if len(self.dims) != 3 or any(int(d) < 1 for d in self.dims):
            raise ValueError(f"dims must be three integers >= 1, got {self.dims}")
        if not self.spacing > 0:
            raise ValueError(f"spacing must be positive, got {self.spacing}")
        object.__setattr__(self, "dims", tuple(int(d) for d in self.dims))

    @property
    def num_elements(self) -> int:
        mx, my, mz = self.dims
        return mx * my * mz


@dataclass(frozen=True)
class RayPath:
    """One propagation ray: arrival angles, complex gain and delay."""

    azimuth: float
    elevation: float
    gain: complex
    delay: float

    def __post_init__(self):
        if not self.delay >= 0:
            raise ValueError(f"delay must be >= 0, got {self.delay}")


@dataclass(frozen=True)
class ScenarioConfig:
    """Static parameters shared by every realization of a scenario."""

    geometry: ArrayGeometry
    num_paths: int
    num_subcarriers: int
    num_taps: int
    sample_period: float
    path_loss: float = 1.0
    pulse: str = "sinc"
    trajectory_step: float = 0.0

    def __post_init__(self):
        if self.num_paths < 1:
            raise ValueError("num_paths must be >= 1")
        if self.num_subcarriers < 1:
            raise ValueError("num_subcarriers must be >= 1")
        if self.num_taps < 1:
            raise ValueError("num_taps must be >= 1")
        if not self.sample_period > 0:
            raise ValueError("sample_period must be positive")
        if not self.path_loss > 0:
            raise ValueError("path_loss must be positive")
        if self.pulse not in ("sinc", "delta"):
            raise ValueError(f"pulse must be 'sinc' or 'delta', got {self.pulse!r}")
        if self.trajectory_step < 0:
            raise ValueError("trajectory_step must be >= 0")

    @property
    def tap_window(self) -> float:
        """Largest representable delay, exclusive."""
        return self.num_taps * self.sample_period


@dataclass(frozen=True)
class ChannelRealization:
    """Per-subcarrier channels of both hops, columns indexed by subcarrier."""

    h_t: np.ndarray
    h_r: np.ndarray

    def __post_init__(self):
        h_t = np.ascontiguousarray(self.h_t, dtype=np.complex128)
        h_r = np.ascontiguousarray(self.h_r, dtype=np.complex128)
        if h_t.ndim != 2 or h_t.shape != h_r.shape:
            raise ValueError(
                f"h_t and h_r must be equal-shape 2-D arrays, got {h_t.shape} and {h_r.shape}"
            )
        if not (np.isfinite(h_t).all() and np.isfinite(h_r).all()):
            raise ValueError("channel matrices must be finite")
        h_t.flags.writeable = False
        h_r.flags.writeable = False
        object.__setattr__(self, "h_t", h_t)
        object.__setattr__(self, "h_r", h_r)

    @property
    def num_elements(self) -> int:
        return self.h_t.shape[0]

    @property
    def num_subcarriers(self) -> int:
        return self.h_t.shape[1]


@dataclass(frozen=True)
class ChannelSequence:
    """Ordered channel realizations along one receiver trajectory.

    ``meta`` is None for sequences ingested from a file (the container does
    not carry scenario parameters).
    """

    realizations: tuple[ChannelRealization, ...]
    seed: int
    meta: ScenarioConfig | None = None

    def __post_init__(self):
        realizations = tuple(self.realizations)
        if not realizations:
            raise ValueError("sequence must contain at least one realization")
        shape = realizations[0].h_t.shape
        if any(r.h_t.shape != shape for r in realizations):
            raise ValueError("all realizations must share one shape")
        object.__setattr__(self, "realizations", realizations)

    def __len__(self) -> int:
        return len(self.realizations)

    def __getitem__(self, index) -> ChannelRealization:
        return self.realizations[index]


def array_response(geometry: ArrayGeometry, azimuth: float, elevation: float) -> np.ndarray:
    """Steering vector of the planar array, flattened x-fastest.

    Element (m_x, m_y, m_z) responds with
    exp(j*2*pi*spacing*(m_x*cos(el)*cos(az) + m_y*cos(el)*sin(az) + m_z*sin(el))).
    """
    azimuth = float(azimuth) % TWO_PI
    elevation = float(elevation) % TWO_PI
    mx, my, mz = geometry.dims
    ce, se = np.cos(elevation), np.sin(elevation)
    ux = ce * np.cos(azimuth)
    uy = ce * np.sin(azimuth)
    uz = se
    ax = np.exp(1j * TWO_PI * geometry.spacing * ux * np.arange(mx))
    ay = np.exp(1j * TWO_PI * geometry.spacing * uy * np.arange(my))
    az = np.exp(1j * TWO_PI * geometry.spacing * uz * np.arange(mz))
    # kron(outer, inner): x index varies fastest in the flattened vector
    return np.kron(az, np.kron(ay, ax))


def _pulse_values(pulse: str, arg: np.ndarray, sample_period: float) -> np.ndarray:
    if pulse == "sinc":
        return np.sinc(arg / sample_period)
    # delta: unit only for an exact on-grid hit
    return (arg == 0.0).astype(np.float64)


def generate_channel(
    config: ScenarioConfig, rays: list[RayPath], subcarrier_count: int
) -> np.ndarray:
    """Frequency-domain channel matrix (M x K) of one hop.

    Column k sums every (tap d, ray l) pair:
    sqrt(M/path_loss) * gain_l * a(az_l, el_l) * p(d*T_s - tau_l) * exp(-j*2*pi*k*d/K).
    """
    if not rays:
        raise ValueError("rays must be non-empty")
    window = config.tap_window
    for ray in rays:
        if not 0.0 <= ray.delay < window:
            raise ValueError(
                f"ray delay {ray.delay} outside tap window [0, {window})"
            )
    geometry = config.geometry
    m_total = geometry.num_elements
    k_count = int(subcarrier_count)
    if k_count < 1:
        raise ValueError("subcarrier_count must be >= 1")
    d_count = config.num_taps

    steering = np.column_stack(
        [array_response(geometry, r.azimuth, r.elevation) for r in rays]
    )  # (M, L)
    gains = np.array([r.gain for r in rays], dtype=np.complex128)
    delays = np.array([r.delay for r in rays], dtype=np.float64)

    taps = np.arange(d_count) * config.sample_period  # (D,)
    pulse = _pulse_values(config.pulse, taps[None, :] - delays[:, None], config.sample_period)
    tap_gains = (gains[:, None] * pulse).astype(np.complex128)  # (L, D)

    k_idx = np.arange(k_count)
    twiddle = np.exp(-1j * TWO_PI * np.outer(np.arange(d_count), k_idx) / k_count)  # (D, K)

    scale = np.sqrt(m_total / config.path_loss)
    return scale * (steering @ tap_gains @ twiddle)


def _draw_rays(config: ScenarioConfig, rng: np.random.Generator) -> list[RayPath]:
    azimuths = rng.uniform(0.0, TWO_PI, config.num_paths)
    elevations = rng.uniform(0.0, TWO_PI, config.num_paths)
    gains = (rng.standard_normal(config.num_paths) + 1j * rng.standard_normal(config.num_paths)) / np.sqrt(2.0)
    delays = rng.uniform(0.0, config.tap_window, config.num_paths)
    return [
        RayPath(float(a), float(e), complex(g), float(d))
        for a, e, g, d in zip(azimuths, elevations, gains, delays)
    ]


def _fold_delay(delay: float, window: float) -> float:
    """Reflect a drifted delay back into [0, window)."""
    folded = np.abs(delay) % (2.0 * window)
    if folded > window:
        folded = 2.0 * window - folded
    return float(min(folded, np.nextafter(window, 0.0)))


def _drift_rays(
    rays: list[RayPath], config: ScenarioConfig, rng: np.random.Generator
) -> list[RayPath]:
    step = config.trajectory_step
    out = []
    for ray in rays:
        azimuth = (ray.azimuth + step * rng.standard_normal()) % TWO_PI
        elevation = (ray.elevation + step * rng.standard_normal()) % TWO_PI
        # complex log-domain walk: phase and magnitude drift at the same scale
        wobble = step * (rng.standard_normal() + 1j * rng.standard_normal()) / np.sqrt(2.0)
        gain = ray.gain * np.exp(wobble)
        delay = _fold_delay(
            ray.delay + step * config.sample_period * rng.standard_normal(),
            config.tap_window,
        )
        out.append(RayPath(float(azimuth), float(elevation), complex(gain), delay))
    return out


def sample_trajectory(config: ScenarioConfig, length: int, seed: int) -> ChannelSequence:
    """Temporally correlated channel sequence from a ray-parameter random walk.

    Each step perturbs every ray of both hops by Gaussian increments of
    standard deviation ``trajectory_step`` (angles in radians, delays scaled
    by the sample period, gains via a complex log-domain walk).  A step of 0
    repeats the first realization bit-identically.
    """
    if length < 1:
        raise ValueError("length must be >= 1")
    rng = np.random.default_rng(seed)
    k_count = config.num_subcarriers
    rays_t = _draw_rays(config, rng)
    rays_r = _draw_rays(config, rng)

    realizations = []
    for _ in range(length):
        realizations.append(
            ChannelRealization(
                h_t=generate_channel(config, rays_t, k_count),
                h_r=generate_channel(config, rays_r, k_count),
            )
        )
        rays_t = _drift_rays(rays_t, config, rng)
        rays_r = _drift_rays(rays_r, config, rng)
    return ChannelSequence(tuple(realizations), seed=seed, meta=config)


def export_channels(sequence: ChannelSequence, path) -> None:
    """Write a sequence to the binary container.

    Layout (little-endian): magic ``RISC1\\0``, uint32 M, K, S, then per
    sample h_t followed by h_r, each as complex128 (real/imag float64 pairs)
    in column-major order.
    """
    first = sequence[0]
    m_count, k_count = first.h_t.shape
    with open(path, "wb") as fh:
        fh.write(CHANNEL_FILE_MAGIC)
        fh.write(struct.pack("<III", m_count, k_count, len(sequence)))
        for realization in sequence.realizations:
            fh.write(np.asfortranarray(realization.h_t).tobytes(order="F"))
            fh.write(np.asfortranarray(realization.h_r).tobytes(order="F"))


def ingest_channels(path) -> ChannelSequence:
    """Read a sequence written by :func:`export_channels`.

    Raises MalformedHeaderError, TruncatedPayloadError or
    NonFiniteValueError, each for its own failure mode.  The returned
    sequence carries no scenario metadata (``meta`` is None, ``seed`` 0).
    """
    with open(path, "rb") as fh:
        raw = fh.read()
    header_len = len(CHANNEL_FILE_MAGIC) + 12
    if len(raw) < header_len or raw[: len(CHANNEL_FILE_MAGIC)] != CHANNEL_FILE_MAGIC:
        raise MalformedHeaderError(f"{path}: missing or invalid channel-file header")
    m_count, k_count, s_count = struct.unpack(
        "<III", raw[len(CHANNEL_FILE_MAGIC) : header_len]
    )
    if m_count < 1 or k_count < 1 or s_count < 1:
        raise MalformedHeaderError(
            f"{path}: header dimensions must be positive, got M={m_count} K={k_count} S={s_count}"
        )
    payload = raw[header_len:]
    expected = s_count * 2 * m_count * k_count * 16  # complex128 bytes
    if len(payload) != expected:
        raise TruncatedPayloadError(
            f"{path}: payload holds {len(payload)} bytes, header implies {expected}"
        )
    values = np.frombuffer(payload, dtype=np.complex128)
    if not np.isfinite(values).all():
        raise NonFiniteValueError(f"{path}: payload contains non-finite values")

    per_matrix = m_count * k_count
    realizations = []
    for s in range(s_count):
        base = s * 2 * per_matrix
        h_t = values[base : base + per_matrix].reshape((m_count, k_count), order="F")
        h_r = values[base + per_matrix : base + 2 * per_matrix].reshape(
            (m_count, k_count), order="F"
        )
        realizations.append(ChannelRealization(h_t=h_t, h_r=h_r))
    return ChannelSequence(tuple(realizations), seed=0, meta=None)
