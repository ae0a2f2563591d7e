"""Synthesis of uplink CSI estimates under timing and carrier-frequency offsets."""
from __future__ import annotations

from dataclasses import dataclass, replace
from typing import Sequence

import numpy as np

from .geometry import PathParams, SceneConfig, UpaGeometry, derive_paths, path_gain, steering_vector


@dataclass(frozen=True)
class OfdmConfig:
    subcarriers: int
    subcarrier_spacing: float
    packets: int
    symbols_per_packet: int
    tx_power: float = 1.0

    def __post_init__(self):
        if self.subcarriers < 2 or self.packets < 2:
            raise ValueError("need at least two subcarriers and two packets")
        if self.subcarrier_spacing <= 0 or self.symbols_per_packet < 1:
            raise ValueError("invalid OFDM numerology")

    @property
    def packet_interval(self) -> float:
        return self.symbols_per_packet / self.subcarrier_spacing

    @property
    def bandwidth(self) -> float:
        return self.subcarriers * self.subcarrier_spacing

    def with_power(self, tx_power: float) -> "OfdmConfig":
        return replace(self, tx_power=float(tx_power))


@dataclass(frozen=True)
class ClockModel:
    timing_std: float = 0.0
    cfo_std: float = 0.0

    def __post_init__(self):
        if self.timing_std < 0 or self.cfo_std < 0:
            raise ValueError("clock offset deviations must be non-negative")


@dataclass(frozen=True)
class ClockDraws:
    timing: np.ndarray  # seconds, one per packet
    cfo: np.ndarray  # Hz, one per packet

    def __post_init__(self):
        if len(self.timing) != len(self.cfo):
            raise ValueError("timing and CFO draws must have equal length")

    @classmethod
    def zeros(cls, packets: int) -> "ClockDraws":
        return cls(np.zeros(packets), np.zeros(packets))


@dataclass
class CsiTensor:
    """CSI estimates indexed ``data[antenna, subcarrier, packet]``."""

    data: np.ndarray
    ofdm: OfdmConfig
    geometry: UpaGeometry

    def __post_init__(self):
        expected = (self.geometry.size, self.ofdm.subcarriers, self.ofdm.packets)
        if self.data.shape != expected:
            raise ValueError(f"CSI shape {self.data.shape} does not match metadata {expected}")
        if not np.all(np.isfinite(self.data)):
            raise ValueError("CSI contains non-finite entries")


def _rng(seed) -> np.random.Generator:
    return seed if isinstance(seed, np.random.Generator) else np.random.default_rng(seed)


def draw_clock_offsets(clock: ClockModel, packets: int, seed=None) -> ClockDraws:
    """Independent real Gaussian TO and CFO per packet."""
    if packets < 1:
        raise ValueError("packets must be >= 1")
    rng = _rng(seed)
    timing = rng.standard_normal(packets) * clock.timing_std
    cfo = rng.standard_normal(packets) * clock.cfo_std
    return ClockDraws(timing, cfo)


def draw_reflections(scene: SceneConfig, seed=None) -> np.ndarray:
    """Complex Gaussian reflection factors, one per scatterer, held over the CPI."""
    rng = _rng(seed)
    var = np.array([s.reflection_variance for s in scene.scatterers], dtype=float)
    z = rng.standard_normal(len(var)) + 1j * rng.standard_normal(len(var))
    return z * np.sqrt(var / 2)


def complex_noise(shape, power: float, seed=None) -> np.ndarray:
    rng = _rng(seed)
    return (rng.standard_normal(shape) + 1j * rng.standard_normal(shape)) * np.sqrt(power / 2)


def default_tx_beamformer(scene: SceneConfig, paths: Sequence[PathParams] | None = None) -> np.ndarray:
    """Conjugate beam towards the LoS departure angle, unit norm."""
    paths = derive_paths(scene) if paths is None else paths
    a = steering_vector(scene.ue_array, paths[0].aod)
    return a.conj() / np.sqrt(a.size)


def _check_beamformer(scene: SceneConfig, w_t: np.ndarray) -> np.ndarray:
    w_t = np.asarray(w_t, dtype=complex).ravel()
    if w_t.size != scene.ue_array.size:
        raise ValueError(f"transmit beamformer has {w_t.size} taps, UE array has {scene.ue_array.size}")
    if abs(np.linalg.norm(w_t) - 1.0) > 1e-9:
        raise ValueError("transmit beamformer must have unit norm")
    return w_t


def path_amplitudes(scene, paths, w_t, reflections=None) -> np.ndarray:
    """``b_k * chi_T,k`` for every path (reflection factors applied to NLoS paths)."""
    if reflections is None:
        reflections = np.ones(len(paths) - 1)
    reflections = np.asarray(reflections, dtype=complex)
    if reflections.size != len(paths) - 1:
        raise ValueError("need one reflection factor per scatterer")
    out = np.empty(len(paths), dtype=complex)
    for i, p in enumerate(paths):
        beta = 1.0 if p.is_los else reflections[i - 1]
        chi_t = steering_vector(scene.ue_array, p.aod) @ w_t
        out[i] = path_gain(p, scene.wavelength, beta) * chi_t
    return out


def clock_phase(ofdm: OfdmConfig, draws: ClockDraws) -> np.ndarray:
    """(N_c, M_s) phasor that the TO/CFO draws put on every antenna alike."""
    n = np.arange(ofdm.subcarriers)[:, None]
    m = np.arange(ofdm.packets)[None, :]
    cfo = np.exp(2j * np.pi * m * ofdm.packet_interval * draws.cfo[None, :])
    return cfo * np.exp(-2j * np.pi * n * ofdm.subcarrier_spacing * draws.timing[None, :])


def apply_clock_offsets(csi: CsiTensor, draws: ClockDraws) -> CsiTensor:
    """Rotate an existing tensor (noise included) by the clock phasor of ``draws``."""
    if len(draws.timing) != csi.ofdm.packets:
        raise ValueError("clock draws do not cover every packet")
    return CsiTensor(csi.data * clock_phase(csi.ofdm, draws)[None], csi.ofdm, csi.geometry)


def simulate_csi(
    scene: SceneConfig,
    ofdm: OfdmConfig,
    draws: ClockDraws,
    w_t=None,
    noise_power: float = 0.0,
    reflections=None,
    seed=None,
    paths: Sequence[PathParams] | None = None,
) -> CsiTensor:
    """Noisy CSI tensor for every antenna, subcarrier and packet.

    Each path contributes ``sqrt(Pt) b_k chi_T,k a(p_R,k)`` times a Doppler/CFO phase
    across packets and a delay/TO phase across subcarriers; ``reflections`` holds the
    per-scatterer factors drawn once for the whole CPI.
    """
    paths = derive_paths(scene) if paths is None else list(paths)
    w_t = default_tx_beamformer(scene, paths) if w_t is None else _check_beamformer(scene, w_t)
    if len(draws.timing) != ofdm.packets:
        raise ValueError("clock draws do not cover every packet")
    amps = np.sqrt(ofdm.tx_power) * path_amplitudes(scene, paths, w_t, reflections)

    n = np.arange(ofdm.subcarriers)[:, None]
    m = np.arange(ofdm.packets)[None, :]
    ts, df = ofdm.packet_interval, ofdm.subcarrier_spacing
    phase = clock_phase(ofdm, draws)

    data = np.zeros((scene.bs_array.size, ofdm.subcarriers, ofdm.packets), dtype=complex)
    for amp, p in zip(amps, paths):
        coeff = amp * np.exp(2j * np.pi * m * ts * p.doppler) * np.exp(-2j * np.pi * n * df * p.delay)
        data += steering_vector(scene.bs_array, p.aoa)[:, None, None] * (coeff * phase)[None]
    if noise_power > 0:
        data += complex_noise(data.shape, noise_power, seed)
    return CsiTensor(data, ofdm, scene.bs_array)


def received_power_sum(scene: SceneConfig, w_t=None) -> float:
    """``sum_k E|b_k chi_T,k|^2`` with the reflection power taken at its mean."""
    paths = derive_paths(scene)
    w_t = default_tx_beamformer(scene, paths) if w_t is None else _check_beamformer(scene, w_t)
    unit = path_amplitudes(scene, paths, w_t)
    var = np.array([1.0] + [p.reflection_variance for p in paths[1:]])
    return float(np.sum(np.abs(unit) ** 2 * var))


def uplink_snr(scene: SceneConfig, ofdm: OfdmConfig, w_t, noise_power: float) -> float:
    """Per-antenna communication SNR in dB."""
    if noise_power <= 0:
        raise ValueError("noise power must be positive")
    return float(10 * np.log10(ofdm.tx_power * received_power_sum(scene, w_t) / noise_power))


def calibrate_power_for_snr(scene: SceneConfig, ofdm: OfdmConfig, target_snr_db: float, noise_power: float, w_t=None) -> float:
    """Transmit power that makes :func:`uplink_snr` hit ``target_snr_db``."""
    if noise_power <= 0:
        raise ValueError("noise power must be positive")
    return float(noise_power * 10 ** (target_snr_db / 10) / received_power_sum(scene, w_t))
