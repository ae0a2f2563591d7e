"""Decoupled Doppler-plus-CFO (DPO) and range estimation, with the KF CSI enhancer."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .channel import OfdmConfig
from .geometry import SPEED_OF_LIGHT
from .subspace import (
    SearchConfig,
    estimate_model_order,
    herm_eig,
    music_derivatives,
    music_grid_values,
    newton_minimum_search,
)


def default_doppler_search(ofdm: OfdmConfig, grid_points: int = 256) -> SearchConfig:
    half = 0.5 / ofdm.packet_interval
    return SearchConfig(((-half, half),), (grid_points,), max_iterations=50, tol=0.1, periodic=(True,))


def default_range_search(ofdm: OfdmConfig, grid_points: int = 2048) -> SearchConfig:
    r_max = SPEED_OF_LIGHT / ofdm.subcarrier_spacing
    return SearchConfig(((0.0, r_max),), (grid_points,), max_iterations=50, tol=1e-3, periodic=(True,))


@dataclass(frozen=True)
class DpoEstimate:
    value: float  # Hz
    aoa_index: int
    doppler_index: int
    transfer_factor: complex


@dataclass(frozen=True)
class RangeEstimate:
    value: float  # metres
    aoa_index: int
    doppler_index: int
    range_index: int


@dataclass
class KfState:
    prior_variance: float
    posterior_variance: float
    gain: complex
    observation_variance: float


def range_steering(r, ofdm: OfdmConfig) -> np.ndarray:
    """Columns ``exp(-j 2 pi n df r / c)``, one per range in ``r``."""
    n = np.arange(ofdm.subcarriers)[:, None]
    r = np.atleast_1d(np.asarray(r, dtype=float))[None, :]
    return np.exp(-2j * np.pi * n * ofdm.subcarrier_spacing * r / SPEED_OF_LIGHT)


def doppler_steering(f, ofdm: OfdmConfig) -> np.ndarray:
    """Columns ``exp(j 2 pi m T f)``, one per frequency in ``f``."""
    m = np.arange(ofdm.packets)[:, None]
    f = np.atleast_1d(np.asarray(f, dtype=float))[None, :]
    return np.exp(2j * np.pi * m * ofdm.packet_interval * f)


def _music_1d(noise_basis, steer, slope, cfg: SearchConfig, n_peaks: int):
    """1D MUSIC minimum search for a steering family ``exp(j * slope * x * idx)``."""
    proj = noise_basis @ noise_basis.conj().T

    def derivs(x):
        a = steer(x[0])[:, 0]
        da = (1j * slope * a)[None, :]
        d2a = (-(slope**2) * a)[None, None, :]
        return music_derivatives(proj, a, da, d2a)

    return newton_minimum_search(
        lambda x: derivs(x)[0],
        lambda x: derivs(x)[1],
        lambda x: derivs(x)[2],
        cfg,
        n_peaks,
        f_grid=lambda axes: music_grid_values(noise_basis, steer(axes[0])),
    )


def dpo_correlation(h: np.ndarray) -> np.ndarray:
    """Row-averaged packet correlation; per-row delay phases cancel."""
    return h.T @ h.conj() / h.shape[0]


def beam_occupancy(h: np.ndarray, noise_power: float, weight_norm2: float = 1.0) -> float:
    """Top eigenvalue of the packet correlation over its noise-only edge.

    For white noise of power ``noise_power * weight_norm2`` per entry, the largest
    eigenvalue of the ``M_s x M_s`` correlation concentrates near
    ``sigma^2 (1 + sqrt(M_s/N_c))^2``; a beam holding no path scores about 1.
    """
    h = np.asarray(h)
    n_c, m_s = h.shape
    edge = noise_power * weight_norm2 * (1 + np.sqrt(m_s / n_c)) ** 2
    top = float(np.linalg.eigvalsh(dpo_correlation(h))[-1])
    if edge <= 0:
        return np.inf if top > 0 else 0.0
    return top / edge


def estimate_dpo(h: np.ndarray, ofdm: OfdmConfig, cfg: SearchConfig | None = None, aoa_index: int = 0, max_order: int | None = None, eps_gap: float = 1.0) -> list[DpoEstimate]:
    h = np.asarray(h)
    if h.shape != (ofdm.subcarriers, ofdm.packets):
        raise ValueError(f"expected an {ofdm.subcarriers} x {ofdm.packets} matrix")
    cfg = cfg or default_doppler_search(ofdm)
    eig = herm_eig(dpo_correlation(h))
    order = estimate_model_order(eig.values, eps_gap)
    if max_order is not None:
        order = min(order, max_order)
    if order >= ofdm.packets:
        raise ValueError("Doppler noise subspace is empty")
    if order == 0:
        return []
    m = np.arange(ofdm.packets)
    slope = 2 * np.pi * ofdm.packet_interval * m
    res = _music_1d(eig.noise_subspace(order), lambda f: doppler_steering(f, ofdm), slope, cfg, order)
    out = []
    for i, r in enumerate(res):
        f = float(r.point[0])
        out.append(DpoEstimate(f, aoa_index, i, complex(np.exp(2j * np.pi * ofdm.packet_interval * f))))
    return out


def kf_enhance(h, transfer: complex, noise_power: float, initial_variance: float | None = None, trace: list | None = None):
    """Forward-backward scalar Kalman pass along one CSI row.

    The state is the CSI at packet ``m``, propagated by the unit-modulus ``transfer``
    factor.  ``h`` may be a vector (one row) or a matrix whose rows are filtered
    independently.  The initial variance defaults to the mean squared deviation of
    the de-rotated row from its first sample.  Returns ``(filtered, variance)``;
    if ``trace`` is a list, a :class:`KfState` per update is appended to it
    (vector input only).
    """
    h = np.asarray(h, dtype=complex)
    squeeze = h.ndim == 1
    h2 = np.atleast_2d(h)
    n_rows, n = h2.shape
    if n == 0:
        raise ValueError("empty CSI row")
    if noise_power < 0:
        raise ValueError("noise power must be non-negative")
    if abs(abs(transfer) - 1.0) > 1e-9:
        raise ValueError("transfer factor must have unit modulus")
    a = complex(transfer)

    if initial_variance is None:
        derot = h2 * (a ** -np.arange(n))[None, :]
        p = np.mean(np.abs(derot - h2[:, :1]) ** 2, axis=1)
    else:
        p = np.full(n_rows, float(initial_variance))
    out = h2.copy()

    def update(prior, p_prev, obs):
        p_minus = (a * p_prev * np.conj(a)).real  # equals p_prev for A and 1/A alike
        denom = p_minus + noise_power
        with np.errstate(invalid="ignore", divide="ignore"):
            k = np.where(denom > 0, p_minus / np.where(denom > 0, denom, 1.0), 1.0)
        if noise_power == 0:
            k = np.ones_like(p_minus)
        new = prior + k * (obs - prior)
        return new, (1 - k) * p_minus, p_minus, k

    for m in range(1, n):
        prior = a * out[:, m - 1]
        out[:, m], p_new, p_minus, k = update(prior, p, h2[:, m])
        if trace is not None and squeeze:
            trace.append(KfState(float(p_minus[0]), float(p_new[0]), complex(k[0]), noise_power))
        p = p_new
    inv = 1 / a
    for m in range(n - 1, 0, -1):
        prior = inv * out[:, m]
        out[:, m - 1], p_new, p_minus, k = update(prior, p, h2[:, m - 1])
        if trace is not None and squeeze:
            trace.append(KfState(float(p_minus[0]), float(p_new[0]), complex(k[0]), noise_power))
        p = p_new
    if squeeze:
        return out[0], float(p[0])
    return out, p


def enhance_csi_matrix(h: np.ndarray, transfer: complex, noise_power: float) -> np.ndarray:
    """Apply :func:`kf_enhance` to every subcarrier row."""
    out, _ = kf_enhance(np.atleast_2d(h), transfer, noise_power)
    return out


def range_correlation(h: np.ndarray) -> np.ndarray:
    return h @ h.conj().T / h.shape[1]


def estimate_ranges(h: np.ndarray, ofdm: OfdmConfig, cfg: SearchConfig | None = None, aoa_index: int = 0, doppler_index: int = 0, max_order: int | None = None, eps_gap: float = 1.0) -> list[RangeEstimate]:
    h = np.asarray(h)
    if h.shape != (ofdm.subcarriers, ofdm.packets):
        raise ValueError(f"expected an {ofdm.subcarriers} x {ofdm.packets} matrix")
    cfg = cfg or default_range_search(ofdm)
    eig = herm_eig(range_correlation(h))
    # only min(N_c, M_s) eigenvalues can carry power; the rest are round-off
    order = estimate_model_order(eig.values[: min(ofdm.subcarriers, ofdm.packets)], eps_gap)
    if max_order is not None:
        order = min(order, max_order)
    if order >= ofdm.subcarriers:
        raise ValueError("range noise subspace is empty")
    if order == 0:
        return []
    n = np.arange(ofdm.subcarriers)
    slope = -2 * np.pi * n * ofdm.subcarrier_spacing / SPEED_OF_LIGHT
    res = _music_1d(eig.noise_subspace(order), lambda r: range_steering(r, ofdm), slope, cfg, order)
    return [RangeEstimate(float(r.point[0]), aoa_index, doppler_index, i) for i, r in enumerate(res)]


def verify_decoupling(h: np.ndarray, ofdm: OfdmConfig, true_range: float, true_doppler: float, order: int = 1) -> tuple[float, float]:
    """Norms of the noise-subspace projections of the true range and Doppler steering."""
    er = herm_eig(range_correlation(h))
    ef = herm_eig(dpo_correlation(h))
    a_r = range_steering(true_range, ofdm)[:, 0]
    a_f = doppler_steering(true_doppler, ofdm)[:, 0]
    res_r = np.linalg.norm(er.noise_subspace(order).conj().T @ a_r) / np.linalg.norm(a_r)
    res_f = np.linalg.norm(ef.noise_subspace(order).conj().T @ a_f) / np.linalg.norm(a_f)
    return float(res_r), float(res_f)
