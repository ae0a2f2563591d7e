"""AoA estimation by 2D MUSIC and per-AoA receive beamforming."""
from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .channel import CsiTensor
from .geometry import AnglePair, UpaGeometry, element_indices, steering_matrix, steering_vector
from .subspace import (
    SearchConfig,
    estimate_model_order,
    estimate_noise_power,
    herm_eig,
    music_derivatives,
    music_grid_values,
    newton_minimum_search,
)

# Both targets of a ceiling/wall-mounted array sit below its plane, so elevations
# past the horizon are searched; a planar array cannot tell theta from pi - theta.
DEFAULT_AOA_SEARCH = SearchConfig(
    bounds=((-np.pi, np.pi), (np.pi / 2, np.pi)),
    grid_points=(64, 64),
    max_iterations=50,
    tol=1e-5,
    periodic=(True, False),
)


FILTER_MODES = ("ls", "ls-robust", "matched")


@dataclass(frozen=True)
class AoaEstimate:
    angle: AnglePair
    spectrum_value: float
    index: int


@dataclass
class SpatialFilterBank:
    weights: np.ndarray  # (antennas, L), unit-norm columns
    filtered: list  # per-AoA N_c x M_s matrices

    def __len__(self) -> int:
        return self.weights.shape[1]


def correlation_matrix(csi: CsiTensor | np.ndarray) -> np.ndarray:
    """Sample correlation pooled over every subcarrier and packet."""
    data = csi.data if isinstance(csi, CsiTensor) else np.asarray(csi)
    if data.size == 0:
        raise ValueError("empty CSI tensor")
    h = data.reshape(data.shape[0], -1)
    return (h @ h.conj().T) / h.shape[1]


def forward_backward(r: np.ndarray) -> np.ndarray:
    """``(R + J R* J) / 2`` with ``J`` the exchange matrix.

    The UPA is centro-symmetric, so ``J a*`` equals ``a`` up to a unit phase and the
    steering manifold is unchanged, while the phase relation between two coherent
    paths is partly scrambled, lifting the weaker one out of the noise eigenvalues.
    """
    r = np.asarray(r)
    return 0.5 * (r + r[::-1, ::-1].conj())


def _steering_derivatives(geom: UpaGeometry, phi: float, theta: float):
    p, q = element_indices(geom)
    k = 2 * np.pi / geom.wavelength * geom.spacing
    sp, cp, st, ct = np.sin(phi), np.cos(phi), np.sin(theta), np.cos(theta)
    a = np.exp(-1j * k * st * (p * cp + q * sp))
    d_phi = k * st * (-p * sp + q * cp)
    d_theta = k * ct * (p * cp + q * sp)
    d_pp = k * st * (-p * cp - q * sp)
    d_tt = d_pp
    d_pt = k * ct * (-p * sp + q * cp)
    psi1 = np.stack([d_phi, d_theta])
    psi2 = np.array([[d_pp, d_pt], [d_pt, d_tt]])
    da = -1j * psi1 * a
    d2a = (-1j * psi2 - psi1[:, None, :] * psi1[None, :, :]) * a
    return a, da, d2a


def aoa_spectrum(noise_basis: np.ndarray, geom: UpaGeometry, phi, theta) -> np.ndarray:
    """MUSIC cost ``a^H U_N U_N^H a`` on a (phi, theta) mesh."""
    pp, tt = np.meshgrid(np.asarray(phi), np.asarray(theta), indexing="ij")
    vals = music_grid_values(noise_basis, steering_matrix(geom, pp.ravel(), tt.ravel()))
    return vals.reshape(pp.shape)


def estimate_aoas(
    r_x: np.ndarray,
    geom: UpaGeometry,
    cfg: SearchConfig = DEFAULT_AOA_SEARCH,
    max_sources: int | None = None,
    eps_gap: float = 1.0,
    min_eig_ratio: float | None = None,
    max_coherence: float = 0.9,
):
    """Return ``(estimates, n_sources, noise_power)``.

    Estimates are ordered by increasing spectrum value (deepest null first).
    ``min_eig_ratio`` additionally drops sources whose eigenvalue is below that
    multiple of the noise-power estimate.  A refined minimum whose steering vector
    has normalised correlation above ``max_coherence`` with a deeper one is treated
    as a grating-lobe image and skipped; near end-fire the array cannot tell the
    two directions apart.
    """
    eig = herm_eig(r_x)
    n_a = estimate_model_order(eig.values, eps_gap)
    if max_sources is not None:
        n_a = min(n_a, max_sources)
    n_a = min(n_a, geom.size - 1)
    if min_eig_ratio is not None:
        floor = min_eig_ratio * estimate_noise_power(eig.values, n_a)
        n_a = int(np.sum(eig.values[:n_a] > floor))
    sigma2 = estimate_noise_power(eig.values, n_a)
    if n_a == 0:
        return [], 0, sigma2
    un = eig.noise_subspace(n_a)
    proj = un @ un.conj().T

    def f(x):
        a = steering_vector(geom, AnglePair(x[0], float(np.clip(x[1], 0, np.pi))))
        return float(np.real(np.vdot(a, proj @ a)))

    def derivs(x):
        a, da, d2a = _steering_derivatives(geom, x[0], x[1])
        return music_derivatives(proj, a, da, d2a)

    results = newton_minimum_search(
        f,
        lambda x: derivs(x)[1],
        lambda x: derivs(x)[2],
        cfg,
        n_a + 2,
        f_grid=lambda axes: aoa_spectrum(un, geom, axes[0], axes[1]),
    )
    out: list[AoaEstimate] = []
    kept: list[np.ndarray] = []
    for r in results:
        phi = float(r.point[0])
        if phi <= -np.pi:
            phi += 2 * np.pi
        angle = AnglePair(phi, float(np.clip(r.point[1], 0, np.pi)))
        a = steering_vector(geom, angle)
        if any(abs(np.vdot(b, a)) > max_coherence * np.linalg.norm(a) * np.linalg.norm(b) for b in kept):
            continue
        kept.append(a)
        out.append(AoaEstimate(angle, r.value, len(out)))
        if len(out) == n_a:
            break
    return out, n_a, sigma2


def make_spatial_filter(angle: AnglePair, geom: UpaGeometry) -> np.ndarray:
    """Matched receive beam ``a / sqrt(N)``."""
    a = steering_vector(geom, angle)
    return a / np.sqrt(a.size)


def make_filter_bank_weights(angles: Sequence[AnglePair], geom: UpaGeometry, mode: str = "ls") -> np.ndarray:
    """Unit-norm beam per AoA, one column each.

    * ``"matched"``: ``a_l / sqrt(N)`` for every AoA.
    * ``"ls"``: columns of the pseudo-inverse of the estimated steering matrix,
      rescaled to unit norm.  Each beam keeps its own AoA and nulls the others.
    * ``"ls-robust"``: like ``"ls"`` but the first angular derivatives of the other
      steering vectors are nulled too, so a small AoA error leaks only to second
      order.  Falls back to ``"ls"`` when the constraints would exhaust the array.

    With a single AoA all three coincide.
    """
    if mode not in FILTER_MODES:
        raise ValueError(f"unknown filter mode {mode!r}")
    if not angles:
        return np.zeros((geom.size, 0), dtype=complex)
    a = steering_matrix(geom, [x.phi for x in angles], [x.theta for x in angles])
    n_ang = a.shape[1]
    if mode == "matched" or n_ang == 1:
        return a / np.linalg.norm(a, axis=0, keepdims=True)
    w = np.empty_like(a)
    for l in range(n_ang):
        others = [a[:, k] for k in range(n_ang) if k != l]
        if mode == "ls-robust" and 3 * (n_ang - 1) < geom.size - 1:
            for k in range(n_ang):
                if k != l:
                    _, da, _ = _steering_derivatives(geom, angles[k].phi, angles[k].theta)
                    others += [da[0], da[1]]
        q, _ = np.linalg.qr(np.stack(others, axis=1))
        w[:, l] = a[:, l] - q @ (q.conj().T @ a[:, l])
    return w / np.linalg.norm(w, axis=0, keepdims=True)


def apply_spatial_filter(csi: CsiTensor | np.ndarray, w: np.ndarray) -> np.ndarray:
    """``w^H h`` for every (subcarrier, packet) snapshot."""
    data = csi.data if isinstance(csi, CsiTensor) else np.asarray(csi)
    w = np.asarray(w).ravel()
    if w.size != data.shape[0]:
        raise ValueError("beamformer length does not match the antenna count")
    return np.tensordot(w.conj(), data, axes=(0, 0))


def spatial_filter_bank(csi: CsiTensor, angles: Sequence[AnglePair], mode: str = "ls") -> SpatialFilterBank:
    w = make_filter_bank_weights(angles, csi.geometry, mode)
    return SpatialFilterBank(w, [apply_spatial_filter(csi, w[:, i]) for i in range(w.shape[1])])
