"""UE identification and bi-static localization of the UE and scatterers."""
from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .geometry import AnglePair


@dataclass(frozen=True)
class TargetCandidate:
    angle: AnglePair
    aggregate_range: float
    aoa_index: int
    doppler_index: int = 0
    range_index: int = 0

    def __post_init__(self):
        if not self.aggregate_range > 0:
            raise ValueError("range must be positive")


@dataclass(frozen=True)
class EllipsoidParams:
    a: float
    c: float
    b2: float

    @classmethod
    def from_ranges(cls, aggregate_range: float, baseline: float) -> "EllipsoidParams":
        a, c = aggregate_range / 2, baseline / 2
        return cls(a, c, a * a - c * c)

    @property
    def feasible(self) -> bool:
        return self.b2 > 0 and self.c > 0


@dataclass(frozen=True)
class LocationEstimate:
    position: np.ndarray
    kind: str  # "ue" or "scatterer"
    candidate: TargetCandidate | None = None


class InfeasibleCandidate(ValueError):
    """Aggregate range too short for an ellipsoid around the BS-UE baseline."""


def identify_ue(candidates: Sequence[TargetCandidate]):
    """Split candidates into the UE (shortest range) and the remaining scatterers."""
    if not candidates:
        raise ValueError("no candidates to choose from")
    best = min(range(len(candidates)), key=lambda i: (candidates[i].aggregate_range, candidates[i].aoa_index, i))
    rest = [c for i, c in enumerate(candidates) if i != best]
    return candidates[best], rest


def locate_ue(angle: AnglePair, rng: float) -> LocationEstimate:
    if not rng > 0:
        raise ValueError("range must be positive")
    return LocationEstimate(rng * angle.unit_vector(), "ue")


def _rz(a: float) -> np.ndarray:
    c, s = np.cos(a), np.sin(a)
    return np.array([[c, -s, 0.0], [s, c, 0.0], [0.0, 0.0, 1.0]])


def _ry(a: float) -> np.ndarray:
    c, s = np.cos(a), np.sin(a)
    return np.array([[c, 0.0, s], [0.0, 1.0, 0.0], [-s, 0.0, c]])


def rotation_angles(ue_angle: AnglePair) -> tuple[float, float]:
    """``(0, pi/2) - (phi_0, theta_0)``: the global-to-local rotation angles."""
    return (-ue_angle.phi, np.pi / 2 - ue_angle.theta)


def rotate_coordinates(point, p_rot, inverse: bool = False) -> np.ndarray:
    """Rotate about z by ``p_rot[0]``, then about the new y axis by ``p_rot[1]``.

    With ``p_rot`` from :func:`rotation_angles` the BS-to-UE direction maps onto +x.
    ``inverse=True`` applies the transpose, undoing the rotation.
    """
    r = _ry(p_rot[1]) @ _rz(p_rot[0])
    if inverse:
        r = r.T
    return r @ np.asarray(point, dtype=float)


def _ray_intersection(u: np.ndarray, ell: EllipsoidParams) -> float:
    """Distance along unit ray ``u`` from the BS focus to the ellipsoid."""
    return ell.b2 / (ell.a - ell.c * u[0])


def _solve_local(phi_l: float, theta_l: float, ell: EllipsoidParams, sing_tol: float = 1e-9) -> np.ndarray:
    """Intersect the local ray with the ellipsoid via ``y = x tan(phi)``.

    Substituting the ray constraints into the ellipsoid equation gives a quadratic
    in ``x``; the root whose sign matches ``cos(phi)`` is kept.  Near the
    ``tan``/``cot`` singularities the same point is found from the ray's
    direction vector instead.
    """
    u = AnglePair(phi_l, theta_l).unit_vector()
    cp, st = np.cos(phi_l), np.sin(theta_l)
    if abs(cp) < sing_tol or st < sing_tol:
        return _ray_intersection(u, ell) * u
    k = np.tan(phi_l) ** 2 + (np.cos(theta_l) / (st * cp)) ** 2
    a2 = ell.a**2
    qa = 1 / a2 + k / ell.b2
    qb = -2 * ell.c / a2
    qc = ell.c**2 / a2 - 1
    disc = np.sqrt(qb * qb - 4 * qa * qc)
    roots = ((-qb + disc) / (2 * qa), (-qb - disc) / (2 * qa))
    x = roots[0] if cp >= 0 else roots[1]
    y = x * np.tan(phi_l)
    rho = abs(x) / (abs(cp) * st)
    z = rho * np.cos(theta_l)
    return np.array([x, y, z])


def locate_scatterer(angle: AnglePair, aggregate_range: float, ue_location) -> LocationEstimate:
    """Scatterer position on the bi-static ellipsoid along the measured AoA ray."""
    ue_location = np.asarray(ue_location, dtype=float)
    baseline = float(np.linalg.norm(ue_location))
    ell = EllipsoidParams.from_ranges(aggregate_range, baseline)
    if not ell.feasible:
        raise InfeasibleCandidate(f"aggregate range {aggregate_range:.3f} m does not exceed baseline {baseline:.3f} m")
    p_rot = rotation_angles(AnglePair.from_vector(ue_location))
    local_dir = AnglePair.from_vector(rotate_coordinates(angle.unit_vector(), p_rot))
    local = _solve_local(local_dir.phi, local_dir.theta, ell)
    return LocationEstimate(rotate_coordinates(local, p_rot, inverse=True), "scatterer")


def focal_sum(point, ue_location) -> float:
    point = np.asarray(point, dtype=float)
    return float(np.linalg.norm(point) + np.linalg.norm(point - np.asarray(ue_location, dtype=float)))
