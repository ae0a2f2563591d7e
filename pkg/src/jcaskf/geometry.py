"""Scene geometry: planar-array steering vectors and per-path delay, Doppler and gain.

Frame conventions used throughout the package:

* global frame is right-handed and centred on the base station (BS);
* elevation ``theta`` is measured from +z (``theta = 0`` is zenith), azimuth ``phi``
  from +x towards +y;
* array elements are stacked row-major with the row index ``p`` outermost;
* a path whose length is shrinking has a positive Doppler shift.
"""
from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np

SPEED_OF_LIGHT = 299792458.0


@dataclass(frozen=True)
class UpaGeometry:
    """Uniform planar array lying in the x-y plane."""

    rows: int
    cols: int
    spacing: float
    carrier_frequency: float

    def __post_init__(self):
        if self.rows < 1 or self.cols < 1:
            raise ValueError("array needs at least one row and one column")
        if not self.spacing > 0:
            raise ValueError("element spacing must be positive")
        if not self.carrier_frequency > 0:
            raise ValueError("carrier frequency must be positive")

    @classmethod
    def half_wavelength(cls, rows: int, cols: int, carrier_frequency: float) -> "UpaGeometry":
        return cls(rows, cols, 0.5 * SPEED_OF_LIGHT / carrier_frequency, carrier_frequency)

    @property
    def wavelength(self) -> float:
        return SPEED_OF_LIGHT / self.carrier_frequency

    @property
    def size(self) -> int:
        return self.rows * self.cols


@dataclass(frozen=True)
class AnglePair:
    """Azimuth ``phi`` in (-pi, pi] and elevation ``theta`` in [0, pi], radians."""

    phi: float
    theta: float

    def __post_init__(self):
        if not 0.0 <= self.theta <= np.pi:
            raise ValueError(f"elevation {self.theta} outside [0, pi]")

    @classmethod
    def from_vector(cls, d) -> "AnglePair":
        d = np.asarray(d, dtype=float)
        r = np.linalg.norm(d)
        if r == 0:
            raise ValueError("direction of a zero vector is undefined")
        phi = float(np.arctan2(d[1], d[0]))
        if phi == -np.pi:
            phi = np.pi
        return cls(phi, float(np.arctan2(np.hypot(d[0], d[1]), d[2])))

    def unit_vector(self) -> np.ndarray:
        st = np.sin(self.theta)
        return np.array([st * np.cos(self.phi), st * np.sin(self.phi), np.cos(self.theta)])


@dataclass(frozen=True)
class Scatterer:
    position: np.ndarray
    velocity: np.ndarray = field(default_factory=lambda: np.zeros(3))
    reflection_variance: float = 1.0


@dataclass(frozen=True)
class SceneConfig:
    bs_position: np.ndarray
    ue_position: np.ndarray
    ue_velocity: np.ndarray
    scatterers: tuple[Scatterer, ...]
    bs_array: UpaGeometry
    ue_array: UpaGeometry

    def __post_init__(self):
        for name in ("bs_position", "ue_position", "ue_velocity"):
            object.__setattr__(self, name, np.asarray(getattr(self, name), dtype=float))
        object.__setattr__(self, "scatterers", tuple(self.scatterers))
        if np.allclose(self.bs_position, self.ue_position):
            raise ValueError("BS and UE positions coincide")
        for s in self.scatterers:
            if np.allclose(s.position, self.bs_position) or np.allclose(s.position, self.ue_position):
                raise ValueError("scatterer coincides with the BS or the UE")

    @property
    def wavelength(self) -> float:
        return self.bs_array.wavelength

    def with_bs_array(self, rows: int, cols: int) -> "SceneConfig":
        g = self.bs_array
        return replace(self, bs_array=UpaGeometry(rows, cols, g.spacing, g.carrier_frequency))


@dataclass(frozen=True)
class PathParams:
    """One propagation path; ``index == 0`` is the line-of-sight path.

    ``gain`` is the large-scale amplitude with a unit reflection factor; the random
    reflection draw multiplies it (see :func:`path_gain`).
    """

    index: int
    aoa: AnglePair
    aod: AnglePair
    delay: float
    doppler: float
    gain: complex
    leg_ranges: tuple[float, ...]
    reflection_variance: float = 1.0

    @property
    def is_los(self) -> bool:
        return self.index == 0

    @property
    def aggregate_range(self) -> float:
        return float(sum(self.leg_ranges))


def steering_vector(geom: UpaGeometry, angle: AnglePair) -> np.ndarray:
    """Array response ``a(p)`` of length ``rows * cols`` (row index outermost)."""
    return steering_matrix(geom, np.array([angle.phi]), np.array([angle.theta]))[:, 0]


def steering_matrix(geom: UpaGeometry, phi, theta) -> np.ndarray:
    """Steering vectors for paired angle arrays, one column per angle."""
    phi = np.atleast_1d(np.asarray(phi, dtype=float))
    theta = np.atleast_1d(np.asarray(theta, dtype=float))
    p, q = element_indices(geom)
    k = 2 * np.pi / geom.wavelength * geom.spacing
    u = np.sin(theta) * np.cos(phi)
    v = np.sin(theta) * np.sin(phi)
    return np.exp(-1j * k * (np.outer(p, u) + np.outer(q, v)))


def element_indices(geom: UpaGeometry) -> tuple[np.ndarray, np.ndarray]:
    p, q = np.meshgrid(np.arange(geom.rows), np.arange(geom.cols), indexing="ij")
    return p.ravel().astype(float), q.ravel().astype(float)


def _closing_speed(a, va, b, vb) -> float:
    # rate at which |b - a| shrinks
    d = b - a
    r = np.linalg.norm(d)
    return float(np.dot(va - vb, d) / r)


def _distance(a, b) -> float:
    r = float(np.linalg.norm(np.asarray(b) - np.asarray(a)))
    if r == 0.0:
        raise ValueError("coincident points in scene geometry")
    return r


def derive_paths(scene: SceneConfig) -> list[PathParams]:
    """LoS path followed by one single-bounce path per scatterer."""
    lam = scene.wavelength
    bs, ue, vue = scene.bs_position, scene.ue_position, scene.ue_velocity
    vbs = np.zeros(3)

    r01 = _distance(ue, bs)
    v01 = _closing_speed(ue, vue, bs, vbs)
    paths = [
        PathParams(
            index=0,
            aoa=AnglePair.from_vector(ue - bs),
            aod=AnglePair.from_vector(bs - ue),
            delay=r01 / SPEED_OF_LIGHT,
            doppler=v01 / lam,
            gain=0j,
            leg_ranges=(r01,),
        )
    ]
    for k, s in enumerate(scene.scatterers, start=1):
        r1 = _distance(ue, s.position)
        r2 = _distance(s.position, bs)
        v1 = _closing_speed(ue, vue, s.position, s.velocity)
        v2 = _closing_speed(s.position, s.velocity, bs, vbs)
        paths.append(
            PathParams(
                index=k,
                aoa=AnglePair.from_vector(s.position - bs),
                aod=AnglePair.from_vector(s.position - ue),
                delay=(r1 + r2) / SPEED_OF_LIGHT,
                doppler=(v1 + v2) / lam,
                gain=0j,
                leg_ranges=(r1, r2),
                reflection_variance=s.reflection_variance,
            )
        )
    return [replace(p, gain=path_gain(p, lam)) for p in paths]


def path_gain(path: PathParams, wavelength: float, reflection: complex = 1.0) -> complex:
    """Free-space (LoS) or bi-static radar-equation (NLoS) amplitude.

    ``reflection`` is the complex reflection factor of the scatterer and is ignored
    for the LoS path.
    """
    if any(r <= 0 for r in path.leg_ranges):
        raise ValueError("path legs must have positive length")
    if path.is_los:
        (r,) = path.leg_ranges
        return complex(np.sqrt(wavelength**2 / (4 * np.pi * r) ** 2))
    r1, r2 = path.leg_ranges
    return complex(np.sqrt(wavelength**2 / ((4 * np.pi) ** 3 * r1**2 * r2**2)) * reflection)

