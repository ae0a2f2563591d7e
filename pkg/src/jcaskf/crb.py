"""Range Cramér-Rao bound and a finite-difference check of its Fisher information."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .geometry import SPEED_OF_LIGHT


@dataclass(frozen=True)
class CrbInputs:
    snr: float  # linear, post-beamforming
    subcarrier_spacing: float
    subcarriers: int
    packets: int

    def __post_init__(self):
        if not (self.snr > 0 and self.subcarrier_spacing > 0 and self.subcarriers > 0 and self.packets > 0):
            raise ValueError("CRB inputs must be positive")


def crb_range(inputs: CrbInputs) -> float:
    """Variance bound in m^2 for a single path's range."""
    n = np.arange(inputs.subcarriers, dtype=float)
    sum_n2 = float(np.sum(n * n))
    return SPEED_OF_LIGHT**2 / (inputs.snr * 8 * np.pi**2 * inputs.subcarrier_spacing**2 * inputs.packets * sum_n2)


def _expected_loglik(inputs: CrbInputs, r0: float, r: float) -> float:
    # noise power fixed at 1, amplitude sqrt(snr); the n-only phase repeats over packets
    n = np.arange(inputs.subcarriers)
    k = 2 * np.pi * n * inputs.subcarrier_spacing / SPEED_OF_LIGHT
    diff = np.abs(np.exp(-1j * k * r0) - np.exp(-1j * k * r)) ** 2
    return -inputs.snr * inputs.packets * float(np.sum(diff))


def fisher_numeric(inputs: CrbInputs, r0: float = 50.0, step: float = 1e-4, rel_check: float = 1e-3) -> float:
    """``-d^2/dr^2`` of the expected log-likelihood at the truth, by central differences.

    The expectation over noise removes the data term, leaving
    ``-(1/sigma^2) sum |B(r0) - B(r)|^2``.  A second estimate at half the step is
    compared against the first; if they disagree by more than ``rel_check`` the
    step is too coarse for the curvature and a ``ValueError`` is raised.
    """
    range_resolution = SPEED_OF_LIGHT / (inputs.subcarriers * inputs.subcarrier_spacing)
    if step <= 0 or step > 0.1 * range_resolution:
        raise ValueError("finite-difference step must be small relative to the range resolution")

    def second_diff(h):
        f0 = _expected_loglik(inputs, r0, r0)
        fp = _expected_loglik(inputs, r0, r0 + h)
        fm = _expected_loglik(inputs, r0, r0 - h)
        return -(fp - 2 * f0 + fm) / (h * h)

    coarse, fine = second_diff(step), second_diff(step / 2)
    if abs(coarse - fine) > rel_check * abs(fine):
        raise ValueError("curvature is not quadratic at this step size")
    return fine
