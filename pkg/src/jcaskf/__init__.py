"""Uplink joint communication and sensing under clock asynchronism.

Simulates multi-antenna OFDM uplink CSI with timing and frequency offsets, then
estimates AoAs, Doppler, ranges and positions of the UE and passive scatterers.
"""
from .channel import ClockModel, CsiTensor, OfdmConfig, simulate_csi
from .geometry import AnglePair, Scatterer, SceneConfig, UpaGeometry, derive_paths
from .pipeline import ExperimentConfig, OrderPolicy, run_trial, sense

__all__ = [
    "AnglePair",
    "ClockModel",
    "CsiTensor",
    "ExperimentConfig",
    "OfdmConfig",
    "OrderPolicy",
    "Scatterer",
    "SceneConfig",
    "UpaGeometry",
    "derive_paths",
    "run_trial",
    "sense",
    "simulate_csi",
]
