"""TOML experiment configuration: [scene], [ofdm], [clock], [sweep], [search]."""
from __future__ import annotations

import sys
from dataclasses import replace
from pathlib import Path

import numpy as np

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

from .aoa import DEFAULT_AOA_SEARCH
from .channel import ClockModel, OfdmConfig
from .geometry import Scatterer, SceneConfig, UpaGeometry
from .drde import default_doppler_search, default_range_search
from .pipeline import ExperimentConfig, OrderPolicy
from .subspace import SearchConfig

KMH = 1 / 3.6


def _vec(x, name) -> np.ndarray:
    v = np.asarray(x, dtype=float)
    if v.shape != (3,):
        raise ValueError(f"{name} must be a 3-vector")
    return v


def _array(d: dict, fc: float) -> UpaGeometry:
    rows, cols = int(d.get("rows", 1)), int(d.get("cols", 1))
    spacing = d.get("spacing")
    if spacing is None:
        return UpaGeometry.half_wavelength(rows, cols, fc)
    return UpaGeometry(rows, cols, float(spacing), fc)


def scene_from_dict(d: dict) -> SceneConfig:
    fc = float(d["carrier_frequency"])
    if "ue_velocity_kmh" in d:
        vel = _vec(d["ue_velocity_kmh"], "ue_velocity_kmh") * KMH
    else:
        vel = _vec(d.get("ue_velocity", [0, 0, 0]), "ue_velocity")
    scatterers = tuple(
        Scatterer(
            _vec(s["position"], "scatterer position"),
            _vec(s.get("velocity", [0, 0, 0]), "scatterer velocity"),
            float(s.get("reflection_variance", 1.0)),
        )
        for s in d.get("scatterers", [])
    )
    return SceneConfig(
        _vec(d["bs_position"], "bs_position"),
        _vec(d["ue_position"], "ue_position"),
        vel,
        scatterers,
        _array(d.get("bs_array", {"rows": 8, "cols": 8}), fc),
        _array(d.get("ue_array", {"rows": 1, "cols": 1}), fc),
    )


def ofdm_from_dict(d: dict) -> OfdmConfig:
    return OfdmConfig(
        int(d["subcarriers"]),
        float(d["subcarrier_spacing"]),
        int(d["packets"]),
        int(d["symbols_per_packet"]),
        float(d.get("tx_power", 1.0)),
    )


def _search(d: dict | None, default: SearchConfig | None) -> SearchConfig | None:
    if not d:
        return default
    base = default or SearchConfig(tuple(tuple(b) for b in d["bounds"]), tuple(d["grid_points"]))
    kw = {}
    if "bounds" in d:
        kw["bounds"] = tuple(tuple(float(x) for x in b) for b in d["bounds"])
    if "grid_points" in d:
        kw["grid_points"] = tuple(int(x) for x in d["grid_points"])
    for key, cast in (("max_iterations", int), ("tol", float)):
        if key in d:
            kw[key] = cast(d[key])
    if "periodic" in d:
        kw["periodic"] = tuple(bool(x) for x in d["periodic"])
    return replace(base, **kw)


def experiment_from_dict(d: dict) -> ExperimentConfig:
    scene = scene_from_dict(d["scene"])
    ofdm = ofdm_from_dict(d["ofdm"])
    clock_d = d.get("clock", {})
    clock = ClockModel(float(clock_d.get("timing_std", 0.0)), float(clock_d.get("cfo_std", 0.0)))
    sweep = d.get("sweep", {})
    search = d.get("search", {})
    orders = OrderPolicy(**search.get("orders", {}))
    snr = sweep.get("snr_db")
    return ExperimentConfig(
        scene=scene,
        ofdm=ofdm,
        clock=clock,
        noise_power=float(d.get("noise_power", sweep.get("noise_power", 4.9177e-12))),
        snr_db=None if snr is None else float(snr),
        case=str(sweep.get("case", "kf")),
        aoa_search=_search(search.get("aoa"), DEFAULT_AOA_SEARCH),
        # partial tables fall back to the OFDM-derived windows for missing keys
        doppler_search=_search(search.get("doppler"), default_doppler_search(ofdm)) if search.get("doppler") else None,
        range_search=_search(search.get("range"), default_range_search(ofdm)) if search.get("range") else None,
        filter_mode=str(search.get("filter_mode", "ls-robust")),
        forward_backward=bool(search.get("forward_backward", True)),
        orders=orders,
        sweep_name=str(sweep.get("name", "snr_db")),
        sweep_values=tuple(float(v) for v in sweep.get("values", ())),
        trials=int(sweep.get("trials", 1)),
        seed=int(sweep.get("seed", 0)),
    )


def load_config(path) -> ExperimentConfig:
    with open(Path(path), "rb") as fh:
        return experiment_from_dict(tomllib.load(fh))
