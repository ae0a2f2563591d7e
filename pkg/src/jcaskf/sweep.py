"""Monte-Carlo sweeps: per-point RMSE aggregation, CRB attachment and CSV output."""
from __future__ import annotations

import csv
import logging
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .aoa import make_filter_bank_weights
from .channel import default_tx_beamformer, path_amplitudes, uplink_snr
from .crb import CrbInputs, crb_range
from .geometry import derive_paths, steering_vector
from .pipeline import ExperimentConfig, TrialResult, run_trial

log = logging.getLogger(__name__)

CSV_COLUMNS = ("sweep_name", "sweep_value", "target_kind", "metric", "value", "trials", "case")
METRICS = ("aoa_rmse", "range_rmse", "location_rmse", "sqrt_crb", "post_bf_snr_db", "detected", "infeasible", "failed")


@dataclass
class TargetStats:
    """Sums of squared errors for one target at one sweep point."""

    aoa_sq: float = 0.0
    range_sq: float = 0.0
    loc_sq: float = 0.0
    detected: int = 0

    def add(self, t) -> None:
        if not t.detected:
            return
        self.detected += 1
        self.aoa_sq += t.aoa_error**2
        self.range_sq += t.range_error**2
        self.loc_sq += t.location_error**2

    def rmse(self, attr: str) -> float:
        if self.detected == 0:
            return float("nan")
        return float(np.sqrt(getattr(self, attr) / self.detected))


@dataclass
class PointReport:
    sweep_value: float
    trials: int
    snr_db: float  # per-antenna communication SNR
    targets: dict = field(default_factory=dict)  # kind -> TargetStats
    sqrt_crb: dict = field(default_factory=dict)  # kind -> metres
    post_bf_snr_db: dict = field(default_factory=dict)  # kind -> dB
    infeasible: int = 0
    failed: int = 0


@dataclass
class RmseReport:
    sweep_name: str
    case: str
    points: list[PointReport] = field(default_factory=list)

    def rows(self):
        """CSV rows in a stable order: sweep point, then target, then metric."""
        for p in self.points:
            for kind, st in p.targets.items():
                vals = {
                    "aoa_rmse": st.rmse("aoa_sq"),
                    "range_rmse": st.rmse("range_sq"),
                    "location_rmse": st.rmse("loc_sq"),
                    "sqrt_crb": p.sqrt_crb.get(kind, float("nan")),
                    "post_bf_snr_db": p.post_bf_snr_db.get(kind, float("nan")),
                    "detected": float(st.detected),
                    "infeasible": float(p.infeasible),
                    "failed": float(p.failed),
                }
                for m in METRICS:
                    yield (self.sweep_name, p.sweep_value, kind, m, vals[m], p.trials, self.case)


def post_filter_snr(cfg: ExperimentConfig) -> dict:
    """Linear post-beamforming SNR ``gamma_k`` per target kind.

    The receive gain is that of the filter bank built on the true AoAs with the
    configured filter mode; scatterer paths use the mean reflection power.
    """
    scene = cfg.scene
    ofdm = cfg.effective_ofdm()
    paths = derive_paths(scene)
    w_t = default_tx_beamformer(scene, paths)
    amps = path_amplitudes(scene, paths, w_t, [np.sqrt(s.reflection_variance) for s in scene.scatterers])
    weights = make_filter_bank_weights([p.aoa for p in paths], scene.bs_array, cfg.filter_mode)
    out = {}
    for k, p in enumerate(paths):
        gain = abs(np.vdot(weights[:, k], steering_vector(scene.bs_array, p.aoa))) ** 2
        kind = "ue" if k == 0 else f"scatterer_{k}"
        out[kind] = ofdm.tx_power * abs(amps[k]) ** 2 * gain / cfg.noise_power
    return out


def _run_one(args):
    cfg, trial, point = args
    return run_trial(cfg, cfg.seed, trial, point)


def run_point(cfg: ExperimentConfig, point: int = 0, workers: int = 1) -> list[TrialResult]:
    jobs = [(cfg, t, point) for t in range(cfg.trials)]
    if workers <= 1:
        return [_run_one(j) for j in jobs]
    with ProcessPoolExecutor(max_workers=workers) as ex:
        return list(ex.map(_run_one, jobs))


def aggregate(value: float, cfg: ExperimentConfig, results: list[TrialResult]) -> PointReport:
    snr_db = float("nan")
    if cfg.noise_power > 0:
        snr_db = uplink_snr(cfg.scene, cfg.effective_ofdm(), None, cfg.noise_power)
    rep = PointReport(float(value), len(results), snr_db)
    for res in results:
        rep.failed += res.failed
        rep.infeasible += res.infeasible
        for t in res.targets:
            rep.targets.setdefault(t.kind, TargetStats()).add(t)
    if cfg.noise_power > 0:
        ofdm = cfg.effective_ofdm()
        for kind, g in post_filter_snr(cfg).items():
            rep.post_bf_snr_db[kind] = float(10 * np.log10(g))
            rep.sqrt_crb[kind] = float(np.sqrt(crb_range(CrbInputs(g, ofdm.subcarrier_spacing, ofdm.subcarriers, ofdm.packets))))
    return rep


def run_sweep(cfg: ExperimentConfig, workers: int = 1) -> RmseReport:
    """Run ``cfg.trials`` trials at every sweep value and aggregate them."""
    report = RmseReport(cfg.sweep_name, cfg.case)
    values = cfg.sweep_values or (None,)
    for i, v in enumerate(values):
        point_cfg = cfg if v is None else cfg.with_sweep_value(v)
        results = run_point(point_cfg, i, workers)
        report.points.append(aggregate(float("nan") if v is None else v, point_cfg, results))
        log.info("point %s=%s done", cfg.sweep_name, v)
    return report


def emit_csv(report: RmseReport, path) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(CSV_COLUMNS)
        for row in report.rows():
            w.writerow([repr(float(x)) if isinstance(x, (float, np.floating)) else x for x in row])


def read_csv(path) -> list[dict]:
    with open(path, newline="", encoding="utf-8") as fh:
        rows = list(csv.DictReader(fh))
    for r in rows:
        for k in ("sweep_value", "value"):
            r[k] = float(r[k])
        r["trials"] = int(r["trials"])
    return rows
