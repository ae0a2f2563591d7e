"""Command-line entry point: simulate, sense, sweep and crb subcommands."""
from __future__ import annotations

import argparse
import json
import logging
import sys
from dataclasses import replace

import numpy as np

from .config import load_config
from .crb import CrbInputs, crb_range
from .dump import read_csi, write_csi
from .pipeline import CASES, sense, simulate_trial_csi, trial_rngs
from .sweep import emit_csv, post_filter_snr, run_sweep

log = logging.getLogger("jcaskf")


def _config(args):
    cfg = load_config(args.config)
    kw = {}
    if args.seed is not None:
        kw["seed"] = args.seed
    if getattr(args, "case", None):
        kw["case"] = args.case
    if getattr(args, "trials", None):
        kw["trials"] = args.trials
    return replace(cfg, **kw) if kw else cfg


def cmd_simulate(args) -> int:
    cfg = _config(args)
    if args.snr is not None:
        cfg = replace(cfg, snr_db=args.snr)
    elif cfg.snr_db is None and cfg.sweep_name == "snr_db" and cfg.sweep_values:
        cfg = cfg.with_sweep_value(cfg.sweep_values[0])
    csi, beta = simulate_trial_csi(cfg, trial_rngs(cfg.seed, 0))
    write_csi(csi, args.out, {"seed": cfg.seed, "snr_db": cfg.snr_db, "reflections": [[b.real, b.imag] for b in beta]})
    print(f"wrote {csi.data.shape} tensor to {args.out}")
    return 0


def cmd_sense(args) -> int:
    cfg = _config(args)
    csi, _ = read_csi(args.input)
    res = sense(csi, replace(cfg, ofdm=csi.ofdm))
    out = {
        "case": cfg.case,
        "noise_estimate": res.noise_estimate,
        "aoas": [{"phi": a.angle.phi, "theta": a.angle.theta} for a in res.aoas],
        "candidates": [{"aoa_index": c.aoa_index, "range": c.aggregate_range} for c in res.candidates],
        "ue_position": None if res.ue_position is None else res.ue_position.tolist(),
        "scatterers": [{"aoa_index": c.aoa_index, "range": c.aggregate_range, "position": p.tolist()} for c, p in res.scatterer_positions],
        "infeasible": res.infeasible,
    }
    text = json.dumps(out, indent=2)
    if args.out:
        with open(args.out, "w", encoding="utf-8") as fh:
            fh.write(text + "\n")
    else:
        print(text)
    return 0


def cmd_sweep(args) -> int:
    cfg = _config(args)
    report = run_sweep(cfg, workers=args.workers)
    emit_csv(report, args.out)
    print(f"wrote {sum(1 for _ in report.rows())} rows to {args.out}")
    return 0


def cmd_crb(args) -> int:
    if args.config:
        cfg = _config(args)
        values = cfg.sweep_values if cfg.sweep_name == "snr_db" and cfg.sweep_values else (cfg.snr_db,)
        print("snr_db,target,post_bf_snr_db,sqrt_crb_m")
        for v in values:
            point = replace(cfg, snr_db=v)
            for kind, g in post_filter_snr(point).items():
                c = crb_range(CrbInputs(g, cfg.ofdm.subcarrier_spacing, cfg.ofdm.subcarriers, cfg.ofdm.packets))
                print(f"{float(v)!r},{kind},{float(10 * np.log10(g))!r},{float(np.sqrt(c))!r}")
        return 0
    print("gamma_db,sqrt_crb_m")
    for g_db in args.gamma_db:
        c = crb_range(CrbInputs(10 ** (g_db / 10), args.subcarrier_spacing, args.subcarriers, args.packets))
        print(f"{float(g_db)!r},{float(np.sqrt(c))!r}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="jcaskf", description="Uplink sensing simulator and estimator")
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp, config_required=True):
        sp.add_argument("--config", required=config_required, help="TOML experiment file")
        sp.add_argument("--seed", type=int, default=None)
        sp.add_argument("--case", choices=CASES, default=None)
        sp.add_argument("--trials", type=int, default=None)

    sp = sub.add_parser("simulate", help="simulate one CSI tensor and dump it")
    common(sp)
    sp.add_argument("--snr", type=float, default=None, help="per-antenna SNR in dB")
    sp.add_argument("--out", required=True)
    sp.set_defaults(func=cmd_simulate)

    sp = sub.add_parser("sense", help="run the estimation chain on a dumped tensor")
    common(sp)
    sp.add_argument("input")
    sp.add_argument("--out", default=None)
    sp.set_defaults(func=cmd_sense)

    sp = sub.add_parser("sweep", help="Monte-Carlo sweep to CSV")
    common(sp)
    sp.add_argument("--out", required=True)
    sp.add_argument("--workers", type=int, default=1)
    sp.set_defaults(func=cmd_sweep)

    sp = sub.add_parser("crb", help="print a range CRB table")
    common(sp, config_required=False)
    sp.add_argument("--gamma-db", type=float, nargs="+", default=[0.0, 10.0, 20.0, 30.0])
    sp.add_argument("--subcarrier-spacing", type=float, default=480e3)
    sp.add_argument("--subcarriers", type=int, default=256)
    sp.add_argument("--packets", type=int, default=64)
    sp.add_argument("--out", default=None, help="unused; accepted for symmetry")
    sp.set_defaults(func=cmd_crb)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except (OSError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
