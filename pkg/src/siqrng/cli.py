"""Command-line entry points.

Commands: ``simulate`` (session config -> tallies, report, raw bits),
``analyze`` (counts record -> report), ``rate-curve`` (model sweep -> CSV +
figure), ``optimize`` (best intensity / basis bias), ``attack-demo`` (both
treatments under one attack), ``extract`` (raw bits + report -> certified
bits), and ``test-battery`` (bit file -> battery report).  All randomness
is pinned by explicit seeds; ``simulate`` and ``attack-demo`` refuse to run
without one.  Exit code is 0 on success and the failing error category's
code otherwise.
"""

from __future__ import annotations

import argparse
import csv
import json
import math
import sys
from pathlib import Path
from typing import Optional

import numpy as np

from . import __version__
from .analysis import (
    DEFAULT_EPS_SEC,
    DEFAULT_GAMMA_METHOD,
    GAMMA_METHODS,
    AnalysisReport,
    SecurityParams,
    key_length,
)
from .attacks import AttackConfig
from .battery import BatteryConfig, render_battery_table, run_battery
from .bitops import read_bit_file, symbols_to_bits, write_bit_file
from .detectors import TREATMENTS, DetectorBank, SignalSpec
from .errors import ConfigError, InsufficientTestDataError, SiqrngError
from .rates import (
    EXPERIMENT_P_X,
    EXPERIMENT_ROUNDS,
    ChannelModel,
    dimension_curve,
    experiment_model,
    intensity_curve,
    loss_curve,
    optimize_params,
)
from .records import (
    analyze_record,
    builtin_record_names,
    ingest_counts,
    load_builtin_record,
    serialize_counts,
    tally_to_record,
)
from .session import ProtocolParams, run_session
from .toeplitz import extract as toeplitz_extract
from .toeplitz import plan_extraction


def _load_json(path: str) -> dict:
    p = Path(path)
    if not p.exists():
        raise ConfigError(f"file {path} does not exist")
    try:
        return json.loads(p.read_text())
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path} is not valid JSON: {exc}") from exc


def _write_json(path: Path, payload: dict) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(payload, indent=2) + "\n")


def _security_from_config(cfg: dict, dimension: int) -> SecurityParams:
    sec = cfg.get("security", {})
    return SecurityParams(
        incompatibility=float(sec.get("basis_incompatibility", math.log2(dimension))),
        detection_balance=float(sec.get("detection_balance", 1.0)),
        eps_sec=float(sec.get("eps_sec", DEFAULT_EPS_SEC)),
    )


def _session_from_config(cfg: dict, seed: int, treatment: Optional[str] = None):
    try:
        dimension = int(cfg.get("dimension", 2))
        params = ProtocolParams(
            rounds=int(cfg["rounds"]),
            p_x=float(cfg["p_x"]),
            seed=seed,
            dimension=dimension,
            treatment=treatment or cfg.get("treatment", "blinding_aware"),
        )
        det = cfg.get("detectors", {})
        bank = DetectorBank(
            dimension=dimension,
            efficiency=det.get("efficiency", 1.0),
            dark_count=float(det.get("dark_count", 0.0)),
            thresholds=det.get("thresholds", 0.0),
        )
        if "attack" in cfg:
            atk = dict(cfg["attack"])
            if "honest_signal" in atk:
                atk["honest_signal"] = SignalSpec.coherent(**atk["honest_signal"])
            if "thresholds" in atk:
                atk["thresholds"] = tuple(atk["thresholds"])
            if "target_sequence" in atk and atk["target_sequence"] is not None:
                atk["target_sequence"] = tuple(atk["target_sequence"])
            source = AttackConfig(**atk)
        elif "source" in cfg:
            source = SignalSpec.coherent(**cfg["source"])
        else:
            raise ConfigError("config needs a 'source' or an 'attack' section")
    except KeyError as exc:
        raise ConfigError(f"config missing required field {exc.args[0]!r}") from exc
    except TypeError as exc:
        raise ConfigError(f"config field error: {exc}") from exc
    return params, source, bank, _security_from_config(cfg, dimension)


def _print_report(report: AnalysisReport) -> None:
    print(f"variant:            {report.variant}")
    print(f"rounds:             {report.rounds}")
    print(f"test error rate:    {report.x_error_rate:.6f}")
    if report.gamma_method is not None:
        print(
            f"sampling penalty:   {report.sampling_gamma:.6f} ({report.gamma_method})"
        )
    print(
        f"phase error bound:  {report.phase_error_upper:.6f}"
        + ("  [saturated]" if report.phase_saturated else "")
    )
    print(f"seed cost:          {report.n_seeds} bits")
    print(f"certified length:   {report.length} bits")
    print(f"rate per pulse:     {report.rate:.6f}")


def _cmd_simulate(args) -> int:
    cfg = _load_json(args.config)
    params, source, bank, sec = _session_from_config(cfg, args.seed)
    tally = run_session(params, source, bank)
    report = key_length(tally, sec, gamma_method=args.gamma_method)

    outdir = Path(args.outdir)
    outdir.mkdir(parents=True, exist_ok=True)
    tallies_payload = tally.to_dict()
    report_payload = report.to_dict()
    raw_path = outdir / "raw_symbols.bits"
    try:
        bits = symbols_to_bits(tally.raw_symbols, params.dimension)
        write_bit_file(raw_path, bits)
        report_payload["raw_bit_count"] = int(bits.size)
        report_payload["raw_bits_file"] = raw_path.name
        tallies_payload["raw_bits_file"] = raw_path.name
    except SiqrngError as exc:
        print(f"note: raw bits not written ({exc})")
    _write_json(outdir / "tallies.json", tallies_payload)
    _write_json(outdir / "report.json", report_payload)
    record = tally_to_record(tally, sec, label=f"simulated session, seed {args.seed}")
    _write_json(outdir / "counts_record.json", serialize_counts(record))
    _print_report(report)
    print(
        f"wrote {outdir / 'tallies.json'}, {outdir / 'report.json'}, "
        f"{outdir / 'counts_record.json'}"
    )
    return 0


def _cmd_analyze(args) -> int:
    if args.builtin:
        record = load_builtin_record(args.record)
    else:
        record = ingest_counts(args.record)
    report = analyze_record(
        record, gamma_method=args.gamma_method, use_override=not args.no_override
    )
    if record.label:
        print(f"record:             {record.label}")
    _print_report(report)
    if args.output:
        _write_json(Path(args.output), report.to_dict())
        print(f"wrote {args.output}")
    return 0


def _model_from_args(args) -> ChannelModel:
    base = experiment_model()
    return ChannelModel(
        mean_photons=args.mu if args.mu is not None else base.mean_photons,
        transmittance=args.eta if args.eta is not None else base.transmittance,
        dark_count=(
            args.dark_count if args.dark_count is not None else base.dark_count
        ),
        misalignment=(
            args.misalignment if args.misalignment is not None else base.misalignment
        ),
        dimension=args.dimension,
    )


def _security_from_args(args, dimension: int) -> SecurityParams:
    if args.ideal:
        return SecurityParams.ideal(dimension, eps_sec=args.eps_sec)
    if dimension != 2 and args.q is None:
        return SecurityParams.ideal(dimension, eps_sec=args.eps_sec)
    return SecurityParams(
        incompatibility=args.q if args.q is not None else 0.954,
        detection_balance=args.eta_e if args.eta_e is not None else 0.9932,
        eps_sec=args.eps_sec,
    )


def _write_csv(path: Path, rows: list[dict]) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w", newline="") as fh:
        writer = csv.DictWriter(fh, fieldnames=list(rows[0]))
        writer.writeheader()
        writer.writerows(rows)


def _cmd_rate_curve(args) -> int:
    from .plotting import plot_dimension_curve, plot_intensity_curve, plot_loss_curve

    model = _model_from_args(args)
    sec = _security_from_args(args, args.dimension)
    values = np.linspace(args.minimum, args.maximum, args.points)
    if args.sweep == "intensity":
        rows = intensity_curve(
            values,
            rounds=args.rounds,
            p_x=args.p_x,
            sec=sec,
            model=model,
            gamma_method=args.gamma_method,
        )
        plot = plot_intensity_curve
    elif args.sweep == "loss":
        rows = loss_curve(
            values,
            rounds=args.rounds,
            p_x=args.p_x,
            sec=sec,
            model=model,
            gamma_method=args.gamma_method,
        )
        plot = plot_loss_curve
    else:
        dims = range(int(args.minimum), int(args.maximum) + 1)
        rows = dimension_curve(
            dims,
            rounds=args.rounds,
            dark_count=(
                args.dark_count if args.dark_count is not None else 1e-5
            ),
            asymptotic=args.asymptotic,
            eps_sec=args.eps_sec,
            gamma_method=args.gamma_method,
        )
        plot = plot_dimension_curve
    out = Path(args.output)
    _write_csv(out, rows)
    print(f"wrote {out} ({len(rows)} rows)")
    if not args.no_plot:
        fig_path = out.with_suffix(".png")
        plot(rows, fig_path)
        print(f"wrote {fig_path}")
    best = max(rows, key=lambda r: r.get("rate", r.get("rate_optimal", 0.0)))
    print(f"best row: {best}")
    return 0


def _cmd_optimize(args) -> int:
    model = _model_from_args(args)
    sec = _security_from_args(args, args.dimension)
    result = optimize_params(
        model,
        args.rounds,
        sec,
        asymptotic=args.asymptotic,
        gamma_method=args.gamma_method,
    )
    print(f"best intensity:     {result.mean_photons:.6g}")
    print(f"best p_x:           {result.p_x:.6g}")
    print(f"best rate:          {result.rate:.6g}")
    if args.output:
        payload = {
            "mean_photons": result.mean_photons,
            "p_x": result.p_x,
            "rate": result.rate,
            "report": result.report.to_dict() if result.report else None,
        }
        _write_json(Path(args.output), payload)
        print(f"wrote {args.output}")
    return 0


def _cmd_attack_demo(args) -> int:
    from .plotting import plot_attack_gap

    cfg = _load_json(args.config)
    if "attack" not in cfg:
        raise ConfigError("attack-demo needs an 'attack' section in the config")
    outdir = Path(args.outdir)
    outdir.mkdir(parents=True, exist_ok=True)

    reports: dict[str, Optional[AnalysisReport]] = {}
    summary: dict[str, dict] = {}
    for treatment in TREATMENTS:
        params, source, bank, sec = _session_from_config(
            cfg, args.seed, treatment=treatment
        )
        tally = run_session(params, source, bank)
        agreement = None
        if tally.eve_symbols is not None and tally.raw_symbols.size:
            agreement = float(np.mean(tally.raw_symbols == tally.eve_symbols))
        try:
            report = key_length(tally, sec, gamma_method=args.gamma_method)
            reports[treatment] = report
            summary[treatment] = report.to_dict()
        except InsufficientTestDataError as exc:
            print(f"{treatment}: {exc.category} ({exc})")
            reports[treatment] = None
            summary[treatment] = {"error": exc.category, "message": str(exc)}
        summary[treatment]["eve_agreement"] = agreement
        summary[treatment]["x_error_rate_observed"] = (
            None if tally.n_x_tested == 0 else tally.x_error_rate
        )

    def cell(value, spec, width):
        return format("-", f">{width}") if value is None else format(value, spec)

    print(f"{'treatment':17s} {'e_x':>8s} {'length':>12s} {'rate':>9s} {'eve-match':>9s}")
    for treatment in TREATMENTS:
        rep = reports[treatment]
        info = summary[treatment]
        print(
            f"{treatment:17s} "
            f"{cell(info.get('x_error_rate_observed'), '8.4f', 8)} "
            f"{cell(rep.length if rep else None, '12d', 12)} "
            f"{cell(rep.rate if rep else None, '9.4f', 9)} "
            f"{cell(info.get('eve_agreement'), '9.4f', 9)}"
        )
    aware = reports.get("blinding_aware")
    legacy = reports.get("legacy_squash")
    if aware is not None and legacy is not None:
        gap = legacy.length - aware.length
        print(
            f"security gap: legacy certifies {gap} bits the blinding-aware "
            "analysis refuses"
        )
    _write_json(outdir / "attack_demo.json", summary)
    plot_attack_gap(reports, outdir / "attack_demo.png")
    print(f"wrote {outdir / 'attack_demo.json'}, {outdir / 'attack_demo.png'}")
    return 0


def _cmd_extract(args) -> int:
    report_data = _load_json(args.report)
    report = AnalysisReport.from_dict(report_data)
    n_bits = args.raw_bit_count or report_data.get("raw_bit_count")
    raw = read_bit_file(args.raw, n_bits)
    rng = np.random.default_rng(args.hash_seed)
    spec = plan_extraction(report, raw.size, rng)
    out_bits = toeplitz_extract(raw, spec)
    write_bit_file(args.output, out_bits)
    print(f"raw bits:           {raw.size}")
    print(f"hash seed bits:     {spec.seed.size} (from --hash-seed {args.hash_seed})")
    print(f"certified output:   {out_bits.size} bits -> {args.output}")
    return 0


def _cmd_test_battery(args) -> int:
    from .plotting import plot_battery_pvalues

    config = BatteryConfig(
        sequence_count=args.count,
        sequence_length=args.length,
        significance=args.alpha,
    )
    bits = read_bit_file(args.bits)
    results = run_battery(bits, config)
    print(render_battery_table(results))
    implemented = [r for r in results if r.implemented]
    overall = all(r.passed for r in implemented)
    print(
        f"\nimplemented tests passed: {sum(r.passed for r in implemented)}"
        f"/{len(implemented)} (proportion threshold "
        f"{config.proportion_threshold:.4f})"
    )
    if args.output:
        _write_json(
            Path(args.output),
            {
                "config": {
                    "sequence_count": config.sequence_count,
                    "sequence_length": config.sequence_length,
                    "significance": config.significance,
                },
                "overall_pass": overall,
                "results": [r.to_dict() for r in results],
            },
        )
        print(f"wrote {args.output}")
    if args.plot:
        plot_battery_pvalues(results, args.plot)
        print(f"wrote {args.plot}")
    return 0


def _add_model_args(p: argparse.ArgumentParser) -> None:
    p.add_argument("--dimension", type=int, default=2, help="detector count d")
    p.add_argument("--mu", type=float, default=None, help="mean photon number")
    p.add_argument("--eta", type=float, default=None, help="total transmittance")
    p.add_argument("--dark-count", type=float, default=None)
    p.add_argument("--misalignment", type=float, default=None)
    p.add_argument("--q", type=float, default=None, help="basis incompatibility")
    p.add_argument("--eta-e", type=float, default=None, help="detection balance")
    p.add_argument("--eps-sec", type=float, default=DEFAULT_EPS_SEC)
    p.add_argument(
        "--ideal",
        action="store_true",
        help="use ideal calibration (q = log2 d, balanced detectors)",
    )


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="siqrng",
        description=__doc__,
        formatter_class=argparse.RawDescriptionHelpFormatter,
    )
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", required=True)

    def add_gamma(p):
        p.add_argument(
            "--gamma-method",
            choices=GAMMA_METHODS,
            default=DEFAULT_GAMMA_METHOD,
            help="sampling tail bound used for the error-rate penalty",
        )

    p = sub.add_parser("simulate", help="run a simulated session from a config file")
    p.add_argument("--config", required=True)
    p.add_argument("--seed", type=int, required=True, help="session seed (mandatory)")
    p.add_argument("--outdir", default="siqrng-out")
    add_gamma(p)
    p.set_defaults(func=_cmd_simulate)

    p = sub.add_parser("analyze", help="certify a counts record file")
    p.add_argument("record", help="record path, or builtin name with --builtin")
    p.add_argument("--builtin", action="store_true",
                   help=f"use a shipped fixture ({', '.join(builtin_record_names())})")
    p.add_argument("--no-override", action="store_true",
                   help="ignore any phase-error override and run the full pipeline")
    p.add_argument("--output", default=None, help="write the report JSON here")
    add_gamma(p)
    p.set_defaults(func=_cmd_analyze)

    p = sub.add_parser("rate-curve", help="sweep the closed-form model to CSV + figure")
    p.add_argument(
        "--sweep", choices=("intensity", "loss", "dimension"), default="intensity"
    )
    p.add_argument("--minimum", type=float, default=4.0)
    p.add_argument("--maximum", type=float, default=20.0)
    p.add_argument("--points", type=int, default=65)
    p.add_argument("--rounds", type=float, default=EXPERIMENT_ROUNDS)
    p.add_argument("--p-x", type=float, default=EXPERIMENT_P_X)
    p.add_argument("--asymptotic", action="store_true",
                   help="dimension sweep only: drop the finite-size penalties")
    p.add_argument("--output", default="rate_curve.csv")
    p.add_argument("--no-plot", action="store_true")
    _add_model_args(p)
    add_gamma(p)
    p.set_defaults(func=_cmd_rate_curve)

    p = sub.add_parser("optimize", help="optimize intensity and basis bias")
    p.add_argument("--rounds", type=float, default=EXPERIMENT_ROUNDS)
    p.add_argument("--asymptotic", action="store_true")
    p.add_argument("--output", default=None)
    _add_model_args(p)
    add_gamma(p)
    p.set_defaults(func=_cmd_optimize)

    p = sub.add_parser(
        "attack-demo",
        help="run both treatments under one attack and print the security gap",
    )
    p.add_argument("--config", required=True)
    p.add_argument("--seed", type=int, required=True, help="session seed (mandatory)")
    p.add_argument("--outdir", default="siqrng-out")
    add_gamma(p)
    p.set_defaults(func=_cmd_attack_demo)

    p = sub.add_parser("extract", help="hash raw bits down to the certified length")
    p.add_argument("--raw", required=True, help="packed raw bit file")
    p.add_argument("--report", required=True, help="analysis report JSON")
    p.add_argument("--hash-seed", type=int, required=True,
                   help="seed expanding to the hash's diagonal bits")
    p.add_argument("--raw-bit-count", type=int, default=None,
                   help="exact raw length; defaults to the report's raw_bit_count")
    p.add_argument("--output", required=True)
    p.set_defaults(func=_cmd_extract)

    p = sub.add_parser("test-battery", help="run the randomness test battery")
    p.add_argument("--bits", required=True, help="packed bit file")
    p.add_argument("--count", type=int, default=100, help="number of sequences")
    p.add_argument("--length", type=int, default=1_000_000, help="bits per sequence")
    p.add_argument("--alpha", type=float, default=0.01)
    p.add_argument("--output", default=None)
    p.add_argument("--plot", default=None, help="write a P-value histogram here")
    p.set_defaults(func=_cmd_test_battery)

    return parser


def main(argv: Optional[list[str]] = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except SiqrngError as exc:
        print(f"error[{exc.category}]: {exc}", file=sys.stderr)
        return exc.exit_code


if __name__ == "__main__":
    sys.exit(main())
