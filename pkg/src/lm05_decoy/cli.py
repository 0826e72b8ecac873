"""Command-line front end.

Subcommands::

    lm05-decoy sweep --scheme all --max-km 80 --out curves.csv
    lm05-decoy optimize --scheme wv-r12sum --km 20 --format json
    lm05-decoy mc-validate --km 10 --mu 0.5 --nu 0.1 --pulses 10000000 --seed 42

Exit codes: 0 success, 1 validation failure, 2 usage or configuration error.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import os
import sys
from datetime import datetime, timezone
from pathlib import Path
from typing import IO, Iterable, Optional, Sequence

from . import __version__
from .channel_model import PulseSettings, SystemParams, default_params, load_params, overall_gain_qber, transmittance
from .decoy_bounds import Scheme
from .errors import Lm05Error
from .mc_oracle import McConfig, simulate
from .optimizer import OptimizeConfig, SweepPoint, evaluate_point, optimize_at_distance, sweep

EXIT_OK = 0
EXIT_VALIDATION = 1
EXIT_USAGE = 2

CSV_HEADER = ("distance_km", "scheme", "mu_opt", "nu_opt", "rate", "raw_rate", "flags")
SCHEME_CHOICES = [s.value for s in Scheme] + ["all"]
Z_LIMIT = 4.0


class CliError(Exception):
    """Reported on stderr with exit code 2."""


def _fmt(x: Optional[float]) -> str:
    return "" if x is None else f"{x:.9e}"


def write_sweep_csv(points: Iterable[SweepPoint], fh: IO[str]) -> None:
    writer = csv.writer(fh, lineterminator="\n")
    writer.writerow(CSV_HEADER)
    for p in points:
        writer.writerow(
            [
                _fmt(p.distance_km),
                p.scheme.value,
                _fmt(p.mu_opt),
                _fmt(p.nu_opt),
                _fmt(p.rate),
                _fmt(p.raw_rate),
                ";".join(p.clamp_flags),
            ]
        )


def read_sweep_csv(fh: IO[str]) -> list[SweepPoint]:
    reader = csv.reader(fh)
    header = next(reader, None)
    if tuple(header or ()) != CSV_HEADER:
        raise ValueError(f"unexpected CSV header: {header}")
    points = []
    for row in reader:
        d, scheme, mu, nu, rate, raw, flags = row
        points.append(
            SweepPoint(
                distance_km=float(d),
                scheme=Scheme.parse(scheme),
                mu_opt=float(mu),
                nu_opt=float(nu) if nu else None,
                rate=float(rate),
                raw_rate=float(raw),
                clamp_flags=tuple(flags.split(";")) if flags else (),
            )
        )
    return points


def _resolve_params(path: Optional[str]) -> tuple[SystemParams, str]:
    path = path or os.environ.get("QKD_PARAMS")
    if not path:
        return default_params(), "<builtin GYS defaults>"
    return load_params(path), str(path)


def _config_from_args(args) -> OptimizeConfig:
    kwargs = {}
    if getattr(args, "step_km", None) is not None:
        kwargs["step_km"] = args.step_km
    if getattr(args, "grid_size", None) is not None:
        kwargs["grid_size"] = args.grid_size
    if getattr(args, "refine_rounds", None) is not None:
        kwargs["refine_rounds"] = args.refine_rounds
    if getattr(args, "workers", None) is not None:
        kwargs["workers"] = args.workers
    return OptimizeConfig(**kwargs)


def _schemes(name: str) -> list[Scheme]:
    if name == "all":
        return list(Scheme)
    return [Scheme.parse(name)]


def build_manifest(params: SystemParams, params_path: str, schemes, config: dict) -> dict:
    return {
        "timestamp": datetime.now(timezone.utc).isoformat(timespec="seconds"),
        "params_path": params_path,
        "params": params.to_dict(),
        "schemes": [s.value for s in schemes],
        "config": config,
        "version": __version__,
    }


def cmd_sweep(args, out: IO[str]) -> int:
    params, params_path = _resolve_params(args.params)
    if not args.max_km >= 0:
        raise CliError(f"--max-km must be >= 0, got {args.max_km}")
    config = _config_from_args(args)
    schemes = _schemes(args.scheme)
    points: list[SweepPoint] = []
    for scheme in schemes:
        points.extend(sweep(scheme, params, config, args.max_km))

    buf = io.StringIO()
    write_sweep_csv(points, buf)
    if args.out:
        Path(args.out).write_text(buf.getvalue())
        manifest = build_manifest(params, params_path, schemes, {**config.to_dict(), "max_km": args.max_km})
        Path(str(args.out) + ".manifest.json").write_text(json.dumps(manifest, indent=2) + "\n")
    else:
        out.write(buf.getvalue())
    return EXIT_OK


def _optimize_report(args) -> dict:
    params, params_path = _resolve_params(args.params)
    if not args.km >= 0:
        raise CliError(f"--km must be >= 0, got {args.km}")
    scheme = Scheme.parse(args.scheme)
    config = _config_from_args(args)
    point = optimize_at_distance(args.km, scheme, params, config)
    channel, bounds, result = evaluate_point(scheme, args.km, point.mu_opt, point.nu_opt, params)
    report = {
        "scheme": scheme.value,
        "distance_km": args.km,
        "mu_opt": point.mu_opt,
    }
    if scheme.is_finite:
        report["nu_opt"] = point.nu_opt
    report.update(
        {
            "rate": result.rate,
            "raw_rate": result.raw_rate,
            "ec_term": result.ec_term,
            "pa_terms": dict(result.pa_terms),
            "f_ec": result.f_ec,
            "channel": {
                "t_c": channel.t_c,
                "eta": channel.eta,
                "q_mu": channel.q_mu,
                "e_mu": channel.e_mu,
            },
            "params_path": params_path,
            "params": params.to_dict(),
        }
    )
    if scheme.is_finite:
        report["channel"].update({"q_nu": channel.q_nu, "e_nu": channel.e_nu})
        report["bounds"] = bounds.values()
        report["clamped"] = sorted(bounds.clamped)
    return report


def _format_text(report: dict) -> str:
    lines = []
    width = 12

    def row(key, value):
        text = f"{value:.10g}" if isinstance(value, float) else str(value)
        lines.append(f"{key:<{width}} {text}")

    for key in ("scheme", "distance_km", "mu_opt", "nu_opt", "rate", "raw_rate", "ec_term", "f_ec"):
        if key in report:
            row(key, report[key])
    for k, v in report["pa_terms"].items():
        row(f"pa[{k}]", v)
    lines.append("channel:")
    for k, v in report["channel"].items():
        row(f"  {k}", v)
    if "bounds" in report:
        lines.append("bounds:")
        clamped = set(report["clamped"])
        for k, v in report["bounds"].items():
            mark = "  (clamped)" if k in clamped else ""
            lines.append(f"  {k:<{width - 2}} {v:.10g}{mark}")
    row("params", report["params_path"])
    return "\n".join(lines) + "\n"


def cmd_optimize(args, out: IO[str]) -> int:
    report = _optimize_report(args)
    if args.format == "json":
        out.write(json.dumps(report, indent=2) + "\n")
    else:
        out.write(_format_text(report))
    return EXIT_OK


def _z(empirical: float, analytic: float, se: float) -> float:
    diff = empirical - analytic
    if se == 0:
        return 0.0 if diff == 0 else float("inf")
    return diff / se


def cmd_mc_validate(args, out: IO[str]) -> int:
    params, _ = _resolve_params(args.params)
    if args.pulses <= 0:
        raise CliError(f"--pulses must be > 0, got {args.pulses}")
    if not args.km >= 0:
        raise CliError(f"--km must be >= 0, got {args.km}")
    PulseSettings(args.mu, args.nu)
    config = McConfig(
        pulses=args.pulses,
        seed=args.seed,
        intensities=(args.mu, args.nu),
        distance_km=args.km,
        workers=args.workers or 1,
    )
    mc = simulate(config, params)
    _, eta = transmittance(args.km, params)

    lines = [
        f"# mc-validate km={args.km!r} pulses={args.pulses} seed={args.seed}",
        f"{'intensity':>12} {'qty':>3} {'analytic':>16} {'empirical':>16} {'std_err':>12} {'z':>8}",
    ]
    worst = 0.0
    for x in config.intensities:
        tally = mc[x]
        q, e = overall_gain_qber(params, x, eta)
        for name, analytic, emp, se in (("Q", q, tally.q_hat, tally.q_se), ("E", e, tally.e_hat, tally.e_se)):
            z = _z(emp, analytic, se)
            worst = max(worst, abs(z))
            lines.append(f"{x:>12.6g} {name:>3} {analytic:>16.9e} {emp:>16.9e} {se:>12.4e} {z:>8.3f}")
    ok = worst < Z_LIMIT
    lines.append(f"max |z| = {worst:.3f} -> {'PASS' if ok else 'FAIL'} (limit {Z_LIMIT:g})")
    out.write("\n".join(lines) + "\n")
    return EXIT_OK if ok else EXIT_VALIDATION


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="lm05-decoy", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p):
        p.add_argument("--params", help="JSON parameter file (default: $QKD_PARAMS or built-in GYS set)")

    def optimizer_opts(p):
        p.add_argument("--grid-size", type=int, help="coarse grid points per axis (default 60)")
        p.add_argument("--refine-rounds", type=int, help="window refinement rounds (default 3)")

    p = sub.add_parser("sweep", help="optimized key rate versus distance as CSV")
    common(p)
    optimizer_opts(p)
    p.add_argument("--scheme", choices=SCHEME_CHOICES, default="all")
    p.add_argument("--max-km", type=float, default=80.0)
    p.add_argument("--step-km", type=float, default=None, help="distance step (default 1 km)")
    p.add_argument("--workers", type=int, default=None, help="processes for per-distance optimization")
    p.add_argument("--out", help="write CSV here (plus <out>.manifest.json) instead of stdout")
    p.set_defaults(func=cmd_sweep)

    p = sub.add_parser("optimize", help="optimal intensities and bounds at one distance")
    common(p)
    optimizer_opts(p)
    p.add_argument("--scheme", choices=[s.value for s in Scheme], required=True)
    p.add_argument("--km", type=float, required=True)
    p.add_argument("--format", choices=["text", "json"], default="text")
    p.set_defaults(func=cmd_optimize)

    p = sub.add_parser("mc-validate", help="compare Monte Carlo gains/QBERs with the analytic model")
    common(p)
    p.add_argument("--km", type=float, required=True)
    p.add_argument("--mu", type=float, required=True)
    p.add_argument("--nu", type=float, required=True)
    p.add_argument("--pulses", type=int, default=10_000_000)
    p.add_argument("--seed", type=int, default=42)
    p.add_argument("--workers", type=int, default=None)
    p.set_defaults(func=cmd_mc_validate)
    return parser


def main(argv: Optional[Sequence[str]] = None, out: Optional[IO[str]] = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    out = out or sys.stdout
    try:
        return args.func(args, out)
    except (CliError, Lm05Error) as exc:
        print(f"lm05-decoy: error: {exc}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
