"""Command-line front end: ``spinphoton {simulate,sweep,feasibility,analytic} CONFIG``."""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

from . import config as cfgmod
from .merit import SIN_STRAINED, analytic_suite
from .model import TWO_PI
from .sweep import StageError, merits_csv, profile_for, provenance, report_feasibility, run_point, run_sweep

EXIT_OK, EXIT_CONFIG, EXIT_NUMERICAL, EXIT_INFEASIBLE = 0, 1, 2, 3


def _parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="spinphoton", description="Phonon-mediated spin-photon source simulator")
    sub = p.add_subparsers(dest="command", required=True)
    for name, help_ in (
        ("simulate", "run one operating point and write merits.csv"),
        ("sweep", "run the Cartesian sweep in the config and write sweep.csv"),
        ("feasibility", "check the regime inequalities (no simulation)"),
        ("analytic", "closed-form estimates (no simulation)"),
    ):
        s = sub.add_parser(name, help=help_)
        s.add_argument("config", help="TOML run configuration")
        s.add_argument("--fast", action="store_true", help="scaled-parameter reduced-cost profile")
        s.add_argument("--out", help="output directory (overrides [output].dir)")
        s.add_argument("--threads", type=int, default=1, help="worker processes for sweeps")
        s.add_argument("--seed", type=int, default=None, help="reserved; all paths are deterministic")
        s.add_argument("-v", "--verbose", action="store_true")
    return p


def _header(config, profile: str) -> str:
    return "".join(f"# {line}\n" for line in provenance(config, profile))


def _feasibility_text(config, fast: bool) -> tuple[str, bool]:
    report, est = report_feasibility(config, fast)
    lines = [f"{'PASS' if getattr(report, k).ok else 'FAIL'} {k} margin={getattr(report, k).margin:.6g}"
             for k in report.CHECKS]
    lines.append(f"critical_coupling_residual {report.critical_coupling_residual:.6g}")
    lo, hi = est.g_c_window
    lines.append(f"g_c_window_hz {lo / TWO_PI:.6g} {hi / TWO_PI:.6g} feasible={est.g_c_window_feasible}")
    lines.append(f"overall {'FEASIBLE' if report.all_ok else 'INFEASIBLE'}")
    return "\n".join(lines) + "\n", report.all_ok


def _analytic_text(config, fast: bool) -> str:
    params = profile_for(config, fast).params
    est = analytic_suite(params, SIN_STRAINED)
    lo, hi = est.g_c_window
    rows = [
        ("Omega_hz", est.Omega / TWO_PI), ("Gamma_th_hz", est.Gamma_th / TWO_PI), ("R_hz", est.R / TWO_PI),
        ("beta_0", est.beta_0), ("t_u_opt_s", est.t_u_opt), ("critical_delta_hz", est.critical_delta / TWO_PI),
        ("g_c_window_lo_hz", lo / TWO_PI), ("g_c_window_hi_hz", hi / TWO_PI),
        ("g_c_window_feasible", est.g_c_window_feasible), ("Q_m_estimate_SiN", est.Q_m_estimate),
    ]
    return "".join(f"{k} {v:.6g}\n" if isinstance(v, float) else f"{k} {v}\n" for k, v in rows)


def main(argv=None) -> int:
    args = _parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    try:
        config = cfgmod.load(args.config)
        if args.command == "sweep" and not config.sweep:
            raise cfgmod.ConfigError("sweep needs at least one [[sweep]] axis")
        if args.threads < 1:
            raise cfgmod.ConfigError("--threads must be >= 1")
    except cfgmod.ConfigError as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    out = Path(args.out or config.output["dir"])
    label = profile_for(config, args.fast).label

    if args.command == "feasibility":
        text, ok = _feasibility_text(config, args.fast)
        out.mkdir(parents=True, exist_ok=True)
        (out / "feasibility.txt").write_text(_header(config, label) + text)
        sys.stdout.write(text)
        return EXIT_OK if ok else EXIT_INFEASIBLE
    if args.command == "analytic":
        sys.stdout.write(_analytic_text(config, args.fast))
        return EXIT_OK

    try:
        if args.command == "simulate":
            result = run_point(config, fast=args.fast)
            out.mkdir(parents=True, exist_ok=True)
            (out / "merits.csv").write_text(merits_csv(config, result, label))
            (out / "report.json").write_text(json.dumps(result.to_json(), indent=2, sort_keys=True) + "\n")
            m = result.merits
            print(f"beta={m.beta:.6g} g2={m.g2} I={m.indistinguishability}")
        else:
            res = run_sweep(config, threads=args.threads, fast=args.fast, out_dir=out)
            failed = sum(1 for r in res.rows if r["error"])
            print(f"{len(res.rows)} points, {failed} failed -> {out / 'sweep.csv'}")
    except StageError as exc:
        print(f"numerical failure in stage {exc.stage}: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL
    except (ArithmeticError, ValueError, RuntimeError) as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL
    return EXIT_OK


if __name__ == "__main__":
    raise SystemExit(main())
