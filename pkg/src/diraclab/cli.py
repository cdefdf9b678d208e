"""Command-line entry: single solves, the c-sweep and the verification suite."""

from __future__ import annotations

import argparse
import json
import math
import sys
import time
from dataclasses import asdict, replace
from pathlib import Path

from . import harness
from .correction import e2_report
from .df import solve_df
from .hf import solve_hf


def _common(parser: argparse.ArgumentParser):
    parser.add_argument("--config", type=Path, default=None, help="JSON config file")
    parser.add_argument("--out", type=Path, default=Path("."), help="output directory")
    parser.add_argument("--seed", type=int, default=None, help="random seed override")
    parser.add_argument("--workers", type=int, default=None, help="parallel sweep workers")
    parser.add_argument("--c", type=float, default=None, help="speed of light override")


def _config_from(args) -> harness.SweepConfig:
    overrides = {}
    if args.seed is not None:
        overrides["seed"] = args.seed
    if args.workers is not None:
        overrides["workers"] = args.workers
    return harness.load_config(args.config, **overrides)


def _dump(payload: dict, out_dir: Path, name: str):
    out_dir.mkdir(parents=True, exist_ok=True)
    path = out_dir / name
    path.write_text(json.dumps(payload, indent=2, default=harness._json_default) + "\n")
    print(f"wrote {path}")


def cmd_hf(args):
    config = _config_from(args)
    c = args.c if args.c is not None else config.c_values[0]
    dm, report = solve_hf(config.params(c), config.scf)
    payload = {"config": config.echo(), "c": c, "report": asdict(report)}
    print(
        f"E_hf = {report.total:.12f} (converged={report.converged}, "
        f"iterations={report.iterations}, fermi={report.fermi:.6f})"
    )
    _dump(payload, args.out, "hf.json")


def cmd_df(args):
    config = _config_from(args)
    c = args.c if args.c is not None else config.c_values[0]
    state = solve_df(config.params(c), config.scf)
    payload = {
        "config": config.echo(),
        "c": c,
        "report": asdict(state.report),
        "eigenvalues_shifted": state.eigenvalues_shifted,
        "delta_mass": state.delta_mass,
        "fermi_gap": state.fermi_gap,
        "projector_residual": state.projector_residual,
    }
    print(
        f"E_df = {state.report.total:.12f} (converged={state.report.converged}, "
        f"iterations={state.report.iterations}, delta={state.delta_mass:g})"
    )
    _dump(payload, args.out, "df.json")


def cmd_correction(args):
    config = _config_from(args)
    c = args.c if args.c is not None else config.c_values[0]
    params = config.params(c)
    dm, report = solve_hf(params, config.hf_scf)
    rep = e2_report(params, dm, report.eigenvalues, c=c)
    print(
        f"E2 = {rep.e2_total:.6e}  (eigen {rep.e2_eigen_term:.3e}, direct {rep.e2_direct_term:.3e}, "
        f"exchange {rep.e2_exchange_term:.3e})"
    )
    print(
        f"4c^2 E2 = {4 * c * c * rep.e2_total:.8f} vs mv+D+so = {rep.e_mv + rep.e_d + rep.e_so:.8f} "
        f"(relative residual {rep.consistency_residual / abs(4 * c * c * rep.e2_total):.3e})"
    )
    payload = {"config": config.echo(), "c": c, "correction": asdict(rep)}
    _dump(payload, args.out, "correction.json")


def cmd_sweep(args):
    config = _config_from(args)

    def progress(row):
        print(
            f"  c={row.c:g}: E_df={row.E_df:.10f} gap1={row.gap1:.3e} gap2={row.gap2:.3e} "
            f"[{row.status}] ({row.wall_time_s:.0f}s)",
            flush=True,
        )

    t0 = time.perf_counter()
    result = harness.run_sweep(config, progress=progress)
    args.out.mkdir(parents=True, exist_ok=True)
    csv_path = harness.write_csv(result, args.out / "sweep.csv")
    summary_path = harness.write_summary(result, args.out / "summary.json")
    print(f"E_hf = {result.hf_energy:.12f}")
    for name, fit in result.slopes.items():
        print(f"slope[{name}] = {fit.slope:.4f} +/- {fit.stderr:.4f} (R^2={fit.r_squared:.6f})")
    print(f"wrote {csv_path} and {summary_path} in {time.perf_counter() - t0:.0f}s")


def cmd_verify(args):
    config = _config_from(args)
    report = harness.verify_suite(config, out_dir=args.out)
    worst_lines = []
    ok = True
    for name, check in report["checks"].items():
        ok = ok and check["passed"]
        worst_lines.append(
            f"  {name}: worst ratio {check['worst_ratio']:.6f} "
            f"(slack {check['slack']}) {'PASS' if check['passed'] else 'FAIL'}"
        )
    print("\n".join(worst_lines))
    _dump(report, args.out, "verify.json")
    if not ok:
        sys.exit(1)


def main(argv=None):
    parser = argparse.ArgumentParser(
        prog="diraclab",
        description="Desk-scale Fourier laboratory for Dirac-Fock vs Hartree-Fock",
    )
    sub = parser.add_subparsers(dest="command", required=True)
    for name, fn in [
        ("hf", cmd_hf),
        ("df", cmd_df),
        ("correction", cmd_correction),
        ("sweep", cmd_sweep),
        ("verify", cmd_verify),
    ]:
        p = sub.add_parser(name)
        _common(p)
        p.set_defaults(func=fn)
    args = parser.parse_args(argv)
    args.func(args)


if __name__ == "__main__":
    main()
