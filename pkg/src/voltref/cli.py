"""Command-line entry point.

Exit codes: 0 success, 1 runtime or check failure, 2 usage/config error.
"""
from __future__ import annotations

import argparse
import json
import logging
import os
import sys
from pathlib import Path

import numpy as np

from .errors import ConfigError, ParseError, ValidationError
from .scenario import load_config
from .sim import build_feeder_for, compare_controllers, dc_columns, run_scenario

log = logging.getLogger("voltref")

EXIT_OK, EXIT_FAIL, EXIT_USAGE = 0, 1, 2


class OutputExists(Exception):
    pass


def _outputs(out_dir, names, force):
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    paths = [out / n for n in names]
    existing = [str(p) for p in paths if p.exists()]
    if existing and not force:
        raise OutputExists(f"refusing to overwrite {', '.join(existing)} (use --force)")
    return paths


def _write_json(path, obj):
    with open(path, "w") as fh:
        json.dump(obj, fh, indent=2, sort_keys=True)
        fh.write("\n")


def cmd_run(args):
    config = load_config(args.config, args.set)
    traj, metrics = _outputs(args.out, ["trajectory.csv", "metrics.json"], args.force)
    res = run_scenario(config)
    res.to_csv(traj)
    res.write_summary(metrics)
    m = res.metrics
    print(f"{config.name}: controller={res.controller} max|v-1|={m['max_abs_dev']:.4f} "
          f"violations={m['violations']} effort={m['effort']:.4f}")
    return EXIT_OK


def cmd_compare(args):
    kinds = tuple(k.strip() for k in args.controllers.split(","))
    if len(kinds) != 2 or any(k not in ("fixed", "switching") for k in kinds):
        raise ConfigError(f"--controllers must be two of fixed/switching, got {args.controllers!r}")
    config = load_config(args.config, args.set)
    labels = kinds if kinds[0] != kinds[1] else (f"{kinds[0]}1", f"{kinds[1]}2")
    names = [f"{labels[0]}_trajectory.csv", f"{labels[1]}_trajectory.csv", "comparison.json"]
    a_path, b_path, summary = _outputs(args.out, names, args.force)
    cmp = compare_controllers(config, kinds)
    cmp.baseline.to_csv(a_path)
    cmp.candidate.to_csv(b_path)
    _write_json(summary, cmp.summary())
    for key in ("max_abs_dev", "violations", "effort"):
        a, b = cmp.baseline.metrics[key], cmp.candidate.metrics[key]
        print(f"{key:<12} {labels[0]}={a:<12.6g} {labels[1]}={b:<12.6g} delta={cmp.deltas[key]:+.6g}")
    return EXIT_OK


def cmd_verify(args):
    from .verify import run_all

    config = load_config(args.config, args.set)
    txt, js = _outputs(args.out, ["verify_report.txt", "verify_report.json"], args.force)
    checks, cert = run_all(config)
    lines = [c.line() for c in checks]
    lines.append(f"certificate: epsilon={cert.epsilon:.9f} margin={cert.margin:.3e} valid={cert.valid}")
    txt.write_text("\n".join(lines) + "\n")
    _write_json(js, {"checks": [{"name": c.name, "passed": bool(c.passed), "measured": c.measured,
                                 "tolerance": c.tolerance, "detail": c.detail} for c in checks],
                     "certificate": cert.as_dict()})
    print("\n".join(lines))
    failed = [c.name for c in checks if not c.passed]
    if failed:
        print(f"failed: {', '.join(failed)}", file=sys.stderr)
        return EXIT_FAIL
    return EXIT_OK


def cmd_gen_trace(args):
    config = load_config(args.config, args.set)
    model = build_feeder_for(config)
    config.validate(set(model.buses), model.slack)
    cols = dc_columns(model, config, config.n_steps)
    names = []
    for bus, (_, modes) in cols.items():
        names.append(f"trace_dc{bus}.csv")
        if modes is not None:
            names.append(f"modes_dc{bus}.csv")
    paths = dict(zip(names, _outputs(args.out, names, args.force)))
    t = np.arange(config.n_steps) * config.dt_sim
    watts_per_pu = config.base_power * 1e6
    for bus, (col, modes) in cols.items():
        np.savetxt(paths[f"trace_dc{bus}.csv"], np.column_stack([t, -col * watts_per_pu]),
                   fmt=["%.4f", "%.6f"], delimiter=",", header="time_s,power_watts", comments="")
        if modes is not None:
            np.savetxt(paths[f"modes_dc{bus}.csv"], np.column_stack([t, modes]),
                       fmt=["%.4f", "%d"], delimiter=",", header="time_s,mode", comments="")
        print(f"wrote {paths[f'trace_dc{bus}.csv']}")
    return EXIT_OK


def build_parser():
    parser = argparse.ArgumentParser(prog="voltref", description="Switching-reference droop control simulator")
    parser.add_argument("-v", "--verbose", action="count", default=0)
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p, config_required=True):
        if config_required:
            p.add_argument("config", help="scenario INI file or built-in name (single_dc, two_dc, smoothing)")
        else:
            p.add_argument("--config", default="single_dc", help="scenario supplying feeder and gain")
        p.add_argument("-o", "--out", required=True, help="output directory (created if absent)")
        p.add_argument("--set", action="append", default=[], metavar="KEY=VALUE",
                       help="override a config value, e.g. controller=fixed or dc.22.p_comp_pu=-0.3")
        p.add_argument("--force", action="store_true", help="overwrite existing output files")

    common(sub.add_parser("run", help="simulate one scenario"))
    cmp = sub.add_parser("compare", help="fixed vs switching reference on the same scenario")
    common(cmp)
    cmp.add_argument("--controllers", default="fixed,switching", metavar="A,B",
                     help="baseline and candidate controller kinds (default fixed,switching)")
    common(sub.add_parser("verify", help="numerical checks of the contraction theory"), config_required=False)
    common(sub.add_parser("gen-trace", help="write synthetic data-center traces as CSV"))
    return parser


COMMANDS = {"run": cmd_run, "compare": cmd_compare, "verify": cmd_verify, "gen-trace": cmd_gen_trace}


def main(argv=None):
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_USAGE if exc.code else EXIT_OK
    level = os.environ.get("VOLTREF_LOG_LEVEL") or ("DEBUG" if args.verbose > 1 else "INFO" if args.verbose else "WARNING")
    logging.basicConfig(level=level, format="%(levelname)s %(name)s: %(message)s")
    try:
        return COMMANDS[args.command](args)
    except ConfigError as exc:
        print("configuration error:", file=sys.stderr)
        for p in exc.problems:
            print(f"  - {p}", file=sys.stderr)
        return EXIT_USAGE
    except OutputExists as exc:
        print(str(exc), file=sys.stderr)
        return EXIT_USAGE
    except (ParseError, ValidationError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_FAIL
    except Exception as exc:  # noqa: BLE001
        log.debug("unhandled error", exc_info=True)
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_FAIL


if __name__ == "__main__":
    sys.exit(main())
