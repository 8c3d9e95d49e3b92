"""Command line front end.

    noetherlab run <config> [--seed N] [--tol-scale X] [--out DIR]
    noetherlab export <config> [--out DIR]
    noetherlab list-checks <system>

Exit codes: 0 all checks pass, 1 a check failed, 2 configuration error.
"""
import argparse
import dataclasses
import sys
from pathlib import Path

from .checks import Context, catalog
from .config import ConfigError, load_config
from .suite import emit_plot_data, export_trajectory, run_suite

EXIT_OK, EXIT_FAIL, EXIT_CONFIG = 0, 1, 2


def _parser():
    p = argparse.ArgumentParser(prog="noetherlab", description=__doc__.split("\n")[0])
    sub = p.add_subparsers(dest="cmd", required=True)
    for name, help_ in (("run", "run the configured check suites"),
                        ("export", "integrate and write trajectory and plot data")):
        sp = sub.add_parser(name, help=help_)
        sp.add_argument("config")
        sp.add_argument("--seed", type=int)
        sp.add_argument("--tol-scale", type=float)
        sp.add_argument("--out")
    sp = sub.add_parser("list-checks", help="list the catalogued checks of a system")
    sp.add_argument("system")
    return p


def _load(args):
    cfg = load_config(args.config)
    if args.seed is not None:
        if args.seed < 0:
            raise ConfigError("--seed must be non-negative")
        cfg = dataclasses.replace(cfg, seed=args.seed)
    if args.tol_scale is not None:
        if not args.tol_scale > 0:
            raise ConfigError("--tol-scale must be positive")
        cfg = dataclasses.replace(cfg, tol_scale=args.tol_scale)
    if args.out:
        cfg = dataclasses.replace(cfg, output=args.out)
    return cfg


def main(argv=None):
    args = _parser().parse_args(argv)
    if args.cmd == "list-checks":
        try:
            checks = catalog(args.system)
        except KeyError as exc:
            print(f"error: {exc.args[0]}", file=sys.stderr)
            return EXIT_CONFIG
        for c in checks:
            crit = f"[{c.criterion}]" if c.criterion else "   "
            print(f"{c.suite:13s} {crit} {c.id:40s} tol {c.tol:.0e}  {c.anchor}")
        return EXIT_OK
    try:
        cfg = _load(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    if args.cmd == "run":
        report = run_suite(cfg, out_dir=cfg.output)
        sys.stdout.write(report.to_text())
        return report.exit_code
    ctx = Context(cfg)
    out = Path(cfg.output)
    paths = export_trajectory(ctx.traj, out / f"trajectory_{cfg.system}.csv")
    plot = emit_plot_data(ctx, out / f"plot_{cfg.system}.csv")
    for p in (*paths, plot):
        print(p)
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
