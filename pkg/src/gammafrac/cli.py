"""Command line driver: ``gammafrac {run,validate,report,cleavage,gamma}``."""
from __future__ import annotations

import argparse
import logging
import sys

import numpy as np


def parse_grid(text: str) -> list:
    """Comma separated values, or ``start:stop:step`` (stop included when hit)."""
    text = text.strip()
    if ":" in text:
        parts = [float(p) for p in text.split(":")]
        if len(parts) != 3 or parts[2] == 0:
            raise argparse.ArgumentTypeError(f"bad range {text!r}; use start:stop:step")
        lo, hi, step = parts
        n = int(np.floor((hi - lo) / step + 1e-9)) + 1
        if n < 1:
            raise argparse.ArgumentTypeError(f"empty range {text!r}")
        return [round(lo + i * step, 12) for i in range(n)]
    try:
        return [float(v) for v in text.split(",") if v.strip()]
    except ValueError as exc:
        raise argparse.ArgumentTypeError(str(exc)) from exc


def _cmd_run(args) -> int:
    from .config import ConfigError, lint, load_config
    from .experiments import run

    try:
        cfg = load_config(args.config)
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    problems = lint(cfg)
    if problems:
        for p in problems:
            print(f"error: {p}", file=sys.stderr)
        return 2
    out = run(cfg, args.out)
    print(out)
    return 0


def _cmd_validate(args) -> int:
    from .config import validate

    problems = validate(args.config)
    for p in problems:
        print(p)
    if not problems:
        print("ok")
    return 1 if problems else 0


def _cmd_report(args) -> int:
    from .experiments import report

    print(report(args.run_dir), end="")
    return 0


def _cmd_cleavage(args) -> int:
    from .config import CleavageConfig, ExperimentConfig, MeshConfig, lint
    from .experiments import run

    cfg = ExperimentConfig(
        experiment="cleavage", density=args.alpha_from_density,
        mesh=MeshConfig(l=args.l, nx=args.nx, ny=args.ny, eta=args.eta),
        cleavage=CleavageConfig(a_grid=args.a_grid, eps_grid=args.eps_grid, mode=args.mode))
    problems = lint(cfg)
    if problems:
        for p in problems:
            print(f"error: {p}", file=sys.stderr)
        return 2
    print(run(cfg, args.out))
    return 0


def _cmd_gamma(args) -> int:
    from .config import ExperimentConfig, GammaConfig, MeshConfig, lint
    from .experiments import run

    cfg = ExperimentConfig(
        experiment="gamma", seed=args.seed, mesh=MeshConfig(l=1.0, nx=args.nx, ny=args.ny),
        gamma=GammaConfig(eps_grid=args.eps_grid, xi=args.xi, sigma_grid=args.sigma_grid,
                          triple=args.triple, n_triples=args.n_triples))
    problems = lint(cfg)
    if problems:
        for p in problems:
            print(f"error: {p}", file=sys.stderr)
        return 2
    print(run(cfg, args.out))
    return 0


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="gammafrac", description=__doc__)
    ap.add_argument("-v", "--verbose", action="store_true")
    sub = ap.add_subparsers(dest="command", required=True)

    p = sub.add_parser("run", help="run an experiment from a TOML config")
    p.add_argument("config")
    p.add_argument("--out", default=None, help="output root (default $GAMMAFRAC_OUT or ./runs)")
    p.set_defaults(func=_cmd_run)

    p = sub.add_parser("validate", help="check a config without running it")
    p.add_argument("config")
    p.set_defaults(func=_cmd_validate)

    p = sub.add_parser("report", help="regenerate summary.txt of a run directory")
    p.add_argument("run_dir")
    p.set_defaults(func=_cmd_report)

    p = sub.add_parser("cleavage", help="uniaxial strain sweep")
    p.add_argument("--l", type=float, default=1.0)
    p.add_argument("--nx", type=int, default=64)
    p.add_argument("--ny", type=int, default=64)
    p.add_argument("--eta", type=float, default=None)
    p.add_argument("--alpha-from-density", default="dist2", choices=["dist2", "svk"])
    p.add_argument("--a-grid", type=parse_grid, default=parse_grid("-1.5:1.5:0.25"))
    p.add_argument("--eps-grid", type=parse_grid, default=[1e-4])
    p.add_argument("--mode", choices=["candidates", "alternating", "both"], default="candidates")
    p.add_argument("--out", default=None)
    p.set_defaults(func=_cmd_cleavage)

    p = sub.add_parser("gamma", help="recovery rates and slice measures")
    p.add_argument("--triple", default=None, help="JSON file with a (u, P, T) triple")
    p.add_argument("--eps-grid", type=parse_grid, default=[1e-2, 1e-3, 1e-4, 1e-5, 1e-6])
    p.add_argument("--xi", choices=["e1", "e2"], default="e1")
    p.add_argument("--sigma-grid", type=parse_grid, default=[0.0, 0.5, 1.0, 2.0])
    p.add_argument("--n-triples", type=int, default=5)
    p.add_argument("--nx", type=int, default=32)
    p.add_argument("--ny", type=int, default=32)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", default=None)
    p.set_defaults(func=_cmd_gamma)
    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
