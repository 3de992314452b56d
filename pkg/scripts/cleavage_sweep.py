"""Uniaxial strain sweep: minimal energy vs a against min{alpha l a^2 / 2, 1}.

    python3 scripts/cleavage_sweep.py [config.toml] [--out DIR]
"""
import argparse
import csv
from pathlib import Path

from gammafrac.config import lint, load_config
from gammafrac.experiments import run

HERE = Path(__file__).parent


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("config", nargs="?", default=HERE / "configs" / "cleavage.toml")
    ap.add_argument("--out", default=None)
    args = ap.parse_args()
    cfg = load_config(args.config)
    problems = lint(cfg)
    if problems:
        raise SystemExit("\n".join(problems))
    out = run(cfg, args.out)
    with open(out / "sweep.csv") as fh:
        rows = list(csv.DictReader(fh))
    print(f"{'eps':>8} {'a':>7} {'energy':>12} {'formula':>12} {'class':<8}")
    for r in rows:
        print(f"{float(r['eps']):8.0e} {float(r['a']):7.3f} {float(r['E_candidates']):12.6f} "
              f"{float(r['formula']):12.6f} {r['class_candidates']:<8}")
    print(f"worst discrepancy {max(float(r['discrepancy']) for r in rows):.3e}")
    print(f"artifacts in {out}")


if __name__ == "__main__":
    main()
