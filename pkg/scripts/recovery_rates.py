"""Recovery-sequence convergence rates and axis-slice measures for random triples.

    python3 scripts/recovery_rates.py [config.toml] [--out DIR]
"""
import argparse
import csv
from pathlib import Path

from gammafrac.config import lint, load_config
from gammafrac.experiments import run

HERE = Path(__file__).parent


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("config", nargs="?", default=HERE / "configs" / "gamma.toml")
    ap.add_argument("--out", default=None)
    args = ap.parse_args()
    cfg = load_config(args.config)
    problems = lint(cfg)
    if problems:
        raise SystemExit("\n".join(problems))
    out = run(cfg, args.out)
    with open(out / "rate_fits.csv") as fh:
        fits = list(csv.DictReader(fh))
    for r in fits:
        print(", ".join(f"{k}={v}" for k, v in r.items()))
    slopes = [float(r["slope"]) for r in fits]
    print(f"min slope {min(slopes):.3f} over {len(slopes)} triples")
    print(f"artifacts in {out}")


if __name__ == "__main__":
    main()
