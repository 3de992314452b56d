"""Coarsest partition of the three-block sequence on (0,3)x(0,1).

Block 1 stays fixed, block 2 moves by sqrt(eps) * plan and block 3 by
eps^(1/4) (1, 1). Blocks 1 and 2 merge; block 3 separates.

    python3 scripts/coarsest_partition.py [config.toml] [--out DIR]
"""
import argparse
import json
from pathlib import Path

from gammafrac.config import lint, load_config
from gammafrac.experiments import run

HERE = Path(__file__).parent


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("config", nargs="?", default=HERE / "configs" / "rigidity.toml")
    ap.add_argument("--out", default=None)
    args = ap.parse_args()
    cfg = load_config(args.config)
    problems = lint(cfg)
    if problems:
        raise SystemExit("\n".join(problems))
    out = run(cfg, args.out)
    trace = json.loads((out / "merge_trace.json").read_text())
    print(json.dumps(trace, indent=2, default=str))
    print(f"artifacts in {out}")


if __name__ == "__main__":
    main()
