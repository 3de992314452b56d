"""Experiment runners writing CSV/JSON/.dat artifacts into a fresh run directory."""
from __future__ import annotations

import csv
import datetime as _dt
import json
import math
import os
import platform
from dataclasses import asdict
from pathlib import Path

import numpy as np
import scipy

from . import __version__
from .cleavage import Schedule, sweep_cleavage
from .config import ExperimentConfig
from .density import alpha_and_fa, get_density, hessian_q
from .energy import LimitTriple, LoadConstraint, energy_loaded, energy_loaded_limit
from .gamma import liminf_check, recovery_rate, recovery_sequence, slice_measure
from .mesh import GridMesh, field_from_dict, field_to_dict
from .partition import (CacciopPartition, local_structure_check, merge, partition_from_dict,
                        partition_to_dict, write_interface_csv)
from .rigid import PiecewiseRigidMotion, add_infinitesimal
from .rigidity import coarsest_from_deformations, three_block_sequence
from .samplers import grown_partition, random_infinitesimal, random_triple

OUT_ENV = "GAMMAFRAC_OUT"


def _fmt(v):
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    if isinstance(v, (bool, np.bool_)):
        return str(bool(v))
    return str(v)


def write_csv(path, rows, sort_keys=None):
    """Write dict rows; columns in first-seen order, rows sorted by ``sort_keys``."""
    rows = list(rows)
    if sort_keys:
        rows.sort(key=lambda r: tuple(r.get(k) for k in sort_keys))
    cols = []
    for r in rows:
        cols += [k for k in r if k not in cols]
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(cols)
        for r in rows:
            w.writerow([_fmt(r.get(c, "")) for c in cols])


def _json_default(o):
    if isinstance(o, np.ndarray):
        return o.tolist()
    if isinstance(o, (np.floating, np.integer, np.bool_)):
        return o.item()
    raise TypeError(type(o).__name__)


def write_json(path, data):
    with open(path, "w") as fh:
        json.dump(data, fh, indent=2, sort_keys=True, default=_json_default)
        fh.write("\n")


def new_run_dir(root, name: str) -> Path:
    """Timestamped directory under ``root``; an existing run is never reused."""
    root = Path(root or os.environ.get(OUT_ENV, "runs"))
    root.mkdir(parents=True, exist_ok=True)
    stamp = _dt.datetime.now().strftime("%Y%m%d-%H%M%S")
    for n in range(1000):
        path = root / (f"{name}-{stamp}" + (f"-{n}" if n else ""))
        try:
            path.mkdir()
            return path
        except FileExistsError:
            continue
    raise RuntimeError(f"could not create a fresh run directory under {root}")


def triple_to_dict(t: LimitTriple) -> dict:
    return {"u": field_to_dict(t.u), "P": partition_to_dict(t.P),
            "T": {"thetas": t.T.thetas.tolist(), "b": t.T.b.tolist()}}


def triple_from_dict(data: dict) -> LimitTriple:
    u = field_from_dict(data["u"])
    P = partition_from_dict(data["P"])
    if P.mesh != u.mesh:
        raise ValueError("u and P are stored on different meshes")
    P = CacciopPartition(u.mesh, P.labels)
    T = PiecewiseRigidMotion(P, data["T"]["thetas"], data["T"]["b"])
    return LimitTriple(u, P, T)


# --- individual experiments -------------------------------------------------

def run_cleavage(cfg: ExperimentConfig, out: Path) -> dict:
    c, m = cfg.cleavage, cfg.mesh
    template = {"l": m.l, "nx": m.nx, "ny": m.ny, "eta": m.eta, "density": cfg.density, "M": cfg.M}
    sched = Schedule(c.outer_iterations, c.flip_batch, c.descent_tol, moves=c.moves)
    reports = []
    rows = sweep_cleavage(c.a_grid, c.eps_grid, template, c.mode, sched, reports)
    write_csv(out / "sweep.csv", rows, ("eps", "a"))
    runs = out / "runs"
    runs.mkdir()
    for rep in reports:
        p = rep.problem
        write_json(runs / f"{rep.solver}_eps{p.eps:.3e}_a{p.a:+.4f}.json", rep.to_dict())
    key = "E_candidates" if c.mode != "alternating" else "E_alternating"
    with open(out / "energy_vs_a.dat", "w") as fh:
        fh.write(f"# a eps {key} min(alpha*l*a^2/2,1)\n")
        for r in rows:
            fh.write(f"{r['a']!r} {r['eps']!r} {r[key]!r} {r['formula']!r}\n")
    worst = max(r["discrepancy"] for r in rows)
    return {"rows": len(rows), "max_discrepancy": worst,
            "classes": sorted({r.get("class_candidates", r.get("class_alternating")) for r in rows})}


def _gamma_triples(cfg: ExperimentConfig, rng):
    g = cfg.gamma
    if g.triple:
        return [triple_from_dict(json.loads(Path(g.triple).read_text()))]
    mesh = GridMesh(cfg.mesh.l, cfg.mesh.nx, cfg.mesh.ny)
    return [random_triple(mesh, rng) for _ in range(g.n_triples)]


def run_gamma(cfg: ExperimentConfig, out: Path) -> dict:
    g = cfg.gamma
    rng = np.random.default_rng(cfg.seed)
    W = get_density(cfg.density)
    rate_rows, fit_rows, slice_rows, liminf = [], [], [], []
    for k, t in enumerate(_gamma_triples(cfg, rng)):
        rows, fit = recovery_rate(t, g.eps_grid, W, cfg.M)
        rate_rows += [{"triple": k, **r} for r in rows]
        fit_rows.append({"triple": k, **fit.to_dict()})
        seq = [(e, y, (t.u, t.P, t.T)) for e, y in zip(g.eps_grid, recovery_sequence(t, g.eps_grid, cfg.M))]
        rep = liminf_check(t, seq, W)
        liminf.append({"triple": k, "status": rep.status, "lhs": rep.lhs, "rhs": rep.rhs,
                       "problems": rep.problems})
        for s in g.sigma_grid:
            slice_rows.append({"triple": k, "xi": g.xi, "sigma": s, "measure": slice_measure(t.u, g.xi, s)})
    write_csv(out / "rates.csv", rate_rows, ("triple", "eps"))
    write_csv(out / "rate_fits.csv", fit_rows, ("triple",))
    write_csv(out / "slice_measure.csv", slice_rows, ("triple", "sigma"))
    write_json(out / "liminf.json", liminf)
    return {"triples": len(fit_rows), "min_slope": min(r["slope"] for r in fit_rows),
            "liminf": sorted({r["status"] for r in liminf})}


def run_rigidity(cfg: ExperimentConfig, out: Path) -> dict:
    r = cfg.rigidity
    seq = three_block_sequence(r.eps_grid, r.plan, r.nx, r.ny)
    res, u = coarsest_from_deformations(seq, r.c_star, r.tail)
    write_json(out / "merge_trace.json", res.trace())
    write_interface_csv(out / "interfaces.csv", res.partition)
    mesh = u.mesh
    vals = u.at_centers()
    rows = []
    for block in range(3):
        cells = (mesh.centers[:, 0] > block) & (mesh.centers[:, 0] < block + 1)
        rows.append({"block": block, "component": int(res.partition.labels[cells][0]),
                     "u1_mean": float(vals[cells, 0].mean()), "u2_mean": float(vals[cells, 1].mean())})
    write_csv(out / "blocks.csv", rows, ("block",))
    groups = {}
    for row in rows:
        groups.setdefault(row["component"], []).append(row["block"])
    return {"components": [groups[j] for j in sorted(groups)], "threshold_band": list(res.band)}


def run_loads(cfg: ExperimentConfig, out: Path) -> dict:
    L = cfg.loads
    rng = np.random.default_rng(cfg.seed)
    W = get_density(cfg.density)
    mesh = GridMesh(cfg.mesh.l, cfg.mesh.nx, cfg.mesh.ny)
    tg = random_triple(mesh, rng)
    constraint = LoadConstraint(tg.T, tg.P)
    seq_rows = []
    for e, f in zip(L.eps_grid, recovery_sequence(tg, L.eps_grid, cfg.M)):
        en = energy_loaded(f, e, L.lam, f, W, cfg.M)
        seq_rows.append({"eps": e, "lam": L.lam, "energy": en.total, "load": en.load})
    write_csv(out / "loaded_sequence.csv", seq_rows, ("eps",))
    rows = []
    base = energy_loaded_limit(tg, L.lam, tg.u, constraint, W)
    rows.append({"case": 0, "kind": "g itself", "violation": "", "total": base.total,
                 "projection_distance": base.info["projection_distance"]})
    for k in range(1, L.n_violations + 1):
        m = random_infinitesimal(tg.P, rng)
        shifted = LimitTriple(add_infinitesimal(tg.u, tg.T, m), tg.P, tg.T)
        en = energy_loaded_limit(shifted, L.lam, tg.u, constraint, W)
        rows.append({"case": 2 * k - 1, "kind": "u + grad T m", "violation": "", "total": en.total,
                     "projection_distance": en.info["projection_distance"]})
        bad = _violating_triple(tg, rng, k)
        en = energy_loaded_limit(bad, L.lam, tg.u, constraint, W)
        rows.append({"case": 2 * k, "kind": "constructed violation", "violation": en.info.get("reason", ""),
                     "total": en.total, "projection_distance": ""})
    write_csv(out / "loads.csv", rows, ("case",))
    rejected = sum(1 for r in rows if r["kind"] == "constructed violation" and math.isinf(r["total"]))
    return {"limit_energy_at_g": base.total, "violations_rejected": rejected, "violations": L.n_violations}


def _violating_triple(t: LimitTriple, rng, k: int) -> LimitTriple:
    """Alternately perturb T or replace P by one that P_g is not coarser than."""
    if k % 2 or t.P.n_components == 1:
        th = t.T.thetas.copy()
        th[rng.integers(len(th))] += rng.uniform(0.01, 0.5)
        return LimitTriple(t.u, t.P, PiecewiseRigidMotion(t.P, th, t.T.b))
    P = merge(t.P, [(0, 1)])
    reps = [int(t.P.labels[P.cells(j)[0]]) for j in range(P.n_components)]
    T = PiecewiseRigidMotion(P, t.T.thetas[reps], t.T.b[reps])
    return LimitTriple(t.u, P, T)


def run_partition_demo(cfg: ExperimentConfig, out: Path) -> dict:
    d = cfg.partition_demo
    rng = np.random.default_rng(cfg.seed)
    mesh = GridMesh(cfg.mesh.l, cfg.mesh.nx, cfg.mesh.ny)
    P = grown_partition(mesh, rng, d.n_components)
    total, inner, _ = P.perimeters()
    write_interface_csv(out / "interfaces.csv", P)
    write_csv(out / "components.csv",
              [{"component": j, "area": P.areas[j], "perimeter": total[j], "inner_perimeter": inner[j]}
               for j in range(P.n_components)], ("component",))
    check = local_structure_check(P)
    merged = merge(P, [(0, P.n_components - 1)]) if P.n_components > 1 else P
    write_json(out / "partition.json", {"partition": partition_to_dict(P), "local_structure": check,
                                        "merged_first_last": partition_to_dict(merged)})
    return {"components": P.n_components, "local_structure_ok": check["ok"]}


RUNNERS = {"cleavage": run_cleavage, "gamma": run_gamma, "rigidity": run_rigidity,
           "loads": run_loads, "partition-demo": run_partition_demo}


def manifest(cfg: ExperimentConfig) -> dict:
    W = get_density(cfg.density)
    Q = hessian_q(W)
    alpha, F1 = alpha_and_fa(Q, 1.0)
    return {
        "experiment": cfg.experiment,
        "config": asdict(cfg),
        "density": W.name,
        "Q": np.asarray(Q.coef).tolist(),
        "alpha": alpha,
        "F1": F1.tolist(),
        "seed": cfg.seed,
        "versions": {"gammafrac": __version__, "python": platform.python_version(),
                     "numpy": np.__version__, "scipy": scipy.__version__},
        "created": _dt.datetime.now().isoformat(timespec="seconds"),
    }


def summary_text(man: dict) -> str:
    lines = [f"experiment: {man['experiment']}", f"density: {man['density']} (alpha = {man['alpha']:.6g})",
             f"seed: {man['seed']}"]
    for k, v in sorted(man.get("summary", {}).items()):
        lines.append(f"{k}: {v}")
    lines.append("files: " + ", ".join(man.get("files", [])))
    return "\n".join(lines) + "\n"


def run(cfg: ExperimentConfig, out_root=None) -> Path:
    out = new_run_dir(out_root, cfg.experiment)
    man = manifest(cfg)
    man["summary"] = RUNNERS[cfg.experiment](cfg, out)
    man["files"] = sorted(str(p.relative_to(out)) for p in out.rglob("*") if p.is_file())
    write_json(out / "manifest.json", man)
    (out / "summary.txt").write_text(summary_text(man))
    return out


def report(run_dir) -> str:
    """Regenerate summary.txt of a run directory from its manifest and tables."""
    run_dir = Path(run_dir)
    man = json.loads((run_dir / "manifest.json").read_text())
    man["files"] = sorted(str(p.relative_to(run_dir)) for p in run_dir.rglob("*")
                          if p.is_file() and p.name != "summary.txt")
    text = summary_text(man)
    (run_dir / "summary.txt").write_text(text)
    return text
