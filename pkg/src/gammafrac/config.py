"""Experiment configuration: TOML files parsed into dataclasses.

Schema (all sections optional except the top-level ``experiment`` key)::

    experiment = "cleavage"   # cleavage | gamma | rigidity | loads | partition-demo
    seed = 0
    density = "dist2"         # dist2 | svk
    M = 10.0

    [mesh]       l, nx, ny, eta
    [cleavage]   a_grid, eps_grid, mode, outer_iterations, flip_batch, descent_tol, moves
    [gamma]      eps_grid, xi, sigma_grid, triple (path to a JSON triple), n_triples
    [rigidity]   eps_grid, plan, c_star, tail, nx, ny
    [loads]      eps_grid, lam, n_violations
    [partition-demo]  n_components, blocks
"""
from __future__ import annotations

import math
import re
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path
from typing import Optional

try:
    import tomllib
except ModuleNotFoundError:  # python < 3.11
    import tomli as tomllib

from .density import DEFAULT_M, DENSITIES

EXPERIMENTS = ("cleavage", "gamma", "rigidity", "loads", "partition-demo")


class ConfigError(ValueError):
    def __init__(self, path: str, message: str, line: Optional[int] = None):
        self.path, self.line = path, line
        where = f"{path} (line {line})" if line else path
        super().__init__(f"{where}: {message}")


@dataclass
class MeshConfig:
    l: float = 1.0
    nx: int = 64
    ny: int = 64
    eta: Optional[float] = None


@dataclass
class CleavageConfig:
    a_grid: list = field(default_factory=lambda: [-1.5 + 0.25 * i for i in range(13)])
    eps_grid: list = field(default_factory=lambda: [1e-4])
    mode: str = "candidates"
    outer_iterations: int = 10
    flip_batch: int = 1
    descent_tol: float = 1e-10
    moves: str = "column"


@dataclass
class GammaConfig:
    eps_grid: list = field(default_factory=lambda: [1e-2, 1e-3, 1e-4, 1e-5, 1e-6])
    xi: str = "e1"
    sigma_grid: list = field(default_factory=lambda: [0.0, 0.5, 1.0, 2.0])
    triple: Optional[str] = None
    n_triples: int = 5


@dataclass
class RigidityConfig:
    eps_grid: list = field(default_factory=lambda: [1e-2, 1e-3, 1e-4])
    plan: list = field(default_factory=lambda: [0.6, -0.8])
    c_star: float = 10.0
    tail: int = 3
    nx: int = 48
    ny: int = 16


@dataclass
class LoadsConfig:
    eps_grid: list = field(default_factory=lambda: [1e-2, 1e-3, 1e-4])
    lam: float = 1.0
    n_violations: int = 20


@dataclass
class PartitionDemoConfig:
    n_components: int = 4
    blocks: int = 4


@dataclass
class ExperimentConfig:
    experiment: str
    seed: int = 0
    density: str = "dist2"
    M: float = DEFAULT_M
    mesh: MeshConfig = field(default_factory=MeshConfig)
    cleavage: CleavageConfig = field(default_factory=CleavageConfig)
    gamma: GammaConfig = field(default_factory=GammaConfig)
    rigidity: RigidityConfig = field(default_factory=RigidityConfig)
    loads: LoadsConfig = field(default_factory=LoadsConfig)
    partition_demo: PartitionDemoConfig = field(default_factory=PartitionDemoConfig)

    def to_dict(self) -> dict:
        return asdict(self)


_SECTIONS = {"mesh": MeshConfig, "cleavage": CleavageConfig, "gamma": GammaConfig,
             "rigidity": RigidityConfig, "loads": LoadsConfig, "partition-demo": PartitionDemoConfig}


def _line_of(text: str, path: str) -> Optional[int]:
    """Best-effort line number of a dotted key path in TOML source."""
    if not text:
        return None
    parts = path.split(".")
    key, section = parts[-1], ".".join(parts[:-1])
    lines = text.splitlines()
    start = 0
    if section:
        hdr = re.compile(r"^\s*\[\s*" + re.escape(section) + r"\s*\]")
        for i, ln in enumerate(lines):
            if hdr.match(ln):
                start = i + 1
                break
        else:
            return None
    pat = re.compile(r"^\s*" + re.escape(key) + r"\s*=")
    for i in range(start, len(lines)):
        if section and re.match(r"^\s*\[", lines[i]):
            break
        if pat.match(lines[i]):
            return i + 1
    return None


def _coerce(value, typ, path: str, text: str):
    line = _line_of(text, path)
    t = str(typ)
    if t in ("int", "<class 'int'>"):
        if isinstance(value, bool) or not isinstance(value, int):
            raise ConfigError(path, f"expected an integer, got {value!r}", line)
        return value
    if "float" in t:
        if value is None and "Optional" in t:
            return None
        if isinstance(value, bool) or not isinstance(value, (int, float)):
            raise ConfigError(path, f"expected a number, got {value!r}", line)
        return float(value)
    if "str" in t:
        if value is None and "Optional" in t:
            return None
        if not isinstance(value, str):
            raise ConfigError(path, f"expected a string, got {value!r}", line)
        return value
    if t == "list":
        if not isinstance(value, list):
            raise ConfigError(path, f"expected an array, got {value!r}", line)
        for v in value:
            if isinstance(v, bool) or not isinstance(v, (int, float)):
                raise ConfigError(path, f"array entries must be numbers, got {v!r}", line)
        return [float(v) for v in value]
    return value


def _build(cls, data: dict, prefix: str, text: str):
    known = {f.name: f for f in fields(cls)}
    kwargs = {}
    for key, val in data.items():
        path = f"{prefix}.{key}" if prefix else key
        if key not in known:
            raise ConfigError(path, "unknown key", _line_of(text, path))
        kwargs[key] = _coerce(val, known[key].type, path, text)
    return cls(**kwargs)


def parse_config(data: dict, text: str = "") -> ExperimentConfig:
    data = dict(data)
    if "experiment" not in data:
        raise ConfigError("experiment", "missing required key")
    exp = data.pop("experiment")
    if exp not in EXPERIMENTS:
        raise ConfigError("experiment", f"unknown experiment {exp!r}; choose from {', '.join(EXPERIMENTS)}",
                          _line_of(text, "experiment"))
    kwargs = {"experiment": exp}
    for key in ("seed", "density", "M"):
        if key in data:
            typ = {"seed": "int", "density": "str", "M": "float"}[key]
            kwargs[key] = _coerce(data.pop(key), typ, key, text)
    if kwargs.get("density", "dist2") not in DENSITIES:
        raise ConfigError("density", f"unknown density {kwargs['density']!r}", _line_of(text, "density"))
    for name, cls in _SECTIONS.items():
        if name in data:
            sec = data.pop(name)
            if not isinstance(sec, dict):
                raise ConfigError(name, "expected a table", _line_of(text, name))
            kwargs[name.replace("-", "_")] = _build(cls, sec, name, text)
    for key in data:
        raise ConfigError(key, "unknown key", _line_of(text, key))
    return ExperimentConfig(**kwargs)


def load_config(path) -> ExperimentConfig:
    text = Path(path).read_text()
    try:
        data = tomllib.loads(text)
    except tomllib.TOMLDecodeError as exc:
        raise ConfigError(str(path), f"TOML syntax error: {exc}") from exc
    return parse_config(data, text)


def cleavage_strain_bound(M: float, l: float, eta: float) -> float:
    """Largest |a_eps| keeping the affine boundary data inside the |F|, |y| <= M box."""
    b = math.sqrt(max(M * M - 1.0, 0.0))
    return max(0.0, min(b - 1.0, b / (l + eta) - 1.0))


def lint(cfg: ExperimentConfig) -> list:
    """Semantic problems of a parsed config (empty list when fine)."""
    problems = []

    def check_eps(name, grid):
        if not grid:
            problems.append(f"{name}: empty grid")
            return
        if any(not math.isfinite(e) or e <= 0 for e in grid):
            problems.append(f"{name}: entries must be positive and finite")
        if any(b >= a for a, b in zip(grid, grid[1:])):
            problems.append(f"{name}: must be strictly decreasing")

    m = cfg.mesh
    if m.nx <= 0 or m.ny <= 0 or m.l <= 0:
        problems.append("mesh: l, nx, ny must be positive")
    if cfg.M <= math.sqrt(2):
        problems.append("M: must exceed sqrt(2) so rotations are admissible")
    if cfg.experiment == "cleavage":
        c = cfg.cleavage
        check_eps("cleavage.eps_grid", c.eps_grid)
        if not c.a_grid:
            problems.append("cleavage.a_grid: empty grid")
        if any(not math.isfinite(a) for a in c.a_grid):
            problems.append("cleavage.a_grid: entries must be finite")
        if c.mode not in ("candidates", "alternating", "both"):
            problems.append(f"cleavage.mode: unknown mode {c.mode!r}")
        if c.moves not in ("column", "facet"):
            problems.append(f"cleavage.moves: unknown move type {c.moves!r}")
        if c.a_grid and c.eps_grid and all(math.isfinite(a) for a in c.a_grid) and m.nx > 0:
            eta = m.eta if m.eta is not None else m.l / m.nx
            bound = cleavage_strain_bound(cfg.M, m.l, eta)
            worst = max(abs(a) for a in c.a_grid) * math.sqrt(max(c.eps_grid))
            if worst > bound:
                problems.append(f"cleavage: max |a| sqrt(eps) = {worst:.4g} exceeds the admissible bound "
                                f"{bound:.4g} for M = {cfg.M:g}")
    elif cfg.experiment == "gamma":
        check_eps("gamma.eps_grid", cfg.gamma.eps_grid)
        if len(cfg.gamma.eps_grid) < 3:
            problems.append("gamma.eps_grid: rate fits need at least 3 values")
        if any(s < 0 for s in cfg.gamma.sigma_grid):
            problems.append("gamma.sigma_grid: entries must be nonnegative")
        if cfg.gamma.xi not in ("e1", "e2"):
            problems.append("gamma.xi: must be e1 or e2")
    elif cfg.experiment == "rigidity":
        r = cfg.rigidity
        check_eps("rigidity.eps_grid", r.eps_grid)
        if r.tail < 1 or r.tail > len(r.eps_grid):
            problems.append("rigidity.tail: must be between 1 and the number of eps values")
        if r.nx % 3:
            problems.append("rigidity.nx: must be divisible by 3")
        if len(r.plan) != 2:
            problems.append("rigidity.plan: needs two entries")
    elif cfg.experiment == "loads":
        check_eps("loads.eps_grid", cfg.loads.eps_grid)
        if cfg.loads.lam <= 0:
            problems.append("loads.lam: must be positive")
    elif cfg.experiment == "partition-demo":
        if cfg.partition_demo.n_components < 1 or cfg.partition_demo.blocks < 1:
            problems.append("partition-demo: n_components and blocks must be positive")
    return problems


def validate(path) -> list:
    """Schema check plus lint; returns a list of problem strings."""
    try:
        cfg = load_config(path)
    except (ConfigError, OSError) as exc:
        return [str(exc)]
    return lint(cfg)
