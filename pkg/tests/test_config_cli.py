import json

import pytest

from gammafrac.cli import main, parse_grid
from gammafrac.config import ConfigError, ExperimentConfig, lint, load_config, parse_config, validate
from gammafrac.experiments import triple_from_dict, triple_to_dict
from gammafrac.mesh import GridMesh
from gammafrac.samplers import random_triple

CLEAVAGE = """experiment = "cleavage"
seed = 1

[mesh]
nx = 8
ny = 8

[cleavage]
a_grid = [-1.5, 0.0, 0.5, 1.5]
eps_grid = [1e-4]
"""


def _write(tmp_path, text, name="c.toml"):
    p = tmp_path / name
    p.write_text(text)
    return p


def test_valid_config_parses(tmp_path):
    cfg = load_config(_write(tmp_path, CLEAVAGE))
    assert cfg.experiment == "cleavage" and cfg.mesh.nx == 8 and cfg.seed == 1
    assert cfg.cleavage.a_grid == [-1.5, 0.0, 0.5, 1.5]
    assert validate(_write(tmp_path, CLEAVAGE)) == []


def test_eps_grid_with_zero_flagged(tmp_path):
    bad = CLEAVAGE.replace("eps_grid = [1e-4]", "eps_grid = [1e-3, 0.0]")
    assert any("eps_grid" in p for p in validate(_write(tmp_path, bad)))
    inc = CLEAVAGE.replace("eps_grid = [1e-4]", "eps_grid = [1e-4, 1e-3]")
    assert any("decreasing" in p for p in validate(_write(tmp_path, inc)))


def test_box_bound_flagged(tmp_path):
    bad = CLEAVAGE.replace("a_grid = [-1.5, 0.0, 0.5, 1.5]", "a_grid = [500.0]").replace(
        "eps_grid = [1e-4]", "eps_grid = [1e-1]")
    problems = validate(_write(tmp_path, bad))
    assert any("admissible bound" in p for p in problems)


def test_unknown_key_reports_line(tmp_path):
    bad = CLEAVAGE.replace("ny = 8", "ny = 8\nnz = 3")
    with pytest.raises(ConfigError) as exc:
        load_config(_write(tmp_path, bad))
    assert exc.value.line == 7 and "nz" in str(exc.value)


def test_type_and_experiment_errors():
    with pytest.raises(ConfigError):
        parse_config({"experiment": "nope"})
    with pytest.raises(ConfigError):
        parse_config({"experiment": "cleavage", "mesh": {"nx": "ten"}})
    with pytest.raises(ConfigError):
        parse_config({"seed": 1})
    assert lint(ExperimentConfig("gamma")) == []


def test_parse_grid():
    assert parse_grid("0:1:0.25") == [0.0, 0.25, 0.5, 0.75, 1.0]
    assert parse_grid("1e-2,1e-3") == [1e-2, 1e-3]


def test_triple_roundtrip(rng):
    t = random_triple(GridMesh(1.0, 4, 4), rng)
    t2 = triple_from_dict(json.loads(json.dumps(triple_to_dict(t))))
    assert (t2.u.F == t.u.F).all() and (t2.u.open == t.u.open).all()
    assert t2.P.same_as(t.P) and (t2.T.b == t.T.b).all()


def _run(tmp_path, cfg_path, out, capsys):
    assert main(["run", str(cfg_path), "--out", str(out)]) == 0
    return capsys.readouterr().out.strip().splitlines()[-1]


def test_cli_run_cleavage_and_determinism(tmp_path, capsys):
    cfg = _write(tmp_path, CLEAVAGE)
    d1 = _run(tmp_path, cfg, tmp_path / "out", capsys)
    d2 = _run(tmp_path, cfg, tmp_path / "out", capsys)
    assert d1 != d2
    from pathlib import Path
    d1, d2 = Path(d1), Path(d2)
    for name in ("sweep.csv", "manifest.json", "energy_vs_a.dat"):
        assert (d1 / name).exists()
    assert (d1 / "sweep.csv").read_bytes() == (d2 / "sweep.csv").read_bytes()
    man = json.loads((d1 / "manifest.json").read_text())
    assert man["config"]["experiment"] == "cleavage" and "alpha" in man
    assert main(["report", str(d1)]) == 0
    assert "cleavage" in capsys.readouterr().out


def test_cli_validate_exit_codes(tmp_path, capsys):
    assert main(["validate", str(_write(tmp_path, CLEAVAGE))]) == 0
    bad = _write(tmp_path, CLEAVAGE.replace("eps_grid = [1e-4]", "eps_grid = [0.0]"), "bad.toml")
    assert main(["validate", str(bad)]) == 1
    assert main(["run", str(bad), "--out", str(tmp_path)]) == 2


def test_cli_gamma_and_cleavage_subcommands(tmp_path, capsys):
    from pathlib import Path
    assert main(["gamma", "--nx", "6", "--ny", "6", "--n-triples", "2", "--eps-grid", "1e-2,1e-3,1e-4",
                 "--out", str(tmp_path)]) == 0
    d = Path(capsys.readouterr().out.strip().splitlines()[-1])
    for name in ("rates.csv", "rate_fits.csv", "slice_measure.csv", "liminf.json"):
        assert (d / name).exists()
    assert main(["cleavage", "--nx", "8", "--ny", "8", "--a-grid", "0,2", "--out", str(tmp_path)]) == 0
    d = Path(capsys.readouterr().out.strip().splitlines()[-1])
    assert (d / "sweep.csv").read_text().count("\n") == 3


@pytest.mark.parametrize("exp", ["rigidity", "loads", "partition-demo"])
def test_other_experiments_run(tmp_path, capsys, exp):
    text = f'experiment = "{exp}"\n[mesh]\nnx = 6\nny = 6\n'
    assert main(["run", str(_write(tmp_path, text)), "--out", str(tmp_path)]) == 0
