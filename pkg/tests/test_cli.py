import csv
import json
import subprocess
import sys
from pathlib import Path

import pytest

from cutocp.cli import ConfigError, ExperimentKind, config_from_dict, load_config, main
from cutocp.fem import Penalties
from cutocp.qmc import EMBEDDED_Z

CONFIGS = Path(__file__).resolve().parents[1] / "configs"


def write(tmp_path, text, name="cfg.toml"):
    p = tmp_path / name
    p.write_text(text)
    return p


def read_csv(path):
    with open(path) as fh:
        return list(csv.DictReader(fh))


# ---- config parsing ---------------------------------------------------------------

def test_defaults():
    cfg = config_from_dict({"experiment": "converge"})
    assert cfg.kind is ExperimentKind.CONVERGE
    assert cfg.penalties == Penalties(10.0, 0.0, 0.1)
    assert cfg.alpha == 0.1 and cfg.z == EMBEDDED_Z and cfg.q == 16


def test_sampler_range_and_override_kind():
    cfg = config_from_dict({"experiment": "converge", "sampler": {"m_min": 2, "m_max": 4}},
                           ExperimentKind.QMC_RANDOMIZED)
    assert cfg.kind is ExperimentKind.QMC_RANDOMIZED and cfg.N == [4, 8, 16]


@pytest.mark.parametrize("raw", [
    {},
    {"experiment": "nope"},
    {"experiment": "precond", "control": {"alpha": 0.0}},
    {"experiment": "precond", "control": {"alpha": "abc"}},
    {"experiment": "precond", "penalties": {"gamma_D": -1.0}},
    {"experiment": "precond", "mesh": {"levels": [2, 1]}},
    {"experiment": "precond", "geometry": {"kind": "square"}},
    {"experiment": "qmc-randomized", "sampler": {"q": 0}},
    {"experiment": "qmc-randomized", "sampler": {"N": [0, 4]}},
])
def test_invalid_configs(raw):
    with pytest.raises(ConfigError):
        config_from_dict(raw)


@pytest.mark.parametrize("path", sorted(CONFIGS.glob("*.toml")), ids=lambda p: p.stem)
def test_shipped_configs_parse(path):
    cfg = load_config(path)
    assert cfg.output.startswith("results/")


def test_missing_and_broken_config_exit_2(tmp_path, capsys):
    assert main(["precond", "-c", str(tmp_path / "missing.toml")]) == 2
    bad = write(tmp_path, "experiment = [")
    assert main(["precond", "-c", str(bad)]) == 2
    neg = write(tmp_path, "[control]\nalpha = -1\n", "neg.toml")
    assert main(["converge", "-c", str(neg)]) == 2
    assert "error" in capsys.readouterr().err


def test_gasket_converge_is_rejected(tmp_path):
    p = write(tmp_path, '[geometry]\nkind = "gasket"\n')
    assert main(["converge", "-c", str(p), "-o", str(tmp_path / "o")]) == 2


# ---- runs ---------------------------------------------------------------------------

def test_converge_small(tmp_path):
    p = write(tmp_path, "[mesh]\nn0 = 8\nlevels = [0, 1, 2]\n")
    out = tmp_path / "out"
    assert main(["converge", "-c", str(p), "-o", str(out)]) == 0
    rows = read_csv(out / "converge.csv")
    assert [r["level"] for r in rows] == ["0", "1", "2", "mean"]
    assert rows[0]["eoc_y_L2"] == "" and 1.5 < float(rows[2]["eoc_y_L2"]) < 2.5
    runs = json.loads((out / "converge_runs.json").read_text())
    assert [r["preconditioner"] for r in runs] == ["direct", "multigrid", "multigrid"]


def test_single_level_converge_has_no_eoc(tmp_path):
    p = write(tmp_path, "[mesh]\nn0 = 8\nlevels = [0]\n")
    out = tmp_path / "out"
    assert main(["converge", "-c", str(p), "-o", str(out)]) == 0
    rows = read_csv(out / "converge.csv")
    assert rows[-1]["level"] == "mean" and rows[-1]["eoc_y_L2"] == ""


def test_precond_small(tmp_path):
    p = write(tmp_path, "[mesh]\nn0 = 8\nlevels = [1]\n[precond]\nlanczos_steps = 100\n")
    out = tmp_path / "out"
    assert main(["precond", "-c", str(p), "-o", str(out)]) == 0
    rows = read_csv(out / "precond.csv")
    assert [r["preconditioner"] for r in rows] == ["identity", "jacobi", "sgs", "multigrid"]
    kap = [float(r["kappa"]) for r in rows]
    assert kap[3] < kap[2] < kap[1] < kap[0]


def test_qmc_analytic(tmp_path):
    p = write(tmp_path, 'experiment = "qmc-deterministic"\n[sampler]\nintegrand = "analytic"\n'
                        "m_min = 1\nm_max = 6\nmc_seeds = 3\n")
    out = tmp_path / "out"
    assert main(["qmc-deterministic", "-c", str(p), "-o", str(out)]) == 0
    rows = read_csv(out / "qmc_analytic.csv")
    assert [int(r["N"]) for r in rows] == [2, 4, 8, 16, 32, 64]


def test_qmc_control_tiny(tmp_path):
    p = write(tmp_path, '[sampler]\nN = [1, 2]\nmesh = [19, 16]\n')
    out = tmp_path / "out"
    assert main(["qmc-deterministic", "-c", str(p), "-o", str(out)]) == 0
    rows = read_csv(out / "qmc_deterministic.csv")
    assert len(rows) == 2 * 2 * 4
    assert {r["sampler"] for r in rows} == {"lattice", "mc"}


def test_randomized_reproducible_and_seed_override(tmp_path):
    p = write(tmp_path, '[sampler]\nintegrand = "analytic"\nN = [4, 16]\nq = 4\n')
    outs = []
    for name, extra in (("a", []), ("b", []), ("c", ["--seed", "7"])):
        out = tmp_path / name
        assert main(["qmc-randomized", "-c", str(p), "-o", str(out)] + extra) == 0
        outs.append((out / "qmc_randomized.csv").read_bytes())
    assert outs[0] == outs[1]
    assert outs[0] != outs[2]
    rows = read_csv(tmp_path / "a" / "qmc_randomized.csv")
    assert all(float(r["rms"]) > 0 for r in rows)


def test_geometry_dump_with_fields(tmp_path):
    p = write(tmp_path, "[mesh]\nn0 = 10\n[dump]\nfields = true\n")
    out = tmp_path / "out"
    assert main(["geometry-dump", "-c", str(p), "-o", str(out)]) == 0
    names = sorted(f.name for f in out.iterdir())
    assert names == ["classes.txt", "fields.txt", "interface.txt", "mesh.txt"]
    head = (out / "interface.txt").read_text().splitlines()[0]
    assert head == "# curve 0 closed=1"
    classes = (out / "classes.txt").read_text().split()
    assert "CUT" in classes and "INSIDE" in classes


def test_console_entry_point_help():
    res = subprocess.run([sys.executable, "-m", "cutocp.cli", "--help"], capture_output=True, text=True)
    assert res.returncode == 0 and "qmc-randomized" in res.stdout
