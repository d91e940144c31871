import json
import math

import numpy as np
import pytest

from spherelkc import __version__
from spherelkc.cli import main, run
from spherelkc.config import ConfigError, RunConfig, parse_config
from spherelkc.simsphere import read_binary

BASE = """
[run]
levels = 0, 1, 2, 3, 4
seed = 7
replicates = 50
grid = 16, 33

[window]
B = 2
j = 2

[kernel]
L_K = 4
"""


def write_cfg(tmp_path, text=BASE):
    p = tmp_path / "run.ini"
    p.write_text(text)
    return str(p)


def read_csv(path):
    lines = open(path, encoding="utf-8").read().split("\n")
    assert lines[0].startswith(f"# spherelkc {__version__} config_hash=")
    return lines[1].split(","), [ln.split(",") for ln in lines[2:] if ln]


def test_config_round_trip_and_hash():
    cfg = parse_config(BASE)
    again = parse_config(cfg.to_text())
    assert again == cfg and again.hash() == cfg.hash()
    assert cfg.levels == (0.0, 1.0, 2.0, 3.0, 4.0) and cfg.grid == (16, 33)
    # formatting does not matter, content does
    assert parse_config(BASE.replace("B = 2", "B=2.0")).hash() == cfg.hash()
    assert parse_config(BASE.replace("seed = 7", "seed = 8")).hash() != cfg.hash()
    assert RunConfig().hash() == "5d2ce07c081c8d88"


def test_config_rejects_unknown_and_bad_values():
    with pytest.raises(ConfigError, match="unknown key"):
        parse_config(BASE + "colour = red\n")
    with pytest.raises(ConfigError, match="unknown section"):
        parse_config("[plot]\nx = 1\n")
    with pytest.raises(ConfigError):
        parse_config("[field]\nq = two\n")
    with pytest.raises(ConfigError):
        parse_config("[run]\ncommand = plot\n")
    with pytest.raises(ConfigError):
        parse_config("[kernel]\nL_K = 2\nkappa = 1, 1\n")
    with pytest.raises(ConfigError):
        parse_config("[spectrum]\nmodel = tabulated\n")
    assert parse_config("[kernel]\nL_K = 2\nkappa = 0, 1, 0.5\n").kernel().kappa == (0.0, 1.0, 0.5)


def test_lkc_theory(tmp_path):
    cfg = write_cfg(tmp_path)
    assert main(["lkc-theory", "--config", cfg, "--output", str(tmp_path / "o")]) == 0
    header, rows = read_csv(tmp_path / "o" / "lkc-theory.csv")
    assert header == ["u", "l0", "l1", "l2", "len", "exc_prob"]
    assert len(rows) == 5
    for r in rows:
        vals = [float(v) for v in r]
        assert vals[4] == pytest.approx(2 * vals[2])
        assert vals[5] == pytest.approx(vals[1], rel=1e-12)
    assert float(rows[0][3]) == pytest.approx(2 * math.pi)
    man = (tmp_path / "o" / "manifest.txt").read_text()
    assert "[manifest]" in man and f"version = {__version__}" in man


def test_spectra_cross_checks(tmp_path):
    out = tmp_path / "s"
    assert main(["spectra", "--config", write_cfg(tmp_path), "--output", str(out)]) == 0
    header, rows = read_csv(out / "spectra.csv")
    assert header == ["ell", "C_ell", "b2", "kappa2", "C_ell_jq"]
    man = dict(
        ln.split(" = ", 1) for ln in (out / "manifest.txt").read_text().split("[manifest]")[1].strip().split("\n")
    )
    assert float(man["sum_beta_variance"]) == pytest.approx(float(man["beta_variance"]), rel=1e-12)
    assert float(man["sum_transformed_variance"]) == pytest.approx(float(man["transformed_variance"]), rel=1e-12)


def test_mc_validate_deterministic_and_rerunnable(tmp_path):
    cfg = write_cfg(tmp_path)
    a, b = tmp_path / "a", tmp_path / "b"
    assert main(["mc-validate", "--config", cfg, "--output", str(a)]) == 0
    assert main(["mc-validate", "--config", cfg, "--output", str(b), "--workers", "2"]) == 0
    assert (a / "mc-validate.csv").read_bytes() == (b / "mc-validate.csv").read_bytes()
    c = tmp_path / "c"
    assert main(["mc-validate", "--config", str(a / "manifest.txt"), "--output", str(c)]) == 0
    assert (c / "mc-validate.csv").read_bytes() == (a / "mc-validate.csv").read_bytes()
    header, rows = read_csv(a / "mc-validate.csv")
    assert header == ["level", "stat", "mc_mean", "mc_se", "theory", "z"]


def test_mc_sup_and_simulate(tmp_path):
    cfg = write_cfg(tmp_path)
    assert main(["mc-sup", "--config", cfg, "--output", str(tmp_path / "p")]) == 0
    _, rows = read_csv(tmp_path / "p" / "mc-sup.csv")
    assert {r[1] for r in rows} == {"g.sup_prob", "g.sup_prob_grid", "f.sup_prob", "diff.sup_prob"}
    assert main(["simulate", "--config", cfg, "--output", str(tmp_path / "f")]) == 0
    fld = read_binary(tmp_path / "f" / "field.bin")
    assert fld.values.shape == (16, 33) and np.all(np.isfinite(fld.values))
    header, rows = read_csv(tmp_path / "f" / "simulate.csv")
    assert header == ["u", "area", "boundary_length", "euler_char", "sup"]


def test_cum4_command(tmp_path):
    text = BASE.replace("replicates = 50", "replicates = 200\nj_list = 1, 2, 3")
    assert main(["cum4", "--config", write_cfg(tmp_path, text), "--output", str(tmp_path / "k")]) == 0
    man = (tmp_path / "k" / "manifest.txt").read_text()
    assert "slope_per_logB" in man and "warning_0" in man


@pytest.mark.parametrize(
    "extra,code,kind",
    [
        ("[field]\nbogus = 1\n", 2, "invalid_config"),
        ("[field]\nq = 7\n", 4, "unsupported_order"),
    ],
)
def test_error_records(tmp_path, capsys, extra, code, kind):
    out = tmp_path / "e"
    assert main(["lkc-theory", "--config", write_cfg(tmp_path, BASE + extra), "--output", str(out)]) == code
    rec = json.loads((out / "error.json").read_text())
    assert rec["error"] == kind and rec["exit_code"] == code
    assert json.loads(capsys.readouterr().err) == rec


def test_under_resolved_grid(tmp_path):
    text = BASE.replace("grid = 16, 33", "grid = 4, 9")
    out = tmp_path / "e"
    assert main(["simulate", "--config", write_cfg(tmp_path, text), "--output", str(out)]) == 3
    assert json.loads((out / "error.json").read_text())["error"] == "under_resolved_grid"


def test_missing_config_file(tmp_path):
    assert main(["spectra", "--config", str(tmp_path / "nope.ini"), "--output", str(tmp_path / "x")]) == 2


def test_run_returns_paths(tmp_path):
    cfg = parse_config(BASE, output=str(tmp_path / "r")).with_command("lkc-theory")
    csv_path, man_path = run(cfg)
    assert csv_path.endswith("lkc-theory.csv") and man_path.endswith("manifest.txt")
