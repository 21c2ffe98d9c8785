import math
import warnings

import pytest

from stgmsfem import cli
from stgmsfem.config import ConfigError, ExperimentConfig, load, parse
from stgmsfem.diagnostics import ErrorReport
from stgmsfem.experiments import run_correlation_study

TOY = """
# toy problem
n_coarse = 4
fine_per_coarse = 4
t_end = 1.0
steps_per_slab = 4
contrast = 1e4
L = 2
p_bf = 3
L_list = 1,2,3
sweeps = 1
"""


def test_defaults_follow_reference_setup():
    cfg = ExperimentConfig()
    assert (cfg.n_coarse, cfg.fine_per_coarse, cfg.t_end) == (10, 10, 1.6)
    assert (cfg.n_slabs, cfg.steps_per_slab, cfg.p_bf) == (2, 8, 8)
    assert cfg.layers == 10 and cfg.lateral_data == "iid"


def test_echo_roundtrip():
    cfg = parse(TOY).replace(theta=0.7, full_snapshots=True)
    again = parse("\n".join(cfg.echo()))
    assert again == cfg
    assert again.digest() == cfg.digest()


def test_unknown_key_is_an_error():
    with pytest.raises(ConfigError, match="unknown key"):
        parse("n_corse = 4")


@pytest.mark.parametrize("text", ["L = two", "theta = 2", "field = marble", "p_bf",
                                  "L = 3\nL = 4", "full_snapshots = maybe"])
def test_bad_values(text):
    with pytest.raises(ConfigError):
        parse(text)


def test_missing_file(tmp_path):
    with pytest.raises(ConfigError):
        load(tmp_path / "nope.cfg")


def test_correlation_degenerate_is_nan():
    reps = [ErrorReport(L, 8, 81 * L, 0.1, 0.5, 0.5, 2.0) for L in (6, 10, 20)]
    with pytest.warns(RuntimeWarning):
        study = run_correlation_study(reps)
    assert math.isnan(study.corr)


def test_correlation_two_points_is_exact():
    reps = [ErrorReport(6, 8, 486, 0.1, 0.1, 0.6, 0.5), ErrorReport(10, 8, 810, 0.1, 0.1, 0.5, 1.0)]
    assert abs(run_correlation_study(reps).corr) == 1.0


@pytest.fixture()
def toy_cfg(tmp_path):
    p = tmp_path / "toy.cfg"
    p.write_text(TOY)
    return p


def test_exit_code_for_config_error(tmp_path, capsys):
    bad = tmp_path / "bad.cfg"
    bad.write_text("colour = blue\n")
    assert cli.main(["solve-fine", "--config", str(bad), "--out", str(tmp_path)]) == 2
    assert "unknown key" in capsys.readouterr().err


def test_exit_code_for_numerical_failure(tmp_path, toy_cfg, monkeypatch):
    from stgmsfem.fem import SolverError

    def boom(*a, **k):
        raise SolverError("slab 1: singular system")
    monkeypatch.setattr("stgmsfem.experiments.build_problem", boom)
    assert cli.main(["solve-fine", "--config", str(toy_cfg), "--out", str(tmp_path)]) == 3


def test_outputs_are_byte_identical(tmp_path, toy_cfg):
    outs = []
    for run, threads in ((1, "2"), (2, "2"), (3, "1")):
        out = tmp_path / f"run{run}"
        for cmd in ("table-offline", "solve-online"):
            assert cli.main([cmd, "--config", str(toy_cfg), "--out", str(out), "--seed", "5",
                             "--threads", threads]) == 0
        outs.append({p.name: p.read_bytes() for p in sorted(out.iterdir())})
    assert outs[0] == outs[1] == outs[2]
    text = outs[0]["offline_table_L.csv"].decode()
    assert text.startswith("# stgmsfem ")
    assert "# seed = 5" in text and "# generator_id = " in text
    rows = [ln for ln in text.splitlines() if not ln.startswith("#")]
    assert rows[0] == "L,p_bf,dim_off,snapshot_ratio,e1,e2,inv_lambda_star"
    assert [r.split(",")[2] for r in rows[1:]] == ["9", "18", "27"]


def test_every_subcommand_runs(tmp_path, toy_cfg):
    for cmd in cli.COMMANDS:
        with warnings.catch_warnings():
            warnings.simplefilter("ignore")
            assert cli.main([cmd, "--config", str(toy_cfg), "--out", str(tmp_path)]) == 0
    names = {p.name for p in tmp_path.iterdir()}
    assert {"fine_slab1.csv", "offline.csv", "online_history.csv", "online_table_e1.csv",
            "corr_study.csv", "field.csv", "offline_table_L.csv"} <= names
