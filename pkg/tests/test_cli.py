import json

import pytest

from hermite_nls import cli
from hermite_nls.reporting import read_csv

TAILS = {"command": "tails", "tails": {
    "profile": {"dim": 2, "max_level": 6, "profile": "cluster-flat", "b": 1.5},
    "trials": 300, "n_K": 10}}


def write_config(tmp_path, cfg, name="cfg.json"):
    p = tmp_path / name
    p.write_text(json.dumps(cfg))
    return str(p)


def run(args, environ=None):
    return cli.main(args, environ={} if environ is None else environ)


def test_selftest_exit_zero(tmp_path):
    assert run(["selftest", "--out", str(tmp_path), "--quiet"]) == 0
    header, rows = read_csv(tmp_path / "selftest.csv")
    assert header == ["check", "ok"] and all(r[1] == "true" for r in rows)


def test_zero_trials_is_config_error(tmp_path, capsys):
    cfg = write_config(tmp_path, {"command": "tails", "tails": {"trials": 0}})
    assert run(["tails", "--config", cfg, "--out", str(tmp_path)]) == 2
    err = json.loads(capsys.readouterr().err)
    assert err["error"] == "config" and "trials" in err["message"]
    assert not (tmp_path / "tail.csv").exists()


def test_unknown_key_rejected(tmp_path):
    cfg = write_config(tmp_path, {"command": "tails", "tails": {"trails": 10}})
    assert run(["tails", "--config", cfg, "--out", str(tmp_path)]) == 2


def test_bad_env_value_rejected(tmp_path):
    assert run(["tails", "--out", str(tmp_path)], {"HNLS_TRIALS": "abc"}) == 2


def test_config_for_other_command_rejected(tmp_path):
    cfg = write_config(tmp_path, {"command": "solve"})
    assert run(["tails", "--config", cfg, "--out", str(tmp_path)]) == 2


def test_identical_runs_are_byte_identical(tmp_path):
    cfg = write_config(tmp_path, TAILS)
    a, b = tmp_path / "a", tmp_path / "b"
    assert run(["tails", "--config", cfg, "--out", str(a), "--seed", "7", "--quiet", "--threads", "1"]) == 0
    assert run(["tails", "--config", cfg, "--out", str(b), "--seed", "7", "--quiet", "--threads", "4"]) == 0
    assert (a / "tail.csv").read_bytes() == (b / "tail.csv").read_bytes()
    assert (a / "tail_summary.json").read_bytes() == (b / "tail_summary.json").read_bytes()
    # run metadata lives in the sidecar only
    side = json.loads((a / "tail.csv.meta.json").read_text())
    assert "created_unix" in side and side["threads"] == 1
    assert "created_unix" not in (a / "tail.csv").read_text()


def test_artifacts_carry_hash_and_seed(tmp_path):
    cfg = write_config(tmp_path, TAILS)
    assert run(["tails", "--config", cfg, "--out", str(tmp_path), "--seed", "11", "--quiet"]) == 0
    first = (tmp_path / "tail.csv").read_text().splitlines()[0]
    assert first.startswith("# config_sha256=") and first.endswith("seed=11")
    summary = json.loads((tmp_path / "tail_summary.json").read_text())
    assert summary["seed"] == 11 and len(summary["config_sha256"]) == 64


def test_different_seed_changes_output(tmp_path):
    cfg = write_config(tmp_path, TAILS)
    run(["tails", "--config", cfg, "--out", str(tmp_path / "a"), "--seed", "1", "--quiet"])
    run(["tails", "--config", cfg, "--out", str(tmp_path / "b"), "--seed", "2", "--quiet"])
    assert read_csv(tmp_path / "a" / "tail.csv")[1] != read_csv(tmp_path / "b" / "tail.csv")[1]


def test_precedence_flag_env_config():
    env = {"HNLS_SEED": "5", "HNLS_TRIALS": "40"}
    cfg = cli.resolve_config("tails", None, {"seed": 9}, env)
    assert cfg["seed"] == 9
    assert cfg["tails"]["trials"] == 40
    cfg = cli.resolve_config("tails", None, {"trials": 12}, env)
    assert cfg["seed"] == 5 and cfg["tails"]["trials"] == 12


def test_config_below_env(tmp_path):
    path = write_config(tmp_path, {"command": "khinchin", "seed": 3, "khinchin": {"law": "uniform"}})
    cfg = cli.resolve_config("khinchin", path, {}, {"HNLS_LAW": "rademacher"})
    assert cfg["seed"] == 3 and cfg["khinchin"]["law"] == "rademacher"
    assert cli.resolve_config("khinchin", path, {}, {})["khinchin"]["law"] == "uniform"


def test_defaults_filled():
    cfg = cli.resolve_config("tails", None, {}, {})
    assert cfg["seed"] == 0 and cfg["tails"]["trials"] == 10_000 and cfg["threads"] >= 1


def test_hash_ignores_thread_count():
    a = cli.resolve_config("tails", None, {"threads": 1}, {})
    b = cli.resolve_config("tails", None, {"threads": 8, "out": "elsewhere"}, {})
    assert cli.Run(a).hash == cli.Run(b).hash
    c = cli.resolve_config("tails", None, {"seed": 1}, {})
    assert cli.Run(c).hash != cli.Run(a).hash


def test_law_flag_not_for_solve(tmp_path):
    assert run(["solve", "--law", "gaussian", "--out", str(tmp_path)]) == 2


def test_dimension_mismatch_is_config_error(tmp_path, capsys):
    cfg = write_config(tmp_path, {"command": "solve", "solve": {
        "dim": 3, "initial": {"dim": 2, "max_level": 2, "profile": "power", "a": 1}}})
    assert run(["solve", "--config", cfg, "--out", str(tmp_path)]) == 2
    assert json.loads(capsys.readouterr().err)["type"] == "ConfigError"


def test_compute_error_exit_one(tmp_path, capsys):
    # a horizon shorter than one window fails inside the computation
    cfg = write_config(tmp_path, {"command": "globalize", "globalize": {
        "N": [8], "A": 0.01, "trials": 1, "max_level": 6}})
    assert run(["globalize", "--config", cfg, "--out", str(tmp_path), "--quiet"]) == 1
    err = json.loads(capsys.readouterr().err)
    assert err["error"] == "compute" and err["type"] == "ValueError"


def test_solve_writes_trajectory(tmp_path):
    cfg = write_config(tmp_path, {"command": "solve", "solve": {
        "t_final": 0.05, "dt": 0.01, "max_level": 6,
        "initial": {"dim": 2, "profile": [0.5, 0.2, [0, 0.1]]}}})
    assert run(["solve", "--config", cfg, "--out", str(tmp_path), "--quiet"]) == 0
    header, rows = read_csv(tmp_path / "trajectory.csv")
    assert header[:3] == ["t", "mass", "energy"] and len(rows) == 6
    summary = json.loads((tmp_path / "solve_summary.json").read_text())
    assert summary["mass_drift"] < 1e-7  # projection onto the level cap loses a little mass


@pytest.mark.parametrize("command, block", [
    ("spectral", {"n_lam": 4, "lam_max": 40, "increment_samples": 3, "r": [2]}),
    ("khinchin", {"trials": 200, "profiles": 2, "k": [2, 4]}),
    ("lens", {"max_level": 6, "dts": [0.02, 0.01], "s_max": 0.1, "n_points": 64,
              "initial": {"dim": 2, "profile": [0.3, 0.1]}}),
    ("globalize", {"N": [4], "trials": 1, "max_level": 8}),
])
def test_subcommands_run(tmp_path, command, block):
    cfg = write_config(tmp_path, {"command": command, command: block})
    assert run([command, "--config", cfg, "--out", str(tmp_path), "--quiet"]) == 0
    assert any(tmp_path.glob("*.csv"))
    for p in tmp_path.glob("*.csv"):
        assert (tmp_path / (p.name + ".meta.json")).exists()
