import json

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from plaquette_circuits.circuit import CircuitConfig, run, trajectory_seed
from plaquette_circuits.cli import main
from plaquette_circuits.config import KINDS, parse_config
from plaquette_circuits.errors import ConfigError
from plaquette_circuits.experiments import PlotManifest, run_experiment, sweep

GOLDEN_HEADERS = {
    "circuit": "t,S_half,S_quarter,N_X,N_Z,PE_Z,PE_X",
    "trace": "t,epsilon",
    "mipt-sweep": "p,L,T,S2_half_mean,S2_half_stderr,n",
    "support-stats": "p,extensive_fraction_mean,extensive_fraction_stderr,n",
    "finite-beta-sweep": "beta,S2_nats_mean,S2_nats_stderr,n",
}


# --- config parsing ------------------------------------------------------------------


def test_unknown_key_is_named():
    with pytest.raises(ConfigError, match=r"renyi-classical\.Lx"):
        parse_config("kind = renyi-classical\nLx = 4\n")


@pytest.mark.parametrize("text", [
    "L = 4\n",
    "kind = nope\n",
    "kind = renyi-classical\nL = 4\nL = 5\n",
    "kind = renyi-classical\nL four\n",
    "kind = renyi-classical\nL = four\n",
    "kind = renyi-classical\np = 1.5\n",
    "kind = renyi-classical\nmethod = magic\n",
    "kind = mipt-sweep\np_grid =\n",
    "kind = renyi-classical\nensemble = 0\n",
])
def test_invalid_configs(text):
    with pytest.raises(ConfigError):
        parse_config(text)


def test_comments_and_overrides():
    cfg = parse_config("# sweep\nkind = mipt-sweep  # kind\nL_grid = 4,6,8\n", {"seed": "7"})
    assert cfg.params["L_grid"] == (4, 6, 8) and cfg.seed == 7


@given(st.sampled_from(sorted(KINDS)), st.integers(0, 2**40), st.integers(1, 50))
@settings(max_examples=40, deadline=None)
def test_echo_round_trip(kind, seed, ensemble):
    cfg = parse_config(f"kind = {kind}\nseed = {seed}\nensemble = {ensemble}\n")
    assert parse_config(cfg.to_text()) == cfg
    assert cfg.replace(seed=seed + 1).seed == seed + 1


# --- experiments ---------------------------------------------------------------------


def _cfg(kind, tmp_path, **extra):
    lines = [f"kind = {kind}", f"output_dir = {tmp_path / kind}"] + [f"{k} = {v}" for k, v in extra.items()]
    return parse_config("\n".join(lines) + "\n")


def test_circuit_experiment_artifacts(tmp_path):
    cfg = _cfg("circuit-trajectory", tmp_path, L=12, t_max=60, ensemble=3, seed=5, record="log:20")
    out = run_experiment(cfg)
    man = json.loads((out / "manifest.json").read_text())
    assert all((out / e["file"]).exists() for e in man["plots"])
    assert parse_config((out / "config.txt").read_text()) == cfg
    assert (out / "trajectory_mean.csv").read_text().splitlines()[0] == GOLDEN_HEADERS["circuit"]
    # any single member can be reproduced alone
    rec, _ = run(CircuitConfig(12, 60, 0.1, "x", seed=trajectory_seed(5, 2), record="log:20"))
    assert (out / "trajectory_002.csv").read_text() == rec.to_csv()
    summary = json.loads((out / "summary.json").read_text())
    assert summary["pe_bound_violations"] == 0


def test_experiments_are_deterministic(tmp_path):
    a = run_experiment(_cfg("mipt-sweep", tmp_path / "a", L_grid="6,8,10", ensemble=3))
    b = run_experiment(_cfg("mipt-sweep", tmp_path / "b", L_grid="6,8,10", ensemble=3))
    assert (a / "summary.csv").read_text() == (b / "summary.csv").read_text()
    assert (a / "summary.csv").read_text().splitlines()[0] == GOLDEN_HEADERS["mipt-sweep"]


def test_worker_pool_matches_serial(tmp_path, monkeypatch):
    serial = run_experiment(_cfg("support-stats", tmp_path / "s", L=8, T=12, ensemble=4))
    monkeypatch.setenv("PLAQUETTE_WORKERS", "2")
    pooled = run_experiment(_cfg("support-stats", tmp_path / "p", L=8, T=12, ensemble=4))
    assert (serial / "summary.csv").read_text() == (pooled / "summary.csv").read_text()
    monkeypatch.setenv("PLAQUETTE_WORKERS", "many")
    with pytest.raises(ConfigError):
        run_experiment(_cfg("support-stats", tmp_path / "x", L=8, T=12))


def test_renyi_and_kw_experiments(tmp_path):
    out = run_experiment(_cfg("renyi-classical", tmp_path, ensemble=3))
    assert json.loads((out / "summary.json").read_text())["methods_agree"] is True
    out = run_experiment(_cfg("kw-check", tmp_path, ensemble=3, replicas=2, T=3))
    assert json.loads((out / "summary.json").read_text())["max_residual"] < 1e-10


def test_finite_beta_sweep_headers(tmp_path):
    path = sweep(_cfg("finite-beta-sweep", tmp_path, L=4, T=4, ensemble=2))
    assert path.read_text().splitlines()[0] == GOLDEN_HEADERS["finite-beta-sweep"]


def test_single_point_sweep_equals_run(tmp_path):
    cfg = _cfg("support-stats", tmp_path / "one", L=8, T=12, p_grid="0.2", ensemble=2)
    path = sweep(cfg)
    again = run_experiment(cfg, tmp_path / "again")
    assert path.read_text() == (again / "summary.csv").read_text()
    assert path.read_text().splitlines()[0] == GOLDEN_HEADERS["support-stats"]
    with pytest.raises(ConfigError):
        sweep(_cfg("renyi-classical", tmp_path))


def test_manifest_rejects_missing_files(tmp_path):
    man = PlotManifest()
    man.add(file="missing.csv", x="t", y="S_half")
    with pytest.raises(FileNotFoundError):
        man.write(tmp_path)


# --- CLI -----------------------------------------------------------------------------


def test_cli_circuit_and_sidecar(tmp_path):
    out = tmp_path / "c.csv"
    assert main(["circuit", "--L", "8", "--t-max", "20", "--p", "0.1", "--out", str(out)]) == 0
    assert out.read_text().splitlines()[0] == GOLDEN_HEADERS["circuit"]
    meta = json.loads((tmp_path / "c.csv.meta.json").read_text())
    assert meta["L"] == 8 and meta["pe_bound_violations"] == 0


def test_cli_renyi_json(tmp_path, capsys):
    assert main(["renyi", "--L", "6", "--T", "6", "--p", "0.2", "--seed", "3"]) == 0
    rep = json.loads(capsys.readouterr().out)
    assert rep["methods_agree"] and rep["S2"] == 2 * rep["k2"] - rep["k4"]


def test_cli_renyi_from_grid_file(tmp_path, capsys):
    from plaquette_circuits.plaquette import DisorderGrid

    path = tmp_path / "g.txt"
    DisorderGrid.random(5, 6, 0.3, 1).save(path)
    assert main(["renyi", "--grid", str(path), "--method", "groups"]) == 0
    assert "S2_groups" in json.loads(capsys.readouterr().out)


def test_cli_kw_and_finite_beta(capsys):
    assert main(["kw-check", "--L", "3", "--T", "4", "--p", "0.3", "--beta", "0.7"]) == 0
    rep = json.loads(capsys.readouterr().out)
    assert set(rep) >= {"Q", "logZ_dual", "logZ_brute", "residual"} and rep["residual"] < 1e-10
    assert main(["renyi-finite-beta", "--L", "4", "--T", "4", "--beta", "2"]) == 0
    rep = json.loads(capsys.readouterr().out)
    assert rep["beta"] == 2.0 and "S2_nats" in rep


def test_cli_mcmc_and_collapse(tmp_path, capsys):
    a, b = tmp_path / "a.csv", tmp_path / "b.csv"
    for path, beta in ((a, "4"), (b, "6")):
        assert main(["mcmc", "--L", "16", "--beta", beta, "--t-max", "100", "--samples", "30",
                     "--out", str(path)]) == 0
        assert path.read_text().splitlines()[0] == GOLDEN_HEADERS["trace"]
    col = tmp_path / "col.csv"
    assert main(["collapse", str(a), f"{b}@6", "--out", str(col)]) == 0
    score = json.loads(capsys.readouterr().out)
    assert score["betas"] == [4.0, 6.0]
    assert col.read_text().splitlines()[0] == "log10_x,epsilon_beta4,epsilon_beta6"


def test_cli_run_and_sweep(tmp_path, capsys):
    cfg = tmp_path / "exp.cfg"
    cfg.write_text("kind = support-stats\nL = 8\nT = 12\n")
    assert main(["run", str(cfg), "--set", f"output_dir={tmp_path / 'r'}"]) == 0
    assert (tmp_path / "r" / "manifest.json").exists()
    assert main(["sweep", str(cfg), "--out-dir", str(tmp_path / "s")]) == 0
    assert capsys.readouterr().out.strip().endswith("summary.csv")


@pytest.mark.parametrize("argv, code", [
    (["circuit", "--L", "4", "--t-max", "2", "--p", "0.1", "--out", "x.csv", "--bogus", "1"], 2),
    (["circuit", "--L", "4", "--t-max", "2", "--p", "7", "--out", "x.csv"], 2),
    (["renyi", "--L", "2", "--T", "5"], 2),
    (["renyi"], 2),
    (["kw-check", "--L", "10", "--T", "10"], 3),
    (["run", "does-not-exist.cfg"], 2),
    (["nosuchcommand"], 2),
])
def test_cli_exit_codes(argv, code, tmp_path, monkeypatch, capsys):
    monkeypatch.chdir(tmp_path)
    assert main(argv) == code
    err = capsys.readouterr().err
    if "--bogus" in argv:
        assert "--bogus" in err


def test_cli_invariant_violation_exit_code(tmp_path, monkeypatch):
    import plaquette_circuits.cli as cli
    from plaquette_circuits.errors import InvariantViolation

    def boom(_):
        raise InvariantViolation("energy mismatch")

    monkeypatch.setattr(cli, "cmd_renyi", boom)
    assert main(["renyi", "--L", "4", "--T", "4"]) == 4
