import json
import os
import subprocess
import sys

import numpy as np
import pytest

from survimpact import write_csv

from oracles import random_dataset


def run_cli(*argv, env_extra=None):
    env = dict(os.environ)
    if env_extra:
        env.update(env_extra)
    return subprocess.run([sys.executable, "-m", "survimpact.cli", *argv],
                          capture_output=True, env=env)


@pytest.fixture(scope="module")
def workdir(tmp_path_factory):
    root = tmp_path_factory.mktemp("cli")
    ds = random_dataset(77, n=120, p=2, q=1, censor_scale=3.0)
    data = root / "data.csv"
    write_csv(ds, data)
    cfg = root / "cfg.toml"
    cfg.write_text(
        '[data]\ntime = "time"\nstatus = "status"\n'
        'x = ["x1", "x2"]\nz = ["z1"]\n'
        "[analysis]\ntau = %r\n" % ds.tau)
    scn = root / "scn.toml"
    scn.write_text('generator = "ph"\nxi = 0.05\ncensoring = 0.25\nn = 70\n'
                   "iterations = 3\nbootstrap_reps = 2\nseed = 21\n")
    return {"root": root, "data": data, "cfg": cfg, "scn": scn,
            "tau": ds.tau}


def test_fit_json_stdout(workdir):
    res = run_cli("fit", "--input", str(workdir["data"]), "--config",
                  str(workdir["cfg"]))
    assert res.returncode == 0, res.stderr
    payload = json.loads(res.stdout)
    assert payload["family"] == "ph"
    assert payload["n"] == 120
    assert set(payload["coefficients"]) == {"x1", "x2", "z1"}
    assert np.isfinite(payload["m_tau"])


def test_fit_flag_overrides_replace_config(workdir):
    res = run_cli("fit", "--input", str(workdir["data"]), "--config",
                  str(workdir["cfg"]), "--z", "", "--family", "po")
    assert res.returncode == 0, res.stderr
    payload = json.loads(res.stdout)
    assert payload["family"] == "po"
    assert set(payload["coefficients"]) == {"x1", "x2"}


def test_fit_without_config_needs_columns(workdir):
    res = run_cli("fit", "--input", str(workdir["data"]), "--time", "time",
                  "--status", "status", "--x", "x1,x2", "--z", "z1",
                  "--tau", str(workdir["tau"]))
    assert res.returncode == 0, res.stderr
    res2 = run_cli("fit", "--input", str(workdir["data"]))
    assert res2.returncode == 2


def test_ph_test_csv_output(workdir):
    res = run_cli("ph-test", "--input", str(workdir["data"]), "--config",
                  str(workdir["cfg"]), "--format", "csv")
    assert res.returncode == 0, res.stderr
    lines = res.stdout.decode().splitlines()
    assert lines[0] == "name,statistic,p_value"
    assert lines[-1].startswith("GLOBAL,")


@pytest.mark.parametrize("estimator", ["cpe", "cpe-projected", "wci",
                                       "wci-projected"])
def test_concordance_estimators(workdir, estimator):
    res = run_cli("concordance", "--input", str(workdir["data"]), "--config",
                  str(workdir["cfg"]), "--estimator", estimator)
    assert res.returncode == 0, res.stderr
    payload = json.loads(res.stdout)
    assert 0.0 <= payload["value"] <= 1.0
    assert payload["tau"] == pytest.approx(workdir["tau"])


def test_impact_out_file_and_thread_invariance(workdir):
    out1 = workdir["root"] / "imp1.json"
    out2 = workdir["root"] / "imp2.json"
    base = ["impact", "--input", str(workdir["data"]), "--config",
            str(workdir["cfg"]), "--method", "pl-cpe", "--bootstrap-reps",
            "6", "--seed", "3"]
    r1 = run_cli(*base, "--threads", "1", "--out", str(out1))
    r2 = run_cli(*base, "--threads", "2", "--out", str(out2))
    assert r1.returncode == 0, r1.stderr
    assert r2.returncode == 0, r2.stderr
    assert out1.read_bytes() == out2.read_bytes()
    payload = json.loads(out1.read_text())
    assert payload["impact"]["method"] == "pl-cpe"
    assert payload["impact"]["bootstrap_reps"] == 6
    assert payload["runtime"] == {"bootstrap_reps": 6,
                                  "bootstrap_failures": 0}


def test_impact_env_thread_override(workdir):
    base = ["impact", "--input", str(workdir["data"]), "--config",
            str(workdir["cfg"]), "--method", "pl-wci", "--bootstrap-reps",
            "4", "--seed", "1"]
    a = run_cli(*base, env_extra={"SURVIMPACT_THREADS": "2"})
    b = run_cli(*base)
    assert a.returncode == 0 and b.returncode == 0
    assert a.stdout == b.stdout
    bad = run_cli(*base, env_extra={"SURVIMPACT_THREADS": "many"})
    assert bad.returncode == 2


def test_impact_naive_variant(workdir):
    res = run_cli("impact", "--input", str(workdir["data"]), "--config",
                  str(workdir["cfg"]), "--naive", "--seed", "0")
    assert res.returncode == 0, res.stderr
    payload = json.loads(res.stdout)
    assert payload["impact"]["method"] == "pl-cpe-naive"
    assert payload["impact"]["baseline_misspecified"] is True


def test_simulate_scenario_reruns_byte_identical(workdir):
    out1 = workdir["root"] / "sim1.json"
    out2 = workdir["root"] / "sim2.json"
    base = ["simulate", "--scenario", str(workdir["scn"]), "--pop-n-iter",
            "10", "--pop-n-per", "100"]
    r1 = run_cli(*base, "--threads", "1", "--out", str(out1))
    r2 = run_cli(*base, "--threads", "2", "--out", str(out2))
    assert r1.returncode == 0, r1.stderr.decode()
    assert r2.returncode == 0, r2.stderr.decode()
    assert out1.read_bytes() == out2.read_bytes()
    payload = json.loads(out1.read_text())
    assert payload["iterations"] == 3
    assert payload["scenario"]["seed"] == 21


def test_simulate_requires_seed_or_scenario(workdir):
    res = run_cli("simulate", "--generator", "ph", "--iterations", "2")
    assert res.returncode == 2


def test_simulate_inline_flags(workdir):
    res = run_cli("simulate", "--generator", "ph", "--xi", "0.05",
                  "--censoring", "0.0", "--n", "60", "--iterations", "2",
                  "--seed", "4", "--pop-n-iter", "5", "--pop-n-per", "80")
    assert res.returncode == 0, res.stderr.decode()
    payload = json.loads(res.stdout)
    assert payload["scenario"]["n"] == 60
    assert len(payload["rows"]) == 9  # three methods x three quantities


def test_population_subcommand():
    res = run_cli("population", "--generator", "ph", "--xi", "0.10",
                  "--n-iter", "20", "--n-per", "150", "--seed", "2")
    assert res.returncode == 0, res.stderr
    payload = json.loads(res.stdout)
    assert set(payload) == {"kappa", "kappa_projected", "xi"}
    assert 0.5 < payload["kappa"] < 1.0


def test_missing_input_file_exits_2(workdir):
    res = run_cli("fit", "--input", str(workdir["root"] / "absent.csv"),
                  "--config", str(workdir["cfg"]))
    assert res.returncode == 2
    assert b"absent.csv" in res.stderr


def test_unknown_subcommand_exits_2():
    assert run_cli("frobnicate").returncode == 2


def test_text_format_impact(workdir):
    res = run_cli("impact", "--input", str(workdir["data"]), "--config",
                  str(workdir["cfg"]), "--format", "text", "--seed", "0")
    assert res.returncode == 0, res.stderr
    assert b"impact" in res.stdout
