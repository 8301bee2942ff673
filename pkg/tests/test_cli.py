import json

import numpy as np
import pytest

from fparma import cli
from fparma.model import model_to_dict, save_model
from fparma.presets import benchmark_model, random_stationary_model


def write_config(tmp_path, name, payload):
    target = tmp_path / name
    target.write_text(json.dumps(payload))
    return str(target)


def model_doc(d=2, **kw):
    return model_to_dict(benchmark_model(d=d, **kw))


def run(*argv):
    return cli.main(list(argv))


# ---------------------------------------------------------------------------
# config plumbing
# ---------------------------------------------------------------------------


def test_validate_accepts_inline_model(tmp_path):
    cfg = write_config(tmp_path, "v.json", {"model": model_doc()})
    out = tmp_path / "out"
    assert run("validate", "--config", cfg, "--out", str(out)) == 0
    doc = json.loads((out / "validation.json").read_text())
    assert doc == {"valid": True, "violations": []}


def test_validate_accepts_model_file_path(tmp_path):
    target = tmp_path / "model.json"
    save_model(benchmark_model(d=2), target)
    cfg = write_config(tmp_path, "v.json", {"model": str(target)})
    assert run("validate", "--config", cfg, "--out", str(tmp_path / "o")) == 0


def test_validate_reports_violations_with_exit_2(tmp_path):
    doc = model_doc()
    doc["noise"]["covariances"][0] = [[-1.0, 0.0], [0.0, 1.0]]
    cfg = write_config(tmp_path, "v.json", {"model": doc})
    out = tmp_path / "out"
    assert run("validate", "--config", cfg, "--out", str(out)) == 2
    report = json.loads((out / "validation.json").read_text())
    assert report["valid"] is False
    assert report["violations"]


def test_unknown_config_field_is_rejected(tmp_path, capsys):
    cfg = write_config(tmp_path, "v.json", {"model": model_doc(), "bogus": 1})
    assert run("validate", "--config", cfg) == 1
    err = capsys.readouterr().err
    assert "unknown config fields" in err
    assert "bogus" in err


def test_config_file_errors(tmp_path):
    assert run("validate", "--config", str(tmp_path / "missing.json")) == 1
    broken = tmp_path / "broken.json"
    broken.write_text("{not json")
    assert run("validate", "--config", str(broken)) == 1
    listy = write_config(tmp_path, "l.json", [1, 2])
    assert run("validate", "--config", listy) == 1


def test_usage_errors(tmp_path):
    assert run() == 1  # no command
    assert run("frobnicate") == 1
    cfg = write_config(tmp_path, "s.json", {"model": model_doc(), "n_cycles": 4})
    assert run("simulate", "--config", cfg) == 1  # no master seed anywhere


# ---------------------------------------------------------------------------
# simulate
# ---------------------------------------------------------------------------


def test_simulate_writes_contract_files(tmp_path):
    cfg = write_config(tmp_path, "s.json",
                       {"model": model_doc(), "n_cycles": 5, "master_seed": 3})
    out = tmp_path / "out"
    assert run("simulate", "--config", cfg, "--out", str(out)) == 0
    lines = (out / "path.csv").read_text().splitlines()
    assert lines[0] == "k,season,c_1,c_2"
    assert len(lines) == 1 + 15
    meta = json.loads((out / "simulate_meta.json").read_text())
    assert meta["master_seed"] == 3
    assert meta["n_steps"] == 15
    assert meta["P"] == 3 and meta["d"] == 2
    assert meta["burn_in"] % 3 == 0
    assert (out / "path.png").stat().st_size > 0


def test_simulate_requires_exactly_one_length(tmp_path):
    both = write_config(tmp_path, "a.json", {"model": model_doc(), "n_cycles": 4,
                                             "n_steps": 12, "master_seed": 1})
    neither = write_config(tmp_path, "b.json", {"model": model_doc(), "master_seed": 1})
    assert run("simulate", "--config", both, "--out", str(tmp_path / "o1")) == 1
    assert run("simulate", "--config", neither, "--out", str(tmp_path / "o2")) == 1


def test_simulate_seed_flag_overrides_config(tmp_path):
    cfg5 = write_config(tmp_path, "c5.json",
                        {"model": model_doc(), "n_cycles": 4, "master_seed": 5})
    cfg7 = write_config(tmp_path, "c7.json",
                        {"model": model_doc(), "n_cycles": 4, "master_seed": 7})
    for name, argv in [
        ("a", ("simulate", "--config", cfg5)),
        ("b", ("simulate", "--config", cfg7, "--seed", "5")),
        ("c", ("simulate", "--config", cfg7)),
    ]:
        assert run(*argv, "--out", str(tmp_path / name)) == 0
    read = lambda name: (tmp_path / name / "path.csv").read_bytes()
    assert read("a") == read("b")
    assert read("a") != read("c")


def test_simulate_rerun_is_byte_identical(tmp_path):
    cfg = write_config(tmp_path, "s.json",
                       {"model": model_doc(), "n_cycles": 6, "master_seed": 11})
    assert run("simulate", "--config", cfg, "--out", str(tmp_path / "r1")) == 0
    assert run("simulate", "--config", cfg, "--out", str(tmp_path / "r2")) == 0
    assert (tmp_path / "r1/path.csv").read_bytes() == (tmp_path / "r2/path.csv").read_bytes()


def test_simulate_unstable_model_exit_2(tmp_path):
    doc = model_doc()
    doc["phi"] = [dict(item, entries=[[40.0 * v for v in row] for row in item["entries"]])
                  for item in doc["phi"]]
    cfg = write_config(tmp_path, "u.json", {"model": doc, "n_cycles": 4, "master_seed": 1})
    assert run("simulate", "--config", cfg, "--out", str(tmp_path / "o")) == 2


# ---------------------------------------------------------------------------
# covariance
# ---------------------------------------------------------------------------


def test_covariance_outputs(tmp_path):
    cfg = write_config(tmp_path, "c.json", {"model": model_doc(), "h_max": 2})
    out = tmp_path / "out"
    assert run("covariance", "--config", cfg, "--out", str(out)) == 0
    rep = json.loads((out / "stationarity.json").read_text())
    assert set(rep) == {"norms", "j0", "spectral_radius", "geometric_bound"}
    lines = (out / "covariance_lag0.csv").read_text().splitlines()
    assert lines[0] == ",".join(f"c_{i}" for i in range(1, 7))
    assert len(lines) == 1 + 6
    mat = np.array([[float(v) for v in line.split(",")] for line in lines[1:]])
    assert np.allclose(mat, mat.T, atol=1e-12)
    norm_lines = (out / "lagged_norms.csv").read_text().splitlines()
    assert norm_lines[0] == "h,hs_norm"
    assert len(norm_lines) == 1 + 5
    rows = {int(l.split(",")[0]): float(l.split(",")[1]) for l in norm_lines[1:]}
    assert rows[-1] == pytest.approx(rows[1])
    assert rows[-2] == pytest.approx(rows[2])
    assert (out / "covariance.png").stat().st_size > 0


# ---------------------------------------------------------------------------
# estimate
# ---------------------------------------------------------------------------


def test_estimate_by_simulation(tmp_path):
    cfg = write_config(tmp_path, "e.json",
                       {"model": model_doc(), "n_cycles": 300, "master_seed": 9})
    out = tmp_path / "out"
    assert run("estimate", "--config", cfg, "--out", str(out)) == 0
    doc = json.loads((out / "estimate.json").read_text())
    assert {"P", "d", "phi_hat", "gram_eigenvalues", "regularization",
            "top_lag_residual_norms", "info", "errors_vs_truth"} <= set(doc)
    assert doc["info"]["n_cycles"] == 300
    assert (out / "gram_spectra.png").stat().st_size > 0


def test_estimate_from_path_csv(tmp_path):
    sim_cfg = write_config(tmp_path, "s.json",
                           {"model": model_doc(), "n_cycles": 200, "master_seed": 4})
    sim_out = tmp_path / "sim"
    assert run("simulate", "--config", sim_cfg, "--out", str(sim_out)) == 0
    est_cfg = write_config(tmp_path, "e.json",
                           {"model": model_doc(), "path_csv": str(sim_out / "path.csv")})
    out = tmp_path / "est"
    assert run("estimate", "--config", est_cfg, "--out", str(out)) == 0
    doc = json.loads((out / "estimate.json").read_text())
    assert doc["info"]["n_cycles"] == 200

    # dimension mismatch between path and model
    bad_cfg = write_config(tmp_path, "bad.json",
                           {"model": model_doc(d=3), "path_csv": str(sim_out / "path.csv")})
    assert run("estimate", "--config", bad_cfg, "--out", str(tmp_path / "x")) == 1

    # corrupted season column
    lines = (sim_out / "path.csv").read_text().splitlines()
    parts = lines[1].split(",")
    parts[1] = "2"
    lines[1] = ",".join(parts)
    mangled = tmp_path / "mangled.csv"
    mangled.write_text("\n".join(lines) + "\n")
    season_cfg = write_config(tmp_path, "season.json",
                              {"model": model_doc(), "path_csv": str(mangled)})
    assert run("estimate", "--config", season_cfg, "--out", str(tmp_path / "y")) == 1

    # too short for a fit
    short = tmp_path / "short.csv"
    short.write_text("\n".join(lines[:7]) + "\n")
    short_cfg = write_config(tmp_path, "short.json",
                             {"model": model_doc(), "path_csv": str(short)})
    assert run("estimate", "--config", short_cfg, "--out", str(tmp_path / "z")) == 1


def test_estimate_regularization_block(tmp_path):
    cfg = write_config(tmp_path, "e.json", {
        "model": model_doc(), "n_cycles": 120, "master_seed": 2,
        "regularization": {"theta_yw": 1e-5, "K_yw": 6, "theta_m": 1e-5, "K_m": 99},
    })
    out = tmp_path / "out"
    assert run("estimate", "--config", cfg, "--out", str(out)) == 0
    doc = json.loads((out / "estimate.json").read_text())
    assert doc["regularization"]["2"]["theta"] == 1e-5
    bad = write_config(tmp_path, "b.json", {
        "model": model_doc(), "n_cycles": 120, "master_seed": 2,
        "regularization": {"theta_zz": 1.0},
    })
    assert run("estimate", "--config", bad, "--out", str(tmp_path / "x")) == 1


# ---------------------------------------------------------------------------
# rates
# ---------------------------------------------------------------------------


def rates_config(tmp_path, **extra):
    payload = {"model": model_doc(), "n_grid": [60, 90], "n_seeds": 2,
               "master_seed": 13}
    payload.update(extra)
    return write_config(tmp_path, "r.json", payload)


def test_rates_csv_contract(tmp_path):
    cfg = rates_config(tmp_path)
    out = tmp_path / "out"
    assert run("rates", "--config", cfg, "--out", str(out)) == 0
    lines = (out / "errors.csv").read_text().splitlines()
    assert lines[0] == "n,seed,max_err_row1,max_err_rest,err_Phi"
    assert len(lines) == 1 + 4
    ns = [int(line.split(",")[0]) for line in lines[1:]]
    assert ns == [60, 60, 90, 90]
    med = (out / "medians.csv").read_text().splitlines()
    assert med[0] == "n,med_max_err_row1,med_max_err_rest,med_err_Phi"
    assert len(med) == 3
    slopes = json.loads((out / "slopes.json").read_text())
    assert set(slopes) == {"max_err_row1", "max_err_rest", "err_Phi"}
    assert (out / "rates.png").stat().st_size > 0


def test_rates_worker_count_does_not_change_bytes(tmp_path, monkeypatch):
    cfg = rates_config(tmp_path)
    monkeypatch.setenv("FPARMA_THREADS", "1")
    assert run("rates", "--config", cfg, "--out", str(tmp_path / "w1")) == 0
    monkeypatch.setenv("FPARMA_THREADS", "3")
    assert run("rates", "--config", cfg, "--out", str(tmp_path / "w3")) == 0
    assert (tmp_path / "w1/errors.csv").read_bytes() == (tmp_path / "w3/errors.csv").read_bytes()


def test_rates_thread_env_validation(tmp_path, monkeypatch):
    cfg = rates_config(tmp_path)
    monkeypatch.setenv("FPARMA_THREADS", "0")
    assert run("rates", "--config", cfg, "--out", str(tmp_path / "o")) == 1
    monkeypatch.setenv("FPARMA_THREADS", "abc")
    assert run("rates", "--config", cfg, "--out", str(tmp_path / "o")) == 1


def test_rates_rejects_moving_average_models(tmp_path):
    gen = np.random.default_rng(3)
    ma = random_stationary_model(gen, P=3, p=1, q=1, d=2)
    cfg = write_config(tmp_path, "ma.json", {"model": model_to_dict(ma),
                                             "n_grid": [50], "n_seeds": 1,
                                             "master_seed": 1})
    assert run("rates", "--config", cfg, "--out", str(tmp_path / "o")) == 2


# ---------------------------------------------------------------------------
# decay
# ---------------------------------------------------------------------------


def test_decay_outputs(tmp_path):
    cfg = write_config(tmp_path, "d.json",
                       {"model": model_doc(), "m_values": [1, 2, 3, 4],
                        "n_paths": 150, "master_seed": 21})
    out = tmp_path / "out"
    assert run("decay", "--config", cfg, "--out", str(out)) == 0
    lines = (out / "decay.csv").read_text().splitlines()
    assert lines[0] == "m,nu_hat"
    assert len(lines) == 1 + 4
    fit = json.loads((out / "decay_fit.json").read_text())
    assert fit["slope"] < 0
    assert 0 <= fit["r_squared"] <= 1
    assert fit["n_paths"] == 150
    assert (out / "decay.png").stat().st_size > 0


def test_decay_thread_invariance(tmp_path, monkeypatch):
    cfg = write_config(tmp_path, "d.json",
                       {"model": model_doc(), "m_values": [1, 2, 3],
                        "n_paths": 100, "master_seed": 22})
    monkeypatch.setenv("FPARMA_THREADS", "1")
    assert run("decay", "--config", cfg, "--out", str(tmp_path / "t1")) == 0
    monkeypatch.setenv("FPARMA_THREADS", "4")
    assert run("decay", "--config", cfg, "--out", str(tmp_path / "t4")) == 0
    assert (tmp_path / "t1/decay.csv").read_bytes() == (tmp_path / "t4/decay.csv").read_bytes()


# ---------------------------------------------------------------------------
# structural benchmark command
# ---------------------------------------------------------------------------


def test_example42_success(tmp_path):
    cfg = write_config(tmp_path, "x.json", {"d": 5})
    out = tmp_path / "out"
    assert run("example42", "--config", cfg, "--out", str(out)) == 0
    doc = json.loads((out / "example42.json").read_text())
    assert doc["structure_ok"] is True
    assert doc["injective"] is True
    assert doc["closed_form_hs_gap"] <= 1e-12
    assert doc["corner_adjoint_sigma_min"] > 1e-12
    assert doc["corner_adjoint_sigma_min_if_c22_zero"] <= 1e-12
    assert (out / "example42.png").stat().st_size > 0


def test_example42_degenerate_c22_fails_loudly(tmp_path):
    cfg = write_config(tmp_path, "x.json", {"d": 4, "c22": 0.0})
    out = tmp_path / "out"
    assert run("example42", "--config", cfg, "--out", str(out)) == 2
    # evidence is still written before the failure is raised
    doc = json.loads((out / "example42.json").read_text())
    assert doc["injective"] is False
    assert (out / "example42.png").stat().st_size > 0


def test_example42_with_rates_needs_seed(tmp_path):
    cfg = write_config(tmp_path, "x.json", {"d": 3, "with_rates": True})
    assert run("example42", "--config", cfg, "--out", str(tmp_path / "o")) == 1
