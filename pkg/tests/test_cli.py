import json

import pytest

from mfbsde.cli import (
    EXIT_CONFIG,
    EXIT_DIVERGED,
    EXIT_MISMATCH,
    EXIT_OK,
    load_config,
    main,
)


def write_config(tmp_path, name="cfg.json", **overrides):
    cfg = {
        "fixture": "pure_quadratic",
        "params": {"gamma": 1.0, "terminal": "brownian"},
        "scheme": "theta",
        "grid": {"horizon": 1.0, "steps": 16},
        "particles": 1024,
        "seed": 20260814,
    }
    cfg.update(overrides)
    path = tmp_path / name
    path.write_text(json.dumps(cfg))
    return str(path)


def run_cli(capsys, *argv):
    code = main(list(argv))
    out = capsys.readouterr()
    return code, out.out, out.err


def test_solve_happy_path(capsys, tmp_path):
    cfg = write_config(tmp_path)
    code, out, _ = run_cli(capsys, "solve", cfg)
    assert code == EXIT_OK
    report = json.loads(out)
    assert report["schema_version"] == 1
    assert report["command"] == "solve"
    assert report["results"]["converged"]
    assert abs(report["results"]["y0"][0] - 0.5) < 0.05
    assert "solve_seconds" in report["timings"]
    # config echo matches the input file byte content
    assert report["config"] == json.loads(open(cfg).read())


def test_unknown_top_level_key_rejected(capsys, tmp_path):
    cfg = write_config(tmp_path, extra_knob=1)
    code, _, err = run_cli(capsys, "solve", cfg)
    assert code == EXIT_CONFIG
    assert "extra_knob" in err


def test_unknown_nested_key_rejected(capsys, tmp_path):
    cfg = write_config(tmp_path, solver={"tol": 1e-6, "warp": 9})
    code, _, err = run_cli(capsys, "solve", cfg)
    assert code == EXIT_CONFIG
    assert "warp" in err


def test_missing_required_key_rejected(capsys, tmp_path):
    path = tmp_path / "bad.json"
    path.write_text(json.dumps({"fixture": "pure_quadratic", "scheme": "theta"}))
    code, _, err = run_cli(capsys, "solve", str(path))
    assert code == EXIT_CONFIG
    assert "missing" in err


def test_bad_scheme_and_grid_rejected(capsys, tmp_path):
    cfg = write_config(tmp_path, scheme="euler")
    assert run_cli(capsys, "solve", cfg)[0] == EXIT_CONFIG
    cfg2 = write_config(tmp_path, name="g.json", grid={"horizon": 1.0})
    assert run_cli(capsys, "solve", cfg2)[0] == EXIT_CONFIG


def test_malformed_json_rejected(capsys, tmp_path):
    path = tmp_path / "broken.json"
    path.write_text("{not json")
    code, _, err = run_cli(capsys, "solve", str(path))
    assert code == EXIT_CONFIG


def test_load_config_direct_error():
    from mfbsde.cli import ConfigError

    with pytest.raises(ConfigError):
        load_config("/nonexistent/path.json")


def test_divergence_exit_code(capsys, tmp_path):
    cfg = write_config(
        tmp_path,
        fixture="linear_mf",
        params={"a": 0.0, "b": 1.0, "terminal": "const", "value": 1.0},
        solver={"tol": 1e-12, "max_iter": 2},
    )
    code, out, _ = run_cli(capsys, "solve", cfg)
    assert code == EXIT_DIVERGED
    report = json.loads(out)
    assert report["results"]["converged"] is False
    assert "error" in report


def test_verify_match_and_mismatch(capsys, tmp_path):
    cfg = write_config(tmp_path, particles=2048)
    code, out, _ = run_cli(capsys, "verify", cfg)
    assert code == EXIT_OK
    report = json.loads(out)
    assert report["results"]["match"] is True
    assert report["results"]["reference"] == pytest.approx(0.5, abs=1e-10)

    # starving the sampler and tightening the gate forces a mismatch
    cfg2 = write_config(tmp_path, name="tiny.json", particles=32, seed=5)
    code2, out2, _ = run_cli(capsys, "verify", cfg2, "--tolerance", "1e-9")
    assert code2 == EXIT_MISMATCH
    assert json.loads(out2)["results"]["match"] is False


def test_verify_needs_known_reference(capsys, tmp_path):
    cfg = write_config(tmp_path, fixture="eq41", params={"n": 2}, scheme="global")
    code, _, err = run_cli(capsys, "verify", cfg)
    assert code == EXIT_CONFIG
    assert "reference" in err


def test_constants_subcommand(capsys):
    code, out, _ = run_cli(
        capsys, "constants", "--fixture", "bounded_sine_mf", "--param", "terminal=tanh"
    )
    assert code == EXIT_OK
    report = json.loads(out)
    local = report["results"]["local"]
    assert local["eps"] > 0
    assert local["residual_x1"] <= 1e-10
    assert report["results"]["picard"]["R_q"] == 16.0


def test_constants_rejects_bad_param(capsys):
    code, _, err = run_cli(capsys, "constants", "--fixture", "pure_quadratic", "--param", "oops")
    assert code == EXIT_CONFIG


def test_outputs_written(capsys, tmp_path):
    csv_path = tmp_path / "nodes.csv"
    bin_path = tmp_path / "sol.bin"
    cfg = write_config(
        tmp_path, particles=256, outputs={"csv": str(csv_path), "solution": str(bin_path)}
    )
    code, out, _ = run_cli(capsys, "solve", cfg)
    assert code == EXIT_OK
    assert csv_path.exists() and bin_path.exists()
    header = csv_path.read_text().splitlines()[0]
    assert "time" in header and "max_abs_y" in header

    from mfbsde.solvers import load_solution

    sol = load_solution(str(bin_path))
    assert sol.Y.shape == (256, 17, 1)


def test_report_deterministic_modulo_timings(capsys, tmp_path):
    cfg = write_config(tmp_path, particles=512)
    _, out1, _ = run_cli(capsys, "solve", cfg)
    _, out2, _ = run_cli(capsys, "solve", cfg)
    r1, r2 = json.loads(out1), json.loads(out2)
    r1.pop("timings")
    r2.pop("timings")
    assert json.dumps(r1, sort_keys=True) == json.dumps(r2, sort_keys=True)


def test_refine_subcommand(capsys, tmp_path):
    cfg = write_config(tmp_path, particles=512, grid={"horizon": 1.0, "steps": 8})
    code, out, _ = run_cli(capsys, "refine", cfg, "--factor", "2")
    assert code == EXIT_OK
    report = json.loads(out)
    assert report["results"]["refine_factor"] == 2
    assert report["results"]["gap"] < 0.1
