import json
import os

import numpy as np
import pytest

from calderonlab import ConfigError
from calderonlab.cli import (
    Tolerances,
    load_config,
    main,
    run_command,
    spec_from_json,
    spec_to_json,
)


def write_config(tmp_path, payload, name="cfg.json"):
    path = tmp_path / name
    path.write_text(json.dumps(payload))
    return str(path)


CR_SMALL = {"spec": {"builtin": "cauchy_riemann",
                     "geometry": {"n_theta": 16, "n_x": 12}}}


def test_spec_round_trip():
    spec = spec_from_json(CR_SMALL["spec"])
    again = spec_from_json(spec_to_json(spec))
    assert again.geometry == spec.geometry
    assert np.max(np.abs(again.beta1.data - spec.beta1.data)) == 0.0


def test_missing_key_named(tmp_path):
    path = write_config(tmp_path, {"nope": 1})
    with pytest.raises(ConfigError, match="missing key 'spec'"):
        load_config(path, "check")


def test_malformed_json_exit_code(tmp_path, capsys):
    path = tmp_path / "bad.json"
    path.write_text("{not json")
    rc = main(["check", "--config", str(path)])
    assert rc == 2
    assert "malformed JSON" in capsys.readouterr().err


def test_unknown_tolerance_key(tmp_path):
    path = write_config(tmp_path, CR_SMALL)
    with pytest.raises(ConfigError, match="unknown tolerance key"):
        load_config(path, "check", overrides=[("bogus", 1.0)])


def test_unknown_builtin_named(tmp_path):
    path = write_config(tmp_path, {"spec": {"builtin": "does_not_exist"}})
    with pytest.raises(ConfigError, match="does_not_exist"):
        load_config(path, "check")


def test_calderon_command_passes(tmp_path):
    path = write_config(tmp_path, CR_SMALL)
    out = str(tmp_path / "out")
    rc = main(["calderon", "--config", path, "--out", out,
               "--tol", "oracle_angle=1e-5", "--tol", "correction=1e-5"])
    assert rc == 0
    report = json.loads((tmp_path / "out" / "report.json").read_text())
    assert report["schema"] == "calderonlab-report/1"
    assert all(v["pass"] for v in report["verdicts"])
    assert (tmp_path / "out" / "modes.csv").exists()
    assert (tmp_path / "out" / "spectrum.csv").exists()


def test_verdict_failure_exit_code(tmp_path):
    path = write_config(tmp_path, CR_SMALL)
    rc = main(["check", "--config", path, "--out", str(tmp_path / "o")])
    # the Green defect tolerance targets the acceptance grid; at this
    # coarse resolution the verdict honestly fails
    assert rc == 1


def test_resolution_error_exit_code(tmp_path, capsys):
    path = write_config(tmp_path, CR_SMALL)
    rc = main(["double", "--config", path, "--out", str(tmp_path / "o"),
               "--tol", "gap_min=1e12"])
    assert rc == 3
    assert "resolution" in capsys.readouterr().err


def test_ucp_inconclusive_is_flagged_not_fatal(tmp_path):
    path = write_config(tmp_path, CR_SMALL)
    rc = main(["ucp", "--config", path, "--out", str(tmp_path / "o"),
               "--tol", "gap_min=1e12"])
    assert rc == 1  # flagged samples fail the certification verdict


def test_cobordism_guard_exit_code(tmp_path, capsys):
    path = write_config(tmp_path, CR_SMALL)
    rc = main(["cobordism", "--config", path, "--out", str(tmp_path / "o")])
    assert rc == 2
    assert "self-adjoint" in capsys.readouterr().err


def test_report_round_trip(tmp_path):
    path = write_config(tmp_path, CR_SMALL)
    cfg = load_config(path, "double", out_dir=str(tmp_path / "out"))
    report = run_command(cfg)
    blob = json.dumps(report.to_dict())
    again = json.loads(blob)
    assert again["blocks"]["double"]["kernel_dim"] == 0
    # every verdict carries its tolerance
    assert all("tolerance" in v for v in again["verdicts"])


def test_csv_determinism(tmp_path):
    path = write_config(tmp_path, CR_SMALL)
    outs = []
    for tag in ("a", "b"):
        out = str(tmp_path / tag)
        rc = main(["calderon", "--config", path, "--out", out,
                   "--tol", "oracle_angle=1e-5", "--tol", "correction=1e-5"])
        assert rc == 0
        outs.append(out)
    for name in ("modes.csv", "spectrum.csv"):
        a = open(os.path.join(outs[0], name), "rb").read()
        b = open(os.path.join(outs[1], name), "rb").read()
        assert a == b


def test_sweep_command_rows(tmp_path):
    payload = dict(CR_SMALL)
    payload["spec"] = {"builtin": "cauchy_riemann",
                       "geometry": {"n_theta": 8, "n_x": 8}}
    payload["sweep"] = {"target": "C",
                        "s_grid": [0.0, 0.02, 0.04, 0.06],
                        "sobolev_s": 0.0}
    path = write_config(tmp_path, payload)
    out = str(tmp_path / "out")
    rc = main(["sweep", "--config", path, "--out", out])
    assert rc == 0
    rows = open(os.path.join(out, "sweep.csv")).read().strip().splitlines()
    assert len(rows) == 1 + 4  # header + one row per sweep point


def test_threads_env_fallback(tmp_path, monkeypatch):
    monkeypatch.setenv("CALDERONLAB_THREADS", "2")
    path = write_config(tmp_path, CR_SMALL)
    cfg = load_config(path, "check")
    assert cfg.threads == 2
