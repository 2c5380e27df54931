import json
import math

import numpy as np
import pytest

from gibbskit import reports
from gibbskit.cli import main


def write(path, obj):
    path.write_text(json.dumps(obj))
    return str(path)


@pytest.fixture
def tfim6(tmp_path):
    return write(tmp_path / "tfim6.json", {"model": "tfim_chain", "N": 6, "J": 1.0, "Delta": 1.0})


def test_result_record_rules():
    with pytest.raises(ValueError, match="pass flag"):
        reports.ResultRecord("x", 1.0, bound=2.0)
    with pytest.raises(ValueError):
        reports.ResultRecord("x", 1.0, provenance="guess")
    rec = reports.ResultRecord("x", 1.0, 2.0, True, provenance="check")
    assert rec.to_json()["passed"] is True


def test_json_handles_numpy_and_infinity():
    text = reports.dumps({"a": np.float64(1.5), "b": np.arange(3), "c": math.inf, "d": (1, 2)})
    data = json.loads(text)
    assert data == {"a": 1.5, "b": [0, 1, 2], "c": "inf", "d": [1, 2]}


def test_atomic_write_leaves_no_temporaries(tmp_path):
    path = tmp_path / "sub" / "out.json"
    reports.write_json(path, {"x": 1})
    reports.write_json(path, {"x": 2})
    assert json.loads(path.read_text()) == {"x": 2}
    assert [p.name for p in path.parent.iterdir()] == ["out.json"]


def test_atomic_write_failure_keeps_old_file(tmp_path):
    path = tmp_path / "out.json"
    reports.write_json(path, {"x": 1})
    with pytest.raises(TypeError):
        reports.write_json(path, {"x": object()})
    assert json.loads(path.read_text()) == {"x": 1}
    assert [p.name for p in tmp_path.iterdir()] == ["out.json"]


def test_number_format_round_trips():
    for x in (0.1, 1 / 3, 1e-300, -2.5e17, math.pi):
        assert float(reports.format_number(x)) == x
    assert reports.format_number(3) == "3"
    assert reports.format_number(math.inf) == "inf"
    assert reports.format_number(None) == ""


def test_plot_data_three_columns(tmp_path):
    path = reports.emit_plot_data(["B_size", "cmi", "fit"], [[2, 1e-3, 1.1e-3], [4, 1e-6, 0.9e-6]],
                                  tmp_path / "cmi.csv")
    lines = path.read_text().splitlines()
    assert lines[0] == "B_size,cmi,fit"
    assert all(len(line.split(",")) == 3 for line in lines)
    assert lines[1] == "2,0.001,0.0011000000000000001"


def test_plot_data_trailing_comment_and_empty(tmp_path):
    path = reports.emit_plot_data(["distance", "correlator"], [{"distance": 1, "correlator": 0.5}],
                                  tmp_path / "corr.csv", "xi = 0.79")
    assert path.read_text().splitlines()[-1] == "# xi = 0.79"
    empty = reports.emit_plot_data(["a", "b"], [], tmp_path / "empty.csv")
    assert empty.read_text() == "a,b\n"
    with pytest.raises(ValueError):
        reports.emit_plot_data(["a", "b"], [[1]], tmp_path / "bad.csv")


def test_cli_model(tmp_path, tfim6):
    out = tmp_path / "m"
    assert main(["model", "--config", tfim6, "--out", str(out)]) == 0
    result = json.loads((out / "result.json").read_text())
    values = {r["quantity"]: r["value"] for r in result["records"]}
    assert values["N"] == 6 and values["k"] == 2


def test_cli_exact_and_manifest(tmp_path, tfim6):
    out = tmp_path / "e"
    assert main(["exact", "--config", tfim6, "--beta", "1.0", "--out", str(out)]) == 0
    result = json.loads((out / "result.json").read_text())
    names = [r["quantity"] for r in result["records"]]
    assert names == ["logZ", "entropy", "energy", "free_energy"]
    manifest = json.loads((out / "manifest.json").read_text())
    assert manifest["config_digest"] == reports.config_digest(open(tfim6, "rb").read())
    assert manifest["outputs"] == ["result.json"]
    assert manifest["command"].startswith("exact --config")
    assert manifest["wall_time_s"] >= 0 and "host" in manifest and "code_version" in manifest


def test_cli_outputs_are_reproducible(tmp_path, tfim6):
    a, b = tmp_path / "a", tmp_path / "b"
    for out in (a, b):
        assert main(["logz", "--config", tfim6, "--method", "oned", "--lstar", "2", "--beta", "0.5",
                     "--out", str(out), "--csv"]) == 0
    for name in ("result.json", "logz.csv"):
        assert (a / name).read_bytes() == (b / name).read_bytes()


def test_cli_cluster_logz(tmp_path, tfim6):
    out = tmp_path / "c"
    assert main(["logz", "--config", tfim6, "--method", "cluster", "--beta", "0.001", "--epsilon", "1e-5",
                 "--out", str(out), "--csv"]) == 0
    result = json.loads((out / "result.json").read_text())
    rec = result["records"][0]
    assert rec["provenance"] == "cluster" and rec["passed"] is True
    header = (out / "logz.csv").read_text().splitlines()[0]
    assert header == "M,logZ,bound,error"


def test_cli_cluster_outside_radius_is_an_error(tmp_path, capsys):
    assert main(["logz", "--method", "cluster", "--beta", "0.02", "--epsilon", "1e-5",
                 "--out", str(tmp_path / "x")]) == 1
    assert "beta*" in capsys.readouterr().err


def test_cli_failed_certificate_exit_code(tmp_path, tfim6):
    out = tmp_path / "q"
    code = main(["qbp", "--config", tfim6, "--beta", "1.0", "--term", "2", "--steps", "2", "--levels", "1",
                 "--tol", "1e-14", "--out", str(out)])
    assert code == 2
    assert json.loads((out / "result.json").read_text())["passed"] is False


def test_cli_bad_config(tmp_path, capsys):
    bad = write(tmp_path / "bad.json", {"model": "tfim_chain", "J": 1.0})
    assert main(["exact", "--config", bad, "--beta", "1", "--out", str(tmp_path / "o")]) == 1
    assert "'N'" in capsys.readouterr().err
    broken = tmp_path / "broken.json"
    broken.write_text("{not json")
    assert main(["exact", "--config", str(broken), "--beta", "1", "--out", str(tmp_path / "o")]) == 1


def test_cli_dense_cap(tmp_path, monkeypatch, capsys, tfim6):
    monkeypatch.setenv("GIBBSKIT_DENSE_CAP", "32")
    assert main(["exact", "--config", tfim6, "--beta", "1", "--out", str(tmp_path / "o")]) == 1
    assert "dense cap" in capsys.readouterr().err


def test_cli_checks_csv(tmp_path, tfim6):
    out = tmp_path / "chk"
    assert main(["checks", "--config", tfim6, "--check", "correlation_length", "--beta", "0.3",
                 "--params", '{"distances": [1, 2, 3, 4], "axis": "x"}', "--csv", "--out", str(out)]) == 0
    lines = (out / "checks.csv").read_text().splitlines()
    assert lines[0] == "distance,correlator" and lines[-1].startswith("# xi = ")


def test_cli_empty_report_header_only(tmp_path, tfim6):
    out = tmp_path / "empty"
    assert main(["checks", "--config", tfim6, "--check", "cmi_decay", "--beta", "0.5",
                 "--params", '{"widths": []}', "--csv", "--out", str(out)]) == 0
    assert (out / "checks.csv").read_text() == "B_size,cmi,fit\n"


def test_cli_unknown_check(tmp_path, tfim6):
    assert main(["checks", "--config", tfim6, "--check", "nope", "--out", str(tmp_path / "o")]) == 1


def test_cli_battery(tmp_path):
    manifest = write(tmp_path / "battery.json", {"checks": [
        {"label": "closed forms", "check": "closed_forms", "params": {"N": 6, "beta": 0.5, "xi_beta": 0.5, "xi_N": 10}},
        {"label": "exact", "check": "exact", "model": {"model": "tfim_chain", "N": 4}, "params": {"beta": 1.0}},
        {"label": "impossible", "check": "logz_1d", "model": {"model": "tfim_chain", "N": 6},
         "params": {"beta": 1.0, "l_star": 1, "tol": 1e-14}}]})
    out_a, out_b = tmp_path / "ba", tmp_path / "bb"
    assert main(["battery", "--manifest", manifest, "--seed", "7", "--out", str(out_a)]) == 2
    assert main(["battery", "--manifest", manifest, "--seed", "7", "--out", str(out_b)]) == 2
    summary = json.loads((out_a / "battery.json").read_text())
    assert [r["passed"] for r in summary["table"]] == [True, None, False]
    assert (out_a / "battery.json").read_bytes() == (out_b / "battery.json").read_bytes()
    manifest_data = json.loads((out_a / "manifest.json").read_text())
    assert set(manifest_data["entry_wall_time_s"]) == {"closed forms", "exact", "impossible"}


def test_cli_battery_malformed(tmp_path, capsys):
    manifest = write(tmp_path / "m.json", {"checks": [{"label": "x"}]})
    assert main(["battery", "--manifest", manifest, "--seed", "1", "--out", str(tmp_path / "o")]) == 1
    assert "'check'" in capsys.readouterr().err
