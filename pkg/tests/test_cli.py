import csv
import io
import json

import numpy as np
import pytest

from secondorder.cli import main
from secondorder.ensembles import load_matrix_binary
from secondorder.frechet import FrechetMesh


def run(capsys, *argv):
    code = main(list(argv))
    out, err = capsys.readouterr()
    return code, out, err


def table(text):
    lines = text.splitlines()
    assert lines[0].startswith("# config_sha256=")
    return list(csv.DictReader(io.StringIO("\n".join(lines[1:]))))


def test_sample_spectra_is_reproducible(capsys):
    code, a, _ = run(capsys, "sample", "--N", "6", "--replicas", "3", "--seed", "5")
    assert code == 0
    _, b, _ = run(capsys, "sample", "--N", "6", "--replicas", "3", "--seed", "5")
    assert a == b
    rows = table(a)
    assert len(rows) == 18 and "seed=5" in a.splitlines()[0]
    _, c, _ = run(capsys, "sample", "--N", "6", "--replicas", "3", "--seed", "6")
    assert c != a


def test_sample_files_are_byte_identical(tmp_path, capsys):
    paths = [tmp_path / "a.csv", tmp_path / "b.csv"]
    for p in paths:
        assert run(capsys, "sample", "--N", "4", "--replicas", "2", "--out", str(p))[0] == 0
    assert paths[0].read_bytes() == paths[1].read_bytes()


def test_sample_matrix_binary(tmp_path, capsys):
    out = tmp_path / "m.bin"
    code, _, _ = run(capsys, "sample", "--what", "matrix", "--N", "3", "--format", "bin", "--out", str(out))
    assert code == 0
    m = load_matrix_binary(out.read_bytes())
    assert m.shape == (3, 3) and np.array_equal(m, m.conj().T)
    assert run(capsys, "sample", "--what", "matrix", "--N", "3", "--format", "bin")[0] == 1


def test_covariance_json(capsys):
    code, out, _ = run(capsys, "covariance", "--N", "8", "--replicas", "2000", "--f", "id", "--format", "json")
    assert code == 0
    doc = json.loads(out)
    row = doc["result"][0]
    assert abs(row["value_re"] - 1) <= 4 * row["stderr"]
    assert doc["config"]["command"] == "covariance"


def test_g2_point_and_grid(capsys):
    code, out, _ = run(capsys, "g2", "--z", "4+1i", "--w=-5i", "--degree", "10")
    assert code == 0
    row = table(out)[0]
    free = complex(float(row["free_re"]), float(row["free_im"]))
    series = complex(float(row["series_re"]), float(row["series_im"]))
    assert abs(free - series) <= float(row["series_tail_bound"])
    code, out, _ = run(capsys, "g2", "--grid", "--grid-points", "8")
    assert code == 0
    assert max(float(r["abs_diff"]) for r in table(out)) < 1e-10


def test_rho_polynomial_oracle(tmp_path, capsys):
    cfg = tmp_path / "rho.json"
    cfg.write_text(json.dumps({"f": {"poly": [0, 1, 1]}, "g": {"poly": [0, 0, 0, 3]}}))
    code, out, _ = run(capsys, "rho", "--config", str(cfg), "--nodes", "128")
    assert code == 0
    row = table(out)[0]
    assert float(row["oracle"]) == 9.0 and float(row["abs_diff"]) < 1e-10
    code, out, _ = run(capsys, "rho", "--f", "x3", "--g", "x3")
    assert abs(float(table(out)[0]["contour_re"]) - 12) < 1e-10


def test_clt_small(capsys):
    code, out, _ = run(capsys, "clt", "--f", "id", "--N-values", "4", "8", "--replicas", "1000", "--format", "json")
    assert code == 0
    rep = json.loads(out)["result"]["id"]
    assert [r["N"] for r in rep["rows"]] == [4, 8]
    assert abs(rep["rho_target"] - 1) < 1e-10


def test_check_selected_criteria(capsys):
    code, out, err = run(capsys, "check", "--only", "1", "2", "3", "--format", "json")
    assert code == 0
    assert [r["criterion"] for r in json.loads(out)["result"]] == [1, 2, 3]
    assert err.count("[PASS]") == 3


def test_frechet_mesh_file(tmp_path, capsys):
    mesh = FrechetMesh.uniform(lambda x, y: x * y, 1.0, 4)
    path = tmp_path / "mesh.csv"
    path.write_text(mesh.to_csv())
    code, out, _ = run(capsys, "frechet", "--mesh", str(path), "--mode", "exact")
    assert code == 0
    row = table(out)[0]
    assert float(row["variation_exact"]) == pytest.approx(4.0)
    assert float(row["integral"]) == pytest.approx(4.0)
    assert run(capsys, "frechet")[0] == 1
    assert run(capsys, "frechet", "--mesh", str(tmp_path / "missing.csv"))[0] == 1


def test_schema_errors_name_the_field(tmp_path, capsys):
    cfg = tmp_path / "bad.json"
    cfg.write_text(json.dumps({"ensemble": {"kind": "gue", "n": 0}}))
    code, _, err = run(capsys, "sample", "--config", str(cfg))
    assert code == 1 and "ensemble.n" in err
    cfg.write_text(json.dumps({"replicas": "many"}))
    code, _, err = run(capsys, "sample", "--config", str(cfg))
    assert code == 1 and "replicas" in err
    cfg.write_text(json.dumps({"command": "rho"}))
    assert run(capsys, "sample", "--config", str(cfg))[0] == 1
    cfg.write_text("{not json")
    assert run(capsys, "sample", "--config", str(cfg))[0] == 1


def test_library_errors_map_to_exit_codes(capsys):
    code, _, err = run(capsys, "g2", "--z", "0.5", "--w", "4")
    assert code == 1 and "DomainError" in err
    assert run(capsys, "rho", "--f", "tan")[0] == 1
    assert run(capsys, "g2", "--z", "abc")[0] == 1
    assert run(capsys, "covariance", "--N", "8", "--replicas", "10")[0] == 1


def test_config_and_flags_merge(tmp_path, capsys):
    cfg = tmp_path / "c.json"
    cfg.write_text(json.dumps({"N": 5, "replicas": 2, "seed": 3}))
    _, a, _ = run(capsys, "sample", "--config", str(cfg))
    _, b, _ = run(capsys, "sample", "--N", "5", "--replicas", "2", "--seed", "3")
    assert table(a) == table(b)
    _, c, _ = run(capsys, "sample", "--config", str(cfg), "--N", "4")
    assert len(table(c)) == 8
