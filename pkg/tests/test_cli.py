import json
import re

import numpy as np
import pytest

from degran.cli import main
from degran.data import load_csv


def run(capsys, *argv):
    code = main([str(a) for a in argv])
    out = capsys.readouterr()
    return code, out.out, out.err


def usage(capsys, *argv):
    with pytest.raises(SystemExit) as info:
        main([str(a) for a in argv])
    capsys.readouterr()
    return info.value.code


@pytest.fixture
def synth(tmp_path, capsys):
    path = tmp_path / "s.csv"
    assert run(capsys, "synth", "--n", 300, "--dims", 6, "--classes", 3, "--seed", 7, "--out", path)[0] == 0
    return path


def printed(text, label):
    return float(re.search(rf"{label} error: (\S+)", text).group(1))


def test_synth_shape_and_determinism(tmp_path, capsys, synth):
    lines = synth.read_text().splitlines()
    assert len(lines) == 301
    assert all(len(line.split(",")) == 7 for line in lines)
    assert lines[0].endswith(",class")
    again = tmp_path / "t.csv"
    code, out, _ = run(capsys, "synth", "--n", 300, "--dims", 6, "--classes", 3, "--seed", 7, "--out", again)
    assert code == 0 and "300 rows x 7 columns" in out
    assert again.read_bytes() == synth.read_bytes()


def test_synth_bad_args(tmp_path, capsys):
    assert usage(capsys, "synth", "--classes", 0, "--out", tmp_path / "x.csv") == 2
    code, _, err = run(capsys, "synth", "--n", 2, "--classes", 3, "--out", tmp_path / "x.csv")
    assert code == 1 and "classes" in err


def test_synth_unwritable(tmp_path, capsys):
    code, _, err = run(capsys, "synth", "--out", tmp_path / "missing" / "s.csv")
    assert code == 1 and "does not exist" in err


def test_unknown_flag_rejected(capsys, synth):
    assert usage(capsys, "run", synth, "--colour", "blue") == 2


def test_run_and_reconstruct_roundtrip(tmp_path, capsys, synth):
    model, recon, recon2 = tmp_path / "m.json", tmp_path / "r.csv", tmp_path / "r2.csv"
    code, out, _ = run(capsys, "run", synth, "--label-column", -1, "--c", 4, "--m", 1.6,
                       "--model-out", model, "--recon-out", recon)
    assert code == 0
    e_run = printed(out, "augmented")
    assert printed(out, "baseline") >= e_run
    doc = json.loads(model.read_text())
    assert doc["schema_version"] == 1 and doc["normalization"] is not None
    r = load_csv(recon, label_column=-1)
    assert r.features.shape == (300, 6)

    code, out, _ = run(capsys, "reconstruct", "--model", model, "--data", synth, "--label-column", -1,
                       "--out", recon2)
    assert code == 0
    assert abs(printed(out, "reconstruction") - e_run) <= 1e-12
    np.testing.assert_allclose(load_csv(recon2, label_column=-1).features, r.features, rtol=1e-12, atol=1e-12)

    code, out, _ = run(capsys, "reconstruct", "--model", model, "--data", synth, "--label-column", -1,
                       "--encode")
    assert code == 0 and abs(printed(out, "reconstruction") - e_run) <= 1e-12


def test_run_single_cluster_collapses_to_mean(tmp_path, capsys, synth):
    recon = tmp_path / "r.csv"
    code, out, _ = run(capsys, "run", synth, "--label-column", -1, "--c", 1, "--recon-out", recon)
    assert code == 0
    data = load_csv(synth, label_column=-1).features
    r = load_csv(recon, label_column=-1).features
    np.testing.assert_allclose(r, np.tile(data.mean(axis=0), (300, 1)), atol=1e-9)
    assert printed(out, "baseline") == pytest.approx(printed(out, "augmented"), rel=1e-9)


def test_run_rejects_m_one(capsys, synth):
    assert usage(capsys, "run", synth, "--label-column", -1, "--m", 1.0) == 2


def test_run_fit_failure_and_missing_file(tmp_path, capsys, synth):
    code, _, err = run(capsys, "run", synth, "--label-column", -1, "--c", 400)
    assert code == 1 and "exceeds" in err
    code, _, err = run(capsys, "run", tmp_path / "nope.csv")
    assert code == 1 and "no such file" in err
    bad = tmp_path / "bad.csv"
    bad.write_text("a,b\n1,x\n2,3\n")
    code, _, err = run(capsys, "run", bad)
    assert code == 1 and "row 1" in err


def test_reconstruct_errors(tmp_path, capsys, synth):
    model = tmp_path / "m.json"
    run(capsys, "run", synth, "--label-column", -1, "--c", 3, "--model-out", model)
    trunc = tmp_path / "t.json"
    trunc.write_text(model.read_text()[:200])
    code, _, err = run(capsys, "reconstruct", "--model", trunc, "--data", synth, "--label-column", -1)
    assert code == 1 and "cannot parse" in err
    narrow = tmp_path / "n.csv"
    narrow.write_text("a,b\n1,2\n3,4\n")
    code, _, err = run(capsys, "reconstruct", "--model", model, "--data", narrow)
    assert code == 1 and "6" in err and "2" in err and "dimension" in err
    few = tmp_path / "few.csv"
    lines = synth.read_text().splitlines()
    few.write_text("\n".join(lines[:11]) + "\n")
    code, _, err = run(capsys, "reconstruct", "--model", model, "--data", few, "--label-column", -1)
    assert code == 1 and "300 x 6" in err and "10 x 6" in err


def test_bench_two_folds(tmp_path, capsys, synth):
    out_dir = tmp_path / "b"
    code, out, _ = run(capsys, "bench", synth, "--label-column", -1, "--folds", 2, "--grid-c", 3,
                       "--grid-m", 2.0, "--out-dir", out_dir)
    assert code == 0 and "P2" in out
    doc = json.loads((out_dir / "report.json").read_text())
    assert doc["schema_version"] == 1 and len(doc["folds"]) == 2
    assert (out_dir / "grid.csv").read_text().startswith("fold,c,m")
    assert (out_dir / "table.txt").read_text() == out


def test_bench_workers_identical_bytes(tmp_path, capsys, synth):
    args = ["bench", synth, "--label-column", -1, "--folds", 2, "--grid-c", 3, 4, "--grid-m", 1.6, 2.0]
    assert run(capsys, *args, "--workers", 1, "--out-dir", tmp_path / "w1")[0] == 0
    assert run(capsys, *args, "--workers", 8, "--out-dir", tmp_path / "w8")[0] == 0
    for name in ("report.json", "grid.csv", "table.txt"):
        assert (tmp_path / "w1" / name).read_bytes() == (tmp_path / "w8" / name).read_bytes()


def test_bench_default_c_range_from_labels(tmp_path, capsys, synth):
    code, _, _ = run(capsys, "bench", synth, "--label-column", -1, "--folds", 2, "--grid-m", 2.0,
                     "--out-dir", tmp_path / "b")
    doc = json.loads((tmp_path / "b" / "report.json").read_text())
    assert code == 0 and doc["config"]["c_values"] == [3, 4, 5, 6, 7, 8]
    code, _, _ = run(capsys, "bench", synth, "--folds", 2, "--grid-m", 2.0, "--c-min", 2, "--c-max", 3,
                     "--out-dir", tmp_path / "c")
    doc = json.loads((tmp_path / "c" / "report.json").read_text())
    assert code == 0 and doc["config"]["c_values"] == [2, 3]


def test_bench_usage_errors(tmp_path, capsys, synth):
    assert usage(capsys, "bench", synth, "--folds", 2) == 2
    assert usage(capsys, "bench", synth, "--c-min", 3) == 2
    assert usage(capsys, "bench", synth, "--label-column", -1, "--folds", 1) == 2


def test_report_renders_saved_json(tmp_path, capsys, synth):
    run(capsys, "bench", synth, "--label-column", -1, "--folds", 2, "--grid-c", 3, "--grid-m", 2.0,
        "--out-dir", tmp_path / "b")
    code, out, _ = run(capsys, "report", tmp_path / "b" / "report.json", "--grid-out", tmp_path / "g.csv")
    assert code == 0
    assert out == (tmp_path / "b" / "table.txt").read_text()
    assert (tmp_path / "g.csv").read_text() == (tmp_path / "b" / "grid.csv").read_text()
    bad = tmp_path / "bad.json"
    bad.write_text("{")
    assert run(capsys, "report", bad)[0] == 1


def test_config_file(tmp_path, capsys, synth):
    cfg = tmp_path / "c.yaml"
    cfg.write_text("label_column: -1\nfolds: 2\ngrid_c: [3]\ngrid_m: [2.0]\nout_dir: %s\n" % (tmp_path / "o"))
    code, _, _ = run(capsys, "bench", synth, "--config", cfg)
    assert code == 0
    doc = json.loads((tmp_path / "o" / "report.json").read_text())
    assert doc["config"]["folds"] == 2 and doc["config"]["c_values"] == [3]
    # Explicit flags win over the file.
    code, _, _ = run(capsys, "bench", synth, "--config", cfg, "--folds", 3)
    assert json.loads((tmp_path / "o" / "report.json").read_text())["config"]["folds"] == 3
    bad = tmp_path / "bad.yaml"
    bad.write_text("nonsense_key: 1\n")
    assert usage(capsys, "bench", synth, "--config", bad) == 2
    badm = tmp_path / "badm.json"
    badm.write_text('{"m": 1.0}')
    assert usage(capsys, "run", synth, "--config", badm) == 2


def test_config_supplies_required_flag(tmp_path, capsys):
    cfg = tmp_path / "c.json"
    out = tmp_path / "s.csv"
    cfg.write_text(json.dumps({"out": str(out), "n": 20, "dims": 2, "classes": 2}))
    assert run(capsys, "synth", "--config", cfg)[0] == 0
    assert len(out.read_text().splitlines()) == 21
