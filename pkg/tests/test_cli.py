import csv
import io
import json
from importlib import resources

import numpy as np
import pytest

from flightbp import cli, data_pipeline as dp, modelfile, synthetic
from flightbp.config import load_config, with_overrides
from flightbp.evaluation import parse_report, predict_class
from flightbp.nn_core import LayerParams, NetworkParams, init_network, network_forward

SAMPLE = resources.files("flightbp") / "data" / "synthetic_accidents_sample.csv"


def write_config(path, **sections):
    path.write_text(json.dumps(sections))
    return str(path)


def read_csv(path):
    with open(path, newline="", encoding="utf-8") as fh:
        return list(csv.reader(fh))


@pytest.fixture
def gaussians(tmp_path):
    path = tmp_path / "gauss.csv"
    path.write_text(synthetic.gaussian_accidents(120, seed=7, spread=0.5), encoding="utf-8")
    return path


def coordinate_config(tmp_path, **train):
    return write_config(
        tmp_path / "cfg.json",
        features={"numeric": ["latitude", "longitude"], "categorical": []},
        network={"hidden": [4]},
        train={"learning_rate": 0.05, "max_epochs": 30, **train},
    )


def test_preprocess_conserves_and_is_deterministic(tmp_path, caplog):
    outs = []
    for run in ("a", "b"):
        out = tmp_path / run
        assert cli.main(["preprocess", "--data", str(SAMPLE), "--out-dir", str(out)]) == 0
        outs.append(out)
    rejections = (outs[0] / "rejections.txt").read_text()
    kept = int(rejections.split("kept:")[1].split()[0])
    sizes = [len(read_csv(outs[0] / f"{s}.csv")) - 1 for s in cli.SPLITS]
    assert sum(sizes) == kept
    manifest = read_csv(outs[0] / "manifest.csv")
    assert manifest[0] == ["row", "split"] and len(manifest) - 1 == kept
    for f in sorted(p.name for p in outs[0].iterdir()):
        assert (outs[0] / f).read_bytes() == (outs[1] / f).read_bytes(), f


def test_preprocess_missing_column(tmp_path, capsys):
    rows = read_csv(SAMPLE)
    drop = rows[0].index("Engine Type")
    path = tmp_path / "short.csv"
    with open(path, "w", newline="") as fh:
        csv.writer(fh).writerows([r[:drop] + r[drop + 1:] for r in rows])
    assert cli.main(["preprocess", "--data", str(path), "--out-dir", str(tmp_path / "o")]) == 8
    err = capsys.readouterr().err
    assert err.count("error:") == 1 and "engine_type" in err


def test_invalid_config_exit_code(tmp_path, capsys):
    cfg = write_config(tmp_path / "bad.json", train={"learning_rate": -1}, network={"hidden": []})
    assert cli.main(["preprocess", "--config", cfg, "--data", str(SAMPLE)]) == 2
    err = capsys.readouterr().err
    assert "learning_rate" in err and "network.hidden" in err


def test_missing_input_file(tmp_path):
    assert cli.main(["preprocess", "--data", str(tmp_path / "nope.csv"), "--out-dir", str(tmp_path)]) == 15


def test_train_round_trip_and_history(tmp_path, gaussians):
    out = tmp_path / "run"
    cfg = coordinate_config(tmp_path)
    assert cli.main(["train", "--config", cfg, "--data", str(gaussians), "--out-dir", str(out), "--seed", "7"]) == 0
    model = modelfile.load(out / "model.json")
    history = (out / "history.txt").read_text().splitlines()
    assert len(history) == model.provenance["epochs_run"] == 30
    assert model.provenance["seed"] == 7
    # reloaded predictions equal the in-memory ones from an independent retrain
    mem, _ = cli.run_train(with_overrides(load_config(cfg), data=str(gaussians), out_dir=str(tmp_path / "again"), seed=7))
    assert mem.network.equals(model.network)
    test = dp.dataset_from_csv((out / "encoded_test.csv").read_text(), model.schema)
    for x in test.features:
        assert network_forward(model.network, x).output.tobytes() == network_forward(mem.network, x).output.tobytes()


def test_zero_learning_rate_saves_initial_weights(tmp_path, gaussians):
    out = tmp_path / "run"
    cfg = coordinate_config(tmp_path, learning_rate=0.0)
    assert cli.main(["train", "--config", cfg, "--data", str(gaussians), "--out-dir", str(out), "--seed", "3"]) == 0
    model = modelfile.load(out / "model.json")
    assert model.network.equals(init_network([2, 4, 1], seed=3))


def test_train_reuses_preprocessed_splits(tmp_path, gaussians):
    out = str(tmp_path / "run")
    cfg = coordinate_config(tmp_path, max_epochs=3)
    assert cli.main(["preprocess", "--config", cfg, "--data", str(gaussians), "--out-dir", out]) == 0
    assert cli.main(["train", "--config", cfg, "--out-dir", out]) == 0
    assert len((tmp_path / "run" / "history.txt").read_text().splitlines()) == 3


def test_evaluate_writes_consistent_report(tmp_path, gaussians, capsys):
    out = tmp_path / "run"
    cfg = coordinate_config(tmp_path)
    cli.main(["train", "--config", cfg, "--data", str(gaussians), "--out-dir", str(out)])
    capsys.readouterr()
    assert cli.main(["evaluate", "--out-dir", str(out)]) == 0
    assert "accuracy:" in capsys.readouterr().out
    parsed = parse_report((out / "report.txt").read_text())
    counts = np.array(parsed["confusion"])
    assert parsed["accuracy"] == np.trace(counts) / counts.sum()
    assert counts.sum() == len(read_csv(out / "test.csv")) - 1


def oracle_model(path):
    """Latitude-only model calling Fatal exactly when latitude < 38."""
    schema = dp.FeatureSchema((dp.NumericFeature("latitude", 38.0, 1.0),), ())
    net = NetworkParams((LayerParams([[1.0]], [0.0], "identity"), LayerParams([[-100.0]], [0.0])), 1)
    modelfile.save(modelfile.ModelFile(schema, net, schema.class_names), path)
    return path


def test_evaluate_oracle_stub(tmp_path, gaussians, capsys):
    model = oracle_model(tmp_path / "oracle.json")
    assert cli.main(["evaluate", "--model", str(model), "--dataset", str(gaussians),
                     "--report", str(tmp_path / "r.txt")]) == 0
    assert "accuracy: 1.0000" in capsys.readouterr().out
    assert parse_report((tmp_path / "r.txt").read_text())["accuracy"] == 1.0


def test_evaluate_schema_mismatch(tmp_path, capsys):
    model = oracle_model(tmp_path / "oracle.json")
    data = tmp_path / "other.csv"
    data.write_text("Injury Severity,Longitude\nFatal,-90\n")
    code = cli.main(["evaluate", "--model", str(model), "--dataset", str(data), "--report", str(tmp_path / "r")])
    assert code == 10
    err = capsys.readouterr().err
    assert "expected: injury_severity, latitude" in err and "missing:  latitude" in err


def test_predict(tmp_path, gaussians, capsys):
    out = tmp_path / "run"
    cfg = write_config(tmp_path / "cfg.json", network={"hidden": [3]}, train={"max_epochs": 5})
    sample = tmp_path / "sample.csv"
    sample.write_text(SAMPLE.read_text())
    assert cli.main(["train", "--config", cfg, "--data", str(sample), "--out-dir", str(out)]) == 0
    model = modelfile.load(out / "model.json")

    rows = read_csv(out / "train.csv")
    header, first = rows[0], rows[1]
    unseen = list(first)
    unseen[header.index("Make")] = "Zeppelin Works"
    unseen[header.index("Row")] = "999"
    broken = list(first)
    broken[header.index("Latitude")] = ""
    broken[header.index("Row")] = "1000"
    inp = tmp_path / "in.csv"
    with open(inp, "w", newline="") as fh:
        csv.writer(fh).writerows([header, first, unseen, broken])
    capsys.readouterr()
    assert cli.main(["predict", "--out-dir", str(out), "--input", str(inp)]) == 0
    captured = capsys.readouterr()
    lines = list(csv.reader(io.StringIO(captured.out)))
    assert lines[0] == ["row", "predicted", "score_0"]
    assert [l[0] for l in lines[1:]] == [first[header.index("Row")], "999"]
    assert "row 1000 skipped: missing latitude" in captured.err
    assert "predicted 2 row(s), skipped 1" in captured.err

    rec = dp.clean_records(dp.parse_records(inp.read_bytes())[0][:1], model.schema.feature_config)[0][0]
    expect = model.class_names[predict_class(model.network, dp.encode_features(rec, model.schema))]
    assert lines[1][1] == expect
    make_block = model.schema.categorical[0]
    x = dp.encode_features(dp.prepare_unlabeled(dp.parse_records(inp.read_bytes())[0][1], model.schema.feature_config),
                           model.schema)
    assert x[len(model.schema.numeric) + make_block.unknown_index] == 1.0


def test_predict_empty_input(tmp_path, capsys):
    model = oracle_model(tmp_path / "oracle.json")
    empty = tmp_path / "empty.csv"
    empty.write_text("")
    assert cli.main(["predict", "--model", str(model), "--input", str(empty)]) == 0
    assert capsys.readouterr().out == "row,predicted,score_0\n"


def test_gradcheck_commands(capsys):
    assert cli.main(["gradcheck", "--dims", "4-8-3", "--seed", "1"]) == 0
    assert "result: PASS" in capsys.readouterr().out
    assert cli.main(["gradcheck", "--dims", "4-8-3", "--seed", "1", "--tolerance", "1e-16"]) == 1
    assert "result: FAIL" in capsys.readouterr().out
    assert cli.main(["gradcheck", "--dims", "2-1", "--seed", "5"]) == 4


def test_synth_writes_bundled_sample(tmp_path):
    out = tmp_path / "s.csv"
    assert cli.main(["synth", "--output", str(out)]) == 0
    assert out.read_bytes() == SAMPLE.read_bytes()
