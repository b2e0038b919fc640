import json
import math
import subprocess
import sys

import numpy as np
import pytest

from sinn.checkpoint import load_checkpoint, save_checkpoint
from sinn.cli import EXIT_DATA, EXIT_OK, EXIT_USAGE, main
from sinn.data import SynthSpec, generate_synthetic, load_dataset, save_dataset
from sinn.graph import compile_masks, make_graph, serialize_graph
from sinn.metrics import RECORD_KEYS, parse_record
from sinn.model import init_params, predict
from sinn.observation import ObservationSet

from conftest import TOY


@pytest.fixture
def files(tmp_path):
    graph = tmp_path / "toy.graph"
    graph.write_text(TOY)
    data = tmp_path / "toy.jsonl"
    assert main(["synth", "--graph", str(graph), "--per-class", "6", "--dim", "4", "--noise", "0.3",
                 "--seed", "1", "--out", str(data)]) == EXIT_OK
    return tmp_path, graph, data


def train(tmp_path, graph, data, *extra, name="m.ckpt"):
    ckpt = tmp_path / name
    log = tmp_path / (name + ".log")
    code = main(["train", "--graph", str(graph), "--data", str(data), "--ckpt", str(ckpt),
                 "--out", str(log), "--batch", "5", *extra])
    return code, ckpt, log


def test_synth_byte_identical(files):
    tmp_path, graph, data = files
    other = tmp_path / "again.jsonl"
    main(["synth", "--graph", str(graph), "--per-class", "6", "--dim", "4", "--noise", "0.3",
          "--seed", "1", "--out", str(other)])
    assert other.read_bytes() == data.read_bytes()


def test_synth_invalid_graph(tmp_path, capsys):
    bad = tmp_path / "bad.graph"
    bad.write_text("layer a: x\nlayer b: y\npos a.x b.nope\n")
    assert main(["synth", "--graph", str(bad), "--out", str(tmp_path / "o")]) == EXIT_DATA
    assert "nope" in capsys.readouterr().err


def test_train_log_and_checkpoint(files):
    tmp_path, graph, data = files
    code, ckpt, log = train(tmp_path, graph, data, "--epochs", "15", "--lr", "0.05", "--clip", "5")
    assert code == EXIT_OK
    recs = [json.loads(line) for line in log.read_text().splitlines()]
    assert [r["epoch"] for r in recs] == list(range(1, 16))
    assert set(recs[0]) == {"epoch", "loss", "lr", "wall_time"}
    losses = [r["loss"] for r in recs]
    assert np.mean(losses[-3:]) < np.mean(losses[:3])
    ck = load_checkpoint(ckpt)
    assert ck.params.variant == "sinn" and ck.train["epochs"] == 15


def test_train_deterministic(files):
    tmp_path, graph, data = files
    _, a, _ = train(tmp_path, graph, data, "--epochs", "3", name="a.ckpt")
    _, b, _ = train(tmp_path, graph, data, "--epochs", "3", name="b.ckpt")
    assert a.read_bytes() == b.read_bytes()


def test_epochs_zero_is_init(files):
    tmp_path, graph, data = files
    _, ckpt, _ = train(tmp_path, graph, data, "--epochs", "0", "--variant", "binn", "--seed", "4")
    g = load_checkpoint(ckpt).graph
    init = init_params(g, compile_masks(g), 4, "binn", seed=4)
    assert load_checkpoint(ckpt).params.equals(init)


def test_unknown_variant(files, capsys):
    tmp_path, graph, data = files
    with pytest.raises(SystemExit) as exc:
        train(tmp_path, graph, data, "--variant", "crf")
    assert exc.value.code == EXIT_USAGE
    assert "crf" in capsys.readouterr().err


def test_bad_config_is_usage(files):
    tmp_path, graph, data = files
    code, _, _ = train(tmp_path, graph, data, "--momentum", "1.5")
    assert code == EXIT_USAGE


def test_missing_data_file(files):
    tmp_path, graph, _ = files
    code, _, _ = train(tmp_path, graph, tmp_path / "nope.jsonl")
    assert code == EXIT_DATA


def test_eval_machine_round_trip(files):
    tmp_path, graph, data = files
    _, ckpt, _ = train(tmp_path, graph, data, "--epochs", "3")
    out = tmp_path / "rec.txt"
    assert main(["eval", "--ckpt", str(ckpt), "--data", str(data), "--topn", "2",
                 "--machine", "--out", str(out)]) == EXIT_OK
    res = parse_record(out.read_text())
    assert set(res.layers) == {"scene", "place"}
    assert 0.0 <= res.map_l <= 1.0
    # prec/rec at n=2 against the library computation
    from sinn.experiments import evaluate_model
    ck = load_checkpoint(ckpt)
    direct = evaluate_model(ck.params, load_dataset(data, ck.graph), n=2)
    for k in RECORD_KEYS:
        assert getattr(res, k) == pytest.approx(getattr(direct, k), abs=1e-12, nan_ok=True)


def test_eval_splits_table(files):
    tmp_path, graph, data = files
    _, ckpt, _ = train(tmp_path, graph, data, "--epochs", "2")
    out = tmp_path / "table.txt"
    assert main(["eval", "--ckpt", str(ckpt), "--data", str(data), "--splits", "5",
                 "--out", str(out)]) == EXIT_OK
    text = out.read_text()
    block = text.split("[all]")[1].split("\n\n")[0].strip().splitlines()
    assert [row.split()[0] for row in block[1:]] == ["split"] * 5 + ["mean"]
    assert "±" in block[-1]
    assert "[scene]" in text and "[place]" in text


def test_eval_wrong_graph(files, tmp_path):
    _, graph, data = files
    _, ckpt, _ = train(tmp_path, graph, data, "--epochs", "1")
    other = tmp_path / "other.graph"
    other.write_text(TOY + "pos outdoor beach\n")
    assert main(["eval", "--ckpt", str(ckpt), "--data", str(data), "--graph", str(other)]) == EXIT_DATA


def test_perfect_oracle_all_ones(tmp_path):
    g = make_graph([("kind", ["a", "b", "c"])])
    ds = generate_synthetic(SynthSpec(g, per_class=4, dim=6, noise_sigma=0.0, seed=3))
    data = tmp_path / "clean.jsonl"
    save_dataset(ds, data)
    # prototypes are the class feature rows; score own class high, the rest low
    protos = np.array([ds.features[np.argmax(ds.targets[0], axis=1) == c][0] for c in range(3)])
    cos = protos @ protos.T
    cut = (1.0 + cos[~np.eye(3, dtype=bool)].max()) / 2
    p = init_params(g, None, 6, "logistic")
    p["W_vis.0"] = 100.0 * protos
    p["b_vis.0"] = np.full(3, -100.0 * cut)
    ckpt = tmp_path / "oracle.ckpt"
    save_checkpoint(ckpt, p, g)
    out = tmp_path / "rec.txt"
    assert main(["eval", "--ckpt", str(ckpt), "--data", str(data), "--topn", "1",
                 "--machine", "--out", str(out)]) == EXIT_OK
    res = parse_record(out.read_text())
    for k in RECORD_KEYS:
        assert getattr(res, k) == 1.0, k
    assert res.mc_acc == {"kind": 1.0}


def test_predict_matches_library(files, capsys):
    tmp_path, graph, data = files
    _, ckpt, _ = train(tmp_path, graph, data, "--epochs", "2")
    capsys.readouterr()
    assert main(["predict", "--ckpt", str(ckpt), "--data", str(data), "--machine", "--topn", "3"]) == EXIT_OK
    lines = [json.loads(x) for x in capsys.readouterr().out.splitlines()]
    ck = load_checkpoint(ckpt)
    ds = load_dataset(data, ck.graph)
    masks = compile_masks(ck.graph)
    assert [r["id"] for r in lines] == ds.ids
    labels = ck.graph.layers[1].labels
    for f, rec in zip(ds.features, lines):
        q = predict(ck.params, masks, f)[1]
        place = rec["layers"]["place"]
        assert not place["observed"]
        want = sorted(range(3), key=lambda j: (-q[j], j))
        assert [lab for lab, _ in place["ranking"]] == [labels[j] for j in want]
        assert [x for _, x in place["ranking"]] == [float(q[j]) for j in want]


def test_predict_with_observation(files, capsys):
    tmp_path, graph, data = files
    _, ckpt, _ = train(tmp_path, graph, data, "--epochs", "2")
    obs = tmp_path / "obs.jsonl"
    obs.write_text(json.dumps({"layer": "scene", "labels": ["outdoor"]}) + "\n")
    capsys.readouterr()
    assert main(["predict", "--ckpt", str(ckpt), "--feature", "0.1,0.2,0.3,0.4",
                 "--observe-file", str(obs)]) == EXIT_OK
    text = capsys.readouterr().out
    # default mode maps an observed negative to ln(1/0.999), i.e. probability ~0.5
    assert "scene (observed): outdoor 0.9990, indoor 0.5003" in text
    assert "place (observed)" not in text
    ck = load_checkpoint(ckpt)
    o = ObservationSet.from_labels(ck.graph, "scene", ["outdoor"])
    q = predict(ck.params, compile_masks(ck.graph), np.array([0.1, 0.2, 0.3, 0.4]), o)
    assert f"{q[1].max():.4f}" in text
    assert main(["predict", "--ckpt", str(ckpt), "--feature", "0.1,0.2,0.3,0.4",
                 "--observe-file", str(obs), "--obs-mode", "true_logit"]) == EXIT_OK
    assert "scene (observed): outdoor 0.9990, indoor 0.0010" in capsys.readouterr().out


@pytest.mark.parametrize("content", [
    "{not json\n",
    json.dumps({"layer": "scene"}) + "\n",
    json.dumps({"layer": "scene", "labels": ["attic"]}) + "\n",
    json.dumps({"layer": "nowhere", "labels": []}) + "\n",
    json.dumps({"layer": "scene", "labels": "indoor"}) + "\n",
])
def test_predict_bad_observation_file(files, content):
    tmp_path, graph, data = files
    _, ckpt, _ = train(tmp_path, graph, data, "--epochs", "1")
    obs = tmp_path / "obs.jsonl"
    obs.write_text(content)
    assert main(["predict", "--ckpt", str(ckpt), "--data", str(data), "--observe-file", str(obs)]) == EXIT_DATA


def test_predict_feature_dimension(files):
    tmp_path, graph, data = files
    _, ckpt, _ = train(tmp_path, graph, data, "--epochs", "1")
    assert main(["predict", "--ckpt", str(ckpt), "--feature", "1,2"]) == EXIT_DATA
    assert main(["predict", "--ckpt", str(ckpt)]) == EXIT_USAGE


def test_taxonomy_and_console_script(tmp_path):
    out = tmp_path / "t.graph"
    proc = subprocess.run([sys.executable, "-m", "sinn.cli", "taxonomy", "--sizes", "2,4",
                           "--seed", "0", "--out", str(out)], capture_output=True, text=True)
    assert proc.returncode == 0, proc.stderr
    assert out.read_text().count("layer ") == 2
    proc = subprocess.run([sys.executable, "-m", "sinn.cli", "bogus"], capture_output=True, text=True)
    assert proc.returncode == EXIT_USAGE
