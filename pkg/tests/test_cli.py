import json

import pytest

from ocdkit.cli import main
from ocdkit.decode_metrics import read_metrics_csv


def run(capsys, *argv):
    code = main(list(argv))
    return code, capsys.readouterr()


def test_qvalues_table(capsys):
    code, out = run(capsys, "qvalues", "SATRAPY", "SUNDAY")
    assert code == 0
    lines = out.out.strip().splitlines()
    assert lines[0].split() == ["prefix", "m", "Q", "optimal"]
    assert lines[-2].split()[:3] == ["SATRAP", "4", "-4"] and "{Y, </s>}" in lines[-2]


def test_qvalues_json(capsys):
    code, out = run(capsys, "qvalues", "--hyp", "SA", "--ref", "SUNDAY", "--format", "json")
    assert code == 0
    rows = json.loads(out.out)["rows"]
    assert [r["m"] for r in rows] == [0, 0, 1]
    assert rows[2]["optimal"] == ["U", "N"] and rows[2]["q"] == -1


def test_qvalues_empty_hypothesis(capsys):
    code, out = run(capsys, "qvalues", "", "AB", "--format", "json")
    assert code == 0
    assert json.loads(out.out)["rows"] == [{"prefix": "", "m": 0, "optimal": ["A"], "q": 0}]


def test_qvalues_unknown_character(capsys):
    code, out = run(capsys, "qvalues", "AZ", "AB", "--vocab", "AB")
    assert code == 2
    assert "unknown character 'Z'" in out.err


def test_gen_deterministic(tmp_path, capsys):
    for name in ("a", "b"):
        assert main(["gen", "--task", "reverse", "--out-dir", str(tmp_path / name), "--n-train", "20", "--n-val", "5", "--n-test", "5", "--seed", "3"]) == 0
    for f in ("train.jsonl", "val.jsonl", "test.jsonl", "vocab.json"):
        assert (tmp_path / "a" / f).read_bytes() == (tmp_path / "b" / f).read_bytes()
    train = (tmp_path / "a" / "train.jsonl").read_text().splitlines()
    assert len(train) == 20
    rec = json.loads(train[0])
    assert rec["y"] == rec["x"][::-1]


def test_gen_word_reverse_has_spaces(tmp_path):
    out = tmp_path / "w.jsonl"
    assert main(["gen", "--task", "word_reverse", "--out", str(out), "--n", "10", "--min-len", "1", "--max-len", "3"]) == 0
    for line in out.read_text().splitlines():
        assert " " in json.loads(line)["x"]


def test_gen_rejects_bad_arguments(tmp_path, capsys):
    assert main(["gen", "--task", "sort", "--out", str(tmp_path / "x")]) == 2
    assert main(["gen", "--task", "copy", "--out", str(tmp_path / "x"), "--min-len", "5", "--max-len", "2"]) == 2
    assert main(["gen", "--task", "copy"]) == 2


def test_oracle_check_cli(capsys):
    code, out = run(capsys, "oracle-check", "--trials", "20", "--seed", "4")
    assert code == 0
    code, out = run(capsys, "oracle-check", "--trials", "0", "--json")
    assert code == 0 and json.loads(out.out)["trials"] == 0


@pytest.fixture
def trained(tmp_path):
    data = tmp_path / "data"
    main(["gen", "--task", "reverse", "--out-dir", str(data), "--n-train", "40", "--n-val", "8", "--n-test", "8", "--min-len", "2", "--max-len", "4", "--vocab", "abc"])
    cfg = {
        "method": "ocd",
        "steps": 20,
        "batch_size": 4,
        "eval_every": 10,
        "beam": 2,
        "train_eval_n": 8,
        "model": {"embed_dim": 8, "hidden_dim": 8, "use_attention": True},
        "train_data": "data/train.jsonl",
        "val_data": "data/val.jsonl",
        "vocab": "data/vocab.json",
        "out_dir": "run",
    }
    path = tmp_path / "config.json"
    path.write_text(json.dumps(cfg))
    return tmp_path, path


def test_train_then_eval(trained, capsys):
    root, cfg = trained
    assert main(["train", str(cfg)]) == 0
    rows = read_metrics_csv(root / "run" / "metrics.csv")
    assert {r["split"] for r in rows} == {"train", "val"}
    assert [int(r["step"]) for r in rows if r["split"] == "val"] == [10, 20]
    capsys.readouterr()
    out = root / "eval.csv"
    code = main(["eval", "--ckpt", str(root / "run" / "checkpoint.json"), "--data", str(root / "data" / "test.jsonl"), "--beam-list", "1,2,4,8,16", "--out", str(out)])
    assert code == 0
    rows = read_metrics_csv(out)
    assert [int(r["beam"]) for r in rows] == [1, 2, 4, 8, 16]


def test_train_overrides_are_deterministic(trained):
    root, cfg = trained
    for name in ("r1", "r2"):
        assert main(["train", str(cfg), "--steps", "10", "--out-dir", str(root / name)]) == 0
    assert (root / "r1" / "metrics.csv").read_bytes() == (root / "r2" / "metrics.csv").read_bytes()


def test_eval_rejects_bad_checkpoint_version(trained, capsys):
    root, cfg = trained
    main(["train", str(cfg), "--steps", "2", "--eval-every", "1"])
    ckpt = root / "run" / "checkpoint.json"
    doc = json.loads(ckpt.read_text())
    doc["version"] = 99
    ckpt.write_text(json.dumps(doc))
    capsys.readouterr()
    code, out = run(capsys, "eval", "--ckpt", str(ckpt), "--data", str(root / "data" / "test.jsonl"))
    assert code == 2 and "version" in out.err


def test_train_config_errors_name_the_field(trained, capsys):
    root, cfg = trained
    code, out = run(capsys, "train", str(cfg), "--lr", "-1", "--method", "beamy")
    assert code == 2
    assert "lr:" in out.err and "method:" in out.err
    doc = json.loads(cfg.read_text())
    doc["learning_rate"] = 0.1
    cfg.write_text(json.dumps(doc))
    code, out = run(capsys, "train", str(cfg))
    assert code == 2 and "learning_rate" in out.err


def test_train_rejects_schedule_without_ss(trained, capsys):
    root, cfg = trained
    doc = json.loads(cfg.read_text())
    doc["schedule"] = {"p_start": 0.0, "p_end": 0.5, "ramp_steps": 10}
    cfg.write_text(json.dumps(doc))
    code, out = run(capsys, "train", str(cfg))
    assert code == 2 and "schedule:" in out.err
