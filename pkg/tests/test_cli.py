import subprocess
import sys


from meshqs.cli import main

from conftest import run_pipeline


def test_help_exits_zero(capsys):
    assert main(["--help"]) == 0
    assert "usage" in capsys.readouterr().out


def test_module_entry_point():
    out = subprocess.run([sys.executable, "-m", "meshqs", "--help"], capture_output=True, text=True)
    assert out.returncode == 0 and "synth" in out.stdout


def test_missing_input_exit_2(tmp_path, capsys):
    assert main(["ingest", "--events", str(tmp_path / "nope.tsv"), "--out", str(tmp_path / "o")]) == 2
    assert "category=usage" in capsys.readouterr().err


def test_bad_flag_exit_2():
    assert main(["train", "--bogus"]) == 2


def test_bad_config_exit_2(tmp_path, capsys):
    (tmp_path / "c.yaml").write_text("train:\n  learning_rate: 1\n")
    assert main(["synth", "--config", str(tmp_path / "c.yaml"), "--out", str(tmp_path / "s")]) == 2
    assert "category=configuration" in capsys.readouterr().err


def test_runtime_error_exit_1(tmp_path, capsys):
    (tmp_path / "bad.tsv").write_text("u\tnot-a-time\tquery\tx\n")
    assert main(["ingest", "--events", str(tmp_path / "bad.tsv"), "--out", str(tmp_path / "o")]) == 1
    assert "meshqs: error category=" in capsys.readouterr().err


def test_tokenizer_commands(tmp_path, capsys):
    (tmp_path / "c.txt").write_text("data engineer\nnurse\n")
    assert main(["tokenizer", "train", "--workdir", str(tmp_path), "--corpus", "c.txt", "--vocab-size", "270", "--out", "v.txt"]) == 0
    assert main(["tokenizer", "encode", "--workdir", str(tmp_path), "--vocab", "v.txt", "nurse"]) == 0
    ids = capsys.readouterr().out.split()
    assert ids[0] == "0" and ids[-1] == "1"


def test_full_pipeline(tmp_path):
    run_pipeline(tmp_path, steps=20)
    for name in ("synth/labels.tsv", "corpus/train.jsonl", "corpus/vocab.txt", "run/best.pt", "run/train_log.jsonl",
                 "run/resolved_config.yaml", "sugg.tsv", "attention.tsv", "reports/mesh/aggregate.txt"):
        assert (tmp_path / name).exists(), name
    stats = (tmp_path / "corpus/filter_stats.txt").read_text()
    assert "input_sessions=200" in stats

    w = ["--workdir", str(tmp_path)]
    assert main(["hypotheses", "--sessions", "corpus/test.jsonl", "--out", "hyp.jsonl"] + w) == 0
    assert main(["mps", "build", "--train", "corpus/train.jsonl", "--out", "pool.txt"] + w) == 0
    assert main(["mps", "suggest", "--pool", "pool.txt", "--sessions", "corpus/test.jsonl", "--k", "3", "--out", "mps.tsv"] + w) == 0
    assert main(["evaluate", "--refs", "corpus/test.jsonl", "--suggestions", "mps.tsv", "--method", "mps", "--k", "1,3",
                 "--model", "run/best.pt", "--out", "reports/mps"] + w) == 0
    assert main(["analyze", "--reports", "reports", "--sessions", "corpus/test.jsonl", "--model", "run/best.pt",
                 "--pool", "pool.txt", "--suggestions", "sugg.tsv", "--out", "analysis"] + w) == 0
    for name in ("length_buckets.tsv", "win_tie_loss.tsv", "click_contingency.tsv", "attention_by_length.tsv", "novelty.txt"):
        assert (tmp_path / "analysis" / name).exists(), name


def test_suggest_rejects_k_above_width(tmp_path):
    run_pipeline(tmp_path, steps=2)
    assert main(["suggest", "--workdir", str(tmp_path), "--model", "run/best.pt", "--sessions", "corpus/test.jsonl",
                 "--k", "5", "--width", "2", "--out", "x.tsv"]) == 2
