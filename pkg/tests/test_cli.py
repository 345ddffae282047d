import json

import pytest

from videoqg import cli
from videoqg.gradcheck import CheckResult

TINY = """
[data]
n_examples = 30
frame_dim = 12
rng_seed = 1
[model]
d_embed = 8
encoder.d_model = 16
encoder.n_heads = 2
encoder.n_layers = 1
encoder.ffn_dim = 24
decoder.d_word = 8
decoder.d_dec = 16
decoder.n_layers = 1
baseline.d_hidden = 16
baseline.n_layers = 1
[train]
max_steps = 4
batch_size = 8
eval_every = 2
[eval]
max_len = 12
[ablate]
seeds = 0
"""


@pytest.fixture
def workdir(tmp_path):
    (tmp_path / "tiny.ini").write_text(TINY, encoding="utf-8")
    return tmp_path


def run(*argv):
    return cli.main([str(a) for a in argv])


@pytest.fixture
def data_dir(workdir):
    assert run("gen-data", "--spec", workdir / "tiny.ini", "--out", workdir / "data") == 0
    return workdir / "data"


def test_gen_data_is_byte_identical(workdir, data_dir):
    assert run("gen-data", "--spec", workdir / "tiny.ini", "--out", workdir / "again") == 0
    for f in data_dir.iterdir():
        assert f.read_bytes() == (workdir / "again" / f.name).read_bytes()


def test_train_generate_eval(workdir, data_dir, capsys):
    for out in ("a", "b"):
        assert run("train", "--config", workdir / "tiny.ini", "--model", "s2vt",
                   "--data", data_dir, "--out", workdir / out) == 0
    for name in ("metrics.jsonl", "model.ckpt", "summary.json"):
        assert (workdir / "a" / name).read_bytes() == (workdir / "b" / name).read_bytes()
    trace = [json.loads(line) for line in (workdir / "a" / "metrics.jsonl").read_text().splitlines()]
    assert len(trace) == 4 and set(trace[0]) == {"step", "train_loss", "val_loss"}

    assert run("generate", "--checkpoint", workdir / "a" / "model.ckpt", "--data", data_dir, "--beam", 2,
               "--out", workdir / "hyp.txt", "--refs", workdir / "ref.txt") == 0
    n_test = len((workdir / "ref.txt").read_text().splitlines())
    assert len((workdir / "hyp.txt").read_text().splitlines()) == n_test == 3
    capsys.readouterr()
    assert run("eval", "--hyp", workdir / "hyp.txt", "--ref", workdir / "ref.txt", "--out", workdir / "s.json") == 0
    assert "METEOR" in capsys.readouterr().out
    assert set(json.loads((workdir / "s.json").read_text())) == {"bleu1", "bleu4", "rouge_l", "cider", "meteor"}


def test_eval_identical_files(tmp_path, capsys):
    text = "why is penny in the kitchen ?\nwhere is raj running ?\nwho is eating with amy ?\n"
    (tmp_path / "h.txt").write_text(text)
    (tmp_path / "r.txt").write_text(text)
    assert run("eval", "--hyp", tmp_path / "h.txt", "--ref", tmp_path / "r.txt") == 0
    lines = dict(line.split() for line in capsys.readouterr().out.splitlines())
    assert lines["BLEU-4"] == "100.00" and lines["BLEU"] == "100.00"


def test_diversity_one_token_corpus(tmp_path, capsys):
    (tmp_path / "c.txt").write_text("run/NOUN run/VERB\n")
    assert run("diversity", "--input", tmp_path / "c.txt", "--tagged", "--out", tmp_path / "g.json") == 0
    grid = json.loads((tmp_path / "g.json").read_text())
    assert all(v == 1.0 for row in grid.values() for _, v in row)
    assert "100.0" in capsys.readouterr().out


def test_diversity_against_reference(tmp_path):
    (tmp_path / "c.txt").write_text("a a a b\n")
    (tmp_path / "ref.txt").write_text("b b a\n")
    assert run("diversity", "--input", tmp_path / "c.txt", "--reference", tmp_path / "ref.txt",
               "--percent", 50, "--out", tmp_path / "g.json") == 0
    assert json.loads((tmp_path / "g.json").read_text())["unigram"] == [[50.0, 0.25]]


def test_grad_check_exit_codes(monkeypatch, capsys):
    assert run("grad-check", "--model", "imgd") == 0
    monkeypatch.setattr("videoqg.gradcheck.check_ops", lambda seed=0: [CheckResult("op:broken", 1.0, 1e-4)])
    assert run("grad-check") == cli.EXIT_NUMERIC
    assert capsys.readouterr().err.splitlines()[-1].startswith("error: NumericError:")


def test_ablate_and_report(workdir, data_dir, capsys):
    assert run("ablate", "--config", workdir / "tiny.ini", "--data", data_dir, "--out", workdir / "r1") == 0
    assert run("ablate", "--config", workdir / "tiny.ini", "--data", data_dir, "--out", workdir / "r2") == 0
    for name in ("report.jsonl", "report.txt"):
        assert (workdir / "r1" / name).read_bytes() == (workdir / "r2" / name).read_bytes()
    records = (workdir / "r1" / "report.jsonl").read_text().splitlines()
    assert len(records) == 5
    capsys.readouterr()
    assert run("report", "--input", workdir / "r1" / "report.jsonl") == 0
    assert capsys.readouterr().out == (workdir / "r1" / "report.txt").read_text()


def test_config_error_exit(workdir, capsys):
    code = run("gen-data", "--spec", workdir / "tiny.ini", "--set", "data.n_exampels=3", "--out", workdir / "x")
    assert code == cli.EXIT_CONFIG
    err = capsys.readouterr().err.strip().splitlines()
    assert len(err) == 1 and err[0].startswith("error: ConfigError:") and "data.n_exampels" in err[0]


def test_data_error_exits(workdir, data_dir, capsys):
    assert run("train", "--data", workdir / "missing", "--out", workdir / "o") == cli.EXIT_DATA
    frames = data_dir / "frames.bin"
    frames.write_bytes(b"JUNK" + frames.read_bytes()[4:])
    assert run("train", "--config", workdir / "tiny.ini", "--data", data_dir, "--out", workdir / "o") == cli.EXIT_DATA
    assert "MagicError" in capsys.readouterr().err
