import hashlib
import json

import pytest

from convtok.cli import default_sim_config, main
from convtok.corpus import TaskToken


def sha(path):
    return hashlib.sha256(path.read_bytes()).hexdigest()


def lines(path):
    return [json.loads(x) for x in path.read_text().splitlines() if x.strip()]


@pytest.fixture
def sim_dir(tmp_path):
    out = tmp_path / "sim"
    assert main(["simulate", str(out), "--n-conversations", "4", "--seed", "5"]) == 0
    return out


class TestSimulate:
    def test_default_config_outputs(self, tmp_path):
        a, b = tmp_path / "a", tmp_path / "b"
        cfg = str(default_sim_config())
        assert main(["simulate", str(a), "--config", cfg]) == 0
        assert main(["simulate", str(b), "--config", cfg]) == 0
        names = ["corpus.jsonl", "utterances.jsonl", "hypotheses.jsonl", "edits.jsonl"]
        for name in names:
            assert (a / name).exists()
            assert sha(a / name) == sha(b / name)
        assert len(lines(a / "corpus.jsonl")) == 20
        assert any(r["word_errors"] for r in lines(a / "edits.jsonl"))

    def test_zero_conversations(self, tmp_path):
        out = tmp_path / "z"
        assert main(["simulate", str(out), "--n-conversations", "0"]) == 0
        for name in ["corpus.jsonl", "utterances.jsonl", "hypotheses.jsonl", "edits.jsonl"]:
            assert (out / name).read_text() == ""

    def test_bad_rate(self, tmp_path, capsys):
        assert main(["simulate", str(tmp_path), "--sub-rate", "2"]) == 1


class TestPrepare:
    def test_asr_only(self, sim_dir, tmp_path):
        out = tmp_path / "asr.jsonl"
        assert main(["prepare", str(sim_dir / "corpus.jsonl"), str(out), "--tasks", ""]) == 0
        for rec in lines(out):
            assert all("t" not in it for it in rec["items"])

    def test_full_and_deterministic(self, sim_dir, tmp_path, capsys):
        a, b = tmp_path / "a.jsonl", tmp_path / "b.jsonl"
        stats = tmp_path / "stats.json"
        corpus = str(sim_dir / "corpus.jsonl")
        assert main(["prepare", corpus, str(a), "--stats-out", str(stats)]) == 0
        assert main(["prepare", corpus, str(b)]) == 0
        assert sha(a) == sha(b)
        assert sha(a) == sha(sim_dir / "utterances.jsonl")
        report = json.loads(stats.read_text())
        assert report["token_counts"]["EP"] >= report["token_counts"]["SC"]
        assert "per word" in capsys.readouterr().out

    def test_max_duration_flag(self, sim_dir, tmp_path):
        out = tmp_path / "short.jsonl"
        assert main(["prepare", str(sim_dir / "corpus.jsonl"), str(out), "--max-dur", "5"]) == 0
        for rec in lines(out):
            assert rec["audio_end"] - rec["audio_start"] <= 5 + 1e-9 or rec.get("oversize")

    def test_bad_task(self, sim_dir, tmp_path):
        assert main(["prepare", str(sim_dir / "corpus.jsonl"), str(tmp_path / "x"), "--tasks", "sc,xx"]) == 1

    def test_malformed_corpus(self, tmp_path, capsys):
        bad = tmp_path / "bad.jsonl"
        bad.write_text('{"id": "conv7", "segments": [{"start": 2, "end": 1, "speaker": "A", "words": ["hi"]}]}\n')
        assert main(["prepare", str(bad), str(tmp_path / "o")]) == 1
        assert "conv7" in capsys.readouterr().err

    def test_missing_file(self, tmp_path):
        assert main(["prepare", str(tmp_path / "nope.jsonl"), str(tmp_path / "o")]) == 2


class TestStats:
    def test_json(self, sim_dir, capsys):
        assert main(["stats", str(sim_dir / "utterances.jsonl"), "--json"]) == 0
        report = json.loads(capsys.readouterr().out)
        assert report["token_counts"]["EP"] > 0


class TestTokenizer:
    def test_train_and_encode(self, sim_dir, tmp_path, capsys):
        vocab = tmp_path / "v.txt"
        utts = str(sim_dir / "utterances.jsonl")
        assert main(["train-tokenizer", utts, str(vocab), "--vocab-size", "300"]) == 0
        out = capsys.readouterr().out
        for t in TaskToken:
            assert f"{t.surface:<6} 1 piece\n" in out
        first = sha(vocab)
        assert main(["train-tokenizer", utts, str(vocab), "--vocab-size", "300"]) == 0
        assert sha(vocab) == first
        enc = tmp_path / "ids.jsonl"
        assert main(["encode", utts, str(vocab), str(enc)]) == 0
        recs = lines(enc)
        assert len(recs) == len(lines(sim_dir / "utterances.jsonl"))
        assert all(isinstance(i, int) for r in recs for i in r["ids"])

    def test_vocab_too_small(self, sim_dir, tmp_path, capsys):
        assert main(["train-tokenizer", str(sim_dir / "utterances.jsonl"), str(tmp_path / "v"), "--vocab-size", "5"]) == 1
        assert "minimum" in capsys.readouterr().err


class TestEvaluate:
    def test_perfect_run(self, tmp_path, capsys):
        out = tmp_path / "s"
        assert main(["simulate", str(out), "--n-conversations", "3"]) == 0
        report, tsv = tmp_path / "r.json", tmp_path / "r.tsv"
        assert main(["evaluate", str(out / "utterances.jsonl"), str(out / "hypotheses.jsonl"),
                     "--out", str(report), "--tsv", str(tsv)]) == 0
        r = json.loads(report.read_text())
        assert r["wer"] == 0.0 and r["der"] == 0.0 and r["ner_exact"]["f1"] == 1.0
        assert tsv.read_text().count("\n") == len(lines(out / "utterances.jsonl")) + 1

    def test_noisy_run(self, tmp_path):
        out = tmp_path / "s"
        assert main(["simulate", str(out), "--n-conversations", "3", "--sub-rate", "0.2", "--noise-seed", "4"]) == 0
        report = tmp_path / "r.json"
        assert main(["evaluate", str(out / "utterances.jsonl"), str(out / "hypotheses.jsonl"), "--out", str(report)]) == 0
        assert 0 < json.loads(report.read_text())["wer"] < 0.4

    def test_missing_hypothesis(self, sim_dir, tmp_path, capsys):
        hyp = tmp_path / "h.jsonl"
        hyp.write_text("\n".join((sim_dir / "hypotheses.jsonl").read_text().splitlines()[1:]) + "\n")
        assert main(["evaluate", str(sim_dir / "utterances.jsonl"), str(hyp)]) == 1
        assert "no hypothesis" in capsys.readouterr().err

    def test_empty_hypotheses(self, sim_dir, tmp_path):
        hyp = tmp_path / "h.jsonl"
        hyp.write_text("")
        assert main(["evaluate", str(sim_dir / "utterances.jsonl"), str(hyp)]) == 1


class TestParsing:
    def test_unknown_flag(self, capsys):
        assert main(["evaluate", "a", "b", "--bogus"]) == 1

    def test_no_command(self):
        assert main([]) == 1

    def test_config_override(self, sim_dir, tmp_path):
        cfg = tmp_path / "c.toml"
        cfg.write_text("max_duration = 4.0\ntasks = 'ep'\n")
        out = tmp_path / "u.jsonl"
        assert main(["prepare", str(sim_dir / "corpus.jsonl"), str(out), "--config", str(cfg)]) == 0
        recs = lines(out)
        assert all(it.get("t") in (None, "EP") for r in recs for it in r["items"])
        assert max(r["audio_end"] - r["audio_start"] for r in recs if not r.get("oversize")) <= 4.0 + 1e-9

    def test_flag_beats_config(self, sim_dir, tmp_path):
        cfg = tmp_path / "c.toml"
        cfg.write_text("tasks = 'ep'\n")
        out = tmp_path / "u.jsonl"
        assert main(["prepare", str(sim_dir / "corpus.jsonl"), str(out), "--config", str(cfg), "--tasks", "sc"]) == 0
        assert all(it.get("t") in (None, "SC") for r in lines(out) for it in r["items"])

    def test_unknown_config_key(self, sim_dir, tmp_path):
        cfg = tmp_path / "c.toml"
        cfg.write_text("vocab_size = 3\n")
        assert main(["prepare", str(sim_dir / "corpus.jsonl"), str(tmp_path / "o"), "--config", str(cfg)]) == 1
