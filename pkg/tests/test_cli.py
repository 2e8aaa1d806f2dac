import csv

import pytest

from moedti.cli import main

from conftest import TINY


@pytest.fixture(scope="module")
def cli_world(tmp_path_factory):
    root = tmp_path_factory.mktemp("cli")
    cfg = root / "tiny.cfg"
    cfg.write_text("".join(f"{k} = {v}\n" for k, v in TINY.items()))
    assert main(["gen-synth", "--config", str(cfg), "--out", str(root / "world")]) == 0
    return root, cfg


def test_pretrain_train_predict_evaluate(cli_world, capsys):
    root, cfg = cli_world
    world = str(root / "world")
    emb = str(root / "kg.emb")
    assert main(["pretrain-kg", "--config", str(cfg), "--data", world, "--out", emb]) == 0
    model = str(root / "model.npz")
    assert main(["train", "--config", str(cfg), "--data", world, "--embeddings", emb, "--shots", "3",
                 "--seed", "0", "--out", model, "--log", str(root / "log.csv")]) == 0
    assert "held-out" in capsys.readouterr().out

    pairs = root / "pairs.tsv"
    pairs.write_text("DRUG000\tGENE000\nDRUG001\tGENE002\nNOPE\tGENE000\n")
    out = root / "pred.tsv"
    assert main(["predict", "--model", model, "--pairs", str(pairs), "--out", str(out)]) == 0
    rows = list(csv.DictReader(open(out), delimiter="\t"))
    assert [r["status"] for r in rows] == ["both", "both", "error"]
    assert rows[2]["p"] == "nan"
    for r in rows[:2]:
        p, w, pe, pi = (float(r[k]) for k in ("p", "w", "p_ex", "p_in"))
        assert p == pytest.approx(w * pe + (1 - w) * pi, abs=1e-12)

    assert main(["predict", "--model", model, "--pairs", str(pairs), "--only-intrinsic",
                 "--out", str(out)]) == 0
    labeled = root / "labeled.tsv"
    labeled.write_text("DRUG000\tGENE000\t1\nDRUG001\tGENE002\t0\nDRUG003\tGENE001\t1\n")
    assert main(["evaluate", "--model", model, "--pairs", str(labeled)]) == 0
    assert '"AUC"' in capsys.readouterr().out


def test_kg_stats(cli_world, capsys):
    root, _ = cli_world
    w = root / "world"
    assert main(["kg", "stats", "--triples", str(w / "triples.tsv"), "--drugs", str(w / "drugs.txt"),
                 "--targets", str(w / "targets.txt")]) == 0
    assert "after_leakage_filter" in capsys.readouterr().out


def test_parse_smiles(capsys):
    assert main(["parse-smiles", "CCO", "--dump-graph"]) == 0
    assert "atoms=3" in capsys.readouterr().out
    assert main(["parse-smiles", "C1CC"]) == 1
    assert "UnclosedRingError" in capsys.readouterr().out


def test_bad_override_reports_error(tmp_path, capsys):
    assert main(["gen-synth", "--set", "synergy.alpha_a=5", "--out", str(tmp_path)]) == 2
    assert "alpha_a" in capsys.readouterr().err


def test_gradcheck_subset(capsys):
    assert main(["gradcheck", "--configs", "2"]) == 0
    assert "gate" in capsys.readouterr().out
