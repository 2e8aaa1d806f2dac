import csv
import math

from moedti.ablation import METRIC_FIELDS, VARIANTS, DataPaths, run_ablation, summarize, write_metrics_csv, \
    write_summary_csv


def rows_of(path):
    with open(path, encoding="utf-8") as fh:
        return list(csv.DictReader(line for line in fh if not line.startswith("#")))


def test_ablation_rows_and_byte_identical_rerun(tiny_world, tmp_path):
    cfg, table = tiny_world["cfg"], tiny_world["table"]
    paths = DataPaths.from_dir(tiny_world["paths"]["triples"].parent)
    outs = []
    for run in ("a", "b"):
        rows = run_ablation(paths, cfg, shots=[3], seeds=[0, 1], table=table)
        out = tmp_path / f"{run}.csv"
        write_metrics_csv(rows, out, cfg)
        write_summary_csv(rows, tmp_path / f"{run}_summary.csv", cfg)
        outs.append(out)
    assert outs[0].read_bytes() == outs[1].read_bytes()
    assert (tmp_path / "a_summary.csv").read_bytes() == (tmp_path / "b_summary.csv").read_bytes()

    parsed = rows_of(outs[0])
    assert len(parsed) == len(VARIANTS) * 2
    assert tuple(parsed[0]) == METRIC_FIELDS
    for r in parsed:
        assert r["status"] == "ok"
        assert 0 <= float(r["AUC"]) <= 1
    text = outs[0].read_text()
    assert text.startswith(f"# config fingerprint {cfg.fingerprint()}")
    assert "# synergy.gamma_a = 2" in text

    summary = summarize(rows)
    assert len(summary) == len(VARIANTS)
    assert all(s["n_seeds"] == 2 and not math.isnan(s["AUC_mean"]) for s in summary)
