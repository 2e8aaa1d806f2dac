"""Command-line entry point: ``moedti <subcommand> ...``."""
from __future__ import annotations

import argparse
import csv
import json
import logging
import sys
import time
from pathlib import Path

import numpy as np

from .config import load_config
from .errors import MoeDtiError


def _common(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", help="flat 'section.key = value' config file")
    p.add_argument("--set", action="append", default=[], metavar="KEY=VALUE",
                   help="override one config entry (repeatable)")


def _data_args(p: argparse.ArgumentParser, kg: bool = True) -> None:
    p.add_argument("--data", help="directory laid out like gen-synth output")
    if kg:
        p.add_argument("--triples")
        p.add_argument("--drugs")
        p.add_argument("--targets")
    p.add_argument("--positives")
    p.add_argument("--negatives")
    p.add_argument("--smiles")
    p.add_argument("--sequences")


def _paths(args):
    from .ablation import DataPaths

    base = DataPaths.from_dir(args.data) if args.data else None
    fields = {}
    for name in ("triples", "drugs", "targets", "smiles", "sequences", "positives", "negatives"):
        given = getattr(args, name, None)
        fields[name] = Path(given) if given else (getattr(base, name) if base else None)
    missing = [k for k, v in fields.items() if v is None and k != "negatives"]
    if missing:
        raise SystemExit(f"missing input paths: {', '.join(missing)} (use --data or explicit flags)")
    return DataPaths(**fields)


def _ints(text: str) -> list[int]:
    return [int(x) for x in text.split(",") if x.strip()]


# ---------------------------------------------------------------- subcommands

def cmd_gen_synth(args) -> int:
    from .synth import generate_synthetic_world

    cfg = load_config(args.config, args.set)
    world = generate_synthetic_world(cfg.synth, args.seed)
    paths = world.write(args.out)
    print(f"wrote {len(paths)} files to {args.out}: {len(world.drug_ids)} drugs, "
          f"{len(world.target_ids)} targets, {len(world.triples)} triples "
          f"({world.leaked} drug-target), base rate {world.base_rate():.3f}")
    return 0


def cmd_pretrain_kg(args) -> int:
    from .kg_embed import pretrain, save_embeddings
    from .kgraph import load_kg, remove_dti_leakage

    cfg = load_config(args.config, args.set)
    paths = _paths(args)
    kg = remove_dti_leakage(load_kg(paths.triples, paths.drugs, paths.targets))
    table = pretrain(kg, cfg.kg.method, cfg.kg.dim, cfg.kg.margin, cfg.kg.epochs, cfg.kg.lr,
                     cfg.kg.seed, batch_size=cfg.kg.batch_size)
    save_embeddings(table, args.out)
    print(f"{cfg.kg.method}: {kg.n_entities} entities, removed {kg.removed_leakage} drug-target "
          f"triples, final loss {table.final_loss:.6f} -> {args.out}")
    return 0


def cmd_kg(args) -> int:
    from .kgraph import load_kg, remove_dti_leakage

    kg = load_kg(args.triples, args.drugs, args.targets)
    before = kg.stats()
    after = remove_dti_leakage(kg).stats()
    print(json.dumps({"loaded": before, "after_leakage_filter": after}, indent=2, sort_keys=True))
    return 0


def _table(args, cfg, paths):
    from .ablation import prepare_embeddings
    from .kg_embed import check_vocabulary, load_embeddings
    from .kgraph import load_kg, remove_dti_leakage

    if args.embeddings:
        table = load_embeddings(args.embeddings)
        check_vocabulary(table, remove_dti_leakage(load_kg(paths.triples, paths.drugs, paths.targets)))
        return table
    return prepare_embeddings(paths, cfg)[1]


def cmd_train(args) -> int:
    from .ablation import evaluate
    from .data import load_dti_dataset
    from .moe import save_bundle
    from .synergy import run_training

    cfg = load_config(args.config, args.set)
    seed = cfg.train.seed if args.seed is None else args.seed
    paths = _paths(args)
    table = _table(args, cfg, paths)
    ds = load_dti_dataset(paths.positives, paths.negatives, paths.smiles, paths.sequences, args.shots,
                          seed, cfg.eval.test_negative_ratio, cfg.cnn.max_len)
    t0 = time.time()
    res = run_training(ds, table, cfg, seed=seed, use_pseudo=not args.ground_truth_only)
    save_bundle(res.model, args.out, extra={"seed": seed, "shots": args.shots, "notes": ds.notes})
    if args.log:
        res.log.write_csv(args.log)
    row = evaluate(res.model, ds, "both", cfg.eval.threshold)
    print(f"trained in {time.time() - t0:.1f}s; held-out ACC {row.acc:.4f} AUC {row.auc:.4f} "
          f"AUPR {row.aupr:.4f} on {row.n} pairs -> {args.out}")
    return 0


def _mode(args) -> str:
    if args.only_intrinsic and args.only_extrinsic:
        raise SystemExit("--only-intrinsic and --only-extrinsic are exclusive")
    return "intrinsic" if args.only_intrinsic else "extrinsic" if args.only_extrinsic else "both"


def cmd_predict(args) -> int:
    from .data import read_table
    from .moe import load_bundle

    model, _ = load_bundle(args.model)
    rows = read_table(args.pairs, 2)
    pred = model.predict(rows, mode=_mode(args))
    out = open(args.out, "w", encoding="utf-8", newline="") if args.out else sys.stdout
    try:
        w = csv.writer(out, delimiter="\t", lineterminator="\n")
        w.writerow(["drug_id", "target_id", "p", "w", "p_ex", "p_in", "status"])
        for (d, t), p, wt, pe, pi, st in zip(rows, pred.p, pred.w, pred.p_ex, pred.p_in, pred.status):
            w.writerow([d, t] + [("nan" if np.isnan(x) else repr(float(x))) for x in (p, wt, pe, pi)] + [st])
    finally:
        if args.out:
            out.close()
    n_err = pred.status.count("error")
    if n_err:
        print(f"{n_err} pairs had neither perspective available", file=sys.stderr)
    return 0


def cmd_evaluate(args) -> int:
    from .data import read_table
    from .metrics import compute_metrics
    from .moe import load_bundle

    model, meta = load_bundle(args.model)
    rows = read_table(args.pairs, 3)
    pairs = [(d, t) for d, t, _ in rows]
    labels = np.array([int(l) for _, _, l in rows])
    pred = model.predict(pairs, mode=_mode(args))
    ok = ~np.isnan(pred.p)
    r = compute_metrics(pred.p[ok], labels[ok], args.threshold)
    print(json.dumps({"ACC": r.acc, "AUC": r.auc, "AUPR": r.aupr, "n": r.n, "n_pos": r.n_pos,
                      "unscored": int((~ok).sum()), "mode": _mode(args),
                      "config_fingerprint": meta["fingerprint"]}, indent=2))
    return 0


def cmd_ablate(args) -> int:
    from .ablation import run_ablation, write_metrics_csv, write_summary_csv

    cfg = load_config(args.config, args.set)
    paths = _paths(args)
    t0 = time.time()
    table = _table(args, cfg, paths)
    rows = run_ablation(paths, cfg, _ints(args.shots), _ints(args.seeds), args.dataset, table)
    write_metrics_csv(rows, args.out, cfg)
    if args.summary:
        write_summary_csv(rows, args.summary, cfg)
    failed = sum(r.metrics is None for r in rows)
    print(f"{len(rows)} rows ({failed} failed) in {time.time() - t0:.0f}s -> {args.out}")
    return 1 if failed else 0


def cmd_parse_smiles(args) -> int:
    from .smiles import SmilesError, parse_smiles

    status = 0
    for s in args.smiles:
        try:
            g = parse_smiles(s)
        except SmilesError as exc:
            print(f"{s}\terror\t{type(exc).__name__}\toffset={exc.offset}\t{exc}")
            status = 1
            continue
        print(f"{s}\tatoms={g.n_atoms}\tbonds={len(g.bonds)}\t"
              f"hydrogens={sum(a.hydrogens for a in g.atoms)}")
        if args.dump_graph:
            print(g.adjacency_listing())
    return status


def cmd_gradcheck(args) -> int:
    from .selfcheck import run_gradchecks

    t0 = time.time()
    reports = run_gradchecks(args.configs, args.seed)
    bad = 0
    for r in reports:
        verdict = "ok" if r.ok(args.tol) else "FAIL"
        bad += verdict != "ok"
        print(f"{r.component:14s} {r.configs:3d} configs  max rel err {r.worst:.3e}  "
              f"(skipped {r.skipped} near kinks)  {verdict}")
    print(f"{time.time() - t0:.1f}s")
    return 1 if bad else 0


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="moedti", description=__doc__)
    ap.add_argument("-v", "--verbose", action="count", default=0)
    sub = ap.add_subparsers(dest="command", required=True)

    p = sub.add_parser("gen-synth", help="write a planted-signal synthetic world")
    _common(p)
    p.add_argument("--out", required=True)
    p.add_argument("--seed", type=int)
    p.set_defaults(func=cmd_gen_synth)

    p = sub.add_parser("pretrain-kg", help="filter leakage and pretrain entity embeddings")
    _common(p)
    _data_args(p)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_pretrain_kg)

    p = sub.add_parser("kg", help="knowledge-graph utilities")
    kg_sub = p.add_subparsers(dest="kg_command", required=True)
    q = kg_sub.add_parser("stats", help="entity/relation/triple counts before and after filtering")
    q.add_argument("--triples", required=True)
    q.add_argument("--drugs", required=True)
    q.add_argument("--targets", required=True)
    q.set_defaults(func=cmd_kg)

    p = sub.add_parser("train", help="run steps S1-S4 and save a model bundle")
    _common(p)
    _data_args(p)
    p.add_argument("--embeddings", help="pretrained embedding file (else pretrain now)")
    p.add_argument("--shots", type=int, default=10)
    p.add_argument("--seed", type=int)
    p.add_argument("--ground-truth-only", action="store_true", help="skip pseudo labels")
    p.add_argument("--out", required=True, help="model bundle path")
    p.add_argument("--log", help="training-log CSV path")
    p.set_defaults(func=cmd_train)

    for name, func, fields in (("predict", cmd_predict, "drug_id<TAB>target_id"),
                               ("evaluate", cmd_evaluate, "drug_id<TAB>target_id<TAB>label")):
        p = sub.add_parser(name, help=f"score a TSV of {fields}")
        p.add_argument("--model", required=True)
        p.add_argument("--pairs", required=True, help=f"TSV of {fields}")
        g = p.add_mutually_exclusive_group()
        g.add_argument("--only-intrinsic", action="store_true")
        g.add_argument("--only-extrinsic", action="store_true")
        if name == "predict":
            p.add_argument("--out", help="output TSV (default stdout)")
        else:
            p.add_argument("--threshold", type=float, default=0.5)
        p.set_defaults(func=func)

    p = sub.add_parser("ablate", help="six-variant ablation over shots and seeds")
    _common(p)
    _data_args(p)
    p.add_argument("--embeddings")
    p.add_argument("--shots", default="10,20,40")
    p.add_argument("--seeds", default="0,1,2")
    p.add_argument("--dataset", default="synthetic", help="dataset label in the CSV")
    p.add_argument("--out", required=True, help="per-seed metrics CSV")
    p.add_argument("--summary", help="mean/std summary CSV")
    p.set_defaults(func=cmd_ablate)

    p = sub.add_parser("parse-smiles", help="parse SMILES strings and report counts or errors")
    p.add_argument("smiles", nargs="+")
    p.add_argument("--dump-graph", action="store_true")
    p.set_defaults(func=cmd_parse_smiles)

    p = sub.add_parser("gradcheck", help="finite-difference gradient checks for every component")
    p.add_argument("--configs", type=int, default=20)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--tol", type=float, default=1e-4)
    p.set_defaults(func=cmd_gradcheck)
    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    level = logging.WARNING - 10 * min(args.verbose, 2)
    logging.basicConfig(level=level, format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except MoeDtiError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
