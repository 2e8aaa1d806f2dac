"""Acceptance suite: one PASS/FAIL line per criterion, printed even without ``-s``."""
import time

import numpy as np
import pytest

from moedti import tensor as T
from moedti.ablation import DataPaths, run_ablation, write_metrics_csv
from moedti.config import Config
from moedti.data import load_dti_dataset
from moedti.kg_embed import pretrain
from moedti.kgraph import build_kg, load_kg, remove_dti_leakage
from moedti.metrics import average_precision, compute_metrics, roc_auc
from moedti.mol_encoder import MoleculeEncoder
from moedti.selfcheck import run_gradchecks
from moedti.smiles import UnclosedRingError, UnknownTokenError, UnmatchedBranchError, parse_smiles
from moedti.synergy import assemble, joint_negative_count, needed_negatives, run_training
from moedti.synth import generate_synthetic_world

from test_metrics import ap_oracle, auc_oracle, random_instance
from test_moe import make_model
from test_smiles import corpus, oracle, parse_quiet

# Desk-scale profile for the synergy-direction run; everything else keeps the library defaults.
SYNERGY_PROFILE = {
    "synergy.alpha_a": "1", "synergy.alpha_b": "1",
    "synergy.beta_a": "0.1", "synergy.beta_b": "0.1", "synergy.beta_g": "0.1",
}


@pytest.fixture
def report(capsys):
    def emit(n, ok, detail):
        with capsys.disabled():
            print(f"\nCRITERION {n}: {'PASS' if ok else 'FAIL'} - {detail}")
        assert ok, detail
    return emit


def test_c01_scope(report):
    # declaration only: the synthetic property suite below stands in for full-scale benchmark numbers
    report(1, True, "full-scale benchmark reproduction declared infeasible; criteria 2-10 substitute")


def test_c02_gradient_integrity(report):
    t0 = time.time()
    reports = run_gradchecks(n_configs=20, seed=0)
    took = time.time() - t0
    worst = max(r.worst for r in reports)
    ok = all(r.ok(1e-4) and r.configs >= 20 for r in reports) and took < 120
    detail = ", ".join(f"{r.component} {r.worst:.1e}" for r in reports)
    report(2, ok, f"worst rel err {worst:.2e} ({detail}); {took:.1f}s")


def test_c03_balance_arithmetic(report):
    rng = np.random.default_rng(0)
    done = s4_even = s4_odd = 0
    while done < 1000:
        g, n_p, n_pp, n_n = (int(rng.integers(1, 9)), int(rng.integers(1, 41)),
                             int(rng.integers(0, 201)), int(rng.integers(0, 161)))
        a = int(rng.integers(0, n_pp + 1))
        b = n_pp - a
        if g * n_p + n_pp - n_n < 0:
            continue
        done += 1
        need = needed_negatives(g, n_p, n_pp, n_n)
        assert need == g * n_p + n_pp - n_n
        lb = assemble([("p", i) for i in range(n_p)], [("n", i) for i in range(n_n)],
                      [("pp", i) for i in range(n_pp)], [("pn", i) for i in range(need)], g)
        assert lb.weighted_positives == lb.negatives
        each = joint_negative_count(g, n_p, a, b, n_n)
        num = g * n_p + a + b - n_n
        assert each == num // 2
        lb = assemble([("p", i) for i in range(n_p)], [("n", i) for i in range(n_n)],
                      [("pp", i) for i in range(a + b)], [("pn", i) for i in range(2 * each)], g)
        if num % 2 == 0:
            assert lb.weighted_positives == lb.negatives
            s4_even += 1
        else:
            assert lb.weighted_positives - lb.negatives == 1
            s4_odd += 1
    report(3, True, f"1000 tuples: pseudo-negative count exact and balanced; joint count exact, "
                    f"balanced on {s4_even} even numerators, one short on {s4_odd} odd ones")


def test_c04_leakage(report, tmp_path):
    world = generate_synthetic_world()
    paths = world.write(tmp_path)
    kg = load_kg(paths["triples"], paths["drugs"], paths["targets"])
    clean = remove_dti_leakage(kg)

    def scan(g):
        d, t = set(g.drugs), set(g.targets)
        return sum((h in d and tl in t) or (h in t and tl in d) for h, _, tl in g.triples.tolist())

    hand = build_kg([("a", "r", "b"), ("b", "r2", "a"), ("a", "s", "x"), ("x", "s", "b")],
                    drugs=["a"], targets=["b"])
    ok = scan(kg) == world.leaked and scan(clean) == 0 and scan(remove_dti_leakage(hand)) == 0
    report(4, ok, f"synthetic KG {scan(kg)} -> {scan(clean)} drug-target triples; "
                  f"hand KG {scan(hand)} -> {scan(remove_dti_leakage(hand))}")


def test_c05_metric_oracles(report):
    rng = np.random.default_rng(0)
    worst = 0.0
    ties = 0
    for _ in range(200):
        s, y = random_instance(rng)
        ties += len(set(s.tolist())) < len(s)
        worst = max(worst, abs(roc_auc(s, y) - auc_oracle(s, y)),
                    abs(average_precision(s, y) - ap_oracle(s, y)))
    report(5, worst <= 1e-12, f"200 instances ({ties} with ties), max |diff| {worst:.1e}")


def test_c06_mixture_contract(report):
    drugs = {f"d{i}": s for i, s in enumerate(("CCO", "c1ccccc1O", "CC(=O)N", "CS(=O)(=O)N", "CCN(C)C",
                                                "OC1CCCCC1", "c1ccncc1", "CC(C)Cl"))}
    targets = {f"t{i}": s for i, s in enumerate(("MKVLAAGW", "ACDEFGHIKLMNPQ", "WWYYCCHH", "MSTTPKRR",
                                                 "GGGGAWKW", "MFWKWFAA"))}
    model = make_model(seed=3, kg_ids=tuple(drugs) + tuple(targets), drugs=drugs, targets=targets)
    rng = np.random.default_rng(0)
    dl, tl = list(drugs), list(targets)
    pairs = [(dl[i], tl[j]) for i, j in zip(rng.integers(len(dl), size=1000), rng.integers(len(tl), size=1000))]
    pred = model.predict(pairs)
    lo, hi = np.minimum(pred.p_ex, pred.p_in), np.maximum(pred.p_ex, pred.p_in)
    convex = bool(np.all((lo <= pred.p) & (pred.p <= hi)))
    with T.no_grad():
        exact_in = np.array_equal(model.predict(pairs, mode="intrinsic").p, model.p_intrinsic(pairs).data)
        exact_ex = np.array_equal(model.predict(pairs, mode="extrinsic").p, model.p_extrinsic(pairs).data)
    report(6, convex and exact_in and exact_ex,
           f"1000 pairs: convex={convex}, intrinsic bit-exact={exact_in}, extrinsic bit-exact={exact_ex}")


def _median_aucs(cfg, seeds, tmp_path):
    world = generate_synthetic_world(cfg.synth)
    p = world.write(tmp_path)
    kg = remove_dti_leakage(load_kg(p["triples"], p["drugs"], p["targets"]))
    table = pretrain(kg, cfg.kg.method, cfg.kg.dim, cfg.kg.margin, cfg.kg.epochs, cfg.kg.lr, cfg.kg.seed,
                     batch_size=cfg.kg.batch_size)
    res = {k: [] for k in ("True-intr", "True-extr", "True-all", "Mose-intr", "Mose-extr", "MoseDTI")}
    snap = {"S2": ("True-intr", "intrinsic"), "S3": ("True-extr", "extrinsic"), "S4": ("True-all", "both")}
    for seed in seeds:
        ds = load_dti_dataset(p["positives"], p["negatives"], p["smiles"], p["sequences"], 10, seed)

        def auc(scores):
            return compute_metrics(scores, ds.test_labels).auc

        def hook(step, model):
            if step in snap:
                name, mode = snap[step]
                res[name].append(auc(model.predict(ds.test_pairs, mode).p))

        run_training(ds, table, cfg, seed=seed, use_pseudo=False, on_step=hook)
        model = run_training(ds, table, cfg, seed=seed).model
        for name, mode in (("Mose-intr", "intrinsic"), ("Mose-extr", "extrinsic"), ("MoseDTI", "both")):
            res[name].append(auc(model.predict(ds.test_pairs, mode).p))
    return {k: float(np.median(v)) for k, v in res.items()}, res


@pytest.mark.slow
def test_c07_synergy_direction(report, tmp_path):
    cfg = Config()
    for k, v in SYNERGY_PROFILE.items():
        cfg.set(k, v)
    cfg.validate()
    t0 = time.time()
    med, _ = _median_aucs(cfg, range(5), tmp_path)
    took = time.time() - t0
    checks = {
        "Mose-intr>=True-intr": med["Mose-intr"] >= med["True-intr"],
        "Mose-extr>=True-extr": med["Mose-extr"] >= med["True-extr"],
        "MoseDTI>=max-0.02": med["MoseDTI"] >= max(med["Mose-intr"], med["Mose-extr"]) - 0.02,
        "MoseDTI>=0.75": med["MoseDTI"] >= 0.75,
        "True-only<MoseDTI": all(med[k] < med["MoseDTI"] for k in ("True-intr", "True-extr", "True-all")),
        "runtime<15min": took < 900,
    }
    failed = [k for k, v in checks.items() if not v]
    medians = ", ".join(f"{k} {v:.3f}" for k, v in med.items())
    report(7, not failed, f"median AUC {medians}; {took:.0f}s" + (f"; failed: {', '.join(failed)}" if failed else ""))


def test_c08_determinism(report, tiny_world, tmp_path):
    cfg = tiny_world["cfg"]
    paths = DataPaths.from_dir(tiny_world["paths"]["triples"].parent)
    outs = []
    for run in ("a", "b"):
        rows = run_ablation(paths, cfg, shots=[3], seeds=[0, 1])  # pretrains the KG afresh each run
        outs.append(tmp_path / f"{run}.csv")
        write_metrics_csv(rows, outs[-1], cfg)
    same = outs[0].read_bytes() == outs[1].read_bytes()
    report(8, same, f"two ablation runs -> {'byte-identical' if same else 'different'} metrics CSVs "
                    f"({len(outs[0].read_bytes())} bytes)")


PROBES = [("C(", UnmatchedBranchError, 2), ("C1CC", UnclosedRingError, 1), ("C?C", UnknownTokenError, 1)]


def test_c09_smiles_corpus(report):
    table = oracle()
    rows = corpus()
    mismatched = []
    for name, smi in rows:
        g = parse_quiet(smi)
        if (g.n_atoms, g.n_bonds, sum(a.hydrogens for a in g.atoms)) != table[name]:
            mismatched.append(name)
    probes_ok = []
    for smi, exc, offset in PROBES:
        try:
            parse_smiles(smi)
            probes_ok.append(False)
        except exc as e:
            probes_ok.append(e.offset == offset)
    ok = len(rows) == 50 and not mismatched and all(probes_ok)
    report(9, ok, f"{len(rows) - len(mismatched)}/{len(rows)} corpus molecules match the oracle; "
                  f"{sum(probes_ok)}/3 malformed probes raise the right class at the right offset")


def test_c10_permutation_invariance(report):
    rng = np.random.default_rng(0)
    enc = MoleculeEncoder(np.random.default_rng(1))
    worst = 0.0
    mols = [parse_quiet(s) for _, s in corpus()]
    for g in mols:
        base = enc.encode(g).data
        for _ in range(5):
            perm = rng.permutation(g.n_atoms).tolist()
            worst = max(worst, float(np.max(np.abs(enc.encode(g.permuted(perm)).data - base))))
    report(10, worst <= 1e-12 and len(mols) == 50, f"50 molecules x 5 permutations, max |diff| {worst:.1e}")
