import pytest

from moedti.config import Config
from moedti.data import load_dti_dataset
from moedti.kg_embed import pretrain
from moedti.kgraph import load_kg, remove_dti_leakage
from moedti.synth import generate_synthetic_world

TINY = {
    "synth.n_drugs": "12", "synth.n_targets": "12", "synth.n_other": "40", "synth.seed": "3",
    "kg.dim": "8", "kg.epochs": "20",
    "gnn.layers": "2", "gnn.hidden": "8", "gnn.mlp_hidden": "8", "gnn.out_dim": "6",
    "cnn.e_dim": "4", "cnn.channels": "4,6", "cnn.kernel": "3", "cnn.pool": "4", "cnn.out_dim": "6",
    "head.hidden": "8",
    "train.epochs_s1": "5", "train.epochs_s2": "5", "train.epochs_s3": "5", "train.epochs_s4": "5",
    "synergy.alpha_a": "0.5", "synergy.alpha_b": "0.5", "synergy.beta_a": "0.1",
    "synergy.beta_b": "0.1", "synergy.beta_g": "0.1", "synergy.gamma_a": "2",
    "synergy.gamma_b": "2", "synergy.gamma_g": "2",
}


def tiny_config() -> Config:
    cfg = Config()
    for k, v in TINY.items():
        cfg.set(k, v)
    cfg.validate()
    return cfg


@pytest.fixture(scope="session")
def tiny_world(tmp_path_factory):
    """Small synthetic world on disk plus pretrained KG embeddings and a 3-shot split."""
    cfg = tiny_config()
    world = generate_synthetic_world(cfg.synth)
    paths = world.write(tmp_path_factory.mktemp("tiny"))
    kg = remove_dti_leakage(load_kg(paths["triples"], paths["drugs"], paths["targets"]))
    table = pretrain(kg, cfg.kg.method, cfg.kg.dim, cfg.kg.margin, cfg.kg.epochs, cfg.kg.lr, cfg.kg.seed)
    ds = load_dti_dataset(paths["positives"], paths["negatives"], paths["smiles"], paths["sequences"],
                          shots=3, seed=0)
    return {"cfg": cfg, "world": world, "paths": paths, "kg": kg, "table": table, "dataset": ds}
