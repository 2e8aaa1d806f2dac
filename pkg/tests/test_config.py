import pytest

from moedti.config import Config, load_config, parse_config
from moedti.errors import ConfigError


def test_defaults_validate_and_round_trip():
    cfg = Config()
    cfg.validate()
    again = parse_config(cfg.to_text())
    assert again.to_text() == cfg.to_text()
    assert again.fingerprint() == cfg.fingerprint()


def test_set_casts_to_field_type():
    cfg = Config()
    cfg.set("kg.dim", "16")
    cfg.set("train.lr", "0.01")
    cfg.set("cnn.channels", "4,8")
    assert cfg.kg.dim == 16 and cfg.train.lr == 0.01
    assert cfg.cnn.channel_list == (4, 8)


def test_fingerprint_tracks_changes():
    a, b = Config(), Config()
    b.set("synergy.gamma_a", "5")
    assert a.fingerprint() != b.fingerprint()


@pytest.mark.parametrize("key,value", [
    ("synergy.alpha_a", "0"), ("synergy.beta_b", "1"), ("synergy.gamma_g", "0"),
    ("synergy.gamma_a", "2.5"),
])
def test_out_of_range_values_rejected(key, value):
    with pytest.raises(ConfigError):
        load_config(overrides=[f"{key}={value}"])


@pytest.mark.parametrize("item", ["nosection=1", "bogus.key=1", "kg.nokey=1", "kg.dim=abc", "kg.dim"])
def test_bad_overrides_rejected(item):
    with pytest.raises(ConfigError):
        load_config(overrides=[item])


def test_file_with_comments(tmp_path):
    p = tmp_path / "c.cfg"
    p.write_text("# profile\nkg.dim = 8   # small\n\ntrain.epochs_s1 = 3\n")
    cfg = load_config(p, ["kg.dim=12"])
    assert cfg.kg.dim == 12 and cfg.train.epochs_s1 == 3


def test_rotate_needs_even_dim():
    with pytest.raises(ConfigError):
        load_config(overrides=["kg.method=rotate", "kg.dim=7"])
