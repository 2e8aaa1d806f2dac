"""Flat ``section.key = value`` configuration with typed defaults."""
from __future__ import annotations

import dataclasses
import hashlib
from dataclasses import dataclass, field
from pathlib import Path

from .errors import ConfigError


@dataclass
class KgConfig:
    method: str = "transe"
    dim: int = 32
    margin: float = 1.0
    epochs: int = 100
    lr: float = 0.01
    batch_size: int = 512
    seed: int = 0


@dataclass
class GnnConfig:
    layers: int = 3
    hidden: int = 64
    mlp_hidden: int = 64
    out_dim: int = 32


@dataclass
class CnnConfig:
    e_dim: int = 16
    channels: str = "16,32,32"
    kernel: int = 5
    pool: int = 8
    out_dim: int = 32
    max_len: int = 2000

    @property
    def channel_list(self) -> tuple[int, ...]:
        return tuple(int(c) for c in str(self.channels).split(",") if c.strip())


@dataclass
class HeadConfig:
    hidden: int = 64


@dataclass
class TrainConfig:
    optimizer: str = "adam"
    lr: float = 0.005
    lr_embed: float = 0.001
    lr_joint: float = 0.0005
    epochs_s1: int = 200
    epochs_s2: int = 100
    epochs_s3: int = 100
    epochs_s4: int = 100
    seed: int = 0


@dataclass
class SynergyConfig:
    alpha_a: float = 0.05
    alpha_b: float = 0.05
    beta_a: float = 0.05
    beta_b: float = 0.05
    gamma_a: int = 4
    gamma_b: int = 4
    beta_g: float = 0.05
    gamma_g: int = 4

    def validate(self) -> None:
        for name in ("alpha_a", "alpha_b"):
            v = getattr(self, name)
            if not 0 < v <= 1:
                raise ConfigError(f"synergy.{name} must lie in (0, 1], got {v}")
        for name in ("beta_a", "beta_b", "beta_g"):
            v = getattr(self, name)
            if not 0 < v < 1:
                raise ConfigError(f"synergy.{name} must lie in (0, 1), got {v}")
        for name in ("gamma_a", "gamma_b", "gamma_g"):
            v = getattr(self, name)
            if int(v) != v or v < 1:
                raise ConfigError(f"synergy.{name} must be a positive integer, got {v}")


@dataclass
class EvalConfig:
    threshold: float = 0.5
    test_negative_ratio: float = 1.0


@dataclass
class SynthConfig:
    n_drugs: int = 60
    n_targets: int = 60
    n_other: int = 380
    communities: int = 4
    motif_rate: float = 0.25
    kmer_rate: float = 0.25
    intrinsic_fidelity: float = 0.8
    cold_fraction: float = 0.15
    seed: int = 7


@dataclass
class Config:
    kg: KgConfig = field(default_factory=KgConfig)
    gnn: GnnConfig = field(default_factory=GnnConfig)
    cnn: CnnConfig = field(default_factory=CnnConfig)
    head: HeadConfig = field(default_factory=HeadConfig)
    train: TrainConfig = field(default_factory=TrainConfig)
    synergy: SynergyConfig = field(default_factory=SynergyConfig)
    eval: EvalConfig = field(default_factory=EvalConfig)
    synth: SynthConfig = field(default_factory=SynthConfig)

    def set(self, dotted: str, raw: str) -> None:
        try:
            section, key = dotted.strip().split(".", 1)
        except ValueError:
            raise ConfigError(f"config key {dotted!r} must look like section.key") from None
        sec = getattr(self, section, None)
        if sec is None or not dataclasses.is_dataclass(sec):
            raise ConfigError(f"unknown config section {section!r}")
        fields = {f.name: f for f in dataclasses.fields(sec)}
        if key not in fields:
            raise ConfigError(f"unknown config key {dotted!r}")
        current = getattr(sec, key)
        raw = raw.strip()
        try:
            if isinstance(current, bool):
                value = raw.lower() in ("1", "true", "yes", "on")
            elif isinstance(current, int):
                value = int(raw)
            elif isinstance(current, float):
                value = float(raw)
            else:
                value = raw
        except ValueError:
            raise ConfigError(f"bad value {raw!r} for {dotted}") from None
        setattr(sec, key, value)

    def items(self):
        for f in dataclasses.fields(self):
            sec = getattr(self, f.name)
            for g in dataclasses.fields(sec):
                yield f"{f.name}.{g.name}", getattr(sec, g.name)

    def to_text(self) -> str:
        return "".join(f"{k} = {v}\n" for k, v in self.items())

    def fingerprint(self) -> str:
        return hashlib.sha256(self.to_text().encode("utf-8")).hexdigest()[:16]

    def validate(self) -> None:
        self.synergy.validate()
        if self.kg.method == "rotate" and self.kg.dim % 2:
            raise ConfigError("kg.dim must be even for rotate")


def parse_config(text: str, base: Config | None = None) -> Config:
    cfg = base or Config()
    for lineno, line in enumerate(text.splitlines(), start=1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"line {lineno}: expected key = value")
        key, value = line.split("=", 1)
        cfg.set(key, value)
    cfg.validate()
    return cfg


def load_config(path=None, overrides: list[str] | None = None) -> Config:
    cfg = Config()
    if path is not None:
        cfg = parse_config(Path(path).read_text(encoding="utf-8"), cfg)
    for item in overrides or []:
        if "=" not in item:
            raise ConfigError(f"override {item!r} must be key=value")
        k, v = item.split("=", 1)
        cfg.set(k, v)
    cfg.validate()
    return cfg
