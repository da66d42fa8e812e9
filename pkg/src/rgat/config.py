"""Run configuration and its flat ``key = value`` text form."""
from __future__ import annotations

import dataclasses
from dataclasses import dataclass, fields

from .graph import VARIANTS


class ConfigError(ValueError):
    pass


@dataclass
class ModelConfig:
    # architecture
    word_dim: int = 300
    pos_dim: int = 30
    position_dim: int = 30
    relation_dim: int = 30
    hidden_dim: int = 100
    graph_dim: int = 100
    heads: int = 5
    layers: int = 6
    fusion_dim: int = 50
    max_distance: int = 50
    variant: str = "rgat"
    weighted_factors: bool = False
    # optimisation
    dropout: float = 0.7
    l2: float = 1e-5
    lr: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    epochs: int = 50
    batch_size: int = 32
    patience: int = 10
    seed: int = 0
    # inputs and perturbations
    embeddings: str = ""
    mask_label: str = ""
    drop_masked_edges: bool = False
    random_tree: bool = False
    permute_labels: bool = False

    def __post_init__(self):
        self.validate()

    def validate(self):
        if self.variant not in VARIANTS:
            raise ConfigError(f"variant must be one of {VARIANTS}, got {self.variant!r}")
        if not 0 <= self.layers <= 8:
            raise ConfigError(f"layers must lie in [0, 8], got {self.layers}")
        if self.graph_dim % self.heads:
            raise ConfigError(f"graph_dim {self.graph_dim} not divisible by heads {self.heads}")
        if self.hidden_dim % 2:
            raise ConfigError("hidden_dim must be even (two LSTM directions)")
        if not 0 <= self.dropout < 1:
            raise ConfigError(f"dropout must lie in [0, 1), got {self.dropout}")
        for name in ("epochs", "batch_size", "heads", "word_dim", "pos_dim", "position_dim",
                     "relation_dim", "fusion_dim", "max_distance"):
            if getattr(self, name) < 1:
                raise ConfigError(f"{name} must be positive")
        if self.random_tree and self.permute_labels:
            raise ConfigError("random_tree and permute_labels are mutually exclusive")

    def replace(self, **changes) -> "ModelConfig":
        return dataclasses.replace(self, **changes)

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)

    @classmethod
    def from_dict(cls, d: dict) -> "ModelConfig":
        known = {f.name: f for f in fields(cls)}
        unknown = sorted(set(d) - set(known))
        if unknown:
            raise ConfigError(f"unknown config keys: {unknown}")
        return cls(**{k: _coerce(known[k], v) for k, v in d.items()})

    def to_text(self) -> str:
        return "".join(f"{k} = {_fmt(v)}\n" for k, v in self.to_dict().items())

    @classmethod
    def from_text(cls, text: str) -> "ModelConfig":
        return cls.from_dict(parse_kv(text))

    @classmethod
    def from_file(cls, path) -> "ModelConfig":
        with open(path, encoding="utf-8") as fh:
            return cls.from_text(fh.read())


def parse_kv(text: str) -> dict[str, str]:
    out = {}
    for lineno, line in enumerate(text.splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"line {lineno}: expected 'key = value'")
        k, v = (s.strip() for s in line.split("=", 1))
        if k in out:
            raise ConfigError(f"line {lineno}: duplicate key {k!r}")
        out[k] = v
    return out


def _fmt(v):
    if isinstance(v, bool):
        return "true" if v else "false"
    return str(v)


def _coerce(f, v):
    if not isinstance(v, str):
        return v
    typ = f.type if isinstance(f.type, type) else {"int": int, "float": float, "bool": bool, "str": str}[f.type]
    try:
        if typ is bool:
            low = v.lower()
            if low not in ("true", "false", "1", "0", "yes", "no"):
                raise ValueError
            return low in ("true", "1", "yes")
        return typ(v)
    except ValueError:
        raise ConfigError(f"{f.name}: cannot parse {v!r} as {typ.__name__}") from None
