"""Model and training configuration."""

from __future__ import annotations

import math
from dataclasses import dataclass, fields, replace

from .errors import ConfigError

PE_MODES = ("tb_ppe", "original_pe", "alibi")
OUTPUT_SPACES = ("absolute", "offset")


def _is_power_of_two(n: int) -> bool:
    return n >= 1 and (n & (n - 1)) == 0


@dataclass(frozen=True)
class ModelConfig:
    """Architecture shape knobs; defaults are the desk-scale synthetic profile."""

    dim: int = 32                # decoder model dimension
    heads: int = 4               # decoder attention heads (power of two)
    period: int = 10             # positional-encoding / temporal-bias period
    feature_rate: float = 50.0   # audio feature rows per second
    motion_rate: float = 25.0    # motion frames per second
    encoder_layers: int = 2
    decoder_layers: int = 1
    ff_dim: int = 64             # feed-forward width (encoder and decoder)
    vertices: int = 10           # mesh vertex count V; motion rows have 3*V columns
    identities: int = 2          # number of trainable speaking-style embeddings
    feature_dim: int = 8         # audio feature channels (extractor output width)
    encoder_dim: int = 32        # width of the encoder transformer stack
    encoder_heads: int = 2
    pe_mode: str = "tb_ppe"
    output_space: str = "absolute"

    @property
    def frame_ratio(self) -> int:
        """Audio feature rows per motion frame: ceil(feature_rate/motion_rate)."""
        return math.ceil(self.feature_rate / self.motion_rate)

    @property
    def head_dim(self) -> int:
        return self.dim // self.heads

    @property
    def value_dim(self) -> int:
        return self.dim // self.heads

    @property
    def motion_dim(self) -> int:
        return 3 * self.vertices

    def validate(self) -> "ModelConfig":
        if not _is_power_of_two(self.heads):
            raise ConfigError(f"heads must be a power of two, got {self.heads}")
        if self.dim % self.heads != 0:
            raise ConfigError(f"dim {self.dim} not divisible by heads {self.heads}")
        if self.period < 1:
            raise ConfigError(f"period must be >= 1, got {self.period}")
        if self.feature_rate <= 0 or self.motion_rate <= 0:
            raise ConfigError("feature_rate and motion_rate must be positive")
        if self.encoder_dim % self.encoder_heads != 0:
            raise ConfigError(
                f"encoder_dim {self.encoder_dim} not divisible by "
                f"encoder_heads {self.encoder_heads}"
            )
        for name in ("encoder_layers",):
            if getattr(self, name) < 0:
                raise ConfigError(f"{name} must be >= 0")
        for name in ("decoder_layers", "ff_dim", "vertices", "identities", "feature_dim"):
            if getattr(self, name) < 1:
                raise ConfigError(f"{name} must be >= 1")
        if self.pe_mode not in PE_MODES:
            raise ConfigError(f"pe_mode must be one of {PE_MODES}, got {self.pe_mode!r}")
        if self.output_space not in OUTPUT_SPACES:
            raise ConfigError(
                f"output_space must be one of {OUTPUT_SPACES}, got {self.output_space!r}"
            )
        return self


@dataclass(frozen=True)
class TrainConfig:
    """Optimization knobs."""

    epochs: int = 100
    seed: int = 0
    lr: float = 1e-4
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    grad_clip: float = 1.0
    freeze_extractor: bool = True
    detach_rollout: bool = False

    def validate(self) -> "TrainConfig":
        if self.epochs < 0:
            raise ConfigError(f"epochs must be >= 0, got {self.epochs}")
        if self.lr <= 0:
            raise ConfigError(f"lr must be positive, got {self.lr}")
        return self


# Named profiles. The biwi/vocaset shapes match the published full-scale
# setups and exist for reference; desk-scale work uses "synthetic".
PROFILES: dict[str, ModelConfig] = {
    "synthetic": ModelConfig(),
    "biwi": ModelConfig(
        dim=128, heads=4, period=25, ff_dim=2048, feature_rate=49.0,
        motion_rate=25.0, vertices=23370, identities=6,
        encoder_dim=128, encoder_heads=4,
    ),
    "vocaset": ModelConfig(
        dim=64, heads=4, period=30, ff_dim=2048, feature_rate=49.0,
        motion_rate=60.0, vertices=5023, identities=8,
        encoder_dim=64, encoder_heads=4,
    ),
}


def profile(name: str) -> ModelConfig:
    try:
        return PROFILES[name]
    except KeyError:
        raise ConfigError(f"unknown profile {name!r}; choose from {sorted(PROFILES)}")


# Configuration-file schema: key -> (dataclass, field, parser).
def _parse_bool(s: str) -> bool:
    low = s.strip().lower()
    if low in ("true", "1", "yes", "on"):
        return True
    if low in ("false", "0", "no", "off"):
        return False
    raise ValueError(f"not a boolean: {s!r}")


CONFIG_KEYS: dict[str, tuple[str, str, type | object]] = {
    # ModelConfig
    "dim": ("model", "dim", int),
    "heads": ("model", "heads", int),
    "period": ("model", "period", int),
    "feature_rate": ("model", "feature_rate", float),
    "motion_rate": ("model", "motion_rate", float),
    "encoder_layers": ("model", "encoder_layers", int),
    "decoder_layers": ("model", "decoder_layers", int),
    "ff_dim": ("model", "ff_dim", int),
    "vertices": ("model", "vertices", int),
    "identities": ("model", "identities", int),
    "feature_dim": ("model", "feature_dim", int),
    "encoder_dim": ("model", "encoder_dim", int),
    "encoder_heads": ("model", "encoder_heads", int),
    "pe_mode": ("model", "pe_mode", str),
    "output_space": ("model", "output_space", str),
    # derived ModelConfig fields, accepted only for cross-checking
    "frame_ratio": ("check", "frame_ratio", int),
    "head_dim": ("check", "head_dim", int),
    "value_dim": ("check", "value_dim", int),
    # TrainConfig
    "epochs": ("train", "epochs", int),
    "seed": ("train", "seed", int),
    "lr": ("train", "lr", float),
    "beta1": ("train", "beta1", float),
    "beta2": ("train", "beta2", float),
    "eps": ("train", "eps", float),
    "grad_clip": ("train", "grad_clip", float),
    "freeze_extractor": ("train", "freeze_extractor", _parse_bool),
    "detach_rollout": ("train", "detach_rollout", _parse_bool),
}


@dataclass(frozen=True)
class ParsedConfig:
    model: ModelConfig
    train: TrainConfig
    explicit_model_keys: frozenset[str]
    notices: tuple[str, ...]


def build_configs(values: dict[str, str]) -> ParsedConfig:
    """Turn raw key/value strings into validated configs.

    Unknown keys are errors (misspelling guard); missing keys fall back to the
    defaults and are reported in the notice list.
    """
    unknown = sorted(set(values) - set(CONFIG_KEYS))
    if unknown:
        raise ConfigError(f"unknown configuration keys: {', '.join(unknown)}")
    model_kwargs: dict = {}
    train_kwargs: dict = {}
    checks: dict[str, int] = {}
    for key, raw in values.items():
        target, attr, parser = CONFIG_KEYS[key]
        try:
            parsed = parser(raw)
        except ValueError as exc:
            raise ConfigError(f"bad value for {key!r}: {exc}")
        if target == "model":
            model_kwargs[attr] = parsed
        elif target == "train":
            train_kwargs[attr] = parsed
        else:
            checks[attr] = parsed
    model = ModelConfig(**model_kwargs).validate()
    train = TrainConfig(**train_kwargs).validate()
    for attr, claimed in checks.items():
        actual = getattr(model, attr)
        if claimed != actual:
            raise ConfigError(
                f"{attr} = {claimed} conflicts with derived value {actual}"
            )
    defaulted = sorted(
        {f.name for f in fields(ModelConfig)} - set(model_kwargs)
    ) + sorted({f.name for f in fields(TrainConfig)} - set(train_kwargs))
    notices = tuple(f"using default for {name}" for name in defaulted)
    return ParsedConfig(model, train, frozenset(model_kwargs), notices)


def with_dataset_shape(parsed: ParsedConfig, **data_fields) -> ModelConfig:
    """Overlay data-determined fields (vertices, identities, feature_dim,
    feature_rate, motion_rate), rejecting conflicting explicit config values."""
    for name, value in data_fields.items():
        if name in parsed.explicit_model_keys:
            claimed = getattr(parsed.model, name)
            if claimed != value:
                raise ConfigError(
                    f"config sets {name} = {claimed} but the dataset has {value}"
                )
    return replace(parsed.model, **data_fields).validate()
