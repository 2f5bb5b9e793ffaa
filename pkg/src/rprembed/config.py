"""Training configuration and the flat ``key = value`` config file format."""

from __future__ import annotations

from dataclasses import dataclass, field

from .errors import ValidationError
from .model import ACTIVATIONS, LossConfig
from .sampling import SamplingConfig
from .structfeat import RprConfig


@dataclass(frozen=True)
class TrainConfig:
    rpr: RprConfig = field(default_factory=RprConfig)
    sampling: SamplingConfig = field(default_factory=SamplingConfig)
    loss: LossConfig = field(default_factory=LossConfig)
    d: int = 200
    epochs: int = 50
    batch_size: int = 512
    lr: float = 0.001
    seed: int = 0
    checkpoint_every: int = 0
    activation: str = "tanh"
    use_bias: bool = False

    def __post_init__(self):
        if self.d < 1:
            raise ValidationError("embedding dimension d must be >= 1")
        if self.batch_size < 1:
            raise ValidationError("batch_size must be >= 1")
        if self.epochs < 0:
            raise ValidationError("epochs must be >= 0")
        if self.lr <= 0:
            raise ValidationError("lr must be > 0")
        if self.activation not in ACTIVATIONS:
            raise ValidationError(f"activation must be one of {ACTIVATIONS}")
        if self.sampling.neg_K != self.loss.neg_K:
            raise ValidationError("sampling.neg_K and loss.neg_K must agree")


# flat key -> (section, attribute, type); section None means TrainConfig itself
_KEYS: dict[str, tuple[str | None, str, type]] = {
    "beta": ("rpr", "beta", float),
    "k": ("rpr", "k", int),
    "m": ("rpr", "m", int),
    "l": ("rpr", "l", int),
    "alpha": ("sampling", "alpha", float),
    "window": ("sampling", "window", int),
    "walks_per_node": ("sampling", "walks_per_node", int),
    "walk_len": ("sampling", "walk_len", int),
    "neg_K": ("sampling", "neg_K", int),
    "neg_power": ("sampling", "neg_power", float),
    "cand_factor": ("sampling", "cand_factor", int),
    "lambda1": ("loss", "lambda1", float),
    "lambda2": ("loss", "lambda2", float),
    "d": (None, "d", int),
    "epochs": (None, "epochs", int),
    "batch_size": (None, "batch_size", int),
    "lr": (None, "lr", float),
    "seed": (None, "seed", int),
    "checkpoint_every": (None, "checkpoint_every", int),
    "activation": (None, "activation", str),
    "use_bias": (None, "use_bias", bool),
}

CONFIG_KEYS = tuple(_KEYS)


def _coerce(key: str, raw, typ):
    if isinstance(raw, typ) and not (typ is int and isinstance(raw, bool)):
        return raw
    text = str(raw).strip()
    try:
        if typ is bool:
            low = text.lower()
            if low in ("1", "true", "yes", "on"):
                return True
            if low in ("0", "false", "no", "off"):
                return False
            raise ValueError
        if typ is int:
            return int(text)
        return typ(text)
    except ValueError:
        raise ValidationError(f"config key {key!r}: cannot parse {raw!r} as {typ.__name__}") from None


def to_flat(cfg: TrainConfig) -> dict[str, object]:
    out = {}
    for key, (section, attr, _) in _KEYS.items():
        obj = cfg if section is None else getattr(cfg, section)
        out[key] = getattr(obj, attr)
    return out


def from_flat(values: dict[str, object], base: TrainConfig | None = None) -> TrainConfig:
    """Apply flat overrides on top of ``base`` (defaults when omitted)."""
    flat = to_flat(base or TrainConfig())
    for key, raw in values.items():
        if key not in _KEYS:
            raise ValidationError(f"unknown config key {key!r}")
        flat[key] = _coerce(key, raw, _KEYS[key][2])
    sections: dict[str | None, dict] = {None: {}, "rpr": {}, "sampling": {}, "loss": {}}
    for key, val in flat.items():
        section, attr, _ = _KEYS[key]
        sections[section][attr] = val
    sections["rpr"]["seed"] = flat["seed"]
    sections["loss"]["neg_K"] = flat["neg_K"]
    return TrainConfig(rpr=RprConfig(**sections["rpr"]),
                       sampling=SamplingConfig(**sections["sampling"]),
                       loss=LossConfig(**sections["loss"]), **sections[None])


def read_config_file(path) -> dict[str, str]:
    """Parse ``key = value`` lines; ``#`` starts a comment."""
    out: dict[str, str] = {}
    with open(path, encoding="utf-8") as fh:
        for lineno, raw in enumerate(fh, start=1):
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise ValidationError(f"{path}:{lineno}: expected 'key = value'")
            key, val = (s.strip() for s in line.split("=", 1))
            if key not in _KEYS:
                raise ValidationError(f"{path}:{lineno}: unknown config key {key!r}")
            out[key] = val
    return out


def load_config(path=None, overrides: dict | None = None) -> TrainConfig:
    """Defaults < config file < overrides."""
    values: dict[str, object] = {}
    if path is not None:
        values.update(read_config_file(path))
    if overrides:
        values.update({k: v for k, v in overrides.items() if v is not None})
    return from_flat(values)


def format_config(cfg: TrainConfig) -> str:
    return "\n".join(f"{k} = {v}" for k, v in to_flat(cfg).items()) + "\n"


def with_updates(cfg: TrainConfig, **flat) -> TrainConfig:
    return from_flat(flat, base=cfg)


__all__ = ["TrainConfig", "CONFIG_KEYS", "to_flat", "from_flat", "read_config_file",
           "load_config", "format_config", "with_updates"]
