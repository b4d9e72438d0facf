"""Training configuration and its ``key=value`` file format."""

from dataclasses import dataclass, field, fields
from pathlib import Path

from .errors import ConfigError

# config-file key -> TrainConfig attribute, where they differ
_ALIASES = {"lambda": "lam", "learning_rate": "lr"}
_PATH_GROUPS = ("train", "dev", "test", "unlabeled", "vectors", "alignment")


@dataclass
class TrainConfig:
    lr: float = 1e-5
    epochs: int = 50
    patience: int = 5
    dropout: float = 0.1
    lam: float = 0.001
    disc_interval: int = 10
    disc_hidden: int = 100
    hidden: int = 128
    batch_size: int = 32
    seed: int = 0
    weight_decay: float = 0.01
    clip_norm: float = 5.0  # 0 disables clipping
    adversarial: bool = True
    trainable_embeddings: bool = False
    crf_constraints: bool = False
    optimizer: str = "adamw"  # "sgd" exists for update-rule checks only
    max_vectors: int = 0  # 0 loads every vector
    pivot: str = "en"
    output: str = "runs"
    train: dict = field(default_factory=dict)
    dev: dict = field(default_factory=dict)
    test: dict = field(default_factory=dict)
    unlabeled: dict = field(default_factory=dict)
    vectors: dict = field(default_factory=dict)
    alignment: dict = field(default_factory=dict)

    def __post_init__(self):
        problems = self.problems()
        if problems:
            raise ConfigError("; ".join(problems))

    def problems(self):
        out = []
        if self.lam < 0:
            out.append(f"lambda must be >= 0, got {self.lam}")
        if self.disc_interval < 1:
            out.append(f"disc_interval must be >= 1, got {self.disc_interval}")
        if not 0.0 <= self.dropout < 1.0:
            out.append(f"dropout must lie in [0, 1), got {self.dropout}")
        if self.lr <= 0:
            out.append(f"lr must be positive, got {self.lr}")
        for name in ("epochs", "batch_size", "hidden", "disc_hidden"):
            if getattr(self, name) < 1:
                out.append(f"{name} must be >= 1")
        if self.patience < 1:
            out.append("patience must be >= 1")
        if self.optimizer not in ("adamw", "sgd"):
            out.append(f"optimizer must be adamw or sgd, got {self.optimizer!r}")
        return out

    @property
    def languages(self):
        """Labeled languages first, then unlabeled-only ones, each sorted."""
        labeled = sorted(self.train)
        return labeled + sorted(set(self.unlabeled) - set(labeled))


def _parse_bool(text):
    low = text.lower()
    if low in ("1", "true", "yes", "on"):
        return True
    if low in ("0", "false", "no", "off"):
        return False
    raise ValueError(f"not a boolean: {text!r}")


_SCALARS = {f.name: f.type for f in fields(TrainConfig) if f.name not in _PATH_GROUPS}


def parse_config(lines, base_dir=None, check_paths=True):
    """Build a TrainConfig from ``key=value`` lines, collecting every problem."""
    values = {}
    groups = {g: {} for g in _PATH_GROUPS}
    errors = []
    for lineno, raw in enumerate(lines, 1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        if "=" not in line:
            errors.append(f"line {lineno}: expected key=value")
            continue
        key, value = (s.strip() for s in line.split("=", 1))
        group, _, lang = key.partition(".")
        if group in _PATH_GROUPS and lang:
            path = Path(value)
            if base_dir is not None and not path.is_absolute():
                path = Path(base_dir) / path
            if check_paths and not path.exists():
                errors.append(f"line {lineno}: {key}: no such file {value}")
            groups[group][lang] = str(path)
            continue
        name = _ALIASES.get(key, key)
        kind = _SCALARS.get(name)
        if kind is None:
            errors.append(f"line {lineno}: unknown key {key!r}")
            continue
        try:
            if kind in (bool, "bool"):
                values[name] = _parse_bool(value)
            elif kind in (int, "int"):
                values[name] = int(value)
            elif kind in (float, "float"):
                values[name] = float(value)
            else:
                values[name] = value
        except ValueError:
            errors.append(f"line {lineno}: cannot parse {key}={value!r}")
    if not errors:
        try:
            return TrainConfig(**values, **groups)
        except ConfigError as exc:
            errors.append(str(exc))
    raise ConfigError("invalid configuration:\n  " + "\n  ".join(errors))


def validate_config(path, check_paths=True):
    path = Path(path)
    try:
        text = path.read_text(encoding="utf-8")
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    return parse_config(text.splitlines(), base_dir=path.parent, check_paths=check_paths)


def dump_config(config):
    """Inverse of ``parse_config`` (paths written as stored)."""
    lines = []
    inverse = {v: k for k, v in _ALIASES.items()}
    for f in fields(TrainConfig):
        value = getattr(config, f.name)
        if f.name in _PATH_GROUPS:
            lines += [f"{f.name}.{lang}={p}" for lang, p in sorted(value.items())]
        else:
            if isinstance(value, bool):
                value = str(value).lower()
            lines.append(f"{inverse.get(f.name, f.name)}={value}")
    return "\n".join(lines) + "\n"
