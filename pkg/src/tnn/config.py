"""Run configuration: a flat key = value document with a published schema.

One key per line, ``#`` comments, blank lines ignored. Every key must be in
the schema; unknown keys are rejected rather than silently ignored so typos
fail loudly. Types are int, float, bool (true/false) and str, some with a
fixed choice set.
"""

from dataclasses import dataclass, fields

from tnn.errors import ConfigError


@dataclass
class RunConfig:
    # data
    data_path: str = ""
    vocab_mode: str = "byte"
    val_fraction: float = 0.1
    # model
    dim: int = 64
    gtu_dim: int = 128
    glu_dim: int = 128
    layers: int = 2
    activation: str = "silu"
    norm: str = "layernorm"
    decay: float = 0.99
    learn_decay: bool = False
    causal: bool = True
    strategy: str = "padded_pow2"
    rpe_layers: int = 3
    rpe_hidden: int = 24
    rpe_activation: str = "relu"
    rpe_input_mode: str = "raw_integer"
    share_rpe: bool = False
    tie_embeddings: bool = False
    # training
    seq_len: int = 128
    batch_size: int = 16
    steps: int = 2000
    peak_lr: float = 3e-3
    warmup_steps: int = 200
    beta1: float = 0.9
    beta2: float = 0.98
    adam_eps: float = 1e-8
    weight_decay: float = 0.01
    clip_norm: float = 1.0
    val_interval: int = 200
    val_batches: int = 8
    # run
    seed: int = 1234
    precision: str = "f64"
    deterministic: bool = False
    out_dir: str = "runs/default"


_CHOICES = {
    "vocab_mode": ("byte", "char"),
    "activation": ("relu", "silu"),
    "norm": ("layernorm", "rmsnorm"),
    "strategy": ("padded_pow2", "paper_2n"),
    "rpe_activation": ("relu", "silu"),
    "rpe_input_mode": ("raw_integer", "normalized", "sincos"),
    "precision": ("f32", "f64"),
}

_HELP = {
    "data_path": "training text file; empty means the synthetic corpus",
    "vocab_mode": "tokenization granularity",
    "val_fraction": "tail fraction of the stream held out for validation",
    "dim": "model width",
    "gtu_dim": "token-mixing gate expansion width",
    "glu_dim": "channel-mixing gate expansion width",
    "layers": "number of blocks",
    "activation": "gate nonlinearity",
    "norm": "pre-norm flavor",
    "decay": "exponential decay rate on mixing coefficients",
    "learn_decay": "train the decay rate as a parameter",
    "causal": "mask future positions in token mixing",
    "strategy": "circulant embedding used on the fft path",
    "rpe_layers": "position-encoder depth (output layer included)",
    "rpe_hidden": "position-encoder hidden width",
    "rpe_activation": "position-encoder nonlinearity",
    "rpe_input_mode": "offset featurization fed to the position encoder",
    "share_rpe": "single position encoder shared across blocks",
    "tie_embeddings": "reuse the embedding matrix as the output head",
    "seq_len": "training window length",
    "batch_size": "windows per step",
    "steps": "optimizer steps",
    "peak_lr": "learning-rate peak after warmup",
    "warmup_steps": "linear warmup length",
    "beta1": "Adam first-moment decay",
    "beta2": "Adam second-moment decay",
    "adam_eps": "Adam denominator floor",
    "weight_decay": "decoupled weight decay on matrices",
    "clip_norm": "global gradient-norm clip; 0 disables",
    "val_interval": "steps between validation passes; 0 disables",
    "val_batches": "validation windows drawn per pass",
    "seed": "seed for init and batch sampling",
    "precision": "parameter dtype",
    "deterministic": "pin wall_time to 0.0 in logs for comparable runs",
    "out_dir": "directory for checkpoint and metrics",
}


def config_schema() -> dict:
    """name -> {type, default, choices, help} for every accepted key."""
    schema = {}
    for f in fields(RunConfig):
        schema[f.name] = {
            "type": f.type.__name__,
            "default": f.default,
            "choices": _CHOICES.get(f.name),
            "help": _HELP[f.name],
        }
    return schema


_TYPES = {f.name: f.type for f in fields(RunConfig)}


def _parse_value(key: str, text: str):
    kind = _TYPES[key]
    if kind is bool:
        if text.lower() in ("true", "1", "yes"):
            return True
        if text.lower() in ("false", "0", "no"):
            return False
        raise ConfigError(f"{key}: expected true/false, got {text!r}")
    if kind is int:
        try:
            return int(text)
        except ValueError as exc:
            raise ConfigError(f"{key}: expected int, got {text!r}") from exc
    if kind is float:
        try:
            return float(text)
        except ValueError as exc:
            raise ConfigError(f"{key}: expected float, got {text!r}") from exc
    return text


def validate_config(cfg: RunConfig) -> RunConfig:
    for key, choices in _CHOICES.items():
        if getattr(cfg, key) not in choices:
            raise ConfigError(f"{key} must be one of {choices}, got {getattr(cfg, key)!r}")
    positive = ("dim", "gtu_dim", "glu_dim", "layers", "rpe_layers", "rpe_hidden",
                "seq_len", "batch_size", "peak_lr", "warmup_steps", "val_batches")
    for key in positive:
        if getattr(cfg, key) <= 0:
            raise ConfigError(f"{key} must be positive")
    nonneg = ("steps", "weight_decay", "clip_norm", "val_interval")
    for key in nonneg:
        if getattr(cfg, key) < 0:
            raise ConfigError(f"{key} must be non-negative")
    if not 0.0 <= cfg.decay <= 1.0:
        raise ConfigError("decay must lie in [0, 1]")
    if not 0.0 < cfg.val_fraction < 1.0:
        raise ConfigError("val_fraction must lie strictly between 0 and 1")
    if cfg.seq_len < 2:
        raise ConfigError("seq_len must be at least 2 to form next-token targets")
    return cfg


def parse_config_text(text: str, source: str = "<config>") -> RunConfig:
    values = {}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"{source}:{lineno}: expected key = value, got {raw!r}")
        key, _, val = line.partition("=")
        key, val = key.strip(), val.strip()
        if key not in _TYPES:
            raise ConfigError(f"{source}:{lineno}: unknown key {key!r}")
        if key in values:
            raise ConfigError(f"{source}:{lineno}: duplicate key {key!r}")
        values[key] = _parse_value(key, val)
    return validate_config(RunConfig(**values))


def load_config(path: str) -> RunConfig:
    with open(path, encoding="utf-8") as fh:
        return parse_config_text(fh.read(), source=path)


def serialize_config(cfg: RunConfig) -> str:
    """Round-trippable key = value rendering in schema order."""
    lines = []
    for f in fields(RunConfig):
        value = getattr(cfg, f.name)
        rendered = str(value).lower() if isinstance(value, bool) else str(value)
        lines.append(f"{f.name} = {rendered}")
    return "\n".join(lines) + "\n"


def apply_overrides(cfg: RunConfig, **overrides) -> RunConfig:
    """Replace fields with non-None override values (CLI flags beat file)."""
    values = {f.name: getattr(cfg, f.name) for f in fields(RunConfig)}
    for key, val in overrides.items():
        if key not in values:
            raise ConfigError(f"unknown config key {key!r}")
        if val is not None:
            values[key] = val
    return validate_config(RunConfig(**values))


def model_config_dict(cfg: RunConfig, vocab_size: int) -> dict:
    """Project run settings onto the model configuration dictionary."""
    return {
        "vocab_size": vocab_size,
        "dim": cfg.dim,
        "gtu_dim": cfg.gtu_dim,
        "glu_dim": cfg.glu_dim,
        "layers": cfg.layers,
        "activation": cfg.activation,
        "norm": cfg.norm,
        "decay": cfg.decay,
        "learn_decay": cfg.learn_decay,
        "causal": cfg.causal,
        "strategy": cfg.strategy,
        "rpe_layers": cfg.rpe_layers,
        "rpe_hidden": cfg.rpe_hidden,
        "rpe_activation": cfg.rpe_activation,
        "rpe_input_mode": cfg.rpe_input_mode,
        "share_rpe": cfg.share_rpe,
        "tie_embeddings": cfg.tie_embeddings,
    }
