"""Flat ``key=value`` run configuration shared by the CLI commands."""

from __future__ import annotations

from dataclasses import dataclass, field, fields
from pathlib import Path

from .errors import ConfigError
from .ik import IkConfig
from .model import ModelConfig
from .training import LossWeights, TrainConfig

_MODEL_KEYS = {"embed_dim", "num_layers", "num_heads", "mlp_hidden", "ff_dim", "dtype"}
_SHARED_KEYS = {"window", "predict_pelvis"}
_TRAIN_KEYS = {f.name for f in fields(TrainConfig)} - {"loss_weights"} - _SHARED_KEYS
_LOSS_KEYS = {"lambda_ori": "ori", "lambda_rot": "rot", "lambda_fk": "fk"}
_IK_KEYS = {"ik_lr": "lr", "ik_iters": "iters", "ik_optimizer": "optimizer"}
_OTHER_KEYS = {"skeleton"}


def _coerce(key: str, raw: str, like):
    if isinstance(like, bool):
        low = raw.lower()
        if low in ("1", "true", "yes", "on"):
            return True
        if low in ("0", "false", "no", "off"):
            return False
        raise ConfigError(f"{key}: expected a boolean, got {raw!r}")
    try:
        if isinstance(like, int):
            return int(float(raw)) if float(raw).is_integer() else int(raw)
        if isinstance(like, float):
            return float(raw)
    except ValueError:
        raise ConfigError(f"{key}: cannot parse {raw!r}") from None
    return raw


def parse_kv(text: str) -> dict[str, str]:
    out: dict[str, str] = {}
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"config line {lineno}: expected key=value")
        k, v = (p.strip() for p in line.split("=", 1))
        out[k] = v
    return out


@dataclass
class RunConfig:
    model: ModelConfig = field(default_factory=ModelConfig)
    train: TrainConfig = field(default_factory=TrainConfig)
    ik: IkConfig = field(default_factory=IkConfig)
    skeleton: str | None = None

    @classmethod
    def from_kv(cls, kv: dict[str, str]) -> "RunConfig":
        known = _MODEL_KEYS | _SHARED_KEYS | _TRAIN_KEYS | set(_LOSS_KEYS) | set(_IK_KEYS) | _OTHER_KEYS
        unknown = set(kv) - known
        if unknown:
            raise ConfigError(f"unknown config keys: {sorted(unknown)}")
        m0, t0, i0, l0 = ModelConfig(), TrainConfig(), IkConfig(), LossWeights()
        m = {k: _coerce(k, kv[k], getattr(m0, k)) for k in (_MODEL_KEYS | _SHARED_KEYS) & set(kv)}
        t = {k: _coerce(k, kv[k], getattr(t0, k)) for k in (_TRAIN_KEYS | _SHARED_KEYS) & set(kv)}
        lw = {_LOSS_KEYS[k]: _coerce(k, kv[k], 0.0) for k in _LOSS_KEYS if k in kv}
        ik = {_IK_KEYS[k]: _coerce(k, kv[k], getattr(i0, _IK_KEYS[k])) for k in _IK_KEYS if k in kv}
        t["loss_weights"] = LossWeights(**{**l0.__dict__, **lw})
        return cls(ModelConfig(**m), TrainConfig(**t), IkConfig(**ik), kv.get("skeleton"))

    @classmethod
    def load(cls, path: str | Path | None) -> "RunConfig":
        if path is None:
            return cls()
        return cls.from_kv(parse_kv(Path(path).read_text()))
