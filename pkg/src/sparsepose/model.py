"""Transformer encoder with a global-orientation head and a local-pose head."""

from __future__ import annotations

import json
import math
from collections import OrderedDict
from dataclasses import asdict, dataclass, fields
from pathlib import Path

import numpy as np

from . import autodiff as ad
from .errors import ConfigError, FormatError, ShapeError
from .features import TrackerFrame
from .rotations import recover_6d
from .skeleton import NUM_JOINTS, PoseOutput, Skeleton, global_from_head, root_from_head

IDENTITY_6D = np.array([1.0, 0.0, 0.0, 0.0, 1.0, 0.0])
CHECKPOINT_FORMAT = "sparsepose-checkpoint/1"


@dataclass(frozen=True)
class ModelConfig:
    embed_dim: int = 256
    num_layers: int = 3
    num_heads: int = 8
    mlp_hidden: int = 256
    ff_dim: int = 256
    window: int = 40
    input_dim: int = 54
    output_local: int = (NUM_JOINTS - 1) * 6
    output_global: int = 6
    predict_pelvis: bool = False
    dtype: str = "float32"

    def __post_init__(self):
        if self.embed_dim % self.num_heads:
            raise ConfigError(f"embed_dim {self.embed_dim} is not divisible by num_heads {self.num_heads}")
        if self.output_local + self.output_global != NUM_JOINTS * 6:
            raise ConfigError("output sizes must cover 22 joints x 6D")
        if min(self.embed_dim, self.num_layers, self.num_heads, self.mlp_hidden, self.ff_dim, self.window) < 1:
            raise ConfigError("model dimensions must be positive")
        if self.dtype not in ("float32", "float64"):
            raise ConfigError(f"dtype must be float32 or float64, got {self.dtype}")

    @classmethod
    def from_dict(cls, d: dict) -> "ModelConfig":
        known = {f.name for f in fields(cls)}
        unknown = set(d) - known
        if unknown:
            raise ConfigError(f"unknown model config keys: {sorted(unknown)}")
        return cls(**d)


def positional_encoding(length: int, dim: int) -> np.ndarray:
    pos = np.arange(length)[:, None]
    div = np.exp(np.arange(0, dim, 2) * (-math.log(10000.0) / dim))
    pe = np.zeros((length, dim))
    pe[:, 0::2] = np.sin(pos * div)
    pe[:, 1::2] = np.cos(pos * div)[:, : dim // 2]
    return pe


class ModelWeights:
    """Named parameter tensors plus the config that shaped them."""

    def __init__(self, config: ModelConfig, params: "OrderedDict[str, ad.Tensor]"):
        self.config = config
        self.params = params
        self._pe = positional_encoding(config.window, config.embed_dim).astype(config.dtype)

    def __getitem__(self, name: str) -> ad.Tensor:
        return self.params[name]

    def tensors(self) -> list[ad.Tensor]:
        return list(self.params.values())

    def num_parameters(self) -> int:
        return int(sum(t.size for t in self.params.values()))

    def zero_grad(self) -> None:
        for t in self.params.values():
            t.grad = None

    def copy(self) -> "ModelWeights":
        return ModelWeights(
            self.config,
            OrderedDict((k, ad.Tensor(v.data.copy(), requires_grad=True)) for k, v in self.params.items()),
        )

    def arrays(self) -> dict[str, np.ndarray]:
        return {k: v.data for k, v in self.params.items()}


def init_weights(config: ModelConfig, seed: int = 0) -> ModelWeights:
    """Uniform(+-1/sqrt(fan_in)) weights; output layers start at the identity 6D code."""
    rng = np.random.default_rng(seed)
    dt = np.dtype(config.dtype)
    p: OrderedDict[str, np.ndarray] = OrderedDict()

    def lin(name, fan_in, fan_out):
        bound = 1.0 / math.sqrt(fan_in)
        p[f"{name}.w"] = rng.uniform(-bound, bound, (fan_in, fan_out))
        p[f"{name}.b"] = np.zeros(fan_out)

    e, h = config.embed_dim, config.mlp_hidden
    lin("embed", config.input_dim, e)
    for i in range(config.num_layers):
        pre = f"layers.{i}"
        p[f"{pre}.ln1.g"], p[f"{pre}.ln1.b"] = np.ones(e), np.zeros(e)
        for proj in ("q", "k", "v", "o"):
            lin(f"{pre}.attn.{proj}", e, e)
        p[f"{pre}.ln2.g"], p[f"{pre}.ln2.b"] = np.ones(e), np.zeros(e)
        lin(f"{pre}.ff1", e, config.ff_dim)
        lin(f"{pre}.ff2", config.ff_dim, e)
    p["final_ln.g"], p["final_ln.b"] = np.ones(e), np.zeros(e)

    lin("stab1", e, h)
    lin("stab2", h, config.output_global)
    lin("pose1", e, h)
    lin("pose2", h, config.output_local)
    p["stab2.w"][:] = 0.0
    p["stab2.b"][:] = IDENTITY_6D
    p["pose2.w"][:] = 0.0
    p["pose2.b"][:] = np.tile(IDENTITY_6D, config.output_local // 6)
    if config.predict_pelvis:
        lin("pelvis1", e, h)
        lin("pelvis2", h, 3)
        p["pelvis2.w"][:] = 0.0

    params = OrderedDict((k, ad.Tensor(v.astype(dt), requires_grad=True)) for k, v in p.items())
    return ModelWeights(config, params)


@dataclass
class ModelOutput:
    global6d: ad.Tensor  # (B, 6)
    local6d: ad.Tensor  # (B, 21, 6)
    pelvis: ad.Tensor | None = None  # (B, 3) when predict_pelvis


def _attention(w: ModelWeights, pre: str, x: ad.Tensor, last_only: bool) -> ad.Tensor:
    cfg = w.config
    b, n, e = x.shape
    heads, d = cfg.num_heads, e // cfg.num_heads
    xq = x[:, n - 1 :] if last_only else x
    nq = xq.shape[1]
    q = ad.linear(xq, w[f"{pre}.q.w"], w[f"{pre}.q.b"]).reshape(b, nq, heads, d).transpose(0, 2, 1, 3)
    k = ad.linear(x, w[f"{pre}.k.w"], w[f"{pre}.k.b"]).reshape(b, n, heads, d).transpose(0, 2, 3, 1)
    v = ad.linear(x, w[f"{pre}.v.w"], w[f"{pre}.v.b"]).reshape(b, n, heads, d).transpose(0, 2, 1, 3)
    att = ad.softmax((q @ k) * (1.0 / math.sqrt(d)), axis=-1)
    out = (att @ v).transpose(0, 2, 1, 3).reshape(b, nq, e)
    return ad.linear(out, w[f"{pre}.o.w"], w[f"{pre}.o.b"])


def _block(w: ModelWeights, i: int, x: ad.Tensor, last_only: bool) -> ad.Tensor:
    pre = f"layers.{i}"
    h = ad.layer_norm(x, w[f"{pre}.ln1.g"], w[f"{pre}.ln1.b"])
    a = _attention(w, f"{pre}.attn", h, last_only)
    x = (x[:, x.shape[1] - 1 :] if last_only else x) + a
    h = ad.layer_norm(x, w[f"{pre}.ln2.g"], w[f"{pre}.ln2.b"])
    h = ad.linear(ad.gelu(ad.linear(h, w[f"{pre}.ff1.w"], w[f"{pre}.ff1.b"])), w[f"{pre}.ff2.w"], w[f"{pre}.ff2.b"])
    return x + h


def _mlp(w: ModelWeights, name: str, x: ad.Tensor) -> ad.Tensor:
    h = ad.relu(ad.linear(x, w[f"{name}1.w"], w[f"{name}1.b"]))
    return ad.linear(h, w[f"{name}2.w"], w[f"{name}2.b"])


def forward(w: ModelWeights, window) -> ModelOutput:
    """Predict the pose of the window's last frame.

    ``window`` is ``(N, input_dim)`` or ``(B, N, input_dim)``. Attention is
    unmasked inside the window; nothing outside it is visible.
    """
    cfg = w.config
    x = window if isinstance(window, ad.Tensor) else ad.Tensor(np.asarray(window, dtype=cfg.dtype))
    if x.ndim == 2:
        x = x.reshape(1, *x.shape)
    if x.ndim != 3 or x.shape[1:] != (cfg.window, cfg.input_dim):
        raise ShapeError(f"expected window of shape (B, {cfg.window}, {cfg.input_dim}), got {x.shape}")
    b = x.shape[0]
    h = ad.linear(x, w["embed.w"], w["embed.b"]) + w._pe
    for i in range(cfg.num_layers):
        # the last block only needs the final timestep's output
        h = _block(w, i, h, last_only=i == cfg.num_layers - 1)
    feat = ad.layer_norm(h.reshape(b, cfg.embed_dim), w["final_ln.g"], w["final_ln.b"])
    global6d = _mlp(w, "stab", feat)
    local6d = _mlp(w, "pose", feat).reshape(b, cfg.output_local // 6, 6)
    pelvis = _mlp(w, "pelvis", feat) if cfg.predict_pelvis else None
    return ModelOutput(global6d, local6d, pelvis)


def predict(w: ModelWeights, windows: np.ndarray, batch_size: int = 256) -> tuple[np.ndarray, np.ndarray, np.ndarray | None]:
    """Inference over stacked windows; returns float64 arrays."""
    g, loc, pel = [], [], []
    with ad.no_grad():
        for start in range(0, windows.shape[0], batch_size):
            out = forward(w, windows[start : start + batch_size])
            g.append(out.global6d.data.astype(np.float64))
            loc.append(out.local6d.data.astype(np.float64))
            if out.pelvis is not None:
                pel.append(out.pelvis.data.astype(np.float64))
    n = windows.shape[0]
    if n == 0:
        return np.zeros((0, 6)), np.zeros((0, NUM_JOINTS - 1, 6)), None
    return np.concatenate(g), np.concatenate(loc), (np.concatenate(pel) if pel else None)


def decode(
    global6d,
    local6d,
    head_frame: TrackerFrame,
    s: Skeleton,
    *,
    use_stabilizer: bool = True,
    pelvis=None,
) -> PoseOutput:
    """6D codes plus the tracked head to a pose whose FK head sits on the tracker.

    ``head_frame`` holds the head device only (``pos (..., 3)``, ``orient
    (..., 3, 3)``). Without the stabilizer the pelvis orientation is derived
    from the head orientation through the predicted spine and neck rotations.
    ``pelvis`` overrides the head-derived root position.
    """
    local = recover_6d(local6d)
    if use_stabilizer:
        glob = recover_6d(global6d)
    else:
        glob = global_from_head(head_frame.orient, local)
    if pelvis is not None:
        root = np.asarray(pelvis, dtype=np.float64)
    else:
        root = root_from_head(s, glob, local, head_frame.pos)
    return PoseOutput(glob, local, root)


# -- checkpoints ---------------------------------------------------------------
def save_checkpoint(path, w: ModelWeights, extra: dict | None = None, arrays: dict | None = None) -> None:
    """npz container: a JSON header plus named weight arrays.

    ``extra`` is stored in the header, ``arrays`` (e.g. optimizer moments)
    next to the weights under an ``opt/`` prefix.
    """
    header = {"format": CHECKPOINT_FORMAT, "config": asdict(w.config), "names": list(w.params), "extra": extra or {}}
    payload = {f"w/{k}": v.data for k, v in w.params.items()}
    payload.update({f"opt/{k}": v for k, v in (arrays or {}).items()})
    payload["__header__"] = np.frombuffer(json.dumps(header).encode(), dtype=np.uint8)
    path = Path(path)
    tmp = path.with_name(path.name + ".tmp")
    with open(tmp, "wb") as fh:
        np.savez(fh, **payload)
    tmp.replace(path)


def load_checkpoint(path, expect: ModelConfig | None = None) -> tuple[ModelWeights, dict, dict]:
    """Return weights, the ``extra`` header dict and any optimizer arrays."""
    try:
        with np.load(Path(path), allow_pickle=False) as z:
            header = json.loads(bytes(z["__header__"]).decode())
            if header.get("format") != CHECKPOINT_FORMAT:
                raise FormatError(f"unknown checkpoint format {header.get('format')!r}")
            config = ModelConfig.from_dict(header["config"])
            if expect is not None and expect != config:
                raise ConfigError(f"checkpoint config {config} does not match expected {expect}")
            params = OrderedDict(
                (k, ad.Tensor(z[f"w/{k}"].copy(), requires_grad=True)) for k in header["names"]
            )
            opt = {k[4:]: z[k].copy() for k in z.files if k.startswith("opt/")}
    except (KeyError, ValueError, OSError) as exc:
        if isinstance(exc, (ConfigError, FormatError)):
            raise
        raise FormatError(f"cannot read checkpoint {path}: {exc}") from None
    ref = init_weights(config)
    for k, t in ref.params.items():
        if k not in params or params[k].shape != t.shape:
            raise FormatError(f"checkpoint tensor {k!r} missing or mis-shaped")
    return ModelWeights(config, params), header.get("extra", {}), opt
