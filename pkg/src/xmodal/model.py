"""Trainable linking heads: per-modality projection to a common width plus
a small FC transform stack, with manual backprop.

Four output blocks are produced per forward pass: length-normalized
projection outputs (used for the search space and the projection-level
loss) and length-normalized transform outputs (transform-level loss,
AAM regularizer). The transform stack consumes the pre-normalization
projection activations; each transform layer applies the activation to
its input and then a linear map, so the final operation before
normalization is always linear.
"""

from __future__ import annotations

import json
import struct
from dataclasses import dataclass, field, asdict

import numpy as np

from .numerics import seeded_rng

CKPT_MAGIC = b"EMB1"
CKPT_VERSION = 2

TAU_MIN, TAU_MAX = 0.01, 1.0


@dataclass
class LinkerConfig:
    dim_speaker_in: int
    dim_text_in: int
    common_dim: int = 768
    n_transform_layers: int = 2
    activation: str = "relu"  # relu | gelu
    learnable_temperature: bool = True
    init_temperature: float = 0.07
    aam_margin: float = 0.2
    aam_scale: float = 30.0
    n_speakers_train: int = 0  # 0 disables the AAM head

    def validate(self):
        if self.common_dim < 1 or self.dim_speaker_in < 1 or self.dim_text_in < 1:
            raise ValueError("dims must be positive")
        if self.n_transform_layers < 1:
            raise ValueError("n_transform_layers must be >= 1")
        if self.init_temperature <= 0:
            raise ValueError("init_temperature must be positive")
        if self.activation not in ("relu", "gelu"):
            raise ValueError(f"unknown activation {self.activation!r}")
        return self


@dataclass
class LinkerParams:
    config: LinkerConfig
    tensors: dict = field(default_factory=dict)  # name -> float64 ndarray

    @property
    def tau(self):
        return float(np.exp(self.tensors["log_tau"][0]))

    def names(self):
        return sorted(self.tensors)

    def copy(self):
        return LinkerParams(self.config, {k: v.copy() for k, v in self.tensors.items()})

    def pack(self):
        return np.concatenate([self.tensors[n].ravel() for n in self.names()])

    def unpack(self, vec):
        out = self.copy()
        i = 0
        for n in out.names():
            t = out.tensors[n]
            out.tensors[n] = np.asarray(vec[i:i + t.size], dtype=np.float64).reshape(t.shape)
            i += t.size
        return out

    def check_finite(self):
        for n, t in self.tensors.items():
            if not np.all(np.isfinite(t)):
                raise FloatingPointError(f"non-finite values in parameter {n}")


def param_count(config):
    """Closed-form parameter count for a config."""
    d = config.common_dim
    n = (config.dim_speaker_in * d + d) + (config.dim_text_in * d + d)
    n += 2 * config.n_transform_layers * (d * d + d)
    n += 1  # log_tau
    if config.n_speakers_train > 0:
        n += config.n_speakers_train * d
    return n


def _glorot(rng, fan_in, fan_out):
    limit = np.sqrt(6.0 / (fan_in + fan_out))
    return rng.uniform(-limit, limit, size=(fan_in, fan_out))


def init_params(config, seed):
    config.validate()
    rng = seeded_rng(seed)
    d = config.common_dim
    t = {}
    for mod, din in (("spk", config.dim_speaker_in), ("txt", config.dim_text_in)):
        t[f"{mod}.proj.W"] = _glorot(rng, din, d)
        t[f"{mod}.proj.b"] = np.zeros(d)
        for l in range(config.n_transform_layers):
            t[f"{mod}.t{l}.W"] = _glorot(rng, d, d)
            t[f"{mod}.t{l}.b"] = np.zeros(d)
    t["log_tau"] = np.array([np.log(config.init_temperature)])
    if config.n_speakers_train > 0:
        w = _glorot(rng, config.n_speakers_train, d)
        t["aam.W"] = w / np.linalg.norm(w, axis=1, keepdims=True)
    return LinkerParams(config, t)


def _act(x, kind):
    if kind == "relu":
        return np.maximum(x, 0.0)
    # tanh-approximation GELU
    return 0.5 * x * (1.0 + np.tanh(np.sqrt(2.0 / np.pi) * (x + 0.044715 * x ** 3)))


def _act_grad(x, kind):
    if kind == "relu":
        return (x > 0.0).astype(np.float64)
    c = np.sqrt(2.0 / np.pi)
    inner = c * (x + 0.044715 * x ** 3)
    th = np.tanh(inner)
    return 0.5 * (1.0 + th) + 0.5 * x * (1.0 - th ** 2) * c * (1.0 + 3 * 0.044715 * x ** 2)


def _rownorm(x):
    norms = np.linalg.norm(x, axis=1, keepdims=True)
    if np.any(norms <= 1e-12):
        raise FloatingPointError("degenerate row before normalization")
    return x / norms, norms


def _rownorm_backward(y, norms, dy):
    # y = x / ||x||; dx = (dy - y * <y, dy>) / ||x||
    return (dy - y * np.sum(y * dy, axis=1, keepdims=True)) / norms


@dataclass
class ForwardOutput:
    x_s_p: np.ndarray
    x_t_p: np.ndarray
    x_s_t: np.ndarray
    x_t_t: np.ndarray
    cache: dict


def _forward_branch(params, mod, x, cfg):
    t = params.tensors
    cache = {"x": x}
    p_raw = x @ t[f"{mod}.proj.W"] + t[f"{mod}.proj.b"]
    x_p, p_norms = _rownorm(p_raw)
    cache.update(p_raw=p_raw, x_p=x_p, p_norms=p_norms, pre=[], post=[])
    h = p_raw
    for l in range(cfg.n_transform_layers):
        a = _act(h, cfg.activation)
        cache["pre"].append(h)
        cache["post"].append(a)
        h = a @ t[f"{mod}.t{l}.W"] + t[f"{mod}.t{l}.b"]
    x_t, t_norms = _rownorm(h)
    cache.update(t_raw=h, x_t=x_t, t_norms=t_norms)
    return x_p, x_t, cache


def forward(params, speaker_rows, text_rows):
    cfg = params.config
    s = np.asarray(speaker_rows, dtype=np.float64)
    x = np.asarray(text_rows, dtype=np.float64)
    if s.shape[1] != cfg.dim_speaker_in or x.shape[1] != cfg.dim_text_in:
        raise ValueError("input dims do not match config")
    if not (np.all(np.isfinite(s)) and np.all(np.isfinite(x))):
        raise ValueError("non-finite input")
    x_s_p, x_s_t, cache_s = _forward_branch(params, "spk", s, cfg)
    x_t_p, x_t_t, cache_t = _forward_branch(params, "txt", x, cfg)
    return ForwardOutput(x_s_p, x_t_p, x_s_t, x_t_t, {"spk": cache_s, "txt": cache_t})


def _backward_branch(params, mod, cache, d_x_p, d_x_t, grads, cfg):
    t = params.tensors
    d_t_raw = _rownorm_backward(cache["x_t"], cache["t_norms"], d_x_t)
    h_grad = d_t_raw
    for l in reversed(range(cfg.n_transform_layers)):
        a = cache["post"][l]
        pre = cache["pre"][l]
        grads[f"{mod}.t{l}.W"] += a.T @ h_grad
        grads[f"{mod}.t{l}.b"] += h_grad.sum(axis=0)
        d_a = h_grad @ t[f"{mod}.t{l}.W"].T
        h_grad = d_a * _act_grad(pre, cfg.activation)
    d_p_raw = _rownorm_backward(cache["x_p"], cache["p_norms"], d_x_p) + h_grad
    grads[f"{mod}.proj.W"] += cache["x"].T @ d_p_raw
    grads[f"{mod}.proj.b"] += d_p_raw.sum(axis=0)


def backward(params, out, d_x_s_p, d_x_t_p, d_x_s_t, d_x_t_t):
    """Parameter gradients given gradients on the four normalized output
    blocks. Returns name -> gradient matching params.tensors shapes
    (log_tau and aam.W entries are zero here; losses add them)."""
    cfg = params.config
    grads = {n: np.zeros_like(v) for n, v in params.tensors.items()}
    _backward_branch(params, "spk", out.cache["spk"], d_x_s_p, d_x_s_t, grads, cfg)
    _backward_branch(params, "txt", out.cache["txt"], d_x_t_p, d_x_t_t, grads, cfg)
    return grads


def project(params, rows, modality):
    """Length-normalized projection-layer outputs for one modality
    ("speaker" or "text"); these form the search space."""
    cfg = params.config
    x = np.asarray(rows, dtype=np.float64)
    mod = {"speaker": "spk", "text": "txt"}[modality]
    expected = cfg.dim_speaker_in if mod == "spk" else cfg.dim_text_in
    if x.shape[1] != expected:
        raise ValueError(f"input dim {x.shape[1]} does not match config ({expected})")
    x_p, _, _ = _forward_branch(params, mod, x, cfg)
    return x_p


def save_checkpoint(params, path):
    """Versioned binary container: header, JSON block (config + tensor
    layout), then float64 LE tensor payloads in layout order."""
    cfg = params.config
    meta = {
        "config": asdict(cfg),
        "tensors": [{"name": n, "shape": list(params.tensors[n].shape)} for n in params.names()],
    }
    blob = json.dumps(meta, sort_keys=True).encode("utf-8")
    with open(path, "wb") as f:
        f.write(struct.pack("<4sH", CKPT_MAGIC, CKPT_VERSION))
        f.write(struct.pack("<I", len(blob)))
        f.write(blob)
        for n in params.names():
            f.write(np.ascontiguousarray(params.tensors[n], dtype="<f8").tobytes())


def load_checkpoint(path):
    with open(path, "rb") as f:
        raw = f.read()
    if len(raw) < 10 or raw[:4] != CKPT_MAGIC:
        raise ValueError("not a checkpoint file")
    version, = struct.unpack_from("<H", raw, 4)
    if version != CKPT_VERSION:
        raise ValueError(f"unsupported checkpoint version {version}")
    blob_len, = struct.unpack_from("<I", raw, 6)
    try:
        meta = json.loads(raw[10:10 + blob_len].decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as e:
        raise ValueError("corrupt checkpoint metadata") from e
    cfg = LinkerConfig(**meta["config"])
    tensors = {}
    off = 10 + blob_len
    for spec in meta["tensors"]:
        shape = tuple(spec["shape"])
        size = int(np.prod(shape)) if shape else 1
        end = off + size * 8
        if end > len(raw):
            raise ValueError("truncated checkpoint payload")
        tensors[spec["name"]] = np.frombuffer(raw[off:end], dtype="<f8").reshape(shape).copy()
        off = end
    if off != len(raw):
        raise ValueError("trailing bytes in checkpoint")
    return LinkerParams(cfg, tensors)
