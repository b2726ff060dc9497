"""Minimal dense-network substrate with exact reverse-mode gradients.

Networks alternate fully connected layers with (optional) batch
normalization on the hidden layers; the output layer is linear. All
arithmetic is float64 so finite-difference checks are crisp.
"""

from __future__ import annotations

import json
import struct
import zlib
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .exceptions import CheckpointError, NumericalError

BN_EPS = 1e-5
BN_MOMENTUM = 0.99
LEAKY_SLOPE = 0.01

__all__ = [
    "NetworkSpec", "Network", "AdamState", "adam_step",
    "write_checkpoint", "read_checkpoint",
]


@dataclass(frozen=True)
class NetworkSpec:
    layer_sizes: tuple[int, ...]
    hidden_activation: str = "leaky-relu"
    batch_norm: bool = True

    def __post_init__(self):
        if isinstance(self.layer_sizes, list):
            object.__setattr__(self, "layer_sizes", tuple(self.layer_sizes))
        if len(self.layer_sizes) < 3:
            raise ValueError("need at least one hidden layer")
        if any(s < 1 for s in self.layer_sizes):
            raise ValueError("layer sizes must be positive")
        if self.hidden_activation not in ("penalized-tanh", "leaky-relu"):
            raise ValueError(f"unknown activation {self.hidden_activation!r}")

    def to_dict(self) -> dict:
        return {"layer_sizes": list(self.layer_sizes),
                "hidden_activation": self.hidden_activation,
                "batch_norm": self.batch_norm}

    @classmethod
    def from_dict(cls, raw: dict) -> "NetworkSpec":
        return cls(tuple(raw["layer_sizes"]), raw["hidden_activation"],
                   raw["batch_norm"])


def _activation(kind: str, x: np.ndarray) -> np.ndarray:
    if kind == "leaky-relu":
        return np.where(x > 0, x, LEAKY_SLOPE * x)
    t = np.tanh(x)
    return np.where(x > 0, t, 0.25 * t)


def _activation_grad(kind: str, x: np.ndarray) -> np.ndarray:
    if kind == "leaky-relu":
        return np.where(x > 0, 1.0, LEAKY_SLOPE)
    dt = 1.0 - np.tanh(x) ** 2
    return np.where(x > 0, dt, 0.25 * dt)


class Network:
    """Dense network with per-layer parameters and optional batch norm."""

    def __init__(self, spec: NetworkSpec, rng: np.random.Generator):
        self.spec = spec
        sizes = spec.layer_sizes
        self.num_layers = len(sizes) - 1
        self.dense: list[dict[str, np.ndarray]] = []
        self.bn: list[dict[str, np.ndarray] | None] = []
        for i in range(self.num_layers):
            fan_in, fan_out = sizes[i], sizes[i + 1]
            limit = np.sqrt(6.0 / (fan_in + fan_out))
            self.dense.append({
                "W": rng.uniform(-limit, limit, size=(fan_in, fan_out)),
                "b": np.zeros(fan_out),
            })
            hidden = i < self.num_layers - 1
            if hidden and spec.batch_norm:
                self.bn.append({
                    "gamma": np.ones(fan_out),
                    "beta": np.zeros(fan_out),
                    "mean": np.zeros(fan_out),
                    "var": np.ones(fan_out),
                })
            else:
                self.bn.append(None)

    # -- forward / backward ------------------------------------------------

    def forward(self, x: np.ndarray, train: bool = False,
                update_stats: bool | None = None):
        """Return (output, trace). Train mode uses batch statistics in batch
        norm; infer mode uses running statistics and yields no usable trace
        for backward."""
        if update_stats is None:
            update_stats = train
        x = np.atleast_2d(np.asarray(x, dtype=float))
        if x.shape[1] != self.spec.layer_sizes[0]:
            raise ValueError(
                f"input width {x.shape[1]} != spec {self.spec.layer_sizes[0]}")
        trace = {"train": train, "layers": []}
        h = x
        for i in range(self.num_layers):
            rec: dict = {"x": h}
            z = h @ self.dense[i]["W"] + self.dense[i]["b"]
            hidden = i < self.num_layers - 1
            y = z
            if hidden and self.bn[i] is not None:
                bn = self.bn[i]
                if train:
                    mu = z.mean(axis=0)
                    var = z.var(axis=0)
                    if update_stats:
                        bn["mean"] = BN_MOMENTUM * bn["mean"] + (1 - BN_MOMENTUM) * mu
                        bn["var"] = BN_MOMENTUM * bn["var"] + (1 - BN_MOMENTUM) * var
                else:
                    mu, var = bn["mean"], bn["var"]
                inv_std = 1.0 / np.sqrt(var + BN_EPS)
                zhat = (z - mu) * inv_std
                y = bn["gamma"] * zhat + bn["beta"]
                rec.update(zhat=zhat, inv_std=inv_std)
            if hidden:
                rec["pre_act"] = y
                h = _activation(self.spec.hidden_activation, y)
            else:
                h = y
            trace["layers"].append(rec)
        return h, trace

    def backward(self, trace: dict, dout: np.ndarray):
        """Exact gradients of the traced forward; returns (grads, dx).

        grads mirrors the parameter structure: grads["dense"][i]["W"], etc.
        Requires a train-mode trace so batch-statistics pathways are live.
        """
        if not trace["train"]:
            raise ValueError("backward requires a train-mode trace")
        grads = {
            "dense": [{"W": None, "b": None} for _ in range(self.num_layers)],
            "bn": [None if b is None else {"gamma": None, "beta": None}
                   for b in self.bn],
        }
        d_h = np.atleast_2d(np.asarray(dout, dtype=float))
        batch = trace["layers"][0]["x"].shape[0]
        for i in reversed(range(self.num_layers)):
            rec = trace["layers"][i]
            hidden = i < self.num_layers - 1
            if hidden:
                dy = d_h * _activation_grad(self.spec.hidden_activation,
                                            rec["pre_act"])
            else:
                dy = d_h
            if hidden and self.bn[i] is not None:
                zhat, inv_std = rec["zhat"], rec["inv_std"]
                grads["bn"][i]["gamma"] = np.sum(dy * zhat, axis=0)
                grads["bn"][i]["beta"] = np.sum(dy, axis=0)
                dzhat = dy * self.bn[i]["gamma"]
                dz = inv_std * (dzhat - dzhat.mean(axis=0)
                                - zhat * (dzhat * zhat).mean(axis=0))
            else:
                dz = dy
            grads["dense"][i]["W"] = rec["x"].T @ dz
            grads["dense"][i]["b"] = dz.sum(axis=0)
            d_h = dz @ self.dense[i]["W"].T
        return grads, d_h

    # -- parameter bookkeeping ----------------------------------------------

    def trainable(self) -> list[np.ndarray]:
        """Flat list of trainable arrays in a fixed order."""
        params = []
        for i in range(self.num_layers):
            params.extend([self.dense[i]["W"], self.dense[i]["b"]])
            if self.bn[i] is not None:
                params.extend([self.bn[i]["gamma"], self.bn[i]["beta"]])
        return params

    def set_trainable(self, arrays: list[np.ndarray]) -> None:
        own = self.trainable()
        if len(own) != len(arrays):
            raise ValueError("parameter count mismatch")
        for dst, src in zip(own, arrays):
            if dst.shape != src.shape:
                raise ValueError("parameter shape mismatch")
            dst[...] = src

    def grads_flat(self, grads: dict) -> list[np.ndarray]:
        flat = []
        for i in range(self.num_layers):
            flat.extend([grads["dense"][i]["W"], grads["dense"][i]["b"]])
            if self.bn[i] is not None:
                flat.extend([grads["bn"][i]["gamma"], grads["bn"][i]["beta"]])
        return flat

    def l2_value(self) -> float:
        """0.5 * sum of squared dense weights (biases and bn excluded)."""
        return 0.5 * sum(float(np.sum(d["W"] ** 2)) for d in self.dense)

    def add_l2_grads(self, grads: dict, coeff: float) -> None:
        if coeff == 0.0:
            return
        for i in range(self.num_layers):
            grads["dense"][i]["W"] += coeff * self.dense[i]["W"]

    def state_arrays(self, prefix: str) -> dict[str, np.ndarray]:
        out = {}
        for i in range(self.num_layers):
            out[f"{prefix}/dense{i}/W"] = self.dense[i]["W"]
            out[f"{prefix}/dense{i}/b"] = self.dense[i]["b"]
            if self.bn[i] is not None:
                for key in ("gamma", "beta", "mean", "var"):
                    out[f"{prefix}/bn{i}/{key}"] = self.bn[i][key]
        return out

    def load_arrays(self, prefix: str, arrays: dict[str, np.ndarray]) -> None:
        for name, dst in self.state_arrays(prefix).items():
            if name not in arrays:
                raise CheckpointError(f"checkpoint missing array {name}")
            src = arrays[name]
            if src.shape != dst.shape:
                raise CheckpointError(
                    f"array {name} has shape {src.shape}, expected {dst.shape}")
            dst[...] = src


@dataclass
class AdamState:
    """Bias-corrected Adam accumulators for one parameter list."""

    lr: float
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    step: int = 0
    m: list[np.ndarray] = field(default_factory=list)
    v: list[np.ndarray] = field(default_factory=list)

    @classmethod
    def for_params(cls, params: list[np.ndarray], lr: float) -> "AdamState":
        return cls(lr=lr,
                   m=[np.zeros_like(p) for p in params],
                   v=[np.zeros_like(p) for p in params])

    def state_arrays(self, prefix: str) -> dict[str, np.ndarray]:
        out = {}
        for i, (m, v) in enumerate(zip(self.m, self.v)):
            out[f"{prefix}/m{i}"] = m
            out[f"{prefix}/v{i}"] = v
        return out

    def load_arrays(self, prefix: str, arrays: dict[str, np.ndarray],
                    step: int) -> None:
        for name, dst in self.state_arrays(prefix).items():
            if name not in arrays:
                raise CheckpointError(f"checkpoint missing array {name}")
            dst[...] = arrays[name]
        self.step = step


def adam_step(params: list[np.ndarray], grads: list[np.ndarray],
              state: AdamState) -> None:
    """Standard bias-corrected Adam update, in place."""
    if len(params) != len(grads) or len(params) != len(state.m):
        raise ValueError("parameter / gradient / state length mismatch")
    for g in grads:
        if not np.all(np.isfinite(g)):
            raise NumericalError("non-finite gradient passed to Adam")
    state.step += 1
    t = state.step
    bc1 = 1.0 - state.beta1 ** t
    bc2 = 1.0 - state.beta2 ** t
    for p, g, m, v in zip(params, grads, state.m, state.v):
        m *= state.beta1
        m += (1.0 - state.beta1) * g
        v *= state.beta2
        v += (1.0 - state.beta2) * g * g
        p -= state.lr * (m / bc1) / (np.sqrt(v / bc2) + state.eps)


# -- checkpoint format -------------------------------------------------------
#
# magic | version u32 | header length u64 | JSON header | raw arrays | crc32
# The header carries arbitrary metadata plus a manifest of (name, dtype,
# shape) in write order; arrays are stored little-endian.

MAGIC = b"SPCK"
FORMAT_VERSION = 1


def write_checkpoint(path: str | Path, meta: dict,
                     arrays: dict[str, np.ndarray]) -> None:
    manifest = []
    blobs = []
    for name, arr in arrays.items():
        arr = np.ascontiguousarray(arr)
        le = arr.astype(arr.dtype.newbyteorder("<"), copy=False)
        manifest.append({"name": name, "dtype": str(arr.dtype),
                         "shape": list(arr.shape)})
        blobs.append(le.tobytes())
    header = json.dumps({"meta": meta, "manifest": manifest}).encode("utf-8")
    body = (MAGIC + struct.pack("<I", FORMAT_VERSION)
            + struct.pack("<Q", len(header)) + header + b"".join(blobs))
    payload = body + struct.pack("<I", zlib.crc32(body))
    Path(path).write_bytes(payload)


def read_checkpoint(path: str | Path) -> tuple[dict, dict[str, np.ndarray]]:
    path = Path(path)
    data = path.read_bytes()
    if len(data) < len(MAGIC) + 16 or data[:len(MAGIC)] != MAGIC:
        raise CheckpointError(f"{path} is not a checkpoint file")
    body, crc_bytes = data[:-4], data[-4:]
    if struct.unpack("<I", crc_bytes)[0] != zlib.crc32(body):
        raise CheckpointError(f"{path}: checksum mismatch (corrupt file)")
    offset = len(MAGIC)
    version = struct.unpack_from("<I", body, offset)[0]
    offset += 4
    if version != FORMAT_VERSION:
        raise CheckpointError(f"{path}: unsupported format version {version}")
    header_len = struct.unpack_from("<Q", body, offset)[0]
    offset += 8
    header = json.loads(body[offset:offset + header_len].decode("utf-8"))
    offset += header_len
    arrays = {}
    for entry in header["manifest"]:
        dtype = np.dtype(entry["dtype"]).newbyteorder("<")
        count = int(np.prod(entry["shape"])) if entry["shape"] else 1
        nbytes = dtype.itemsize * count
        chunk = body[offset:offset + nbytes]
        if len(chunk) != nbytes:
            raise CheckpointError(f"{path}: truncated array data")
        arrays[entry["name"]] = np.frombuffer(chunk, dtype=dtype).reshape(
            entry["shape"]).astype(dtype.newbyteorder("="))
        offset += nbytes
    if offset != len(body):
        raise CheckpointError(f"{path}: trailing bytes after arrays")
    return header["meta"], arrays
