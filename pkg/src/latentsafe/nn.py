"""Parameter storage, dense networks, Adam, checkpoints and gradient checks."""

from __future__ import annotations

import json
from pathlib import Path
from typing import Callable, Iterable

import numpy as np

from .autodiff import Tensor, as_tensor

FORMAT_VERSION = 1

_ACTIVATIONS = {
    "tanh": Tensor.tanh,
    "relu": Tensor.relu,
    "softplus": Tensor.softplus,
    "sigmoid": Tensor.sigmoid,
    "linear": lambda x: x,
}


class ShapeError(ValueError):
    pass


class ParamStore:
    """Named float64 arrays.  Names are unique and shapes fixed once created."""

    def __init__(self):
        self._arrays: dict[str, np.ndarray] = {}

    def add(self, name: str, value) -> None:
        if name in self._arrays:
            raise KeyError(f"duplicate parameter name {name!r}")
        self._arrays[name] = np.array(value, dtype=np.float64)

    def __getitem__(self, name: str) -> np.ndarray:
        return self._arrays[name]

    def __setitem__(self, name: str, value) -> None:
        value = np.asarray(value, dtype=np.float64)
        if name not in self._arrays:
            raise KeyError(f"unknown parameter {name!r}")
        if value.shape != self._arrays[name].shape:
            raise ShapeError(f"{name}: shape {value.shape} != {self._arrays[name].shape}")
        self._arrays[name] = value.copy()

    def __contains__(self, name: str) -> bool:
        return name in self._arrays

    def __iter__(self):
        return iter(self._arrays)

    def __len__(self) -> int:
        return len(self._arrays)

    def items(self):
        return self._arrays.items()

    def names(self) -> list[str]:
        return list(self._arrays)

    def size(self) -> int:
        return int(sum(a.size for a in self._arrays.values()))

    def copy(self) -> "ParamStore":
        out = ParamStore()
        for k, v in self._arrays.items():
            out.add(k, v)
        return out

    def load_from(self, other: "ParamStore") -> None:
        for k in self._arrays:
            self[k] = other[k]

    def track(self) -> dict[str, Tensor]:
        """Fresh leaf tensors that collect gradients on backward."""
        return {k: Tensor(v, requires_grad=True, name=k) for k, v in self._arrays.items()}

    def const(self) -> dict[str, Tensor]:
        return {k: Tensor(v, name=k) for k, v in self._arrays.items()}

    def equal(self, other: "ParamStore") -> bool:
        return self.names() == other.names() and all(
            np.array_equal(self[k], other[k]) for k in self._arrays
        )


def collect_grads(tracked: dict[str, Tensor]) -> dict[str, np.ndarray]:
    return {k: (t.grad if t.grad is not None else np.zeros_like(t.data)) for k, t in tracked.items()}


class MLP:
    """Dense network ``sizes[0] -> ... -> sizes[-1]`` over batched row vectors."""

    def __init__(self, name: str, sizes: Iterable[int], activation: str = "tanh",
                 out_activation: str = "linear", out_scale: float = 1.0, out_bias: float = 0.0):
        self.name = name
        self.sizes = tuple(int(s) for s in sizes)
        if len(self.sizes) < 2:
            raise ValueError("an MLP needs at least input and output sizes")
        if len(self.sizes) - 2 > 4 or max(self.sizes[1:-1], default=0) > 256:
            raise ValueError("networks are limited to 4 hidden layers of at most 256 units")
        self.activation = activation
        self.out_activation = out_activation
        self.out_scale = out_scale
        self.out_bias = out_bias

    @property
    def in_dim(self) -> int:
        return self.sizes[0]

    @property
    def out_dim(self) -> int:
        return self.sizes[-1]

    def init(self, store: ParamStore, rng: np.random.Generator) -> None:
        n_layers = len(self.sizes) - 1
        for i, (n_in, n_out) in enumerate(zip(self.sizes[:-1], self.sizes[1:])):
            scale = np.sqrt(1.0 / n_in)
            if i == n_layers - 1:
                scale *= self.out_scale
            store.add(f"{self.name}.w{i}", rng.normal(0.0, scale, size=(n_in, n_out)))
            store.add(f"{self.name}.b{i}", np.full(n_out, self.out_bias if i == n_layers - 1 else 0.0))

    def __call__(self, params: dict[str, Tensor], x) -> Tensor:
        x = as_tensor(x)
        if x.ndim != 2 or x.shape[1] != self.in_dim:
            raise ShapeError(f"{self.name}: expected input (*, {self.in_dim}), got {x.shape}")
        n_layers = len(self.sizes) - 1
        for i in range(n_layers):
            x = x @ params[f"{self.name}.w{i}"] + params[f"{self.name}.b{i}"]
            act = self.activation if i < n_layers - 1 else self.out_activation
            x = _ACTIVATIONS[act](x)
        return x


def forward(net: MLP, params: ParamStore | dict, x) -> Tensor:
    """Evaluate ``net`` on ``x``; plain ParamStores are wrapped as constants."""
    if isinstance(params, ParamStore):
        params = params.const()
    return net(params, np.atleast_2d(np.asarray(x, dtype=np.float64)) if not isinstance(x, Tensor) else x)


class Adam:
    """Bias-corrected Adam with optional global-norm clipping."""

    def __init__(self, beta1: float = 0.9, beta2: float = 0.999, eps: float = 1e-8,
                 clip_norm: float | None = None):
        self.beta1, self.beta2, self.eps = beta1, beta2, eps
        self.clip_norm = clip_norm
        self.m: dict[str, np.ndarray] = {}
        self.v: dict[str, np.ndarray] = {}
        self.t = 0

    def step(self, params: ParamStore, grads: dict[str, np.ndarray], lr: float) -> None:
        for name, g in grads.items():
            if not np.all(np.isfinite(g)):
                raise FloatingPointError(f"non-finite gradient for parameter {name!r}")
            if g.shape != params[name].shape:
                raise ShapeError(f"{name}: gradient shape {g.shape} != {params[name].shape}")
        if self.clip_norm is not None:
            total = np.sqrt(sum(float(np.sum(g * g)) for g in grads.values()))
            if total > self.clip_norm:
                grads = {k: g * (self.clip_norm / total) for k, g in grads.items()}
        self.t += 1
        c1 = 1.0 - self.beta1**self.t
        c2 = 1.0 - self.beta2**self.t
        for name, g in grads.items():
            m = self.m.get(name, 0.0) * self.beta1 + (1.0 - self.beta1) * g
            v = self.v.get(name, 0.0) * self.beta2 + (1.0 - self.beta2) * g * g
            self.m[name], self.v[name] = m, v
            params[name] = params[name] - lr * (m / c1) / (np.sqrt(v / c2) + self.eps)

    def state_dict(self) -> dict:
        return {"t": self.t, "m": {k: v.copy() for k, v in self.m.items()},
                "v": {k: v.copy() for k, v in self.v.items()}}


def optimizer_step(params: ParamStore, grads: dict[str, np.ndarray], state: Adam, lr: float) -> ParamStore:
    state.step(params, grads, lr)
    return params


def polyak_update(target: ParamStore, online: ParamStore, tau: float) -> ParamStore:
    """``target <- tau * online + (1 - tau) * target`` for every parameter."""
    if not 0.0 < tau <= 1.0:
        raise ValueError(f"tau must lie in (0, 1], got {tau}")
    if target.names() != online.names():
        raise ShapeError("target and online stores hold different parameters")
    for name, value in online.items():
        if value.shape != target[name].shape:
            raise ShapeError(f"{name}: {value.shape} != {target[name].shape}")
        # written as an increment so identical stores stay bit-identical
        target[name] = value if tau == 1.0 else target[name] + tau * (value - target[name])
    return target


# -- checkpoints -------------------------------------------------------------

def save_params(store: ParamStore, path) -> tuple[Path, Path]:
    """Write ``<path>.json`` (manifest) and ``<path>.bin`` (little-endian float64)."""
    path = Path(path)
    manifest = {"format_version": FORMAT_VERSION, "params": []}
    offset = 0
    chunks = []
    for name, arr in store.items():
        manifest["params"].append({"name": name, "shape": list(arr.shape), "offset": offset})
        chunks.append(np.ascontiguousarray(arr, dtype="<f8").tobytes())
        offset += arr.size
    json_path = path.with_suffix(".json")
    bin_path = path.with_suffix(".bin")
    json_path.write_text(json.dumps(manifest, indent=1, sort_keys=True) + "\n")
    bin_path.write_bytes(b"".join(chunks))
    return json_path, bin_path


def load_params(path) -> ParamStore:
    path = Path(path)
    manifest = json.loads(path.with_suffix(".json").read_text())
    if manifest.get("format_version") != FORMAT_VERSION:
        raise ValueError(f"unsupported checkpoint format {manifest.get('format_version')}")
    flat = np.frombuffer(path.with_suffix(".bin").read_bytes(), dtype="<f8")
    store = ParamStore()
    for entry in manifest["params"]:
        n = int(np.prod(entry["shape"])) if entry["shape"] else 1
        chunk = flat[entry["offset"]:entry["offset"] + n]
        store.add(entry["name"], chunk.reshape(entry["shape"]).astype(np.float64))
    return store


# -- finite-difference checks -------------------------------------------------

def gradient_check(loss_fn: Callable[[dict[str, Tensor]], Tensor], store: ParamStore,
                   h: float = 1e-5, names: Iterable[str] | None = None) -> float:
    """Largest per-array relative error between backprop and central differences.

    The error for one array is ``|g_ad - g_fd|_2 / max(|g_ad|_2, |g_fd|_2)``;
    arrays whose two gradients are both below 1e-10 in norm are skipped.
    """
    tracked = store.track()
    loss = loss_fn(tracked)
    loss.backward()
    analytic = collect_grads(tracked)
    worst = 0.0
    for name in (names if names is not None else store.names()):
        base = store[name].copy()
        numeric = np.zeros_like(base)
        flat = base.reshape(-1)
        for i in range(flat.size):
            for sign in (1.0, -1.0):
                bumped = flat.copy()
                bumped[i] += sign * h
                store[name] = bumped.reshape(base.shape)
                val = loss_fn(store.const()).item()
                numeric.reshape(-1)[i] += sign * val / (2.0 * h)
        store[name] = base
        denom = max(np.linalg.norm(analytic[name]), np.linalg.norm(numeric))
        if denom < 1e-10:
            continue
        worst = max(worst, float(np.linalg.norm(analytic[name] - numeric) / denom))
    return worst
