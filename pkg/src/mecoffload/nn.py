"""Fully-connected networks with hand-written backprop, Adam, target updates and replay."""
from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path
from typing import NamedTuple, Sequence

import numpy as np

ACTIVATIONS = ("identity", "sigmoid")


class ShapeError(ValueError):
    pass


class CheckpointError(ValueError):
    pass


class BufferUnderfullError(RuntimeError):
    pass


def _sigmoid(z):
    return 0.5 * (1.0 + np.tanh(0.5 * z))


class Mlp:
    """ReLU hidden layers, identity or sigmoid output. Weights are (fan_in, fan_out)."""

    def __init__(self, layer_dims: Sequence[int], output: str = "identity",
                 rng: np.random.Generator | None = None):
        if len(layer_dims) < 2 or any(int(d) < 1 for d in layer_dims):
            raise ShapeError(f"bad layer_dims {layer_dims!r}")
        if output not in ACTIVATIONS:
            raise ValueError(f"output activation must be one of {ACTIVATIONS}")
        self.layer_dims = [int(d) for d in layer_dims]
        self.output = output
        rng = rng if rng is not None else np.random.default_rng(0)
        self.weights: list[np.ndarray] = []
        self.biases: list[np.ndarray] = []
        for fan_in, fan_out in zip(self.layer_dims[:-1], self.layer_dims[1:]):
            bound = 1.0 / np.sqrt(fan_in)
            self.weights.append(rng.uniform(-bound, bound, size=(fan_in, fan_out)))
            self.biases.append(rng.uniform(-bound, bound, size=fan_out))

    @property
    def params(self) -> list[np.ndarray]:
        out = []
        for W, b in zip(self.weights, self.biases):
            out += [W, b]
        return out

    @property
    def in_dim(self) -> int:
        return self.layer_dims[0]

    @property
    def out_dim(self) -> int:
        return self.layer_dims[-1]

    def same_architecture(self, other: "Mlp") -> bool:
        return self.layer_dims == other.layer_dims and self.output == other.output

    def copy(self) -> "Mlp":
        twin = Mlp.__new__(Mlp)
        twin.layer_dims = list(self.layer_dims)
        twin.output = self.output
        twin.weights = [W.copy() for W in self.weights]
        twin.biases = [b.copy() for b in self.biases]
        return twin

    def forward(self, x):
        """Returns (output, cache). ``x`` is one input vector or a (batch, in_dim) array."""
        x = np.asarray(x, dtype=float)
        single = x.ndim == 1
        h = x[None, :] if single else x
        if h.ndim != 2 or h.shape[1] != self.in_dim:
            raise ShapeError(f"expected input dim {self.in_dim}, got shape {x.shape}")
        acts = [h]
        n = len(self.weights)
        for i, (W, b) in enumerate(zip(self.weights, self.biases)):
            z = h @ W + b
            if i < n - 1:
                h = np.maximum(z, 0.0)
            else:
                h = _sigmoid(z) if self.output == "sigmoid" else z
            acts.append(h)
        out = h[0] if single else h
        return out, (acts, single)

    def __call__(self, x):
        return self.forward(x)[0]

    def backward(self, cache, grad_out):
        """Gradients of sum(grad_out * output) w.r.t. parameters and input.

        Returns (param_grads, grad_input) with param_grads ordered like ``params``.
        """
        acts, single = cache
        g = np.asarray(grad_out, dtype=float)
        if single:
            g = g[None, :]
        if g.shape != acts[-1].shape:
            raise ShapeError(f"grad_out shape {np.shape(grad_out)} does not match output {acts[-1].shape}")
        if self.output == "sigmoid":
            y = acts[-1]
            g = g * y * (1.0 - y)
        grads: list[np.ndarray] = [None] * (2 * len(self.weights))
        for i in range(len(self.weights) - 1, -1, -1):
            h_in = acts[i]
            grads[2 * i] = h_in.T @ g
            grads[2 * i + 1] = g.sum(axis=0)
            g = g @ self.weights[i].T
            if i > 0:
                g = g * (acts[i] > 0.0)
        grad_in = g[0] if single else g
        return grads, grad_in


def forward(net: Mlp, x):
    return net.forward(x)


def backward(net: Mlp, cache, grad_out):
    return net.backward(cache, grad_out)


class Adam:
    """Adam with bias correction; updates parameter arrays in place."""

    def __init__(self, params: Sequence[np.ndarray], lr: float = 1e-3, beta1: float = 0.9,
                 beta2: float = 0.999, eps: float = 1e-8):
        self.lr, self.beta1, self.beta2, self.eps = lr, beta1, beta2, eps
        self.m = [np.zeros_like(p) for p in params]
        self.v = [np.zeros_like(p) for p in params]
        self.t = 0

    def step(self, params: Sequence[np.ndarray], grads: Sequence[np.ndarray]):
        if len(params) != len(self.m):
            raise ShapeError("parameter list does not match optimizer state")
        self.t += 1
        b1, b2 = self.beta1, self.beta2
        c1 = 1.0 - b1 ** self.t
        c2 = 1.0 - b2 ** self.t
        for p, g, m, v in zip(params, grads, self.m, self.v):
            if g.shape != p.shape:
                raise ShapeError(f"gradient shape {g.shape} != parameter shape {p.shape}")
            m *= b1
            m += (1.0 - b1) * g
            v *= b2
            v += (1.0 - b2) * g * g
            p -= self.lr * (m / c1) / (np.sqrt(v / c2) + self.eps)
        return params


def adam_step(state: Adam, params, grads):
    return state.step(params, grads)


def soft_update(target: Mlp, online: Mlp, tau: float) -> Mlp:
    """target <- tau * online + (1 - tau) * target, parameter-wise."""
    if not target.same_architecture(online):
        raise ShapeError("soft_update needs identical architectures")
    for pt, po in zip(target.params, online.params):
        if tau == 1.0:
            pt[...] = po
        else:
            pt *= 1.0 - tau
            pt += tau * po
    return target


def hard_update(target: Mlp, online: Mlp) -> Mlp:
    return soft_update(target, online, 1.0)


def flat_params(net: Mlp) -> np.ndarray:
    return np.concatenate([p.ravel() for p in net.params])


# --- replay -----------------------------------------------------------------

class Transition(NamedTuple):
    s: np.ndarray
    a: np.ndarray
    r: float
    s2: np.ndarray


@dataclass
class Batch:
    s: np.ndarray
    a: np.ndarray
    r: np.ndarray
    s2: np.ndarray


class ReplayBuffer:
    """Fixed-capacity FIFO ring; uniform sampling with replacement."""

    def __init__(self, capacity: int, state_dim: int, action_dim: int, action_dtype=float):
        if capacity < 1:
            raise ValueError("capacity must be >= 1")
        self.capacity = capacity
        self.s = np.zeros((capacity, state_dim))
        self.a = np.zeros((capacity, action_dim), dtype=action_dtype)
        self.r = np.zeros(capacity)
        self.s2 = np.zeros((capacity, state_dim))
        self.size = 0
        self._next = 0

    def __len__(self):
        return self.size

    def push(self, t: Transition) -> None:
        i = self._next
        self.s[i] = t.s
        self.a[i] = t.a
        self.r[i] = t.r
        self.s2[i] = t.s2
        self._next = (i + 1) % self.capacity
        self.size = min(self.size + 1, self.capacity)

    def _ordered_indices(self) -> np.ndarray:
        # oldest first
        start = self._next if self.size == self.capacity else 0
        return (start + np.arange(self.size)) % self.capacity

    def transitions(self) -> list[Transition]:
        return [Transition(self.s[i].copy(), self.a[i].copy(), float(self.r[i]), self.s2[i].copy())
                for i in self._ordered_indices()]

    def sample(self, n: int, rng: np.random.Generator) -> Batch:
        if self.size < n:
            raise BufferUnderfullError(f"buffer holds {self.size} transitions, {n} requested")
        idx = rng.integers(0, self.size, size=n)
        return Batch(self.s[idx], self.a[idx], self.r[idx], self.s2[idx])


def buffer_push(buf: ReplayBuffer, transition: Transition) -> None:
    buf.push(transition)


def buffer_sample(buf: ReplayBuffer, n: int, rng: np.random.Generator) -> Batch:
    return buf.sample(n, rng)


# --- checkpoints --------------------------------------------------------------

_MAGIC = "mecoffload-mlp"


def save_params(net: Mlp, path: str | Path) -> None:
    """Text header line with the layer dims, then little-endian float64 parameters."""
    header = f"{_MAGIC} layer_dims={','.join(map(str, net.layer_dims))} output={net.output}\n"
    data = flat_params(net).astype("<f8").tobytes()
    Path(path).write_bytes(header.encode("ascii") + data)


def load_params(path: str | Path, expected_dims: Sequence[int] | None = None) -> Mlp:
    raw = Path(path).read_bytes()
    nl = raw.find(b"\n")
    if nl < 0:
        raise CheckpointError(f"{path}: missing header line")
    fields = raw[:nl].decode("ascii", errors="replace").split()
    if not fields or fields[0] != _MAGIC:
        raise CheckpointError(f"{path}: not a parameter checkpoint")
    meta = dict(f.split("=", 1) for f in fields[1:] if "=" in f)
    try:
        dims = [int(d) for d in meta["layer_dims"].split(",")]
    except (KeyError, ValueError) as exc:
        raise CheckpointError(f"{path}: bad layer_dims in header") from exc
    if expected_dims is not None and list(expected_dims) != dims:
        raise CheckpointError(f"{path}: layer dims {dims} do not match expected {list(expected_dims)}")
    net = Mlp(dims, output=meta.get("output", "identity"))
    flat = np.frombuffer(raw[nl + 1:], dtype="<f8")
    n = sum(p.size for p in net.params)
    if flat.size != n:
        raise CheckpointError(f"{path}: expected {n} parameters, found {flat.size}")
    offset = 0
    for p in net.params:
        p[...] = flat[offset:offset + p.size].reshape(p.shape)
        offset += p.size
    return net
