"""Small numpy MLPs with hand-written backpropagation.

Hidden layers use tanh, the output layer is linear. A layer may take extra
"side" inputs concatenated to its input, which is how the backlog shortcut is
fed in after the first layer.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np


class MLP:
    def __init__(self, sizes: list[int], side: dict[int, int] | None = None,
                 rng: np.random.Generator | None = None, init_scale: float = 0.05,
                 zero_output: bool = False):
        if len(sizes) < 2:
            raise ValueError("need at least an input and an output size")
        self.sizes = list(sizes)
        self.side = {int(k): int(v) for k, v in (side or {}).items()}
        if 0 in self.side:
            raise ValueError("side inputs attach after the first layer; concatenate layer-0 inputs yourself")
        rng = rng if rng is not None else np.random.default_rng(0)
        self.params: dict[str, np.ndarray] = {}
        n_layers = len(sizes) - 1
        for l in range(n_layers):
            fan_in = sizes[l] + self.side.get(l, 0)
            W = rng.uniform(-init_scale, init_scale, size=(fan_in, sizes[l + 1]))
            b = rng.uniform(-init_scale, init_scale, size=sizes[l + 1])
            if zero_output and l == n_layers - 1:
                W[:] = 0.0
                b[:] = 0.0
            self.params[f"W{l}"] = W
            self.params[f"b{l}"] = b

    @property
    def n_layers(self) -> int:
        return len(self.sizes) - 1

    def descriptor(self) -> dict:
        return {"sizes": self.sizes, "side": {str(k): v for k, v in self.side.items()}, "activation": "tanh"}

    @classmethod
    def from_descriptor(cls, desc: dict, params: dict[str, np.ndarray]) -> MLP:
        net = cls(desc["sizes"], {int(k): v for k, v in desc["side"].items()})
        for k, v in params.items():
            if net.params[k].shape != np.shape(v):
                raise ValueError(f"parameter {k} has shape {np.shape(v)}, expected {net.params[k].shape}")
            net.params[k] = np.array(v, dtype=float)
        return net

    def copy(self) -> MLP:
        clone = MLP.__new__(MLP)
        clone.sizes = list(self.sizes)
        clone.side = dict(self.side)
        clone.params = {k: v.copy() for k, v in self.params.items()}
        return clone

    def forward(self, x: np.ndarray, sides: dict[int, np.ndarray] | None = None):
        """Return ``(output, cache)`` for a batch ``x`` of shape (n, in)."""
        sides = sides or {}
        a = np.atleast_2d(x)
        if a.shape[1] != self.sizes[0]:
            raise ValueError(f"input width {a.shape[1]} != {self.sizes[0]}")
        inputs = []
        for l in range(self.n_layers):
            if l in self.side:
                extra = np.asarray(sides[l], dtype=float).reshape(len(a), self.side[l])
                a = np.concatenate([a, extra], axis=1)
            inputs.append(a)
            z = a @ self.params[f"W{l}"] + self.params[f"b{l}"]
            a = np.tanh(z) if l < self.n_layers - 1 else z
        return a, inputs

    def __call__(self, x, sides=None) -> np.ndarray:
        return self.forward(x, sides)[0]

    def backward(self, cache, grad_out: np.ndarray) -> dict[str, np.ndarray]:
        """Gradients of ``sum(grad_out * output)`` with respect to every parameter."""
        inputs = cache
        grads = {}
        g = grad_out
        for l in range(self.n_layers - 1, -1, -1):
            a = inputs[l]
            grads[f"W{l}"] = a.T @ g
            grads[f"b{l}"] = g.sum(axis=0)
            if l == 0:
                break
            g_in = g @ self.params[f"W{l}"].T
            # drop the side-input columns, then undo the tanh of the previous layer
            g_in = g_in[:, : self.sizes[l]]
            h = a[:, : self.sizes[l]]
            g = g_in * (1.0 - h * h)
        return grads


def clip_grads(grads: dict[str, np.ndarray], max_norm: float) -> float:
    """Rescale in place to a global L2 norm of at most ``max_norm``; return the norm before clipping."""
    norm = float(np.sqrt(sum(float(np.sum(g * g)) for g in grads.values())))
    if max_norm and norm > max_norm:
        scale = max_norm / (norm + 1e-12)
        for g in grads.values():
            g *= scale
    return norm


class SGD:
    def __init__(self, lr: float):
        self.lr = lr

    def step(self, params: dict[str, np.ndarray], grads: dict[str, np.ndarray]) -> None:
        for k, g in grads.items():
            params[k] -= self.lr * g


@dataclass
class Adam:
    lr: float
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    t: int = 0
    m: dict = field(default_factory=dict)
    v: dict = field(default_factory=dict)

    def step(self, params: dict[str, np.ndarray], grads: dict[str, np.ndarray]) -> None:
        self.t += 1
        c1 = 1.0 - self.beta1**self.t
        c2 = 1.0 - self.beta2**self.t
        for k, g in grads.items():
            if k not in self.m:
                self.m[k] = np.zeros_like(g)
                self.v[k] = np.zeros_like(g)
            m, v = self.m[k], self.v[k]
            m *= self.beta1
            m += (1 - self.beta1) * g
            v *= self.beta2
            v += (1 - self.beta2) * (g * g)
            denom = np.sqrt(v / c2)
            denom += self.eps
            params[k] -= (self.lr / c1) * m / denom


def softmax(z: np.ndarray) -> np.ndarray:
    z = z - z.max(axis=-1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=-1, keepdims=True)


def log_softmax(z: np.ndarray) -> np.ndarray:
    z = z - z.max(axis=-1, keepdims=True)
    return z - np.log(np.exp(z).sum(axis=-1, keepdims=True))


def softplus(x: np.ndarray) -> np.ndarray:
    return np.logaddexp(0.0, x)


def sigmoid(x: np.ndarray) -> np.ndarray:
    return np.exp(-softplus(-x))


def numerical_grads(loss_fn, params: dict[str, np.ndarray], h: float = 1e-6) -> dict[str, np.ndarray]:
    """Central finite differences of ``loss_fn()`` with respect to every entry of ``params`` (perturbed in place)."""
    out = {}
    for k, p in params.items():
        g = np.zeros_like(p)
        flat, gflat = p.reshape(-1), g.reshape(-1)
        for i in range(flat.size):
            old = flat[i]
            flat[i] = old + h
            up = loss_fn()
            flat[i] = old - h
            down = loss_fn()
            flat[i] = old
            gflat[i] = (up - down) / (2 * h)
        out[k] = g
    return out


def relative_error(a: dict[str, np.ndarray], b: dict[str, np.ndarray]) -> float:
    """``|a - b| / max(|a|, |b|)`` over all parameters flattened into one vector."""
    va = np.concatenate([a[k].ravel() for k in sorted(a)])
    vb = np.concatenate([b[k].ravel() for k in sorted(a)])
    denom = max(np.linalg.norm(va), np.linalg.norm(vb), 1e-12)
    return float(np.linalg.norm(va - vb) / denom)
