"""Small fully-connected networks with exact reverse-mode gradients.

Everything is float64 numpy.  Forward/backward are hand-written so the
gradient path can be validated against central finite differences; every
freshly initialized network runs that validation on a handful of its own
parameters before it is handed to a training loop.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from ..errors import ShapeMismatch

HIDDEN_ACTIVATIONS = ("tanh", "relu")
OUTPUT_ACTIVATIONS = ("identity", "tanh")

LOG_2PI = math.log(2.0 * math.pi)


@dataclass
class Mlp:
    layer_sizes: tuple
    hidden_activation: str
    output_activation: str
    weights: list = field(repr=False)
    biases: list = field(repr=False)

    def __post_init__(self):
        if len(self.layer_sizes) < 2:
            raise ValueError("need at least input and output widths")
        if self.hidden_activation not in HIDDEN_ACTIVATIONS:
            raise ValueError(f"unknown hidden activation {self.hidden_activation!r}")
        if self.output_activation not in OUTPUT_ACTIVATIONS:
            raise ValueError(f"unknown output activation {self.output_activation!r}")
        sizes = tuple(int(s) for s in self.layer_sizes)
        object.__setattr__(self, "layer_sizes", sizes)
        if len(self.weights) != len(sizes) - 1 or len(self.biases) != len(sizes) - 1:
            raise ShapeMismatch("parameter count does not match layer_sizes")
        for i, (w, b) in enumerate(zip(self.weights, self.biases)):
            if w.shape != (sizes[i], sizes[i + 1]) or b.shape != (sizes[i + 1],):
                raise ShapeMismatch(f"layer {i} parameters do not conform to {sizes}")
            if not (np.isfinite(w).all() and np.isfinite(b).all()):
                raise ValueError("parameters must be finite")

    @property
    def in_dim(self) -> int:
        return self.layer_sizes[0]

    @property
    def out_dim(self) -> int:
        return self.layer_sizes[-1]

    def parameters(self) -> list:
        out = []
        for w, b in zip(self.weights, self.biases):
            out.append(w)
            out.append(b)
        return out

    def copy(self) -> "Mlp":
        return Mlp(self.layer_sizes, self.hidden_activation, self.output_activation,
                   [w.copy() for w in self.weights], [b.copy() for b in self.biases])


def _hidden(act: str, z: np.ndarray) -> np.ndarray:
    return np.tanh(z) if act == "tanh" else np.maximum(z, 0.0)


def _hidden_grad(act: str, z: np.ndarray, a: np.ndarray) -> np.ndarray:
    return 1.0 - a * a if act == "tanh" else (z > 0.0).astype(np.float64)


def forward_batch(net: Mlp, x: np.ndarray):
    """Forward pass on a (B, in_dim) batch; returns (out, cache)."""
    x = np.asarray(x, dtype=np.float64)
    if x.ndim != 2 or x.shape[1] != net.in_dim:
        raise ShapeMismatch(f"input shape {x.shape}, want (B, {net.in_dim})")
    activations = [x]
    pre = []
    h = x
    last = len(net.weights) - 1
    for i, (w, b) in enumerate(zip(net.weights, net.biases)):
        z = h @ w + b
        pre.append(z)
        if i < last:
            h = _hidden(net.hidden_activation, z)
        elif net.output_activation == "tanh":
            h = np.tanh(z)
        else:
            h = z
        activations.append(h)
    return h, (activations, pre)


def backward_batch(net: Mlp, cache, grad_out: np.ndarray):
    """Backprop an upstream (B, out_dim) gradient through the cached pass.

    Returns (grads, grad_input) where grads is a flat list matching
    net.parameters() order and grad_input has the input batch shape.
    """
    activations, pre = cache
    g = np.asarray(grad_out, dtype=np.float64)
    if g.shape != activations[-1].shape:
        raise ShapeMismatch(f"upstream shape {g.shape}, want {activations[-1].shape}")
    if net.output_activation == "tanh":
        out = activations[-1]
        g = g * (1.0 - out * out)
    grads_w = [None] * len(net.weights)
    grads_b = [None] * len(net.biases)
    for i in range(len(net.weights) - 1, -1, -1):
        grads_w[i] = activations[i].T @ g
        grads_b[i] = g.sum(axis=0)
        g = g @ net.weights[i].T
        if i > 0:
            g = g * _hidden_grad(net.hidden_activation, pre[i - 1], activations[i])
    flat = []
    for gw, gb in zip(grads_w, grads_b):
        flat.append(gw)
        flat.append(gb)
    return flat, g


def mlp_forward(net: Mlp, x) -> np.ndarray:
    """Single-vector forward pass."""
    x = np.asarray(x, dtype=np.float64).reshape(-1)
    if x.size != net.in_dim:
        raise ShapeMismatch(f"input length {x.size}, want {net.in_dim}")
    out, _ = forward_batch(net, x[None, :])
    return out[0]

def mlp_gradients(net: Mlp, x, upstream) -> list:
    """Gradients of upstream . output w.r.t. every parameter (flat list)."""
    x = np.asarray(x, dtype=np.float64).reshape(-1)
    u = np.asarray(upstream, dtype=np.float64).reshape(-1)
    if x.size != net.in_dim:
        raise ShapeMismatch(f"input length {x.size}, want {net.in_dim}")
    if u.size != net.out_dim:
        raise ShapeMismatch(f"upstream length {u.size}, want {net.out_dim}")
    _, cache = forward_batch(net, x[None, :])
    grads, _ = backward_batch(net, cache, u[None, :])
    return grads


def flatten_params(net: Mlp) -> np.ndarray:
    return np.concatenate([p.ravel() for p in net.parameters()])


def set_flat_params(net: Mlp, flat: np.ndarray) -> None:
    flat = np.asarray(flat, dtype=np.float64)
    params = net.parameters()
    need = sum(p.size for p in params)
    if flat.size != need:
        raise ShapeMismatch(f"flat vector has {flat.size} entries, net needs {need}")
    i = 0
    for p in params:
        p[...] = flat[i:i + p.size].reshape(p.shape)
        i += p.size


def gradient_check(net: Mlp, rng: np.random.Generator, n_probes: int = 16,
                   eps: float = 1e-5) -> float:
    """Max relative error between analytic and central-difference gradients.

    Probes ``n_probes`` randomly chosen parameters of the loss
    u . f(x) for a random input/upstream pair.
    """
    x = rng.standard_normal(net.in_dim)
    u = rng.standard_normal(net.out_dim)
    analytic = np.concatenate([g.ravel() for g in mlp_gradients(net, x, u)])
    flat = flatten_params(net)
    idx = rng.choice(flat.size, size=min(n_probes, flat.size), replace=False)
    worst = 0.0
    for j in idx:
        theta = flat[j]
        flat[j] = theta + eps
        set_flat_params(net, flat)
        hi = float(u @ mlp_forward(net, x))
        flat[j] = theta - eps
        set_flat_params(net, flat)
        lo = float(u @ mlp_forward(net, x))
        flat[j] = theta
        numeric = (hi - lo) / (2.0 * eps)
        a = analytic[j]
        worst = max(worst, abs(a - numeric) / max(abs(a), abs(numeric), 1e-5))
    set_flat_params(net, flat)
    return worst


def init_mlp(layer_sizes, rng: np.random.Generator, hidden_activation: str = "relu",
             output_activation: str = "identity", self_test: bool = True) -> Mlp:
    """Xavier-uniform initialized network.

    Runs a finite-difference spot check of its own gradient path before
    returning (up to three probe sets, since relu kinks can foul one).
    """
    sizes = tuple(int(s) for s in layer_sizes)
    weights, biases = [], []
    for fan_in, fan_out in zip(sizes[:-1], sizes[1:]):
        limit = math.sqrt(6.0 / (fan_in + fan_out))
        weights.append(rng.uniform(-limit, limit, size=(fan_in, fan_out)))
        biases.append(np.zeros(fan_out))
    net = Mlp(sizes, hidden_activation, output_activation, weights, biases)
    if self_test:
        check_rng = np.random.default_rng(rng.integers(2**63))
        for attempt in range(3):
            if gradient_check(net, check_rng) < 1e-4:
                break
        else:
            raise AssertionError("gradient self-test failed on a fresh network")
    return net


class Adam:
    """Adaptive-moment gradient descent over a fixed list of parameter arrays."""

    def __init__(self, params: list, lr: float, beta1: float = 0.9,
                 beta2: float = 0.999, eps: float = 1e-8):
        if lr <= 0:
            raise ValueError("lr must be > 0")
        self.lr = lr
        self.beta1 = beta1
        self.beta2 = beta2
        self.eps = eps
        self.t = 0
        self.m = [np.zeros_like(p) for p in params]
        self.v = [np.zeros_like(p) for p in params]

    def step(self, params: list, grads: list) -> None:
        if len(params) != len(self.m) or len(grads) != len(self.m):
            raise ShapeMismatch("parameter/gradient count changed under the optimizer")
        self.t += 1
        bc1 = 1.0 - self.beta1 ** self.t
        bc2 = 1.0 - self.beta2 ** self.t
        for p, g, m, v in zip(params, grads, self.m, self.v):
            m *= self.beta1
            m += (1.0 - self.beta1) * g
            v *= self.beta2
            v += (1.0 - self.beta2) * (g * g)
            p -= self.lr * (m / bc1) / (np.sqrt(v / bc2) + self.eps)


def soft_update(target: Mlp, online: Mlp, tau: float) -> None:
    """Polyak blend: target <- tau * online + (1 - tau) * target."""
    for tp, op in zip(target.parameters(), online.parameters()):
        tp *= 1.0 - tau
        tp += tau * op


# --- distribution heads ------------------------------------------------------


def log_softmax(logits: np.ndarray) -> np.ndarray:
    z = logits - logits.max(axis=-1, keepdims=True)
    return z - np.log(np.exp(z).sum(axis=-1, keepdims=True))


def softmax(logits: np.ndarray) -> np.ndarray:
    return np.exp(log_softmax(logits))


def categorical_log_prob(logits: np.ndarray, idx: np.ndarray) -> np.ndarray:
    """log pi(idx) for a batch of logit rows."""
    lp = log_softmax(logits)
    return lp[np.arange(lp.shape[0]), idx]


def categorical_log_prob_grad(logits: np.ndarray, idx: np.ndarray) -> np.ndarray:
    """d log pi(idx) / d logits: one-hot minus softmax, rowwise."""
    p = softmax(logits)
    g = -p
    g[np.arange(p.shape[0]), idx] += 1.0
    return g


def categorical_sample(logits: np.ndarray, rng: np.random.Generator) -> np.ndarray:
    """Inverse-CDF sampling, deterministic given the rng stream."""
    p = softmax(logits)
    cdf = np.cumsum(p, axis=-1)
    draws = rng.random(size=(p.shape[0], 1))
    return (draws > cdf[:, :-1]).sum(axis=-1) if p.shape[1] > 1 else np.zeros(p.shape[0], dtype=np.int64)


def categorical_entropy(logits: np.ndarray) -> np.ndarray:
    lp = log_softmax(logits)
    return -(np.exp(lp) * lp).sum(axis=-1)


def gaussian_log_prob(mean: np.ndarray, log_std: np.ndarray, actions: np.ndarray) -> np.ndarray:
    """Diagonal-Gaussian log density, summed over action dims."""
    var = np.exp(2.0 * log_std)
    q = (actions - mean) ** 2 / var
    return (-0.5 * (q + LOG_2PI) - log_std).sum(axis=-1)


def gaussian_log_prob_grads(mean: np.ndarray, log_std: np.ndarray, actions: np.ndarray):
    """(d logp / d mean, d logp / d log_std) for a batch."""
    var = np.exp(2.0 * log_std)
    d_mean = (actions - mean) / var
    d_log_std = (actions - mean) ** 2 / var - 1.0
    return d_mean, d_log_std


def gaussian_entropy(log_std: np.ndarray) -> float:
    return float((log_std + 0.5 * (LOG_2PI + 1.0)).sum())
