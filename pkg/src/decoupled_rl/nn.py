"""Dense feedforward networks with explicit backprop, Adam, and categorical utilities.

All arithmetic is float64. Nets are small (two hidden layers of 64), so plain
numpy matmuls beat any framework here and keep runs bit-reproducible.
"""

from __future__ import annotations

import math

import numpy as np


class ConfigError(ValueError):
    """Bad shapes or unusable configuration values."""


class DivergenceError(RuntimeError):
    """A loss or gradient stopped being finite; the run must abort."""


def _check_activation(name: str) -> str:
    if name not in ("tanh", "relu"):
        raise ConfigError(f"unknown activation {name!r} (expected 'tanh' or 'relu')")
    return name


class DenseNet:
    """Fully connected net: hidden layers share one activation, output is linear.

    Weights are initialised uniformly in +-sqrt(1/fan_in) from the given rng.
    Adam moment buffers live on the net so two nets never share optimizer state.
    """

    def __init__(self, layer_sizes, activation="tanh", rng=None):
        sizes = [int(s) for s in layer_sizes]
        if len(sizes) < 2 or any(s <= 0 for s in sizes):
            raise ConfigError(f"layer_sizes must be >=2 positive ints, got {layer_sizes}")
        self.sizes = sizes
        self.activation = _check_activation(activation)
        if rng is None:
            rng = np.random.default_rng(0)
        self.weights = []
        self.biases = []
        for fan_in, fan_out in zip(sizes[:-1], sizes[1:]):
            bound = math.sqrt(1.0 / fan_in)
            self.weights.append(rng.uniform(-bound, bound, size=(fan_out, fan_in)))
            self.biases.append(np.zeros(fan_out))
        self.adam_m = [np.zeros_like(p) for p in self.params()]
        self.adam_v = [np.zeros_like(p) for p in self.params()]
        self.adam_t = 0

    @property
    def in_dim(self):
        return self.sizes[0]

    @property
    def out_dim(self):
        return self.sizes[-1]

    def params(self):
        """Parameter arrays in a fixed order: W0, b0, W1, b1, ..."""
        out = []
        for w, b in zip(self.weights, self.biases):
            out.append(w)
            out.append(b)
        return out

    def copy(self):
        dup = DenseNet.__new__(DenseNet)
        dup.sizes = list(self.sizes)
        dup.activation = self.activation
        dup.weights = [w.copy() for w in self.weights]
        dup.biases = [b.copy() for b in self.biases]
        dup.adam_m = [m.copy() for m in self.adam_m]
        dup.adam_v = [v.copy() for v in self.adam_v]
        dup.adam_t = self.adam_t
        return dup

    def load_params(self, other: "DenseNet"):
        for dst, src in zip(self.params(), other.params()):
            dst[...] = src

    def _act(self, z):
        if self.activation == "tanh":
            return np.tanh(z)
        return np.maximum(z, 0.0)

    def forward_batch(self, X):
        """Rows of X through the net; returns (B, out_dim)."""
        X = np.asarray(X, dtype=np.float64)
        if X.ndim != 2 or X.shape[1] != self.in_dim:
            raise ConfigError(f"input shape {X.shape} incompatible with in_dim {self.in_dim}")
        h = X
        last = len(self.weights) - 1
        for i, (w, b) in enumerate(zip(self.weights, self.biases)):
            z = h @ w.T + b
            h = z if i == last else self._act(z)
        return h

    def forward(self, x):
        x = np.asarray(x, dtype=np.float64)
        if x.ndim != 1 or x.shape[0] != self.in_dim:
            raise ConfigError(f"input shape {x.shape} incompatible with in_dim {self.in_dim}")
        return self.forward_batch(x[None, :])[0]

    def backward_batch(self, X, G, need_input_grad=False):
        """Gradient of sum_i G[i] . f(X[i]) w.r.t. every parameter.

        Parameters are not mutated. Returns (grads, dX) where grads matches
        params() order and dX is None unless need_input_grad.
        """
        X = np.asarray(X, dtype=np.float64)
        G = np.asarray(G, dtype=np.float64)
        if X.ndim != 2 or X.shape[1] != self.in_dim:
            raise ConfigError(f"input shape {X.shape} incompatible with in_dim {self.in_dim}")
        if G.shape != (X.shape[0], self.out_dim):
            raise ConfigError(f"upstream gradient shape {G.shape} != {(X.shape[0], self.out_dim)}")
        # Forward, keeping post-activation values per layer.
        acts = [X]
        zs = []
        h = X
        last = len(self.weights) - 1
        for i, (w, b) in enumerate(zip(self.weights, self.biases)):
            z = h @ w.T + b
            zs.append(z)
            h = z if i == last else self._act(z)
            acts.append(h)
        grads = [None] * (2 * len(self.weights))
        delta = G
        for i in range(last, -1, -1):
            grads[2 * i] = delta.T @ acts[i]
            grads[2 * i + 1] = delta.sum(axis=0)
            if i > 0 or need_input_grad:
                delta = delta @ self.weights[i]
                if i > 0:
                    if self.activation == "tanh":
                        delta = delta * (1.0 - acts[i] ** 2)
                    else:
                        delta = delta * (zs[i - 1] > 0.0)
        return grads, (delta if need_input_grad else None)

    def backward(self, x, g_out):
        grads, _ = self.backward_batch(np.asarray(x)[None, :], np.asarray(g_out)[None, :])
        return grads


def zero_grads_like(net: DenseNet):
    return [np.zeros_like(p) for p in net.params()]


def global_norm(grads) -> float:
    total = 0.0
    for g in grads:
        total += float(np.sum(g * g))
    return math.sqrt(total)


def clip_global_norm(grads, max_norm):
    """Scale all gradients by max_norm/norm when the joint L2 norm exceeds max_norm."""
    if max_norm <= 0:
        raise ConfigError(f"max_norm must be positive, got {max_norm}")
    norm = global_norm(grads)
    if norm <= max_norm:
        return grads
    scale = max_norm / norm
    return [g * scale for g in grads]


def adam_step(net: DenseNet, grads, lr, eps, beta1=0.9, beta2=0.999):
    """One bias-corrected Adam update in place; increments the step counter."""
    params = net.params()
    if len(grads) != len(params):
        raise ConfigError(f"{len(grads)} gradient arrays for {len(params)} parameters")
    for g, p in zip(grads, params):
        if g.shape != p.shape:
            raise ConfigError(f"gradient shape {g.shape} != parameter shape {p.shape}")
        if not np.all(np.isfinite(g)):
            raise DivergenceError("non-finite gradient component in adam_step")
    net.adam_t += 1
    t = net.adam_t
    bc1 = 1.0 - beta1**t
    bc2 = 1.0 - beta2**t
    for p, g, m, v in zip(params, grads, net.adam_m, net.adam_v):
        m *= beta1
        m += (1.0 - beta1) * g
        v *= beta2
        v += (1.0 - beta2) * (g * g)
        p -= lr * (m / bc1) / (np.sqrt(v / bc2) + eps)


def softmax(logits):
    """Numerically stable softmax of a 1-D logits vector."""
    z = np.asarray(logits, dtype=np.float64)
    z = z - z.max()
    e = np.exp(z)
    return e / e.sum()


def softmax_rows(Z):
    Z = np.asarray(Z, dtype=np.float64)
    Z = Z - Z.max(axis=1, keepdims=True)
    E = np.exp(Z)
    return E / E.sum(axis=1, keepdims=True)


def log_softmax_rows(Z):
    Z = np.asarray(Z, dtype=np.float64)
    Z = Z - Z.max(axis=1, keepdims=True)
    return Z - np.log(np.exp(Z).sum(axis=1, keepdims=True))


def entropy(probs) -> float:
    """-sum p log p with the 0 log 0 = 0 convention."""
    p = np.asarray(probs, dtype=np.float64)
    return float(-np.sum(np.where(p > 0.0, p * np.log(np.where(p > 0.0, p, 1.0)), 0.0)))


def entropy_rows(P):
    P = np.asarray(P, dtype=np.float64)
    logp = np.log(np.where(P > 0.0, P, 1.0))
    return -np.sum(np.where(P > 0.0, P * logp, 0.0), axis=1)


def entropy_grad_rows(P):
    """d(-entropy)/dlogits per row, for entropy bonuses inside policy losses.

    For H = -sum p log p with p = softmax(z): dH/dz_j = -p_j (log p_j + H),
    so the gradient of the *negated* entropy term is p_j (log p_j + H).
    """
    P = np.asarray(P, dtype=np.float64)
    logp = np.log(np.where(P > 0.0, P, 1.0))
    H = entropy_rows(P)
    return P * (logp + H[:, None])


def kl_divergence_rows(P, Q):
    """Per-row KL(p, q), q floored at 1e-8 before the log; 0 log 0 is 0."""
    P = np.asarray(P, dtype=np.float64)
    Q = np.maximum(np.asarray(Q, dtype=np.float64), 1e-8)
    terms = np.where(P > 0.0, P * (np.log(np.where(P > 0.0, P, 1.0)) - np.log(Q)), 0.0)
    return terms.sum(axis=1)


def kl_grad_rows(P, Q):
    """d KL(p, q) / d logits(p) per row with q fixed: p_j ((log p_j - log q_j) - KL)."""
    P = np.asarray(P, dtype=np.float64)
    Q = np.maximum(np.asarray(Q, dtype=np.float64), 1e-8)
    logp = np.log(np.where(P > 0.0, P, 1.0))
    ratio = np.where(P > 0.0, logp - np.log(Q), 0.0)
    kl = np.sum(P * ratio, axis=1, keepdims=True)
    return P * (ratio - kl)


def sample_categorical_rows(P, rng):
    """Sample one action per row; returns (actions, probability of each sample)."""
    P = np.asarray(P, dtype=np.float64)
    u = rng.random(P.shape[0])
    cum = np.cumsum(P, axis=1)
    actions = np.minimum((u[:, None] > cum).sum(axis=1), P.shape[1] - 1)
    return actions, P[np.arange(P.shape[0]), actions]
