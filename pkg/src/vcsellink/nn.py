"""Minimal feed-forward network engine on numpy.

Dense layers with linear/relu/tanh/softmax activations, exact reverse-mode
gradients, SGD and Adam, magnitude pruning driven by a polynomial sparsity
schedule, and JSON (de)serialization.  Everything here is sized for the
small networks this project trains (equalizers, tapped-delay surrogates,
autoencoder transceivers); there is no general autodiff graph.

Shapes: batches are row-major, ``X`` is (batch, d_in), weights are
(d_in, d_out) and layer output is ``act(X @ W + b)``.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np

__all__ = [
    "ACTIVATIONS",
    "Dense",
    "Network",
    "TrainConfig",
    "TrainResult",
    "PruneSchedule",
    "DivergenceError",
    "mse_loss",
    "cross_entropy_loss",
    "make_optimizer",
    "Sgd",
    "Adam",
    "train",
    "gradients",
    "prune_step",
    "target_sparsity",
    "gradient_check",
    "multiply_count",
    "save_network",
    "load_network",
    "network_to_dict",
    "network_from_dict",
]

ACTIVATIONS = ("linear", "relu", "tanh", "softmax")

_FORMAT_VERSION = 1


class DivergenceError(RuntimeError):
    """Training loss became non-finite."""

    def __init__(self, step: int, message: str | None = None):
        self.step = step
        super().__init__(message or f"loss diverged at step {step}")


def _act_forward(name: str, z: np.ndarray) -> np.ndarray:
    if name == "linear":
        return z
    if name == "relu":
        return np.maximum(z, 0.0)
    if name == "tanh":
        return np.tanh(z)
    if name == "softmax":
        zs = z - np.max(z, axis=1, keepdims=True)
        e = np.exp(zs)
        return e / np.sum(e, axis=1, keepdims=True)
    raise ValueError(f"unknown activation {name!r}")


def _act_backward(name: str, delta: np.ndarray, z: np.ndarray, a: np.ndarray) -> np.ndarray:
    """d loss/d z from d loss/d a."""
    if name == "linear":
        return delta
    if name == "relu":
        return delta * (z > 0.0)
    if name == "tanh":
        return delta * (1.0 - a * a)
    if name == "softmax":
        # full Jacobian: a * (delta - sum(delta * a))
        dot = np.sum(delta * a, axis=1, keepdims=True)
        return a * (delta - dot)
    raise ValueError(f"unknown activation {name!r}")


class Dense:
    """One affine layer plus activation, with an optional pruning mask."""

    def __init__(self, weights: np.ndarray, biases: np.ndarray, activation: str,
                 mask: np.ndarray | None = None):
        if activation not in ACTIVATIONS:
            raise ValueError(f"unknown activation {activation!r}")
        self.weights = np.asarray(weights, dtype=np.float64)
        self.biases = np.asarray(biases, dtype=np.float64)
        if self.weights.ndim != 2 or self.biases.shape != (self.weights.shape[1],):
            raise ValueError("weights must be (d_in, d_out) with matching biases")
        self.activation = activation
        self.mask = None if mask is None else np.asarray(mask, dtype=np.float64)
        if self.mask is not None and self.mask.shape != self.weights.shape:
            raise ValueError("mask shape must match weights")
        self.apply_mask()

    @property
    def d_in(self) -> int:
        return self.weights.shape[0]

    @property
    def d_out(self) -> int:
        return self.weights.shape[1]

    def apply_mask(self) -> None:
        if self.mask is not None:
            self.weights *= self.mask

    def copy(self) -> "Dense":
        return Dense(self.weights.copy(), self.biases.copy(), self.activation,
                     None if self.mask is None else self.mask.copy())


def _init_layer(rng: np.random.Generator, d_in: int, d_out: int, activation: str) -> Dense:
    if activation == "relu":
        w = rng.normal(0.0, np.sqrt(2.0 / d_in), size=(d_in, d_out))
    else:
        lim = np.sqrt(6.0 / (d_in + d_out))
        w = rng.uniform(-lim, lim, size=(d_in, d_out))
    return Dense(w, np.zeros(d_out), activation)


class Network:
    """Ordered dense layers; softmax allowed only on the last layer."""

    def __init__(self, layers: list[Dense]):
        if not layers:
            raise ValueError("network needs at least one layer")
        for a, b in zip(layers, layers[1:]):
            if a.d_out != b.d_in:
                raise ValueError(
                    f"layer dims incompatible: {a.d_out} -> {b.d_in}")
        for layer in layers[:-1]:
            if layer.activation == "softmax":
                raise ValueError("softmax is only allowed as the final activation")
        self.layers = layers

    # -- construction -----------------------------------------------------
    @classmethod
    def create(cls, dims: list[int], activations: list[str], seed: int,
               zero_output_layer: bool = False) -> "Network":
        """Seeded initialization: Glorot uniform for tanh/linear/softmax,
        scaled normal for relu."""
        if len(dims) != len(activations) + 1:
            raise ValueError("need len(dims) == len(activations) + 1")
        rng = np.random.default_rng(seed)
        layers = [
            _init_layer(rng, d_in, d_out, act)
            for d_in, d_out, act in zip(dims[:-1], dims[1:], activations)
        ]
        if zero_output_layer:
            layers[-1].weights[:] = 0.0
            layers[-1].biases[:] = 0.0
        return cls(layers)

    @property
    def d_in(self) -> int:
        return self.layers[0].d_in

    @property
    def d_out(self) -> int:
        return self.layers[-1].d_out

    def copy(self) -> "Network":
        return Network([l.copy() for l in self.layers])

    # -- inference --------------------------------------------------------
    def forward(self, x: np.ndarray) -> np.ndarray:
        """Batch or single-vector forward pass."""
        x = np.asarray(x, dtype=np.float64)
        single = x.ndim == 1
        a = x[None, :] if single else x
        if a.shape[1] != self.d_in:
            raise ValueError(f"input width {a.shape[1]} != expected {self.d_in}")
        for layer in self.layers:
            a = _act_forward(layer.activation, a @ layer.weights + layer.biases)
        return a[0] if single else a

    def forward_cached(self, x: np.ndarray):
        """Forward pass keeping (z, a) per layer for reverse mode."""
        a = np.asarray(x, dtype=np.float64)
        if a.ndim != 2 or a.shape[1] != self.d_in:
            raise ValueError(f"expected batch of width {self.d_in}")
        caches = []
        for layer in self.layers:
            z = a @ layer.weights + layer.biases
            a_next = _act_forward(layer.activation, z)
            caches.append((a, z, a_next))
            a = a_next
        return a, caches

    # -- reverse mode -----------------------------------------------------
    def backward(self, delta: np.ndarray, caches, delta_is_preact: bool = False):
        """Backpropagate d loss/d output.

        Returns (grads, d loss/d input); grads is a list of (dW, db).
        ``delta_is_preact`` means delta is already d loss/d z of the last
        layer (the fused softmax + cross-entropy path).
        """
        grads: list[tuple[np.ndarray, np.ndarray]] = [None] * len(self.layers)
        for idx in range(len(self.layers) - 1, -1, -1):
            layer = self.layers[idx]
            a_prev, z, a = caches[idx]
            if idx == len(self.layers) - 1 and delta_is_preact:
                dz = delta
            else:
                dz = _act_backward(layer.activation, delta, z, a)
            dw = a_prev.T @ dz
            db = np.sum(dz, axis=0)
            if layer.mask is not None:
                dw = dw * layer.mask
            grads[idx] = (dw, db)
            delta = dz @ layer.weights.T
        return grads, delta

    def input_gradient(self, x: np.ndarray, delta_out: np.ndarray) -> np.ndarray:
        """d loss/d input for a given output cotangent."""
        _, caches = self.forward_cached(np.atleast_2d(x))
        _, dx = self.backward(np.atleast_2d(delta_out), caches)
        return dx

    # -- parameter access (flattened, for gradient-free training) ---------
    def flat_params(self) -> np.ndarray:
        parts = []
        for l in self.layers:
            parts.append(l.weights.ravel())
            parts.append(l.biases.ravel())
        return np.concatenate(parts)

    def set_flat_params(self, vec: np.ndarray) -> None:
        pos = 0
        for l in self.layers:
            nw = l.weights.size
            l.weights[...] = vec[pos:pos + nw].reshape(l.weights.shape)
            pos += nw
            nb = l.biases.size
            l.biases[...] = vec[pos:pos + nb]
            pos += nb
            l.apply_mask()
        if pos != vec.size:
            raise ValueError(f"parameter vector size {vec.size}, expected {pos}")

    def param_arrays(self):
        out = []
        for l in self.layers:
            out.append(l.weights)
            out.append(l.biases)
        return out


# ---------------------------------------------------------------------------
# Losses: return (loss value, gradient at the network output contact point).
# For cross-entropy the gradient is with respect to the softmax pre-activation
# (delta_is_preact=True); for MSE with respect to the output itself.

def _as_onehot(targets: np.ndarray, n_classes: int) -> np.ndarray:
    targets = np.asarray(targets)
    if targets.ndim == 1:
        oh = np.zeros((targets.size, n_classes))
        oh[np.arange(targets.size), targets.astype(int)] = 1.0
        return oh
    return np.asarray(targets, dtype=np.float64)


def mse_loss(pred: np.ndarray, targets: np.ndarray):
    targets = np.asarray(targets, dtype=np.float64)
    diff = pred - targets
    loss = float(np.mean(diff * diff))
    return loss, 2.0 * diff / diff.size


def cross_entropy_loss(probs: np.ndarray, targets: np.ndarray):
    onehot = _as_onehot(targets, probs.shape[1])
    p = np.clip(probs, 1e-12, None)
    loss = float(-np.mean(np.sum(onehot * np.log(p), axis=1)))
    return loss, (probs - onehot) / probs.shape[0]


def gradients(net: Network, inputs: np.ndarray, targets: np.ndarray, loss: str):
    """Exact gradients of the mean batch loss for all parameters.

    Returns (loss value, grads); masked weight entries receive zero
    gradient.  Cross-entropy demands a softmax output layer.
    """
    inputs = np.atleast_2d(np.asarray(inputs, dtype=np.float64))
    out, caches = net.forward_cached(inputs)
    if loss == "mse":
        value, delta = mse_loss(out, targets)
        grads, _ = net.backward(delta, caches)
    elif loss == "cross_entropy":
        if net.layers[-1].activation != "softmax":
            raise ValueError("cross_entropy requires a softmax output layer")
        value, delta = cross_entropy_loss(out, targets)
        grads, _ = net.backward(delta, caches, delta_is_preact=True)
    else:
        raise ValueError(f"unknown loss {loss!r}")
    return value, grads


# ---------------------------------------------------------------------------
# Optimizers

class Sgd:
    def __init__(self, lr: float):
        self.lr = lr

    def step(self, params, grads) -> None:
        for p, g in zip(params, grads):
            p -= self.lr * g


class Adam:
    def __init__(self, lr: float, beta1: float = 0.9, beta2: float = 0.999,
                 eps: float = 1e-8):
        self.lr = lr
        self.beta1 = beta1
        self.beta2 = beta2
        self.eps = eps
        self.t = 0
        self.m = None
        self.v = None

    def step(self, params, grads) -> None:
        if self.m is None:
            self.m = [np.zeros_like(p) for p in params]
            self.v = [np.zeros_like(p) for p in params]
        self.t += 1
        b1, b2 = self.beta1, self.beta2
        corr1 = 1.0 - b1**self.t
        corr2 = 1.0 - b2**self.t
        for p, g, m, v in zip(params, grads, self.m, self.v):
            m *= b1
            m += (1.0 - b1) * g
            v *= b2
            v += (1.0 - b2) * g * g
            p -= self.lr * (m / corr1) / (np.sqrt(v / corr2) + self.eps)


def make_optimizer(name: str, lr: float):
    if name == "adam":
        return Adam(lr)
    if name == "sgd":
        return Sgd(lr)
    raise ValueError(f"unknown optimizer {name!r}")


@dataclass(frozen=True)
class TrainConfig:
    optimizer: str = "adam"
    lr: float = 1e-3
    batch_size: int = 64
    max_steps: int = 1000
    seed: int = 0
    loss: str = "cross_entropy"

    def __post_init__(self):
        if self.lr < 0:
            raise ValueError("lr must be >= 0")
        if self.batch_size < 1:
            raise ValueError("batch size must be >= 1")
        if self.optimizer not in ("adam", "sgd"):
            raise ValueError(f"unknown optimizer {self.optimizer!r}")
        if self.loss not in ("mse", "cross_entropy"):
            raise ValueError(f"unknown loss {self.loss!r}")


@dataclass
class TrainResult:
    loss_trace: list[float] = field(default_factory=list)

    @property
    def final_loss(self) -> float:
        return self.loss_trace[-1] if self.loss_trace else float("nan")


def train(net: Network, data_source, cfg: TrainConfig) -> TrainResult:
    """Minibatch training loop.

    ``data_source`` is either a callable ``(rng, batch_size) -> (X, Y)``
    or an iterable of ``(X, Y)`` batches.  Raises
    :class:`DivergenceError` when the loss goes non-finite.
    """
    rng = np.random.default_rng(cfg.seed)
    opt = make_optimizer(cfg.optimizer, cfg.lr)
    params = net.param_arrays()
    result = TrainResult()
    batches = None if callable(data_source) else iter(data_source)
    for step in range(cfg.max_steps):
        if batches is None:
            x, y = data_source(rng, cfg.batch_size)
        else:
            try:
                x, y = next(batches)
            except StopIteration:
                break
        value, grads = gradients(net, x, y, cfg.loss)
        if not np.isfinite(value):
            raise DivergenceError(step)
        flat = []
        for dw, db in grads:
            flat.extend((dw, db))
        opt.step(params, flat)
        for layer in net.layers:
            layer.apply_mask()
        result.loss_trace.append(value)
    return result


# ---------------------------------------------------------------------------
# Magnitude pruning with polynomial sparsity decay

@dataclass(frozen=True)
class PruneSchedule:
    s_initial: float = 0.0
    s_final: float = 0.6
    begin_step: int = 0
    end_step: int = 500
    exponent: float = 3.0

    def __post_init__(self):
        if not (0.0 <= self.s_initial < 1.0 and 0.0 <= self.s_final < 1.0):
            raise ValueError("sparsities must lie in [0, 1)")
        if self.s_final < self.s_initial:
            raise ValueError("s_final must be >= s_initial")
        if self.end_step <= self.begin_step:
            raise ValueError("end_step must be > begin_step")


def target_sparsity(sched: PruneSchedule, step: int) -> float:
    """Scheduled sparsity: polynomial ramp from s_initial to s_final."""
    if step < sched.begin_step:
        return sched.s_initial
    if step >= sched.end_step:
        return sched.s_final
    frac = (step - sched.begin_step) / (sched.end_step - sched.begin_step)
    return sched.s_final + (sched.s_initial - sched.s_final) * (1.0 - frac) ** sched.exponent


def prune_step(net: Network, sched: PruneSchedule, step: int) -> float:
    """Mask the smallest-magnitude weights per layer to the scheduled
    sparsity.  Masks are monotone: a pruned weight never comes back."""
    s = target_sparsity(sched, step)
    for layer in net.layers:
        n = layer.weights.size
        k = int(np.floor(s * n))
        if layer.mask is None:
            layer.mask = np.ones_like(layer.weights)
        if k > 0:
            order = np.argsort(np.abs(layer.weights), axis=None, kind="stable")
            new_mask = np.ones(n)
            new_mask[order[:k]] = 0.0
            layer.mask = layer.mask * new_mask.reshape(layer.weights.shape)
        layer.apply_mask()
    return s


def sparsity(net: Network) -> float:
    total = sum(l.weights.size for l in net.layers)
    masked = sum(
        int(np.sum(l.mask == 0.0)) if l.mask is not None else 0 for l in net.layers
    )
    return masked / total


def multiply_count(net: Network, structural: bool = True) -> int:
    """Multiplications needed for one forward pass.

    With ``structural=True`` dead units (no live incoming or no live
    outgoing weights) drop their whole row/column from the count.
    """
    live_masks = [
        l.mask if l.mask is not None else np.ones_like(l.weights) for l in net.layers
    ]
    if not structural:
        return int(sum(m.sum() for m in live_masks))
    # forward liveness of units entering each layer
    fwd = [np.ones(net.layers[0].d_in, dtype=bool)]
    for m in live_masks:
        fwd.append((m[fwd[-1], :] != 0).any(axis=0))
    # backward liveness of units leaving each layer
    bwd = [np.ones(net.layers[-1].d_out, dtype=bool)]
    for m in reversed(live_masks):
        bwd.append((m[:, bwd[-1]] != 0).any(axis=1))
    bwd = bwd[::-1]
    count = 0
    for i, m in enumerate(live_masks):
        keep = np.outer(fwd[i], bwd[i + 1])
        count += int(np.sum((m != 0) & keep))
    return count


# ---------------------------------------------------------------------------
# Verification helper

def gradient_check(net: Network, inputs: np.ndarray, targets: np.ndarray,
                   loss: str, h: float = 1e-5) -> float:
    """Max relative error between reverse-mode and central differences."""
    _, grads = gradients(net, inputs, targets, loss)
    worst = 0.0
    for layer, (dw, db) in zip(net.layers, grads):
        for arr, g in ((layer.weights, dw), (layer.biases, db)):
            it = np.nditer(arr, flags=["multi_index"])
            for _ in it:
                idx = it.multi_index
                if layer.mask is not None and arr is layer.weights and layer.mask[idx] == 0.0:
                    continue
                orig = arr[idx]
                arr[idx] = orig + h
                lp, _ = _loss_only(net, inputs, targets, loss)
                arr[idx] = orig - h
                lm, _ = _loss_only(net, inputs, targets, loss)
                arr[idx] = orig
                num = (lp - lm) / (2.0 * h)
                scale = max(abs(num), abs(g[idx]), 1e-8)
                worst = max(worst, abs(num - g[idx]) / scale)
    return worst


def _loss_only(net: Network, inputs, targets, loss):
    out = net.forward(np.atleast_2d(inputs))
    if loss == "mse":
        return mse_loss(out, targets)
    return cross_entropy_loss(out, targets)


# ---------------------------------------------------------------------------
# Serialization (versioned JSON; row-major weight lists)

def network_to_dict(net: Network) -> dict:
    return {
        "format_version": _FORMAT_VERSION,
        "layers": [
            {
                "d_in": l.d_in,
                "d_out": l.d_out,
                "activation": l.activation,
                "weights": l.weights.ravel().tolist(),
                "biases": l.biases.tolist(),
                "mask": None if l.mask is None else l.mask.ravel().tolist(),
            }
            for l in net.layers
        ],
    }


def network_from_dict(data: dict) -> Network:
    if data.get("format_version") != _FORMAT_VERSION:
        raise ValueError(f"unsupported network format {data.get('format_version')}")
    layers = []
    for spec in data["layers"]:
        w = np.array(spec["weights"], dtype=np.float64).reshape(spec["d_in"], spec["d_out"])
        b = np.array(spec["biases"], dtype=np.float64)
        m = spec.get("mask")
        mask = None if m is None else np.array(m, dtype=np.float64).reshape(w.shape)
        layers.append(Dense(w, b, spec["activation"], mask))
    return Network(layers)


def save_network(net: Network, path) -> None:
    with open(path, "w") as fh:
        json.dump(network_to_dict(net), fh)


def load_network(path) -> Network:
    with open(path) as fh:
        return network_from_dict(json.load(fh))
