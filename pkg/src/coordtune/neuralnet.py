"""Fully-connected network trained from scratch with numpy.

Rows of an input batch are samples. Hidden layers are ``affine -> activation``;
the output layer is affine and yields logits. All arithmetic is float64.
"""

from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass, field, fields
from enum import Enum
from typing import Callable, Sequence

import numpy as np
from scipy.special import expit, log_softmax, softmax

SELU_ALPHA = 1.6732
SELU_SCALE = 1.0507
ELU_ALPHA = 1.0


class NonFiniteError(FloatingPointError):
    """A non-finite value appeared in a forward or backward pass."""


class Activation(str, Enum):
    TANH = "Tanh"
    RELU = "Relu"
    ELU = "Elu"
    SELU = "Selu"
    RELU6 = "Relu6"
    CRELU = "Crelu"
    SOFTMAX = "Softmax"
    SOFTSIGN = "Softsign"
    SOFTPLUS = "Softplus"

    @property
    def width_factor(self) -> int:
        return 2 if self is Activation.CRELU else 1


class LossKind(str, Enum):
    SOFTMAX_CE = "SoftmaxCE"
    SOFTMAX_CE_V2 = "SoftmaxCEv2"
    SIGMOID_CE = "SigmoidCE"
    WEIGHTED_CE = "WeightedCE"
    SPARSE_SOFTMAX_CE = "SparseSoftmaxCE"
    MSE = "MSE"


def activation(kind: Activation | str, x: np.ndarray) -> np.ndarray:
    """Apply an activation; Softmax normalises over the last axis, Crelu doubles it."""
    kind = Activation(kind)
    x = np.asarray(x, dtype=float)
    if kind is Activation.TANH:
        return np.tanh(x)
    if kind is Activation.RELU:
        return np.where(x > 0, x, 0.0)
    if kind is Activation.ELU:
        return np.where(x > 0, x, ELU_ALPHA * np.expm1(np.minimum(x, 0.0)))
    if kind is Activation.SELU:
        return SELU_SCALE * np.where(x > 0, x, SELU_ALPHA * np.expm1(np.minimum(x, 0.0)))
    if kind is Activation.RELU6:
        return np.clip(x, 0.0, 6.0)
    if kind is Activation.CRELU:
        return np.concatenate([np.maximum(x, 0.0), np.maximum(-x, 0.0)], axis=-1)
    if kind is Activation.SOFTMAX:
        return softmax(x, axis=-1)
    if kind is Activation.SOFTSIGN:
        return x / (1.0 + np.abs(x))
    if kind is Activation.SOFTPLUS:
        return np.logaddexp(0.0, x)
    raise ValueError(f"unknown activation {kind}")


def activation_vjp(kind: Activation | str, x: np.ndarray, y: np.ndarray, dy: np.ndarray) -> np.ndarray:
    """Vector-Jacobian product: gradient w.r.t. the pre-activation ``x``.

    ``y`` is ``activation(kind, x)``. At kinks the left-hand branch is used
    (Relu'(0) = 0, Relu6'(0) = 0, Relu6'(6) = 1, Elu'(0) = alpha).
    """
    kind = Activation(kind)
    if kind is Activation.TANH:
        return dy * (1.0 - y * y)
    if kind is Activation.RELU:
        return dy * (x > 0)
    if kind is Activation.ELU:
        return dy * np.where(x > 0, 1.0, ELU_ALPHA * np.exp(np.minimum(x, 0.0)))
    if kind is Activation.SELU:
        return dy * SELU_SCALE * np.where(x > 0, 1.0, SELU_ALPHA * np.exp(np.minimum(x, 0.0)))
    if kind is Activation.RELU6:
        return dy * ((x > 0) & (x <= 6))
    if kind is Activation.CRELU:
        n = x.shape[-1]
        return dy[..., :n] * (x > 0) - dy[..., n:] * (x < 0)
    if kind is Activation.SOFTMAX:
        return y * (dy - np.sum(dy * y, axis=-1, keepdims=True))
    if kind is Activation.SOFTSIGN:
        d = 1.0 + np.abs(x)
        return dy / (d * d)
    if kind is Activation.SOFTPLUS:
        return dy * expit(x)
    raise ValueError(f"unknown activation {kind}")


# --------------------------------------------------------------------------- losses


def _as_targets(kind: LossKind, logits: np.ndarray, target: np.ndarray) -> np.ndarray:
    target = np.asarray(target)
    k, m = logits.shape
    if target.ndim == 1 and target.shape[0] == k and np.issubdtype(target.dtype, np.integer):
        if np.any((target < 0) | (target >= m)):
            raise ValueError(f"class index out of range [0, {m})")
        onehot = np.zeros((k, m))
        onehot[np.arange(k), target] = 1.0
        return onehot
    if kind is LossKind.SPARSE_SOFTMAX_CE:
        raise ValueError("SparseSoftmaxCE expects integer class indices, one per sample")
    if target.shape != logits.shape:
        raise ValueError(f"target shape {target.shape} does not match logits shape {logits.shape}")
    target = target.astype(float)
    if kind in (LossKind.SOFTMAX_CE, LossKind.SOFTMAX_CE_V2, LossKind.MSE):
        if not np.allclose(target.sum(axis=1), 1.0, atol=1e-9):
            raise ValueError("softmax-family targets must be probability vectors (rows sum to 1)")
    return target


def loss(
    kind: LossKind | str,
    logits: np.ndarray,
    target: np.ndarray,
    pos_weight: float = 1.0,
) -> tuple[float, np.ndarray]:
    """Mean loss over the batch and its gradient w.r.t. the logits.

    ``logits`` may be a single vector or a ``(K, M)`` batch. ``target`` is a one-hot
    / probability batch of the same shape, or integer class indices.
    """
    kind = LossKind(kind)
    z = np.asarray(logits, dtype=float)
    single = z.ndim == 1
    if single:
        z = z[None, :]
        target = np.asarray(target)
        target = target.reshape(1) if target.ndim == 0 else target[None, :]
    if not np.all(np.isfinite(z)):
        raise NonFiniteError("non-finite logits")
    t = _as_targets(kind, z, target)
    k, m = z.shape

    if kind in (LossKind.SOFTMAX_CE, LossKind.SOFTMAX_CE_V2, LossKind.SPARSE_SOFTMAX_CE):
        logp = log_softmax(z, axis=1)
        per = -np.sum(t * logp, axis=1)
        grad = np.exp(logp) * t.sum(axis=1, keepdims=True) - t
    elif kind is LossKind.SIGMOID_CE:
        per = np.sum(np.maximum(z, 0.0) - z * t + np.log1p(np.exp(-np.abs(z))), axis=1)
        grad = expit(z) - t
    elif kind is LossKind.WEIGHTED_CE:
        if pos_weight <= 0:
            raise ValueError("pos_weight must be positive")
        coef = 1.0 + (pos_weight - 1.0) * t
        per = np.sum((1.0 - t) * z + coef * (np.log1p(np.exp(-np.abs(z))) + np.maximum(-z, 0.0)), axis=1)
        grad = (1.0 - t) - coef * expit(-z)
    elif kind is LossKind.MSE:
        p = softmax(z, axis=1)
        diff = p - t
        per = np.mean(diff * diff, axis=1)
        dp = 2.0 * diff / m
        grad = p * (dp - np.sum(dp * p, axis=1, keepdims=True))
    else:
        raise ValueError(f"unknown loss {kind}")

    value = float(np.mean(per))
    grad = grad / k
    return value, (grad[0] if single else grad)


# --------------------------------------------------------------------------- network


@dataclass(frozen=True)
class NetworkSpec:
    output_dim: int
    hidden_layers: int
    hidden_width: int
    activation: Activation = Activation.SELU
    input_dim: int = 2

    def __post_init__(self) -> None:
        object.__setattr__(self, "activation", Activation(self.activation))
        if self.hidden_layers < 0:
            raise ValueError("hidden_layers must be >= 0")
        if self.hidden_width < 1:
            raise ValueError("hidden_width must be >= 1")
        if self.output_dim < 2:
            raise ValueError("output_dim must be >= 2")
        if self.input_dim < 1:
            raise ValueError("input_dim must be >= 1")

    def layer_shapes(self) -> list[tuple[int, int]]:
        """(fan_in, fan_out) of each affine map, accounting for Crelu width doubling."""
        shapes = []
        fan_in = self.input_dim
        for _ in range(self.hidden_layers):
            shapes.append((fan_in, self.hidden_width))
            fan_in = self.hidden_width * self.activation.width_factor
        shapes.append((fan_in, self.output_dim))
        return shapes

    @property
    def parameter_count(self) -> int:
        n, w, m, c = self.input_dim, self.hidden_width, self.output_dim, self.activation.width_factor
        if self.hidden_layers == 0:
            return (n + 1) * m
        return (n + 1) * w + (self.hidden_layers - 1) * (c * w + 1) * w + (c * w + 1) * m


@dataclass
class NetworkState:
    """Parameters ``[W0, b0, W1, b1, ...]`` plus optimizer slots and step counter."""

    params: list[np.ndarray]
    slots: dict[str, list[np.ndarray]] = field(default_factory=dict)
    t: int = 0

    @property
    def weights(self) -> list[np.ndarray]:
        return self.params[0::2]

    @property
    def biases(self) -> list[np.ndarray]:
        return self.params[1::2]

    def copy(self) -> "NetworkState":
        return NetworkState(
            [p.copy() for p in self.params],
            {k: [a.copy() for a in v] for k, v in self.slots.items()},
            self.t,
        )

    def to_json(self) -> dict:
        return {
            "t": self.t,
            "params": [{"shape": list(p.shape), "data": p.ravel().tolist()} for p in self.params],
            "slots": {
                k: [{"shape": list(a.shape), "data": a.ravel().tolist()} for a in v]
                for k, v in sorted(self.slots.items())
            },
        }

    @classmethod
    def from_json(cls, doc: dict) -> "NetworkState":
        def arr(entry):
            return np.asarray(entry["data"], dtype=float).reshape(entry["shape"])

        return cls(
            [arr(e) for e in doc["params"]],
            {k: [arr(e) for e in v] for k, v in doc["slots"].items()},
            int(doc["t"]),
        )

    def save(self, path) -> None:
        with open(path, "w", encoding="utf-8") as fh:
            json.dump(self.to_json(), fh)

    @classmethod
    def load(cls, path) -> "NetworkState":
        with open(path, encoding="utf-8") as fh:
            return cls.from_json(json.load(fh))


def init_state(spec: NetworkSpec, seed: int | np.random.Generator) -> NetworkState:
    """Fan-balanced uniform weights in +-sqrt(6 / (fan_in + fan_out)), zero biases."""
    rng = seed if isinstance(seed, np.random.Generator) else np.random.default_rng(seed)
    params = []
    for fan_in, fan_out in spec.layer_shapes():
        limit = math.sqrt(6.0 / (fan_in + fan_out))
        params.append(rng.uniform(-limit, limit, size=(fan_in, fan_out)))
        params.append(np.zeros(fan_out))
    return NetworkState(params)


def _check_input(spec: NetworkSpec, state: NetworkState, x: np.ndarray) -> np.ndarray:
    x = np.asarray(x, dtype=float)
    if x.ndim != 2 or x.shape[1] != spec.input_dim:
        raise ValueError(f"input batch must have shape (K, {spec.input_dim}), got {x.shape}")
    shapes = spec.layer_shapes()
    if len(state.params) != 2 * len(shapes):
        raise ValueError(f"state has {len(state.params) // 2} layers, spec needs {len(shapes)}")
    for i, (fan_in, fan_out) in enumerate(shapes):
        if state.params[2 * i].shape != (fan_in, fan_out) or state.params[2 * i + 1].shape != (fan_out,):
            raise ValueError(f"layer {i}: parameter shapes do not match spec ({fan_in}x{fan_out})")
    return x


def _forward(spec: NetworkSpec, params: Sequence[np.ndarray], x: np.ndarray):
    # overflow is detected explicitly below, so numpy's warnings are redundant
    with np.errstate(over="ignore", invalid="ignore"):
        return _forward_pass(spec, params, x)


def _forward_pass(spec: NetworkSpec, params: Sequence[np.ndarray], x: np.ndarray):
    cache = []
    h = x
    n_layers = len(params) // 2
    for i in range(n_layers):
        w, b = params[2 * i], params[2 * i + 1]
        z = h @ w + b
        if i < n_layers - 1:
            a = activation(spec.activation, z)
        else:
            a = z
        if not np.all(np.isfinite(a)):
            raise NonFiniteError(f"non-finite activation in layer {i}")
        cache.append((h, z, a))
        h = a
    return h, cache


def forward(spec: NetworkSpec, state: NetworkState, x: np.ndarray) -> np.ndarray:
    """Logits for a ``(K, input_dim)`` batch."""
    x = _check_input(spec, state, x)
    logits, _ = _forward(spec, state.params, x)
    return logits


def backward(
    spec: NetworkSpec,
    state: NetworkState,
    x: np.ndarray,
    target: np.ndarray,
    loss_kind: LossKind | str = LossKind.SOFTMAX_CE,
    pos_weight: float = 1.0,
) -> tuple[float, list[np.ndarray]]:
    """Mean batch loss and its exact gradient for every parameter tensor."""
    x = _check_input(spec, state, x)
    logits, cache = _forward(spec, state.params, x)
    value, delta = loss(loss_kind, logits, target, pos_weight=pos_weight)
    with np.errstate(over="ignore", invalid="ignore"):
        grads = _backprop(spec, state, cache, delta)
    return value, grads


def _backprop(spec: NetworkSpec, state: NetworkState, cache, delta: np.ndarray) -> list[np.ndarray]:
    grads: list[np.ndarray] = [None] * len(state.params)  # type: ignore[list-item]
    n_layers = len(cache)
    for i in reversed(range(n_layers)):
        h, z, a = cache[i]
        if i < n_layers - 1:
            delta = activation_vjp(spec.activation, z, a, delta)
        grads[2 * i] = h.T @ delta
        grads[2 * i + 1] = delta.sum(axis=0)
        if not (np.all(np.isfinite(grads[2 * i])) and np.all(np.isfinite(grads[2 * i + 1]))):
            raise NonFiniteError(f"non-finite gradient in layer {i}")
        if i > 0:
            delta = delta @ state.params[2 * i].T
    return grads


# --------------------------------------------------------------------------- optimizers


def _shrink(v: np.ndarray, threshold, l2_scale) -> np.ndarray:
    return np.sign(v) * np.maximum(np.abs(v) - threshold, 0.0) / (1.0 + l2_scale)


@dataclass(frozen=True)
class Optimizer:
    """Base class; subclasses define the per-tensor update rule."""

    slot_names = ()

    def init_slots(self, p: np.ndarray) -> dict[str, np.ndarray]:
        return {name: np.zeros_like(p) for name in self.slot_names}

    def update(self, p: np.ndarray, g: np.ndarray, s: dict[str, np.ndarray], t: int) -> None:
        raise NotImplementedError

    @property
    def name(self) -> str:
        return type(self).__name__


@dataclass(frozen=True)
class GradientDescent(Optimizer):
    learning_rate: float = 0.01

    def update(self, p, g, s, t):
        p -= self.learning_rate * g


@dataclass(frozen=True)
class Momentum(Optimizer):
    learning_rate: float = 0.01
    momentum: float = 0.9
    slot_names = ("velocity",)

    def update(self, p, g, s, t):
        v = s["velocity"]
        v *= self.momentum
        v += self.learning_rate * g
        p -= v


@dataclass(frozen=True)
class Nesterov(Optimizer):
    """Nesterov momentum with parameters stored at the look-ahead position.

    With phi = theta - gamma * V the update V <- gamma V + lr * grad(phi) becomes
    phi <- phi - (1 + gamma) V_new + gamma V_old, so the gradient supplied is the
    one at the stored parameters.
    """

    learning_rate: float = 0.01
    momentum: float = 0.9
    slot_names = ("velocity",)

    def update(self, p, g, s, t):
        v_old = s["velocity"].copy()
        v = s["velocity"]
        v *= self.momentum
        v += self.learning_rate * g
        p -= (1.0 + self.momentum) * v - self.momentum * v_old


@dataclass(frozen=True)
class Adagrad(Optimizer):
    learning_rate: float = 0.01
    epsilon: float = 1e-8
    slot_names = ("accumulator",)

    def update(self, p, g, s, t):
        acc = s["accumulator"]
        acc += g * g
        p -= self.learning_rate * g / np.sqrt(acc + self.epsilon)


@dataclass(frozen=True)
class Adadelta(Optimizer):
    """Running-RMS ratio update; ``learning_rate`` scales the step (1.0 is the unscaled rule)."""

    learning_rate: float = 1.0
    rho: float = 0.9
    epsilon: float = 1e-8
    slot_names = ("accum_grad", "accum_update")

    def update(self, p, g, s, t):
        eg, ex = s["accum_grad"], s["accum_update"]
        eg *= self.rho
        eg += (1.0 - self.rho) * g * g
        dx = np.sqrt(ex + self.epsilon) / np.sqrt(eg + self.epsilon) * g
        ex *= self.rho
        ex += (1.0 - self.rho) * dx * dx
        p -= self.learning_rate * dx


@dataclass(frozen=True)
class Adam(Optimizer):
    learning_rate: float = 0.001
    beta1: float = 0.9
    beta2: float = 0.999
    epsilon: float = 1e-8
    slot_names = ("m", "v")

    def update(self, p, g, s, t):
        m, v = s["m"], s["v"]
        m *= self.beta1
        m += (1.0 - self.beta1) * g
        v *= self.beta2
        v += (1.0 - self.beta2) * g * g
        m_hat = m / (1.0 - self.beta1**t)
        v_hat = v / (1.0 - self.beta2**t)
        p -= self.learning_rate * m_hat / (np.sqrt(v_hat) + self.epsilon)


@dataclass(frozen=True)
class RMSProp(Optimizer):
    learning_rate: float = 0.001
    decay: float = 0.9
    epsilon: float = 1e-8
    slot_names = ("ms",)

    def update(self, p, g, s, t):
        ms = s["ms"]
        ms *= self.decay
        ms += (1.0 - self.decay) * g * g
        p -= self.learning_rate * g / (np.sqrt(ms) + self.epsilon)


@dataclass(frozen=True)
class Ftrl(Optimizer):
    """Per-coordinate FTRL-Proximal with learning-rate power -1/2.

    Weights are a closed-form function of the linear term ``z`` and the squared
    gradient sum ``n``. ``z`` is seeded so that this function reproduces the
    initial weights, which makes the first step ``w - lr * g / sqrt(n0 + g^2)``.
    """

    learning_rate: float = 0.01
    l1: float = 0.0
    l2: float = 0.0
    initial_accumulator: float = 0.1
    slot_names = ("z", "n")

    def init_slots(self, p):
        n = np.full_like(p, self.initial_accumulator)
        return {"z": -p * np.sqrt(n) / self.learning_rate, "n": n}

    def update(self, p, g, s, t):
        z, n = s["z"], s["n"]
        n_new = n + g * g
        sigma = (np.sqrt(n_new) - np.sqrt(n)) / self.learning_rate
        z += g - sigma * p
        n[...] = n_new
        denom = np.sqrt(n) / self.learning_rate + self.l2
        p[...] = np.where(np.abs(z) > self.l1, -(z - np.sign(z) * self.l1) / denom, 0.0)


@dataclass(frozen=True)
class ProximalGradientDescent(Optimizer):
    learning_rate: float = 0.01
    l1: float = 0.0
    l2: float = 0.0

    def update(self, p, g, s, t):
        lr = self.learning_rate
        p[...] = _shrink(p - lr * g, lr * self.l1, lr * self.l2)


@dataclass(frozen=True)
class ProximalAdagrad(Optimizer):
    learning_rate: float = 0.01
    l1: float = 0.0
    l2: float = 0.0
    epsilon: float = 1e-8
    slot_names = ("accumulator",)

    def update(self, p, g, s, t):
        acc = s["accumulator"]
        acc += g * g
        lr = self.learning_rate / np.sqrt(acc + self.epsilon)
        p[...] = _shrink(p - lr * g, lr * self.l1, lr * self.l2)


OPTIMIZERS: dict[str, type[Optimizer]] = {
    cls.__name__: cls
    for cls in (
        Adam,
        Adadelta,
        Adagrad,
        Ftrl,
        GradientDescent,
        ProximalAdagrad,
        ProximalGradientDescent,
        RMSProp,
        Momentum,
        Nesterov,
    )
}


def make_optimizer(name: str, learning_rate: float, **options) -> Optimizer:
    """Optimizer by grid tag; every kind takes the swept learning rate as its step scale."""
    try:
        cls = OPTIMIZERS[name]
    except KeyError:
        raise ValueError(f"unknown optimizer {name!r}; known: {sorted(OPTIMIZERS)}") from None
    allowed = {f.name for f in fields(cls)}
    bad = set(options) - allowed
    if bad:
        raise ValueError(f"{name} has no options {sorted(bad)}")
    return cls(learning_rate=float(learning_rate), **options)


def optimizer_step(opt: Optimizer, state: NetworkState, grads: Sequence[np.ndarray]) -> NetworkState:
    """Apply one update in place and return ``state``."""
    if len(grads) != len(state.params):
        raise ValueError(f"got {len(grads)} gradients for {len(state.params)} parameters")
    for p, g in zip(state.params, grads):
        if np.shape(g) != p.shape:
            raise ValueError(f"gradient shape {np.shape(g)} does not match parameter {p.shape}")
        if not np.all(np.isfinite(g)):
            raise NonFiniteError("non-finite gradient passed to optimizer")
    if not state.slots:
        per_param = [opt.init_slots(p) for p in state.params]
        state.slots = {name: [s[name] for s in per_param] for name in opt.slot_names}
    state.t += 1
    for i, (p, g) in enumerate(zip(state.params, grads)):
        slots = {name: state.slots[name][i] for name in state.slots}
        opt.update(p, np.asarray(g, dtype=float), slots, state.t)
    return state


# --------------------------------------------------------------------------- training


@dataclass
class TrainResult:
    state: NetworkState
    losses: np.ndarray
    failed: bool = False
    error: str | None = None

    @property
    def final_loss(self) -> float:
        return float(self.losses[-1]) if len(self.losses) else float("nan")


def train(
    spec: NetworkSpec,
    init_seed: int,
    data_stream: Callable[[int], tuple[np.ndarray, np.ndarray]],
    *,
    optimizer: Optimizer,
    loss_kind: LossKind | str,
    iterations: int,
    batch_size: int,
    pos_weight: float = 1.0,
) -> TrainResult:
    """Run ``iterations`` optimizer steps, each on a fresh ``data_stream(batch_size)`` batch.

    A non-finite loss or gradient stops training and marks the result failed.
    """
    if iterations < 0:
        raise ValueError("iterations must be >= 0")
    state = init_state(spec, init_seed)
    losses = np.empty(iterations)
    for it in range(iterations):
        x, t = data_stream(batch_size)
        try:
            value, grads = backward(spec, state, x, t, loss_kind, pos_weight)
            if not math.isfinite(value):
                raise NonFiniteError(f"non-finite loss at iteration {it}")
            optimizer_step(optimizer, state, grads)
        except NonFiniteError as exc:
            return TrainResult(state, losses[:it], failed=True, error=f"iteration {it}: {exc}")
        losses[it] = value
    return TrainResult(state, losses)


def write_loss_trace(path, losses: Sequence[float]) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        w.writerow(["iteration", "loss"])
        for i, v in enumerate(losses):
            w.writerow([i, repr(float(v))])
