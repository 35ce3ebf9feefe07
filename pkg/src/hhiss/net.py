"""Feed-forward rectifier network with exact reverse-mode gradients.

Everything is float64 numpy.  Weights are stored ``(fan_in, fan_out)`` so a
layer computes ``x @ W + b``.  A boolean retention mask may be attached to
the weights; masked entries are forced back to exactly 0.0 after every
optimizer step.
"""

from __future__ import annotations

import copy
from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigError, NumericalError

#: Half-width of the uniform init is ``INIT_GAIN / sqrt(fan_in)``.
INIT_GAIN = 1.0


@dataclass(frozen=True)
class NetworkArch:
    layer_sizes: tuple[int, ...] = (340, 128, 128, 128, 2)
    dropout_rate: float = 0.1

    def __post_init__(self):
        sizes = tuple(int(s) for s in self.layer_sizes)
        object.__setattr__(self, "layer_sizes", sizes)
        if len(sizes) < 2:
            raise ConfigError("a network needs at least an input and an output layer")
        if any(s < 1 for s in sizes):
            raise ConfigError(f"layer widths must be >= 1, got {sizes}")
        if not 0.0 <= self.dropout_rate < 1.0:
            raise ConfigError(f"dropout_rate must lie in [0, 1), got {self.dropout_rate}")

    @property
    def n_layers(self) -> int:
        """Number of affine layers."""
        return len(self.layer_sizes) - 1

    @property
    def n_hidden(self) -> int:
        return len(self.layer_sizes) - 2

    @property
    def input_width(self) -> int:
        return self.layer_sizes[0]

    @property
    def n_classes(self) -> int:
        return self.layer_sizes[-1]


@dataclass
class NetworkParams:
    arch: NetworkArch
    weights: list[np.ndarray]
    biases: list[np.ndarray]
    mask: list[np.ndarray] | None = None
    # optional input standardisation applied before the first layer
    input_shift: np.ndarray | None = None
    input_scale: np.ndarray | None = None
    version: int = field(default=0, compare=False)

    def copy(self) -> "NetworkParams":
        return copy.deepcopy(self)

    @property
    def n_weights(self) -> int:
        return sum(w.size for w in self.weights)

    @property
    def n_params(self) -> int:
        return self.n_weights + sum(b.size for b in self.biases)

    def attach_mask(self, mask) -> None:
        """Attach ``mask`` (PruneMask or list of bool arrays) and zero the pruned weights."""
        layers = getattr(mask, "layers", mask)
        if len(layers) != len(self.weights):
            raise ConfigError("mask layer count does not match network")
        for m, w in zip(layers, self.weights):
            if m.shape != w.shape:
                raise ConfigError(f"mask shape {m.shape} != weight shape {w.shape}")
        self.mask = [np.asarray(m, dtype=bool).copy() for m in layers]
        self.enforce_mask()
        self.version += 1

    def release_mask(self) -> None:
        self.mask = None

    def enforce_mask(self) -> None:
        if self.mask is None:
            return
        for w, m in zip(self.weights, self.mask):
            w[~m] = 0.0

    def standardize(self, x: np.ndarray) -> np.ndarray:
        if self.input_shift is None:
            return x
        return (x - self.input_shift) / self.input_scale


@dataclass
class GradientSet:
    weights: list[np.ndarray]
    biases: list[np.ndarray]
    inputs: np.ndarray | None = None

    def flat(self) -> np.ndarray:
        return np.concatenate([a.ravel() for pair in zip(self.weights, self.biases) for a in pair])


@dataclass
class ForwardCache:
    version: int
    inputs: np.ndarray  # standardised input rows
    pre: list[np.ndarray]  # pre-activations of every layer
    post: list[np.ndarray]  # layer inputs: post[0] = inputs, post[i] = hidden i-1 after dropout
    keep: list[np.ndarray | None]  # inverted-dropout multipliers per hidden layer


@dataclass
class AdamState:
    """First/second moment buffers of the adaptive-moment optimizer."""

    m_w: list[np.ndarray]
    v_w: list[np.ndarray]
    m_b: list[np.ndarray]
    v_b: list[np.ndarray]
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    step: int = 0

    @classmethod
    def zeros_like(cls, params: NetworkParams, **kw) -> "AdamState":
        return cls(
            m_w=[np.zeros_like(w) for w in params.weights],
            v_w=[np.zeros_like(w) for w in params.weights],
            m_b=[np.zeros_like(b) for b in params.biases],
            v_b=[np.zeros_like(b) for b in params.biases],
            **kw,
        )


def init_network(arch: NetworkArch, seed: int) -> NetworkParams:
    """Scaled-uniform fan-in init: ``W ~ U(-a, a)``, ``a = INIT_GAIN / sqrt(fan_in)``; zero biases."""
    rng = np.random.default_rng(seed)
    weights, biases = [], []
    for fan_in, fan_out in zip(arch.layer_sizes[:-1], arch.layer_sizes[1:]):
        bound = INIT_GAIN / np.sqrt(fan_in)
        weights.append(rng.uniform(-bound, bound, size=(fan_in, fan_out)))
        biases.append(np.zeros(fan_out))
    return NetworkParams(arch=arch, weights=weights, biases=biases)


def _check_input(params: NetworkParams, x: np.ndarray) -> np.ndarray:
    x = np.asarray(x, dtype=np.float64)
    if x.ndim == 1:
        x = x[None, :]
    if x.ndim != 2 or x.shape[1] != params.arch.input_width:
        raise ConfigError(f"expected input of width {params.arch.input_width}, got shape {x.shape}")
    return x


def forward(
    params: NetworkParams,
    x: np.ndarray,
    training: bool = False,
    rng: np.random.Generator | None = None,
) -> tuple[np.ndarray, ForwardCache]:
    """Return pre-softmax logits ``(n, c)`` and the cache needed by :func:`backward`.

    In training mode inverted dropout is applied to hidden activations, drawn
    from ``rng`` (required when the dropout rate is non-zero).
    """
    x = _check_input(params, x)
    h = params.standardize(x)
    rate = params.arch.dropout_rate if training else 0.0
    if rate > 0.0 and rng is None:
        raise ConfigError("training-mode forward with dropout needs an rng")
    pre, post, keep = [], [h], []
    last = params.arch.n_layers - 1
    for i, (w, b) in enumerate(zip(params.weights, params.biases)):
        z = h @ w + b
        pre.append(z)
        if i == last:
            break
        h = np.maximum(z, 0.0)
        if rate > 0.0:
            k = (rng.random(h.shape) >= rate) / (1.0 - rate)
            h = h * k
            keep.append(k)
        else:
            keep.append(None)
        post.append(h)
    return pre[-1], ForwardCache(params.version, post[0], pre, post, keep)


def backward(
    params: NetworkParams,
    cache: ForwardCache,
    dlogits: np.ndarray,
    input_grad: bool = False,
) -> GradientSet:
    """Reverse-mode gradients of a scalar loss given ``dLoss/dLogits``.

    With ``input_grad`` the gradient with respect to the raw (unstandardised)
    input rows is also returned.
    """
    if cache.version != params.version:
        raise ConfigError("stale forward cache: parameters changed since the forward pass")
    dlogits = np.asarray(dlogits, dtype=np.float64)
    if dlogits.shape != cache.pre[-1].shape:
        raise ConfigError(f"upstream gradient shape {dlogits.shape} != logits shape {cache.pre[-1].shape}")
    n_layers = params.arch.n_layers
    gw: list[np.ndarray] = [None] * n_layers  # type: ignore[list-item]
    gb: list[np.ndarray] = [None] * n_layers  # type: ignore[list-item]
    delta = dlogits
    for i in range(n_layers - 1, -1, -1):
        gw[i] = cache.post[i].T @ delta
        gb[i] = delta.sum(axis=0)
        if i == 0 and not input_grad:
            break
        dh = delta @ params.weights[i].T
        if i == 0:
            delta = dh
            break
        if cache.keep[i - 1] is not None:
            dh = dh * cache.keep[i - 1]
        delta = dh * (cache.pre[i - 1] > 0.0)
    dx = None
    if input_grad:
        dx = delta if params.input_scale is None else delta / params.input_scale
    return GradientSet(gw, gb, dx)


def apply_update(
    params: NetworkParams,
    grads: GradientSet,
    state: AdamState,
    learning_rate: float,
) -> NetworkParams:
    """One Adam step in place, then re-apply the attached mask."""
    for g in (*grads.weights, *grads.biases):
        if not np.all(np.isfinite(g)):
            raise NumericalError("non-finite gradient entries")
    state.step += 1
    b1, b2 = state.beta1, state.beta2
    c1 = 1.0 - b1**state.step
    c2 = 1.0 - b2**state.step
    for p, g, m, v in zip(
        (*params.weights, *params.biases),
        (*grads.weights, *grads.biases),
        (*state.m_w, *state.m_b),
        (*state.v_w, *state.v_b),
    ):
        m *= b1
        m += (1.0 - b1) * g
        v *= b2
        v += (1.0 - b2) * g * g
        p -= learning_rate * (m / c1) / (np.sqrt(v / c2) + state.eps)
    params.enforce_mask()
    params.version += 1
    return params


def embeddings(params: NetworkParams, x: np.ndarray, layer_index: int) -> np.ndarray:
    """Post-rectifier activations of hidden layer ``layer_index`` (eval mode)."""
    if not 0 <= layer_index < params.arch.n_hidden:
        raise ConfigError(f"layer_index must be in [0, {params.arch.n_hidden}), got {layer_index}")
    _, cache = forward(params, x, training=False)
    return cache.post[layer_index + 1]


def softmax(logits: np.ndarray) -> np.ndarray:
    z = logits - logits.max(axis=1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=1, keepdims=True)


def predict_proba(params: NetworkParams, x: np.ndarray) -> np.ndarray:
    logits, _ = forward(params, x, training=False)
    return softmax(logits)


def predict(params: NetworkParams, x: np.ndarray) -> np.ndarray:
    logits, _ = forward(params, x, training=False)
    return logits.argmax(axis=1)
