"""Feed-forward classifier with Monte-Carlo dropout, written directly in numpy.

Architecture: ``FC-ReLU -> dropout -> ... -> FC(2) -> softmax``. Dropout is
inverted: kept units are scaled by ``1 / (1 - rate)`` so a mask-free forward
pass equals the expectation over masks. The same masks are used for training
and for the T stochastic passes of ``mc_predict``.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .core import DEFAULT_LAYOUT, FeatureLayout, Pathology
from .errors import DimensionError, NumericInputError, TrainingError, ValidationError

logger = logging.getLogger(__name__)

PROB_FLOOR = 1e-12


@dataclass(frozen=True, eq=False)
class NetworkParams:
    """Weights ``W`` of shape (fan_in, fan_out) and biases ``b`` of shape (fan_out,)."""

    layers: tuple[tuple[np.ndarray, np.ndarray], ...]

    def __post_init__(self):
        layers = tuple((np.asarray(W, dtype=float), np.asarray(b, dtype=float)) for W, b in self.layers)
        object.__setattr__(self, "layers", layers)
        if not layers:
            raise DimensionError("network has no layers")
        for i, (W, b) in enumerate(layers):
            if W.ndim != 2 or b.shape != (W.shape[1],):
                raise DimensionError(f"layer {i}: weight {W.shape} and bias {b.shape} disagree")
            if i > 0 and W.shape[0] != layers[i - 1][0].shape[1]:
                raise DimensionError(
                    f"layer {i}: expects {W.shape[0]} inputs but layer {i - 1} emits {layers[i - 1][0].shape[1]}"
                )
            if not (np.all(np.isfinite(W)) and np.all(np.isfinite(b))):
                raise NumericInputError(f"layer {i} has non-finite entries")
        if layers[-1][0].shape[1] != 2:
            raise DimensionError(f"output layer has {layers[-1][0].shape[1]} units, expected 2")

    @property
    def sizes(self) -> tuple[int, ...]:
        return (self.layers[0][0].shape[0],) + tuple(W.shape[1] for W, _ in self.layers)

    @property
    def hidden_widths(self) -> tuple[int, ...]:
        return self.sizes[1:-1]

    def arrays(self) -> list[np.ndarray]:
        return [a for layer in self.layers for a in layer]

    @classmethod
    def from_arrays(cls, arrays: Sequence[np.ndarray]) -> "NetworkParams":
        return cls(tuple((arrays[i], arrays[i + 1]) for i in range(0, len(arrays), 2)))

    def zeros_like(self) -> "NetworkParams":
        return NetworkParams.from_arrays([np.zeros_like(a) for a in self.arrays()])

    def equals(self, other: "NetworkParams") -> bool:
        a, b = self.arrays(), other.arrays()
        return len(a) == len(b) and all(np.array_equal(x, y) for x, y in zip(a, b))


@dataclass(frozen=True)
class DropoutConfig:
    rate: float = 0.5

    def __post_init__(self):
        if not 0.0 <= self.rate < 1.0:
            raise ValidationError(f"dropout rate must lie in [0, 1), got {self.rate}")


@dataclass(frozen=True)
class TrainConfig:
    learning_rate: float = 1e-3
    batch_size: int = 32
    epochs: int = 100
    adam_beta1: float = 0.9
    adam_beta2: float = 0.999
    adam_epsilon: float = 1e-8
    seed: int = 0

    def __post_init__(self):
        if self.learning_rate <= 0:
            raise ValidationError("learning_rate must be positive")
        if self.batch_size < 1:
            raise ValidationError("batch_size must be positive")
        if self.epochs < 0:
            raise ValidationError("epochs must be non-negative")
        if not (0 < self.adam_beta1 < 1 and 0 < self.adam_beta2 < 1):
            raise ValidationError("Adam betas must lie in (0, 1)")
        if self.adam_epsilon <= 0:
            raise ValidationError("adam_epsilon must be positive")


@dataclass(frozen=True, eq=False)
class AdamState:
    m: NetworkParams
    v: NetworkParams
    t: int = 0

    @classmethod
    def initial(cls, params: NetworkParams) -> "AdamState":
        return cls(params.zeros_like(), params.zeros_like(), 0)


@dataclass(frozen=True)
class PredictiveDistribution:
    p_benign: float
    p_malignant: float

    def __post_init__(self):
        for p in (self.p_benign, self.p_malignant):
            if not (0.0 <= p <= 1.0):
                raise ValidationError(f"probability {p} outside [0, 1]")
        if abs(self.p_benign + self.p_malignant - 1.0) > 1e-12:
            raise ValidationError(
                f"distribution ({self.p_benign}, {self.p_malignant}) does not sum to 1"
            )

    @classmethod
    def from_malignant(cls, p: float) -> "PredictiveDistribution":
        return cls(1.0 - p, p)

    @property
    def predicted_label(self) -> Pathology:
        # ties go to the malignant branch
        return Pathology.MALIGNANT if self.p_malignant >= self.p_benign else Pathology.BENIGN


@dataclass(frozen=True, eq=False)
class PredictiveSamples:
    """Per-pass ``(p_benign, p_malignant)`` rows, shape (T, 2)."""

    per_pass: np.ndarray
    seed: int | None = None

    def __post_init__(self):
        arr = np.asarray(self.per_pass, dtype=float)
        if arr.ndim != 2 or arr.shape[1] != 2 or arr.shape[0] < 1:
            raise DimensionError(f"per-pass samples must have shape (T, 2), got {arr.shape}")
        if np.any(np.abs(arr.sum(axis=1) - 1.0) > 1e-12):
            raise ValidationError("a per-pass sample does not sum to 1")
        object.__setattr__(self, "per_pass", arr)

    @property
    def T(self) -> int:
        return self.per_pass.shape[0]

    def distribution(self) -> PredictiveDistribution:
        # componentwise average of the passes, no renormalisation
        mean = self.per_pass.mean(axis=0)
        return PredictiveDistribution(float(mean[0]), float(mean[1]))


@dataclass(frozen=True, eq=False)
class BayesianClassifier:
    params: NetworkParams
    dropout: DropoutConfig
    layout: FeatureLayout = DEFAULT_LAYOUT
    seed: int = 0
    final_loss: float = math.nan
    train_config: TrainConfig = field(default_factory=TrainConfig)


def _softmax_rows(Z: np.ndarray) -> np.ndarray:
    Z = Z - Z.max(axis=-1, keepdims=True)
    E = np.exp(Z)
    return E / E.sum(axis=-1, keepdims=True)


def softmax(logits: Sequence[float]) -> PredictiveDistribution:
    z = np.asarray(logits, dtype=float).reshape(1, 2)
    if not np.all(np.isfinite(z)):
        raise NumericInputError(f"non-finite logit in {tuple(logits)}")
    p = _softmax_rows(z)[0]
    return PredictiveDistribution(float(p[0]), float(p[1]))


def _labels_to_index(label, n: int) -> np.ndarray:
    if isinstance(label, Pathology):
        return np.full(n, label.index)
    y = np.array([l.index if isinstance(l, Pathology) else int(l) for l in np.atleast_1d(label)])
    if y.shape != (n,):
        raise DimensionError(f"{y.shape[0]} labels for {n} inputs")
    return y


def _check_input(params: NetworkParams, x: np.ndarray) -> np.ndarray:
    X = np.atleast_2d(np.asarray(x, dtype=float))
    fan_in = params.layers[0][0].shape[0]
    if X.shape[1] != fan_in:
        raise DimensionError(f"layer 0 expects {fan_in} inputs, got {X.shape[1]}")
    return X


def _check_masks(params: NetworkParams, masks, n: int) -> list[np.ndarray] | None:
    if masks is None:
        return None
    widths = params.hidden_widths
    if len(masks) != len(widths):
        raise DimensionError(f"{len(masks)} dropout masks for {len(widths)} hidden layers")
    out = []
    for i, (m, w) in enumerate(zip(masks, widths)):
        m = np.asarray(m, dtype=float)
        if m.shape[-1] != w or (m.ndim == 2 and m.shape[0] != n) or m.ndim > 2:
            raise DimensionError(f"dropout mask for hidden layer {i} has shape {m.shape}, width is {w}")
        out.append(m)
    return out


def _forward_cache(params, X, masks, rate):
    """Return the layer inputs and hidden pre-activations needed by ``backward``."""
    scale = 1.0 / (1.0 - rate)
    inputs, pre = [], []
    A = X
    n_hidden = len(params.layers) - 1
    for i, (W, b) in enumerate(params.layers):
        inputs.append(A)
        Z = A @ W + b
        if i == n_hidden:
            return Z, inputs, pre
        pre.append(Z)
        A = np.maximum(Z, 0.0)
        if masks is not None:
            A = A * masks[i] * scale


def forward(params: NetworkParams, x, masks=None, rate: float = 0.0) -> np.ndarray:
    """Logits for one input (shape (2,)) or a batch (shape (n, 2)).

    ``masks`` holds one 0/1 array per hidden layer, either (width,) or (n, width).
    """
    X = _check_input(params, x)
    masks = _check_masks(params, masks, X.shape[0])
    Z, _, _ = _forward_cache(params, X, masks, rate)
    return Z[0] if np.ndim(x) == 1 else Z


def loss_cross_entropy(dist: PredictiveDistribution, label: Pathology) -> float:
    p = dist.p_malignant if label is Pathology.MALIGNANT else dist.p_benign
    return -math.log(max(p, PROB_FLOOR))


def batch_loss(params: NetworkParams, X, y, masks=None, rate: float = 0.0) -> float:
    """Mean two-class cross-entropy over a batch."""
    X = _check_input(params, X)
    y = _labels_to_index(y, X.shape[0])
    P = _softmax_rows(forward(params, X, masks, rate))
    return float(np.mean(-np.log(np.maximum(P[np.arange(len(y)), y], PROB_FLOOR))))


def backward(params: NetworkParams, x, masks, label, rate: float = 0.0) -> NetworkParams:
    """Exact gradient of the mean cross-entropy with the dropout masks held fixed.

    The probability floor in the loss is ignored here; it only binds when a
    class probability underflows below 1e-12.
    """
    X = _check_input(params, x)
    n = X.shape[0]
    masks = _check_masks(params, masks, n)
    y = _labels_to_index(label, n)
    Z, inputs, pre = _forward_cache(params, X, masks, rate)
    dZ = _softmax_rows(Z)
    dZ[np.arange(n), y] -= 1.0
    dZ /= n
    scale = 1.0 / (1.0 - rate)
    grads: list[tuple[np.ndarray, np.ndarray]] = []
    for i in range(len(params.layers) - 1, -1, -1):
        W, _ = params.layers[i]
        grads.append((inputs[i].T @ dZ, dZ.sum(axis=0)))
        if i == 0:
            break
        dA = dZ @ W.T
        if masks is not None:
            dA = dA * masks[i - 1] * scale
        dZ = dA * (pre[i - 1] > 0)
    return NetworkParams(tuple(reversed(grads)))


def adam_step(
    state: AdamState, params: NetworkParams, grads: NetworkParams, config: TrainConfig
) -> tuple[AdamState, NetworkParams]:
    if params.sizes != grads.sizes or params.sizes != state.m.sizes:
        raise DimensionError(f"shape mismatch: params {params.sizes}, grads {grads.sizes}")
    b1, b2, eps, lr = config.adam_beta1, config.adam_beta2, config.adam_epsilon, config.learning_rate
    t = state.t + 1
    c1 = 1.0 - b1**t
    c2 = 1.0 - b2**t
    new_m, new_v, new_p = [], [], []
    for w, g, m, v in zip(params.arrays(), grads.arrays(), state.m.arrays(), state.v.arrays()):
        m = b1 * m + (1.0 - b1) * g
        v = b2 * v + (1.0 - b2) * (g * g)
        new_p.append(w - lr * (m / c1) / (np.sqrt(v / c2) + eps))
        new_m.append(m)
        new_v.append(v)
    return (
        AdamState(NetworkParams.from_arrays(new_m), NetworkParams.from_arrays(new_v), t),
        NetworkParams.from_arrays(new_p),
    )


def init_params(sizes: Sequence[int], rng: np.random.Generator) -> NetworkParams:
    """Kaiming-uniform weights (bound sqrt(6 / fan_in)) and zero biases."""
    layers = []
    for fan_in, fan_out in zip(sizes[:-1], sizes[1:]):
        bound = math.sqrt(6.0 / fan_in)
        layers.append((rng.uniform(-bound, bound, size=(fan_in, fan_out)), np.zeros(fan_out)))
    return NetworkParams(tuple(layers))


def draw_masks(rng: np.random.Generator, n: int, widths: Sequence[int], rate: float) -> list[np.ndarray]:
    return [(rng.random((n, w)) >= rate).astype(float) for w in widths]


def train(
    X,
    y,
    hidden: Sequence[int] = (64, 64),
    dropout: DropoutConfig = DropoutConfig(),
    config: TrainConfig = TrainConfig(),
    layout: FeatureLayout = DEFAULT_LAYOUT,
) -> BayesianClassifier:
    """Mini-batch Adam on the two-class cross-entropy with dropout active.

    Initialisation, shuffling and dropout masks come from three independent
    streams spawned from ``config.seed``.
    """
    X = np.atleast_2d(np.asarray(X, dtype=float))
    if X.shape[0] == 0:
        raise TrainingError("empty training set")
    y = _labels_to_index(list(y), X.shape[0])
    if len(np.unique(y)) < 2:
        raise TrainingError("degenerate labels: training set has a single class")
    if X.shape[1] != len(layout):
        raise DimensionError(f"inputs have {X.shape[1]} features, layout has {len(layout)}")

    init_ss, shuffle_ss, mask_ss = np.random.SeedSequence(config.seed).spawn(3)
    shuffle_rng = np.random.default_rng(shuffle_ss)
    mask_rng = np.random.default_rng(mask_ss)
    params = init_params((X.shape[1], *hidden, 2), np.random.default_rng(init_ss))
    state = AdamState.initial(params)
    n = X.shape[0]
    for epoch in range(config.epochs):
        order = shuffle_rng.permutation(n)
        for start in range(0, n, config.batch_size):
            idx = order[start : start + config.batch_size]
            masks = draw_masks(mask_rng, len(idx), hidden, dropout.rate)
            grads = backward(params, X[idx], masks, y[idx], dropout.rate)
            state, params = adam_step(state, params, grads, config)
        if (epoch + 1) % 25 == 0:
            logger.debug("epoch %d loss %.5f", epoch + 1, batch_loss(params, X, y))
    final = batch_loss(params, X, y)
    return BayesianClassifier(params, dropout, layout, config.seed, final, config)


def _pass_rng(seed: int, t: int) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence(seed, spawn_key=(t,)))


def mc_predict_batch(model: BayesianClassifier, X, T: int, seed: int) -> np.ndarray:
    """Per-pass probabilities for a batch, shape (n, T, 2).

    Pass ``t`` draws the masks for the whole batch from a stream derived from
    ``(seed, t)`` only, so passes can be evaluated in any order.
    """
    if T < 1:
        raise ValidationError(f"number of passes must be >= 1, got {T}")
    params = model.params
    X = _check_input(params, X)
    rate = model.dropout.rate
    out = np.empty((X.shape[0], T, 2))
    for t in range(T):
        masks = draw_masks(_pass_rng(seed, t), X.shape[0], params.hidden_widths, rate)
        out[:, t, :] = _softmax_rows(forward(params, X, masks, rate))
    return out


def mc_predict(
    model: BayesianClassifier, x, T: int, seed: int
) -> tuple[PredictiveSamples, PredictiveDistribution]:
    x = np.asarray(x, dtype=float)
    if x.ndim != 1:
        raise DimensionError("mc_predict takes a single feature vector; use mc_predict_batch")
    samples = PredictiveSamples(mc_predict_batch(model, x[None, :], T, seed)[0], seed)
    return samples, samples.distribution()
