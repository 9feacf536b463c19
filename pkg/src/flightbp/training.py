"""Loss, backpropagation, gradient descent and the finite-difference oracle.

Conventions:

* ``mse`` is the reported loss: mean of squared residuals over every scalar
  output (samples x output width).
* The per-sample objective differentiated by ``backprop`` is
  ``0.5 * sum_k (yhat_k - y_k)**2``.  Its output-layer delta is
  ``(yhat_k - y_k) * f'(z_k)``, so subtracting ``learning_rate * gradient``
  descends the loss.
* ``FullBatch`` steps with the mean of the per-sample gradients.
"""

from __future__ import annotations

import enum
import logging
from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence

import numpy as np

from flightbp.errors import DimensionMismatch, EmptyDataset, EmptyInput, NonFiniteUpdate, StaleTrace
from flightbp.nn_core import (
    ActivationKind,
    ForwardTrace,
    LayerParams,
    NetworkParams,
    activate,
    activate_derivative,
    network_forward,
)

log = logging.getLogger(__name__)


@dataclass(frozen=True, eq=False)
class Gradients:
    """Partial derivatives of the per-sample objective, one pair per layer."""

    weights: tuple[np.ndarray, ...]
    biases: tuple[np.ndarray, ...]

    def check_congruent(self, net: NetworkParams) -> None:
        if len(self.weights) != len(net.layers) or len(self.biases) != len(net.layers):
            raise DimensionMismatch(
                f"gradients cover {len(self.weights)} layers, network has {len(net.layers)}"
            )
        for k, (gw, gb, layer) in enumerate(zip(self.weights, self.biases, net.layers)):
            if gw.shape != layer.weights.shape or gb.shape != layer.biases.shape:
                raise DimensionMismatch(
                    f"layer {k}: gradient shapes {gw.shape}/{gb.shape} do not match "
                    f"parameters {layer.weights.shape}/{layer.biases.shape}"
                )

    def flat(self) -> np.ndarray:
        """All components in layer order, weights (row-major) before biases."""
        parts = []
        for gw, gb in zip(self.weights, self.biases):
            parts.append(gw.ravel())
            parts.append(gb.ravel())
        return np.concatenate(parts)

    @classmethod
    def zeros_like(cls, net: NetworkParams) -> "Gradients":
        return cls(
            tuple(np.zeros_like(layer.weights) for layer in net.layers),
            tuple(np.zeros_like(layer.biases) for layer in net.layers),
        )


class BatchMode(str, enum.Enum):
    PER_SAMPLE = "per_sample"
    FULL_BATCH = "full_batch"

    @classmethod
    def parse(cls, value) -> "BatchMode":
        if isinstance(value, cls):
            return value
        key = str(value).lower().replace("-", "_")
        aliases = {"persample": "per_sample", "fullbatch": "full_batch"}
        return cls(aliases.get(key, key))


@dataclass(frozen=True)
class TrainConfig:
    learning_rate: float = 0.05
    max_epochs: int = 200
    batch_mode: BatchMode = BatchMode.PER_SAMPLE
    seed: int = 0
    early_stop_patience: int = 0
    shuffle: bool = True

    def __post_init__(self):
        object.__setattr__(self, "batch_mode", BatchMode.parse(self.batch_mode))
        # zero is allowed: it is the documented fixed-point case
        if not (np.isfinite(self.learning_rate) and self.learning_rate >= 0):
            raise ValueError(f"learning_rate must be finite and >= 0, got {self.learning_rate}")
        if int(self.max_epochs) != self.max_epochs or self.max_epochs < 1:
            raise ValueError(f"max_epochs must be an integer >= 1, got {self.max_epochs}")
        if self.early_stop_patience < 0:
            raise ValueError(f"early_stop_patience must be >= 0, got {self.early_stop_patience}")


@dataclass(frozen=True)
class EpochRecord:
    epoch: int
    train_mse: float
    val_mse: Optional[float] = None


@dataclass
class TrainHistory:
    records: list[EpochRecord] = field(default_factory=list)
    stopped_early: bool = False

    def __len__(self):
        return len(self.records)

    def append(self, record: EpochRecord) -> None:
        if self.records and record.epoch <= self.records[-1].epoch:
            raise ValueError("epoch indices must be strictly increasing")
        self.records.append(record)

    def to_text(self) -> str:
        """One ``epoch,train_mse,val_mse`` line per epoch; ``val_mse`` may be empty."""
        lines = []
        for r in self.records:
            val = "" if r.val_mse is None else repr(r.val_mse)
            lines.append(f"{r.epoch},{r.train_mse!r},{val}")
        return "".join(line + "\n" for line in lines)

    @classmethod
    def from_text(cls, text: str) -> "TrainHistory":
        hist = cls()
        for line in text.splitlines():
            if not line.strip():
                continue
            epoch, train, val = line.split(",")
            hist.append(EpochRecord(int(epoch), float(train), float(val) if val else None))
        return hist


def mse(targets, predictions) -> float:
    """Mean of squared residuals over every scalar output."""
    t = [np.asarray(v, dtype=np.float64) for v in targets]
    p = [np.asarray(v, dtype=np.float64) for v in predictions]
    if len(t) != len(p):
        raise DimensionMismatch(f"{len(t)} targets vs {len(p)} predictions")
    if not t:
        raise EmptyInput("mse of an empty sample set")
    total = 0.0
    count = 0
    for i, (ti, pi) in enumerate(zip(t, p)):
        if ti.shape != pi.shape:
            raise DimensionMismatch(f"sample {i}: target shape {ti.shape} vs prediction {pi.shape}")
        r = ti - pi
        total += float(np.dot(r.ravel(), r.ravel()))
        count += r.size
    return total / count


def sample_loss(net: NetworkParams, x, target) -> float:
    """Per-sample objective ``0.5 * ||yhat - y||**2`` that ``backprop`` differentiates."""
    yhat = network_forward(net, x).output
    target = np.asarray(target, dtype=np.float64)
    if target.shape != yhat.shape:
        raise DimensionMismatch(f"target shape {target.shape} vs output {yhat.shape}")
    r = yhat - target
    return 0.5 * float(r @ r)


def output_deltas(trace: ForwardTrace, target, output_activation: ActivationKind) -> np.ndarray:
    target = np.asarray(target, dtype=np.float64)
    yhat = trace.activations[-1]
    if target.shape != yhat.shape:
        raise DimensionMismatch(f"target shape {target.shape} vs output {yhat.shape}")
    return (yhat - target) * activate_derivative(output_activation, trace.pre_activations[-1])


def hidden_deltas(layer_weights_next, deltas_next, pre_activations, activation: ActivationKind) -> np.ndarray:
    """Back-propagate deltas through the weights of the following layer."""
    w = np.asarray(layer_weights_next, dtype=np.float64)
    d = np.asarray(deltas_next, dtype=np.float64)
    z = np.asarray(pre_activations, dtype=np.float64)
    if w.ndim != 2 or d.shape != (w.shape[0],) or z.shape != (w.shape[1],):
        raise DimensionMismatch(
            f"weights {w.shape}, next deltas {d.shape} and pre-activations {z.shape} do not conform"
        )
    return (w.T @ d) * activate_derivative(activation, z)


def _check_trace(net: NetworkParams, trace: ForwardTrace) -> None:
    n = len(net.layers)
    if len(trace.pre_activations) != n or len(trace.activations) != n:
        raise StaleTrace(f"trace has {len(trace.activations)} layers, network has {n}")
    if np.shape(trace.input) != (net.input_dim,):
        raise StaleTrace(f"trace input shape {np.shape(trace.input)} does not match input_dim {net.input_dim}")
    for k, layer in enumerate(net.layers):
        if np.shape(trace.pre_activations[k]) != (layer.n_out,) or np.shape(trace.activations[k]) != (layer.n_out,):
            raise StaleTrace(f"trace layer {k} does not match a layer of width {layer.n_out}")


def backprop(net: NetworkParams, trace: ForwardTrace, target) -> Gradients:
    _check_trace(net, trace)
    layers = net.layers
    n = len(layers)
    deltas = [None] * n
    deltas[-1] = output_deltas(trace, target, layers[-1].activation)
    for k in range(n - 2, -1, -1):
        deltas[k] = hidden_deltas(
            layers[k + 1].weights, deltas[k + 1], trace.pre_activations[k], layers[k].activation
        )
    gw = []
    for k in range(n):
        prev = trace.input if k == 0 else trace.activations[k - 1]
        gw.append(np.outer(deltas[k], prev))
    return Gradients(tuple(gw), tuple(deltas))


def apply_update(net: NetworkParams, grads: Gradients, learning_rate: float) -> NetworkParams:
    """Gradient-descent step; returns a new network and leaves ``net`` untouched."""
    grads.check_congruent(net)
    new_layers = []
    for k, (layer, gw, gb) in enumerate(zip(net.layers, grads.weights, grads.biases)):
        with np.errstate(over="ignore", invalid="ignore"):
            w = layer.weights - learning_rate * gw
            b = layer.biases - learning_rate * gb
        if not (np.all(np.isfinite(w)) and np.all(np.isfinite(b))):
            raise NonFiniteUpdate(f"update produced non-finite parameters in layer {k}")
        new_layers.append(LayerParams(w, b, layer.activation))
    return NetworkParams(tuple(new_layers), net.input_dim)


def forward_batch(net: NetworkParams, features) -> np.ndarray:
    """Outputs for every row of ``features`` (n_samples x input_dim)."""
    a = np.asarray(features, dtype=np.float64)
    if a.ndim != 2 or a.shape[1] != net.input_dim:
        raise DimensionMismatch(f"features of shape {a.shape} do not fit input_dim {net.input_dim}")
    for layer in net.layers:
        a = activate(layer.activation, a @ layer.weights.T + layer.biases)
    return a


def dataset_mse(net: NetworkParams, features, targets) -> float:
    out = forward_batch(net, features)
    r = np.asarray(targets, dtype=np.float64) - out
    return float(np.sum(r * r) / r.size)


def _check_dataset(net: NetworkParams, data, name: str) -> tuple[np.ndarray, np.ndarray]:
    x = np.asarray(data.features, dtype=np.float64)
    y = np.asarray(data.targets, dtype=np.float64)
    if x.ndim != 2 or y.ndim != 2 or x.shape[0] == 0:
        raise EmptyDataset(f"{name} set is empty")
    if x.shape[0] != y.shape[0]:
        raise DimensionMismatch(f"{name} set has {x.shape[0]} feature rows but {y.shape[0]} target rows")
    if x.shape[1] != net.input_dim:
        raise DimensionMismatch(f"{name} features have width {x.shape[1]}, network expects {net.input_dim}")
    if y.shape[1] != net.output_dim:
        raise DimensionMismatch(f"{name} targets have width {y.shape[1]}, network outputs {net.output_dim}")
    return x, y


class _Trainer:
    """Mutable working copy of the parameters used inside ``train``.

    Uses the same arithmetic as ``backprop`` and ``apply_update`` but avoids
    re-validating immutable parameter objects on every sample.
    """

    def __init__(self, net: NetworkParams):
        self.input_dim = net.input_dim
        self.kinds = [layer.activation for layer in net.layers]
        self.w = [layer.weights.copy() for layer in net.layers]
        self.b = [layer.biases.copy() for layer in net.layers]

    def gradients(self, x: np.ndarray, y: np.ndarray):
        acts = [x]
        pres = []
        for w, b, kind in zip(self.w, self.b, self.kinds):
            z = w @ acts[-1] + b
            pres.append(z)
            acts.append(activate(kind, z))
        n = len(self.w)
        gw, gb = [None] * n, [None] * n
        delta = (acts[-1] - y) * activate_derivative(self.kinds[-1], pres[-1])
        for k in range(n - 1, -1, -1):
            gb[k] = delta
            gw[k] = np.outer(delta, acts[k])
            if k:
                delta = (self.w[k].T @ delta) * activate_derivative(self.kinds[k - 1], pres[k - 1])
        return gw, gb

    def step(self, gw, gb, lr: float, epoch: int) -> None:
        for k in range(len(self.w)):
            w = self.w[k] - lr * gw[k]
            b = self.b[k] - lr * gb[k]
            if not (np.all(np.isfinite(w)) and np.all(np.isfinite(b))):
                raise NonFiniteUpdate(f"epoch {epoch}: update produced non-finite parameters in layer {k}", epoch)
            self.w[k] = w
            self.b[k] = b

    def network(self) -> NetworkParams:
        layers = tuple(LayerParams(w, b, kind) for w, b, kind in zip(self.w, self.b, self.kinds))
        return NetworkParams(layers, self.input_dim)


EpochCallback = Callable[[int, NetworkParams, EpochRecord], Optional[bool]]


def train(
    net: NetworkParams,
    train_set,
    val_set=None,
    config: TrainConfig = TrainConfig(),
    on_epoch: Optional[EpochCallback] = None,
) -> tuple[NetworkParams, TrainHistory]:
    """Train ``net`` by gradient descent and return the new parameters and history.

    ``train_set``/``val_set`` are any objects with ``features`` and
    ``targets`` matrices.  ``on_epoch(epoch, net, record)`` is called after
    every epoch; returning True halts training.  Early stopping halts once
    validation MSE has not improved for ``early_stop_patience`` epochs; the
    parameters at the halting epoch are returned.
    """
    x, y = _check_dataset(net, train_set, "training")
    if val_set is not None:
        xv, yv = _check_dataset(net, val_set, "validation")
    n = x.shape[0]
    lr = float(config.learning_rate)
    rng = np.random.default_rng(config.seed)
    work = _Trainer(net)
    history = TrainHistory()
    best_val = np.inf
    since_best = 0
    current = net

    for epoch in range(int(config.max_epochs)):
        order = rng.permutation(n) if config.shuffle else range(n)
        # overflow surfaces as NonFiniteUpdate from work.step
        with np.errstate(over="ignore", invalid="ignore"):
            if config.batch_mode is BatchMode.PER_SAMPLE:
                for i in order:
                    gw, gb = work.gradients(x[i], y[i])
                    work.step(gw, gb, lr, epoch)
            else:
                sum_w = [np.zeros_like(w) for w in work.w]
                sum_b = [np.zeros_like(b) for b in work.b]
                for i in order:
                    gw, gb = work.gradients(x[i], y[i])
                    for k in range(len(sum_w)):
                        sum_w[k] += gw[k]
                        sum_b[k] += gb[k]
                work.step([g / n for g in sum_w], [g / n for g in sum_b], lr, epoch)

        current = work.network()
        train_loss = dataset_mse(current, x, y)
        val_loss = dataset_mse(current, xv, yv) if val_set is not None else None
        record = EpochRecord(epoch, train_loss, val_loss)
        history.append(record)
        log.debug("epoch %d train_mse=%.6g val_mse=%s", epoch, train_loss, val_loss)

        if on_epoch is not None and on_epoch(epoch, current, record):
            break
        if val_loss is not None and config.early_stop_patience > 0:
            if val_loss < best_val:
                best_val = val_loss
                since_best = 0
            else:
                since_best += 1
                if since_best >= config.early_stop_patience:
                    history.stopped_early = True
                    log.info("early stop at epoch %d (best val_mse %.6g)", epoch, best_val)
                    break

    return current, history


def _loss_raw(weights, biases, kinds, x, t) -> float:
    a = x
    for w, b, kind in zip(weights, biases, kinds):
        a = activate(kind, w @ a + b)
    r = a - t
    return 0.5 * float(r @ r)


def finite_difference_gradients(net: NetworkParams, sample, step: float = 1e-5) -> Gradients:
    """Central-difference estimate of the per-sample objective's gradient."""
    if not (0 < step <= 1e-2):
        raise ValueError(f"step must lie in (0, 1e-2], got {step}")
    x, t = sample
    x = np.asarray(x, dtype=np.float64)
    t = np.asarray(t, dtype=np.float64)
    if x.shape != (net.input_dim,):
        raise DimensionMismatch(f"sample features have shape {x.shape}, network expects ({net.input_dim},)")
    if t.shape != (net.output_dim,):
        raise DimensionMismatch(f"sample target has shape {t.shape}, network outputs ({net.output_dim},)")

    kinds = [layer.activation for layer in net.layers]
    weights = [layer.weights.copy() for layer in net.layers]
    biases = [layer.biases.copy() for layer in net.layers]

    def central(arr, idx):
        orig = arr[idx]
        arr[idx] = orig + step
        up = _loss_raw(weights, biases, kinds, x, t)
        arr[idx] = orig - step
        down = _loss_raw(weights, biases, kinds, x, t)
        arr[idx] = orig
        return (up - down) / (2.0 * step)

    gw, gb = [], []
    for w, b in zip(weights, biases):
        g = np.empty_like(w)
        for idx in np.ndindex(w.shape):
            g[idx] = central(w, idx)
        gw.append(g)
        g = np.empty_like(b)
        for idx in np.ndindex(b.shape):
            g[idx] = central(b, idx)
        gb.append(g)
    return Gradients(tuple(gw), tuple(gb))


@dataclass(frozen=True)
class GradCheckReport:
    max_relative_error: float
    passed: bool
    tolerance: float
    n_params: int
    worst_index: int


def relative_errors(analytic: np.ndarray, numeric: np.ndarray) -> np.ndarray:
    denom = np.maximum(np.maximum(np.abs(analytic), np.abs(numeric)), 1e-12)
    return np.abs(analytic - numeric) / denom


def gradient_check(
    net: NetworkParams,
    sample,
    step: float = 1e-5,
    tolerance: float = 1e-5,
    gradient_fn: Callable[[NetworkParams, ForwardTrace, Sequence[float]], Gradients] = backprop,
) -> GradCheckReport:
    """Compare analytic gradients (``gradient_fn``, default ``backprop``) with central differences."""
    x, t = sample
    trace = network_forward(net, x)
    analytic = gradient_fn(net, trace, t)
    analytic.check_congruent(net)
    numeric = finite_difference_gradients(net, (x, t), step)
    rel = relative_errors(analytic.flat(), numeric.flat())
    worst = int(np.argmax(rel))
    max_rel = float(rel[worst])
    return GradCheckReport(max_rel, bool(max_rel <= tolerance), tolerance, rel.size, worst)
