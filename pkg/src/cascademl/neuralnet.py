"""Dense feed-forward network in numpy with backprop, Adam/SGD and early stopping.

Layer order inside each dense layer: affine -> batch norm (optional) ->
activation -> inverted dropout (train mode only).
"""

from __future__ import annotations

import copy
import json
import logging
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Callable

import numpy as np

from cascademl.errors import DivergenceError, ValidationError
from cascademl.numerics import as_matrix, make_rng

log = logging.getLogger(__name__)

ACTIVATIONS = ("relu", "sigmoid", "tanh", "softmax", "linear")
INITIALIZERS = ("he_normal", "glorot_uniform")
LOSSES = ("binary_crossentropy", "categorical_crossentropy", "mse")
OPTIMIZERS = ("adam", "sgd")
METRICS = ("accuracy",)

PROB_CLAMP = 1e-7
BN_MOMENTUM = 0.9
BN_EPS = 1e-5
ADAM_BETA1 = 0.9
ADAM_BETA2 = 0.999
ADAM_EPS = 1e-8

CMNET_FORMAT = "cmnet"
CMNET_VERSION = 1


@dataclass
class LayerSpec:
    units: int
    activation: str = "relu"
    dropout_rate: float = 0.0
    batch_norm: bool = False
    l2: float = 0.0
    init: str = "he_normal"

    def __post_init__(self):
        if int(self.units) != self.units or self.units < 1:
            raise ValidationError(f"units must be a positive integer, got {self.units}")
        self.units = int(self.units)
        if self.activation not in ACTIVATIONS:
            raise ValidationError(f"unknown activation {self.activation!r}")
        if not 0.0 <= self.dropout_rate < 1.0:
            raise ValidationError(f"dropout_rate must be in [0, 1), got {self.dropout_rate}")
        if self.l2 < 0:
            raise ValidationError("l2 must be >= 0")
        if self.init not in INITIALIZERS:
            raise ValidationError(f"unknown initializer {self.init!r}")


@dataclass
class TrainConfig:
    epochs: int = 10
    batch_size: int = 32
    loss: str = "binary_crossentropy"
    optimizer: str = "adam"
    learn_rate: float = 0.001
    stop_criteria: str = "val_loss"
    es_mode: str = "min"
    es_patience: int = 5
    metrics: tuple[str, ...] = ("accuracy",)
    verbose: int = 0
    seed: int = 42

    def __post_init__(self):
        self.metrics = tuple(self.metrics)
        if self.epochs < 1:
            raise ValidationError("epochs must be positive")
        if self.batch_size < 1:
            raise ValidationError("batch_size must be positive")
        if self.loss not in LOSSES:
            raise ValidationError(f"unknown loss {self.loss!r}")
        if self.optimizer not in OPTIMIZERS:
            raise ValidationError(f"unknown optimizer {self.optimizer!r}")
        if not self.learn_rate >= 0:
            raise ValidationError("learn_rate must be >= 0")
        if self.es_mode not in ("min", "max"):
            raise ValidationError(f"es_mode must be 'min' or 'max', got {self.es_mode!r}")
        if not 0 <= self.es_patience <= self.epochs:
            raise ValidationError("es_patience must be in [0, epochs]")
        for m in self.metrics:
            if m not in METRICS:
                raise ValidationError(f"unknown metric {m!r}")
        if self.verbose not in (0, 1):
            raise ValidationError("verbose must be 0 or 1")
        names = ["loss", *self.metrics]
        if self.stop_criteria not in names + [f"val_{n}" for n in names]:
            raise ValidationError(
                f"stop_criteria {self.stop_criteria!r} must name the loss or a configured metric"
            )


@dataclass
class TrainingHistory:
    records: list[dict] = field(default_factory=list)
    best_epoch: int = 0
    stopped_early: bool = False

    def __len__(self):
        return len(self.records)

    def series(self, name: str) -> list[float]:
        return [r[name] for r in self.records]

    @property
    def keys(self) -> list[str]:
        return list(self.records[0]) if self.records else []

    def to_dict(self) -> dict:
        return {
            "records": self.records,
            "best_epoch": self.best_epoch,
            "stopped_early": self.stopped_early,
        }

    @classmethod
    def from_dict(cls, doc: dict) -> "TrainingHistory":
        return cls(
            records=[{k: float(v) for k, v in r.items()} for r in doc["records"]],
            best_epoch=int(doc["best_epoch"]),
            stopped_early=bool(doc["stopped_early"]),
        )


# --- activations -----------------------------------------------------------


def activate(name: str, u: np.ndarray) -> np.ndarray:
    if name == "relu":
        return np.maximum(u, 0.0)
    if name == "sigmoid":
        out = np.empty_like(u)
        pos = u >= 0
        out[pos] = 1.0 / (1.0 + np.exp(-u[pos]))
        e = np.exp(u[~pos])
        out[~pos] = e / (1.0 + e)
        return out
    if name == "tanh":
        return np.tanh(u)
    if name == "softmax":
        e = np.exp(u - u.max(axis=1, keepdims=True))
        return e / e.sum(axis=1, keepdims=True)
    return u.copy()


def activation_backward(name: str, dh: np.ndarray, u: np.ndarray, h: np.ndarray) -> np.ndarray:
    if name == "relu":
        return dh * (u > 0)
    if name == "sigmoid":
        return dh * h * (1.0 - h)
    if name == "tanh":
        return dh * (1.0 - h**2)
    if name == "softmax":
        return h * (dh - np.sum(dh * h, axis=1, keepdims=True))
    return dh


# --- losses ----------------------------------------------------------------


def loss_value(loss: str, predictions, targets, l2_terms=()) -> float:
    """Mean data loss plus ``sum(l2 * ||W||^2)`` over ``(l2, W)`` pairs."""
    p = np.asarray(predictions, dtype=np.float64)
    t = np.asarray(targets, dtype=np.float64)
    if p.shape != t.shape:
        raise ValidationError(f"prediction shape {p.shape} != target shape {t.shape}")
    if loss == "binary_crossentropy":
        pc = np.clip(p, PROB_CLAMP, 1.0 - PROB_CLAMP)
        data = float(np.mean(-(t * np.log(pc) + (1.0 - t) * np.log(1.0 - pc))))
    elif loss == "categorical_crossentropy":
        pc = np.clip(p, PROB_CLAMP, 1.0 - PROB_CLAMP)
        data = float(np.mean(-np.sum(t * np.log(pc), axis=-1)))
    elif loss == "mse":
        data = float(np.mean((p - t) ** 2))
    else:
        raise ValidationError(f"unknown loss kind {loss!r}")
    penalty = sum(float(l2) * float(np.sum(np.asarray(W) ** 2)) for l2, W in l2_terms)
    return data + penalty


def loss_gradient(loss: str, p: np.ndarray, t: np.ndarray) -> np.ndarray:
    """Gradient of the mean data loss with respect to the predictions."""
    n = p.shape[0]
    if loss == "mse":
        return 2.0 * (p - t) / p.size
    inside = (p > PROB_CLAMP) & (p < 1.0 - PROB_CLAMP)
    pc = np.clip(p, PROB_CLAMP, 1.0 - PROB_CLAMP)
    if loss == "binary_crossentropy":
        g = (-(t / pc) + (1.0 - t) / (1.0 - pc)) / p.size
    elif loss == "categorical_crossentropy":
        g = -(t / pc) / n
    else:
        raise ValidationError(f"unknown loss kind {loss!r}")
    return g * inside


# --- network ---------------------------------------------------------------


def _init_weights(rng: np.random.Generator, init: str, fan_in: int, fan_out: int) -> np.ndarray:
    if init == "he_normal":
        return rng.normal(0.0, np.sqrt(2.0 / fan_in), size=(fan_in, fan_out))
    limit = np.sqrt(6.0 / (fan_in + fan_out))
    return rng.uniform(-limit, limit, size=(fan_in, fan_out))


class DenseNetwork:
    """Stack of dense layers with per-layer parameters stored in plain dicts."""

    def __init__(self, input_dim: int, layers=(), seed: int = 0):
        if int(input_dim) != input_dim or input_dim < 1:
            raise ValidationError("input_dim must be a positive integer")
        self.input_dim = int(input_dim)
        self.seed = int(seed)
        self.rng = make_rng(seed)
        self.layers: list[LayerSpec] = []
        self.params: list[dict[str, np.ndarray]] = []
        self.meta: dict = {}
        for spec in layers:
            self.add_layer(spec)

    @property
    def output_dim(self) -> int:
        return self.layers[-1].units if self.layers else self.input_dim

    @property
    def widths(self) -> list[int]:
        return [s.units for s in self.layers]

    def _check_softmax(self):
        for spec in self.layers[:-1]:
            if spec.activation == "softmax":
                raise ValidationError("softmax is only allowed on the output layer")

    def add_layer(self, spec: LayerSpec) -> None:
        fan_in = self.output_dim
        p = {
            "W": _init_weights(self.rng, spec.init, fan_in, spec.units),
            "b": np.zeros(spec.units),
        }
        if spec.batch_norm:
            p["gamma"] = np.ones(spec.units)
            p["beta"] = np.zeros(spec.units)
            p["running_mean"] = np.zeros(spec.units)
            p["running_var"] = np.ones(spec.units)
        self.layers.append(spec)
        self.params.append(p)
        try:
            self._check_softmax()
        except ValidationError:
            self.pop_layer()
            raise

    def pop_layer(self) -> LayerSpec:
        self.params.pop()
        return self.layers.pop()

    # trainable parameters; batch-norm running statistics are state, not parameters
    def trainable_keys(self) -> list[tuple[int, str]]:
        keys = []
        for i, spec in enumerate(self.layers):
            keys += [(i, "W"), (i, "b")]
            if spec.batch_norm:
                keys += [(i, "gamma"), (i, "beta")]
        return keys

    def get_state(self) -> list[dict[str, np.ndarray]]:
        return [{k: v.copy() for k, v in p.items()} for p in self.params]

    def set_state(self, state) -> None:
        self.params = [{k: np.array(v, dtype=np.float64) for k, v in p.items()} for p in state]

    def l2_terms(self) -> list[tuple[float, np.ndarray]]:
        return [(s.l2, p["W"]) for s, p in zip(self.layers, self.params) if s.l2 > 0]

    def forward(self, X, mode: str = "infer", rng: np.random.Generator | None = None, _cache=None):
        """Post-activation output of every layer.

        ``mode="train"`` uses batch statistics, updates running statistics and
        applies inverted dropout drawn from ``rng``; ``"infer"`` does neither.
        """
        if mode not in ("train", "infer"):
            raise ValidationError(f"mode must be 'train' or 'infer', got {mode!r}")
        a = as_matrix(X)
        if a.shape[1] != self.input_dim:
            raise ValidationError(
                f"input width mismatch: network expects {self.input_dim}, got {a.shape[1]}"
            )
        outputs = []
        for spec, p in zip(self.layers, self.params):
            z = a @ p["W"] + p["b"]
            entry = {"a_in": a}
            if spec.batch_norm:
                if mode == "train":
                    mu = z.mean(axis=0)
                    var = z.var(axis=0)
                    p["running_mean"] = BN_MOMENTUM * p["running_mean"] + (1 - BN_MOMENTUM) * mu
                    p["running_var"] = BN_MOMENTUM * p["running_var"] + (1 - BN_MOMENTUM) * var
                else:
                    mu, var = p["running_mean"], p["running_var"]
                inv_std = 1.0 / np.sqrt(var + BN_EPS)
                zhat = (z - mu) * inv_std
                u = p["gamma"] * zhat + p["beta"]
                entry.update(zhat=zhat, inv_std=inv_std)
            else:
                u = z
            h = activate(spec.activation, u)
            h_act = h
            mask = None
            if mode == "train" and spec.dropout_rate > 0:
                if rng is None:
                    rng = self.rng
                keep = 1.0 - spec.dropout_rate
                mask = (rng.random(h.shape) < keep) / keep
                h = h * mask
            entry.update(u=u, h=h_act, mask=mask)
            if _cache is not None:
                _cache.append(entry)
            outputs.append(h)
            a = h
        return outputs

    def predict(self, X) -> np.ndarray:
        return self.forward(X, "infer")[-1]

    def loss_and_gradients(self, X, T, loss: str, mode: str = "train", rng=None):
        """Total loss and gradients for every trainable parameter.

        Batch-norm gradients assume batch statistics, i.e. ``mode="train"``.
        """
        cache: list[dict] = []
        outputs = self.forward(X, mode, rng=rng, _cache=cache)
        p_out = outputs[-1]
        T = np.asarray(T, dtype=np.float64)
        value = loss_value(loss, p_out, T, self.l2_terms())
        grads: dict[tuple[int, str], np.ndarray] = {}
        dout = loss_gradient(loss, p_out, T)
        for i in range(len(self.layers) - 1, -1, -1):
            spec, p, c = self.layers[i], self.params[i], cache[i]
            dh = dout * c["mask"] if c["mask"] is not None else dout
            du = activation_backward(spec.activation, dh, c["u"], c["h"])
            if spec.batch_norm and mode == "train":
                zhat, inv_std = c["zhat"], c["inv_std"]
                grads[(i, "gamma")] = np.sum(du * zhat, axis=0)
                grads[(i, "beta")] = np.sum(du, axis=0)
                dzhat = du * p["gamma"]
                m = dzhat.shape[0]
                dz = (inv_std / m) * (
                    m * dzhat - dzhat.sum(axis=0) - zhat * np.sum(dzhat * zhat, axis=0)
                )
            elif spec.batch_norm:
                grads[(i, "gamma")] = np.sum(du * c["zhat"], axis=0)
                grads[(i, "beta")] = np.sum(du, axis=0)
                dz = du * p["gamma"] * c["inv_std"]
            else:
                dz = du
            grads[(i, "W")] = c["a_in"].T @ dz + 2.0 * spec.l2 * p["W"]
            grads[(i, "b")] = dz.sum(axis=0)
            dout = dz @ p["W"].T
        return value, grads

    # --- persistence -------------------------------------------------------

    def to_dict(self) -> dict:
        return {
            "format": CMNET_FORMAT,
            "version": CMNET_VERSION,
            "input_dim": self.input_dim,
            "seed": self.seed,
            "meta": self.meta,
            "layers": [
                {"spec": asdict(s), "params": {k: v.tolist() for k, v in sorted(p.items())}}
                for s, p in zip(self.layers, self.params)
            ],
        }

    @classmethod
    def from_dict(cls, doc: dict) -> "DenseNetwork":
        if doc.get("format") != CMNET_FORMAT:
            raise ValidationError("not a cmnet document")
        if doc.get("version") != CMNET_VERSION:
            raise ValidationError(f"unsupported cmnet version {doc.get('version')}")
        net = cls(doc["input_dim"], seed=doc.get("seed", 0))
        net.meta = dict(doc.get("meta", {}))
        fan_in = net.input_dim
        for layer in doc["layers"]:
            spec = LayerSpec(**layer["spec"])
            params = {k: np.array(v, dtype=np.float64) for k, v in layer["params"].items()}
            if params["W"].shape != (fan_in, spec.units):
                raise ValidationError("cmnet layer shapes do not chain")
            net.layers.append(spec)
            net.params.append(params)
            fan_in = spec.units
        net._check_softmax()
        return net

    def save(self, path) -> None:
        text = json.dumps(self.to_dict(), indent=1, sort_keys=True)
        Path(path).write_text(text + "\n", encoding="utf-8")

    @classmethod
    def load(cls, path) -> "DenseNetwork":
        try:
            doc = json.loads(Path(path).read_text(encoding="utf-8"))
        except json.JSONDecodeError as exc:
            raise ValidationError(f"malformed cmnet file {path}: {exc}") from None
        return cls.from_dict(doc)


# --- training --------------------------------------------------------------


def task_for(net: DenseNetwork) -> str:
    return "binary" if net.output_dim == 1 else "categorical"


def prepare_targets(y, n_out: int) -> np.ndarray:
    """Integer labels become a 0/1 column (one output) or one-hot rows."""
    y = np.asarray(y)
    if y.ndim == 2:
        if y.shape[1] != n_out:
            raise ValidationError(f"targets have {y.shape[1]} columns, network outputs {n_out}")
        return y.astype(np.float64)
    if n_out == 1:
        return y.astype(np.float64).reshape(-1, 1)
    labels = y.astype(int)
    if labels.min() < 0 or labels.max() >= n_out:
        raise ValidationError(f"labels must lie in [0, {n_out})")
    return np.eye(n_out)[labels]


def predict_classes(net: DenseNetwork, X, task: str | None = None) -> np.ndarray:
    """Binary: 1 iff output >= 0.5. Categorical: argmax, ties to the lower index."""
    task = task or task_for(net)
    out = net.predict(X)
    if task == "binary":
        if out.shape[1] != 1:
            raise ValidationError("binary task needs exactly one output unit")
        return (out[:, 0] >= 0.5).astype(int)
    if task == "categorical":
        if out.shape[1] < 2:
            raise ValidationError("categorical task needs at least two output units")
        return np.argmax(out, axis=1)
    raise ValidationError(f"unknown task {task!r}")


def target_classes(T: np.ndarray) -> np.ndarray:
    if T.shape[1] == 1:
        return (T[:, 0] >= 0.5).astype(int)
    return np.argmax(T, axis=1)


def accuracy(net: DenseNetwork, X, T) -> float:
    return float(np.mean(predict_classes(net, X) == target_classes(T)))


def evaluate(net: DenseNetwork, X, T, cfg: TrainConfig) -> dict[str, float]:
    out = net.predict(X)
    logs = {"loss": loss_value(cfg.loss, out, T, net.l2_terms())}
    if "accuracy" in cfg.metrics:
        logs["accuracy"] = accuracy(net, X, T)
    return logs


class EarlyStopping:
    """Strict-improvement monitor.

    An epoch that does not strictly improve on the best value increments the
    wait counter; training stops once the counter reaches ``patience``
    (``patience=0`` stops at the first non-improving epoch).
    """

    def __init__(self, patience: int, mode: str = "min"):
        self.patience = patience
        self.mode = mode
        self.best = np.inf if mode == "min" else -np.inf
        self.best_epoch = -1
        self.wait = 0

    def improved(self, value: float) -> bool:
        return value < self.best if self.mode == "min" else value > self.best

    def update(self, epoch: int, value: float) -> tuple[bool, bool]:
        """Returns ``(improved, should_stop)``."""
        if self.improved(value):
            self.best, self.best_epoch, self.wait = value, epoch, 0
            return True, False
        self.wait += 1
        return False, self.wait >= self.patience


class _Optimizer:
    def __init__(self, kind: str, lr: float):
        self.kind, self.lr = kind, lr
        self.m: dict = {}
        self.v: dict = {}
        self.t = 0

    def step(self, net: DenseNetwork, grads: dict) -> None:
        self.t += 1
        for key, g in grads.items():
            i, name = key
            if self.kind == "sgd":
                net.params[i][name] = net.params[i][name] - self.lr * g
                continue
            m = self.m.get(key, 0.0) * ADAM_BETA1 + (1 - ADAM_BETA1) * g
            v = self.v.get(key, 0.0) * ADAM_BETA2 + (1 - ADAM_BETA2) * g * g
            self.m[key], self.v[key] = m, v
            mhat = m / (1 - ADAM_BETA1**self.t)
            vhat = v / (1 - ADAM_BETA2**self.t)
            net.params[i][name] = net.params[i][name] - self.lr * mhat / (np.sqrt(vhat) + ADAM_EPS)


def train(
    net: DenseNetwork,
    X_train,
    y_train,
    X_val=None,
    y_val=None,
    cfg: TrainConfig | None = None,
    on_epoch_end: Callable[[int, dict, DenseNetwork], None] | None = None,
) -> TrainingHistory:
    """Mini-batch training with per-epoch evaluation and best-weight restoration.

    Epoch metrics are computed after the epoch in inference mode. The
    ``on_epoch_end(epoch, logs, net)`` hook may edit ``logs`` before the
    early-stopping monitor reads them.
    """
    cfg = cfg or TrainConfig()
    X_train = as_matrix(X_train, "X_train")
    T_train = prepare_targets(y_train, net.output_dim)
    if T_train.shape[0] != X_train.shape[0]:
        raise ValidationError("X_train and y_train row counts differ")
    has_val = X_val is not None and y_val is not None
    if has_val:
        X_val = as_matrix(X_val, "X_val")
        T_val = prepare_targets(y_val, net.output_dim)
        if T_val.shape[0] != X_val.shape[0]:
            raise ValidationError("X_val and y_val row counts differ")
    elif cfg.stop_criteria.startswith("val_"):
        raise ValidationError(f"stop_criteria {cfg.stop_criteria!r} needs validation data")

    rng = make_rng(cfg.seed)
    opt = _Optimizer(cfg.optimizer, cfg.learn_rate)
    monitor = EarlyStopping(cfg.es_patience, cfg.es_mode)
    history = TrainingHistory()
    best_state = net.get_state()
    n = X_train.shape[0]

    for epoch in range(cfg.epochs):
        order = rng.permutation(n)
        for start in range(0, n, cfg.batch_size):
            idx = order[start : start + cfg.batch_size]
            value, grads = net.loss_and_gradients(X_train[idx], T_train[idx], cfg.loss, "train", rng)
            if not np.isfinite(value):
                raise DivergenceError(f"divergence detected at epoch {epoch + 1}", epoch=epoch + 1)
            opt.step(net, grads)

        logs = evaluate(net, X_train, T_train, cfg)
        if has_val:
            logs.update({f"val_{k}": v for k, v in evaluate(net, X_val, T_val, cfg).items()})
        if not all(np.isfinite(v) for v in logs.values()):
            raise DivergenceError(f"divergence detected at epoch {epoch + 1}", epoch=epoch + 1)
        if on_epoch_end is not None:
            on_epoch_end(epoch, logs, net)
        history.records.append(logs)
        if cfg.verbose:
            log.info("epoch %d/%d %s", epoch + 1, cfg.epochs,
                     " ".join(f"{k}={v:.4f}" for k, v in logs.items()))

        improved, stop = monitor.update(epoch, logs[cfg.stop_criteria])
        if improved:
            best_state = net.get_state()
        if stop:
            history.stopped_early = epoch + 1 < cfg.epochs
            break

    history.best_epoch = monitor.best_epoch
    net.set_state(best_state)
    return history


def copy_network(net: DenseNetwork) -> DenseNetwork:
    return copy.deepcopy(net)
