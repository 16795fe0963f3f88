"""PCA-cascade dense architecture search.

Each hidden layer's width is the number of principal components needed to
reach a variance threshold on that layer's input: the prepared training data
for the first layer, and the inference-mode activations of the previous,
already trained, hidden layer for every later one.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from cascademl.errors import DivergenceError, ValidationError
from cascademl.neuralnet import DenseNetwork, LayerSpec, TrainConfig, TrainingHistory, _init_weights, train
from cascademl.numerics import as_matrix, fit_pca, n_components_for_variance


@dataclass
class Scaler:
    mean: np.ndarray
    scale: np.ndarray

    def apply(self, X) -> np.ndarray:
        X = as_matrix(X)
        if X.shape[1] != self.mean.shape[0]:
            raise ValidationError(
                f"width mismatch: scaler fitted on {self.mean.shape[0]} columns, got {X.shape[1]}"
            )
        return (X - self.mean) / self.scale

    def to_dict(self) -> dict:
        return {"mean": self.mean.tolist(), "scale": self.scale.tolist()}

    @classmethod
    def from_dict(cls, doc: dict) -> "Scaler":
        return cls(np.asarray(doc["mean"], float), np.asarray(doc["scale"], float))


@dataclass
class PreparedData:
    X_train: np.ndarray
    y_train: np.ndarray
    X_val: np.ndarray | None
    y_val: np.ndarray | None
    scaler: Scaler


def fit_scaler(X, normalize: bool = True, unit: bool = True) -> Scaler:
    X = as_matrix(X)
    d = X.shape[1]
    mean = X.mean(axis=0) if normalize else np.zeros(d)
    scale = np.ones(d)
    if normalize and unit:
        std = X.std(axis=0)
        # zero-std columns are centred only
        nonzero = std > 0
        scale[nonzero] = std[nonzero]
    return Scaler(mean, scale)


def data_init(X_train, y_train, X_val=None, y_val=None, normalize=True, unit=True) -> PreparedData:
    """Centre (``normalize``) and optionally unit-scale (``unit``) with train statistics."""
    X_train = as_matrix(X_train, "X_train")
    y_train = np.asarray(y_train)
    if y_train.shape[0] != X_train.shape[0]:
        raise ValidationError("X_train and y_train row counts differ")
    scaler = fit_scaler(X_train, normalize, unit)
    Xv = yv = None
    if X_val is not None:
        Xv = as_matrix(X_val, "X_val")
        if Xv.shape[1] != X_train.shape[1]:
            raise ValidationError(
                f"validation width {Xv.shape[1]} does not match training width {X_train.shape[1]}"
            )
        Xv = scaler.apply(Xv)
        yv = np.asarray(y_val)
        if yv.shape[0] != Xv.shape[0]:
            raise ValidationError("X_val and y_val row counts differ")
    return PreparedData(scaler.apply(X_train), y_train, Xv, yv, scaler)


@dataclass
class SearchConfig:
    layers: int = 3
    pca_variance: float | Sequence[float] = 0.95
    normalize: bool = True
    unit: bool = True
    train: TrainConfig = field(default_factory=TrainConfig)
    layer_template: LayerSpec = field(default_factory=lambda: LayerSpec(1))
    output_neurons: int = 1
    out_activation: str = "sigmoid"

    def __post_init__(self):
        if int(self.layers) != self.layers or self.layers < 1:
            raise ValidationError("layers must be a positive integer")
        if np.ndim(self.pca_variance) == 0:
            thresholds = [float(self.pca_variance)] * self.layers
        else:
            thresholds = [float(t) for t in self.pca_variance]
            if len(thresholds) != self.layers:
                raise ValidationError(
                    f"pca_variance list has {len(thresholds)} entries, expected {self.layers}"
                )
        for t in thresholds:
            if not 0.0 < t <= 1.0:
                raise ValidationError(f"variance threshold out of range: {t}")
        self.thresholds = thresholds
        if self.output_neurons < 1:
            raise ValidationError("output_neurons must be positive")
        if self.out_activation not in ("sigmoid", "softmax", "linear"):
            raise ValidationError(f"unknown out_activation {self.out_activation!r}")
        if self.layer_template.activation == "softmax":
            raise ValidationError("hidden layers cannot use softmax")

    def hidden_spec(self, units: int) -> LayerSpec:
        t = self.layer_template
        return LayerSpec(units, t.activation, t.dropout_rate, t.batch_norm, t.l2, t.init)

    def head_spec(self) -> LayerSpec:
        return LayerSpec(self.output_neurons, self.out_activation, init="glorot_uniform")


@dataclass
class StageInfo:
    explained_variance_ratio: np.ndarray
    k: int
    history: TrainingHistory | None
    degenerate: bool = False
    init_redraws: int = 0


@dataclass
class SearchResult:
    model: DenseNetwork
    widths: list[int]
    per_stage: list[StageInfo]
    final_history: TrainingHistory

    def widths_table(self) -> str:
        lines = ["layer\twidth\tavailable_components\tdegenerate"]
        for i, (w, st) in enumerate(zip(self.widths, self.per_stage), start=1):
            lines.append(f"{i}\t{w}\t{st.explained_variance_ratio.size}\t{int(st.degenerate)}")
        return "\n".join(lines) + "\n"

    def variance_table(self) -> str:
        lines = ["layer\tcomponent\tratio\tcumulative"]
        for i, st in enumerate(self.per_stage, start=1):
            cum = np.cumsum(st.explained_variance_ratio)
            for j, (r, c) in enumerate(zip(st.explained_variance_ratio, cum), start=1):
                lines.append(f"{i}\t{j}\t{r!r}\t{c!r}")
        return "\n".join(lines) + "\n"


# redraw budget for hidden units that are constant over the training data at init
MAX_REDRAWS = 20


def _append_hidden(net: DenseNetwork, spec: LayerSpec, X: np.ndarray) -> int:
    """Append a hidden layer, redrawing units that start constant on ``X``.

    A relu unit fed nonnegative activations is dead for every sample when its
    incoming weights are all negative, and never receives gradient. Returns
    the number of redraws performed.
    """
    net.add_layer(spec)
    p = net.params[-1]
    fan_in = p["W"].shape[0]
    redraws = 0
    for _ in range(MAX_REDRAWS):
        out = net.forward(X, "infer")[-1]
        flat = np.ptp(out, axis=0) <= 0.0
        if not flat.any():
            break
        fresh = _init_weights(net.rng, spec.init, fan_in, spec.units)
        p["W"][:, flat] = fresh[:, flat]
        redraws += int(flat.sum())
    return redraws


def _width_for(data: np.ndarray, threshold: float) -> tuple[int, np.ndarray, bool]:
    model = fit_pca(data)
    if model.n_components == 0:
        return 1, model.explained_variance_ratio, True
    return n_components_for_variance(model, threshold), model.explained_variance_ratio, False


def build(
    search: SearchConfig,
    data: PreparedData,
    on_train: Callable[[int, TrainingHistory, DenseNetwork], None] | None = None,
) -> SearchResult:
    """Run the cascade and return the trained model with its chosen widths.

    Hidden layers keep their trained weights from one stage to the next; only
    the newly appended layer and the output head start fresh. ``on_train`` is
    called as ``on_train(stage, history, net)`` after every training run; the
    final training reports ``stage = search.layers + 1``.
    """
    X, y = data.X_train, data.y_train
    cfg = search.train

    def run_training(net: DenseNetwork, stage: int) -> TrainingHistory:
        try:
            hist = train(net, X, y, data.X_val, data.y_val, cfg)
        except DivergenceError as exc:
            raise DivergenceError(f"stage {stage}: {exc}", epoch=exc.epoch, stage=stage) from None
        if on_train is not None:
            on_train(stage, hist, net)
        return hist

    net = DenseNetwork(X.shape[1], seed=cfg.seed)
    widths: list[int] = []
    stages: list[StageInfo] = []

    k, ratios, degenerate = _width_for(X, search.thresholds[0])
    redraws = _append_hidden(net, search.hidden_spec(k), X)
    widths.append(k)
    stages.append(StageInfo(ratios, k, None, degenerate, redraws))

    for stage in range(2, search.layers + 1):
        net.add_layer(search.head_spec())
        hist = run_training(net, stage)
        acts = net.forward(X, "infer")[-2]
        net.pop_layer()
        k, ratios, degenerate = _width_for(acts, search.thresholds[stage - 1])
        stages[-1].history = hist
        redraws = _append_hidden(net, search.hidden_spec(k), X)
        widths.append(k)
        stages.append(StageInfo(ratios, k, None, degenerate, redraws))

    net.add_layer(search.head_spec())
    final = run_training(net, search.layers + 1)
    stages[-1].history = final
    return SearchResult(net, widths, stages, final)


class PCCDNAS:
    """Stateful wrapper mirroring the three-call workflow: data_init, initialize_model_search, build."""

    def __init__(self):
        self.data: PreparedData | None = None
        self.search: SearchConfig | None = None
        self.result: SearchResult | None = None

    def data_init(self, X_train, y_train, validation=None, normalize=True, unit=True):
        X_val, y_val = validation if validation is not None else (None, None)
        self.data = data_init(X_train, y_train, X_val, y_val, normalize, unit)
        self._flags = (normalize, unit)

    def initialize_model_search(
        self,
        epochs=10,
        layers=3,
        activation="relu",
        pca_variance=0.95,
        loss="binary_crossentropy",
        optimizer="adam",
        metrics=("accuracy",),
        output_neurons=1,
        out_activation="sigmoid",
        stop_criteria="val_loss",
        es_mode="min",
        dropout=0.0,
        regularize=None,
        batch_size=32,
        kernel_initializer="he_normal",
        batch_norm=False,
        es_patience=5,
        verbose=0,
        learn_rate=0.001,
        seed=42,
    ):
        l2 = 0.0
        if regularize is not None:
            kind, value = regularize
            if kind != "l2":
                raise ValidationError(f"only l2 regularisation is supported, got {kind!r}")
            l2 = float(value)
        normalize, unit = getattr(self, "_flags", (True, True))
        self.search = SearchConfig(
            layers=layers,
            pca_variance=pca_variance,
            normalize=normalize,
            unit=unit,
            train=TrainConfig(
                epochs=epochs,
                batch_size=batch_size,
                loss=loss,
                optimizer=optimizer,
                learn_rate=learn_rate,
                stop_criteria=stop_criteria,
                es_mode=es_mode,
                es_patience=es_patience,
                metrics=tuple(metrics),
                verbose=verbose,
                seed=seed,
            ),
            layer_template=LayerSpec(1, activation, dropout, batch_norm, l2, kernel_initializer),
            output_neurons=output_neurons,
            out_activation=out_activation,
        )

    def build(self):
        if self.data is None:
            raise ValidationError("call data_init before build")
        if self.search is None:
            raise ValidationError("call initialize_model_search before build")
        self.result = build(self.search, self.data)
        return self.result.model, self.result.widths
