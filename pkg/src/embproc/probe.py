"""Linear probing of occurrence features with elastic-net regularization.

A multinomial logistic classifier is trained by full-batch gradient
descent from zero initialization on raw (non-aggregated) occurrence
vectors, minimizing

    mean cross-entropy + l1 * ||W||_1 + l2 * ||W||_2^2

with the bias unpenalized. The l1 term is handled by a soft-threshold
applied after each gradient step; the learning rate halves whenever a
step would increase the objective (reverting the step), which makes the
recorded loss history non-increasing by construction.

Neuron importance is the class-summed absolute weight. Salient neurons
are the smallest ranking prefix holding a requested fraction of total
importance, and their distribution over concatenated layer spans is the
per-layer histogram this module reports.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import _svg
from .embstore import OccurrenceShard
from .errors import DataError, TrainingDivergedError

DEFAULT_L1 = 1e-5
DEFAULT_L2 = 1e-5
DEFAULT_EPOCHS = 200
DEFAULT_LR = 0.5
DEFAULT_MASS = 0.95

RANKING_CSV_HEADER = ("neuron", "layer", "importance")
HISTOGRAM_CSV_HEADER = ("layer", "count")


@dataclass(frozen=True)
class LayerSpan:
    """One layer's slice [offset, offset + width) of the feature axis."""

    layer: int
    offset: int
    width: int

    def __post_init__(self):
        if self.layer < 0 or self.offset < 0 or self.width < 1:
            raise DataError(f"bad layer span (layer={self.layer}, offset={self.offset}, width={self.width})")


def _check_layout(layout: list[LayerSpan], dim: int) -> list[LayerSpan]:
    spans = sorted(layout, key=lambda s: s.offset)
    total = 0
    prev_end = 0
    for span in spans:
        if span.offset < prev_end:
            raise DataError(f"layer spans overlap at offset {span.offset}")
        prev_end = span.offset + span.width
        total += span.width
    if total != dim or prev_end > dim:
        raise DataError(f"layout covers {total} features, dataset has {dim}")
    return spans


@dataclass
class ProbeDataset:
    """Labeled occurrence features plus the layer layout they concatenate."""

    features: np.ndarray
    labels: np.ndarray
    label_names: list[str]
    layout: list[LayerSpan] = field(default_factory=list)

    def __post_init__(self):
        self.features = np.asarray(self.features, dtype=np.float64)
        self.labels = np.asarray(self.labels, dtype=np.int64)
        if self.features.ndim != 2 or self.features.shape[0] == 0:
            raise DataError("probe features must be a non-empty (n, d) matrix")
        if not np.all(np.isfinite(self.features)):
            raise DataError("non-finite value in probe features")
        if self.labels.shape != (self.features.shape[0],):
            raise DataError("labels do not align with feature rows")
        if len(self.label_names) < 2:
            raise DataError("probe needs at least 2 classes")
        present = set(int(v) for v in np.unique(self.labels))
        if present != set(range(len(self.label_names))):
            raise DataError("every class must have at least one sample")
        if not self.layout:
            self.layout = [LayerSpan(layer=0, offset=0, width=self.features.shape[1])]
        self.layout = _check_layout(self.layout, self.features.shape[1])

    @property
    def dim(self) -> int:
        return self.features.shape[1]


@dataclass
class ProbeModel:
    weights: np.ndarray
    bias: np.ndarray
    l1: float
    l2: float
    epochs: int
    final_loss: float
    seed: int
    loss_history: list[float] = field(default_factory=list)

    def __post_init__(self):
        self.weights = np.asarray(self.weights, dtype=np.float64)
        self.bias = np.asarray(self.bias, dtype=np.float64)
        if not (np.all(np.isfinite(self.weights)) and np.all(np.isfinite(self.bias))):
            raise DataError("probe model has non-finite parameters")
        drops = np.diff(self.loss_history)
        if len(drops) and float(drops.max()) > 1e-6:
            raise DataError("probe loss history increased beyond tolerance")


@dataclass
class NeuronRanking:
    """Neuron indices with importance scores, sorted non-increasing."""

    entries: list[tuple[int, float]]
    threshold: float = 0.0

    def __post_init__(self):
        scores = [s for _, s in self.entries]
        if any(scores[i] < scores[i + 1] for i in range(len(scores) - 1)):
            raise DataError("ranking scores must be non-increasing")
        if len({i for i, _ in self.entries}) != len(self.entries):
            raise DataError("ranking contains duplicate neuron indices")


def smooth_objective(
    weights: np.ndarray, bias: np.ndarray, features: np.ndarray, labels: np.ndarray, l2: float
) -> tuple[float, np.ndarray, np.ndarray]:
    """Differentiable part of the probe objective and its gradients.

    Returns (mean cross-entropy + l2 * ||W||_2^2, dW, db); the l1 term
    is excluded here because it is handled by soft-thresholding.
    """
    logits = features @ weights.T + bias
    logits = logits - logits.max(axis=1, keepdims=True)
    exp = np.exp(logits)
    denom = exp.sum(axis=1, keepdims=True)
    n = features.shape[0]
    rows = np.arange(n)
    log_probs = logits[rows, labels] - np.log(denom[:, 0])
    loss = -float(log_probs.mean()) + l2 * float(np.square(weights).sum())
    resid = exp / denom
    resid[rows, labels] -= 1.0
    resid /= n
    grad_w = resid.T @ features + 2.0 * l2 * weights
    grad_b = resid.sum(axis=0)
    return loss, grad_w, grad_b


def _objective(weights, bias, features, labels, l1, l2) -> float:
    logits = features @ weights.T + bias
    logits = logits - logits.max(axis=1, keepdims=True)
    denom = np.exp(logits).sum(axis=1)
    rows = np.arange(features.shape[0])
    ce = -float((logits[rows, labels] - np.log(denom)).mean())
    return ce + l2 * float(np.square(weights).sum()) + l1 * float(np.abs(weights).sum())


def train_probe(
    ds: ProbeDataset,
    l1: float = DEFAULT_L1,
    l2: float = DEFAULT_L2,
    epochs: int = DEFAULT_EPOCHS,
    lr: float = DEFAULT_LR,
    seed: int = 42,
) -> ProbeModel:
    """Fit the elastic-net probe by monotone proximal gradient descent.

    Full-batch and zero-initialized, so the result is deterministic and
    the seed is recorded only as run metadata. A step that would raise
    the objective is reverted and retried with half the learning rate.
    """
    if lr <= 0:
        raise DataError(f"lr must be positive, got {lr}")
    if epochs < 1:
        raise DataError(f"epochs must be >= 1, got {epochs}")
    if l1 < 0 or l2 < 0:
        raise DataError("regularization strengths must be non-negative")
    features, labels = ds.features, ds.labels
    n_classes = len(ds.label_names)
    weights = np.zeros((n_classes, ds.dim))
    bias = np.zeros(n_classes)
    loss_prev = _objective(weights, bias, features, labels, l1, l2)
    if not np.isfinite(loss_prev):
        raise TrainingDivergedError("non-finite loss at initialization; try a smaller lr")
    history = [float(loss_prev)]
    for _ in range(epochs):
        _, grad_w, grad_b = smooth_objective(weights, bias, features, labels, l2)
        halvings = 0
        while True:
            step_w = weights - lr * grad_w
            if l1 > 0:
                step_w = np.sign(step_w) * np.maximum(np.abs(step_w) - lr * l1, 0.0)
            step_b = bias - lr * grad_b
            loss_new = _objective(step_w, step_b, features, labels, l1, l2)
            if np.isfinite(loss_new) and loss_new <= loss_prev:
                break
            lr *= 0.5
            halvings += 1
            if halvings > 60:
                raise TrainingDivergedError(
                    "objective would not decrease at any step size; try a smaller lr"
                )
        weights, bias, loss_prev = step_w, step_b, loss_new
        history.append(float(loss_prev))
    return ProbeModel(
        weights=weights,
        bias=bias,
        l1=l1,
        l2=l2,
        epochs=epochs,
        final_loss=float(loss_prev),
        seed=seed,
        loss_history=history,
    )


def predict(model: ProbeModel, features: np.ndarray) -> np.ndarray:
    """Class ids with the highest logit, lowest id on ties."""
    features = np.asarray(features, dtype=np.float64)
    return np.argmax(features @ model.weights.T + model.bias, axis=1)


def rank_neurons(model: ProbeModel) -> NeuronRanking:
    """Order neurons by class-summed absolute weight, ties by lower index."""
    importance = np.abs(model.weights).sum(axis=0)
    order = np.argsort(-importance, kind="stable")
    entries = [(int(i), float(importance[i])) for i in order]
    return NeuronRanking(entries=entries)


def select_salient(ranking: NeuronRanking, mass: float) -> list[int]:
    """Smallest ranking prefix with cumulative importance >= mass * total.

    Trailing zero-importance neurons are never selected, so mass=1.0
    returns exactly the neurons with non-zero importance.
    """
    if not 0 < mass <= 1:
        raise DataError(f"mass must be in (0, 1], got {mass}")
    scores = np.array([s for _, s in ranking.entries], dtype=np.float64)
    cumulative = np.cumsum(scores)
    total = float(cumulative[-1]) if len(cumulative) else 0.0
    if total <= 0:
        raise DataError("total importance is zero; nothing to select")
    take = int(np.searchsorted(cumulative, mass * total, side="left")) + 1
    return [idx for idx, _ in ranking.entries[:take]]


def _span_of(index: int, layout: list[LayerSpan]) -> LayerSpan:
    for span in layout:
        if span.offset <= index < span.offset + span.width:
            return span
    raise DataError(f"neuron index {index} falls outside every layout span")


def layer_distribution(selected: list[int], layout: list[LayerSpan]) -> dict[int, int]:
    """Count selected neurons per layer span; counts sum to |selected|."""
    hist = {span.layer: 0 for span in layout}
    for index in selected:
        hist[_span_of(int(index), layout).layer] += 1
    return dict(sorted(hist.items()))


def load_labels(path: str | Path) -> dict[tuple[str, int], str]:
    """Read a word<TAB>sentence_id<TAB>label file into a join map."""
    path = Path(path)
    labels: dict[tuple[str, int], str] = {}
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.rstrip("\n")
            if not line.strip():
                continue
            parts = line.split("\t")
            if len(parts) != 3:
                raise DataError(f"{path}:{lineno}: expected word<TAB>sentence_id<TAB>label")
            word, sid_text, label = parts
            try:
                sid = int(sid_text)
            except ValueError:
                raise DataError(f"{path}:{lineno}: bad sentence id {sid_text!r}") from None
            key = (word, sid)
            if key in labels and labels[key] != label:
                raise DataError(f"{path}:{lineno}: conflicting label for {word!r}/{sid}")
            labels[key] = label
    if not labels:
        raise DataError(f"{path}: no labels found")
    return labels


def build_dataset(
    shards: list[OccurrenceShard], labels: dict[tuple[str, int], str]
) -> ProbeDataset:
    """Join per-layer shards with labels into concatenated feature rows.

    Occurrences are matched across layers by (word, sentence_id); a key
    occurring m times in one layer must occur m times in all of them.
    """
    if not shards:
        raise DataError("probe needs at least one shard")
    ordered = sorted(shards, key=lambda s: s.layer)
    if len({s.layer for s in ordered}) != len(ordered):
        raise DataError("duplicate layer among probe shards")
    grouped: list[dict[tuple[str, int], list[np.ndarray]]] = []
    for shard in ordered:
        groups: dict[tuple[str, int], list[np.ndarray]] = {}
        for rec in shard.records:
            groups.setdefault((rec.word, rec.sentence_id), []).append(
                np.asarray(rec.vector, dtype=np.float64)
            )
        grouped.append(groups)
    keys = set(grouped[0]).intersection(*grouped[1:]) & set(labels)
    if not keys:
        raise DataError("no occurrences matched the label file")
    rows: list[np.ndarray] = []
    row_labels: list[str] = []
    for key in sorted(keys):
        counts = {len(g[key]) for g in grouped}
        if len(counts) != 1:
            raise DataError(f"occurrence multiplicity for {key!r} differs across layers")
        for i in range(counts.pop()):
            rows.append(np.concatenate([g[key][i] for g in grouped]))
            row_labels.append(labels[key])
    label_names = sorted(set(row_labels))
    if len(label_names) < 2:
        raise DataError("matched labels cover fewer than 2 classes")
    name_index = {name: i for i, name in enumerate(label_names)}
    layout = []
    offset = 0
    for shard in ordered:
        layout.append(LayerSpan(layer=shard.layer, offset=offset, width=shard.dim))
        offset += shard.dim
    return ProbeDataset(
        features=np.stack(rows),
        labels=np.array([name_index[l] for l in row_labels], dtype=np.int64),
        label_names=label_names,
        layout=layout,
    )


def write_ranking(ranking: NeuronRanking, layout: list[LayerSpan], path: str | Path) -> None:
    """CSV rows neuron,layer,importance in ranking order."""
    with open(path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(RANKING_CSV_HEADER)
        for index, score in ranking.entries:
            writer.writerow([index, _span_of(index, layout).layer, repr(float(score))])


def write_histogram(hist: dict[int, int], path: str | Path) -> None:
    with open(path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(HISTOGRAM_CSV_HEADER)
        for layer in sorted(hist):
            writer.writerow([layer, hist[layer]])


def write_histogram_svg(hist: dict[int, int], path: str | Path) -> None:
    items = [(str(layer), float(hist[layer])) for layer in sorted(hist)]
    svg = _svg.bar_chart(items, x_label="layer", y_label="salient neurons")
    Path(path).write_text(svg, encoding="utf-8", newline="\n")
