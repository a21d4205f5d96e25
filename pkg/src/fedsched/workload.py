"""Desk-scale federated training workloads.

Provides synthetic Gaussian-cluster classification data, IID and label-skew
partitioning across devices, softmax-regression FedAvg primitives (local SGD,
weighted aggregation, held-out evaluation), and a fast analytic surrogate for
large configuration sweeps.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .core import ConfigurationError, JobSpec

CENTER_SCALE = 3.0


class DivergenceError(RuntimeError):
    """Training produced a non-finite loss or gradient."""


@dataclass
class SyntheticDataset:
    """Gaussian class clusters with an optional held-out index set.

    ``partitions`` maps job id to the per-device index lists produced by
    :func:`partition`; the engine fills it during setup.
    """

    features: np.ndarray
    labels: np.ndarray
    class_count: int
    holdout: np.ndarray
    partitions: dict[int, list[np.ndarray]] = field(default_factory=dict)

    @property
    def sample_count(self) -> int:
        return len(self.labels)

    @property
    def train_indices(self) -> np.ndarray:
        """All indices not reserved for evaluation, ascending."""
        return np.setdiff1d(np.arange(self.sample_count), self.holdout)


def generate_dataset(
    n_samples: int,
    n_features: int,
    n_classes: int,
    cluster_spread: float = 1.0,
    seed: int = 0,
    holdout_fraction: float = 0.0,
) -> SyntheticDataset:
    """Sample a balanced classification dataset with one Gaussian cluster per class.

    Class sizes differ by at most one sample. With ``holdout_fraction > 0`` a
    stratified slice of each class is reserved for evaluation. Deterministic
    under ``seed``.
    """
    if n_classes < 2:
        raise ConfigurationError(f"need at least 2 classes, got {n_classes}")
    if n_samples < n_classes:
        raise ConfigurationError(
            f"need at least one sample per class: {n_samples} samples, {n_classes} classes"
        )
    if n_features < 1:
        raise ConfigurationError(f"need at least 1 feature, got {n_features}")
    if cluster_spread <= 0:
        raise ConfigurationError(f"cluster_spread must be > 0, got {cluster_spread}")
    if not 0 <= holdout_fraction < 1:
        raise ConfigurationError(
            f"holdout_fraction must be in [0, 1), got {holdout_fraction}"
        )

    rng = np.random.default_rng(seed)
    centers = rng.normal(0.0, 1.0, size=(n_classes, n_features)) * CENTER_SCALE
    base, extra = divmod(n_samples, n_classes)
    counts = [base + (1 if c < extra else 0) for c in range(n_classes)]
    labels = np.repeat(np.arange(n_classes, dtype=np.int64), counts)
    features = centers[labels] + rng.normal(0.0, cluster_spread, size=(n_samples, n_features))

    holdout_parts = []
    start = 0
    for count in counts:
        held = int(count * holdout_fraction)
        if held:
            holdout_parts.append(np.arange(start + count - held, start + count))
        start += count
    holdout = (
        np.concatenate(holdout_parts) if holdout_parts else np.empty(0, dtype=np.int64)
    )
    return SyntheticDataset(
        features=features, labels=labels, class_count=n_classes, holdout=holdout
    )


def _partition_iid(pool: np.ndarray, fleet_size: int, rng: np.random.Generator):
    if len(pool) < fleet_size:
        raise ConfigurationError(
            f"cannot give each of {fleet_size} devices data: only {len(pool)} samples"
        )
    shuffled = rng.permutation(pool)
    return [np.sort(shard) for shard in np.array_split(shuffled, fleet_size)]


def _partition_label_skew(
    pool: np.ndarray,
    labels: np.ndarray,
    class_count: int,
    fleet_size: int,
    rng: np.random.Generator,
):
    """Give every device subsets from exactly two classes.

    Each class is split into ceil(2K / C) near-equal subsets. Devices draw two
    distinct classes, always from the classes with the most unassigned subsets
    (random tie-breaks), which keeps the draw feasible; subsets left over when
    C does not divide 2K are attached to devices already holding that class so
    every sample is assigned and no device exceeds two classes.
    """
    if class_count < 2:
        raise ConfigurationError("label-skew partitioning needs at least 2 classes")
    if 2 * fleet_size < class_count:
        raise ConfigurationError(
            f"label-skew partitioning cannot cover {class_count} classes with "
            f"{fleet_size} devices holding 2 classes each"
        )
    subsets_per_class = math.ceil(2 * fleet_size / class_count)
    chunks: list[list[np.ndarray]] = []
    for c in range(class_count):
        class_idx = pool[labels[pool] == c]
        if len(class_idx) < subsets_per_class:
            raise ConfigurationError(
                f"class {c} has {len(class_idx)} samples but needs at least "
                f"{subsets_per_class} to form one subset per slot"
            )
        chunks.append(np.array_split(rng.permutation(class_idx), subsets_per_class))

    remaining = [subsets_per_class] * class_count
    cursor = [0] * class_count
    holders: list[list[int]] = [[] for _ in range(class_count)]
    device_parts: list[list[np.ndarray]] = [[] for _ in range(fleet_size)]

    def take(c: int, k: int) -> None:
        device_parts[k].append(chunks[c][cursor[c]])
        cursor[c] += 1
        remaining[c] -= 1

    for k in range(fleet_size):
        rank = np.empty(class_count, dtype=np.int64)
        rank[rng.permutation(class_count)] = np.arange(class_count)
        order = sorted(
            (c for c in range(class_count) if remaining[c] > 0),
            key=lambda c: (-remaining[c], rank[c]),
        )
        if len(order) < 2:
            raise ConfigurationError(
                f"label-skew partitioning ran out of class subsets at device {k}"
            )
        first, second = order[0], order[1]
        take(first, k)
        take(second, k)
        holders[first].append(k)
        holders[second].append(k)

    for c in range(class_count):
        spot = 0
        while remaining[c] > 0:
            if not holders[c]:
                raise ConfigurationError(
                    f"class {c} has unassigned subsets but no holding device"
                )
            owners = sorted(holders[c])
            take(c, owners[spot % len(owners)])
            spot += 1

    return [np.sort(np.concatenate(parts)) for parts in device_parts]


def partition(
    dataset: SyntheticDataset, fleet_size: int, mode: str, seed: int
) -> list[np.ndarray]:
    """Split the dataset's training indices across ``fleet_size`` devices.

    ``iid`` deals uniform random near-equal shards; ``noniid`` applies the
    two-classes-per-device label-skew scheme. Shards are disjoint and jointly
    cover every training index.
    """
    if fleet_size < 1:
        raise ConfigurationError(f"fleet_size must be >= 1, got {fleet_size}")
    rng = np.random.default_rng(seed)
    pool = dataset.train_indices
    if mode == "iid":
        return _partition_iid(pool, fleet_size, rng)
    if mode == "noniid":
        return _partition_label_skew(
            pool, dataset.labels, dataset.class_count, fleet_size, rng
        )
    raise ConfigurationError(f"unknown partition mode {mode!r}")


@dataclass
class ModelState:
    """Flattened multinomial linear classifier: (C, d) weights then C biases."""

    parameters: np.ndarray
    step_size: float
    n_features: int
    n_classes: int


def init_model(n_features: int, n_classes: int, step_size: float) -> ModelState:
    if step_size <= 0:
        raise ConfigurationError(f"step_size must be > 0, got {step_size}")
    size = n_features * n_classes + n_classes
    return ModelState(
        parameters=np.zeros(size),
        step_size=step_size,
        n_features=n_features,
        n_classes=n_classes,
    )


def _unpack(params: np.ndarray, n_features: int, n_classes: int):
    split = n_features * n_classes
    return params[:split].reshape(n_classes, n_features), params[split:]


def _log_probs(params: np.ndarray, features: np.ndarray, n_features: int, n_classes: int):
    weights, bias = _unpack(params, n_features, n_classes)
    # Non-finite inputs propagate to nan and are caught by the callers' checks.
    with np.errstate(invalid="ignore", over="ignore"):
        logits = features @ weights.T + bias
        shifted = logits - logits.max(axis=1, keepdims=True)
        log_norm = np.log(np.exp(shifted).sum(axis=1, keepdims=True))
        return shifted - log_norm


def softmax_loss_and_grad(
    params: np.ndarray,
    features: np.ndarray,
    labels: np.ndarray,
    n_features: int,
    n_classes: int,
) -> tuple[float, np.ndarray]:
    """Mean cross-entropy over the batch and its gradient in the flat layout."""
    batch = len(labels)
    log_probs = _log_probs(params, features, n_features, n_classes)
    loss = -float(log_probs[np.arange(batch), labels].mean())
    probs = np.exp(log_probs)
    probs[np.arange(batch), labels] -= 1.0
    probs /= batch
    grad_w = probs.T @ features
    grad_b = probs.sum(axis=0)
    return loss, np.concatenate([grad_w.ravel(), grad_b])


def client_update(
    model: ModelState,
    features: np.ndarray,
    labels: np.ndarray,
    local_epochs: int,
    batch_size: int,
    rng: np.random.Generator,
) -> np.ndarray:
    """Run local mini-batch SGD on one device's shard; returns new parameters.

    Batches are reshuffled every epoch from the device's own stream. The
    caller's model is not modified.
    """
    if len(labels) == 0:
        raise ConfigurationError("cannot train on an empty shard")
    params = model.parameters.copy()
    n = len(labels)
    for _ in range(local_epochs):
        order = rng.permutation(n)
        for start in range(0, n, batch_size):
            idx = order[start : start + batch_size]
            loss, grad = softmax_loss_and_grad(
                params, features[idx], labels[idx], model.n_features, model.n_classes
            )
            if not math.isfinite(loss) or not np.all(np.isfinite(grad)):
                raise DivergenceError("non-finite loss or gradient during local update")
            params = params - model.step_size * grad
    return params


def aggregate(updates: list[tuple[np.ndarray, float]]) -> np.ndarray:
    """Sample-size-weighted mean of parameter vectors.

    Computed as a convex combination anchored at the first update so that
    aggregating identical vectors returns that vector bit-for-bit.
    """
    if not updates:
        raise ConfigurationError("aggregate needs at least one update")
    length = len(updates[0][0])
    total = 0.0
    for params, weight in updates:
        if len(params) != length:
            raise ConfigurationError(
                f"parameter length mismatch: {len(params)} != {length}"
            )
        if weight < 0:
            raise ConfigurationError(f"aggregation weight must be >= 0, got {weight}")
        total += weight
    if total <= 0:
        raise ConfigurationError("aggregation weights sum to zero")
    base = updates[0][0]
    combined = base.astype(float, copy=True)
    for params, weight in updates[1:]:
        combined += (weight / total) * (params - base)
    return combined


def evaluate(
    model: ModelState, features: np.ndarray, labels: np.ndarray
) -> tuple[float, float]:
    """Mean cross-entropy and top-1 accuracy on a held-out split."""
    if len(labels) == 0:
        raise ConfigurationError("cannot evaluate on an empty split")
    log_probs = _log_probs(model.parameters, features, model.n_features, model.n_classes)
    loss = -float(log_probs[np.arange(len(labels)), labels].mean())
    accuracy = float((log_probs.argmax(axis=1) == labels).mean())
    return loss, accuracy


def surrogate_progress(
    current_loss: float, coverage: float, decay: float, floor: float = 0.0
) -> float:
    """One analytic training step: shrink the gap to ``floor`` in proportion to
    the fraction of classes covered by this round's participants."""
    if not 0 <= coverage <= 1:
        raise ConfigurationError(f"coverage must be in [0, 1], got {coverage}")
    if not 0 < decay < 1:
        raise ConfigurationError(f"decay must be in (0, 1), got {decay}")
    if current_loss < floor:
        raise ConfigurationError(
            f"current loss {current_loss} is below the floor {floor}"
        )
    return floor + (current_loss - floor) * (1.0 - decay * coverage)


class FedAvgWorkload:
    """Real per-job training state: the global model plus per-device shards."""

    mode = "real"

    def __init__(
        self,
        job: JobSpec,
        dataset: SyntheticDataset,
        shards: list[np.ndarray],
        step_size: float,
    ):
        if len(dataset.holdout) == 0:
            raise ConfigurationError(
                "real workload needs a held-out split; set holdout_fraction > 0"
            )
        self.job = job
        self._shard_features = [dataset.features[s] for s in shards]
        self._shard_labels = [dataset.labels[s] for s in shards]
        self._holdout_features = dataset.features[dataset.holdout]
        self._holdout_labels = dataset.labels[dataset.holdout]
        self.model = init_model(
            dataset.features.shape[1], dataset.class_count, step_size
        )

    def shard_size(self, device_id: int) -> int:
        return len(self._shard_labels[device_id])

    def execute_round(self, selected, streams, round_index: int) -> tuple[float, float]:
        updates = []
        for device_id in sorted(selected):
            rng = streams.training(self.job.id, round_index, device_id)
            params = client_update(
                self.model,
                self._shard_features[device_id],
                self._shard_labels[device_id],
                self.job.local_epochs,
                self.job.batch_size,
                rng,
            )
            updates.append((params, float(self.shard_size(device_id))))
        combined = aggregate(updates)
        if not np.all(np.isfinite(combined)):
            raise DivergenceError(f"job {self.job.id}: aggregated parameters not finite")
        self.model.parameters = combined
        return evaluate(self.model, self._holdout_features, self._holdout_labels)


class SurrogateWorkload:
    """Analytic stand-in: loss decays with the class coverage of participants."""

    mode = "surrogate"

    def __init__(
        self,
        job: JobSpec,
        dataset: SyntheticDataset,
        shards: list[np.ndarray],
        decay: float,
        floor: float,
    ):
        self.job = job
        self.class_count = dataset.class_count
        self._device_classes = [set(dataset.labels[s].tolist()) for s in shards]
        self._shard_sizes = [len(s) for s in shards]
        self.loss = math.log(dataset.class_count)
        self.decay = decay
        self.floor = floor

    def shard_size(self, device_id: int) -> int:
        return self._shard_sizes[device_id]

    def _accuracy_proxy(self) -> float:
        # Maps loss ln(C) -> chance accuracy and loss -> floor onto accuracy 1.
        chance = 1.0 / self.class_count
        span = math.log(self.class_count)
        gained = max(0.0, span - self.loss) / span
        return min(1.0, chance + (1.0 - chance) * gained)

    def execute_round(self, selected, streams, round_index: int) -> tuple[float, float]:
        covered: set[int] = set()
        for device_id in selected:
            covered |= self._device_classes[device_id]
        coverage = len(covered) / self.class_count
        self.loss = surrogate_progress(self.loss, coverage, self.decay, self.floor)
        return self.loss, self._accuracy_proxy()


def make_workload(
    job: JobSpec,
    dataset: SyntheticDataset,
    shards: list[np.ndarray],
    mode: str,
    learning_rate: float,
    surrogate_decay: float,
    surrogate_floor: float,
):
    if mode == "real":
        return FedAvgWorkload(job, dataset, shards, learning_rate)
    if mode == "surrogate":
        return SurrogateWorkload(job, dataset, shards, surrogate_decay, surrogate_floor)
    raise ConfigurationError(f"unknown workload mode {mode!r}")
