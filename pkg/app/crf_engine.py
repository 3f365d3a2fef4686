"""
First-order linear-chain CRF over sparse named features.

Scores are computed for a whole batch of sequences at once: the observation
rows of every sequence are stacked into one sparse matrix, multiplied by the
emission weights, and scattered into a padded (batch, time, label) array that
the forward-backward and Viterbi recursions walk in log space.

Model file layout (JSON, version 1)::

    {
      "version": 1,
      "labels": ["O", "B-ans", "I-ans"],
      "l2_lambda": 0.1,
      "feature_fingerprint": "<sha256 or null>",
      "transitions": [[...], ...],                # |L| x |L|, from-row, to-column
      "emissions": {"<feature>": {"<label index>": weight, ...}, ...}
    }

Only non-zero emission weights are written; features missing from the file
carry weight zero.
"""

import math
import logging
import numpy as np

from pathlib import Path
from functools import cached_property
from scipy import sparse, optimize
from scipy.special import logsumexp
from dataclasses import dataclass, field
from typing import Any, Dict, List, Optional, Sequence, Tuple, Union
from pydantic import BaseModel, ConfigDict, Field, field_validator

from app.storage import read_json, write_json
from app.errors import DataError, NonFinite, SchemaError, ShapeMismatch

# Configure logging
logger = logging.getLogger(__name__)

MODEL_FORMAT_VERSION = 1

FeatureVector = Dict[str, float]
LabeledSequence = Tuple[Sequence[FeatureVector], Sequence[int]]


class LabelSet(BaseModel):
    model_config = ConfigDict(frozen=True)

    labels: Tuple[str, ...]

    @field_validator("labels")
    @classmethod
    def _distinct(cls, labels: Tuple[str, ...]) -> Tuple[str, ...]:
        if not labels:
            raise ValueError("label set must not be empty")
        if len(set(labels)) != len(labels):
            raise ValueError("label names must be distinct")
        return labels

    @classmethod
    def of(cls, *names: str) -> "LabelSet":
        return cls(labels=tuple(names))

    def __len__(self) -> int:
        return len(self.labels)

    def index(self, name: str) -> int:
        return self._indices[name]

    def name(self, index: int) -> str:
        return self.labels[index]

    @cached_property
    def _indices(self) -> Dict[str, int]:
        return {name: i for i, name in enumerate(self.labels)}


class TrainConfig(BaseModel):
    model_config = ConfigDict(frozen=True)

    l2_lambda: float = Field(default=0.1, ge=0.0)
    max_iterations: int = Field(default=200, gt=0)
    convergence_tol: float = Field(default=1e-4, gt=0.0)
    seed: int = 0


@dataclass(frozen=True, eq=False)
class CrfModel:
    label_set: LabelSet
    feature_names: Tuple[str, ...]
    emissions: np.ndarray
    transitions: np.ndarray
    l2_lambda: float = 0.0
    feature_fingerprint: Optional[str] = None
    version: int = MODEL_FORMAT_VERSION

    def __post_init__(self):
        labels = len(self.label_set)
        if self.emissions.shape != (len(self.feature_names), labels):
            raise ShapeMismatch(f"emission matrix {self.emissions.shape} does not match {len(self.feature_names)} features x {labels} labels")
        if self.transitions.shape != (labels, labels):
            raise ShapeMismatch(f"transition matrix {self.transitions.shape} is not {labels}x{labels}")
        if not (np.all(np.isfinite(self.emissions)) and np.all(np.isfinite(self.transitions))):
            raise NonFinite("model weights must be finite")

    @classmethod
    def zeros(cls, label_set: LabelSet, feature_names: Sequence[str], l2_lambda: float = 0.0) -> "CrfModel":
        names = tuple(feature_names)
        return cls(
            label_set=label_set,
            feature_names=names,
            emissions=np.zeros((len(names), len(label_set))),
            transitions=np.zeros((len(label_set), len(label_set))),
            l2_lambda=l2_lambda,
        )

    @cached_property
    def feature_index(self) -> Dict[str, int]:
        return {name: i for i, name in enumerate(self.feature_names)}

    @property
    def num_labels(self) -> int:
        return len(self.label_set)

    def emission_weight(self, feature: str, label: int) -> float:
        row = self.feature_index.get(feature)
        return 0.0 if row is None else float(self.emissions[row, label])

    def with_weights(self, emissions: np.ndarray, transitions: np.ndarray) -> "CrfModel":
        return CrfModel(
            label_set=self.label_set,
            feature_names=self.feature_names,
            emissions=emissions,
            transitions=transitions,
            l2_lambda=self.l2_lambda,
            feature_fingerprint=self.feature_fingerprint,
        )


@dataclass(frozen=True, eq=False)
class CrfGradient:
    emissions: np.ndarray
    transitions: np.ndarray

    def flat(self) -> np.ndarray:
        return np.concatenate([self.emissions.ravel(), self.transitions.ravel()])


@dataclass(eq=False)
class _Batch:
    """Padded per-position scores for a batch of sequences"""

    matrix: sparse.csr_matrix
    lengths: np.ndarray
    batch_index: np.ndarray
    time_index: np.ndarray
    mask: np.ndarray = field(init=False)

    def __post_init__(self):
        width = int(self.lengths.max())
        self.mask = np.arange(width)[None, :] < self.lengths[:, None]

    @property
    def shape(self) -> Tuple[int, int]:
        return self.mask.shape

    def scores(self, emissions: np.ndarray) -> np.ndarray:
        flat = np.asarray(self.matrix @ emissions)
        padded = np.zeros(self.shape + (emissions.shape[1],))
        padded[self.batch_index, self.time_index] = flat
        return padded


def _compile(feature_sequences: Sequence[Sequence[FeatureVector]], feature_index: Dict[str, int]) -> _Batch:
    """Stack observation rows; features the model does not know are dropped"""
    data: List[float] = []
    columns: List[int] = []
    indptr: List[int] = [0]
    lengths: List[int] = []
    batch_index: List[int] = []
    time_index: List[int] = []

    for b, sequence in enumerate(feature_sequences):
        if len(sequence) == 0:
            raise DataError(f"sequence {b} is empty")
        lengths.append(len(sequence))
        for t, vector in enumerate(sequence):
            for name, value in vector.items():
                column = feature_index.get(name)
                if column is not None and value != 0.0:
                    columns.append(column)
                    data.append(value)
            indptr.append(len(columns))
            batch_index.append(b)
            time_index.append(t)

    matrix = sparse.csr_matrix(
        (np.asarray(data, dtype=float), np.asarray(columns, dtype=np.int64), np.asarray(indptr, dtype=np.int64)),
        shape=(len(batch_index), len(feature_index)),
    )
    return _Batch(
        matrix=matrix,
        lengths=np.asarray(lengths, dtype=np.int64),
        batch_index=np.asarray(batch_index, dtype=np.int64),
        time_index=np.asarray(time_index, dtype=np.int64),
    )


def _forward(scores: np.ndarray, mask: np.ndarray, transitions: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
    # alpha is carried unchanged past the end of shorter sequences
    alpha = np.empty_like(scores)
    alpha[:, 0] = scores[:, 0]
    for t in range(1, scores.shape[1]):
        step = logsumexp(alpha[:, t - 1, :, None] + transitions[None], axis=1) + scores[:, t]
        alpha[:, t] = np.where(mask[:, t, None], step, alpha[:, t - 1])
    return alpha, logsumexp(alpha[:, -1], axis=1)


def _backward(scores: np.ndarray, mask: np.ndarray, transitions: np.ndarray) -> np.ndarray:
    beta = np.zeros_like(scores)
    for t in range(scores.shape[1] - 2, -1, -1):
        ahead = scores[:, t + 1] + beta[:, t + 1]
        step = logsumexp(transitions[None] + ahead[:, None, :], axis=2)
        beta[:, t] = np.where(mask[:, t + 1, None], step, 0.0)
    return beta


def _expected_transitions(
    scores: np.ndarray, mask: np.ndarray, transitions: np.ndarray,
    alpha: np.ndarray, beta: np.ndarray, log_z: np.ndarray,
) -> np.ndarray:
    expected = np.zeros_like(transitions)
    for t in range(1, scores.shape[1]):
        log_pair = (
            alpha[:, t - 1, :, None]
            + transitions[None]
            + (scores[:, t] + beta[:, t])[:, None, :]
            - log_z[:, None, None]
        )
        expected += (np.exp(log_pair) * mask[:, t, None, None]).sum(axis=0)
    return expected


def _objective(
    batch: _Batch, gold: np.ndarray, emissions: np.ndarray, transitions: np.ndarray, l2_lambda: float,
) -> Tuple[float, np.ndarray, np.ndarray]:
    """Penalised log-likelihood of the batch and its gradient"""
    scores = batch.scores(emissions)
    mask = batch.mask
    alpha, log_z = _forward(scores, mask, transitions)
    beta = _backward(scores, mask, transitions)

    rows = np.arange(gold.shape[0])[:, None]
    steps = np.arange(gold.shape[1])[None, :]
    gold_emission = (scores[rows, steps, gold] * mask).sum()
    pair_mask = mask[:, 1:]
    gold_from = gold[:, :-1][pair_mask]
    gold_to = gold[:, 1:][pair_mask]
    gold_transition = transitions[gold_from, gold_to].sum()

    log_likelihood = float(gold_emission + gold_transition - log_z.sum())
    log_likelihood -= 0.5 * l2_lambda * (float(np.sum(emissions ** 2)) + float(np.sum(transitions ** 2)))

    marginals = np.exp(alpha + beta - log_z[:, None, None])
    flat_marginals = marginals[batch.batch_index, batch.time_index]
    flat_gold = np.zeros_like(flat_marginals)
    flat_gold[np.arange(flat_gold.shape[0]), gold[batch.batch_index, batch.time_index]] = 1.0
    grad_emissions = np.asarray(batch.matrix.T @ (flat_gold - flat_marginals)) - l2_lambda * emissions

    empirical = np.zeros_like(transitions)
    np.add.at(empirical, (gold_from, gold_to), 1.0)
    expected = _expected_transitions(scores, mask, transitions, alpha, beta, log_z)
    grad_transitions = empirical - expected - l2_lambda * transitions

    return log_likelihood, grad_emissions, grad_transitions


def _gold_matrix(label_sequences: Sequence[Sequence[int]], batch: _Batch, num_labels: int) -> np.ndarray:
    gold = np.zeros(batch.shape, dtype=np.int64)
    for b, labels in enumerate(label_sequences):
        if len(labels) != batch.lengths[b]:
            raise ShapeMismatch(f"sequence {b} has {batch.lengths[b]} positions but {len(labels)} labels")
        for t, label in enumerate(labels):
            if not 0 <= int(label) < num_labels:
                raise ShapeMismatch(f"label {label} at sequence {b} position {t} is outside the label set")
            gold[b, t] = int(label)
    return gold


def log_likelihood_and_gradient(model: CrfModel, sequence: LabeledSequence) -> Tuple[float, CrfGradient]:
    """
    L = score(gold path) - log Z - (lambda/2)*||w||^2 for one sequence.
    The gradient covers every emission weight in the model plus the
    transition matrix.
    """
    features, labels = sequence
    batch = _compile([features], model.feature_index)
    gold = _gold_matrix([labels], batch, model.num_labels)
    value, grad_emissions, grad_transitions = _objective(
        batch, gold, model.emissions, model.transitions, model.l2_lambda
    )
    return value, CrfGradient(emissions=grad_emissions, transitions=grad_transitions)


def log_partition(model: CrfModel, features: Sequence[FeatureVector]) -> float:
    batch = _compile([features], model.feature_index)
    _, log_z = _forward(batch.scores(model.emissions), batch.mask, model.transitions)
    return float(log_z[0])


def path_score(model: CrfModel, features: Sequence[FeatureVector], labels: Sequence[int]) -> float:
    """Unnormalised score of one label path"""
    batch = _compile([features], model.feature_index)
    scores = batch.scores(model.emissions)[0]
    total = sum(float(scores[t, label]) for t, label in enumerate(labels))
    total += sum(float(model.transitions[a, b]) for a, b in zip(labels, labels[1:]))
    return total


def batch_marginals(model: CrfModel, feature_sequences: Sequence[Sequence[FeatureVector]]) -> List[np.ndarray]:
    batch = _compile(feature_sequences, model.feature_index)
    scores = batch.scores(model.emissions)
    alpha, log_z = _forward(scores, batch.mask, model.transitions)
    beta = _backward(scores, batch.mask, model.transitions)
    marginals = np.exp(alpha + beta - log_z[:, None, None])
    return [marginals[b, : batch.lengths[b]] for b in range(len(batch.lengths))]


def marginals(model: CrfModel, features: Sequence[FeatureVector]) -> np.ndarray:
    """Per-position label distributions, shape (length, labels)"""
    return batch_marginals(model, [features])[0]


def batch_viterbi(model: CrfModel, feature_sequences: Sequence[Sequence[FeatureVector]]) -> List[List[int]]:
    batch = _compile(feature_sequences, model.feature_index)
    scores = batch.scores(model.emissions)
    mask = batch.mask
    transitions = model.transitions

    delta = scores[:, 0].copy()
    backpointers = np.zeros(scores.shape, dtype=np.int64)
    for t in range(1, scores.shape[1]):
        candidates = delta[:, :, None] + transitions[None]
        # argmax keeps the first maximum, i.e. the lowest label index
        best_previous = np.argmax(candidates, axis=1)
        best = np.take_along_axis(candidates, best_previous[:, None, :], axis=1)[:, 0, :]
        backpointers[:, t] = best_previous
        delta = np.where(mask[:, t, None], best + scores[:, t], delta)

    paths = []
    for b, length in enumerate(batch.lengths):
        label = int(np.argmax(delta[b]))
        path = [label]
        for t in range(int(length) - 1, 0, -1):
            label = int(backpointers[b, t, label])
            path.append(label)
        paths.append(path[::-1])
    return paths


def viterbi_decode(model: CrfModel, features: Sequence[FeatureVector]) -> List[int]:
    """Highest-scoring label path; ties go to the lower label index"""
    return batch_viterbi(model, [features])[0]


def train(
    sequences: Sequence[LabeledSequence],
    label_set: LabelSet,
    config: TrainConfig,
    feature_fingerprint: Optional[str] = None,
) -> CrfModel:
    """
    Maximise the penalised log-likelihood of all sequences at once with
    L-BFGS-B, starting from zero weights.
    """
    if not sequences:
        raise DataError("no training sequences")

    num_labels = len(label_set)
    for i, (features, labels) in enumerate(sequences):
        if len(features) == 0:
            raise DataError(f"training sequence {i} is empty")
        if len(features) != len(labels):
            raise DataError(f"training sequence {i} has {len(features)} positions but {len(labels)} labels")
        if any(not 0 <= int(label) < num_labels for label in labels):
            raise DataError(f"training sequence {i} has labels outside the label set")

    feature_names = tuple(sorted({name for features, _ in sequences for vector in features for name in vector}))
    feature_index = {name: i for i, name in enumerate(feature_names)}
    batch = _compile([features for features, _ in sequences], feature_index)
    gold = _gold_matrix([labels for _, labels in sequences], batch, num_labels)

    num_features = len(feature_names)
    split = num_features * num_labels
    logger.info(
        f"🔧 Training CRF: {len(sequences)} sequences, {int(batch.lengths.sum())} positions, "
        f"{num_features} features, {num_labels} labels, lambda={config.l2_lambda}"
    )

    def unpack(theta: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
        return theta[:split].reshape(num_features, num_labels), theta[split:].reshape(num_labels, num_labels)

    def negative_objective(theta: np.ndarray) -> Tuple[float, np.ndarray]:
        emissions, transitions = unpack(theta)
        value, grad_emissions, grad_transitions = _objective(batch, gold, emissions, transitions, config.l2_lambda)
        if not math.isfinite(value) or not (np.all(np.isfinite(grad_emissions)) and np.all(np.isfinite(grad_transitions))):
            raise NonFinite(f"objective diverged to {value}; check feature scaling")
        return -value, -np.concatenate([grad_emissions.ravel(), grad_transitions.ravel()])

    theta0 = np.zeros(split + num_labels * num_labels)
    initial = -negative_objective(theta0)[0]
    result = optimize.minimize(
        negative_objective,
        theta0,
        jac=True,
        method="L-BFGS-B",
        options={"maxiter": config.max_iterations, "gtol": config.convergence_tol, "ftol": 0.0},
    )
    final = -float(result.fun)
    if final < initial:
        raise NonFinite(f"objective decreased during training ({initial} -> {final})")

    logger.info(f"✅ CRF trained in {result.nit} iterations: objective {initial:.4f} -> {final:.4f} ({result.message})")
    emissions, transitions = unpack(np.asarray(result.x))
    return CrfModel(
        label_set=label_set,
        feature_names=feature_names,
        emissions=emissions.copy(),
        transitions=transitions.copy(),
        l2_lambda=config.l2_lambda,
        feature_fingerprint=feature_fingerprint,
    )


def model_to_dict(model: CrfModel) -> Dict[str, Any]:
    emissions: Dict[str, Dict[str, float]] = {}
    for row, name in enumerate(model.feature_names):
        weights = {str(label): float(w) for label, w in enumerate(model.emissions[row]) if w != 0.0}
        if weights:
            emissions[name] = weights
    return {
        "version": model.version,
        "labels": list(model.label_set.labels),
        "l2_lambda": model.l2_lambda,
        "feature_fingerprint": model.feature_fingerprint,
        "transitions": [[float(w) for w in row] for row in model.transitions],
        "emissions": emissions,
    }


def model_from_dict(data: Dict[str, Any]) -> CrfModel:
    version = data.get("version")
    if version != MODEL_FORMAT_VERSION:
        raise SchemaError(f"Unsupported model version {version!r} (expected {MODEL_FORMAT_VERSION})", path="version")
    try:
        label_set = LabelSet(labels=tuple(data["labels"]))
        feature_names = tuple(sorted(data["emissions"]))
        emissions = np.zeros((len(feature_names), len(label_set)))
        for row, name in enumerate(feature_names):
            for label, weight in data["emissions"][name].items():
                emissions[row, int(label)] = float(weight)
        transitions = np.asarray(data["transitions"], dtype=float)
        return CrfModel(
            label_set=label_set,
            feature_names=feature_names,
            emissions=emissions,
            transitions=transitions,
            l2_lambda=float(data["l2_lambda"]),
            feature_fingerprint=data.get("feature_fingerprint"),
        )
    except (KeyError, TypeError, ValueError, IndexError) as e:
        raise SchemaError(f"Malformed model file: {e}")


def save_model(model: CrfModel, path: Union[str, Path]) -> None:
    logger.debug(f"💾 Saving CRF model to: {path}")
    write_json(path, model_to_dict(model))


def load_model(path: Union[str, Path]) -> CrfModel:
    logger.debug(f"🔍 Loading CRF model from: {path}")
    return model_from_dict(read_json(path))
