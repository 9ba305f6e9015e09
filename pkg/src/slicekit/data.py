"""Core data model: embeddings, labeled splits, settings, and slice scores.

All types validate their invariants at construction and are immutable
afterwards, so they can be shared read-only across workers.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Any, Mapping

import numpy as np

from .errors import (
    ArgmaxInconsistent,
    LabelOutOfRange,
    NonFiniteValue,
    RowCountMismatch,
)

SLICE_TYPES = ("rare", "correlation", "noisy_label")
MODEL_KINDS = ("trained_ingested", "synthetic")

# Legal slice-strength ranges per slice type (inclusive endpoints; the
# benchmark grids use the endpoints themselves).
ALPHA_RANGES: Mapping[str, tuple[float, float]] = {
    "rare": (0.01, 0.1),
    "correlation": (0.2, 0.8),
    "noisy_label": (0.01, 0.3),
}


def _frozen(arr: np.ndarray) -> np.ndarray:
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True)
class EmbeddingMatrix:
    """Dense n-by-d matrix of input or phrase embeddings, row i = example i."""

    values: np.ndarray

    def __post_init__(self) -> None:
        values = np.ascontiguousarray(self.values, dtype=np.float64)
        if values.ndim != 2:
            raise ValueError(f"embeddings must be 2-d, got shape {values.shape}")
        if values.shape[0] < 1 or values.shape[1] < 1:
            raise ValueError(f"embeddings need n >= 1 and d >= 1, got {values.shape}")
        if not np.all(np.isfinite(values)):
            raise NonFiniteValue("embedding matrix contains NaN or Inf")
        object.__setattr__(self, "values", _frozen(values))

    @property
    def n(self) -> int:
        return self.values.shape[0]

    @property
    def d(self) -> int:
        return self.values.shape[1]


@dataclass(frozen=True)
class LabeledSplit:
    """Per-example labels, model predictions, and ground-truth slice columns."""

    labels: np.ndarray
    predictions: np.ndarray
    slices: np.ndarray
    slice_names: tuple[str, ...]
    num_classes: int
    prediction_probs: np.ndarray | None = None

    def __post_init__(self) -> None:
        labels = np.ascontiguousarray(self.labels, dtype=np.int64)
        preds = np.ascontiguousarray(self.predictions, dtype=np.int64)
        slices = np.ascontiguousarray(self.slices, dtype=np.int64)
        names = tuple(str(s) for s in self.slice_names)
        c = int(self.num_classes)

        if labels.ndim != 1:
            raise ValueError("labels must be 1-d")
        n = labels.shape[0]
        if n < 1:
            raise ValueError("split must contain at least one example")
        if preds.shape != (n,):
            raise RowCountMismatch(
                f"predictions have {preds.shape[0]} rows, labels have {n}"
            )
        if slices.ndim != 2 or slices.shape[0] != n:
            raise RowCountMismatch(
                f"slice matrix shape {slices.shape} does not match n={n}"
            )
        if slices.shape[1] < 1:
            raise ValueError("at least one slice column is required")
        if len(names) != slices.shape[1]:
            raise ValueError(
                f"{len(names)} slice names for {slices.shape[1]} slice columns"
            )
        if c < 2:
            raise ValueError("num_classes must be >= 2")
        if labels.min() < 0 or labels.max() >= c:
            raise LabelOutOfRange(f"labels outside [0, {c - 1}]")
        if preds.min() < 0 or preds.max() >= c:
            raise LabelOutOfRange(f"predictions outside [0, {c - 1}]")
        if not np.isin(slices, (0, 1)).all():
            raise ValueError("slice memberships must be 0 or 1")

        probs = self.prediction_probs
        if probs is not None:
            probs = np.ascontiguousarray(probs, dtype=np.float64)
            if probs.shape != (n, c):
                raise RowCountMismatch(
                    f"probability matrix shape {probs.shape}, expected {(n, c)}"
                )
            if not np.all(np.isfinite(probs)):
                raise NonFiniteValue("prediction probabilities contain NaN or Inf")
            if np.abs(probs.sum(axis=1) - 1.0).max() > 1e-6:
                raise ValueError("probability rows must sum to 1 within 1e-6")
            # np.argmax breaks ties toward the lower class index, as required.
            if not np.array_equal(np.argmax(probs, axis=1), preds):
                raise ArgmaxInconsistent(
                    "hard predictions disagree with argmax of probabilities"
                )
            object.__setattr__(self, "prediction_probs", _frozen(probs))

        object.__setattr__(self, "labels", _frozen(labels))
        object.__setattr__(self, "predictions", _frozen(preds))
        object.__setattr__(self, "slices", _frozen(slices))
        object.__setattr__(self, "slice_names", names)
        object.__setattr__(self, "num_classes", c)

    @property
    def n(self) -> int:
        return self.labels.shape[0]

    @property
    def num_slices(self) -> int:
        return self.slices.shape[1]


def check_pair(emb: EmbeddingMatrix, split: LabeledSplit) -> None:
    """Raise RowCountMismatch unless emb and split describe the same examples."""
    if emb.n != split.n:
        raise RowCountMismatch(f"embeddings have {emb.n} rows, split has {split.n}")


@dataclass(frozen=True)
class SliceSetting:
    """One benchmark instance: validation and test splits plus slice metadata."""

    valid_emb: EmbeddingMatrix
    valid_split: LabeledSplit
    test_emb: EmbeddingMatrix
    test_split: LabeledSplit
    slice_type: str
    alpha: float
    model_kind: str
    seed: int
    provenance: dict[str, Any] = field(default_factory=dict)

    def __post_init__(self) -> None:
        if self.slice_type not in SLICE_TYPES:
            raise ValueError(f"unknown slice type {self.slice_type!r}")
        if self.model_kind not in MODEL_KINDS:
            raise ValueError(f"unknown model kind {self.model_kind!r}")
        check_pair(self.valid_emb, self.valid_split)
        check_pair(self.test_emb, self.test_split)
        if self.valid_emb.d != self.test_emb.d:
            raise RowCountMismatch(
                f"valid d={self.valid_emb.d} but test d={self.test_emb.d}"
            )
        if self.valid_split.num_classes != self.test_split.num_classes:
            raise ValueError("valid and test disagree on the number of classes")
        if self.valid_split.slice_names != self.test_split.slice_names:
            raise ValueError("valid and test disagree on slice names")
        if not np.isfinite(self.alpha) or not -1.0 < float(self.alpha) < 1.0:
            raise ValueError(f"alpha {self.alpha} outside (-1, 1)")


def alpha_in_range(slice_type: str, alpha: float) -> bool:
    """Whether alpha lies in the benchmark-legal range for the slice type."""
    lo, hi = ALPHA_RANGES[slice_type]
    return lo <= float(alpha) <= hi


@dataclass(frozen=True)
class SliceScores:
    """n-by-k_hat membership scores emitted by a slice discovery method."""

    scores: np.ndarray
    method: str
    slice_descriptions: tuple[tuple[str, ...], ...] | None = None

    def __post_init__(self) -> None:
        scores = np.ascontiguousarray(self.scores, dtype=np.float64)
        if scores.ndim != 2:
            raise ValueError("scores must be 2-d")
        if scores.shape[0] < 1 or scores.shape[1] < 1:
            raise ValueError(f"scores need n >= 1 and k_hat >= 1, got {scores.shape}")
        if not np.all(np.isfinite(scores)):
            raise NonFiniteValue("slice scores contain NaN or Inf")
        if scores.min() < 0.0 or scores.max() > 1.0:
            raise ValueError("slice scores must lie in [0, 1]")
        if self.slice_descriptions is not None:
            descriptions = tuple(tuple(str(p) for p in d) for d in self.slice_descriptions)
            if len(descriptions) != scores.shape[1]:
                raise ValueError("one description list per slice column is required")
            object.__setattr__(self, "slice_descriptions", descriptions)
        object.__setattr__(self, "scores", _frozen(scores))
        object.__setattr__(self, "method", str(self.method))

    @property
    def n(self) -> int:
        return self.scores.shape[0]

    @property
    def k_hat(self) -> int:
        return self.scores.shape[1]
