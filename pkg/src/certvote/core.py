"""Core value types: certifiable-classifier outputs, prediction records, and vote tallies.

Everything here is an immutable value; all operations are pure functions and
safe to share across threads.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import cached_property
from typing import Iterator, NamedTuple, Sequence

import numpy as np

__all__ = [
    "VOTE_EPS",
    "WEIGHT_SUM_TOL",
    "NORM_L2",
    "NORM_LINF",
    "NORMS",
    "DataError",
    "DimensionError",
    "GuardError",
    "Label",
    "CertOutput",
    "PredictionRecord",
    "RecordSet",
    "WeightVector",
    "VoteTally",
    "tally",
    "argmax_label",
    "infer_num_classes",
]

# Slack added to the strict vote inequalities of the certificate condition.
# The condition is strict ">" by definition; any nonzero slack silently
# changes what "certified" means, so this stays 0.0 and exists only as a
# single, documented point of change.
VOTE_EPS = 0.0

# Tolerance on "weights sum to one".
WEIGHT_SUM_TOL = 1e-9

NORM_L2 = "l2"
NORM_LINF = "linf"
NORMS = (NORM_L2, NORM_LINF)

Label = int  # class index in {0, ..., m-1}


class DataError(ValueError):
    """Malformed domain data: bad labels, certificate bits, arities, or files."""


class DimensionError(DataError):
    """Lengths of outputs, weights, or records do not line up."""


class GuardError(DataError):
    """A resource or resolution precondition was violated."""


class CertOutput(NamedTuple):
    """One constituent's answer at one input: a predicted label and a certificate bit.

    ``cert == 1`` means the constituent's certifier claims the prediction is
    locally robust at this input; ``cert == 0`` means it makes no claim.
    """

    label: int
    cert: int


def check_cert_output(out: CertOutput, m: int | None = None, where: str = "output") -> CertOutput:
    """Validate label/cert ranges; returns the (possibly coerced) CertOutput."""
    label, cert = out
    label = int(label)
    cert = int(cert)
    if cert not in (0, 1):
        raise DataError(f"{where}: cert must be 0 or 1, got {cert}")
    if label < 0 or (m is not None and label >= m):
        bound = f"[0, {m})" if m is not None else ">= 0"
        raise DataError(f"{where}: label {label} outside {bound}")
    return CertOutput(label, cert)


def infer_num_classes(labels: Sequence[int] | np.ndarray, minimum: int = 2) -> int:
    """Smallest class count covering every observed label (at least ``minimum``).

    Votes for absent classes are zero, so results of voting, certificates and
    margins are unchanged by enlarging the class set; inference is therefore
    safe whenever the true class count is unavailable.
    """
    arr = np.asarray(labels)
    if arr.size == 0:
        return minimum
    return max(int(arr.max()) + 1, minimum)


@dataclass(frozen=True)
class WeightVector:
    """Nonnegative constituent weights on the probability simplex."""

    values: tuple[float, ...]

    def __post_init__(self) -> None:
        if len(self.values) == 0:
            raise DimensionError("weight vector must be non-empty")
        object.__setattr__(self, "values", tuple(float(v) for v in self.values))
        for i, v in enumerate(self.values):
            if not math.isfinite(v) or v < -WEIGHT_SUM_TOL or v > 1.0 + WEIGHT_SUM_TOL:
                raise DataError(f"weight[{i}] = {v} outside [0, 1]")
        total = math.fsum(self.values)
        if abs(total - 1.0) > WEIGHT_SUM_TOL:
            raise DataError(f"weights sum to {total}, expected 1 within {WEIGHT_SUM_TOL}")

    @classmethod
    def normalized(cls, raw: Sequence[float] | np.ndarray) -> "WeightVector":
        """Normalize any nonnegative vector with positive sum onto the simplex."""
        arr = np.asarray(raw, dtype=float)
        if arr.ndim != 1 or arr.size == 0:
            raise DimensionError("weights must be a non-empty 1-d sequence")
        if not np.all(np.isfinite(arr)) or np.any(arr < 0):
            raise DataError("weights must be finite and nonnegative")
        total = float(arr.sum())
        if total <= 0:
            raise DataError("weights must have positive sum")
        return cls(tuple(arr / total))

    @classmethod
    def uniform(cls, n: int) -> "WeightVector":
        if n < 1:
            raise DimensionError("need at least one constituent")
        return cls(tuple([1.0 / n] * n))

    @classmethod
    def one_hot(cls, index: int, n: int) -> "WeightVector":
        if not 0 <= index < n:
            raise DimensionError(f"one-hot index {index} outside [0, {n})")
        values = [0.0] * n
        values[index] = 1.0
        return cls(tuple(values))

    def as_array(self) -> np.ndarray:
        return np.asarray(self.values, dtype=float)

    def __len__(self) -> int:
        return len(self.values)

    def __iter__(self) -> Iterator[float]:
        return iter(self.values)

    def __getitem__(self, i: int) -> float:
        return self.values[i]


@dataclass(frozen=True)
class PredictionRecord:
    """One input's identity, ground-truth label, and all constituent answers."""

    input_id: str
    true_label: int
    outputs: tuple[CertOutput, ...]

    def __post_init__(self) -> None:
        if len(self.outputs) == 0:
            raise DimensionError(f"record {self.input_id!r}: outputs must be non-empty")
        object.__setattr__(
            self,
            "outputs",
            tuple(
                check_cert_output(o, where=f"record {self.input_id!r} outputs[{i}]")
                for i, o in enumerate(self.outputs)
            ),
        )


@dataclass(frozen=True)
class RecordSet:
    """A dataset of prediction records with shared class count and metadata.

    ``epsilon`` and ``norm`` describe the robustness radius the constituent
    certificates refer to; they are carried as metadata only and never
    inspected by any ensembling rule.
    """

    records: tuple[PredictionRecord, ...]
    m: int
    n_models: int
    epsilon: float
    norm: str
    model_names: tuple[str, ...] | None = None

    def __post_init__(self) -> None:
        if self.m < 2:
            raise DataError(f"class count m must be >= 2, got {self.m}")
        if self.n_models < 1:
            raise DataError(f"constituent count must be >= 1, got {self.n_models}")
        if self.norm not in NORMS:
            raise DataError(f"norm must be one of {NORMS}, got {self.norm!r}")
        if self.model_names is not None and len(self.model_names) != self.n_models:
            raise DimensionError(
                f"{len(self.model_names)} model names for {self.n_models} constituents"
            )
        object.__setattr__(self, "records", tuple(self.records))
        for rec in self.records:
            if len(rec.outputs) != self.n_models:
                raise DimensionError(
                    f"record {rec.input_id!r} has {len(rec.outputs)} outputs, expected {self.n_models}"
                )
            if not 0 <= rec.true_label < self.m:
                raise DataError(
                    f"record {rec.input_id!r}: true_label {rec.true_label} outside [0, {self.m})"
                )
            for i, out in enumerate(rec.outputs):
                if out.label >= self.m:
                    raise DataError(
                        f"record {rec.input_id!r} outputs[{i}]: label {out.label} outside [0, {self.m})"
                    )

    def __len__(self) -> int:
        return len(self.records)

    def __iter__(self) -> Iterator[PredictionRecord]:
        return iter(self.records)

    @cached_property
    def labels(self) -> np.ndarray:
        """(k, N) array of predicted labels."""
        arr = np.array([[o.label for o in r.outputs] for r in self.records], dtype=np.int64)
        return arr.reshape(len(self.records), self.n_models)

    @cached_property
    def certs(self) -> np.ndarray:
        """(k, N) array of certificate bits."""
        arr = np.array([[o.cert for o in r.outputs] for r in self.records], dtype=np.int64)
        return arr.reshape(len(self.records), self.n_models)

    @cached_property
    def true_labels(self) -> np.ndarray:
        """(k,) array of ground-truth labels."""
        return np.array([r.true_label for r in self.records], dtype=np.int64)

    @classmethod
    def from_arrays(
        cls,
        labels: np.ndarray,
        certs: np.ndarray,
        true_labels: np.ndarray,
        m: int,
        epsilon: float = 0.0,
        norm: str = NORM_L2,
        input_ids: Sequence[str] | None = None,
        model_names: Sequence[str] | None = None,
    ) -> "RecordSet":
        labels = np.asarray(labels)
        certs = np.asarray(certs)
        true_labels = np.asarray(true_labels)
        if labels.shape != certs.shape or labels.ndim != 2 or len(true_labels) != len(labels):
            raise DimensionError("labels/certs must be (k, N) with k true labels")
        k = labels.shape[0]
        ids = [str(i) for i in range(k)] if input_ids is None else [str(s) for s in input_ids]
        records = tuple(
            PredictionRecord(
                ids[i],
                int(true_labels[i]),
                tuple(CertOutput(int(labels[i, j]), int(certs[i, j])) for j in range(labels.shape[1])),
            )
            for i in range(k)
        )
        names = tuple(model_names) if model_names is not None else None
        return cls(records, int(m), int(labels.shape[1]), float(epsilon), norm, names)


@dataclass(frozen=True)
class VoteTally:
    """Per-(label, certificate) vote mass for one input.

    ``votes[j, c]`` is the total weight of constituents that answered exactly
    ``(j, c)``. Rows cover the full class set, so absent classes read as 0.
    """

    votes: np.ndarray  # shape (m, 2), read-only

    def __post_init__(self) -> None:
        arr = np.asarray(self.votes, dtype=float)
        if arr.ndim != 2 or arr.shape[1] != 2 or arr.shape[0] < 1:
            raise DimensionError(f"tally must have shape (m, 2), got {arr.shape}")
        if np.any(arr < -WEIGHT_SUM_TOL):
            raise DataError("tally entries must be nonnegative")
        arr = arr.copy()
        arr.setflags(write=False)
        object.__setattr__(self, "votes", arr)

    @property
    def m(self) -> int:
        return self.votes.shape[0]

    def votes_for(self, label: int, cert: int) -> float:
        return float(self.votes[label, cert])

    def label_votes(self, label: int | None = None) -> float | np.ndarray:
        """Votes per class regardless of certificate; all classes if label is None."""
        per_label = self.votes.sum(axis=1)
        return per_label if label is None else float(per_label[label])

    def uncertified_total(self) -> float:
        """Total weight of constituents whose certificate bit is 0."""
        return float(self.votes[:, 0].sum())

    def certified(self) -> np.ndarray:
        """(m,) certified vote mass per class."""
        return self.votes[:, 1].copy()

    def total(self) -> float:
        return float(self.votes.sum())


def tally(
    outputs: Sequence[CertOutput],
    weights: WeightVector | Sequence[float],
    m: int | None = None,
) -> VoteTally:
    """Accumulate constituent answers into per-(label, cert) vote mass.

    ``m`` fixes the class set; when omitted it is inferred as the smallest
    count covering the observed labels (which leaves all downstream results
    unchanged, see :func:`infer_num_classes`).
    """
    w = weights.as_array() if isinstance(weights, WeightVector) else WeightVector.normalized(weights).as_array()
    if len(outputs) != len(w):
        raise DimensionError(f"{len(outputs)} outputs vs {len(w)} weights")
    labels = np.array([o.label for o in outputs], dtype=np.int64)
    certs = np.array([o.cert for o in outputs], dtype=np.int64)
    if m is None:
        m = infer_num_classes(labels)
    if labels.size and labels.max() >= m:
        raise DataError(f"label {int(labels.max())} outside [0, {m})")
    votes = np.zeros((m, 2), dtype=float)
    np.add.at(votes, (labels, certs), w)
    return VoteTally(votes)


def argmax_label(t: VoteTally) -> int:
    """Label with the most votes regardless of certificate; ties go to the lowest index."""
    return int(np.argmax(t.label_votes()))
