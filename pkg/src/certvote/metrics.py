"""Certified-robust-accuracy evaluation and constituent-overlap diagnostics.

Certified robust accuracy (CRA) counts an input only when the system answers
with the true label AND raises its certificate; plain accuracy ignores the
certificate, so CRA <= accuracy always.
"""

from __future__ import annotations

from dataclasses import dataclass
from io import StringIO
from typing import Sequence

import numpy as np

from .core import CertOutput, DataError, DimensionError, RecordSet, WeightVector
from .ensemble import (
    CascadeEnsemble,
    PermutationCascadeEnsemble,
    UniformVotingEnsemble,
    WeightedVotingEnsemble,
)

__all__ = [
    "cra",
    "accuracy",
    "EvalRow",
    "EvalReport",
    "evaluate_all",
    "OverlapStats",
    "overlap",
]


def _pred_arrays(predictions: Sequence[CertOutput] | np.ndarray, record_set: RecordSet) -> np.ndarray:
    if len(record_set) == 0:
        raise DataError("record set is empty")
    arr = np.asarray([[p[0], p[1]] for p in predictions], dtype=np.int64)
    if arr.shape != (len(record_set), 2):
        raise DimensionError(f"{arr.shape[0]} predictions for {len(record_set)} records")
    return arr


def cra(predictions: Sequence[CertOutput] | np.ndarray, record_set: RecordSet) -> float:
    """Fraction of records answered exactly (true label, certified)."""
    arr = _pred_arrays(predictions, record_set)
    ok = (arr[:, 0] == record_set.true_labels) & (arr[:, 1] == 1)
    return float(np.mean(ok))


def accuracy(predictions: Sequence[CertOutput] | np.ndarray, record_set: RecordSet) -> float:
    """Fraction of records with the true label, certificate ignored."""
    arr = _pred_arrays(predictions, record_set)
    return float(np.mean(arr[:, 0] == record_set.true_labels))


@dataclass(frozen=True)
class EvalRow:
    system: str
    cra: float
    acc: float
    support: int


@dataclass(frozen=True)
class EvalReport:
    """One row per system: constituents, best single, and each ensembler."""

    rows: tuple[EvalRow, ...]
    weights: WeightVector  # the vector behind the weighted-voting row
    best_single_index: int

    def row(self, system: str) -> EvalRow:
        for r in self.rows:
            if r.system == system:
                return r
        raise KeyError(system)

    def format_table(self) -> str:
        width = max(len(r.system) for r in self.rows)
        lines = [f"{'system':<{width}}  {'CRA(%)':>8}  {'Acc(%)':>8}  {'k':>6}"]
        for r in self.rows:
            lines.append(
                f"{r.system:<{width}}  {100 * r.cra:8.2f}  {100 * r.acc:8.2f}  {r.support:6d}"
            )
        return "\n".join(lines)

    def to_csv(self) -> str:
        buf = StringIO()
        buf.write("system,cra_pct,acc_pct,support\n")
        for r in self.rows:
            buf.write(f"{r.system},{100 * r.cra:.2f},{100 * r.acc:.2f},{r.support}\n")
        return buf.getvalue()


def _constituent_outputs(record_set: RecordSet, i: int) -> np.ndarray:
    return np.stack([record_set.labels[:, i], record_set.certs[:, i]], axis=1)


def evaluate_all(
    record_set: RecordSet,
    weights: WeightVector | None = None,
    single_model: str = "best",
    prefix_bound: str = "literal",
) -> EvalReport:
    """Score every constituent and every ensembler on one record set.

    When ``weights`` is None they are learned on these same records with
    default settings (so the weighted row is then trained on its own
    evaluation data). The permutation-cascade row appears only for an odd
    constituent count of at least 3; with one constituent every ensembler
    reduces to that constituent. ``single_model`` picks the baseline row:
    highest-CRA constituent ("best", ties to the lowest index) or
    constituent 0 ("first").
    """
    if len(record_set) == 0:
        raise DataError("record set is empty")
    if single_model not in ("best", "first"):
        raise DataError(f"single_model must be 'best' or 'first', got {single_model!r}")
    k = len(record_set)
    n = record_set.n_models
    names = record_set.model_names or tuple(f"model_{i}" for i in range(n))

    rows: list[EvalRow] = []
    per_model_cra: list[float] = []
    for i in range(n):
        out = _constituent_outputs(record_set, i)
        c, a = cra(out, record_set), accuracy(out, record_set)
        per_model_cra.append(c)
        rows.append(EvalRow(names[i], c, a, k))

    best_i = 0 if single_model == "first" else int(np.argmax(per_model_cra))
    rows.append(EvalRow(f"best-single[{names[best_i]}]", rows[best_i].cra, rows[best_i].acc, k))

    casc = CascadeEnsemble().fit(record_set).ensemble_outputs(record_set)
    rows.append(EvalRow("cascade", cra(casc, record_set), accuracy(casc, record_set), k))

    uni = UniformVotingEnsemble().fit(record_set).ensemble_outputs(record_set)
    rows.append(EvalRow("uniform-voting", cra(uni, record_set), accuracy(uni, record_set), k))

    west = WeightedVotingEnsemble(weights=weights).fit(record_set)
    wout = west.ensemble_outputs(record_set)
    rows.append(EvalRow("weighted-voting", cra(wout, record_set), accuracy(wout, record_set), k))

    if n >= 3 and n % 2 == 1:
        perm = (
            PermutationCascadeEnsemble(prefix_bound=prefix_bound)
            .fit(record_set)
            .ensemble_outputs(record_set)
        )
        rows.append(
            EvalRow("permutation-cascade", cra(perm, record_set), accuracy(perm, record_set), k)
        )

    return EvalReport(tuple(rows), west.weights_, best_i)


@dataclass(frozen=True)
class OverlapStats:
    """How much the constituents' certified-correct sets coincide.

    ``pairwise[i, j]`` is the fraction of records where constituents i and j
    are BOTH certified-correct; the diagonal holds each constituent's own
    certified-correct fraction.
    """

    pairwise: np.ndarray  # (N, N) fractions
    certified_correct_counts: tuple[int, ...]
    support: int

    def __post_init__(self) -> None:
        arr = np.asarray(self.pairwise, dtype=float).copy()
        arr.setflags(write=False)
        object.__setattr__(self, "pairwise", arr)


def overlap(record_set: RecordSet) -> OverlapStats:
    """Pairwise certified-correct overlap fractions across constituents."""
    if len(record_set) == 0:
        raise DataError("record set is empty")
    good = (record_set.labels == record_set.true_labels[:, None]) & (record_set.certs == 1)
    k = len(record_set)
    pairwise = (good.astype(float).T @ good.astype(float)) / k
    counts = tuple(int(c) for c in good.sum(axis=0))
    return OverlapStats(pairwise, counts, k)
