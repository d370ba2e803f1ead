"""Input validation and conversion helpers shared by estimators and functions.

The ensembling API accepts constituent answers in two equivalent forms:

* a :class:`~certvote.core.RecordSet`, or
* a ``(k, N, 2)`` integer array whose last axis is ``(label, cert)``.

These helpers normalize either form to arrays and enforce ranges once, so the
math code can assume clean inputs.
"""

from __future__ import annotations

from typing import Sequence

import numpy as np

from .core import (
    CertOutput,
    DataError,
    DimensionError,
    RecordSet,
    infer_num_classes,
)

__all__ = [
    "as_label_cert_arrays",
    "check_outputs_row",
    "check_num_classes",
]


def check_num_classes(m: int | None, labels: np.ndarray) -> int:
    """Resolve the class count: validate a given m, or infer one from labels."""
    if m is None:
        return infer_num_classes(labels)
    m = int(m)
    if m < 2:
        raise DataError(f"class count m must be >= 2, got {m}")
    if labels.size and int(labels.max()) >= m:
        raise DataError(f"label {int(labels.max())} outside [0, {m})")
    return m


def as_label_cert_arrays(
    X: RecordSet | np.ndarray | Sequence[Sequence[CertOutput]],
    m: int | None = None,
) -> tuple[np.ndarray, np.ndarray, int]:
    """Convert any accepted answers container to ``(labels, certs, m)`` arrays.

    Returns int64 arrays of shape ``(k, N)`` and the resolved class count.
    """
    if isinstance(X, RecordSet):
        if m is not None and int(m) != X.m:
            raise DataError(f"requested m={m} but record set has m={X.m}")
        return X.labels, X.certs, X.m

    arr = np.asarray(X)
    if arr.ndim != 3 or arr.shape[2] != 2:
        raise DimensionError(
            f"expected a RecordSet or an array of shape (k, N, 2), got shape {arr.shape}"
        )
    if arr.size and not np.issubdtype(arr.dtype, np.number):
        raise DataError(f"answers array must be numeric, got dtype {arr.dtype}")
    arr = arr.astype(np.int64)
    labels = arr[:, :, 0]
    certs = arr[:, :, 1]
    if labels.size and labels.min() < 0:
        raise DataError(f"label {int(labels.min())} is negative")
    if certs.size and (certs.min() < 0 or certs.max() > 1):
        raise DataError("cert bits must be 0 or 1")
    if arr.shape[1] < 1:
        raise DimensionError("need at least one constituent (axis 1 is empty)")
    return labels, certs, check_num_classes(m, labels)


def check_outputs_row(
    outputs: Sequence[CertOutput], n_models: int, where: str = "outputs"
) -> tuple[CertOutput, ...]:
    """Validate a single input's answers against the expected constituent count."""
    row = tuple(CertOutput(int(o[0]), int(o[1])) for o in outputs)
    if len(row) != n_models:
        raise DimensionError(f"{where}: {len(row)} answers for {n_models} constituents")
    for i, o in enumerate(row):
        if o.cert not in (0, 1):
            raise DataError(f"{where}[{i}]: cert must be 0 or 1, got {o.cert}")
        if o.label < 0:
            raise DataError(f"{where}[{i}]: label {o.label} is negative")
    return row
