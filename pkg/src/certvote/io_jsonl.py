"""Line-delimited record files, weight files, and learner traces.

A records file is one JSON header line followed by one JSON object per
input, so certified-model toolchains can stream-emit them:

    {"N": 3, "epsilon": 0.1, "m": 10, "norm": "linf", "version": 1}
    {"input_id": "0", "outputs": [{"cert": 1, "label": 3}, ...], "true_label": 3}

Keys are written sorted and floats in shortest round-trip form, so a given
data set always serializes to identical bytes. Loaders fail with the file
position (line number, field path, offending input_id) rather than a bare
traceback.
"""

from __future__ import annotations

import json
from typing import Sequence

import numpy as np

from .core import (
    NORMS,
    CertOutput,
    DataError,
    PredictionRecord,
    RecordSet,
    WeightVector,
)

__all__ = [
    "RecordFormatError",
    "load_records",
    "save_records",
    "load_weights",
    "save_weights",
    "save_predictions",
    "save_trace_csv",
]

FILE_VERSION = 1


class RecordFormatError(DataError):
    """A records/weights file failed to parse or violated its schema."""


def _dump(obj) -> str:
    return json.dumps(obj, sort_keys=True, separators=(", ", ": "))


def save_records(record_set: RecordSet, path: str) -> None:
    header = {
        "version": FILE_VERSION,
        "N": record_set.n_models,
        "m": record_set.m,
        "epsilon": record_set.epsilon,
        "norm": record_set.norm,
    }
    if record_set.model_names is not None:
        header["model_names"] = list(record_set.model_names)
    with open(path, "w") as fh:
        fh.write(_dump(header) + "\n")
        for rec in record_set:
            fh.write(
                _dump(
                    {
                        "input_id": rec.input_id,
                        "true_label": rec.true_label,
                        "outputs": [{"label": o.label, "cert": o.cert} for o in rec.outputs],
                    }
                )
                + "\n"
            )


def _req(obj: dict, key: str, where: str):
    if key not in obj:
        raise RecordFormatError(f"{where}: missing field {key!r}")
    return obj[key]


def _int_field(obj: dict, key: str, where: str) -> int:
    v = _req(obj, key, where)
    if isinstance(v, bool) or not isinstance(v, int):
        raise RecordFormatError(f"{where}: field {key!r} must be an integer, got {v!r}")
    return v


def load_records(path: str) -> RecordSet:
    """Load a records file; errors carry line numbers and field paths."""
    with open(path) as fh:
        lines = fh.read().splitlines()
    if not lines or not lines[0].strip():
        raise RecordFormatError(f"{path}: empty file")

    where = f"{path}:1: header"
    try:
        header = json.loads(lines[0])
    except json.JSONDecodeError as exc:
        raise RecordFormatError(f"{where}: invalid JSON ({exc})") from None
    if not isinstance(header, dict):
        raise RecordFormatError(f"{where}: expected an object")
    version = _int_field(header, "version", where)
    if version != FILE_VERSION:
        raise RecordFormatError(f"{where}: unsupported version {version}")
    n = _int_field(header, "N", where)
    m = _int_field(header, "m", where)
    epsilon = _req(header, "epsilon", where)
    if isinstance(epsilon, bool) or not isinstance(epsilon, (int, float)):
        raise RecordFormatError(f"{where}: field 'epsilon' must be a number, got {epsilon!r}")
    norm = _req(header, "norm", where)
    if norm not in NORMS:
        raise RecordFormatError(f"{where}: field 'norm' must be one of {NORMS}, got {norm!r}")
    if n < 1 or m < 2:
        raise RecordFormatError(f"{where}: need N >= 1 and m >= 2, got N={n}, m={m}")
    model_names = header.get("model_names")
    if model_names is not None:
        if not isinstance(model_names, list) or len(model_names) != n:
            raise RecordFormatError(f"{where}: 'model_names' must list {n} names")
        model_names = tuple(str(s) for s in model_names)

    records: list[PredictionRecord] = []
    for lineno, line in enumerate(lines[1:], start=2):
        if not line.strip():
            raise RecordFormatError(f"{path}:{lineno}: blank line inside records")
        where = f"{path}:{lineno}"
        try:
            obj = json.loads(line)
        except json.JSONDecodeError as exc:
            raise RecordFormatError(f"{where}: invalid JSON ({exc})") from None
        if not isinstance(obj, dict):
            raise RecordFormatError(f"{where}: expected an object")
        raw_id = _req(obj, "input_id", where)
        if not isinstance(raw_id, (str, int)) or isinstance(raw_id, bool):
            raise RecordFormatError(f"{where}: 'input_id' must be a string or integer")
        input_id = str(raw_id)
        where = f"{path}:{lineno}: record {input_id!r}"
        true_label = _int_field(obj, "true_label", where)
        if not 0 <= true_label < m:
            raise RecordFormatError(f"{where}: true_label {true_label} outside [0, {m})")
        outs_raw = _req(obj, "outputs", where)
        if not isinstance(outs_raw, list):
            raise RecordFormatError(f"{where}: 'outputs' must be a list")
        if len(outs_raw) != n:
            raise RecordFormatError(f"{where}: outputs has {len(outs_raw)} entries, header says N={n}")
        outputs = []
        for i, o in enumerate(outs_raw):
            owhere = f"{where}: outputs[{i}]"
            if not isinstance(o, dict):
                raise RecordFormatError(f"{owhere}: expected an object")
            label = _int_field(o, "label", owhere)
            cert = _int_field(o, "cert", owhere)
            if not 0 <= label < m:
                raise RecordFormatError(f"{owhere}.label: {label} outside [0, {m})")
            if cert not in (0, 1):
                raise RecordFormatError(f"{owhere}.cert: must be 0 or 1, got {cert}")
            outputs.append(CertOutput(label, cert))
        records.append(PredictionRecord(input_id, true_label, tuple(outputs)))

    if not records:
        raise RecordFormatError(f"{path}: header but no records")
    return RecordSet(tuple(records), m, n, float(epsilon), norm, model_names)


def save_weights(weights: WeightVector, path: str, extra: dict | None = None) -> None:
    obj = {"version": FILE_VERSION, "N": len(weights), "weights": list(weights.values)}
    if extra:
        overlap = set(obj) & set(extra)
        if overlap:
            raise DataError(f"extra keys collide with schema: {sorted(overlap)}")
        obj.update(extra)
    with open(path, "w") as fh:
        fh.write(_dump(obj) + "\n")


def load_weights(path: str) -> WeightVector:
    with open(path) as fh:
        text = fh.read()
    where = f"{path}: weights"
    try:
        obj = json.loads(text)
    except json.JSONDecodeError as exc:
        raise RecordFormatError(f"{where}: invalid JSON ({exc})") from None
    if not isinstance(obj, dict):
        raise RecordFormatError(f"{where}: expected an object")
    version = _int_field(obj, "version", where)
    if version != FILE_VERSION:
        raise RecordFormatError(f"{where}: unsupported version {version}")
    n = _int_field(obj, "N", where)
    vals = _req(obj, "weights", where)
    if not isinstance(vals, list) or len(vals) != n:
        raise RecordFormatError(f"{where}: 'weights' must list {n} numbers")
    for i, v in enumerate(vals):
        if isinstance(v, bool) or not isinstance(v, (int, float)):
            raise RecordFormatError(f"{where}: weights[{i}] must be a number, got {v!r}")
    try:
        return WeightVector(tuple(float(v) for v in vals))
    except DataError as exc:
        raise RecordFormatError(f"{where}: {exc}") from None


def save_predictions(
    outputs: Sequence[CertOutput] | np.ndarray,
    record_set: RecordSet,
    path: str,
    method: str = "ensemble",
) -> None:
    """Write ensemble answers as a single-constituent records file.

    One line per input record, order-preserving; the result loads back
    through :func:`load_records` as an N=1 record set, so the whole metrics
    stack runs on ensembled answers unchanged.
    """
    rows = [CertOutput(int(o[0]), int(o[1])) for o in outputs]
    if len(rows) != len(record_set):
        raise DataError(f"{len(rows)} predictions for {len(record_set)} records")
    preds = RecordSet(
        tuple(
            PredictionRecord(rec.input_id, rec.true_label, (out,))
            for rec, out in zip(record_set, rows)
        ),
        record_set.m,
        1,
        record_set.epsilon,
        record_set.norm,
        (method,),
    )
    save_records(preds, path)


def save_trace_csv(objectives: Sequence[float], path: str) -> None:
    with open(path, "w") as fh:
        fh.write("epoch,objective\n")
        for i, v in enumerate(objectives):
            fh.write(f"{i},{v!r}\n")
