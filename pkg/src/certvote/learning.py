"""Weight learning for the weighted-vote ensembler by smoothed-margin ascent.

The exact objective, the fraction of records the weighted vote answers with
a certified correct label, equals the fraction of positive vote margins

    margin = v(y, 1) - v(*, 0) - max_{j != y} v(j, 1)

where v(., .) is weighted vote mass, y the true label, v(*, 0) the total
uncertified mass. The indicator 1[margin > 0] is flat almost everywhere, so
ascent runs on a smooth surrogate: the mean of a tempered sigmoid of the
margin. The tempered sigmoid equals the logistic on positive inputs and the
logistic of ``x / t`` on the rest; a large temperature ``t`` flattens the
penalty on negative margins so already-lost records do not dominate.

Two simplex parameterizations are available: ``softmax`` (weights are a
softmax of free logits, always feasible) and ``projected`` (raw ascent step
followed by Euclidean projection onto the simplex).

After ascent, a safety net compares the exact objective of the learned
weights against every one-hot vector (each one-hot scores exactly that
constituent's certified robust accuracy) and returns whichever is best, so
learning never does worse than the best single constituent on its records.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .core import (
    CertOutput,
    DataError,
    DimensionError,
    RecordSet,
    WeightVector,
)
from .ensemble import batch_tallies
from .validation import check_num_classes

__all__ = [
    "Margin",
    "LearnerConfig",
    "LearnerTrace",
    "sigma_t",
    "sigma_t_prime",
    "margin",
    "margins_batch",
    "objective",
    "exact_objective",
    "objective_and_grad",
    "softmax",
    "project_simplex",
    "learn",
]

Margin = float

PARAMETERIZATIONS = ("softmax", "projected")


def _logistic(z: np.ndarray) -> np.ndarray:
    """Numerically stable logistic function."""
    out = np.empty_like(z, dtype=float)
    pos = z >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-z[pos]))
    ez = np.exp(z[~pos])
    out[~pos] = ez / (1.0 + ez)
    return out


def sigma_t(x, t: float):
    """Tempered sigmoid: logistic of ``x`` when positive, of ``x / t`` otherwise.

    Continuous at 0 with value 1/2; monotonically increasing for any t > 0.
    """
    if t <= 0:
        raise DataError(f"temperature must be positive, got {t}")
    arr = np.asarray(x, dtype=float)
    scaled = np.where(arr > 0, arr, arr / t)
    out = _logistic(scaled)
    return float(out) if np.isscalar(x) or arr.ndim == 0 else out


def sigma_t_prime(x, t: float):
    """Derivative of :func:`sigma_t` (the ``x <= 0`` branch carries the 1/t factor)."""
    if t <= 0:
        raise DataError(f"temperature must be positive, got {t}")
    arr = np.asarray(x, dtype=float)
    pos = arr > 0
    scaled = np.where(pos, arr, arr / t)
    s = _logistic(scaled)
    out = s * (1.0 - s) * np.where(pos, 1.0, 1.0 / t)
    return float(out) if np.isscalar(x) or arr.ndim == 0 else out


def margins_batch(
    labels: np.ndarray,
    certs: np.ndarray,
    true_labels: np.ndarray,
    weights: np.ndarray,
    m: int,
) -> tuple[np.ndarray, np.ndarray]:
    """Per-record vote margins and the attaining rival index.

    Returns ``(margins, rival)`` of shapes (k,), (k,). ``rival`` is the
    certified-mass argmax over labels other than the true one, ties to the
    lowest label; it is the subgradient choice for the inner max.
    """
    k = labels.shape[0]
    votes = batch_tallies(labels, certs, weights, m)
    rows = np.arange(k)
    own_cert = votes[rows, true_labels, 1]
    uncert_total = votes[:, :, 0].sum(axis=1)
    certified = votes[:, :, 1].copy()
    certified[rows, true_labels] = -np.inf
    rival = certified.argmax(axis=1)
    best_rival = certified[rows, rival]
    return own_cert - uncert_total - best_rival, rival


def margin(
    outputs: Sequence[CertOutput],
    weights: WeightVector | Sequence[float],
    y: int,
    m: int | None = None,
) -> Margin:
    """Vote margin of the true label for a single input."""
    if not isinstance(weights, WeightVector):
        weights = WeightVector(tuple(weights))
    if len(outputs) != len(weights):
        raise DimensionError(f"{len(outputs)} outputs vs {len(weights)} weights")
    labels = np.array([[o[0] for o in outputs]], dtype=np.int64)
    certs = np.array([[o[1] for o in outputs]], dtype=np.int64)
    m = check_num_classes(m, np.append(labels, y))
    if not 0 <= y < m:
        raise DataError(f"true label {y} outside [0, {m})")
    vals, _ = margins_batch(labels, certs, np.array([y]), weights.as_array(), m)
    return float(vals[0])


def _record_arrays(record_set: RecordSet) -> tuple[np.ndarray, np.ndarray, np.ndarray, int]:
    if len(record_set) == 0:
        raise DataError("record set is empty")
    return record_set.labels, record_set.certs, record_set.true_labels, record_set.m


def objective(record_set: RecordSet, weights: WeightVector, t: float) -> float:
    """Mean tempered sigmoid of the per-record margins; lies in (0, 1)."""
    labels, certs, y, m = _record_arrays(record_set)
    vals, _ = margins_batch(labels, certs, y, weights.as_array(), m)
    return float(np.mean(sigma_t(vals, t)))


def exact_objective(record_set: RecordSet, weights: WeightVector) -> float:
    """Fraction of records with a strictly positive margin.

    Equals the certified robust accuracy of the weighted vote with these
    weights: the margin is positive exactly when the vote answers
    (true label, certified).
    """
    labels, certs, y, m = _record_arrays(record_set)
    vals, _ = margins_batch(labels, certs, y, weights.as_array(), m)
    return float(np.mean(vals > 0))


def objective_and_grad(
    labels: np.ndarray,
    certs: np.ndarray,
    true_labels: np.ndarray,
    weights: np.ndarray,
    m: int,
    t: float,
) -> tuple[float, np.ndarray]:
    """Surrogate objective and its gradient with respect to the weights.

    The margin is piecewise linear in w; per record its gradient w.r.t. w_l is
    +1 if constituent l answered (y, 1), -1 if it answered with cert 0, and
    -1 if it answered (rival, 1) for the attaining rival. At rival ties the
    lowest-label attaining rival defines the subgradient.
    """
    k = labels.shape[0]
    vals, rival = margins_batch(labels, certs, true_labels, weights, m)
    cert1 = certs == 1
    d_margin = (
        (cert1 & (labels == true_labels[:, None])).astype(float)
        - (certs == 0).astype(float)
        - (cert1 & (labels == rival[:, None])).astype(float)
    )  # (k, N)
    slope = sigma_t_prime(vals, t)  # (k,)
    obj = float(np.mean(sigma_t(vals, t)))
    grad = (slope[:, None] * d_margin).sum(axis=0) / k
    return obj, grad


def softmax(theta: np.ndarray) -> np.ndarray:
    z = np.asarray(theta, dtype=float)
    z = z - z.max()
    e = np.exp(z)
    return e / e.sum()


def softmax_grad_chain(weights: np.ndarray, grad_w: np.ndarray) -> np.ndarray:
    """Pull a weight-space gradient back through w = softmax(theta)."""
    return weights * (grad_w - float(weights @ grad_w))


def project_simplex(v: np.ndarray) -> np.ndarray:
    """Euclidean projection onto the probability simplex (sort-based)."""
    v = np.asarray(v, dtype=float)
    n = v.size
    u = np.sort(v)[::-1]
    css = np.cumsum(u)
    idx = np.arange(1, n + 1)
    cond = u - (css - 1.0) / idx > 0
    rho = idx[cond][-1]
    tau = (css[cond][-1] - 1.0) / rho
    return np.maximum(v - tau, 0.0)


@dataclass(frozen=True)
class LearnerConfig:
    """Ascent hyperparameters. Defaults: t=1e5, lr=1e-2, 500 epochs."""

    temperature: float = 1e5
    learning_rate: float = 1e-2
    epochs: int = 500
    seed: int = 0
    parameterization: str = "softmax"
    convergence_tol: float = 1e-7
    safety_net: bool = True

    def __post_init__(self) -> None:
        if self.temperature <= 0:
            raise DataError(f"temperature must be positive, got {self.temperature}")
        if self.learning_rate <= 0:
            raise DataError(f"learning_rate must be positive, got {self.learning_rate}")
        if self.epochs < 1:
            raise DataError(f"epochs must be >= 1, got {self.epochs}")
        if self.parameterization not in PARAMETERIZATIONS:
            raise DataError(
                f"parameterization must be one of {PARAMETERIZATIONS}, got {self.parameterization!r}"
            )


@dataclass(frozen=True)
class LearnerTrace:
    """Everything the ascent saw: per-epoch objectives and both weight reports.

    ``raw_weights`` is the best-surrogate-objective iterate of the ascent;
    ``final_weights`` is what :func:`learn` returned after the one-hot safety
    net (equal to ``raw_weights`` when the net is off or the raw weights win).
    """

    objectives: tuple[float, ...]
    raw_weights: WeightVector
    raw_objective: float
    raw_exact: float
    one_hot_exact: tuple[float, ...]
    final_weights: WeightVector
    final_exact: float
    safety_net_applied: bool


def learn(record_set: RecordSet, cfg: LearnerConfig | None = None) -> tuple[WeightVector, LearnerTrace]:
    """Gradient-ascend the smoothed objective; return the best iterate, netted.

    The returned weights are the best-objective iterate of the ascent
    (including the uniform start), replaced by the best one-hot vector when
    that scores a strictly higher exact objective and the safety net is on.
    """
    cfg = cfg or LearnerConfig()
    labels, certs, y, m = _record_arrays(record_set)
    n = record_set.n_models

    w = np.full(n, 1.0 / n)
    theta = np.zeros(n)
    obj, grad_w = objective_and_grad(labels, certs, y, w, m, cfg.temperature)
    objectives = [obj]
    best_obj, best_w = obj, w.copy()

    for _ in range(cfg.epochs):
        if cfg.parameterization == "softmax":
            theta = theta + cfg.learning_rate * softmax_grad_chain(w, grad_w)
            w = softmax(theta)
        else:
            w = project_simplex(w + cfg.learning_rate * grad_w)
        prev = obj
        obj, grad_w = objective_and_grad(labels, certs, y, w, m, cfg.temperature)
        objectives.append(obj)
        if obj > best_obj:
            best_obj, best_w = obj, w.copy()
        if abs(obj - prev) < cfg.convergence_tol:
            break

    raw = WeightVector.normalized(best_w)
    raw_exact = exact_objective(record_set, raw)
    one_hots = [WeightVector.one_hot(i, n) for i in range(n)]
    one_hot_exact = tuple(exact_objective(record_set, wv) for wv in one_hots)

    final, final_exact, netted = raw, raw_exact, False
    if cfg.safety_net:
        best_i = int(np.argmax(one_hot_exact))
        if one_hot_exact[best_i] > raw_exact:
            final, final_exact, netted = one_hots[best_i], one_hot_exact[best_i], True

    trace = LearnerTrace(
        objectives=tuple(objectives),
        raw_weights=raw,
        raw_objective=best_obj,
        raw_exact=raw_exact,
        one_hot_exact=one_hot_exact,
        final_weights=final,
        final_exact=final_exact,
        safety_net_applied=netted,
    )
    return final, trace
