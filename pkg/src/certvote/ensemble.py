"""Ensembling rules for certifiable classifiers, as functions and estimators.

Four rules over per-input constituent answers ``(label, cert)``:

* :func:`cascade` takes the first certified answer, else the last answer.
  Fast and tempting, but its certificate bit is NOT trustworthy: a certified
  constituent can lose control of the cascade inside its own robustness ball.
* :func:`weighted_vote` / :func:`uniform_vote` return the plurality label and
  certify only when the winner's certified mass strictly beats the entire
  uncertified mass plus every rival's certified mass. This certificate is
  sound whenever the constituents' certificates are.
* :func:`permutation_cascade` runs the cascade over every ordering of an odd
  number of constituents and certifies only unanimous-prefix agreement; it is
  an alternate, equivalent-in-spirit formulation of majority voting and is
  also sound.

Each rule also exists as a scikit-learn style estimator operating on batches.
"""

from __future__ import annotations

import itertools
from typing import Callable, Sequence

import numpy as np
from sklearn.base import BaseEstimator
from sklearn.utils.validation import check_is_fitted

from .core import (
    VOTE_EPS,
    CertOutput,
    DataError,
    DimensionError,
    GuardError,
    RecordSet,
    WeightVector,
)
from .validation import as_label_cert_arrays, check_num_classes, check_outputs_row

__all__ = [
    "ENSEMBLER_KINDS",
    "cascade",
    "weighted_vote",
    "uniform_vote",
    "permutation_cascade",
    "permutation_cascade_bruteforce",
    "batch_tallies",
    "cascade_batch",
    "weighted_vote_batch",
    "permutation_cascade_batch",
    "CascadeEnsemble",
    "UniformVotingEnsemble",
    "WeightedVotingEnsemble",
    "PermutationCascadeEnsemble",
    "make_ensembler",
    "apply_ensembler",
]

ENSEMBLER_KINDS = ("cascade", "uniform", "weighted", "permutation")

PREFIX_BOUNDS = ("literal", "relaxed")
FALLBACKS = ("plurality", "random")

BRUTEFORCE_MAX_N = 7  # 7! = 5040 orderings per input; beyond that refuse


# ---------------------------------------------------------------------------
# batch kernels (single source of truth for the vote arithmetic)
# ---------------------------------------------------------------------------


def batch_tallies(
    labels: np.ndarray, certs: np.ndarray, weights: np.ndarray, m: int
) -> np.ndarray:
    """(k, m, 2) vote mass per input, label, and certificate bit."""
    k, n = labels.shape
    if weights.shape != (n,):
        raise DimensionError(f"{weights.shape[0]} weights for {n} constituents")
    votes = np.zeros((k, m, 2), dtype=float)
    rows = np.arange(k)
    for i in range(n):  # N is small; k is the big axis
        votes[rows, labels[:, i], certs[:, i]] += weights[i]
    return votes


def weighted_vote_batch(
    labels: np.ndarray, certs: np.ndarray, weights: np.ndarray, m: int
) -> tuple[np.ndarray, np.ndarray]:
    """Vectorized weighted vote; returns (labels, certs) arrays of shape (k,)."""
    votes = batch_tallies(labels, certs, weights, m)
    per_label = votes.sum(axis=2)  # (k, m)
    winner = per_label.argmax(axis=1)  # ties resolve to the lowest index
    rows = np.arange(labels.shape[0])
    uncert_total = votes[:, :, 0].sum(axis=1)
    certified = votes[:, :, 1]
    winner_cert_mass = certified[rows, winner]
    rivals = certified.copy()
    rivals[rows, winner] = -np.inf
    best_rival = rivals.max(axis=1)  # m >= 2 so a rival always exists
    # Certify only if the winner's certified mass strictly dominates the
    # uncertified mass plus the strongest rival's certified mass.
    cert = winner_cert_mass > uncert_total + best_rival + VOTE_EPS
    return winner.astype(np.int64), cert.astype(np.int64)


def cascade_batch(labels: np.ndarray, certs: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Vectorized cascade; returns (labels, certs) arrays of shape (k,)."""
    k, n = labels.shape
    any_cert = certs.any(axis=1)
    # argmax on 0/1 certs finds the first certified constituent
    pick = np.where(any_cert, certs.argmax(axis=1), n - 1)
    rows = np.arange(k)
    return labels[rows, pick], certs[rows, pick]


def _permutation_thresholds(n: int, prefix_bound: str) -> int:
    if n < 1 or n % 2 == 0:
        raise DataError(f"permutation cascade needs an odd constituent count, got {n}")
    if prefix_bound == "literal":
        # prefix positions 0..j with j >= (N+1)/2, so j+1 >= (N+3)/2 members
        return (n + 3) // 2
    if prefix_bound == "relaxed":
        # strict majority prefix
        return (n + 1) // 2
    raise DataError(f"prefix_bound must be one of {PREFIX_BOUNDS}, got {prefix_bound!r}")


def permutation_cascade_batch(
    labels: np.ndarray,
    certs: np.ndarray,
    m: int,
    prefix_bound: str = "literal",
    fallback: str | int = "plurality",
    rng: np.random.Generator | None = None,
) -> tuple[np.ndarray, np.ndarray]:
    """Closed-form permutation cascade over a batch; returns (labels, certs).

    An ordering with a fully-agreeing certified prefix of length ``j+1``
    exists iff some pair ``(y, 1)`` is produced by at least that many
    constituents, so the existential over all N! orderings reduces to
    per-label counting. At most one label can reach the threshold because
    the threshold exceeds N/2.
    """
    k, n = labels.shape
    need = _permutation_thresholds(n, prefix_bound)
    cnt_all = np.zeros((k, m), dtype=np.int64)
    cnt_cert = np.zeros((k, m), dtype=np.int64)
    rows = np.arange(k)
    for i in range(n):
        cnt_all[rows, labels[:, i]] += 1
        cnt_cert[rows, labels[:, i]] += certs[:, i]

    out_labels = np.empty(k, dtype=np.int64)
    out_certs = np.zeros(k, dtype=np.int64)

    c2_hit = cnt_cert.max(axis=1) >= need
    c1_hit = cnt_all.max(axis=1) >= need
    # threshold > N/2 makes the witness label unique when present
    assert not np.any((cnt_cert >= need).sum(axis=1) > 1)
    assert not np.any((cnt_all >= need).sum(axis=1) > 1)

    out_labels[c2_hit] = cnt_cert[c2_hit].argmax(axis=1)
    out_certs[c2_hit] = 1
    only_c1 = c1_hit & ~c2_hit
    out_labels[only_c1] = cnt_all[only_c1].argmax(axis=1)

    rest = ~(c2_hit | c1_hit)
    if np.any(rest):
        if fallback == "plurality":
            out_labels[rest] = cnt_all[rest].argmax(axis=1)
        elif fallback == "random":
            if rng is None:
                raise DataError("random fallback needs an rng")
            out_labels[rest] = rng.integers(0, m, size=int(rest.sum()))
        elif isinstance(fallback, (int, np.integer)) and not isinstance(fallback, bool):
            if not 0 <= int(fallback) < m:
                raise DataError(f"fallback label {fallback} outside [0, {m})")
            out_labels[rest] = int(fallback)
        else:
            raise DataError(f"fallback must be one of {FALLBACKS} or a label, got {fallback!r}")
    return out_labels, out_certs


# ---------------------------------------------------------------------------
# single-input rules
# ---------------------------------------------------------------------------


def _single(outputs: Sequence[CertOutput]) -> tuple[np.ndarray, np.ndarray]:
    row = check_outputs_row(outputs, len(outputs))
    labels = np.array([[o.label for o in row]], dtype=np.int64)
    certs = np.array([[o.cert for o in row]], dtype=np.int64)
    return labels, certs


def cascade(outputs: Sequence[CertOutput]) -> CertOutput:
    """First certified constituent's answer; the last constituent's otherwise."""
    if len(outputs) == 0:
        raise DimensionError("cascade needs at least one constituent answer")
    labels, certs = _single(outputs)
    lab, cer = cascade_batch(labels, certs)
    return CertOutput(int(lab[0]), int(cer[0]))


def weighted_vote(
    outputs: Sequence[CertOutput],
    weights: WeightVector | Sequence[float],
    m: int | None = None,
) -> CertOutput:
    """Weighted plurality label with a certificate that survives adversarial recounts.

    The label is the argmax of total vote mass (ties to the lowest label).
    The certificate demands, for every rival j, strictly more certified mass
    on the winner than the whole uncertified mass plus j's certified mass;
    under that margin no in-ball reassignment of uncertified answers can
    change the winner, so the certificate inherits constituent soundness.
    """
    if not isinstance(weights, WeightVector):
        weights = WeightVector(tuple(weights))
    if len(outputs) != len(weights):
        raise DimensionError(f"{len(outputs)} outputs vs {len(weights)} weights")
    labels, certs = _single(outputs)
    m = check_num_classes(m, labels)
    lab, cer = weighted_vote_batch(labels, certs, weights.as_array(), m)
    return CertOutput(int(lab[0]), int(cer[0]))


def uniform_vote(outputs: Sequence[CertOutput], m: int | None = None) -> CertOutput:
    """Weighted vote with equal weights 1/N."""
    return weighted_vote(outputs, WeightVector.uniform(len(outputs)), m)


def permutation_cascade(
    outputs: Sequence[CertOutput],
    m: int | None = None,
    prefix_bound: str = "literal",
    fallback: str | int = "plurality",
    rng: np.random.Generator | None = None,
) -> CertOutput:
    """Closed-form cascade-over-all-orderings for an odd constituent count.

    Certifies (y, 1) iff enough constituents answered exactly (y, 1) to fill
    an agreeing prefix; answers (y, 0) iff enough agree on the label only;
    otherwise falls back uncertified. ``prefix_bound`` picks the prefix-length
    convention: "literal" needs (N+3)/2 agreeing members, "relaxed" needs a
    strict majority (N+1)/2. Both give sound certificates.
    """
    labels, certs = _single(outputs)
    m = check_num_classes(m, labels)
    lab, cer = permutation_cascade_batch(labels, certs, m, prefix_bound, fallback, rng)
    return CertOutput(int(lab[0]), int(cer[0]))


def permutation_cascade_bruteforce(
    outputs: Sequence[CertOutput],
    m: int | None = None,
    prefix_bound: str = "literal",
    fallback: str | int = "plurality",
    rng: np.random.Generator | None = None,
) -> CertOutput:
    """Reference oracle: evaluate the ordering conditions over all N! orderings.

    Semantically identical to :func:`permutation_cascade`; exists to check the
    closed form and is capped at N <= 7 constituents.
    """
    row = check_outputs_row(outputs, len(outputs))
    n = len(row)
    if n > BRUTEFORCE_MAX_N:
        raise GuardError(f"brute force is limited to N <= {BRUTEFORCE_MAX_N}, got {n}")
    if n < 1 or n % 2 == 0:
        raise DataError(f"permutation cascade needs an odd constituent count, got {n}")
    if prefix_bound == "literal":
        j_lo = (n + 1) // 2
    elif prefix_bound == "relaxed":
        j_lo = (n - 1) // 2
    else:
        raise DataError(f"prefix_bound must be one of {PREFIX_BOUNDS}, got {prefix_bound!r}")

    labels_arr = np.array([o.label for o in row], dtype=np.int64)
    m = check_num_classes(m, labels_arr)

    c1_first: int | None = None
    c2_first: int | None = None
    for perm in itertools.permutations(range(n)):
        seq = [row[i] for i in perm]
        for j in range(j_lo, n):
            prefix_agrees_pair = all(seq[i] == seq[j] for i in range(j))
            prefix_agrees_label = all(seq[i].label == seq[j].label for i in range(j))
            if prefix_agrees_pair and seq[j].cert == 1 and c2_first is None:
                c2_first = perm[0]
            if prefix_agrees_label and c1_first is None:
                c1_first = perm[0]
        if c2_first is not None:
            break
    if c2_first is not None:
        return CertOutput(row[c2_first].label, row[c2_first].cert)
    if c1_first is not None:
        return CertOutput(row[c1_first].label, 0)
    if fallback == "plurality":
        counts = np.bincount(labels_arr, minlength=m)
        return CertOutput(int(counts.argmax()), 0)
    if fallback == "random":
        if rng is None:
            raise DataError("random fallback needs an rng")
        return CertOutput(int(rng.integers(0, m)), 0)
    if isinstance(fallback, (int, np.integer)) and not isinstance(fallback, bool):
        if not 0 <= int(fallback) < m:
            raise DataError(f"fallback label {fallback} outside [0, {m})")
        return CertOutput(int(fallback), 0)
    raise DataError(f"fallback must be one of {FALLBACKS} or a label, got {fallback!r}")


# ---------------------------------------------------------------------------
# estimators
# ---------------------------------------------------------------------------


class _EnsembleBase(BaseEstimator):
    """Shared plumbing: fit validates shapes, transform applies the rule."""

    def fit(self, X, y=None):
        labels, certs, m = as_label_cert_arrays(X)
        self.n_models_ = labels.shape[1]
        self.m_ = m
        return self

    def _arrays(self, X) -> tuple[np.ndarray, np.ndarray]:
        check_is_fitted(self, "n_models_")
        labels, certs, _ = as_label_cert_arrays(X)
        if labels.shape[1] != self.n_models_:
            raise DimensionError(
                f"{labels.shape[1]} constituents at predict time, {self.n_models_} at fit time"
            )
        if labels.size and int(labels.max()) >= self.m_:
            raise DataError(f"label {int(labels.max())} outside [0, {self.m_})")
        return labels, certs

    def _apply(self, labels: np.ndarray, certs: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        raise NotImplementedError

    def ensemble_outputs(self, X) -> np.ndarray:
        """(k, 2) array of ensembled (label, cert) pairs."""
        labels, certs = self._arrays(X)
        lab, cer = self._apply(labels, certs)
        return np.stack([lab, cer], axis=1)

    def predict(self, X) -> np.ndarray:
        labels, certs = self._arrays(X)
        return self._apply(labels, certs)[0]

    def certify(self, X) -> np.ndarray:
        labels, certs = self._arrays(X)
        return self._apply(labels, certs)[1]

    def transform(self, X) -> np.ndarray:
        return self.ensemble_outputs(X)

    def fit_transform(self, X, y=None) -> np.ndarray:
        return self.fit(X, y).transform(X)

    def score(self, X, y=None) -> float:
        """Certified robust accuracy: fraction answered (true label, certified)."""
        if y is None:
            if not isinstance(X, RecordSet):
                raise DataError("score needs true labels: pass y or a RecordSet")
            y = X.true_labels
        y = np.asarray(y, dtype=np.int64)
        out = self.ensemble_outputs(X)
        if len(y) != len(out):
            raise DimensionError(f"{len(y)} labels for {len(out)} inputs")
        return float(np.mean((out[:, 0] == y) & (out[:, 1] == 1))) if len(y) else 0.0


class CascadeEnsemble(_EnsembleBase):
    """First-certified-wins ensembler. Its certificate is not sound in general."""

    def _apply(self, labels, certs):
        return cascade_batch(labels, certs)


class UniformVotingEnsemble(_EnsembleBase):
    """Equal-weight vote with the recount-proof certificate."""

    def _apply(self, labels, certs):
        w = np.full(self.n_models_, 1.0 / self.n_models_)
        return weighted_vote_batch(labels, certs, w, self.m_)


class WeightedVotingEnsemble(_EnsembleBase):
    """Weighted vote; learns weights on fit when none are given.

    Parameters mirror the smoothed-margin ascent in :mod:`certvote.learning`;
    they are ignored when explicit ``weights`` are supplied. With
    ``safety_net=True`` the learned weights are replaced by the best single
    constituent (a one-hot vector) whenever that scores a higher exact
    objective, so fit never returns weights worse than the best constituent.
    """

    def __init__(
        self,
        weights: Sequence[float] | None = None,
        temperature: float = 1e5,
        learning_rate: float = 1e-2,
        epochs: int = 500,
        seed: int = 0,
        parameterization: str = "softmax",
        convergence_tol: float = 1e-7,
        safety_net: bool = True,
    ):
        self.weights = weights
        self.temperature = temperature
        self.learning_rate = learning_rate
        self.epochs = epochs
        self.seed = seed
        self.parameterization = parameterization
        self.convergence_tol = convergence_tol
        self.safety_net = safety_net

    def fit(self, X, y=None):
        from .learning import LearnerConfig, learn

        labels, certs, m = as_label_cert_arrays(X)
        self.n_models_ = labels.shape[1]
        self.m_ = m
        if self.weights is not None:
            wv = self.weights if isinstance(self.weights, WeightVector) else WeightVector(tuple(self.weights))
            if len(wv) != self.n_models_:
                raise DimensionError(f"{len(wv)} weights for {self.n_models_} constituents")
            self.weights_ = wv
            self.trace_ = None
            return self
        if y is None:
            if isinstance(X, RecordSet):
                y = X.true_labels
            else:
                raise DataError("learning weights needs true labels: pass y or a RecordSet")
        y = np.asarray(y, dtype=np.int64)
        rs = X if isinstance(X, RecordSet) else RecordSet.from_arrays(labels, certs, y, m)
        cfg = LearnerConfig(
            temperature=self.temperature,
            learning_rate=self.learning_rate,
            epochs=self.epochs,
            seed=self.seed,
            parameterization=self.parameterization,
            convergence_tol=self.convergence_tol,
            safety_net=self.safety_net,
        )
        self.weights_, self.trace_ = learn(rs, cfg)
        return self

    def _apply(self, labels, certs):
        check_is_fitted(self, "weights_")
        return weighted_vote_batch(labels, certs, self.weights_.as_array(), self.m_)


class PermutationCascadeEnsemble(_EnsembleBase):
    """Cascade over all constituent orderings (odd N); certificate is sound."""

    def __init__(self, prefix_bound: str = "literal", fallback: str | int = "plurality", seed: int = 0):
        self.prefix_bound = prefix_bound
        self.fallback = fallback
        self.seed = seed

    def fit(self, X, y=None):
        super().fit(X, y)
        _permutation_thresholds(self.n_models_, self.prefix_bound)  # validate early
        return self

    def _apply(self, labels, certs):
        rng = np.random.default_rng(self.seed) if self.fallback == "random" else None
        return permutation_cascade_batch(
            labels, certs, self.m_, self.prefix_bound, self.fallback, rng
        )


def make_ensembler(kind: str, **params) -> _EnsembleBase:
    """Build an ensembler by tag: cascade, uniform, weighted, or permutation."""
    table: dict[str, Callable[..., _EnsembleBase]] = {
        "cascade": CascadeEnsemble,
        "uniform": UniformVotingEnsemble,
        "weighted": WeightedVotingEnsemble,
        "permutation": PermutationCascadeEnsemble,
    }
    if kind not in table:
        raise DataError(f"unknown ensembler kind {kind!r}; expected one of {ENSEMBLER_KINDS}")
    return table[kind](**params)


def apply_ensembler(kind: str, record_set: RecordSet, **params) -> list[CertOutput]:
    """One-shot: fit an ensembler of the given kind and run it over a record set."""
    est = make_ensembler(kind, **params).fit(record_set)
    out = est.ensemble_outputs(record_set)
    return [CertOutput(int(a), int(b)) for a, b in out]
