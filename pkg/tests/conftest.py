"""Shared fixtures: deterministic record-set corpora used across the suite."""

import numpy as np
import pytest

from certvote import RecordSet, build_example1_fixture


def make_random_record_set(
    seed: int,
    k: int = 30,
    n_models: int = 3,
    m: int = 3,
    cert_rate: float = 0.5,
    epsilon: float = 0.1,
    norm: str = "l2",
) -> RecordSet:
    """A seeded record set with i.i.d. labels and Bernoulli certificates."""
    rng = np.random.default_rng(seed)
    labels = rng.integers(0, m, size=(k, n_models))
    certs = (rng.random((k, n_models)) < cert_rate).astype(np.int64)
    true_labels = rng.integers(0, m, size=k)
    return RecordSet.from_arrays(labels, certs, true_labels, m=m, epsilon=epsilon, norm=norm)


def make_banded_record_set(good_ranges, k: int = 100, m: int = 3, wrong_cert: int = 0) -> RecordSet:
    """Each constituent is certified-correct exactly on its index ranges.

    Off-range it outputs a fixed wrong label; constituent i's wrong label is
    shifted by i so wrong answers do not accidentally form a majority.
    """
    n = len(good_ranges)
    labels = np.zeros((k, n), dtype=np.int64)
    certs = np.zeros((k, n), dtype=np.int64)
    true_labels = np.arange(k, dtype=np.int64) % m
    for s, ranges in enumerate(good_ranges):
        good = np.zeros(k, dtype=bool)
        for lo, hi in ranges:
            good[lo : hi + 1] = True
        wrong = (true_labels + 1 + (s % (m - 1))) % m
        labels[:, s] = np.where(good, true_labels, wrong)
        certs[:, s] = np.where(good, 1, wrong_cert)
    return RecordSet.from_arrays(labels, certs, true_labels, m=m, epsilon=0.1, norm="l2")


def make_dominant_record_set() -> RecordSet:
    """Constituent 0 certified-correct on 90% of records, 1 and 2 on 5% slivers."""
    return make_banded_record_set([((0, 89),), ((90, 94),), ((95, 99),)])


def make_cascade_style_record_set() -> RecordSet:
    """Near-disjoint certified-correct sets sized so first-certified-wins
    beats every single constituent while voting certifies nothing."""
    return make_banded_record_set([((0, 49),), ((50, 79),), ((80, 94),)])


@pytest.fixture(scope="session")
def example1() -> RecordSet:
    return build_example1_fixture()


@pytest.fixture(scope="session")
def example1_cert_completion() -> RecordSet:
    return build_example1_fixture(completion="wrong-cert")


@pytest.fixture(scope="session")
def dominant_set() -> RecordSet:
    return make_dominant_record_set()


@pytest.fixture(scope="session")
def cascade_style_set() -> RecordSet:
    return make_cascade_style_record_set()
