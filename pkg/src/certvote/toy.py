"""2D toy lab: sound-by-construction linear certifiers and a grid refuter.

The lab exists to make the soundness story concrete. Linear classifiers over
the plane admit EXACT robustness radii, so their certificates are sound by
construction; a completeness factor rho in (0, 1] shrinks the certified
radius to emulate real certifiers that are sound but incomplete (they may
fail to certify robust points, never the converse). Scenarios arrange such
constituents so that a cascade certifies points whose label flips within
epsilon (the unsoundness witness), while voting does not.

The refuter scans every certified grid point against every grid point within
epsilon and reports label disagreements. A non-empty result PROVES the
ensemble's certificate unsound on the grid; an empty result is evidence at
grid resolution only, not a continuum proof.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass
from typing import Mapping, Sequence

import numpy as np

from .core import (
    CertOutput,
    DataError,
    DimensionError,
    GuardError,
    NORM_L2,
    NORM_LINF,
    NORMS,
    RecordSet,
    WeightVector,
    infer_num_classes,
)
from .ensemble import (
    CascadeEnsemble,
    PermutationCascadeEnsemble,
    UniformVotingEnsemble,
    WeightedVotingEnsemble,
)

__all__ = [
    "SCENARIOS",
    "RegionalRho",
    "LinearClassifier",
    "certify_linear",
    "ToyGrid",
    "gen_toy",
    "Violation",
    "find_violations",
    "find_violations_from_outputs",
    "write_grid_csv",
    "read_grid_csv",
    "write_violations_csv",
    "export_figure",
    "build_example1_fixture",
]

SCENARIOS = ("fig1", "agree", "thm1-minimal", "random")

# Enumeration bound slack only; each candidate offset is re-checked with a
# strict distance <= epsilon comparison. Fattening the comparison itself
# would admit pairs truly farther than epsilon and fabricate violations.
_ENUM_RTOL = 1e-9


@dataclass(frozen=True)
class RegionalRho:
    """Completeness factor that depends on which side of a line a point lies.

    rho(x) = ``inside`` where normal . x + offset > 0, else ``outside``.
    Both values live in (0, 1], so certification stays sound everywhere.
    """

    normal: tuple[float, float]
    offset: float
    inside: float
    outside: float

    def __post_init__(self) -> None:
        for name in ("inside", "outside"):
            v = getattr(self, name)
            if not 0 < v <= 1:
                raise DataError(f"rho {name} must be in (0, 1], got {v}")

    def at(self, points: np.ndarray) -> np.ndarray:
        n = np.asarray(self.normal, dtype=float)
        side = points @ n + self.offset > 0
        return np.where(side, self.inside, self.outside)


@dataclass(frozen=True)
class LinearClassifier:
    """Per-class linear scorer over the plane with exact margin certification.

    Predicts argmax of ``W x + b`` (ties to the lowest class). The exact
    robustness radius at x is the margin to the nearest rival decision
    boundary under the declared ball norm; the certificate fires iff
    ``rho(x) * radius > epsilon``, which can only under-claim, never
    over-claim, so the certificate is sound for every rho in (0, 1].
    """

    W: np.ndarray  # (m, 2)
    b: np.ndarray  # (m,)
    norm: str = NORM_L2
    rho: float | RegionalRho = 1.0

    def __post_init__(self) -> None:
        W = np.asarray(self.W, dtype=float)
        b = np.asarray(self.b, dtype=float)
        if W.ndim != 2 or W.shape[1] != 2 or W.shape[0] < 2:
            raise DimensionError(f"W must be (m >= 2, 2), got {W.shape}")
        if b.shape != (W.shape[0],):
            raise DimensionError(f"b must be ({W.shape[0]},), got {b.shape}")
        if self.norm not in NORMS:
            raise DataError(f"norm must be one of {NORMS}, got {self.norm!r}")
        if isinstance(self.rho, (int, float)) and not 0 < float(self.rho) <= 1:
            raise DataError(f"rho must be in (0, 1], got {self.rho}")
        W = W.copy()
        b = b.copy()
        W.setflags(write=False)
        b.setflags(write=False)
        object.__setattr__(self, "W", W)
        object.__setattr__(self, "b", b)

    @property
    def m(self) -> int:
        return self.W.shape[0]

    def rho_at(self, points: np.ndarray) -> np.ndarray:
        if isinstance(self.rho, RegionalRho):
            return self.rho.at(points)
        return np.full(len(points), float(self.rho))

    def logits(self, points: np.ndarray) -> np.ndarray:
        return points @ self.W.T + self.b

    def predict_certify(self, points: np.ndarray, epsilon: float) -> tuple[np.ndarray, np.ndarray]:
        """Labels and certificate bits for a (P, 2) batch of points."""
        points = np.asarray(points, dtype=float)
        if points.ndim != 2 or points.shape[1] != 2:
            raise DimensionError(f"points must be (P, 2), got {points.shape}")
        if epsilon < 0:
            raise DataError(f"epsilon must be >= 0, got {epsilon}")
        scores = self.logits(points)  # (P, m)
        jhat = scores.argmax(axis=1)
        rows = np.arange(len(points))
        gaps = scores[rows, jhat][:, None] - scores  # (P, m), >= 0
        diffs = self.W[jhat][:, None, :] - self.W[None, :, :]  # (P, m, 2)
        if self.norm == NORM_L2:
            denom = np.sqrt((diffs**2).sum(axis=2))
        else:  # linf ball: dual norm of the row difference is L1
            denom = np.abs(diffs).sum(axis=2)
        with np.errstate(divide="ignore", invalid="ignore"):
            radii = np.where(denom > 0, gaps / denom, np.inf)
        # identical rows with a zero gap can never overtake the winner
        radii[rows, jhat] = np.inf
        radius = radii.min(axis=1)
        certs = (self.rho_at(points) * radius > epsilon).astype(np.int64)
        return jhat.astype(np.int64), certs


def certify_linear(c: LinearClassifier, x: Sequence[float], epsilon: float) -> CertOutput:
    """Single-point convenience wrapper around exact margin certification."""
    labels, certs = c.predict_certify(np.asarray([x], dtype=float), epsilon)
    return CertOutput(int(labels[0]), int(certs[0]))


@dataclass(frozen=True)
class ToyGrid:
    """A rectangular grid with ground truth and all constituent answers.

    ``outputs[i, j, s]`` is constituent s's (label, cert) at point
    (xs[i], ys[j]); ``truth[i, j]`` the ground-truth label there.
    """

    xs: np.ndarray  # (nx,)
    ys: np.ndarray  # (ny,)
    truth: np.ndarray  # (nx, ny)
    outputs: np.ndarray  # (nx, ny, N, 2)
    epsilon: float
    norm: str
    m: int
    h: float

    def __post_init__(self) -> None:
        xs = np.asarray(self.xs, dtype=float)
        ys = np.asarray(self.ys, dtype=float)
        truth = np.asarray(self.truth, dtype=np.int64)
        outputs = np.asarray(self.outputs, dtype=np.int64)
        if self.h <= 0:
            raise DataError(f"grid step h must be positive, got {self.h}")
        if self.norm not in NORMS:
            raise DataError(f"norm must be one of {NORMS}, got {self.norm!r}")
        if self.m < 2:
            raise DataError(f"class count m must be >= 2, got {self.m}")
        nx, ny = len(xs), len(ys)
        if truth.shape != (nx, ny):
            raise DimensionError(f"truth shape {truth.shape} != ({nx}, {ny})")
        if outputs.ndim != 4 or outputs.shape[:2] != (nx, ny) or outputs.shape[3] != 2:
            raise DimensionError(f"outputs shape {outputs.shape} != ({nx}, {ny}, N, 2)")
        xs, ys, truth, outputs = xs.copy(), ys.copy(), truth.copy(), outputs.copy()
        for arr in (xs, ys, truth, outputs):
            arr.setflags(write=False)
        object.__setattr__(self, "xs", xs)
        object.__setattr__(self, "ys", ys)
        object.__setattr__(self, "truth", truth)
        object.__setattr__(self, "outputs", outputs)

    @property
    def n_models(self) -> int:
        return self.outputs.shape[2]

    @property
    def shape(self) -> tuple[int, int]:
        return len(self.xs), len(self.ys)

    def points(self) -> np.ndarray:
        """(nx * ny, 2) coordinates in row-major order (x outer, y inner)."""
        nx, ny = self.shape
        return np.stack([np.repeat(self.xs, ny), np.tile(self.ys, nx)], axis=1)

    def to_record_set(self) -> RecordSet:
        nx, ny = self.shape
        k = nx * ny
        labels = self.outputs[:, :, :, 0].reshape(k, self.n_models)
        certs = self.outputs[:, :, :, 1].reshape(k, self.n_models)
        ids = [f"g{i}_{j}" for i in range(nx) for j in range(ny)]
        names = tuple(f"s{s}" for s in range(self.n_models))
        return RecordSet.from_arrays(
            labels,
            certs,
            self.truth.reshape(k),
            self.m,
            epsilon=self.epsilon,
            norm=self.norm,
            input_ids=ids,
            model_names=names,
        )


def _axis(lo: float, hi: float, h: float) -> np.ndarray:
    if h <= 0:
        raise DataError(f"grid step h must be positive, got {h}")
    if hi <= lo:
        raise DataError(f"empty axis range [{lo}, {hi}]")
    n = int(math.floor((hi - lo) / h + 0.5)) + 1
    while lo + (n - 1) * h > hi + h * 1e-9:
        n -= 1
    return lo + h * np.arange(n)


def _evaluate_grid(
    models: Sequence[LinearClassifier],
    truth_model: LinearClassifier,
    h: float,
    epsilon: float,
    norm: str,
    box: tuple[float, float, float, float],
    m: int,
) -> ToyGrid:
    xs = _axis(box[0], box[1], h)
    ys = _axis(box[2], box[3], h)
    nx, ny = len(xs), len(ys)
    pts = np.stack([np.repeat(xs, ny), np.tile(ys, nx)], axis=1)
    truth, _ = truth_model.predict_certify(pts, 0.0)
    outs = np.empty((nx * ny, len(models), 2), dtype=np.int64)
    for s, model in enumerate(models):
        lab, cer = model.predict_certify(pts, epsilon)
        outs[:, s, 0] = lab
        outs[:, s, 1] = cer
    return ToyGrid(
        xs,
        ys,
        truth.reshape(nx, ny),
        outs.reshape(nx, ny, len(models), 2),
        float(epsilon),
        norm,
        m,
        float(h),
    )


def _two_class_rows(extra_class: bool) -> np.ndarray:
    # classes 0/1 split on x; optional class 2 is a pad that never wins
    if extra_class:
        return np.array([[1.0, 0.0], [-1.0, 0.0], [0.0, 0.0]])
    return np.array([[1.0, 0.0], [-1.0, 0.0]])


def gen_toy(
    scenario: str,
    seed: int = 0,
    h: float = 0.01,
    epsilon: float = 0.08,
    norm: str = NORM_L2,
    box: tuple[float, float, float, float] = (-1.0, 1.0, -1.0, 1.0),
) -> tuple[list[LinearClassifier], ToyGrid]:
    """Build a named scenario: sound constituents plus the evaluated grid.

    Scenarios:

    * ``fig1``: three 3-class constituents whose x-boundaries sit at 0,
      -0.195 and 0.04 with completeness 0.5 / 1.0 / 0.8. The first is blind
      (rho 0.5) in a band around its own boundary, where the second still
      certifies the other label nearby, so the cascade certifies points whose
      label flips within epsilon. Deterministic; seed is ignored.
    * ``agree``: three identical constituents; no ensembler can misbehave.
    * ``thm1-minimal``: two constituents placing the classic two-point
      counterexample at (0, 0) and (epsilon, 0).
    * ``random``: three random linear constituents with regional completeness
      factors; still sound by construction for every seed.
    """
    if norm not in NORMS:
        raise DataError(f"norm must be one of {NORMS}, got {norm!r}")
    if epsilon <= 0:
        raise DataError(f"epsilon must be positive, got {epsilon}")

    if scenario == "fig1":
        rows3 = _two_class_rows(extra_class=True)
        cone = np.array([[1.0, 0.0], [-1.0, 0.0], [0.0, 2.0]])
        # boundary offsets are kept away from multiples of the default grid
        # step so no certification threshold lands exactly on a grid point
        models = [
            LinearClassifier(rows3, np.array([0.0, 0.0, -10.0]), norm, rho=0.5),
            LinearClassifier(rows3, np.array([0.195, -0.195, -10.0]), norm, rho=1.0),
            LinearClassifier(cone, np.array([-0.04, 0.04, -0.8]), norm, rho=0.8),
        ]
        truth_model = LinearClassifier(cone, np.array([0.1, -0.1, -0.8]), norm)
        m = 3
    elif scenario == "agree":
        cone = np.array([[1.0, 0.0], [-1.0, 0.0], [0.0, 2.0]])
        shared = LinearClassifier(cone, np.array([0.0, 0.0, -0.8]), norm, rho=0.9)
        models = [shared, shared, shared]
        truth_model = LinearClassifier(cone, np.array([0.0, 0.0, -0.8]), norm)
        m = 3
    elif scenario == "thm1-minimal":
        rows2 = _two_class_rows(extra_class=False)
        e = float(epsilon)
        models = [
            # label 0 iff x > -1.5 eps; half-blind certifier
            LinearClassifier(rows2, np.array([1.5 * e, -1.5 * e]), norm, rho=0.5),
            # label 0 iff x > 2.5 eps; also half-blind
            LinearClassifier(rows2, np.array([-2.5 * e, 2.5 * e]), norm, rho=0.5),
        ]
        truth_model = LinearClassifier(rows2, np.array([-0.5 * e, 0.5 * e]), norm)
        m = 2
    elif scenario == "random":
        rng = np.random.default_rng(seed)
        models = []
        for _ in range(3):
            W = rng.normal(0.0, 1.0, size=(3, 2))
            b = rng.uniform(-0.5, 0.5, size=3)
            direction = rng.normal(0.0, 1.0, size=2)
            direction /= max(float(np.hypot(*direction)), 1e-12)
            rho = RegionalRho(
                normal=(float(direction[0]), float(direction[1])),
                offset=float(rng.uniform(-0.3, 0.3)),
                inside=float(rng.uniform(0.3, 1.0)),
                outside=float(rng.uniform(0.3, 1.0)),
            )
            models.append(LinearClassifier(W, b, norm, rho=rho))
        truth_model = LinearClassifier(
            rng.normal(0.0, 1.0, size=(3, 2)), rng.uniform(-0.5, 0.5, size=3), norm
        )
        m = 3
    else:
        raise DataError(f"unknown scenario {scenario!r}; expected one of {SCENARIOS}")

    grid = _evaluate_grid(models, truth_model, h, epsilon, norm, box, m)
    return models, grid


@dataclass(frozen=True)
class Violation:
    """A certified grid point whose ensemble label differs within epsilon.

    ``point`` carries its certificate (cert must be 1); ``point_prime`` is a
    grid point at most epsilon away under the declared norm where the
    ensemble's label differs. Existence of one such pair refutes soundness of
    the ensembler's certificate on this grid.
    """

    point: tuple[float, float]
    point_prime: tuple[float, float]
    index: tuple[int, int]
    index_prime: tuple[int, int]
    distance: float
    output: CertOutput
    output_prime: CertOutput

    def __post_init__(self) -> None:
        if self.output.cert != 1:
            raise DataError("violation source point must be certified")
        if self.output.label == self.output_prime.label:
            raise DataError("violation labels must differ")


def _offsets(h: float, epsilon: float, norm: str) -> list[tuple[int, int, float]]:
    dmax = int(math.floor(epsilon * (1.0 + _ENUM_RTOL) / h))
    offs: list[tuple[int, int, float]] = []
    for di in range(-dmax, dmax + 1):
        for dj in range(-dmax, dmax + 1):
            if di == 0 and dj == 0:
                continue
            dist = math.hypot(di * h, dj * h) if norm == NORM_L2 else max(abs(di * h), abs(dj * h))
            # strict: a pair is in scope only if its distance is <= epsilon
            # as computed; rounding may drop pairs sitting exactly on the
            # epsilon shell, which under-reports (sound) rather than
            # fabricating out-of-ball witnesses (unsound)
            if dist <= epsilon:
                offs.append((di, dj, dist))
    return offs


def find_violations_from_outputs(
    grid: ToyGrid,
    labels: np.ndarray,
    certs: np.ndarray,
    epsilon: float | None = None,
    norm: str | None = None,
) -> list[Violation]:
    """Scan one system's per-grid-point answers for certificate violations.

    For every certified point, every grid point within epsilon is checked for
    a differing label. Pairs are returned sorted by (source index, witness
    index); each certified endpoint of a mutually-certified pair yields its
    own entry.
    """
    epsilon = grid.epsilon if epsilon is None else float(epsilon)
    norm = grid.norm if norm is None else norm
    if norm not in NORMS:
        raise DataError(f"norm must be one of {NORMS}, got {norm!r}")
    nx, ny = grid.shape
    if nx < 2 or ny < 2:
        raise GuardError(f"grid {nx}x{ny} too small to scan")
    if epsilon <= 0:
        raise DataError(f"epsilon must be positive, got {epsilon}")
    if grid.h > epsilon / 4:
        raise GuardError(
            f"grid step {grid.h} too coarse for epsilon {epsilon}: need h <= epsilon / 4"
        )
    labels = np.asarray(labels, dtype=np.int64)
    certs = np.asarray(certs, dtype=np.int64)
    if labels.shape != (nx, ny) or certs.shape != (nx, ny):
        raise DimensionError(f"per-point answers must be ({nx}, {ny})")

    found: list[Violation] = []
    for di, dj, dist in _offsets(grid.h, epsilon, norm):
        a0, b0 = max(0, -di), nx - max(0, di)
        a1, b1 = max(0, -dj), ny - max(0, dj)
        if b0 <= a0 or b1 <= a1:
            continue
        src_l = labels[a0:b0, a1:b1]
        dst_l = labels[a0 + di : b0 + di, a1 + dj : b1 + dj]
        src_c = certs[a0:b0, a1:b1]
        hits = np.argwhere((src_c == 1) & (src_l != dst_l))
        for ii, jj in hits:
            i, j = int(ii) + a0, int(jj) + a1
            i2, j2 = i + di, j + dj
            found.append(
                Violation(
                    point=(float(grid.xs[i]), float(grid.ys[j])),
                    point_prime=(float(grid.xs[i2]), float(grid.ys[j2])),
                    index=(i, j),
                    index_prime=(i2, j2),
                    distance=dist,
                    output=CertOutput(int(labels[i, j]), 1),
                    output_prime=CertOutput(int(labels[i2, j2]), int(certs[i2, j2])),
                )
            )
    found.sort(key=lambda v: (v.index, v.index_prime))
    return found


def _ensemble_grid_outputs(
    grid: ToyGrid,
    method: str,
    weights: WeightVector | Sequence[float] | None = None,
    prefix_bound: str = "literal",
    fallback: str | int = "plurality",
    seed: int = 0,
) -> tuple[np.ndarray, np.ndarray]:
    nx, ny = grid.shape
    k = nx * ny
    flat = grid.outputs.reshape(k, grid.n_models, 2)
    if method == "cascade":
        est = CascadeEnsemble()
    elif method == "uniform":
        est = UniformVotingEnsemble()
    elif method == "weighted":
        est = WeightedVotingEnsemble(weights=weights)
    elif method == "permutation":
        est = PermutationCascadeEnsemble(prefix_bound=prefix_bound, fallback=fallback, seed=seed)
    else:
        raise DataError(f"unknown method {method!r}")
    if method == "weighted" and weights is None:
        est.fit(grid.to_record_set())  # learn from grid truth
    else:
        est.fit(flat)
    out = est.ensemble_outputs(flat)
    return out[:, 0].reshape(nx, ny), out[:, 1].reshape(nx, ny)


def find_violations(
    grid: ToyGrid,
    method: str,
    epsilon: float | None = None,
    norm: str | None = None,
    weights: WeightVector | Sequence[float] | None = None,
    prefix_bound: str = "literal",
    fallback: str | int = "plurality",
    seed: int = 0,
) -> list[Violation]:
    """Run an ensembling method over the grid and scan it for violations."""
    labels, certs = _ensemble_grid_outputs(grid, method, weights, prefix_bound, fallback, seed)
    return find_violations_from_outputs(grid, labels, certs, epsilon, norm)


# ---------------------------------------------------------------------------
# files: grid CSV, violations CSV, SVG
# ---------------------------------------------------------------------------


def write_grid_csv(grid: ToyGrid, path: str) -> None:
    """Write the grid as CSV: px,py,truth,s0_label,s0_cert,... row-major."""
    n = grid.n_models
    header = ["px", "py", "truth"]
    for s in range(n):
        header += [f"s{s}_label", f"s{s}_cert"]
    nx, ny = grid.shape
    with open(path, "w", newline="") as fh:
        wr = csv.writer(fh)
        wr.writerow(header)
        for i in range(nx):
            for j in range(ny):
                row = [repr(float(grid.xs[i])), repr(float(grid.ys[j])), int(grid.truth[i, j])]
                for s in range(n):
                    row += [int(grid.outputs[i, j, s, 0]), int(grid.outputs[i, j, s, 1])]
                wr.writerow(row)


def read_grid_csv(path: str, epsilon: float = 0.08, norm: str = NORM_L2) -> ToyGrid:
    """Load a grid CSV written by :func:`write_grid_csv`.

    The CSV carries no epsilon/norm metadata (records files do); pass the
    values the certificates were computed for.
    """
    with open(path, newline="") as fh:
        rd = csv.reader(fh)
        try:
            header = next(rd)
        except StopIteration:
            raise DataError(f"{path}: empty file") from None
        if header[:3] != ["px", "py", "truth"] or (len(header) - 3) % 2 != 0:
            raise DataError(f"{path}: unexpected header {header!r}")
        n = (len(header) - 3) // 2
        for s in range(n):
            if header[3 + 2 * s] != f"s{s}_label" or header[4 + 2 * s] != f"s{s}_cert":
                raise DataError(f"{path}: unexpected header {header!r}")
        rows = []
        for lineno, row in enumerate(rd, start=2):
            if len(row) != len(header):
                raise DataError(f"{path}:{lineno}: expected {len(header)} fields, got {len(row)}")
            try:
                rows.append([float(row[0]), float(row[1])] + [int(v) for v in row[2:]])
            except ValueError as exc:
                raise DataError(f"{path}:{lineno}: {exc}") from None

    if not rows:
        return ToyGrid(
            np.zeros(0),
            np.zeros(0),
            np.zeros((0, 0), dtype=np.int64),
            np.zeros((0, 0, n, 2), dtype=np.int64),
            float(epsilon),
            norm,
            2,
            1.0,
        )
    # rows were written row-major (x outer), so the leading block shares px
    ys: list[float] = []
    for px, py, *_ in rows:
        if px != rows[0][0]:
            break
        ys.append(py)
    ny = len(ys)
    if len(rows) % ny != 0:
        raise DataError(f"{path}: rows do not form a full grid (ny = {ny})")
    nx = len(rows) // ny
    xs = [rows[i * ny][0] for i in range(nx)]
    truth = np.zeros((nx, ny), dtype=np.int64)
    outputs = np.zeros((nx, ny, n, 2), dtype=np.int64)
    for idx, row in enumerate(rows):
        i, j = divmod(idx, ny)
        if row[0] != xs[i] or row[1] != ys[j]:
            raise DataError(f"{path}: row {idx + 2} out of row-major grid order")
        truth[i, j] = row[2]
        for s in range(n):
            outputs[i, j, s, 0] = row[3 + 2 * s]
            outputs[i, j, s, 1] = row[4 + 2 * s]
    labels_seen = np.concatenate([outputs[:, :, :, 0].reshape(-1), truth.reshape(-1)])
    m = infer_num_classes(labels_seen)
    # endpoint-based step: a single adjacent diff picks up rounding dust
    # (e.g. -0.99 - -1.0 != 0.01) and that dust decides whether pairs on the
    # exact-epsilon shell stay in scanning scope
    if nx > 1:
        h = float(xs[-1] - xs[0]) / (nx - 1)
    elif ny > 1:
        h = float(ys[-1] - ys[0]) / (ny - 1)
    else:
        h = 1.0
    return ToyGrid(
        np.asarray(xs), np.asarray(ys), truth, outputs, float(epsilon), norm, m, h
    )


def write_violations_csv(violations: Sequence[Violation], path: str) -> None:
    with open(path, "w", newline="") as fh:
        wr = csv.writer(fh)
        wr.writerow(["px", "py", "qx", "qy", "distance", "p_label", "p_cert", "q_label", "q_cert"])
        for v in violations:
            wr.writerow(
                [
                    repr(v.point[0]),
                    repr(v.point[1]),
                    repr(v.point_prime[0]),
                    repr(v.point_prime[1]),
                    repr(v.distance),
                    v.output.label,
                    v.output.cert,
                    v.output_prime.label,
                    v.output_prime.cert,
                ]
            )


# label -> (certified shade, uncertified shade); extras cycle gray
_PALETTE = {
    0: ("#b22222", "#f3bcbc"),
    1: ("#1f4fbf", "#bccdf3"),
    2: ("#1e8c1e", "#bfe6bf"),
}
_PALETTE_OTHER = ("#555555", "#cccccc")


def _fill(label: int, cert: int) -> str:
    dark, light = _PALETTE.get(int(label), _PALETTE_OTHER)
    return dark if cert == 1 else light


def export_figure(
    grid: ToyGrid,
    path: str,
    systems: Mapping[str, tuple[np.ndarray, np.ndarray]] | None = None,
    cell: int = 2,
    csv_path: str | None = None,
) -> str:
    """Render per-system grid panels to an SVG raster; returns the SVG text.

    Label picks the hue (0 red, 1 blue, 2 green, others gray); a raised
    certificate picks the dark shade, no certificate the light one. By
    default the panels are each constituent plus the cascade and the uniform
    vote. Runs of equal cells are merged into single rects along x.

    The point data behind the panels is also written as a grid CSV next to
    the SVG (same name, ``.csv`` suffix) unless ``csv_path`` overrides it.
    """
    if csv_path is None:
        stem = path[: -len(".svg")] if path.endswith(".svg") else path
        csv_path = stem + ".csv"
    write_grid_csv(grid, csv_path)
    if systems is None:
        systems = {}
        for s in range(grid.n_models):
            systems[f"s{s}"] = (grid.outputs[:, :, s, 0], grid.outputs[:, :, s, 1])
        if grid.shape[0] * grid.shape[1] > 0:
            systems["cascade"] = _ensemble_grid_outputs(grid, "cascade")
            systems["uniform"] = _ensemble_grid_outputs(grid, "uniform")

    nx, ny = grid.shape
    pad, title_h = 10, 16
    panel_w, panel_h = max(nx * cell, 60), ny * cell + title_h
    width = pad + len(systems) * (panel_w + pad)
    height = pad + panel_h + pad
    parts = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}" '
        f'viewBox="0 0 {width} {height}">',
        f'<rect width="{width}" height="{height}" fill="#ffffff"/>',
    ]
    x0 = pad
    for name, (labels, certs) in systems.items():
        labels = np.asarray(labels, dtype=np.int64)
        certs = np.asarray(certs, dtype=np.int64)
        if labels.shape != (nx, ny) or certs.shape != (nx, ny):
            raise DimensionError(f"panel {name!r}: answers must be ({nx}, {ny})")
        parts.append(
            f'<text x="{x0}" y="{pad + 11}" font-family="sans-serif" font-size="11">{name}</text>'
        )
        top = pad + title_h
        for j in range(ny - 1, -1, -1):  # larger y drawn higher
            ypix = top + (ny - 1 - j) * cell
            i = 0
            while i < nx:
                run = i + 1
                while (
                    run < nx
                    and labels[run, j] == labels[i, j]
                    and certs[run, j] == certs[i, j]
                ):
                    run += 1
                parts.append(
                    f'<rect x="{x0 + i * cell}" y="{ypix}" width="{(run - i) * cell}" '
                    f'height="{cell}" fill="{_fill(labels[i, j], certs[i, j])}"/>'
                )
                i = run
        x0 += panel_w + pad
    parts.append("</svg>")
    svg = "\n".join(parts)
    with open(path, "w") as fh:
        fh.write(svg)
    return svg


# ---------------------------------------------------------------------------
# the 100-record worked example
# ---------------------------------------------------------------------------

_EX1_RANGES = (
    ((0, 49),),
    ((25, 74),),
    ((0, 24), (50, 74)),
)


def build_example1_fixture(completion: str = "wrong-uncert") -> RecordSet:
    """100-record, 3-constituent fixture with interlocking certified ranges.

    Constituent s is certified-correct exactly on its index ranges
    ([0,49] / [25,74] / [0,24] and [50,74]); elsewhere it answers a wrong
    label, uncertified by default. Every record index in [0, 74] has exactly
    two certified-correct constituents, so the uniform vote certifies 75% of
    the records while each constituent alone manages 50%.

    ``completion`` picks what constituents answer off their good ranges:
    "wrong-uncert" (wrong label, cert 0) or "wrong-cert" (wrong label,
    cert 1 — an unsound-constituent stress variant; the vote's certified
    robust accuracy is unchanged).
    """
    if completion not in ("wrong-uncert", "wrong-cert"):
        raise DataError(f"unknown completion {completion!r}")
    wrong_cert = 1 if completion == "wrong-cert" else 0
    k, n, m = 100, 3, 3
    labels = np.zeros((k, n), dtype=np.int64)
    certs = np.zeros((k, n), dtype=np.int64)
    y = np.arange(k, dtype=np.int64) % m
    for s in range(n):
        good = np.zeros(k, dtype=bool)
        for lo, hi in _EX1_RANGES[s]:
            good[lo : hi + 1] = True
        labels[good, s] = y[good]
        certs[good, s] = 1
        labels[~good, s] = (y[~good] + 1) % m
        certs[~good, s] = wrong_cert
    ids = [f"s{i:03d}" for i in range(k)]
    return RecordSet.from_arrays(
        labels, certs, y, m, epsilon=0.1, norm=NORM_L2, input_ids=ids
    )
