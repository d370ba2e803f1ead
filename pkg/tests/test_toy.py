"""2D lab: exact linear certification, scenario grids, and the violation refuter."""

import math

import numpy as np
import pytest

from certvote import (
    CertOutput,
    DataError,
    GuardError,
    LinearClassifier,
    RegionalRho,
    ToyGrid,
    WeightVector,
    apply_ensembler,
    build_example1_fixture,
    certify_linear,
    cra,
    find_violations,
    find_violations_from_outputs,
    gen_toy,
    read_grid_csv,
    write_grid_csv,
    write_violations_csv,
)
from certvote.toy import export_figure


def bisect_flip_radius(clf, x, n_angles=1440, t_max=50.0, iters=48):
    """Distance to the nearest label flip, measured by dense ray bisection.

    Scans rays in all directions (unit length under the classifier's norm)
    and bisects each one for the first label change. Returns an upper bound
    on the true flip distance that is tight for 2D linear boundaries.
    """
    x = np.asarray(x, dtype=float)
    base = int(np.argmax(clf.logits(x[None, :])[0]))
    ang = np.linspace(0.0, 2 * math.pi, n_angles, endpoint=False)
    dirs = np.stack([np.cos(ang), np.sin(ang)], axis=1)
    if clf.norm == "linf":
        dirs = dirs / np.max(np.abs(dirs), axis=1, keepdims=True)

    def labels_at(t):
        pts = x[None, :] + t[:, None] * dirs
        return np.argmax(clf.logits(pts), axis=1)

    hi = np.full(n_angles, t_max)
    flipped = labels_at(hi) != base
    if not np.any(flipped):
        return math.inf
    lo = np.zeros(n_angles)
    for _ in range(iters):
        mid = 0.5 * (lo + hi)
        mid_flipped = labels_at(mid) != base
        hi = np.where(mid_flipped, mid, hi)
        lo = np.where(mid_flipped, lo, mid)
    return float(np.min(hi[flipped]))


BINARY_X = LinearClassifier(np.array([[1.0, 0.0], [-1.0, 0.0]]), np.zeros(2), norm="l2", rho=1.0)


class TestCertifyLinear:
    def test_certified_away_from_boundary(self):
        assert certify_linear(BINARY_X, (1.0, 0.0), epsilon=0.5) == CertOutput(0, 1)

    def test_uncertified_near_boundary(self):
        assert certify_linear(BINARY_X, (0.3, 0.0), epsilon=0.5) == CertOutput(0, 0)

    def test_zero_epsilon_certifies_strict_argmax(self):
        assert certify_linear(BINARY_X, (0.01, 0.7), epsilon=0.0) == CertOutput(0, 1)

    def test_duplicate_rows_give_infinite_radius(self):
        clf = LinearClassifier(np.array([[1.0, 0.0], [1.0, 0.0]]), np.zeros(2), norm="l2", rho=1.0)
        assert certify_linear(clf, (0.2, 0.2), epsilon=1e9) == CertOutput(0, 1)

    def test_rho_shrinks_the_certified_radius(self):
        half = LinearClassifier(BINARY_X.W, BINARY_X.b, norm="l2", rho=0.5)
        assert certify_linear(BINARY_X, (0.8, 0.0), epsilon=0.5).cert == 1
        assert certify_linear(half, (0.8, 0.0), epsilon=0.5).cert == 0

    @pytest.mark.parametrize("norm", ["l2", "linf"])
    def test_radius_matches_ray_bisection_oracle(self, norm):
        rng = np.random.default_rng(41)
        checked = 0
        while checked < 12:
            m = int(rng.integers(2, 5))
            clf = LinearClassifier(
                rng.normal(size=(m, 2)), rng.uniform(-0.5, 0.5, size=m), norm=norm, rho=1.0
            )
            x = rng.uniform(-1, 1, size=2)
            r = bisect_flip_radius(clf, x)
            if not math.isfinite(r) or r < 1e-3:
                continue
            assert certify_linear(clf, x, epsilon=r * (1 - 1e-3)) == CertOutput(
                certify_linear(clf, x, epsilon=r * (1 + 1e-3)).label, 1
            )
            assert certify_linear(clf, x, epsilon=r * (1 + 1e-3)).cert == 0
            checked += 1

    @pytest.mark.parametrize("norm", ["l2", "linf"])
    def test_certified_ball_probe(self, norm):
        # soundness probe: no label change anywhere inside a certified ball
        rng = np.random.default_rng(53)
        for _ in range(10):
            clf = LinearClassifier(
                rng.normal(size=(3, 2)), rng.uniform(-0.5, 0.5, size=3), norm=norm,
                rho=float(rng.uniform(0.3, 1.0)),
            )
            x = rng.uniform(-1, 1, size=2)
            eps = 0.15
            out = certify_linear(clf, x, epsilon=eps)
            if out.cert != 1:
                continue
            probes = rng.uniform(-1, 1, size=(400, 2))
            if norm == "l2":
                probes = probes / np.maximum(np.linalg.norm(probes, axis=1, keepdims=True), 1e-12)
                probes = probes * rng.uniform(0, eps, size=(400, 1))
            else:
                probes = probes * eps
            labels = np.argmax(clf.logits(x[None, :] + probes), axis=1)
            assert np.all(labels == out.label)

    def test_invalid_rho_rejected(self):
        with pytest.raises(DataError):
            LinearClassifier(BINARY_X.W, BINARY_X.b, norm="l2", rho=0.0)
        with pytest.raises(DataError):
            LinearClassifier(BINARY_X.W, BINARY_X.b, norm="l2", rho=1.5)


class TestRegionalRho:
    def test_half_plane_split(self):
        rho = RegionalRho(normal=(1.0, 0.0), offset=0.0, inside=0.9, outside=0.4)
        vals = rho.at(np.array([[0.5, 0.0], [-0.5, 0.0]]))
        assert vals.tolist() == [0.9, 0.4]

    def test_never_certifies_more_than_exact(self):
        rng = np.random.default_rng(3)
        W, b = rng.normal(size=(3, 2)), rng.uniform(-0.5, 0.5, size=3)
        exact = LinearClassifier(W, b, norm="l2", rho=1.0)
        weak = LinearClassifier(
            W, b, norm="l2", rho=RegionalRho((0.0, 1.0), 0.1, 0.6, 0.3)
        )
        pts = rng.uniform(-1, 1, size=(500, 2))
        _, cert_exact = exact.predict_certify(pts, 0.1)
        _, cert_weak = weak.predict_certify(pts, 0.1)
        assert np.all(cert_weak <= cert_exact)


class TestGenToy:
    def test_unknown_scenario(self):
        with pytest.raises(DataError):
            gen_toy("fig2")

    def test_fig1_shape(self):
        models, grid = gen_toy("fig1")
        assert len(models) == 3
        assert grid.shape == (201, 201) and grid.n_models == 3
        assert grid.epsilon == 0.08 and grid.norm == "l2" and grid.h == 0.01

    def test_every_scenario_constituent_is_sound_on_its_grid(self):
        for scenario in ("fig1", "agree", "thm1-minimal", "random"):
            _, grid = gen_toy(scenario, seed=4)
            for s in range(grid.n_models):
                bad = find_violations_from_outputs(
                    grid, grid.outputs[:, :, s, 0], grid.outputs[:, :, s, 1]
                )
                assert bad == [], f"constituent {s} of {scenario}"

    def test_shrinking_rho_never_flips_cert_on(self):
        models, grid = gen_toy("fig1")
        pts = grid.points()
        for clf in models:
            rho = clf.rho if isinstance(clf.rho, float) else None
            if rho is None:
                continue
            weaker = LinearClassifier(clf.W, clf.b, norm=clf.norm, rho=rho * 0.5)
            _, strong = clf.predict_certify(pts, grid.epsilon)
            _, weak = weaker.predict_certify(pts, grid.epsilon)
            assert np.all(weak <= strong)

    def test_random_scenario_is_seeded(self):
        _, a = gen_toy("random", seed=7, h=0.05)
        _, b = gen_toy("random", seed=7, h=0.05)
        _, c = gen_toy("random", seed=8, h=0.05)
        np.testing.assert_array_equal(a.outputs, b.outputs)
        assert not np.array_equal(a.outputs, c.outputs)


class TestFindViolations:
    def test_fig1_cascade_refuted(self):
        _, grid = gen_toy("fig1")
        found = find_violations(grid, "cascade")
        assert len(found) == 148554
        first = found[0]
        assert first.index == (77, 150) and first.index_prime == (85, 150)
        assert first.output == CertOutput(1, 1)
        # a designated interior pair: certified label 0 sits 0.07 away
        # from a certified label-1 answer
        hit = [
            v
            for v in found
            if abs(v.point[0] + 0.10) < 1e-9
            and abs(v.point[1]) < 1e-9
            and abs(v.point_prime[0] + 0.17) < 1e-9
            and abs(v.point_prime[1]) < 1e-9
        ]
        assert len(hit) == 1
        assert hit[0].output == CertOutput(0, 1)
        assert hit[0].output_prime == CertOutput(1, 1)
        assert hit[0].distance == pytest.approx(0.07)

    def test_fig1_voting_clean(self):
        _, grid = gen_toy("fig1")
        assert find_violations(grid, "uniform") == []
        assert find_violations(grid, "weighted", weights=WeightVector((0.2, 0.5, 0.3))) == []
        assert find_violations(grid, "permutation") == []

    def test_two_constituent_minimal_counterexample(self):
        _, grid = gen_toy("thm1-minimal")
        found = find_violations(grid, "cascade")
        assert len(found) == 130704
        from_origin = [v for v in found if v.index == (100, 100)]
        assert len(from_origin) == 45
        assert from_origin[0].output == CertOutput(1, 1)
        assert all(v.output_prime.label == 0 for v in from_origin)
        assert find_violations(grid, "uniform") == []

    def test_identical_constituents_never_violate(self):
        _, grid = gen_toy("agree")
        for method in ("cascade", "uniform", "weighted", "permutation"):
            assert find_violations(grid, method) == []

    def test_violation_fields_validated(self):
        with pytest.raises(DataError):
            from certvote.toy import Violation

            Violation((0, 0), (0, 0.01), (0, 0), (0, 1), 0.01, CertOutput(0, 0), CertOutput(1, 0))

    def test_reported_distances_within_epsilon(self):
        _, grid = gen_toy("thm1-minimal", h=0.02)
        for v in find_violations(grid, "cascade")[:2000]:
            assert v.distance <= grid.epsilon

    def test_resolution_guard(self):
        _, grid = gen_toy("fig1", h=0.05)
        with pytest.raises(GuardError):
            find_violations(grid, "cascade", epsilon=0.08)

    def test_tiny_grid_guard(self):
        grid = ToyGrid(
            np.array([0.0]),
            np.array([0.0, 0.1]),
            np.zeros((1, 2), dtype=np.int64),
            np.zeros((1, 2, 2, 2), dtype=np.int64),
            epsilon=0.08,
            norm="l2",
            m=2,
            h=0.01,
        )
        with pytest.raises(GuardError):
            find_violations(grid, "cascade")

    def test_bad_epsilon(self):
        _, grid = gen_toy("fig1", h=0.04, epsilon=0.2)
        with pytest.raises(DataError):
            find_violations(grid, "cascade", epsilon=-1.0)

    def test_deterministic(self):
        _, grid = gen_toy("random", seed=15, h=0.04, epsilon=0.16)
        a = find_violations(grid, "cascade")
        b = find_violations(grid, "cascade")
        assert a == b


class TestGridCsv:
    def test_roundtrip(self, tmp_path):
        _, grid = gen_toy("fig1", h=0.05, epsilon=0.2)
        path = str(tmp_path / "grid.csv")
        write_grid_csv(grid, path)
        back = read_grid_csv(path, epsilon=0.2, norm="l2")
        np.testing.assert_array_equal(back.xs, grid.xs)
        np.testing.assert_array_equal(back.ys, grid.ys)
        np.testing.assert_array_equal(back.truth, grid.truth)
        np.testing.assert_array_equal(back.outputs, grid.outputs)
        assert back.h == grid.h and back.m == grid.m

    def test_roundtrip_preserves_violation_scan(self, tmp_path):
        # the reconstructed step must keep exact-epsilon-shell pairs in scope
        _, grid = gen_toy("fig1")
        path = str(tmp_path / "grid.csv")
        write_grid_csv(grid, path)
        back = read_grid_csv(path)
        assert back.h == 0.01
        assert len(find_violations(back, "cascade")) == 148554

    def test_empty_grid(self, tmp_path):
        empty = ToyGrid(
            np.zeros(0),
            np.zeros(0),
            np.zeros((0, 0), dtype=np.int64),
            np.zeros((0, 0, 2, 2), dtype=np.int64),
            epsilon=0.08,
            norm="l2",
            m=2,
            h=0.01,
        )
        path = str(tmp_path / "empty.csv")
        write_grid_csv(empty, path)
        with open(path) as fh:
            assert fh.readline().startswith("px,py,truth,s0_label,s0_cert")
        back = read_grid_csv(path)
        assert back.shape == (0, 0)

    def test_bad_header(self, tmp_path):
        path = tmp_path / "bad.csv"
        path.write_text("px,py,s0_label\n")
        with pytest.raises(DataError):
            read_grid_csv(str(path))

    def test_ragged_rows(self, tmp_path):
        path = tmp_path / "ragged.csv"
        path.write_text("px,py,truth,s0_label,s0_cert\n0.0,0.0,1,0\n")
        with pytest.raises(DataError):
            read_grid_csv(str(path))

    def test_violations_csv(self, tmp_path):
        _, grid = gen_toy("thm1-minimal", h=0.02)
        found = find_violations(grid, "cascade")
        path = str(tmp_path / "v.csv")
        write_violations_csv(found, path)
        with open(path) as fh:
            lines = fh.read().splitlines()
        assert lines[0] == "px,py,qx,qy,distance,p_label,p_cert,q_label,q_cert"
        assert len(lines) == 1 + len(found)


class TestExportFigure:
    def test_default_panels_and_palette(self, tmp_path):
        _, grid = gen_toy("fig1", h=0.05, epsilon=0.2)
        path = str(tmp_path / "fig.svg")
        export_figure(grid, path)
        with open(path) as fh:
            svg = fh.read()
        for title in ("s0", "s1", "s2", "cascade", "uniform"):
            assert f">{title}<" in svg
        # certified shades for labels 0 and 1 must both appear
        assert "#b22222" in svg and "#1f4fbf" in svg
        assert svg.startswith("<svg") and svg.rstrip().endswith("</svg>")

    def test_sibling_csv_roundtrips(self, tmp_path):
        _, grid = gen_toy("fig1", h=0.05, epsilon=0.2)
        path = str(tmp_path / "fig.svg")
        export_figure(grid, path)
        back = read_grid_csv(str(tmp_path / "fig.csv"), epsilon=0.2, norm="l2")
        np.testing.assert_array_equal(back.outputs, grid.outputs)

    def test_empty_grid_writes_valid_files(self, tmp_path):
        empty = ToyGrid(
            np.zeros(0),
            np.zeros(0),
            np.zeros((0, 0), dtype=np.int64),
            np.zeros((0, 0, 3, 2), dtype=np.int64),
            epsilon=0.08,
            norm="l2",
            m=3,
            h=0.01,
        )
        path = str(tmp_path / "fig.svg")
        export_figure(empty, path)
        with open(path) as fh:
            assert "<svg" in fh.read()
        with open(tmp_path / "fig.csv") as fh:
            assert fh.readline().startswith("px,py,truth")


class TestExample1Fixture:
    def test_certified_correct_ranges(self, example1):
        want = [
            set(range(0, 50)),
            set(range(25, 75)),
            set(range(0, 25)) | set(range(50, 75)),
        ]
        for s in range(3):
            good = {
                i
                for i, rec in enumerate(example1.records)
                if rec.outputs[s] == CertOutput(rec.true_label, 1)
            }
            assert good == want[s]

    def test_constituent_cra_both_completions(self, example1, example1_cert_completion):
        for rs in (example1, example1_cert_completion):
            for s in range(3):
                preds = [r.outputs[s] for r in rs.records]
                assert cra(preds, rs) == 0.5

    def test_uniform_voting_cra_both_completions(self, example1, example1_cert_completion):
        for rs in (example1, example1_cert_completion):
            assert cra(apply_ensembler("uniform", rs), rs) == 0.75

    def test_cascade_cra_depends_on_completion(self, example1, example1_cert_completion):
        # regression values for the two shipped completions; only the
        # voting numbers above are fixed by construction
        assert cra(apply_ensembler("cascade", example1), example1) == 0.75
        assert cra(apply_ensembler("cascade", example1_cert_completion), example1_cert_completion) == 0.5

    def test_unknown_completion(self):
        with pytest.raises(DataError):
            build_example1_fixture(completion="optimistic")
