import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

import mapmetrics.metrics as metrics_module
from mapmetrics import (
    CorrespondenceSet,
    PointCloud,
    accuracy,
    build_correspondences,
    chamfer_distance,
    completeness,
    mean_map_entropy,
)

from conftest import chamfer_oracle, jacobi_eigh3, mme_oracle

seeds = st.integers(0, 2**32 - 1)


def _corr(distances, n_gt):
    d = np.asarray(distances, dtype=float)
    ids = np.arange(len(d), dtype=np.int64)
    return CorrespondenceSet(gt_ids=ids, est_ids=ids, distances=d,
                             n_gt=n_gt, n_est=n_gt)


class TestAccuracyCompleteness:
    def test_known_values(self):
        corr = _corr([0.01, 0.03], n_gt=4)
        assert accuracy(corr) == pytest.approx(2.0, abs=1e-12)
        assert completeness(corr) == 0.5

    def test_accuracy_none_without_inliers(self):
        corr = _corr([], n_gt=3)
        assert accuracy(corr) is None
        assert completeness(corr) == 0.0

    def test_integration_through_gate(self):
        gt = PointCloud(np.array([[0.0, 0.0, 0.0], [1.0, 0.0, 0.0]]))
        est = PointCloud(np.array([[0.02, 0.0, 0.0], [1.08, 0.0, 0.0]]))
        corr = build_correspondences(gt, est, tau=0.05)
        assert accuracy(corr) == pytest.approx(2.0, abs=1e-9)
        assert completeness(corr) == 0.5

    def test_pair_at_exactly_tau_is_excluded(self):
        gt = PointCloud(np.array([[0.0, 0.0, 0.0]]))
        est = PointCloud(np.array([[0.1, 0.0, 0.0]]))
        corr = build_correspondences(gt, est, tau=0.1)
        assert accuracy(corr) is None
        assert completeness(corr) == 0.0


class TestChamfer:
    def test_two_single_points(self):
        a = PointCloud(np.array([[0.0, 0.0, 0.0]]))
        b = PointCloud(np.array([[0.03, 0.0, 0.0]]))
        assert chamfer_distance(a, b) == pytest.approx(6.0, abs=1e-12)

    @settings(max_examples=40, deadline=None)
    @given(seeds)
    def test_matches_quadratic_oracle(self, seed):
        rng = np.random.default_rng(seed)
        a = rng.normal(size=(rng.integers(2, 100), 3))
        b = rng.normal(size=(rng.integers(2, 100), 3))
        got = chamfer_distance(PointCloud(a), PointCloud(b))
        assert got == pytest.approx(chamfer_oracle(a, b), abs=1e-9)

    def test_symmetry_is_exact(self):
        rng = np.random.default_rng(5)
        a = PointCloud(rng.normal(size=(60, 3)))
        b = PointCloud(rng.normal(size=(80, 3)) + 0.2)
        assert chamfer_distance(a, b) == chamfer_distance(b, a)

    def test_no_gate_so_outliers_count(self):
        rng = np.random.default_rng(6)
        pts = rng.normal(size=(100, 3))
        base = chamfer_distance(PointCloud(pts), PointCloud(pts))
        spiked = np.vstack([pts, [[500.0, 0.0, 0.0]]])
        with_outlier = chamfer_distance(PointCloud(pts), PointCloud(spiked))
        assert base == 0.0
        # one remote point contributes ~ dist/101 to the est->gt mean
        assert with_outlier > 100.0 * 400.0 / 101

    def test_rejects_empty_clouds(self):
        with pytest.raises(ValueError):
            chamfer_distance(PointCloud(np.empty((0, 3))),
                             PointCloud(np.zeros((1, 3))))


class TestMeanMapEntropy:
    def _rough_patch(self, n=150, seed=7):
        rng = np.random.default_rng(seed)
        uv = rng.uniform(0, 1.2, size=(n, 2))
        z = 0.002 * rng.normal(size=n)
        return np.stack([uv[:, 0], uv[:, 1], z], axis=1)

    def test_matches_brute_force_oracle(self):
        pts = self._rough_patch()
        got = mean_map_entropy(PointCloud(pts), radius=0.15, min_neighbors=10)
        want, n_valid = mme_oracle(pts, radius=0.15, min_neighbors=10)
        assert got.n_valid == n_valid
        assert got.n_excluded == len(pts) - n_valid
        assert got.value == pytest.approx(want, abs=1e-9)

    def test_neighbor_floor_is_exact(self):
        # 11 clustered points give each one exactly 10 neighbors
        rng = np.random.default_rng(8)
        cluster = 0.01 * rng.normal(size=(11, 3))
        ok = mean_map_entropy(PointCloud(cluster), radius=1.0, min_neighbors=10)
        assert ok.n_valid == 11
        short = mean_map_entropy(PointCloud(cluster[:10]), radius=1.0,
                                 min_neighbors=10)
        assert short.value is None
        assert short.n_valid == 0
        assert short.n_excluded == 10

    def test_min_eigenvalue_formula(self):
        pts = self._rough_patch(n=60, seed=9)
        got = mean_map_entropy(PointCloud(pts), radius=0.3, min_neighbors=10,
                               formula="min_eigenvalue")
        values = []
        for i in range(len(pts)):
            d = np.sqrt(((pts - pts[i]) ** 2).sum(axis=1))
            ball = pts[d <= 0.3]
            if len(ball) - 1 < 10:
                continue
            dev = ball - ball.mean(axis=0)
            cov = dev.T @ dev / (len(ball) - 1) + 1e-9 * np.eye(3)
            w, _ = jacobi_eigh3(cov)
            values.append(-np.log(w[0]))
        assert got.value == pytest.approx(float(np.mean(values)), abs=1e-9)

    def test_rejects_unknown_formula(self):
        with pytest.raises(ValueError):
            mean_map_entropy(PointCloud(np.zeros((1, 3))), formula="median")

    def test_chunking_does_not_change_the_result(self, monkeypatch):
        pts = self._rough_patch(n=120, seed=10)
        full = mean_map_entropy(PointCloud(pts), radius=0.2, min_neighbors=8)
        monkeypatch.setattr(metrics_module, "_MME_CHUNK", 13)
        chunked = mean_map_entropy(PointCloud(pts), radius=0.2, min_neighbors=8)
        assert chunked.n_valid == full.n_valid
        assert chunked.n_excluded == full.n_excluded
        # summation regrouping may move the mean by an ulp
        assert chunked.value == pytest.approx(full.value, rel=1e-12)
