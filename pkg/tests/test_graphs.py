#!/usr/bin/env python3

import unittest
from pathlib import Path
import os
import sys

import numpy as np

# Necessary to load the local uspl package
if "NO_LOCAL_USPL" not in os.environ and (Path(__file__).parent.parent / 'uspl').exists():
    sys.path.insert(0, str(Path(__file__).parent.parent))

import uspl


def two_clusters(rng: np.random.Generator, sizes=(4, 3), offset: float = 100.0) -> tuple[np.ndarray, np.ndarray]:
    points = np.hstack([rng.standard_normal((2, sizes[0])), offset + rng.standard_normal((2, sizes[1]))])
    classes = np.repeat([0, 1], sizes)
    return points, classes


class TestHeatGraph(unittest.TestCase):

    def test_coincident_points(self):
        w = uspl.knn_heat_graph(np.zeros((3, 2)), knn=1, sigma=0.0)
        np.testing.assert_array_equal(w, [[0.0, 1.0], [1.0, 0.0]])
        np.testing.assert_array_equal(uspl.laplacian(w), [[1.0, -1.0], [-1.0, 1.0]])

    def test_laplacian_rows_vanish(self):
        rng = np.random.default_rng(0)
        w = uspl.knn_heat_graph(rng.standard_normal((3, 12)), knn=3, sigma=1.5)
        np.testing.assert_allclose(uspl.laplacian(w).sum(axis=1), 0.0, atol=1e-12)

    def test_quadratic_form(self):
        rng = np.random.default_rng(1)
        w = uspl.knn_heat_graph(rng.standard_normal((2, 10)), knn=3, sigma=1.0)
        lap = uspl.laplacian(w)
        x = rng.standard_normal(10)
        expected = 0.5 * np.sum(w * (x[:, None] - x[None, :]) ** 2)
        self.assertAlmostEqual(x @ lap @ x, expected, delta=1e-10)

    def test_union_is_symmetric(self):
        rng = np.random.default_rng(2)
        w = uspl.knn_heat_graph(rng.standard_normal((4, 15)), knn=2, sigma=2.0)
        np.testing.assert_array_equal(w, w.T)
        self.assertTrue(np.all(np.diag(w) == 0))
        # every point keeps at least its own two neighbors
        self.assertTrue(np.all((w > 0).sum(axis=1) >= 2))

    def test_too_many_neighbors(self):
        with self.assertRaises(ValueError):
            uspl.knn_heat_graph(np.zeros((2, 3)), knn=3, sigma=1.0)

    def test_bad_bandwidth(self):
        with self.assertRaises(uspl.DegenerateBandwidth):
            uspl.knn_heat_graph(np.array([[0.0, 1.0, 3.0]]), knn=1, sigma=0.0)


class TestLdaGraphs(unittest.TestCase):

    def test_two_classes(self):
        w_within, _ = uspl.lda_graphs([0, 0, 1])
        np.testing.assert_allclose(w_within, [[0.5, 0.5, 0.0], [0.5, 0.5, 0.0], [0.0, 0.0, 1.0]])

    def test_single_class(self):
        w_within, w_between = uspl.lda_graphs([3, 3, 3, 3])
        np.testing.assert_allclose(w_within, np.full((4, 4), 0.25))
        np.testing.assert_array_equal(w_between, np.zeros((4, 4)))

    def test_laplacians_sum_to_centering(self):
        rng = np.random.default_rng(3)
        classes = rng.integers(0, 4, 15)
        w_within, w_between = uspl.lda_graphs(classes)
        centering = np.eye(15) - np.full((15, 15), 1 / 15)
        np.testing.assert_allclose(uspl.laplacian(w_within) + uspl.laplacian(w_between), centering, atol=1e-12)

    def test_no_labels(self):
        with self.assertRaises(uspl.EmptyClass):
            uspl.lda_graphs([])


class TestLfdaGraphs(unittest.TestCase):

    def test_far_apart_classes(self):
        rng = np.random.default_rng(4)
        points, classes = two_clusters(rng)
        w_within, _ = uspl.lfda_graphs(points, classes, knn=1)
        self.assertTrue(np.all(w_within[:4, 4:] == 0))
        self.assertTrue(np.all(w_within[4:, :4] == 0))

        # affinities coded from the definition: exp(-d^2 / (s_i s_j)) / n_c
        for members in (np.arange(4), np.arange(4, 7)):
            block = points[:, members]
            d = np.linalg.norm(block[:, :, None] - block[:, None, :], axis=0)
            scales = np.array([np.sort(row[row > 0])[0] for row in d])
            expected = np.exp(-d ** 2 / np.outer(scales, scales)) / len(members)
            np.testing.assert_allclose(w_within[np.ix_(members, members)], expected, atol=1e-12)

    def test_single_class(self):
        rng = np.random.default_rng(5)
        points = rng.standard_normal((3, 6))
        w_within, w_between = uspl.lfda_graphs(points, np.zeros(6, dtype=int), knn=2)
        np.testing.assert_allclose(w_between, 0.0, atol=1e-15)
        np.testing.assert_allclose(w_between.sum(axis=1), 0.0, atol=1e-15)
        self.assertTrue(np.all(w_within > 0))

    def test_permutation_equivariance(self):
        rng = np.random.default_rng(6)
        points = rng.standard_normal((3, 9))
        classes = np.array([0, 1, 2, 0, 1, 2, 0, 1, 2])
        perm = rng.permutation(9)
        w_within, w_between = uspl.lfda_graphs(points, classes, knn=2)
        pw_within, pw_between = uspl.lfda_graphs(points[:, perm], classes[perm], knn=2)
        np.testing.assert_allclose(pw_within, w_within[np.ix_(perm, perm)], atol=1e-14)
        np.testing.assert_allclose(pw_between, w_between[np.ix_(perm, perm)], atol=1e-14)

    def test_label_count_mismatch(self):
        with self.assertRaises(uspl.DimensionMismatch):
            uspl.lfda_graphs(np.zeros((2, 3)), [0, 1], knn=1)


class TestMfaGraphs(unittest.TestCase):

    def test_saturated_intrinsic_graph(self):
        rng = np.random.default_rng(7)
        points, classes = two_clusters(rng)
        w_within, _ = uspl.mfa_graphs(points, classes, k1=10, k2=1)
        same = classes[:, None] == classes[None, :]
        np.testing.assert_array_equal(w_within, np.where(same & ~np.eye(7, dtype=bool), 1.0, 0.0))

    def test_penalty_takes_closest_pair(self):
        rng = np.random.default_rng(8)
        points, classes = two_clusters(rng)
        _, w_between = uspl.mfa_graphs(points, classes, k1=1, k2=1)
        cross = np.linalg.norm(points[:, :4, None] - points[:, None, 4:], axis=0)
        i, j = np.unravel_index(np.argmin(cross), cross.shape)
        expected = np.zeros((7, 7))
        expected[i, 4 + j] = expected[4 + j, i] = 1.0
        np.testing.assert_array_equal(w_between, expected)

    def test_structure(self):
        rng = np.random.default_rng(9)
        points = rng.standard_normal((3, 20))
        classes = rng.integers(0, 3, 20)
        for w in uspl.mfa_graphs(points, classes, k1=3, k2=4):
            np.testing.assert_array_equal(w, w.T)
            self.assertTrue(set(np.unique(w)) <= {0.0, 1.0})
            self.assertTrue(np.all(np.diag(w) == 0))


class TestScatterMatrices(unittest.TestCase):

    def test_lda_scatters_add_to_total(self):
        rng = np.random.default_rng(10)
        for trial in range(20):
            m = int(rng.integers(6, 30))
            points = rng.standard_normal((4, m))
            classes = rng.integers(0, 3, m)
            s_within, s_between = uspl.scatter_matrices(points, *uspl.lda_graphs(classes), m)
            centered = points - points.mean(axis=1, keepdims=True)
            np.testing.assert_allclose(s_within + s_between, centered @ centered.T / m, atol=1e-10, err_msg=f"fixture {trial}")

    def test_lda_scatters_match_class_means(self):
        rng = np.random.default_rng(11)
        points = rng.standard_normal((3, 12))
        classes = np.array([0, 1, 2] * 4)
        s_within, s_between = uspl.scatter_matrices(points, *uspl.lda_graphs(classes), 12)
        mean = points.mean(axis=1)
        within = np.zeros((3, 3))
        between = np.zeros((3, 3))
        for c in range(3):
            members = points[:, classes == c]
            mu = members.mean(axis=1)
            within += (members - mu[:, None]) @ (members - mu[:, None]).T
            between += members.shape[1] * np.outer(mu - mean, mu - mean)
        np.testing.assert_allclose(s_within, within / 12, atol=1e-12)
        np.testing.assert_allclose(s_between, between / 12, atol=1e-12)

    def test_identical_points(self):
        points = np.tile(np.array([[1.0], [2.0]]), (1, 5))
        s_within, s_between = uspl.scatter_matrices(points, *uspl.lda_graphs([0, 0, 1, 1, 1]), 5)
        np.testing.assert_allclose(s_within, 0.0, atol=1e-12)
        np.testing.assert_allclose(s_between, 0.0, atol=1e-12)

    def test_graph_shape_mismatch(self):
        with self.assertRaises(uspl.DimensionMismatch):
            uspl.scatter_matrices(np.zeros((2, 4)), np.zeros((3, 3)), np.zeros((3, 3)))


if __name__ == '__main__':
    unittest.main()
