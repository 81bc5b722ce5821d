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


class TestCholesky(unittest.TestCase):

    def test_identity(self):
        chol = uspl.cholesky(np.eye(3))
        self.assertTrue(np.array_equal(chol.lower, np.eye(3)))
        self.assertEqual(chol.jitter_used, 0.0)

    def test_hand_checkable(self):
        chol = uspl.cholesky([[4.0, 2.0], [2.0, 5.0]])
        np.testing.assert_allclose(chol.lower, [[2.0, 0.0], [1.0, 2.0]], atol=1e-15)
        self.assertEqual(chol.jitter_used, 0.0)

    def test_rank_one_needs_jitter(self):
        v = np.array([1.0, 2.0, 3.0])
        m = np.outer(v, v)
        policy = uspl.JitterPolicy(ladder=(1e-10, 1e-8, 1e-6))
        chol = uspl.cholesky(m, policy)
        # the first rung already lifts the zero eigenvalues to 1e-10 * trace / dim
        shift = 1e-10 * np.trace(m) / 3
        self.assertAlmostEqual(chol.jitter_used, shift, delta=1e-24)
        np.testing.assert_allclose(chol.reconstruct(), m + shift * np.eye(3), atol=1e-12)

    def test_zero_matrix_takes_first_positive_shift(self):
        chol = uspl.cholesky(np.zeros((3, 3)))
        self.assertEqual(chol.jitter_used, 1e-12)

    def test_negative_definite_fails(self):
        with self.assertRaises(uspl.NotPositiveDefinite):
            uspl.cholesky(-np.eye(3))
        # callers that catch LinAlgError see it too
        with self.assertRaises(np.linalg.LinAlgError):
            uspl.cholesky(-np.eye(2))

    def test_triangular_solves(self):
        rng = np.random.default_rng(3)
        g = rng.standard_normal((5, 5))
        m = g @ g.T + 5 * np.eye(5)
        chol = uspl.cholesky(m)
        x = rng.standard_normal((5, 2))
        np.testing.assert_allclose(chol.lower @ chol.solve(x), x, atol=1e-12)
        np.testing.assert_allclose(chol.lower.T @ chol.solve_transposed(x), x, atol=1e-12)


class TestSymmetrize(unittest.TestCase):

    def test_exact_symmetry(self):
        rng = np.random.default_rng(0)
        s = uspl.symmetrize(rng.standard_normal((7, 7)))
        self.assertTrue(np.array_equal(s, s.T))

    def test_not_square(self):
        with self.assertRaises(uspl.DimensionMismatch):
            uspl.symmetrize(np.zeros((2, 3)))


class TestSymEig(unittest.TestCase):

    def test_diagonal(self):
        values, _ = uspl.sym_eig(np.diag([3.0, 1.0, 2.0]))
        np.testing.assert_allclose(values, [3.0, 2.0, 1.0])

    def test_swap_matrix(self):
        values, vectors = uspl.sym_eig([[0.0, 1.0], [1.0, 0.0]])
        np.testing.assert_allclose(values, [1.0, -1.0], atol=1e-15)
        s = 1 / np.sqrt(2)
        self.assertAlmostEqual(abs(vectors[:, 0] @ np.array([s, s])), 1.0, places=12)
        self.assertAlmostEqual(abs(vectors[:, 1] @ np.array([s, -s])), 1.0, places=12)

    def test_reconstruction(self):
        rng = np.random.default_rng(8)
        m = uspl.symmetrize(rng.standard_normal((8, 8)))
        values, vectors = uspl.sym_eig(m)
        self.assertTrue(np.all(np.diff(values) <= 0))
        np.testing.assert_allclose(vectors.T @ vectors, np.eye(8), atol=1e-12)
        self.assertLess(np.linalg.norm(vectors @ np.diag(values) @ vectors.T - m), 1e-9 * np.linalg.norm(m))


class TestThinSvd(unittest.TestCase):

    def test_diagonal(self):
        _, sigma, _ = uspl.thin_svd(np.diag([2.0, 1.0]))
        np.testing.assert_allclose(sigma, [2.0, 1.0])

    def test_zero(self):
        _, sigma, _ = uspl.thin_svd(np.zeros((3, 2)))
        np.testing.assert_array_equal(sigma, [0.0, 0.0])

    def test_reconstruction(self):
        rng = np.random.default_rng(6)
        m = rng.standard_normal((6, 4))
        u, sigma, v = uspl.thin_svd(m)
        self.assertEqual(u.shape, (6, 4))
        self.assertEqual(v.shape, (4, 4))
        self.assertTrue(np.all(np.diff(sigma) <= 0))
        np.testing.assert_allclose(u @ np.diag(sigma) @ v.T, m, atol=1e-9)


class TestReflector(unittest.TestCase):

    def test_three_four(self):
        h = uspl.reflector_from([3.0, 4.0])
        self.assertEqual(h.alpha, -5.0)
        np.testing.assert_allclose(h.apply(np.array([3.0, 4.0])), [-5.0, 0.0], atol=1e-14)

    def test_zero_leading_entry(self):
        self.assertEqual(uspl.reflector_from([0.0, 1.0]).alpha, -1.0)

    def test_negative_leading_entry(self):
        h = uspl.reflector_from([-3.0, 4.0])
        self.assertEqual(h.alpha, 5.0)
        np.testing.assert_allclose(h.apply(np.array([-3.0, 4.0])), [5.0, 0.0], atol=1e-14)

    def test_random(self):
        rng = np.random.default_rng(7)
        y = rng.standard_normal(7)
        h = uspl.reflector_from(y)
        target = np.zeros(7)
        target[0] = h.alpha
        self.assertLessEqual(np.linalg.norm(h.apply(y) - target), 1e-10 * np.linalg.norm(y))
        np.testing.assert_allclose(h.matrix() @ h.matrix(), np.eye(7), atol=1e-12)

    def test_zero_vector(self):
        with self.assertRaises(uspl.ZeroVector):
            uspl.reflector_from(np.zeros(3))


class TestTwoSidedUpdate(unittest.TestCase):

    def test_identity_reflectors(self):
        block = np.arange(12, dtype=np.float64).reshape(3, 4)
        out = uspl.two_sided_reflector_update(block, uspl.Reflector.identity_of(3), uspl.Reflector.identity_of(4))
        np.testing.assert_array_equal(out, block[1:, 1:])

    def test_explicit_matrices(self):
        rng = np.random.default_rng(11)
        block = rng.standard_normal((3, 3))
        left = uspl.reflector_from(rng.standard_normal(3))
        right = uspl.reflector_from(rng.standard_normal(3))
        expected = (left.matrix() @ block @ right.matrix())[1:, 1:]
        np.testing.assert_allclose(uspl.two_sided_reflector_update(block, left, right), expected, atol=1e-12)

    def test_symmetry_preserved(self):
        rng = np.random.default_rng(12)
        block = uspl.symmetrize(rng.standard_normal((5, 5)))
        h = uspl.reflector_from(rng.standard_normal(5))
        out = uspl.two_sided_reflector_update(block, h, h)
        self.assertLess(np.max(np.abs(out - out.T)), 1e-12)

    def test_shape_mismatch(self):
        with self.assertRaises(uspl.DimensionMismatch):
            uspl.two_sided_reflector_update(np.zeros((3, 3)), uspl.Reflector.identity_of(3), uspl.Reflector.identity_of(4))


if __name__ == '__main__':
    unittest.main()
