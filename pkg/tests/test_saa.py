#!/usr/bin/env python3

import unittest
from pathlib import Path
import os
import sys

import numpy as np
from scipy.linalg import null_space

# Necessary to load the local uspl package
if "NO_LOCAL_USPL" not in os.environ and (Path(__file__).parent.parent / 'uspl').exists():
    sys.path.insert(0, str(Path(__file__).parent.parent))

import uspl
from uspl.saa import _greedy_columns, alternating_pair, deflate_step, recover_column, whiten


def spd(rng: np.random.Generator, d: int) -> np.ndarray:
    g = rng.standard_normal((d, d))
    return g @ g.T / d + 0.5 * np.eye(d)


def random_joint(rng: np.random.Generator, d1: int, d2: int, scale: float = 1.0) -> uspl.JointProblem:
    return uspl.JointProblem.of(
        a1=scale * uspl.symmetrize(rng.standard_normal((d1, d1))),
        a2=scale * uspl.symmetrize(rng.standard_normal((d2, d2))),
        c=scale * rng.standard_normal((d1, d2)),
        b1=spd(rng, d1),
        b2=spd(rng, d2),
    )


def correlated_views(rng: np.random.Generator, d1: int, d2: int, n: int) -> uspl.TwoViewData:
    latent = rng.standard_normal((3, n))
    x1 = rng.standard_normal((d1, 3)) @ latent + 0.5 * rng.standard_normal((d1, n))
    x2 = rng.standard_normal((d2, 3)) @ latent + 0.5 * rng.standard_normal((d2, n))
    return uspl.TwoViewData(view1_all=x1, view2_all=x2, paired_count=n)


def identity_blocks(a11, a22, a12) -> uspl.WhitenedBlocks:
    d1, d2 = np.shape(a12)
    return whiten(uspl.JointProblem.of(a11, a22, a12, np.eye(d1), np.eye(d2)))


class TestWhiten(unittest.TestCase):

    def test_identity_constraints(self):
        rng = np.random.default_rng(1)
        a1 = uspl.symmetrize(rng.standard_normal((3, 3)))
        a2 = uspl.symmetrize(rng.standard_normal((2, 2)))
        c = rng.standard_normal((3, 2))
        blocks = whiten(uspl.JointProblem.of(a1, a2, c, np.eye(3), np.eye(2)))
        np.testing.assert_array_equal(blocks.a11, a1)
        np.testing.assert_array_equal(blocks.a22, a2)
        np.testing.assert_array_equal(blocks.a12, c)

    def test_scalar_constraint(self):
        rng = np.random.default_rng(2)
        a1 = uspl.symmetrize(rng.standard_normal((3, 3)))
        c = rng.standard_normal((3, 2))
        blocks = whiten(uspl.JointProblem.of(a1, np.zeros((2, 2)), c, 4 * np.eye(3), np.eye(2)))
        np.testing.assert_allclose(blocks.a11, a1 / 4, atol=1e-15)
        np.testing.assert_allclose(blocks.a12, c / 2, atol=1e-15)

    def test_explicit_congruence(self):
        rng = np.random.default_rng(3)
        jp = random_joint(rng, 5, 4)
        l1_inv = np.linalg.inv(np.linalg.cholesky(jp.b1))
        l2_inv = np.linalg.inv(np.linalg.cholesky(jp.b2))
        blocks = whiten(jp)
        np.testing.assert_allclose(blocks.a11, l1_inv @ jp.a1 @ l1_inv.T, atol=1e-10)
        np.testing.assert_allclose(blocks.a22, l2_inv @ jp.a2 @ l2_inv.T, atol=1e-10)
        np.testing.assert_allclose(blocks.a12, l1_inv @ jp.c @ l2_inv.T, atol=1e-10)

    def test_mismatched_blocks(self):
        with self.assertRaises(uspl.DimensionMismatch):
            uspl.JointProblem.of(np.eye(3), np.eye(2), np.zeros((3, 3)), np.eye(3), np.eye(2))


class TestAlternatingPair(unittest.TestCase):

    def test_cross_term_only(self):
        pair = alternating_pair(identity_blocks(np.zeros((2, 2)), np.zeros((2, 2)), np.diag([3.0, 1.0])))
        self.assertAlmostEqual(pair.value, 6.0, places=12)
        self.assertAlmostEqual(abs(pair.q1[0]), 1.0, places=12)
        self.assertAlmostEqual(abs(pair.q2[0]), 1.0, places=12)

    def test_decoupled_blocks(self):
        pair = alternating_pair(identity_blocks(np.diag([2.0, 1.0]), np.diag([5.0, 1.0]), np.zeros((2, 2))))
        self.assertAlmostEqual(pair.value, 7.0, places=12)
        self.assertAlmostEqual(abs(pair.q1[0]), 1.0, places=12)
        self.assertAlmostEqual(abs(pair.q2[0]), 1.0, places=12)

    def test_sweeps_never_decrease(self):
        rng = np.random.default_rng(4)
        blocks = whiten(random_joint(rng, 4, 3))
        values = [alternating_pair(blocks, init=7, max_sweeps=s).value for s in range(1, 8)]
        for before, after in zip(values, values[1:]):
            self.assertGreaterEqual(after, before - 1e-12)

    def test_not_below_random_search(self):
        rng = np.random.default_rng(5)
        jp = uspl.JointProblem.of(
            uspl.symmetrize(rng.standard_normal((3, 3))), uspl.symmetrize(rng.standard_normal((3, 3))),
            rng.standard_normal((3, 3)), np.eye(3), np.eye(3),
        )
        # with identity constraints the k = 1 objective is half the block value
        best = 2 * uspl.saa_solve(jp, 1).objective
        q1 = rng.standard_normal((1_000_000, 3))
        q2 = rng.standard_normal((1_000_000, 3))
        q1 /= np.linalg.norm(q1, axis=1, keepdims=True)
        q2 /= np.linalg.norm(q2, axis=1, keepdims=True)
        values = (np.einsum("ni,ij,nj->n", q1, jp.a1, q1) + np.einsum("ni,ij,nj->n", q2, jp.a2, q2)
                  + 2 * np.einsum("ni,ij,nj->n", q1, jp.c, q2))
        self.assertGreaterEqual(best, values.max() - 1e-9)


class TestDeflation(unittest.TestCase):

    def test_aligned_deflation(self):
        rng = np.random.default_rng(6)
        blocks = whiten(random_joint(rng, 3, 3))
        e1 = np.array([1.0, 0.0, 0.0])
        state = deflate_step(uspl.DeflationState.initial(blocks), e1, e1)
        np.testing.assert_allclose(state.blocks.a11, blocks.a11[1:, 1:], atol=1e-15)
        np.testing.assert_allclose(state.blocks.a22, blocks.a22[1:, 1:], atol=1e-15)
        np.testing.assert_allclose(state.blocks.a12, blocks.a12[1:, 1:], atol=1e-15)
        self.assertEqual(state.j, 1)

    def test_matches_orthogonal_complement(self):
        rng = np.random.default_rng(7)
        blocks = whiten(random_joint(rng, 3, 3))
        pair = alternating_pair(blocks)
        state = deflate_step(uspl.DeflationState.initial(blocks), pair.q1, pair.q2)
        u1 = uspl.reflector_from(pair.q1).matrix()[:, 1:]
        u2 = uspl.reflector_from(pair.q2).matrix()[:, 1:]
        np.testing.assert_allclose(state.blocks.a11, u1.T @ blocks.a11 @ u1, atol=1e-12)
        np.testing.assert_allclose(state.blocks.a12, u1.T @ blocks.a12 @ u2, atol=1e-12)
        # the complement from a full QR spans the same subspace, so the spectra agree
        q, _ = np.linalg.qr(pair.q1.reshape(3, 1), mode="complete")
        complement = q[:, 1:]
        np.testing.assert_allclose(complement @ complement.T, u1 @ u1.T, atol=1e-12)
        np.testing.assert_allclose(
            np.linalg.eigvalsh(complement.T @ blocks.a11 @ complement), np.linalg.eigvalsh(state.blocks.a11), atol=1e-12,
        )

    def test_recovered_columns_orthonormal(self):
        rng = np.random.default_rng(8)
        blocks = whiten(random_joint(rng, 5, 4))
        state = uspl.DeflationState.initial(blocks)
        cols1, cols2 = [], []
        for _ in range(3):
            pair = alternating_pair(state.blocks)
            p1, p2 = recover_column(state, pair.q1, pair.q2)
            self.assertAlmostEqual(np.linalg.norm(p1), 1.0, places=12)
            self.assertAlmostEqual(np.linalg.norm(p2), 1.0, places=12)
            cols1.append(p1)
            cols2.append(p2)
            state = deflate_step(state, pair.q1, pair.q2)
        p1s, p2s = np.column_stack(cols1), np.column_stack(cols2)
        np.testing.assert_allclose(p1s.T @ p1s, np.eye(3), atol=1e-10)
        np.testing.assert_allclose(p2s.T @ p2s, np.eye(3), atol=1e-10)

    def test_recover_without_reflectors(self):
        rng = np.random.default_rng(9)
        blocks = whiten(random_joint(rng, 3, 2))
        q1, q2 = np.array([0.6, 0.8, 0.0]), np.array([0.0, 1.0])
        p1, p2 = recover_column(uspl.DeflationState.initial(blocks), q1, q2)
        np.testing.assert_array_equal(p1, q1)
        np.testing.assert_array_equal(p2, q2)

    def test_recover_after_one_step(self):
        rng = np.random.default_rng(10)
        blocks = whiten(random_joint(rng, 3, 3))
        y = rng.standard_normal(3)
        state = deflate_step(uspl.DeflationState.initial(blocks), y / np.linalg.norm(y), y / np.linalg.norm(y))
        p1, _ = recover_column(state, np.array([1.0, 0.0]), np.array([1.0, 0.0]))
        np.testing.assert_allclose(p1, uspl.reflector_from(y).matrix()[:, 1], atol=1e-14)

    def test_recover_shape_mismatch(self):
        rng = np.random.default_rng(11)
        state = uspl.DeflationState.initial(whiten(random_joint(rng, 3, 3)))
        with self.assertRaises(uspl.DimensionMismatch):
            recover_column(state, np.ones(2), np.ones(3))


class TestGreedyColumns(unittest.TestCase):

    def circle_grid_max(self, blocks: uspl.WhitenedBlocks, n1: np.ndarray, n2: np.ndarray, steps: int = 721) -> float:
        theta = np.linspace(0.0, 2 * np.pi, steps)
        q1 = n1 @ np.vstack([np.cos(theta), np.sin(theta)])
        q2 = n2 @ np.vstack([np.cos(theta), np.sin(theta)])
        diag1 = np.einsum("it,ij,jt->t", q1, blocks.a11, q1)
        diag2 = np.einsum("it,ij,jt->t", q2, blocks.a22, q2)
        return float((diag1[:, None] + diag2[None, :] + 2 * q1.T @ blocks.a12 @ q2).max())

    def test_second_column_on_complement(self):
        rng = np.random.default_rng(40)
        for i in range(40):
            jp = random_joint(rng, 3, 3)
            blocks, cols1, cols2, values = _greedy_columns(jp, 2, uspl.SaaOptions())
            self.assertLessEqual(abs(cols1[:, 0] @ cols1[:, 1]), 1e-8)
            self.assertLessEqual(abs(cols2[:, 0] @ cols2[:, 1]), 1e-8)
            self.assertAlmostEqual(values[1], blocks.value(cols1[:, 1], cols2[:, 1]), places=10)
            n1 = null_space(cols1[:, :1].T)
            n2 = null_space(cols2[:, :1].T)
            self.assertGreaterEqual(values[1], self.circle_grid_max(blocks, n1, n2) - 1e-9, f"fixture {i}")

    def test_last_column_is_forced(self):
        rng = np.random.default_rng(41)
        for i in range(20):
            jp = random_joint(rng, 3, 3)
            blocks, cols1, cols2, values = _greedy_columns(jp, 3, uspl.SaaOptions())
            n1 = null_space(cols1[:, :2].T)[:, 0]
            n2 = null_space(cols2[:, :2].T)[:, 0]
            best = max(blocks.value(s1 * n1, s2 * n2) for s1 in (1.0, -1.0) for s2 in (1.0, -1.0))
            self.assertAlmostEqual(values[2], best, places=9, msg=f"fixture {i}")


class TestAlign(unittest.TestCase):

    def test_fixed_point(self):
        c = np.diag([2.0, 1.0, 0.0])[:, :2]
        p1, p2 = np.eye(3)[:, :2], np.eye(2)
        aligned = uspl.align(p1, p2, c)
        np.testing.assert_allclose(p1.T @ c @ aligned, p1.T @ c @ p2, atol=1e-14)

    def test_permutation_absorbed(self):
        p1, p2 = np.eye(2), np.eye(2)
        c = np.array([[0.0, 1.0], [1.0, 0.0]])
        self.assertAlmostEqual(np.trace(p1.T @ c @ uspl.align(p1, p2, c)), 2.0, places=14)

    def test_reaches_nuclear_norm(self):
        rng = np.random.default_rng(12)
        p1 = np.linalg.qr(rng.standard_normal((5, 3)))[0]
        p2 = np.linalg.qr(rng.standard_normal((4, 3)))[0]
        c = rng.standard_normal((5, 4))
        before = p1.T @ c @ p2
        aligned = uspl.align(p1, p2, c)
        after = np.trace(p1.T @ c @ aligned)
        self.assertGreaterEqual(after, np.trace(before) - 1e-12)
        self.assertAlmostEqual(after, np.linalg.norm(before, ord="nuc"), places=10)
        np.testing.assert_allclose(aligned.T @ aligned, np.eye(3), atol=1e-12)


class TestSaaSolve(unittest.TestCase):

    def test_cca_instance_matches_svd(self):
        rng = np.random.default_rng(13)
        for trial in range(20):
            data = correlated_views(rng, 8, 6, 40)
            jp = uspl.build_joint(data, uspl.ModelSpec(family=uspl.ModelFamily.USEMICCA, gamma=1.0, k=3))
            np.testing.assert_array_equal(jp.a1, np.zeros((8, 8)))
            pair = uspl.saa_solve(jp, 3)
            oracle = uspl.cca_closed_form(jp.b1, jp.c, jp.b2, 3)
            trace = np.trace(pair.p1.T @ jp.c @ pair.p2)
            self.assertLessEqual(abs(trace - oracle.objective), 1e-6 * oracle.objective, f"fixture {trace}")
            self.assertLess(pair.kkt_residual, 1e-6)

    def test_three_formulations_agree(self):
        rng = np.random.default_rng(14)
        for _ in range(5):
            data = correlated_views(rng, 8, 6, 40)
            spec = uspl.ModelSpec(family=uspl.ModelFamily.CCA, k=3)
            jp = uspl.build_joint(data, spec)
            gp = uspl.build_gep(data, spec)
            saa = uspl.saa_solve(jp, 3)
            svd = uspl.cca_closed_form(jp.b1, jp.c, jp.b2, 3)
            gep = uspl.normalize_per_view(uspl.solve_gep(gp), gp.rhs[:8, :8], gp.rhs[8:, 8:])
            traces = [np.trace(p.p1.T @ jp.c @ p.p2) for p in (saa, gep)]
            for t in traces:
                self.assertLessEqual(abs(t - svd.objective), 1e-6 * svd.objective)

    def test_k1_global_on_angle_grid(self):
        rng = np.random.default_rng(15)
        theta = np.linspace(0.0, 2 * np.pi, 2000, endpoint=False)
        for trial in range(50):
            jp = random_joint(rng, 2, 2, scale=0.5)
            pair = uspl.saa_solve(jp, 1)
            l1_inv = np.linalg.inv(np.linalg.cholesky(jp.b1))
            l2_inv = np.linalg.inv(np.linalg.cholesky(jp.b2))

            def grid(t1: np.ndarray, t2: np.ndarray) -> np.ndarray:
                p1 = l1_inv.T @ np.vstack([np.cos(t1), np.sin(t1)])
                p2 = l2_inv.T @ np.vstack([np.cos(t2), np.sin(t2)])
                own1 = 0.5 * np.einsum("in,ij,jn->n", p1, jp.a1, p1)
                own2 = 0.5 * np.einsum("in,ij,jn->n", p2, jp.a2, p2)
                return own1[:, None] + own2[None, :] + p1.T @ jp.c @ p2

            coarse = grid(theta, theta)
            i, j = np.unravel_index(np.argmax(coarse), coarse.shape)
            step = theta[1] - theta[0]
            local = np.linspace(-step, step, 201)
            best = float(grid(theta[i] + local, theta[j] + local).max())
            self.assertGreaterEqual(pair.objective, best - 1e-9, f"fixture {trial}")
            self.assertLessEqual(pair.objective - best, 1e-5, f"fixture {trial}")

    def test_structural_invariants(self):
        rng = np.random.default_rng(16)
        for family in (uspl.ModelFamily.USEMICCA, uspl.ModelFamily.USEMICCALR):
            data = correlated_views(rng, 7, 5, 30)
            jp = uspl.build_joint(data, uspl.ModelSpec(family=family, gamma=0.5, gamma2=0.1, k=3))
            pair = uspl.saa_solve(jp, 3)
            self.assertLessEqual(np.linalg.norm(pair.p1.T @ jp.b1 @ pair.p1 - np.eye(3)), 1e-8)
            self.assertLessEqual(np.linalg.norm(pair.p2.T @ jp.b2 @ pair.p2 - np.eye(3)), 1e-8)
            product = pair.p1.T @ jp.c @ pair.p2
            self.assertLessEqual(np.max(np.abs(product - np.diag(np.diag(product)))), 1e-8)
            self.assertTrue(np.all(np.diag(product) >= -1e-8))
            self.assertAlmostEqual(pair.objective, jp.objective(pair.p1, pair.p2), places=10)

    def test_constraints_equal_quadratic_terms(self):
        rng = np.random.default_rng(17)
        b1, b2 = spd(rng, 4), spd(rng, 3)
        c = rng.standard_normal((4, 3))
        pair = uspl.saa_solve(uspl.JointProblem.of(b1, b2, c, b1, b2), 2)
        l1_inv = np.linalg.inv(np.linalg.cholesky(b1))
        l2_inv = np.linalg.inv(np.linalg.cholesky(b2))
        sigma = np.linalg.svd(l1_inv @ c @ l2_inv.T, compute_uv=False)
        # whitened diagonal blocks are identities: each view contributes k / 2
        self.assertAlmostEqual(pair.objective, sigma[:2].sum() + 2.0, places=8)

    def test_pca_limit(self):
        rng = np.random.default_rng(18)
        data = correlated_views(rng, 6, 5, 30)
        spec = uspl.ModelSpec(family=uspl.ModelFamily.USEMICCA, gamma=0.0, k=3)
        jp = uspl.build_joint(data, spec)
        np.testing.assert_array_equal(jp.c, np.zeros((6, 5)))
        pair = uspl.saa_solve(jp, 3)
        for p, view in ((pair.p1, 1), (pair.p2, 2)):
            total = uspl.total_covariance(data, view)
            expected = np.sort(np.linalg.eigvalsh(total))[::-1][:3].sum() / (1.0 + spec.ridge)
            self.assertAlmostEqual(np.trace(p.T @ total @ p), expected, places=8)

    def test_path_shares_columns(self):
        rng = np.random.default_rng(19)
        jp = random_joint(rng, 5, 4)
        path = uspl.saa_solve_path(jp, [2, 3])
        self.assertEqual(sorted(path), [2, 3])
        self.assertAlmostEqual(path[3].objective, uspl.saa_solve(jp, 3).objective, places=10)
        self.assertEqual(path[2].per_column_values, path[3].per_column_values[:2])

    def test_invalid_k(self):
        rng = np.random.default_rng(20)
        jp = random_joint(rng, 3, 2)
        with self.assertRaises(uspl.InvalidK):
            uspl.saa_solve(jp, 3)
        with self.assertRaises(uspl.InvalidK):
            uspl.saa_solve(jp, 0)


if __name__ == '__main__':
    unittest.main()
