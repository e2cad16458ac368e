import numpy as np
import pytest

from dsgnn import autodiff as ad
from dsgnn.autodiff import ParamBundle, Tensor
from dsgnn.errors import ConfigError
from dsgnn.supergrid import (
    build_assignment,
    build_assignment_from_logits,
    factorize_static,
    kmeans_rows,
    pool_supergrids,
    sparsify_rows,
)

from helpers import check_bundle_gradients


class TestFactorize:
    def test_rank_one_exact(self):
        u = np.array([1.0, 2.0, -1.0, 0.5])
        v = np.array([0.3, -0.7, 1.1])
        m = np.outer(u, v)
        res = factorize_static(m, d=1, iters=3000, lr=0.01, seed=0)
        assert res.loss <= 1e-3
        np.testing.assert_allclose(res.e_sta @ res.w_f, m, atol=0.05)

    def test_zero_matrix(self):
        # Gradients vanish with the factors, so convergence to zero is slow;
        # the loss still has to shrink far below the 0.1-scale init.
        res = factorize_static(np.zeros((5, 4)), d=2, iters=2000, lr=0.01, seed=1)
        assert res.loss <= 1e-4

    def test_close_to_truncated_svd(self):
        rng = np.random.default_rng(2)
        m = rng.standard_normal((12, 10))
        d = 3
        res = factorize_static(m, d=d, iters=2000, lr=0.01, seed=3)
        u, s, vt = np.linalg.svd(m, full_matrices=False)
        best = ((u[:, d:] * s[d:]) @ vt[d:] ** 1).ravel()
        best_loss = float((best**2).sum())
        assert res.loss <= 2.0 * best_loss

    def test_dim_exceeds_columns_rejected(self):
        with pytest.raises(ConfigError, match="embedding dim"):
            factorize_static(np.zeros((5, 3)), d=4)

    def test_deterministic(self):
        m = np.random.default_rng(4).standard_normal((6, 5))
        r1 = factorize_static(m, d=2, iters=200, seed=7)
        r2 = factorize_static(m, d=2, iters=200, seed=7)
        assert (r1.e_sta == r2.e_sta).all() and (r1.w_f == r2.w_f).all()


class TestKmeansRows:
    def test_recovers_separated_blobs(self):
        rng = np.random.default_rng(0)
        centers = np.array([[10.0, 0.0], [-10.0, 0.0], [0.0, 10.0]])
        x = np.concatenate([c + 0.1 * rng.standard_normal((20, 2)) for c in centers])
        got = kmeans_rows(x, 3, seed=1)
        # each true center has a learned centroid within the noise scale
        for c in centers:
            assert np.linalg.norm(got - c, axis=1).min() < 0.5

    def test_deterministic(self):
        x = np.random.default_rng(2).standard_normal((30, 4))
        np.testing.assert_array_equal(kmeans_rows(x, 3, seed=5), kmeans_rows(x, 3, seed=5))

    def test_k_bounds(self):
        with pytest.raises(ConfigError):
            kmeans_rows(np.zeros((3, 2)), 4)
        with pytest.raises(ConfigError):
            kmeans_rows(np.zeros((3, 2)), 0)


def brute_force_sparsify(p, rho):
    """Reference: threshold, keep-max fallback, renormalize (plain loops)."""
    out = np.zeros_like(p)
    for r in range(p.shape[0]):
        kept = [c for c in range(p.shape[1]) if p[r, c] >= rho]
        if not kept:
            kept = [int(np.argmax(p[r]))]
        total = sum(p[r, c] for c in kept)
        for c in kept:
            out[r, c] = p[r, c] / total
    return out


class TestAssignment:
    def test_threshold_example(self):
        p = Tensor(np.array([[0.5, 0.3, 0.2], [0.45, 0.45, 0.1]]))
        out = sparsify_rows(p, 0.4).data
        np.testing.assert_allclose(out, [[1.0, 0.0, 0.0], [0.5, 0.5, 0.0]])

    def test_keep_max_fallback(self):
        p = Tensor(np.array([[0.35, 0.35, 0.30]]))
        out = sparsify_rows(p, 0.4).data
        np.testing.assert_allclose(out, [[1.0, 0.0, 0.0]])

    def test_rows_stochastic_and_zero_pattern(self):
        rng = np.random.default_rng(5)
        for _ in range(50):
            logits = rng.standard_normal((8, 4)) * 3
            a = build_assignment_from_logits(Tensor(logits), rho=0.4)
            s = a.s.data
            np.testing.assert_allclose(s.sum(axis=1), 1.0, atol=1e-9)
            assert (s >= 0).all() and (s <= 1 + 1e-12).all()
            p = np.exp(logits - logits.max(axis=1, keepdims=True))
            p /= p.sum(axis=1, keepdims=True)
            expected = brute_force_sparsify(p, 0.4)
            np.testing.assert_allclose(s, expected, atol=1e-12)

    def test_no_threshold_is_plain_softmax(self):
        rng = np.random.default_rng(6)
        logits = rng.standard_normal((6, 3))
        a = build_assignment_from_logits(Tensor(logits), rho=0.4, threshold=False)
        p = np.exp(logits - logits.max(axis=1, keepdims=True))
        p /= p.sum(axis=1, keepdims=True)
        np.testing.assert_allclose(a.s.data, p, atol=1e-12)

    def test_mapper_gradient_when_nothing_trimmed(self):
        # With a tiny rho no entry is trimmed and every row sum is exactly 1,
        # so the straight-through gradient coincides with the exact one.
        rng = np.random.default_rng(7)
        bundle = ParamBundle()
        w_map = bundle.add("w_map", rng.standard_normal((4, 3)) * 0.5)
        e = rng.standard_normal((6, 4))
        probe = rng.standard_normal((6, 3))

        def loss():
            a = build_assignment(e, w_map, rho=1e-9)
            return ad.reduce_sum(ad.mul(a.s, probe))

        assert check_bundle_gradients(loss, bundle) <= 1e-4

    def test_straight_through_gradient_reaches_singleton_rows(self):
        # A row that keeps one entry outputs exactly 1, so its exact gradient
        # vanishes; the straight-through backward must still pass gradient to
        # the kept entry (otherwise confident rows freeze permanently).
        bundle = ParamBundle()
        logits = bundle.add("logits", np.array([[3.0, -3.0, -3.0]]))
        bundle.zero_grad()
        a = build_assignment_from_logits(logits, rho=0.4)
        np.testing.assert_allclose(a.s.data, [[1.0, 0.0, 0.0]])
        ad.reduce_sum(ad.mul(a.s, np.array([[1.0, 0.0, 0.0]]))).backward()
        assert np.abs(bundle["logits"].grad).max() > 0

    def test_dropped_entries_get_no_gradient(self):
        bundle = ParamBundle()
        logits = bundle.add("logits", np.array([[0.1, 0.0, -4.0]]))
        bundle.zero_grad()
        a = build_assignment_from_logits(logits, rho=0.4)
        assert a.s.data[0, 2] == 0.0
        probe = np.zeros((1, 3))
        probe[0, 2] = 1.0  # pull only on the dropped entry
        ad.reduce_sum(ad.mul(a.s, probe)).backward()
        np.testing.assert_allclose(bundle["logits"].grad, 0.0)

    def test_bad_rho(self):
        with pytest.raises(ConfigError, match="rho"):
            build_assignment(np.zeros((4, 2)), np.zeros((2, 2)), rho=1.5)

    def test_label_map(self):
        s = Tensor(np.array([[0.9, 0.1], [0.2, 0.8], [0.6, 0.4], [0.1, 0.9]]))
        a = build_assignment_from_logits(ad.mul(ad.as_tensor(np.log(s.data + 1e-12)), 1.0),
                                         rho=0.05, threshold=False)
        labels = a.label_map(2, 2)
        np.testing.assert_array_equal(labels, [[0, 1], [0, 1]])


class TestPool:
    def test_one_hot_selects_rows(self):
        x = np.arange(12.0).reshape(4, 3)
        s = Tensor(np.array([[1.0, 0], [1.0, 0], [0, 1.0], [0, 1.0]]))
        a = build_assignment_from_logits(ad.mul(ad.as_tensor(np.log(s.data + 1e-300)), 1.0),
                                         rho=0.4)
        z = pool_supergrids(Tensor(x), a).data
        np.testing.assert_allclose(z, [x[0] + x[1], x[2] + x[3]], atol=1e-9)

    def test_matches_triple_loop(self):
        rng = np.random.default_rng(8)
        x = rng.standard_normal((10, 4))
        a = build_assignment_from_logits(Tensor(rng.standard_normal((10, 3))), rho=0.4)
        z = pool_supergrids(Tensor(x), a).data
        expected = np.zeros((3, 4))
        for k in range(3):
            for i in range(10):
                expected[k] += a.s.data[i, k] * x[i]
        np.testing.assert_allclose(z, expected, atol=1e-12)

    def test_linearity(self):
        rng = np.random.default_rng(9)
        a = build_assignment_from_logits(Tensor(rng.standard_normal((6, 2))), rho=0.4)
        x1, x2 = rng.standard_normal((6, 3)), rng.standard_normal((6, 3))
        lhs = pool_supergrids(Tensor(2 * x1 + 3 * x2), a).data
        rhs = 2 * pool_supergrids(Tensor(x1), a).data + 3 * pool_supergrids(Tensor(x2), a).data
        np.testing.assert_allclose(lhs, rhs, atol=1e-12)

    def test_grid_shaped_input(self):
        rng = np.random.default_rng(10)
        x = rng.standard_normal((2, 3, 4))
        a = build_assignment_from_logits(Tensor(rng.standard_normal((6, 2))), rho=0.4)
        np.testing.assert_allclose(
            pool_supergrids(Tensor(x), a).data,
            pool_supergrids(Tensor(x.reshape(6, 4)), a).data,
        )
