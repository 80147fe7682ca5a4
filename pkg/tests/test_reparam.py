import math
import warnings

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from gradmix import reparam
from gradmix.autodiff import Tape, finite_diff_grad, value_and_grad
from gradmix.gradcheck import rel_err
from gradmix.reparam import (
    ConfigurationError,
    cayley_orthogonal,
    cov_from_factor,
    dof_from_log,
    mclust_cov,
    mclust_layout,
    pgmm_cov,
    pgmm_layout,
    weights_from_logits,
)


def table_count(family, p, q, K):
    """Covariance parameter counts as tabulated for the eight PGMM families."""
    m = p * q - q * (q - 1) // 2
    return {
        "CCC": m + 1, "CCU": m + p, "CUC": m + K, "CUU": m + K * p,
        "UCC": K * m + 1, "UCU": K * m + p, "UUC": K * m + K, "UUU": K * m + K * p,
    }[family]


class TestWeights:
    def test_uniform(self):
        np.testing.assert_allclose(weights_from_logits(np.zeros(3)), [1 / 3] * 3, atol=1e-15)

    @pytest.mark.parametrize("c", [-800.0, -3.0, 0.0, 7.5, 900.0])
    def test_constant_logits_uniform(self, c):
        np.testing.assert_allclose(weights_from_logits(np.full(4, c)), [0.25] * 4, atol=1e-15)

    def test_two_to_one(self):
        np.testing.assert_allclose(weights_from_logits(np.array([math.log(2), 0.0])),
                                   [2 / 3, 1 / 3], atol=1e-15)

    @settings(max_examples=100, deadline=None)
    @given(alpha=arrays(float, st.integers(1, 8), elements=st.floats(-50, 50)),
           shift=st.floats(-100, 100))
    def test_simplex_and_shift_invariance(self, alpha, shift):
        w = weights_from_logits(alpha)
        assert abs(w.sum() - 1.0) < 1e-12
        assert np.all(w > 0)
        ws = weights_from_logits(alpha + shift)
        np.testing.assert_allclose(ws, w, atol=1e-12)
        assert np.argmax(ws) == np.argmax(w)


class TestCovFactor:
    def test_identity(self):
        sigma, logdet = cov_from_factor(np.eye(3))
        np.testing.assert_array_equal(sigma, np.eye(3))
        assert logdet == 0.0

    def test_diagonal(self):
        sigma, logdet = cov_from_factor(np.diag([2.0, 3.0]))
        np.testing.assert_array_equal(sigma, np.diag([4.0, 9.0]))
        assert logdet == pytest.approx(math.log(36.0), rel=1e-15)

    def test_zero_diagonal_warns(self):
        with pytest.warns(reparam.NearSingularWarning):
            _, logdet = cov_from_factor(np.array([[0.0, 0.0], [1.0, 1.0]]))
        assert logdet is None

    @settings(max_examples=100, deadline=None)
    @given(p=st.integers(1, 6), seed=st.integers(0, 2**32 - 1))
    def test_psd(self, p, seed):
        V = np.tril(np.random.default_rng(seed).normal(size=(p, p)) * 3)
        with warnings.catch_warnings():
            warnings.simplefilter("ignore", reparam.NearSingularWarning)
            sigma, _ = cov_from_factor(V)
        np.testing.assert_array_equal(sigma, sigma.T)
        assert np.linalg.eigvalsh(sigma).min() >= -1e-12 * max(1.0, np.abs(sigma).max())

    def test_logdet_matches_slogdet(self):
        V = np.tril(np.random.default_rng(0).normal(size=(2, 4, 4)))
        sigma, logdet = cov_from_factor(V)
        np.testing.assert_allclose(logdet, np.linalg.slogdet(sigma)[1], rtol=1e-10)


class TestCayley:
    def test_zero(self):
        np.testing.assert_allclose(cayley_orthogonal(np.zeros((4, 4))), np.eye(4), atol=0)

    @pytest.mark.parametrize("z", [-2.0, -0.3, 0.5, 4.0])
    def test_2x2_rotation(self, z):
        O = cayley_orthogonal(np.array([[0.0, z], [-z, 0.0]]))
        angle = 2.0 * math.atan(z)
        rot = np.array([[math.cos(angle), -math.sin(angle)], [math.sin(angle), math.cos(angle)]])
        np.testing.assert_allclose(O, rot, atol=1e-14)

    @pytest.mark.parametrize("p", [2, 3, 5, 8])
    def test_orthogonal_det_one(self, p):
        rng = np.random.default_rng(p)
        for _ in range(20):
            O = cayley_orthogonal(rng.normal(size=(p, p)) * 2)
            assert np.abs(O.T @ O - np.eye(p)).max() < 1e-10
            assert abs(np.linalg.det(O) - 1.0) < 1e-8

    def test_symmetric_part_ignored(self):
        rng = np.random.default_rng(1)
        A = rng.normal(size=(3, 3))
        S = rng.normal(size=(3, 3))
        np.testing.assert_allclose(cayley_orthogonal(A), cayley_orthogonal(A + S + S.T), atol=1e-14)


class TestDof:
    def test_values(self):
        assert dof_from_log(0.0) == 1.0
        assert dof_from_log(math.log(30.0)) == pytest.approx(30.0, rel=1e-15)

    def test_gradient_is_nu(self):
        t = Tape()
        x = t.var(1.3)
        assert t.backward(dof_from_log(x), [x]).grads[0] == pytest.approx(math.exp(1.3))


class TestMclust:
    def _blocks(self, constraint, K, p, rng=None):
        lay = mclust_layout(constraint, K, p)
        make = (lambda s: rng.normal(size=s)) if rng is not None else np.zeros
        return [make(lay[name]) if lay[name][0] else None for name in ("volume", "shape", "orient")]

    def test_eii_identity(self):
        covs = mclust_cov(*self._blocks("EII", 3, 4), "EII", 3, 4)
        np.testing.assert_allclose(covs, np.repeat(np.eye(4)[None], 3, axis=0), atol=1e-15)

    def test_vvi_diagonal_and_varying(self):
        rng = np.random.default_rng(0)
        covs = mclust_cov(*self._blocks("VVI", 3, 4, rng), "VVI", 3, 4)
        for c in covs:
            np.testing.assert_array_equal(c, np.diag(np.diag(c)))
        assert not np.allclose(covs[0], covs[1])

    def test_eee_shared(self):
        rng = np.random.default_rng(1)
        covs = mclust_cov(*self._blocks("EEE", 3, 3, rng), "EEE", 3, 3)
        np.testing.assert_allclose(covs[0], covs[2], atol=0)
        assert not np.allclose(covs[0], np.diag(np.diag(covs[0])))

    @pytest.mark.parametrize("constraint", reparam.MCLUST_CONSTRAINTS)
    def test_psd_and_unit_geometric_mean_shape(self, constraint):
        rng = np.random.default_rng(2)
        K, p = 3, 4
        blocks = self._blocks(constraint, K, p, rng)
        covs = mclust_cov(*blocks, constraint, K, p)
        vol = np.exp(np.broadcast_to(blocks[0], (K, 1)))[:, 0]
        for k in range(K):
            eig = np.linalg.eigvalsh(covs[k])
            assert eig.min() > 0
            # det Sigma_k = lambda_k^p since the shape has unit geometric mean
            assert np.sum(np.log(eig)) == pytest.approx(p * math.log(vol[k]), abs=1e-10)

    @pytest.mark.parametrize("K,p", [(1, 2), (2, 3), (3, 5)])
    def test_vvv_count(self, K, p):
        lay = mclust_layout("VVV", K, p)
        assert sum(r * c for r, c in lay.values()) == K * p * (p + 1) // 2

    def test_unknown_constraint(self):
        with pytest.raises(ConfigurationError):
            mclust_layout("XYZ", 2, 3)


class TestPgmm:
    def test_ccc_count(self):
        lay = pgmm_layout("CCC", 3, 4, 2)
        assert sum(r * c for r, c in lay.values()) == 8

    def test_uuu_count(self):
        lay = pgmm_layout("UUU", 3, 4, 2)
        assert sum(r * c for r, c in lay.values()) == 33

    @pytest.mark.parametrize("family", reparam.PGMM_FAMILIES)
    @pytest.mark.parametrize("p", [4, 8])
    @pytest.mark.parametrize("q", [1, 2, 3])
    @pytest.mark.parametrize("K", [2, 4])
    def test_counts_match_table(self, family, p, q, K):
        lay = pgmm_layout(family, K, p, q)
        assert sum(r * c for r, c in lay.values()) == table_count(family, p, q, K)

    def test_zero_loadings_unit_noise(self):
        lay = pgmm_layout("UCU", 2, 4, 2)
        covs = pgmm_cov(np.zeros(lay["loadings"]), np.zeros(lay["noise"]), "UCU", 2, 4, 2)
        np.testing.assert_allclose(covs, np.repeat(np.eye(4)[None], 2, axis=0), atol=0)

    @pytest.mark.parametrize("family", reparam.PGMM_FAMILIES)
    def test_structure(self, family):
        rng = np.random.default_rng(5)
        K, p, q = 3, 5, 2
        lay = pgmm_layout(family, K, p, q)
        L, N = rng.normal(size=lay["loadings"]), rng.normal(size=lay["noise"])
        covs = pgmm_cov(L, N, family, K, p, q)
        Lam = reparam.loadings_from_vector(L, p, q)
        # loadings are lower-trapezoidal
        assert np.all(np.triu(Lam[0, :q, :q], k=1) == 0)
        for k in range(K):
            assert np.linalg.eigvalsh(covs[k]).min() > 0
            noise = covs[k] - Lam[min(k, len(Lam) - 1)] @ Lam[min(k, len(Lam) - 1)].T
            np.testing.assert_allclose(noise, np.diag(np.diag(noise)), atol=1e-12)
            if family[2] == "C":
                assert np.ptp(np.diag(noise)) < 1e-12

    def test_q_not_reducing(self):
        with pytest.raises(ConfigurationError):
            pgmm_layout("CCC", 2, 3, 3)


class TestDifferentiability:
    def _check(self, f, x):
        _, g = value_and_grad(f, x)

        def fv(v):
            return f(Tape().var(v)).value

        assert rel_err(g, finite_diff_grad(fv, x)) < 1e-5

    def test_weights(self):
        w = np.array([0.3, -1.0, 2.0, 0.1])
        self._check(lambda a: (weights_from_logits(a) * w).sum(), np.random.default_rng(0).normal(size=4))

    def test_cov_factor(self):
        p = 3
        rows, cols = np.tril_indices(p)
        W = np.random.default_rng(1).normal(size=(p, p))

        def f(v):
            V = reparam.tril_from_vector(v, p)
            sigma, logdet = cov_from_factor(V)
            return (sigma * W).sum() + logdet

        self._check(f, np.random.default_rng(2).normal(size=6) + np.where(rows == cols, 2.0, 0.0))

    def test_cayley(self):
        W = np.random.default_rng(3).normal(size=(4, 4))
        self._check(lambda a: (cayley_orthogonal(a.reshape((4, 4))) * W).sum(),
                    np.random.default_rng(4).normal(size=16))

    @pytest.mark.parametrize("constraint", reparam.MCLUST_CONSTRAINTS)
    def test_mclust(self, constraint):
        K, p = 2, 3
        lay = {k: v for k, v in mclust_layout(constraint, K, p).items() if v[0]}
        sizes = [int(np.prod(s)) for s in lay.values()]
        W = np.random.default_rng(5).normal(size=(K, p, p))

        def f(v):
            parts, start = {}, 0
            for (name, shape), size in zip(lay.items(), sizes):
                parts[name] = v[start:start + size].reshape(shape)
                start += size
            covs = mclust_cov(parts["volume"], parts.get("shape"), parts.get("orient"),
                              constraint, K, p)
            return (covs * W).sum()

        self._check(f, np.random.default_rng(6).normal(size=sum(sizes)) * 0.5)

    @pytest.mark.parametrize("family", reparam.PGMM_FAMILIES)
    def test_pgmm(self, family):
        K, p, q = 2, 4, 2
        lay = pgmm_layout(family, K, p, q)
        nl = int(np.prod(lay["loadings"]))
        W = np.random.default_rng(7).normal(size=(K, p, p))

        def f(v):
            covs = pgmm_cov(v[:nl].reshape(lay["loadings"]), v[nl:].reshape(lay["noise"]),
                            family, K, p, q)
            return (covs * W).sum()

        self._check(f, np.random.default_rng(8).normal(size=nl + int(np.prod(lay["noise"]))))
