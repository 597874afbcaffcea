import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from conftest import random_spd
from eagle.linalg import (
    NotPositiveDefiniteError,
    SpdMatrix,
    logdet_ratio_after_update,
    min_eigenvalue,
    quad_forms,
    rank1_downdate_covariance,
)


class TestSpdMatrix:
    def test_factor_reconstructs(self, rng):
        A = random_spd(rng, 7)
        S = SpdMatrix(A)
        L = S.factor
        assert np.linalg.norm(L @ L.T - A) / np.linalg.norm(A) < 1e-10

    def test_rejects_indefinite(self):
        with pytest.raises(NotPositiveDefiniteError):
            SpdMatrix(np.diag([1.0, -1.0]))

    def test_rejects_asymmetric(self):
        with pytest.raises(ValueError):
            SpdMatrix(np.array([[1.0, 0.5], [0.0, 1.0]]))

    def test_logdet_and_inverse(self, rng):
        A = random_spd(rng, 5)
        S = SpdMatrix(A)
        np.testing.assert_allclose(S.logdet(), np.linalg.slogdet(A)[1], rtol=1e-12)
        np.testing.assert_allclose(S.inverse().entries, np.linalg.inv(A), rtol=1e-9, atol=1e-12)
        z = rng.standard_normal(5)
        np.testing.assert_allclose(S.quad(z), z @ A @ z, rtol=1e-12)


class TestRank1Update:
    def test_zero_weight_is_identity(self):
        V = rank1_downdate_covariance(SpdMatrix.identity(2), np.array([1.0, 0.0]), 0.0)
        np.testing.assert_array_equal(V.entries, np.eye(2))

    def test_scalar_case(self):
        V = rank1_downdate_covariance(SpdMatrix.identity(2), np.array([1.0, 0.0]), 0.5)
        np.testing.assert_allclose(V.entries, np.diag([2 / 3, 1.0]), atol=1e-15)

    def test_matches_dense_inverse(self, rng):
        A = random_spd(rng, 6)
        z = rng.standard_normal(6)
        V = rank1_downdate_covariance(SpdMatrix(A), z, 0.7)
        oracle = np.linalg.inv(np.linalg.inv(A) + 0.7 * np.outer(z, z))
        assert np.linalg.norm(V.entries - oracle) / np.linalg.norm(oracle) < 1e-9

    def test_result_symmetric(self, rng):
        V = rank1_downdate_covariance(SpdMatrix(random_spd(rng, 9)), rng.standard_normal(9), 1.0)
        assert np.max(np.abs(V.entries - V.entries.T)) <= 1e-12

    def test_negative_weight_rejected(self):
        with pytest.raises(ValueError):
            rank1_downdate_covariance(SpdMatrix.identity(2), np.ones(2), -0.1)

    @settings(max_examples=60, deadline=None)
    @given(st.integers(1, 12), st.floats(0.0, 1.0), st.integers(0, 2**32 - 1))
    def test_property_against_dense(self, d, w, seed):
        r = np.random.default_rng(seed)
        A = random_spd(r, d)
        z = r.standard_normal(d)
        V = rank1_downdate_covariance(SpdMatrix(A), z, w)
        oracle = np.linalg.inv(np.linalg.inv(A) + w * np.outer(z, z))
        assert np.linalg.norm(V.entries - oracle) <= 1e-9 * np.linalg.norm(oracle)


class TestLogdetRatio:
    def test_trivial(self):
        e1 = np.array([1.0, 0.0])
        assert logdet_ratio_after_update(SpdMatrix.identity(2), e1, 0.0) == 0.0
        np.testing.assert_allclose(logdet_ratio_after_update(SpdMatrix.identity(2), e1, 1.0), np.log(2), rtol=1e-15)

    def test_matches_cholesky_logdet(self, rng):
        A = SpdMatrix(random_spd(rng, 5))
        z = rng.standard_normal(5)
        after = rank1_downdate_covariance(A, z, 0.4)
        np.testing.assert_allclose(logdet_ratio_after_update(A, z, 0.4), A.logdet() - after.logdet(), atol=1e-9)


class TestMinEigenvalue:
    def test_identity(self):
        assert min_eigenvalue(np.eye(3)) == pytest.approx(1.0)

    def test_diagonal(self):
        assert min_eigenvalue(np.diag([3.0, 0.2, 7.0])) == pytest.approx(0.2)

    def test_matches_eigh(self, rng):
        A = random_spd(rng, 8)
        w = np.linalg.eigh(A)[0]
        np.testing.assert_allclose(min_eigenvalue(A), w.min(), atol=1e-8)


def test_quad_forms_rows(rng):
    A = random_spd(rng, 4)
    Z = rng.standard_normal((6, 4))
    np.testing.assert_allclose(quad_forms(Z, A), [z @ A @ z for z in Z], rtol=1e-12)
