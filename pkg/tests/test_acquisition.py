import logging

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from conftest import make_post, random_spd
from eagle.acquisition import (
    AcquisitionStrategy,
    Strategy,
    eagle_score,
    eagle_scores,
    exact_eig_batch_oracle,
    select_batch,
    step_information_gain,
)
from eagle.blackbox import MoonsModel
from eagle.linalg import rank1_downdate_covariance
from eagle.sampling import LocalityKernel

EAGLE = AcquisitionStrategy.of("eagle")


def random_case(r, d, n):
    V = random_spd(r, d)
    k = LocalityKernel(r.standard_normal(d), width=r.uniform(0.5, 3.0))
    pool = k.x0 + r.standard_normal((n, d))
    return make_post(V, 1.0, 5), k, pool


class TestEagleScore:
    def test_zero(self):
        post = make_post(np.eye(3), 1.0, 5)
        assert eagle_score(post, LocalityKernel(np.ones(3)), np.zeros(3)) == 0.0

    def test_unit_at_center(self):
        e1 = np.array([1.0, 0.0])
        assert eagle_score(make_post(np.eye(2), 1.0, 5), LocalityKernel(e1), e1) == pytest.approx(1.0)

    def test_argmax_matches_eig(self, rng):
        post, k, pool = random_case(rng, 4, 50)
        eig = []
        for z in pool:
            w = float(np.exp(-np.sum((z - k.x0) ** 2) / k.width**2))
            eig.append(0.5 * np.log1p(w * z @ post.V.entries @ z))
        scores = [eagle_score(post, k, z) for z in pool]
        assert np.argmax(scores) == np.argmax(eig)

    def test_vectorized(self, rng):
        post, k, pool = random_case(rng, 3, 10)
        np.testing.assert_allclose(eagle_scores(post.V.entries, k, pool), [eagle_score(post, k, z) for z in pool])

    def test_dim_mismatch(self):
        with pytest.raises(ValueError):
            eagle_score(make_post(np.eye(2), 1.0, 5), LocalityKernel(np.zeros(2)), np.zeros(3))


class TestStepInformationGain:
    def test_half_log_two(self):
        e1 = np.array([1.0, 0.0])
        assert step_information_gain(make_post(np.eye(2), 1.0, 5), LocalityKernel(e1), e1) == pytest.approx(
            0.5 * np.log(2)
        )

    def test_zero(self):
        assert step_information_gain(make_post(np.eye(2), 1.0, 5), LocalityKernel(np.ones(2)), np.zeros(2)) == 0.0

    def test_determinant_lemma(self, rng):
        post, k, pool = random_case(rng, 5, 1)
        z = pool[0]
        w = float(k(z)[0])
        V2 = rank1_downdate_covariance(post.V, z, w)
        assert step_information_gain(post, k, z) == pytest.approx(0.5 * (post.V.logdet() - V2.logdet()), abs=1e-9)


class TestSelectBatch:
    def test_whole_pool(self, rng):
        post, k, pool = random_case(rng, 3, 8)
        for kind in Strategy:
            kw = {"blackbox": MoonsModel(dim=3)} if kind.needs_blackbox else {}
            out = select_batch(post, AcquisitionStrategy.of(kind), pool, 8, k, rng=rng, **kw)
            assert sorted(c.pool_index for c in out) == list(range(8))

    def test_ties_lower_index_first(self):
        post = make_post(np.eye(2), 1.0, 5)
        k = LocalityKernel(np.zeros(2), width=100.0)
        pool = np.array([[0.0, 0.1], [1.0, 0.0], [0.0, 1.0], [0.5, 0.0]])
        out = select_batch(post, EAGLE, pool, 2, k)
        assert [c.pool_index for c in out] == [1, 2]

    def test_full_sort_oracle(self, rng):
        post, k, pool = random_case(rng, 3, 20)
        out = select_batch(post, EAGLE, pool, 6, k)
        scores = [k(z)[0] * (z @ post.V.entries @ z) for z in pool]
        oracle = sorted(range(20), key=lambda i: (-scores[i], i))[:6]
        assert [c.pool_index for c in out] == oracle
        np.testing.assert_allclose([c.score for c in out], [scores[i] for i in oracle])

    def test_batch_too_large(self, rng):
        post, k, pool = random_case(rng, 2, 5)
        with pytest.raises(ValueError):
            select_batch(post, EAGLE, pool, 6, k)

    def test_empty_pool(self):
        with pytest.raises(ValueError):
            select_batch(make_post(np.eye(2), 1.0, 5), EAGLE, np.zeros((0, 2)), 1, LocalityKernel(np.zeros(2)))

    def test_uniform_needs_rng(self, rng):
        post, k, pool = random_case(rng, 2, 5)
        with pytest.raises(ValueError):
            select_batch(post, AcquisitionStrategy.of("uniform_random"), pool, 2, k)

    def test_uniform_is_distinct_subset(self, rng):
        post, k, pool = random_case(rng, 2, 30)
        out = select_batch(post, AcquisitionStrategy.of("uniform_random"), pool, 10, k, rng=rng)
        assert len({c.pool_index for c in out}) == 10

    def test_boundary_needs_blackbox(self, rng):
        post, k, pool = random_case(rng, 2, 5)
        with pytest.raises(ValueError):
            select_batch(post, AcquisitionStrategy.of("boundary_uncertainty"), pool, 2, k)

    def test_boundary_scores_consume_queries(self, rng):
        post, k, pool = random_case(rng, 2, 12)
        bb = MoonsModel()
        out = select_batch(post, AcquisitionStrategy.of("boundary_uncertainty"), pool, 3, k, blackbox=bb)
        assert bb.query_count == 12
        assert all(0.0 <= c.score <= 0.5 for c in out)

    def test_predictive_variance_low_nu_falls_back(self, rng, caplog):
        _, k, pool = random_case(rng, 2, 10)
        post = make_post(np.eye(2), 1.0, 2)
        with caplog.at_level(logging.WARNING):
            out = select_batch(post, AcquisitionStrategy.of("predictive_variance"), pool, 3, k)
        assert len(out) == 3
        assert "undefined" in caplog.text

    def test_predictive_variance_ignores_kernel(self):
        post = make_post(np.eye(2), 1.0, 5)
        pool = np.array([[0.1, 0.0], [5.0, 5.0]])
        out = select_batch(post, AcquisitionStrategy.of("predictive_variance"), pool, 1, LocalityKernel(np.zeros(2)))
        assert out[0].pool_index == 1

    def test_sequential_first_pick_matches_top1(self, rng):
        post, k, pool = random_case(rng, 3, 40)
        seq = select_batch(post, AcquisitionStrategy(Strategy.EAGLE, sequential=True), pool, 5, k)
        lit = select_batch(post, EAGLE, pool, 5, k)
        assert seq[0].pool_index == lit[0].pool_index
        assert len({c.pool_index for c in seq}) == 5

    @settings(max_examples=40, deadline=None)
    @given(st.integers(1, 5), st.integers(1, 30), st.integers(0, 2**32 - 1))
    def test_selection_is_top_scores(self, d, n, seed):
        r = np.random.default_rng(seed)
        post, k, pool = random_case(r, d, n)
        B = int(r.integers(1, n + 1))
        out = select_batch(post, EAGLE, pool, B, k)
        scores = eagle_scores(post.V.entries, k, pool)
        chosen = {c.pool_index for c in out}
        rest = [scores[i] for i in range(n) if i not in chosen]
        assert len(chosen) == B
        assert not rest or min(c.score for c in out) >= max(rest)


class TestBatchOracle:
    def test_empty(self):
        assert exact_eig_batch_oracle(make_post(np.eye(2), 1.0, 5), LocalityKernel(np.zeros(2)), []) == 0.0

    def test_singleton(self, rng):
        post, k, pool = random_case(rng, 3, 1)
        assert exact_eig_batch_oracle(post, k, pool) == pytest.approx(step_information_gain(post, k, pool[0]))

    def test_dense_logdet(self, rng):
        post, k, pool = random_case(rng, 4, 3)
        P = np.linalg.inv(post.V.entries) + sum(k(z)[0] * np.outer(z, z) for z in pool)
        dense = 0.5 * (np.linalg.slogdet(post.V.entries)[1] + np.linalg.slogdet(P)[1])
        assert exact_eig_batch_oracle(post, k, pool) == pytest.approx(dense, abs=1e-9)


def test_strategy_flags():
    assert Strategy.BOUNDARY_UNCERTAINTY.needs_blackbox
    assert Strategy.KERNEL_PROPORTIONAL.kernel_pool
    assert not Strategy.EAGLE.needs_blackbox
    with pytest.raises(ValueError):
        AcquisitionStrategy.of("nope")

