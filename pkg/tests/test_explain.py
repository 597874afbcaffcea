import numpy as np
import pytest

from conftest import fixture_cmd
from eagle.acquisition import Strategy
from eagle.blackbox import BlackBox, BlackBoxError, ExternalProcessModel, MoonsModel, SyntheticLinearModel
from eagle.explain import ExplainError, explain_instance, refit_prefix
from eagle.sampling import LocalityKernel, PoolConfig, draw_pool
from eagle.surrogate import Prior, fit_arrays

SMALL = PoolConfig(pool_size=200, budget=80)


class FailingModel(BlackBox):
    def __init__(self, after):
        super().__init__()
        self.after = after

    def _predict_batch(self, Z):
        if self.query_count + Z.shape[0] > self.after:
            raise BlackBoxError("model went away")
        return np.full(Z.shape[0], 0.5)


class TestExplain:
    def test_seeds_only(self):
        cfg = PoolConfig(pool_size=100, seed_count=10, budget=10)
        bb = MoonsModel()
        x0 = np.array([0.4, 0.1])
        exp = explain_instance(bb, x0, "eagle", cfg, Prior(lam=2.0), 3)
        k = LocalityKernel(x0)
        seeds = draw_pool(k, cfg, np.random.default_rng(3), size=10)
        ref = fit_arrays(seeds, k(seeds), MoonsModel().batch_predict(seeds), Prior(lam=2.0))
        np.testing.assert_array_equal(exp.phi_hat, ref.phi_hat)
        assert bb.query_count == 10

    def test_noise_free_ranking(self):
        phi = np.array([0.2, -1.5, 0.7])
        exp = explain_instance(SyntheticLinearModel(phi), np.zeros(3), "eagle", PoolConfig(budget=200), Prior(lam=3.0), 0)
        assert list(np.argsort(-np.abs(exp.phi_hat))) == list(np.argsort(-np.abs(phi)))

    @pytest.mark.parametrize("kind", list(Strategy))
    def test_exact_budget(self, kind):
        bb = MoonsModel(dim=3)
        exp = explain_instance(bb, np.array([0.5, 0.2, 0.0]), kind.value, PoolConfig(pool_size=50, budget=37), Prior(lam=3.0), 1)
        tr = exp.trace
        assert tr.n_steps == 37
        assert bb.query_count == 37 + tr.scoring_queries
        assert tr.scoring_queries == (27 // 10 * 50 + 50 if kind.needs_blackbox else 0)
        assert tr.checkpoint_t == [10, 20, 30, 37]

    def test_deterministic(self):
        run = lambda: explain_instance(MoonsModel(), [0.5, 0.25], "eagle", SMALL, Prior(lam=2.0), 42).trace
        a, b = run(), run()
        for key in ("Z", "weights", "y", "quad", "logdet_v", "trace_v", "step_eig"):
            np.testing.assert_array_equal(getattr(a, key), getattr(b, key))

    def test_rng_generator_accepted(self):
        exp = explain_instance(MoonsModel(), [0.5, 0.25], "uniform_random", SMALL, Prior(lam=2.0), np.random.default_rng(0))
        assert exp.trace.rng_seed == -1

    def test_telescoping(self):
        tr = explain_instance(MoonsModel(dim=4), np.zeros(4), "eagle", SMALL, Prior(lam=4.0), 5).trace
        np.testing.assert_allclose(tr.cumulative_eig, 0.5 * (tr.logdet_v0 - tr.logdet_v), atol=1e-10)

    def test_trace_matches_final_posterior(self):
        exp = explain_instance(MoonsModel(), [0.0, 0.5], "eagle", SMALL, Prior(lam=2.0), 6)
        assert exp.trace.logdet_v[-1] == pytest.approx(exp.posterior.V.logdet(), abs=1e-10)
        np.testing.assert_array_equal(refit_prefix(exp.trace, 80).phi_hat, exp.phi_hat)
        assert np.all(exp.lower <= exp.phi_hat) and np.all(exp.phi_hat <= exp.upper)

    def test_theory_mode_unit_ball(self):
        tr = explain_instance(SyntheticLinearModel(np.ones(3)), np.zeros(3), "eagle", SMALL, Prior(lam=1.0), 0, theory_mode=True).trace
        assert np.max(np.linalg.norm(tr.Z, axis=1)) <= 1.0 + 1e-12

    def test_failure_keeps_partial_trace(self):
        with pytest.raises(ExplainError) as info:
            explain_instance(FailingModel(after=35), np.zeros(2), "eagle", SMALL, Prior(lam=2.0), 0)
        tr = info.value.trace
        assert tr.n_steps == 30
        assert "went away" in tr.failure

    def test_external_matches_in_process(self):
        cfg = PoolConfig(pool_size=100, budget=40)
        local = explain_instance(MoonsModel(2.0, 2), [0.5, 0.25], "eagle", cfg, Prior(lam=2.0), 9)
        with ExternalProcessModel(fixture_cmd("moons_server.py", 2, 2.0)) as bb:
            remote = explain_instance(bb, [0.5, 0.25], "eagle", cfg, Prior(lam=2.0), 9)
        np.testing.assert_allclose(remote.phi_hat, local.phi_hat, atol=1e-9)
