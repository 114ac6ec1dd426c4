import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from cfgmp.anderson import AASpec, AAState, aa_step, solve_weights, solve_weights_batch
from cfgmp.errors import DivergenceError, OperatorError
from cfgmp.verify import affine_aa_error, picard_reduction_error, scalar_aa_trace, tikhonov_slack


def affine(z):
    return 0.5 * z + 1.0


class TestSpec:
    @pytest.mark.parametrize("kw", [{"m": -1}, {"m": 1.5}, {"beta": 0.0}, {"beta": 1.5}, {"reg": -1.0}])
    def test_rejects(self, kw):
        with pytest.raises(OperatorError):
            AASpec(**kw)


class TestWeights:
    def test_single_residual(self):
        np.testing.assert_array_equal(solve_weights([[3.0, 4.0]]), [1.0])

    def test_scalar_oracle(self):
        alpha = solve_weights([[1.0], [0.5]], reg=0.0)
        np.testing.assert_array_equal(alpha, [-1.0, 2.0])

    def test_scalar_oracle_default_reg(self):
        alpha = solve_weights([[1.0], [0.5]])
        np.testing.assert_allclose(alpha, [-1.0, 2.0], atol=1e-9)

    def test_identical_residuals(self):
        f = [1.0, -2.0]
        alpha = solve_weights([f, f])
        assert alpha.sum() == pytest.approx(1.0, abs=1e-14)
        assert np.linalg.norm(alpha @ np.array([f, f])) <= np.linalg.norm(f) + 1e-12

    def test_dimension_mismatch(self):
        with pytest.raises(OperatorError):
            solve_weights([[1.0, 2.0], [1.0]])
        with pytest.raises(OperatorError):
            solve_weights([])

    def test_batch_rows_independent(self):
        rng = np.random.default_rng(0)
        F = rng.standard_normal((4, 3, 5))
        batch = solve_weights_batch(F)
        for row, Fi in zip(batch, F):
            np.testing.assert_allclose(row, solve_weights(list(Fi)), rtol=1e-12)

    @settings(max_examples=200, deadline=None)
    @given(arrays(np.float64, st.tuples(st.integers(1, 4), st.integers(1, 5)),
                  elements=st.floats(-1e3, 1e3)))
    def test_constraint_and_optimality(self, F):
        alpha = solve_weights(list(F))
        assert abs(alpha.sum() - 1.0) <= 1e-14 * max(1.0, np.abs(alpha).max())
        mixed = np.linalg.norm(alpha @ F)
        best = np.linalg.norm(F, axis=1).min()
        assert mixed <= best + 10 * tikhonov_slack(F, 1e-10) + 1e-12 * max(1.0, np.linalg.norm(F))

    def test_reg_zero_matches_normal_equations(self):
        F = np.random.default_rng(4).standard_normal((2, 4, 3))
        np.testing.assert_allclose(solve_weights_batch(F, 0.0), solve_weights_batch(F, 1e-15), rtol=1e-6)


class TestStep:
    def test_hand_trace(self):
        assert scalar_aa_trace(reg=0.0) == [1.0, 2.0]
        assert scalar_aa_trace()[1] == pytest.approx(2.0, abs=1e-9)

    def test_damped_first_step(self):
        state = AAState.start(np.array([0.0]))
        assert aa_step(state, AASpec(m=1, beta=0.5), affine)[0] == 0.5

    def test_raw_first_step(self):
        state = AAState.start(np.array([0.0]))
        assert aa_step(state, AASpec(m=1, beta=0.5, raw_first_step=True), affine)[0] == 1.0

    def test_m0_beta1_is_plain_iteration(self):
        rng = np.random.default_rng(0)
        A = rng.uniform(-0.5, 0.5, (3, 3))
        b = rng.standard_normal(3)
        state = AAState.start(np.ones(3))
        z = np.ones(3)
        for _ in range(30):
            got = aa_step(state, AASpec(m=0, beta=1.0), lambda v: A @ v + b)
            z = A @ z + b
            np.testing.assert_array_equal(got, z)

    def test_m0_is_damped_picard(self):
        assert picard_reduction_error(np.random.default_rng(1)) <= 1e-15

    def test_history_length(self):
        state = AAState.start(np.array([0.0]))
        spec = AASpec(m=2)
        for k in range(6):
            aa_step(state, spec, affine)
            assert len(state.iterates) == len(state.residuals) == min(k, spec.m) + 1

    @pytest.mark.parametrize("d", [1, 2, 3])
    def test_linear_exactness(self, d):
        rng = np.random.default_rng(d)
        assert max(affine_aa_error(d, rng, reg=0.0) for _ in range(20)) <= 1e-10

    def test_default_reg_still_converges_on_affine(self):
        # the Tikhonov shift costs exactness, not convergence
        assert affine_aa_error(2, np.random.default_rng(0), reg=1e-10) <= 1e-4

    def test_divergence(self):
        state = AAState.start(np.array([1.0, 2.0]))
        with pytest.raises(DivergenceError) as info:
            aa_step(state, AASpec(), lambda z: z * np.inf)
        assert info.value.iteration == 1

    def test_batched_rows_match_single(self):
        rng = np.random.default_rng(5)
        Z = rng.standard_normal((3, 2))

        def op(v):
            return np.tanh(v) + 0.3

        batch = AAState.start(Z)
        singles = [AAState.start(z) for z in Z]
        for _ in range(5):
            zb = aa_step(batch, AASpec(m=2), op)
            for i, s in enumerate(singles):
                np.testing.assert_allclose(aa_step(s, AASpec(m=2), op), zb[i], rtol=1e-13)
