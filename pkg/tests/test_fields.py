import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from cfgmp.errors import FieldError
from cfgmp.fields import (
    CFGField,
    DistilledField,
    IdealField,
    PerturbedField,
    VelocityField,
    cfg_velocity,
    distilled_velocity,
    eval_field,
    extrapolate,
    prediction_gap,
)
from cfgmp.world import LabeledPointCloud, make_world

# seed-1 perturbation of the default two-cluster world at x = (0.3, -0.2)
BIAS_ORACLE = [0.062049622109720697, -0.002209897011294309]
# analytic gap on the default two-cluster world at x = (0.5, 0.3), t = 0.5
GAP_ORACLE = 6.341532061298198


class Const(VelocityField):
    kind = "constant"

    def __init__(self, value):
        self.value = np.asarray(value, float)

    @property
    def dimension(self):
        return self.value.shape[-1]

    def __call__(self, t, x, label=None):
        x = np.asarray(x, float)
        return np.broadcast_to(self.value, x.shape).copy()


@pytest.fixture(scope="module")
def world():
    return make_world("two-clusters")


class TestEvalField:
    def test_ideal_delegates(self):
        c = LabeledPointCloud(points=[[1.0, 0.0]], labels=["A"])
        np.testing.assert_allclose(eval_field(IdealField(c), 0.5, [0.0, 0.0], "A"), [2.0, 0.0])

    def test_zero_epsilon_is_base(self, world):
        base = IdealField(world)
        x = np.array([0.4, 1.2])
        np.testing.assert_array_equal(PerturbedField(base, 0.0, 5)(0.3, x, "A"), base(0.3, x, "A"))

    def test_perturbation_oracle(self, world):
        base = IdealField(world)
        p = PerturbedField(base, 0.1, 1)
        x = np.array([0.3, -0.2])
        np.testing.assert_allclose(p(0.4, x, "A") - base(0.4, x, "A"), BIAS_ORACLE, rtol=1e-12)

    def test_perturbation_formula(self, world):
        p = PerturbedField(IdealField(world), 0.1, 1)
        x = [0.3, -0.2]
        for c in range(2):
            arg = sum(p.frequency[c][j] * x[j] for j in range(2)) + p.phase[c]
            assert p.bias(x)[c] == pytest.approx(0.1 * p.amplitude[c] * math.sin(arg), rel=1e-13)

    def test_perturbation_bounded(self, world):
        p = PerturbedField(IdealField(world), 0.1, 4)
        xs = np.random.default_rng(0).uniform(-10, 10, (500, 2))
        assert np.max(np.abs(p.bias(xs))) <= 0.1

    def test_seeds_differ(self, world):
        base = IdealField(world)
        assert not np.allclose(PerturbedField(base, 0.1, 1).bias([1.0, 1.0]),
                               PerturbedField(base, 0.1, 2).bias([1.0, 1.0]))

    def test_nan_rejected(self, world):
        with pytest.raises(FieldError):
            eval_field(IdealField(world), 0.5, [np.nan, 0.0], "A")

    def test_dimension_rejected(self, world):
        with pytest.raises(FieldError):
            eval_field(IdealField(world), 0.5, [0.0, 0.0, 0.0], "A")


class TestCFG:
    def test_w_one_is_conditional(self, world):
        base = IdealField(world)
        cond, uncond = PerturbedField(base, 0.1, 1), PerturbedField(base, 0.1, 2)
        x = np.array([0.2, 0.9])
        np.testing.assert_array_equal(cfg_velocity(cond, uncond, 1.0, 0.3, x, "A"), cond(0.3, x, "A"))
        np.testing.assert_array_equal(CFGField(cond, uncond, 1.0)(0.3, x, "A"), cond(0.3, x, "A"))

    def test_equal_fields_inert(self):
        f = Const([1.5, -2.0])
        for w in (0.0, 1.0, 2.0, 10.0):
            np.testing.assert_array_equal(cfg_velocity(f, f, w, 0.5, [0.0, 0.0], "A"), [1.5, -2.0])

    def test_arithmetic(self):
        np.testing.assert_array_equal(cfg_velocity(Const([1.0, 0.0]), Const([0.0, 0.0]), 2.0, 0.5,
                                                   [0.0, 0.0], "A"), [2.0, 0.0])

    @settings(max_examples=100, deadline=None)
    @given(w1=st.floats(-5, 10), w2=st.floats(-5, 10),
           x=st.lists(st.floats(-5, 5), min_size=2, max_size=2), t=st.floats(0.05, 0.95))
    def test_affine_in_w(self, w1, w2, x, t):
        base = IdealField(make_world("two-clusters"))
        cond, uncond = PerturbedField(base, 0.1, 1), PerturbedField(base, 0.1, 2)
        lhs = cfg_velocity(cond, uncond, w1, t, x, "A") + cfg_velocity(cond, uncond, w2, t, x, "A")
        rhs = 2 * cfg_velocity(cond, uncond, (w1 + w2) / 2, t, x, "A")
        np.testing.assert_allclose(lhs, rhs, rtol=0, atol=1e-12 * max(1.0, np.max(np.abs(lhs))))

    def test_gap_zero_collapse(self, world):
        base = IdealField(world)
        x = np.array([0.3, 0.1])
        vals = [cfg_velocity(base, base, w, 0.5, x, None) for w in (0.0, 1.0, 2.0, 10.0)]
        for v in vals[1:]:
            np.testing.assert_array_equal(v, vals[0])

    def test_extrapolate(self):
        assert extrapolate(1.0, 3.0, 0.5) == 2.0


class TestDistilled:
    def test_w_zero_unconditional(self, world):
        base = IdealField(world)
        cond, uncond = PerturbedField(base, 0.1, 1), PerturbedField(base, 0.1, 2)
        x = np.array([0.2, 0.9])
        np.testing.assert_array_equal(distilled_velocity(cond, uncond, 0.3, x, "A", 0.0), uncond(0.3, x))
        np.testing.assert_array_equal(DistilledField(cond, uncond)(0.3, x, "A", w=1.0), cond(0.3, x, "A"))

    def test_arithmetic(self):
        np.testing.assert_array_equal(
            distilled_velocity(Const([1.0, 0.0]), Const([0.0, 0.0]), 0.5, [0.0, 0.0], "A", 3.0), [3.0, 0.0])

    def test_matches_cfg(self, world):
        base = IdealField(world)
        cond, uncond = PerturbedField(base, 0.1, 1), PerturbedField(base, 0.1, 2)
        xs = np.random.default_rng(2).uniform(-3, 3, (50, 2))
        for w in (-1.0, 0.5, 1.5, 4.0):
            np.testing.assert_allclose(distilled_velocity(cond, uncond, 0.4, xs, "A", w),
                                       cfg_velocity(cond, uncond, w, 0.4, xs, "A"), rtol=0, atol=1e-14)


class TestGap:
    def test_equal_zero(self, world):
        base = IdealField(world)
        assert prediction_gap(base, base, 0.5, [0.1, 0.1], None) == 0.0

    def test_three_four_five(self):
        assert prediction_gap(Const([3.0, 4.0]), Const([0.0, 0.0]), 0.5, [0.0, 0.0], "A") == 5.0

    def test_two_cluster_oracle(self, world):
        base = IdealField(world)
        assert prediction_gap(base, base, 0.5, [0.5, 0.3], "A") == pytest.approx(GAP_ORACLE, rel=1e-13)
