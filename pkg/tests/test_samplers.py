from dataclasses import replace

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from cfgmp.anderson import AASpec
from cfgmp.errors import ConfigError, DivergenceError
from cfgmp.fields import IdealField, PerturbedField
from cfgmp.projection import OperatorSpec
from cfgmp.samplers import SamplerConfig, chain_noise, generate_batch, initial_noise, sample
from cfgmp.world import LabeledPointCloud, make_world

from test_projection import Blowup
from test_fields import Const


@pytest.fixture(scope="module")
def world():
    return make_world("two-clusters")


@pytest.fixture(scope="module")
def pair(world):
    base = IdealField(world)
    return PerturbedField(base, 0.1, 1), PerturbedField(base, 0.1, 2)


def point_world(a):
    return LabeledPointCloud(points=[a, [-a[0], -a[1]]], labels=["A", "B"])


def trajectories_equal(ra, rb):
    for a, b in zip(ra, rb):
        np.testing.assert_array_equal(a.final, b.final)
        np.testing.assert_array_equal(a.states, b.states)


class TestConfig:
    @pytest.mark.parametrize("kw", [
        {"method": "euler"}, {"steps": 0}, {"K": -1}, {"method": "cfg", "K": 2},
        {"w": float("nan")}, {"t_min": 0.0}, {"chains": 0}, {"record": "all"},
        {"final_projection": "never"}, {"on_divergence": "ignore"}, {"workers": 0},
    ])
    def test_rejects(self, kw):
        with pytest.raises(ConfigError):
            SamplerConfig(**kw)

    def test_grid_from_integers(self):
        cfg = SamplerConfig(steps=7)
        assert cfg.times()[3] == 3 / 7
        assert cfg.times()[-1] == 1.0

    def test_projection_mask(self):
        assert SamplerConfig(steps=4).projection_steps().tolist() == [True, True, True, False]
        assert SamplerConfig(steps=4, final_projection="clamp").projection_steps().all()
        assert not SamplerConfig(method="cfg", K=0, steps=4).projection_steps().any()


class TestNoise:
    def test_chain_streams_independent_of_count(self):
        cfg = SamplerConfig(seed=9, chains=8)
        np.testing.assert_array_equal(initial_noise(cfg, 2)[5], chain_noise(9, 5, 2))
        np.testing.assert_array_equal(initial_noise(cfg, 2, 3), initial_noise(cfg, 2)[:3])

    def test_seeds_differ(self):
        assert not np.array_equal(chain_noise(0, 0, 2), chain_noise(1, 0, 2))


class TestExactTransport:
    @settings(max_examples=30, deadline=None)
    @given(N=st.integers(1, 64), w=st.floats(-3, 10),
           a=st.lists(st.floats(-5, 5), min_size=2, max_size=2))
    def test_single_point_telescopes(self, N, w, a):
        cloud = LabeledPointCloud(points=[a], labels=["A"])
        f = IdealField(cloud)
        cfg = SamplerConfig(method="cfg", K=0, steps=N, w=w, chains=4)
        for rec in sample(cfg, f, f, "A"):
            np.testing.assert_allclose(rec.final, a, rtol=0, atol=1e-12)

    def test_interpolation_consistency(self):
        a = np.array([1.5, -0.5])
        cloud = LabeledPointCloud(points=[a], labels=["A"])
        f = IdealField(cloud)
        cfg = SamplerConfig(method="cfg", K=0, steps=16, chains=4, record="full-trajectory")
        for rec in sample(cfg, f, f, "A"):
            t = cfg.times()[:, None]
            np.testing.assert_allclose(rec.states, (1 - t) * rec.noise + t * a, rtol=0, atol=1e-10)

    def test_euler_step_by_hand(self, pair):
        cfg = SamplerConfig(method="cfg", K=0, steps=4, w=2.0, chains=1, record="full-trajectory")
        rec = sample(cfg, *pair, "A")[0]
        cond, uncond = pair
        x = rec.noise.copy()
        for i in range(4):
            u, c = uncond(i / 4, x), cond(i / 4, x, "A")
            x = x + 0.25 * (u + 2.0 * (c - u))
            np.testing.assert_array_equal(rec.states[i + 1], x)


class TestNesting:
    def test_mp_k0_is_cfg(self, pair):
        base = dict(steps=16, chains=16, record="full-trajectory")
        cfg = sample(SamplerConfig(method="cfg", K=0, **base), *pair, "A")
        mp = sample(SamplerConfig(method="cfg-mp", K=0, **base), *pair, "A")
        plus = sample(SamplerConfig(method="cfg-mp-plus", K=0, **base), *pair, "A")
        trajectories_equal(cfg, mp)
        trajectories_equal(cfg, plus)

    def test_plus_m0_is_mp(self, pair):
        base = dict(steps=16, chains=16, K=3, record="full-trajectory")
        mp = sample(SamplerConfig(method="cfg-mp", **base), *pair, "A")
        plus = sample(SamplerConfig(method="cfg-mp-plus", aa=AASpec(m=0, beta=1.0), **base), *pair, "A")
        trajectories_equal(mp, plus)

    def test_lambda_and_prime_are_g(self, pair):
        base = dict(method="cfg-mp", steps=16, chains=16, K=2, record="full-trajectory")
        g = sample(SamplerConfig(**base), *pair, "A")
        lam = sample(SamplerConfig(operator=OperatorSpec("G-lambda", lam=0.5), **base), *pair, "A")
        prime = sample(SamplerConfig(operator=OperatorSpec("G-prime", w=1.0), **base), *pair, "A")
        trajectories_equal(g, lam)
        trajectories_equal(g, prime)


class TestRecords:
    def test_full_shapes(self, pair):
        cfg = SamplerConfig(steps=8, K=3, chains=3, record="full-trajectory")
        for rec in sample(cfg, *pair, "A"):
            assert rec.states.shape == (9, 2)
            assert rec.velocities.shape == rec.half_states.shape == (8, 2)
            assert rec.gaps.shape == (8, 4)
            assert rec.residuals.shape == (8, 3)
            assert np.all(np.isfinite(rec.states))
            # the last step is not projected under the default policy
            assert np.isnan(rec.gaps[-1]).all()

    def test_final_only_drops_states(self, pair):
        rec = sample(SamplerConfig(steps=8, chains=1), *pair, "A")[0]
        assert rec.states is None and rec.residuals is None
        assert rec.gaps.shape == (8, 3)

    def test_r_baseline_is_half_step(self, pair):
        cfg = SamplerConfig(steps=8, K=2, chains=2, record="full-trajectory")
        cond, uncond = pair
        for rec in sample(cfg, *pair, "A"):
            for i in range(7):
                z0 = rec.half_states[i]
                expect = np.linalg.norm(cond((i + 1) / 8, z0, "A") - uncond((i + 1) / 8, z0))
                assert rec.gaps[i, 0] == pytest.approx(expect, rel=1e-13)

    def test_noise_override(self, pair):
        noise = np.array([[0.1, 0.2], [0.3, -0.4]])
        recs = sample(SamplerConfig(steps=4, chains=2), *pair, "A", noise=noise)
        np.testing.assert_array_equal(recs[1].noise, noise[1])
        with pytest.raises(ConfigError):
            sample(SamplerConfig(steps=4), *pair, "A", noise=np.zeros((2, 3)))


class TestDeterminism:
    def test_workers_do_not_matter(self, pair):
        cfg = SamplerConfig(steps=16, chains=40, block_size=8, record="full-trajectory")
        trajectories_equal(sample(cfg, *pair, "A"), sample(replace(cfg, workers=4), *pair, "A"))

    def test_repeat(self, pair):
        cfg = SamplerConfig(steps=16, chains=10)
        a, b = generate_batch(cfg, *pair, "A"), generate_batch(cfg, *pair, "A")
        np.testing.assert_array_equal(a.samples, b.samples)


class TestDivergence:
    def test_flagged_and_counted(self):
        cfg = SamplerConfig(method="cfg-mp", steps=4, K=5, chains=2, final_projection="clamp")
        batch = generate_batch(cfg, Blowup(), Const([0.0, 0.0]), "A")
        assert batch.divergences > 0
        assert all(r.diverged_any for r in batch.records)

    def test_raise_carries_step(self):
        cfg = SamplerConfig(method="cfg-mp", steps=4, K=5, chains=2, on_divergence="raise",
                            final_projection="clamp")
        with pytest.raises(DivergenceError) as info:
            sample(cfg, Blowup(), Const([0.0, 0.0]), "A")
        assert info.value.step is not None


class TestBatch:
    def test_count_one_is_sample(self, pair):
        cfg = SamplerConfig(steps=8, chains=5)
        batch = generate_batch(cfg, *pair, "A", count=1)
        np.testing.assert_array_equal(batch.samples[0], sample(cfg, *pair, "A")[0].final)

    def test_count_must_be_positive(self, pair):
        with pytest.raises(ConfigError):
            generate_batch(SamplerConfig(), *pair, "A", count=0)

    def test_conditional_fidelity(self, world, pair):
        cfg = SamplerConfig(method="cfg", K=0, chains=256)
        samples = generate_batch(cfg, *pair, "A").samples
        da = np.linalg.norm(samples - world.centroid("A"), axis=1)
        db = np.linalg.norm(samples - world.centroid("B"), axis=1)
        assert np.mean(da < db) >= 0.99
