import dataclasses

import numpy as np
import pytest
from scipy import stats

import stridesim.randomization as rnd


def test_dynamics_samples_stay_in_range(rng):
    cfg = rnd.RandomizationConfig()
    lows = {t: np.inf for t in rnd.DYNAMICS_TERMS}
    highs = {t: -np.inf for t in rnd.DYNAMICS_TERMS}
    for _ in range(100_000):
        ep = rnd.sample_dynamics(cfg, rng)
        vals = {
            "friction": ep.friction,
            "restitution": ep.restitution,
            "base_mass_delta": ep.base_mass_delta,
            "linkage_mass_scale": ep.linkage_mass_scale,
            "joint_friction_scale": ep.joint_friction_scale,
            "armature_scale": ep.armature_scale,
            "default_joint_pos": ep.default_joint_pos,
        }
        for t in rnd.DYNAMICS_TERMS:
            lows[t] = min(lows[t], np.min(vals[t]))
            highs[t] = max(highs[t], np.max(vals[t]))
    for t in rnd.DYNAMICS_TERMS:
        lo, hi = getattr(cfg, t)
        assert lows[t] >= lo, t
        assert highs[t] <= hi, t


def test_default_ranges_bit_equal_to_table():
    cfg = rnd.RandomizationConfig()
    assert cfg.friction == (0.2, 1.25)
    assert cfg.restitution == (0.0, 0.1)
    assert cfg.base_mass_delta == (-1.0, 1.0)
    assert cfg.linkage_mass_scale == (0.9, 1.1)
    assert cfg.joint_friction_scale == (0.9, 1.1)
    assert cfg.armature_scale == (1.0, 1.05)
    assert cfg.default_joint_pos == (-0.05, 0.05)
    assert cfg.noise_lin_vel == 0.1
    assert cfg.noise_ang_vel == 0.2
    assert cfg.noise_gravity == 0.05
    assert cfg.noise_hip_pos == 0.03
    assert cfg.noise_kfe_pos == 0.05
    assert cfg.noise_ffe_pos == 0.08
    assert cfg.noise_faa_pos == 0.03
    assert cfg.noise_joint_vel == 1.5


def test_schema_is_closed():
    """Exactly 7 dynamics + 8 noise terms; no motor-strength or gain knobs."""
    names = {f.name for f in dataclasses.fields(rnd.RandomizationConfig)}
    assert set(rnd.DYNAMICS_TERMS) <= names
    assert set(rnd.NOISE_TERMS) <= names
    assert len(rnd.DYNAMICS_TERMS) == 7
    assert len(rnd.NOISE_TERMS) == 8
    assert names == set(rnd.DYNAMICS_TERMS) | set(rnd.NOISE_TERMS) | {"push"}
    for banned in ("motor_strength", "kp", "kd", "gain"):
        assert not any(banned in n for n in names)


def test_degenerate_config_gives_exact_values(rng):
    cfg = rnd.RandomizationConfig(
        friction=(1.0, 1.0),
        linkage_mass_scale=(1.0, 1.0),
        joint_friction_scale=(1.0, 1.0),
        armature_scale=(1.0, 1.0),
        base_mass_delta=(0.0, 0.0),
        default_joint_pos=(0.0, 0.0),
        restitution=(0.0, 0.0),
    )
    ep = rnd.sample_dynamics(cfg, rng)
    assert ep.friction == 1.0
    assert np.all(ep.linkage_mass_scale == 1.0)
    assert np.all(ep.armature_scale == 1.0)
    assert np.all(ep.default_joint_pos == 0.0)


def test_fixed_seed_reproducibility():
    cfg = rnd.RandomizationConfig()
    e1 = rnd.sample_dynamics(cfg, np.random.default_rng(42))
    e2 = rnd.sample_dynamics(cfg, np.random.default_rng(42))
    assert e1.friction == e2.friction
    np.testing.assert_array_equal(e1.linkage_mass_scale, e2.linkage_mass_scale)
    np.testing.assert_array_equal(e1.default_joint_pos, e2.default_joint_pos)


def test_invalid_range_rejected():
    with pytest.raises(ValueError):
        rnd.RandomizationConfig(friction=(1.5, 0.2))


def test_noise_zero_widths_identity(rng):
    cfg = rnd.RandomizationConfig().disabled()
    obs = rng.normal(size=rnd.OBS_DIM)
    out = rnd.apply_noise(cfg, obs.copy(), rng)
    np.testing.assert_array_equal(out, obs)


def test_noise_respects_half_widths(rng):
    cfg = rnd.RandomizationConfig()
    obs = np.zeros((100_000, rnd.OBS_DIM))
    noisy = rnd.apply_noise(cfg, obs, rng)
    ffe = noisy[:, rnd.SEG_QPOS][:, [4, 10]]
    assert np.abs(ffe).max() <= 0.08
    assert np.abs(noisy[:, rnd.SEG_OMEGA]).max() <= 0.2
    assert np.abs(noisy[:, rnd.SEG_LINVEL]).max() <= 0.1
    # command and previous action never noised
    assert np.all(noisy[:, rnd.SEG_COMMAND] == 0.0)
    assert np.all(noisy[:, rnd.SEG_ACTION] == 0.0)


def test_noise_mean_approaches_zero(rng):
    cfg = rnd.RandomizationConfig()
    n = 1_000_000
    obs = np.zeros((n, rnd.OBS_DIM))
    noisy = rnd.apply_noise(cfg, obs, rng)
    # uniform(-w, w): std of the sample mean is w/sqrt(3 n)
    for seg, w in ((rnd.SEG_LINVEL, 0.1), (rnd.SEG_OMEGA, 0.2)):
        mean = noisy[:, seg].mean()
        bound = 3.0 * w / np.sqrt(3.0 * n * 3)
        assert abs(mean) < bound


def test_friction_uniformity_ks(rng):
    cfg = rnd.RandomizationConfig()
    samples = np.array([rnd.sample_dynamics(cfg, rng).friction for _ in range(10_000)])
    res = stats.kstest(samples, stats.uniform(loc=0.2, scale=1.05).cdf)
    assert res.pvalue > 0.01


def test_push_schedule_event_count(rng):
    cfg = rnd.PushConfig(interval=(5.0, 10.0), magnitude=0.5)
    for _ in range(200):
        events = rnd.schedule_pushes(cfg, rng, 20.0)
        assert 2 <= len(events) <= 4  # floor(20/10) .. floor(20/5)
        for t, dv in events:
            assert 0.0 < t < 20.0
            assert np.linalg.norm(dv) <= 0.5


def test_push_disabled_empty(rng):
    assert rnd.schedule_pushes(rnd.PushConfig(enabled=False), rng, 20.0) == []


def test_randomized_arrays_apply_terms(model, rng):
    a = model.arrays()
    ep = rnd.sample_dynamics(rnd.RandomizationConfig(), rng)
    mass, mcom, io, armature, coulomb, viscous = rnd.randomized_body_arrays(a, ep)
    assert mass[0] == pytest.approx(a.mass[0] + ep.base_mass_delta)
    np.testing.assert_allclose(mass[1:], a.mass[1:] * ep.linkage_mass_scale)
    np.testing.assert_allclose(armature, a.armature * ep.armature_scale)
    np.testing.assert_allclose(coulomb, a.coulomb * ep.joint_friction_scale)
    # inertia about the origin stays consistent with the scaled masses
    for b in range(1, 13):
        c = a.com[b]
        expected = a.inertia_com[b] * ep.linkage_mass_scale[b - 1] + mass[b] * (
            np.dot(c, c) * np.eye(3) - np.outer(c, c)
        )
        np.testing.assert_allclose(io[b], expected)
