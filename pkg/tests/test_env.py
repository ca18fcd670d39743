import numpy as np
import pytest

import stridesim as ss
from stridesim import kinematics as kin
from stridesim import terrain as ter
from stridesim.dynamics import standing_pose_height
from stridesim.env import Command, EnvConfig, EpisodeResult, LocomotionEnv, generate_terrain, sample_command
from stridesim.randomization import OBS_DIM, RandomizationConfig


def make_env(n=1, seed=0, dr=True, **cfg_over):
    model = ss.load_default_model()
    rand = RandomizationConfig() if dr else RandomizationConfig().disabled()
    return LocomotionEnv(model, EnvConfig(num_envs=n, seed=seed, **cfg_over), rand_cfg=rand)


# --- reset -------------------------------------------------------------------

def test_reset_without_dr_exact_height():
    env = make_env(dr=False)
    env.reset()
    expected = standing_pose_height(env.model)
    assert env.base_pos[0, 2] == pytest.approx(expected, abs=1e-12)
    np.testing.assert_array_equal(env.q[0], env.model.nominal_pose)


def test_reset_with_dr_bounded_offsets():
    env = make_env(n=32, seed=3)
    env.reset()
    dq = env.q - env.model.nominal_pose[None, :]
    assert np.abs(dq).max() <= 0.05 + 1e-12
    assert not np.all(dq == 0.0)


def test_reset_determinism():
    e1 = make_env(seed=9)
    e2 = make_env(seed=9)
    np.testing.assert_array_equal(e1.reset(), e2.reset())


# --- stepping ------------------------------------------------------------------

def test_step_advances_exactly_20ms():
    env = make_env(dr=False)
    env.reset()
    env.step(np.zeros((1, 12)))
    assert env.sim_time[0] == 0.02
    for _ in range(49):
        env.step(np.zeros((1, 12)))
    assert env.sim_time[0] == 1.0


def test_tipped_robot_terminates_as_fall():
    env = make_env(dr=False)
    env.reset()
    env.base_quat[0] = kin.quat_from_axis_angle([0, 1, 0], np.radians(70.0))
    obs, r, done, info = env.step(np.zeros((1, 12)))
    assert done[0]
    assert info["episode_results"][0].cause == "fall"


def test_timeout_termination():
    env = make_env(dr=False, episode_length_s=0.1)
    env.reset()
    for k in range(5):
        obs, r, done, info = env.step(np.zeros((1, 12)))
    assert done[0]
    assert info["episode_results"][0].cause == "timeout"
    assert info["time_outs"][0]


def test_observation_is_pure_function_of_state():
    env = make_env(dr=False)  # no noise so the rebuild is exact
    obs = env.reset()
    for k in range(10):
        obs, *_ = env.step(0.1 * np.sin(k + np.arange(12))[None, :])
    rebuilt = env.observation_from_state(0)
    np.testing.assert_array_equal(obs[0], rebuilt)
    assert obs.shape == (1, OBS_DIM)


def test_episode_result_causes_enumerated():
    with pytest.raises(ValueError):
        EpisodeResult(1, "exploded", 0.0, {})


# --- commands ------------------------------------------------------------------

def test_sample_command_in_box(rng):
    for _ in range(10_000):
        c = sample_command(rng)
        assert -1.0 <= c.v_x <= 1.0
        assert -0.5 <= c.v_y <= 0.5
        assert -1.0 <= c.omega_z <= 1.0


def test_zero_command_fraction(rng):
    zeros = sum(
        1 for _ in range(10_000)
        if np.all(sample_command(rng).as_array() == 0.0)
    )
    assert abs(zeros / 10_000 - 0.1) < 0.01


def test_zero_ranges_always_zero(rng):
    ranges = {"v_x": (0.0, 0.0), "v_y": (0.0, 0.0), "omega_z": (0.0, 0.0)}
    for _ in range(100):
        assert np.all(sample_command(rng, ranges).as_array() == 0.0)


# --- terrain ---------------------------------------------------------------------

def test_generate_terrain_stairs_riser(rng):
    t = generate_terrain("stairs", rng)
    assert t.height(0.5, 0.0) == 0.0
    assert t.height(1.05, 0.0) == pytest.approx(0.04)
    assert t.height(1.05 + 0.30, 0.0) == pytest.approx(0.08)


def test_generate_terrain_flat(rng):
    t = generate_terrain("flat", rng)
    for x, y in [(-3, 0), (0, 0), (5, 2)]:
        assert t.height(x, y) == 0.0


def test_generate_terrain_slope_gradient(rng):
    t = ter.slope(20.0, start_x=0.0)
    dx = 1e-6
    grad = (t.height(1.0 + dx, 0.0) - t.height(1.0, 0.0)) / dx
    assert grad == pytest.approx(np.tan(np.radians(20.0)), rel=1e-6)


def test_generate_terrain_rough_bounded(rng):
    t = generate_terrain("rough", rng)
    xs = rng.uniform(-5, 5, size=(2000, 2))
    hs = np.array([t.height(x, y) for x, y in xs])
    assert np.abs(hs).max() <= 0.02 + 1e-12


def test_generate_terrain_unknown(rng):
    with pytest.raises(ValueError):
        ter.generate_terrain("lava", rng)


# --- vectorized batch ---------------------------------------------------------

def test_vec_n1_equals_batch_env0():
    e1 = make_env(n=1, seed=13)
    eN = make_env(n=5, seed=13)
    o1 = e1.reset()
    oN = eN.reset()
    np.testing.assert_array_equal(o1[0], oN[0])
    for k in range(100):
        a = 0.3 * np.sin(0.1 * k + np.arange(12))
        o1, r1, d1, _ = e1.step(a[None, :])
        oN, rN, dN, _ = eN.step(np.tile(a, (5, 1)))
        np.testing.assert_array_equal(o1[0], oN[0])
        assert r1[0] == rN[0] and d1[0] == dN[0]


def test_vec_batch_deterministic_across_runs():
    def run():
        env = make_env(n=8, seed=21)
        env.reset()
        out = []
        for k in range(40):
            obs, r, d, _ = env.step(0.2 * np.cos(0.2 * k + np.arange(12))[None, :] * np.ones((8, 1)))
            out.append((obs.copy(), r.copy(), d.copy()))
        return out
    run1 = run()
    run2 = run()
    for (o1, r1, d1), (o2, r2, d2) in zip(run1, run2):
        np.testing.assert_array_equal(o1, o2)
        np.testing.assert_array_equal(r1, r2)
        np.testing.assert_array_equal(d1, d2)


def test_divergent_env_is_isolated():
    eN = make_env(n=4, seed=5)
    eC = make_env(n=4, seed=5)  # control
    eN.reset()
    eC.reset()
    acts = np.zeros((4, 12))
    bad = acts.copy()
    bad[2] = np.nan  # poison env 2 only
    oN, rN, dN, iN = eN.step(bad)
    oC, rC, dC, iC = eC.step(acts)
    assert dN[2] and iN["divergence"][2]
    assert iN["episode_results"][2].cause == "divergence"
    for i in (0, 1, 3):
        np.testing.assert_array_equal(eN.u[i], eC.u[i])
        np.testing.assert_array_equal(eN.q[i], eC.q[i])


def test_auto_reset_preserves_batch_shape():
    env = make_env(n=3, seed=2, episode_length_s=0.08)
    env.reset()
    for _ in range(10):
        obs, r, d, info = env.step(np.zeros((3, 12)))
        assert obs.shape == (3, OBS_DIM)
        assert r.shape == (3,)
        assert d.shape == (3,)


def test_no_history_in_observation_type():
    """The observation is assembled from the immediate state plus the command
    and previous action; there is no history buffer to consult."""
    env = make_env(dr=False)
    env.reset()
    attrs = set(vars(env))
    assert not any("history" in a or "stack" in a for a in attrs)
    # and the observation dimension has no room for one
    assert OBS_DIM == 3 + 3 + 3 + 3 + 12 + 12 + 12


def test_standing_under_latency():
    env = make_env(dr=False, latency_s=0.00125)
    env.reset()
    for _ in range(100):
        obs, r, d, info = env.step(np.zeros((1, 12)))
    assert not d[0]
    assert env.base_pos[0, 2] > 0.5


def test_estimator_fed_velocity_observation():
    """The ablation hook swaps the linear-velocity obs segment for the
    estimator output; with truth it reads the simulator state."""
    from stridesim.estimation import StateEstimator
    from stridesim.randomization import SEG_LINVEL

    env = make_env(dr=False, velocity_obs_source="estimator")
    env.reset()
    estimator = StateEstimator(env.model, contact_source="truth")
    estimator.attach(env)
    for _ in range(25):
        obs, *_ = env.step(np.zeros((1, 12)))
    expected = env._rotations()[0].T @ estimator.velocity
    np.testing.assert_allclose(obs[0, SEG_LINVEL] / 2.0, expected, atol=1e-12)
