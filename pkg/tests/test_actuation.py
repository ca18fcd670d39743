import copy

import numpy as np
import pytest

import stridesim as ss
from stridesim import actuation as act
from stridesim import dynamics as dyn
from stridesim.model import model_from_dict


def test_pd_torque_examples(model):
    gains = act.PDGains(np.full(12, 20.0), np.full(12, 0.5))
    q = np.zeros(12)
    tau = act.pd_torque(gains, np.full(12, 0.1), q, np.zeros(12))
    np.testing.assert_allclose(tau, 2.0)
    tau = act.pd_torque(gains, q, q, np.zeros(12))
    np.testing.assert_array_equal(tau, 0.0)
    tau = act.pd_torque(gains, q, q, np.full(12, 2.0))
    np.testing.assert_allclose(tau, -1.0)


def test_saturate_examples(model):
    assert act.saturate(model, "left_HFE", 100.0) == pytest.approx(62.6)
    assert act.saturate(model, "left_KFE", -200.0) == pytest.approx(-81.1)
    assert act.saturate(model, "right_HAA", 0.0) == 0.0


def test_saturate_speed_derating(model):
    spec = ss.actuator_for_joint(model, "left_KFE")
    half = 0.5 * spec.max_speed_48v
    derated = act.saturate(model, "left_KFE", 200.0, qd=half, speed_derating=True)
    assert derated == pytest.approx(0.5 * spec.peak_torque)
    # opposing motion keeps full braking torque
    assert act.saturate(model, "left_KFE", -200.0, qd=half, speed_derating=True) == pytest.approx(-81.1)


def test_friction_torque(model):
    j = model.joint("left_KFE")
    assert act.friction_torque(j, 0.0) == 0.0
    fake = ss.JointSpec("x", j.axis, j.origin, -1, 1, 10.0, 0.0, 0.2, 0.05, "8513")
    assert act.friction_torque(fake, 1.0) == pytest.approx(-0.25, abs=1e-9)
    for qd in (-3.0, -0.004, 0.02, 1.7):
        assert act.friction_torque(fake, -qd) == pytest.approx(-act.friction_torque(fake, qd))


def test_apply_identity_coupling_matches_uncoupled(model_dict):
    ident = copy.deepcopy(model_dict)
    ident["coupling"]["matrix"] = [[1.0, 0.0], [0.0, 1.0]]
    m = model_from_dict(ident)
    gains = act.default_gains(m)
    st = dyn.default_state(m)
    st.u[6:] = np.linspace(-1, 1, 12)
    cmd = m.nominal_pose + 0.2
    tau = act.apply(m, gains, cmd, st)
    # manual uncoupled pipeline: clip command, PD, clamp, friction
    a = m.arrays()
    q_d = np.clip(cmd, a.limit_lo, a.limit_hi)
    pd = gains.kp * (q_d - st.q) - gains.kd * st.u[6:]
    pd = np.clip(pd, -a.peak_torque, a.peak_torque)
    fric = -(a.coulomb * np.tanh(st.u[6:] / 0.01) + a.viscous * st.u[6:])
    np.testing.assert_allclose(tau, pd + fric, atol=1e-12)


def test_apply_zero_gains_gives_friction_only(model):
    gains = act.PDGains(np.zeros(12), np.zeros(12))
    st = dyn.default_state(model)
    st.u[6:] = np.linspace(-2, 2, 12)
    tau = act.apply(model, gains, model.nominal_pose, st)
    a = model.arrays()
    fric = -(a.coulomb * np.tanh(st.u[6:] / 0.01) + a.viscous * st.u[6:])
    np.testing.assert_allclose(tau, fric, atol=1e-12)


def test_apply_is_pure_without_latency(model):
    gains = act.default_gains(model)
    st = dyn.default_state(model)
    st.u[6:] = 0.3
    cmd = model.nominal_pose + 0.1
    t1 = act.apply(model, gains, cmd, st)
    t2 = act.apply(model, gains, cmd, st)
    np.testing.assert_array_equal(t1, t2)


def test_actuator_space_torques_respect_peaks(model, rng):
    gains = act.PDGains(np.full(12, 500.0), np.full(12, 5.0))  # absurdly stiff
    a = model.arrays()
    T = a.coupling_T
    for _ in range(100):
        st = dyn.default_state(model)
        st.q = rng.uniform(a.limit_lo, a.limit_hi)
        st.u[6:] = rng.uniform(-10, 10, 12)
        cmd = rng.uniform(a.limit_lo - 1, a.limit_hi + 1, 12)
        _total, tau_pd = act.apply(model, gains, cmd, st, return_pd=True)
        # reconstruct actuator torques for the coupled pairs: tau_act = T^T tau_joint
        for pair in a.coupling_pairs:
            tau_act = T.T @ tau_pd[pair]
            assert np.all(np.abs(tau_act) <= a.peak_torque[pair] + 1e-9)
        uncoupled = [j for j in range(12) if j not in set(a.coupling_pairs.ravel())]
        assert np.all(np.abs(tau_pd[uncoupled]) <= a.peak_torque[uncoupled] + 1e-9)


def test_joint_space_torque_bound_after_backmap(model, rng):
    """|tau_joint| on a coupled pair is bounded by sum_j |T^-T_ij| * peak_j."""
    gains = act.PDGains(np.full(12, 1e4), np.full(12, 0.0))
    a = model.arrays()
    TinvT = np.linalg.inv(a.coupling_T).T
    bound = np.abs(TinvT) @ a.peak_torque[a.coupling_pairs[0]]
    worst = np.zeros(2)
    for _ in range(200):
        st = dyn.default_state(model)
        st.q = rng.uniform(a.limit_lo, a.limit_hi)
        cmd = rng.uniform(a.limit_lo, a.limit_hi, 12)
        _total, tau_pd = act.apply(model, gains, cmd, st, return_pd=True)
        worst = np.maximum(worst, np.abs(tau_pd[a.coupling_pairs[0]]))
    assert np.all(worst <= bound + 1e-9)


def test_latency_queue_exact_delay(model):
    gains = act.default_gains(model)
    st = dyn.default_state(model)
    queue = act.LatencyQueue(2, model.nominal_pose)
    seen = []
    cmds = [model.nominal_pose + 0.01 * k for k in range(6)]
    for c in cmds:
        eff = queue.exchange(c.copy())
        seen.append(eff)
    np.testing.assert_array_equal(seen[0], model.nominal_pose)
    np.testing.assert_array_equal(seen[1], model.nominal_pose)
    for k in range(2, 6):
        np.testing.assert_array_equal(seen[k], cmds[k - 2])


def test_latency_model_bounds():
    with pytest.raises(ValueError):
        act.LatencyModel(0.0001)
    with pytest.raises(ValueError):
        act.LatencyModel(0.01)
    lm = act.LatencyModel(0.00125)
    assert lm.delay_steps(1.0 / 800.0) == 1


def test_command_must_be_finite(model):
    gains = act.default_gains(model)
    st = dyn.default_state(model)
    bad = model.nominal_pose.copy()
    bad[3] = np.nan
    with pytest.raises(ValueError):
        act.apply(model, gains, bad, st)
