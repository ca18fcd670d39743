import numpy as np
import pytest

from stridesim import checkpoint as ckpt
from stridesim.nets import ActorCritic, MLP, elu, gaussian_logp, gaussian_logp_backward


def fd_check(f, params, analytic_grads, eps=1e-5, tol=1e-4):
    """Central finite differences over every entry of every parameter."""
    worst = 0.0
    for p, g in zip(params, analytic_grads):
        it = np.nditer(p, flags=["multi_index"])
        for _ in it:
            idx = it.multi_index
            old = p[idx]
            p[idx] = old + eps
            up = f()
            p[idx] = old - eps
            dn = f()
            p[idx] = old
            num = (up - dn) / (2 * eps)
            scale = max(abs(num), abs(g[idx]), 1e-8)
            worst = max(worst, abs(num - g[idx]) / scale)
    assert worst < tol, f"finite-difference mismatch: {worst:.3e}"
    return worst


def test_elu_values():
    assert elu(np.array([-1.0]))[0] == pytest.approx(np.exp(-1.0) - 1.0, rel=1e-12)
    assert elu(np.array([0.5]))[0] == 0.5
    assert elu(np.array([0.0]))[0] == 0.0


def test_zero_params_zero_mean():
    ac = ActorCritic(seed=0)
    for p in ac.actor.parameters():
        p[...] = 0.0
    mean, log_std = ac.actor_forward(np.ones(48))
    np.testing.assert_array_equal(mean, 0.0)
    assert log_std.shape == (12,)


def test_forward_deterministic():
    ac = ActorCritic(seed=1)
    obs = np.random.default_rng(0).normal(size=(5, 48))
    m1, _ = ac.actor_forward(obs)
    m2, _ = ac.actor_forward(obs)
    np.testing.assert_array_equal(m1, m2)


def test_policy_input_is_exactly_48():
    ac = ActorCritic()
    with pytest.raises(ValueError):
        ac.actor_forward(np.zeros(47))
    with pytest.raises(ValueError):
        ac.actor_forward(np.zeros((3, 49)))
    # no recurrent state or frame stacking exists anywhere on the policy
    attrs = set(vars(ac))
    assert not any("hidden_state" in a or "history" in a or "stack" in a for a in attrs)


def test_mlp_gradients_finite_difference(rng):
    net = MLP([5, 8, 3], np.random.default_rng(3), out_gain=1.0, dtype=np.float64)
    x = rng.normal(size=(4, 5))
    c = rng.normal(size=(4, 3))  # loss = sum(c * y)

    def loss():
        return float(np.sum(c * net.forward(x)))

    cache = []
    net.forward(x, cache)
    grads, dx = net.backward(cache, c)
    flat = []
    for dW, db in grads:
        flat.extend([dW, db])
    fd_check(loss, net.parameters(), flat)

    # input gradient too
    worst = 0.0
    eps = 1e-6
    for i in range(4):
        for j in range(5):
            old = x[i, j]
            x[i, j] = old + eps
            up = loss()
            x[i, j] = old - eps
            dn = loss()
            x[i, j] = old
            num = (up - dn) / (2 * eps)
            worst = max(worst, abs(num - dx[i, j]) / max(abs(num), 1e-8))
    assert worst < 1e-4


def test_gaussian_logp_gradients(rng):
    mean = rng.normal(size=(6, 4))
    log_std = rng.normal(size=4) * 0.3
    action = rng.normal(size=(6, 4))
    w = rng.normal(size=6)

    def loss():
        return float(np.sum(w * gaussian_logp(action, mean, log_std)))

    dmean, dlog_std = gaussian_logp_backward(action, mean, log_std, w)
    worst = 0.0
    eps = 1e-6
    for arr, grad in ((mean, dmean), (log_std, dlog_std)):
        it = np.nditer(arr, flags=["multi_index"])
        for _ in it:
            idx = it.multi_index
            old = arr[idx]
            arr[idx] = old + eps
            up = loss()
            arr[idx] = old - eps
            dn = loss()
            arr[idx] = old
            num = (up - dn) / (2 * eps)
            worst = max(worst, abs(num - grad[idx]) / max(abs(num), abs(grad[idx]), 1e-8))
    assert worst < 1e-4


def test_gaussian_entropy_closed_form():
    ac = ActorCritic(seed=2, init_std=0.7)
    sigma = np.exp(ac.log_std)
    expected = np.sum(np.log(sigma) + 0.5 * np.log(2 * np.pi * np.e))
    assert ac.entropy() == pytest.approx(float(expected), rel=1e-6)


def test_logp_of_sampled_action_is_finite(rng):
    ac = ActorCritic(seed=3)
    obs = rng.normal(size=(16, 48))
    action, logp, value, mean = ac.act(obs, rng)
    assert np.all(np.isfinite(logp))
    assert np.all(np.isfinite(value))
    np.testing.assert_allclose(
        logp, gaussian_logp(action, mean, ac.log_std), rtol=1e-6
    )


def test_checkpoint_roundtrip_bit_exact(tmp_path):
    ac = ActorCritic(seed=7)
    path = tmp_path / "p.ckpt"
    ckpt.save(path, ac, cfg_hash="abc123", meta={"iteration": 5})
    loaded, header = ckpt.load(path)
    for a, b in zip(ac.parameters(), loaded.parameters()):
        np.testing.assert_array_equal(a, b)
    obs = np.random.default_rng(0).normal(size=(3, 48))
    np.testing.assert_array_equal(ac.actor_forward(obs)[0], loaded.actor_forward(obs)[0])
    np.testing.assert_array_equal(ac.value(obs), loaded.value(obs))
    assert header["config_hash"] == "abc123"
    assert header["meta"]["iteration"] == 5
    ckpt.verify_compatible(header)
    with pytest.raises(ValueError):
        ckpt.verify_compatible(header, cfg_hash="something-else")


def test_checkpoint_bad_magic(tmp_path):
    path = tmp_path / "junk.ckpt"
    path.write_bytes(b"NOPE" + b"\x00" * 64)
    with pytest.raises(ValueError):
        ckpt.load(path)
