"""Minimal MLP actor-critic with hand-written reverse-mode gradients.

float32 throughout, ELU hidden activations, a linear output head, and a
state-independent learnable log-std for the diagonal Gaussian policy. The
backward passes are exact for the fixed graph; finite-difference tests keep
them honest.
"""

from __future__ import annotations

import numpy as np

LOG2PI = float(np.log(2.0 * np.pi))


def orthogonal(rng: np.random.Generator, shape, gain: float = 1.0, dtype=np.float32) -> np.ndarray:
    a = rng.normal(size=shape)
    q, r = np.linalg.qr(a if shape[0] >= shape[1] else a.T)
    q = q * np.sign(np.diag(r))
    if shape[0] < shape[1]:
        q = q.T
    return (gain * q[: shape[0], : shape[1]]).astype(dtype)


def elu(x: np.ndarray) -> np.ndarray:
    return np.where(x > 0.0, x, np.expm1(x))


class MLP:
    """Fully connected layers with ELU between them; linear output."""

    def __init__(self, sizes: list[int], rng: np.random.Generator, out_gain: float = 0.01, dtype=np.float32):
        self.sizes = list(sizes)
        self.dtype = np.dtype(dtype)
        self.W = []
        self.b = []
        for k, (din, dout) in enumerate(zip(sizes[:-1], sizes[1:])):
            gain = out_gain if k == len(sizes) - 2 else np.sqrt(2.0)
            self.W.append(orthogonal(rng, (din, dout), gain, self.dtype))
            self.b.append(np.zeros(dout, dtype=self.dtype))

    @property
    def num_layers(self) -> int:
        return len(self.W)

    def forward(self, x: np.ndarray, cache: list | None = None) -> np.ndarray:
        h = np.asarray(x, dtype=self.dtype)
        if cache is not None:
            cache.append(h)
        for k in range(self.num_layers):
            z = h @ self.W[k] + self.b[k]
            h = elu(z) if k < self.num_layers - 1 else z
            if cache is not None:
                cache.append(h)
        return h

    def backward(self, cache: list, dout: np.ndarray):
        """Gradients for a cached forward pass.

        Returns ([(dW, db), ...] aligned with layers, dx).
        """
        grads = [None] * self.num_layers
        dh = np.asarray(dout, dtype=self.dtype)
        for k in reversed(range(self.num_layers)):
            h_in = cache[k]
            h_out = cache[k + 1]
            if k < self.num_layers - 1:
                # d elu(z) = 1 for z > 0 else exp(z) = elu(z) + 1
                dz = dh * np.where(h_out > 0.0, 1.0, h_out + 1.0).astype(self.dtype)
            else:
                dz = dh
            grads[k] = (h_in.T @ dz, dz.sum(axis=0))
            if k > 0:
                dh = dz @ self.W[k].T
        dx = dz @ self.W[0].T
        return grads, dx

    def parameters(self) -> list[np.ndarray]:
        out = []
        for W, b in zip(self.W, self.b):
            out.extend([W, b])
        return out


class ActorCritic:
    """Gaussian policy (mean from the actor MLP, learnable log-std) + critic."""

    def __init__(self, obs_dim: int = 48, act_dim: int = 12,
                 hidden=(512, 256, 128), seed: int = 0, init_std: float = 1.0,
                 dtype=np.float32):
        rng = np.random.default_rng(np.random.SeedSequence([seed, 0xAC]))
        self.obs_dim = obs_dim
        self.act_dim = act_dim
        self.hidden = tuple(hidden)
        self.dtype = np.dtype(dtype)
        self.actor = MLP([obs_dim, *hidden, act_dim], rng, out_gain=0.01, dtype=dtype)
        self.critic = MLP([obs_dim, *hidden, 1], rng, out_gain=1.0, dtype=dtype)
        self.log_std = np.full(act_dim, np.log(init_std), dtype=dtype)

    # -- inference -------------------------------------------------------------

    def _check(self, obs: np.ndarray) -> np.ndarray:
        obs = np.asarray(obs, dtype=self.dtype)
        if obs.ndim == 1:
            obs = obs[None, :]
        if obs.shape[-1] != self.obs_dim:
            raise ValueError(f"expected observations of width {self.obs_dim}, got {obs.shape}")
        return obs

    def actor_forward(self, obs: np.ndarray):
        """Deterministic policy forward: (mean actions, log-std)."""
        return self.actor.forward(self._check(obs)), self.log_std

    def value(self, obs: np.ndarray) -> np.ndarray:
        return self.critic.forward(self._check(obs))[:, 0]

    def act(self, obs: np.ndarray, rng: np.random.Generator):
        """Sample actions; returns (action, logp, value, mean)."""
        obs = self._check(obs)
        mean = self.actor.forward(obs)
        std = np.exp(self.log_std)
        noise = rng.standard_normal(mean.shape, dtype=np.float64).astype(self.dtype)
        action = mean + std * noise
        logp = gaussian_logp(action, mean, self.log_std)
        value = self.critic.forward(obs)[:, 0]
        return action, logp, value, mean

    def entropy(self) -> float:
        return float(np.sum(self.log_std + 0.5 * (LOG2PI + 1.0)))

    # -- parameter plumbing ------------------------------------------------------

    def parameters(self) -> list[np.ndarray]:
        return self.actor.parameters() + self.critic.parameters() + [self.log_std]

    def set_parameters(self, arrays: list[np.ndarray]):
        mine = self.parameters()
        if len(arrays) != len(mine):
            raise ValueError("parameter count mismatch")
        for dst, src in zip(mine, arrays):
            if dst.shape != src.shape:
                raise ValueError(f"shape mismatch {dst.shape} vs {src.shape}")
            dst[...] = src

    def copy(self) -> "ActorCritic":
        clone = ActorCritic(self.obs_dim, self.act_dim, self.hidden, seed=0, dtype=self.dtype)
        clone.set_parameters([p.copy() for p in self.parameters()])
        return clone


def gaussian_logp(action, mean, log_std) -> np.ndarray:
    log_std = np.asarray(log_std)
    std2 = np.exp(2.0 * log_std)
    d = np.asarray(action) - np.asarray(mean)
    return -0.5 * np.sum(d * d / std2, axis=-1) - np.sum(log_std) - 0.5 * LOG2PI * d.shape[-1]


def gaussian_logp_backward(action, mean, log_std, dlogp):
    """Gradients of sum(dlogp * logp) wrt (mean, log_std)."""
    log_std = np.asarray(log_std)
    std2 = np.exp(2.0 * log_std)
    d = np.asarray(action) - np.asarray(mean)
    dl = np.asarray(dlogp)[:, None]
    dmean = (dl * d / std2).astype(log_std.dtype)
    dlog_std = np.sum(dl * (d * d / std2 - 1.0), axis=0).astype(log_std.dtype)
    return dmean, dlog_std
