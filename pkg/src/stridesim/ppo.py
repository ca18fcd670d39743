"""PPO with generalized advantage estimation over the vectorized environment.

The update is the clipped-surrogate objective with a value MSE term and an
entropy bonus, minibatched over several epochs, gradients clipped by global
norm and applied with Adam. Timeout terminations bootstrap the critic so the
20 s episode cap does not masquerade as failure.
"""

from __future__ import annotations

import csv
import time
from dataclasses import dataclass, field, asdict
from pathlib import Path

import numpy as np

from . import checkpoint as ckpt
from .env import LocomotionEnv
from .nets import ActorCritic, gaussian_logp, gaussian_logp_backward


@dataclass
class PPOConfig:
    clip_eps: float = 0.2
    gamma: float = 0.99
    lam: float = 0.95
    learning_rate: float = 1.0e-3
    epochs: int = 5
    minibatches: int = 4
    entropy_coef: float = 0.005
    value_coef: float = 1.0
    max_grad_norm: float = 1.0
    rollout_steps: int = 24
    init_std: float = 1.0
    kl_stop: float | None = 0.15  # abort remaining epochs on a blown update
    seed: int = 0

    def __post_init__(self):
        if not 0.0 < self.clip_eps < 1.0:
            raise ValueError("clip_eps must be in (0, 1)")
        if not 0.0 <= self.gamma <= 1.0 or not 0.0 <= self.lam <= 1.0:
            raise ValueError("gamma and lam must be in [0, 1]")


@dataclass
class RolloutBatch:
    """T x N trajectory slices plus the bootstrap value row."""

    observations: np.ndarray  # (T, N, obs)
    actions: np.ndarray       # (T, N, act)
    rewards: np.ndarray       # (T, N)
    dones: np.ndarray         # (T, N)
    values: np.ndarray        # (T+1, N) including the bootstrap
    log_probs: np.ndarray     # (T, N)

    def __post_init__(self):
        T, N = self.rewards.shape
        assert self.observations.shape[:2] == (T, N)
        assert self.actions.shape[:2] == (T, N)
        assert self.dones.shape == (T, N)
        assert self.values.shape == (T + 1, N)
        assert self.log_probs.shape == (T, N)


def gae(rewards, values, dones, gamma: float, lam: float):
    """Generalized advantage estimation.

    `values` carries T+1 rows (the last is the bootstrap value of the state
    after the final transition). Returns (advantages, returns), where
    returns = advantages + values[:-1].
    """
    rewards = np.asarray(rewards)
    values = np.asarray(values)
    dones = np.asarray(dones)
    T = rewards.shape[0]
    if values.shape[0] != T + 1:
        raise ValueError("values must have T+1 rows (bootstrap included)")
    adv = np.zeros_like(rewards, dtype=np.float64)
    carry = np.zeros(rewards.shape[1:], dtype=np.float64)
    for t in range(T - 1, -1, -1):
        nonterminal = 1.0 - dones[t]
        delta = rewards[t] + gamma * values[t + 1] * nonterminal - values[t]
        carry = delta + gamma * lam * nonterminal * carry
        adv[t] = carry
    return adv, adv + values[:-1]


class Adam:
    def __init__(self, params: list[np.ndarray], lr: float):
        self.params = params
        self.lr = lr
        self.m = [np.zeros_like(p) for p in params]
        self.v = [np.zeros_like(p) for p in params]
        self.t = 0
        self.beta1, self.beta2, self.eps = 0.9, 0.999, 1e-8

    def step(self, grads: list[np.ndarray]):
        self.t += 1
        b1c = 1.0 - self.beta1**self.t
        b2c = 1.0 - self.beta2**self.t
        for p, g, m, v in zip(self.params, grads, self.m, self.v):
            m += (1.0 - self.beta1) * (g - m)
            v += (1.0 - self.beta2) * (g * g - v)
            p -= (self.lr * (m / b1c) / (np.sqrt(v / b2c) + self.eps)).astype(p.dtype)


def clip_grad_norm(grads: list[np.ndarray], max_norm: float) -> float:
    total = np.sqrt(sum(float(np.sum(g.astype(np.float64) ** 2)) for g in grads))
    if total > max_norm and total > 0.0:
        scale = max_norm / total
        for g in grads:
            g *= scale
    return total


def ppo_loss_and_grads(ac: ActorCritic, obs, actions, old_logp, advantages, returns, cfg: PPOConfig):
    """Forward + reverse over the full PPO objective for one minibatch.

    Returns (grads aligned with ac.parameters(), stats dict).
    """
    dt = ac.dtype
    obs = np.asarray(obs, dtype=dt)
    actions = np.asarray(actions, dtype=dt)
    old_logp = np.asarray(old_logp, dtype=dt)
    advantages = np.asarray(advantages, dtype=dt)
    returns = np.asarray(returns, dtype=dt)
    B = obs.shape[0]

    actor_cache: list = []
    mean = ac.actor.forward(obs, actor_cache)
    logp = gaussian_logp(actions, mean, ac.log_std)
    ratio = np.exp(logp - old_logp)
    clipped = np.clip(ratio, 1.0 - cfg.clip_eps, 1.0 + cfg.clip_eps)
    surr1 = ratio * advantages
    surr2 = clipped * advantages
    policy_loss = -np.mean(np.minimum(surr1, surr2))
    # gradient flows wherever the unclipped branch is strictly smaller, and on
    # ties through the clip (identity inside the open band, flat outside): at
    # clip_eps = 0 the band is empty and the policy gradient vanishes
    in_band = (ratio > 1.0 - cfg.clip_eps) & (ratio < 1.0 + cfg.clip_eps)
    active = (surr1 < surr2) | in_band

    critic_cache: list = []
    v = ac.critic.forward(obs, critic_cache)[:, 0]
    v_err = v - returns
    value_loss = float(np.mean(v_err**2))

    entropy = ac.entropy()
    loss = float(policy_loss) + cfg.value_coef * value_loss - cfg.entropy_coef * entropy

    # reverse pass
    dlogp = np.where(active, -advantages * ratio / B, 0.0).astype(dt)
    dmean, dlog_std = gaussian_logp_backward(actions, mean, ac.log_std, dlogp)
    actor_grads, _ = ac.actor.backward(actor_cache, dmean)
    dlog_std = dlog_std - dt.type(cfg.entropy_coef)  # d(-c_e * entropy)/dlog_std = -c_e
    dv = (cfg.value_coef * 2.0 * v_err / B).astype(dt)
    critic_grads, _ = ac.critic.backward(critic_cache, dv[:, None])

    grads = []
    for dW, db in actor_grads:
        grads.extend([dW, db])
    for dW, db in critic_grads:
        grads.extend([dW, db])
    grads.append(dlog_std)

    stats = {
        "loss": loss,
        "policy_loss": float(policy_loss),
        "value_loss": value_loss,
        "entropy": entropy,
        "approx_kl": float(np.mean(old_logp - logp)),
        "clip_fraction": float(np.mean(np.abs(ratio - 1.0) > cfg.clip_eps)),
    }
    return grads, stats


def ppo_update(ac: ActorCritic, batch: RolloutBatch, cfg: PPOConfig,
               optimizer: Adam | None = None, rng: np.random.Generator | None = None):
    """Minibatched clipped-PPO update in place; returns averaged stats."""
    if optimizer is None:
        optimizer = Adam(ac.parameters(), cfg.learning_rate)
    if rng is None:
        rng = np.random.default_rng(cfg.seed)

    T, N = batch.rewards.shape
    adv, rets = gae(batch.rewards, batch.values, batch.dones, cfg.gamma, cfg.lam)
    obs = batch.observations.reshape(T * N, -1)
    actions = batch.actions.reshape(T * N, -1)
    old_logp = batch.log_probs.reshape(T * N)
    adv = adv.reshape(T * N)
    rets = rets.reshape(T * N)
    adv = (adv - adv.mean()) / (adv.std() + 1e-8)

    stats_acc: dict[str, float] = {}
    count = 0
    B = T * N
    mb = B // cfg.minibatches
    stop = False
    for _ in range(cfg.epochs):
        order = rng.permutation(B)
        for k in range(cfg.minibatches):
            idx = order[k * mb : (k + 1) * mb]
            grads, stats = ppo_loss_and_grads(
                ac, obs[idx], actions[idx], old_logp[idx], adv[idx], rets[idx], cfg
            )
            if not np.isfinite(stats["loss"]):
                raise FloatingPointError(f"non-finite PPO loss: {stats}")
            # a blown update would need many iterations to recover from; stop
            # this batch early rather than keep pushing the policy away
            if cfg.kl_stop is not None and stats["approx_kl"] > cfg.kl_stop and count > 0:
                stop = True
                break
            clip_grad_norm(grads, cfg.max_grad_norm)
            optimizer.step(grads)
            for name, val in stats.items():
                stats_acc[name] = stats_acc.get(name, 0.0) + val
            count += 1
        if stop:
            break
    return {k: v / count for k, v in stats_acc.items()}


LOG_FIELDS = [
    "iteration", "steps", "steps_per_s", "mean_reward", "mean_episode_length",
    "loss", "policy_loss", "value_loss", "entropy", "approx_kl", "clip_fraction", "action_std",
]


@dataclass
class TrainResult:
    checkpoint_path: Path
    log_path: Path
    iterations: int
    ac: ActorCritic


def train(
    env: LocomotionEnv,
    ppo_cfg: PPOConfig,
    iterations: int,
    out_dir,
    run_config: dict | None = None,
    checkpoint_every: int = 200,
    log_every: int = 1,
    quiet: bool = False,
    resume_from=None,
) -> TrainResult:
    """Rollout/update loop; persists checkpoints and a CSV training log.

    Fully seeded: the environment streams come from the env config seed, the
    action sampling and minibatch shuffling from the PPO seed. A non-finite
    loss aborts, keeping the last good checkpoint on disk.
    """
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    cfg_hash = ckpt.config_hash(run_config or {})
    ac = ActorCritic(seed=ppo_cfg.seed, init_std=ppo_cfg.init_std)
    if resume_from is not None:
        loaded, header = ckpt.load(resume_from)
        ckpt.verify_compatible(header)
        ac.set_parameters(loaded.parameters())
        if not quiet:
            print(f"resumed parameters from {resume_from} (iteration {header['meta'].get('iteration')})")
    optimizer = Adam(ac.parameters(), ppo_cfg.learning_rate)
    sample_rng = np.random.default_rng(np.random.SeedSequence([ppo_cfg.seed, 0x5A]))
    shuffle_rng = np.random.default_rng(np.random.SeedSequence([ppo_cfg.seed, 0x5B]))

    T, N = ppo_cfg.rollout_steps, env.num_envs
    obs_buf = np.zeros((T, N, ac.obs_dim), dtype=np.float32)
    act_buf = np.zeros((T, N, ac.act_dim), dtype=np.float32)
    rew_buf = np.zeros((T, N))
    done_buf = np.zeros((T, N))
    val_buf = np.zeros((T + 1, N))
    logp_buf = np.zeros((T, N))

    log_path = out_dir / "training_log.csv"
    log_f = open(log_path, "a", newline="")
    log: csv.DictWriter | None = None  # created on the first row (term names known then)

    ckpt_path = out_dir / "policy.ckpt"
    obs = env.reset()
    ep_lengths: list[int] = []
    total_steps = 0
    term_means: dict[str, float] = {}
    try:
        for it in range(1, iterations + 1):
            t0 = time.perf_counter()
            for t in range(T):
                action, logp, value, _ = ac.act(obs, sample_rng)
                next_obs, reward, done, info = env.step(action)
                # bootstrap truncated (timed-out) episodes with the critic
                if np.any(info["time_outs"]):
                    vf = ac.value(info["final_observation"])
                    reward = reward + ppo_cfg.gamma * vf * info["time_outs"]
                obs_buf[t] = obs
                act_buf[t] = action
                rew_buf[t] = reward
                done_buf[t] = done
                val_buf[t] = value
                logp_buf[t] = logp
                for i, res in info["episode_results"].items():
                    ep_lengths.append(res.length)
                for name, vals in info["reward_terms"].items():
                    term_means[name] = term_means.get(name, 0.0) + float(np.mean(vals))
                obs = next_obs
            val_buf[T] = ac.value(obs)
            batch = RolloutBatch(
                observations=obs_buf, actions=act_buf, rewards=rew_buf,
                dones=done_buf, values=val_buf, log_probs=logp_buf,
            )
            stats = ppo_update(ac, batch, ppo_cfg, optimizer, shuffle_rng)
            total_steps += T * N
            dt_iter = time.perf_counter() - t0

            if it % log_every == 0:
                row = {
                    "iteration": it,
                    "steps": total_steps,
                    "steps_per_s": round(T * N / dt_iter, 1),
                    "mean_reward": round(float(rew_buf.mean()), 5),
                    "mean_episode_length": round(float(np.mean(ep_lengths[-200:])) if ep_lengths else 0.0, 1),
                    "action_std": round(float(np.exp(ac.log_std).mean()), 4),
                    **{k: round(v, 6) for k, v in stats.items()},
                }
                for name in sorted(term_means):
                    row[f"term_{name}"] = round(term_means[name] / (T * log_every), 5)
                if log is None:
                    log = csv.DictWriter(log_f, fieldnames=list(row), extrasaction="ignore")
                    if log_f.tell() == 0:
                        log.writeheader()
                log.writerow(row)
                log_f.flush()
                term_means.clear()
                if not quiet:
                    print(
                        f"iter {it:5d} | steps/s {row['steps_per_s']:8.1f} | "
                        f"reward {row['mean_reward']:+.4f} | ep_len {row['mean_episode_length']:6.1f} | "
                        f"kl {stats['approx_kl']:+.5f} | std {row['action_std']:.3f}",
                        flush=True,
                    )
            if it % checkpoint_every == 0 or it == iterations:
                ckpt.save(ckpt_path, ac, cfg_hash, meta={"iteration": it, "steps": total_steps})
    except FloatingPointError as e:
        print(f"training aborted: {e}; last good checkpoint kept at {ckpt_path}")
        raise
    finally:
        log_f.close()
    return TrainResult(checkpoint_path=ckpt_path, log_path=log_path, iterations=iterations, ac=ac)
