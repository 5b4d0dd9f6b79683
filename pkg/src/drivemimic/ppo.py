"""PPO with a mixture-density policy: rollouts, GAE, the clipped surrogate
with value and entropy terms, minibatch epochs, and the dynamic batch-size
rule that grows the batch toward twice the longest episode seen so far.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from .nets import (
    Adam,
    MdnDistribution,
    PolicyNets,
    build_paper_networks,
    draw_entropy_noise,
    mdn_entropy_grads,
    mdn_log_prob,
    mdn_log_prob_grads,
    mdn_sample,
    save_checkpoint,
)
from .reward import ExpertProfile, RewardConfig, episode_reward_fn
from .sim import SimConfig, Simulator, TerminationKind
from .track import Track


@dataclass
class PpoConfig:
    gamma: float = 0.98
    lam: float = 0.95
    clip_eps: float = 0.2
    value_coef: float = 0.5        # MSE loss coefficient (c1 of the loss)
    entropy_coef: float = 0.005    # entropy bonus coefficient (c2 of the loss)
    epochs: int = 5
    actors: int = 1
    lr: float = 3e-4               # Adam stepsize (the reported 1e-1 diverges; see README)
    batch_init: int = 512
    minibatch: int = 256
    hidden: int = 600
    entropy_draws: int = 256
    adv_norm: bool = True
    reward_scale: float = 1.0      # scales rewards for GAE/critic targets only
    max_env_steps: int = 500_000
    max_updates: int = 1_000_000
    checkpoint_every: int = 0      # updates between checkpoints; 0 = final only

    def __post_init__(self):
        if not (0.0 < self.gamma <= 1.0 and 0.0 <= self.lam <= 1.0):
            raise ValueError("gamma in (0,1], lambda in [0,1]")
        if self.clip_eps <= 0:
            raise ValueError("clip epsilon must be positive")
        if self.batch_init % self.minibatch != 0:
            raise ValueError("initial batch size must be a multiple of the minibatch")


# -- dynamic batch scheduler ------------------------------------------------------


@dataclass
class BatchSchedulerState:
    batch_size: int = 512
    minibatch: int = 256
    max_length: int = 0

    def observe_episode_step(self, step: int) -> None:
        """Grow the batch toward twice the longest episode streak."""
        if step > self.max_length:
            self.max_length = step
            rem = (2 * self.max_length) % self.minibatch
            self.batch_size = max(self.batch_size, 2 * self.max_length - rem)

    def should_update(self, stored_steps: int, completed_rounds: bool) -> bool:
        return completed_rounds or (stored_steps > 0 and
                                    stored_steps % self.batch_size == 0)


def dynamic_batch_update(state: BatchSchedulerState, step: int,
                         completed_rounds: bool) -> tuple[BatchSchedulerState, bool]:
    """One scheduler transition for a step counter, per the published rule.

    The update trigger is evaluated before the batch grows, so an update uses
    the batch size in force when the step landed.
    """
    if step < 1:
        raise ValueError("step must be >= 1")
    fire = state.should_update(step, completed_rounds)
    out = replace(state)
    if not fire:
        out.observe_episode_step(step)
    return out, fire


# -- GAE ---------------------------------------------------------------------------


def compute_gae(rewards, values, bootstrap_value, dones, gamma, lam,
                normalize: bool = False):
    """Generalized advantage estimation over a (possibly multi-episode) buffer.

    `dones` marks true terminal steps (bootstrap 0 past them); the buffer tail
    bootstraps with `bootstrap_value` when it ends mid-episode.
    """
    rewards = np.asarray(rewards, dtype=float)
    values = np.asarray(values, dtype=float)
    dones = np.asarray(dones, dtype=bool)
    if not (len(rewards) == len(values) == len(dones)):
        raise ValueError("misaligned GAE inputs")
    n = len(rewards)
    adv = np.zeros(n)
    next_value = float(bootstrap_value)
    next_adv = 0.0
    for t in range(n - 1, -1, -1):
        cont = 0.0 if dones[t] else 1.0
        delta = rewards[t] + gamma * next_value * cont - values[t]
        next_adv = delta + gamma * lam * cont * next_adv
        adv[t] = next_adv
        next_value = values[t]
    returns = adv + values
    if normalize:
        adv = (adv - adv.mean()) / (adv.std() + 1e-8)
    return adv, returns


# -- loss -----------------------------------------------------------------------------


def _policy_forward(nets: PolicyNets, obs: np.ndarray):
    actor_out, actor_tape = nets.actor.forward(obs)
    mixing_out, mixing_tape = nets.mixing.forward(obs)
    dist = MdnDistribution.from_outputs(np.atleast_2d(actor_out),
                                        np.atleast_2d(mixing_out))
    return dist, actor_tape, mixing_tape


def policy_distribution(nets: PolicyNets, obs: np.ndarray) -> MdnDistribution:
    dist, _, _ = _policy_forward(nets, obs)
    return dist


def ppo_loss(batch: dict, nets: PolicyNets, config: PpoConfig,
             entropy_noise: tuple[np.ndarray, np.ndarray]):
    """Total PPO loss and its components (no gradients)."""
    total, components, _ = _loss_impl(batch, nets, config, entropy_noise,
                                      want_grads=False)
    return total, components


def ppo_loss_and_grads(batch: dict, nets: PolicyNets, config: PpoConfig,
                       entropy_noise: tuple[np.ndarray, np.ndarray]):
    return _loss_impl(batch, nets, config, entropy_noise, want_grads=True)


def _loss_impl(batch, nets, config, entropy_noise, want_grads):
    obs = np.atleast_2d(batch["obs"])
    actions = np.atleast_2d(batch["actions"])
    old_logp = np.asarray(batch["old_logp"], dtype=float)
    adv = np.asarray(batch["advantages"], dtype=float)
    returns = np.asarray(batch["returns"], dtype=float)
    b = obs.shape[0]
    if b == 0:
        raise ValueError("empty batch")

    dist, actor_tape, mixing_tape = _policy_forward(nets, obs)
    critic_out, critic_tape = nets.critic.forward(obs)
    values = np.atleast_2d(critic_out)[:, 0]

    logp, d_mean_lp, d_var_lp, d_alpha_lp = mdn_log_prob_grads(dist, actions)
    ratio = np.exp(logp - old_logp)
    if not np.all(np.isfinite(ratio)):
        raise FloatingPointError("non-finite probability ratio")
    clipped = np.clip(ratio, 1.0 - config.clip_eps, 1.0 + config.clip_eps)
    term_plain = ratio * adv
    term_clip = clipped * adv
    surrogate = np.minimum(term_plain, term_clip)
    policy_loss = -surrogate.mean()

    value_err = values - returns
    value_loss = float(np.mean(value_err**2))

    k_sel, eps = entropy_noise
    from .nets import mdn_entropy
    entropy = mdn_entropy(dist, k_sel, eps)
    entropy_mean = float(entropy.mean())

    total = float(policy_loss + config.value_coef * value_loss
                  - config.entropy_coef * entropy_mean)
    components = {
        "policy_loss": float(policy_loss),
        "value_loss": value_loss,
        "entropy": entropy_mean,
        "clip_fraction": float(np.mean(term_clip < term_plain)),
        "mean_ratio": float(ratio.mean()),
    }
    if not math.isfinite(total):
        raise FloatingPointError(f"non-finite loss: {components}")
    if not want_grads:
        return total, components, None

    # d total / d logp through the clipped surrogate
    active = term_plain <= term_clip
    g_logp = np.where(active, adv, 0.0) * ratio * (-1.0 / b)
    g_means = g_logp[:, None, None] * d_mean_lp
    g_vars = g_logp[:, None, None] * d_var_lp
    g_alphas = g_logp[:, None] * d_alpha_lp

    _, e_mean, e_var, e_alpha = mdn_entropy_grads(dist, k_sel, eps)
    ent_scale = -config.entropy_coef / b
    g_means += ent_scale * e_mean
    g_vars += ent_scale * e_var
    g_alphas += ent_scale * e_alpha

    g_actor = np.concatenate([g_means.reshape(b, 6), g_vars.reshape(b, 6)], axis=1)
    g_critic = (config.value_coef * 2.0 / b) * value_err[:, None]

    actor_grads, _ = nets.actor.backward(actor_tape, g_actor)
    critic_grads, _ = nets.critic.backward(critic_tape, g_critic)
    mixing_grads, _ = nets.mixing.backward(mixing_tape, g_alphas)
    flat = []
    for group in (actor_grads, critic_grads, mixing_grads):
        for dw, db in group:
            flat.append(dw)
            flat.append(db)
    return total, components, flat


# -- environment wrapper ------------------------------------------------------------


class DrivingEnv:
    """Simulator plus reward bookkeeping for one rollout worker."""

    def __init__(self, track: Track, profile: ExpertProfile,
                 reward_config: RewardConfig, rng: np.random.Generator,
                 sim_config: SimConfig | None = None):
        self.sim = Simulator(track, sim_config, rng)
        self.profile = profile
        self.reward_config = reward_config
        self.reward_fn = episode_reward_fn(profile, reward_config)
        self.rng = rng
        self._prev_cmd = np.zeros(2)
        self._lap_at_reset = 0

    @property
    def obs_dim(self) -> int:
        from .sim import OBS_DIM
        return OBS_DIM

    def reset(self) -> np.ndarray:
        if self.reward_config.mode == "stochastic":
            self.profile.draw_sample_index(self.rng)
        state = self.sim.reset(self.rng)
        self._prev_cmd = np.zeros(2)
        self._lap_at_reset = state.lap_count
        return self.sim.observe()

    def step(self, action) -> tuple[np.ndarray, float, bool, bool, dict]:
        cmd = np.clip(np.asarray(action, dtype=float), -1.0, 1.0)
        state, term = self.sim.step(cmd)
        terminated = term is not TerminationKind.NONE
        reward = self.reward_fn(state.arc_length, state.speed * 3.6, state.lateral,
                                (cmd[0], cmd[1]), tuple(self._prev_cmd),
                                terminated, self.profile, self.reward_config)
        self._prev_cmd = cmd
        laps = state.lap_count - self._lap_at_reset
        info = {"sigma": state.arc_length, "d": state.lateral,
                "v_kmh": state.speed * 3.6, "laps": laps,
                "termination": term.value}
        return self.sim.observe(), reward, terminated, laps >= 2, info


# -- training loop ---------------------------------------------------------------------


@dataclass
class TrainResult:
    nets: PolicyNets
    metrics: list[dict] = field(default_factory=list)
    env_steps: int = 0
    updates: int = 0
    diverged: bool = False
    stopped_early: bool = False


METRIC_COLUMNS = ("update", "steps", "B", "mean_return", "mean_ep_len",
                  "policy_loss", "value_loss", "entropy")


def write_metrics(metrics: list[dict], path) -> None:
    lines = [",".join(METRIC_COLUMNS)]
    for row in metrics:
        lines.append(",".join(
            str(row[c]) if isinstance(row[c], int) else f"{float(row[c])!r}"
            for c in METRIC_COLUMNS))
    tmp = Path(str(path) + ".tmp")
    tmp.write_text("\n".join(lines) + "\n")
    tmp.replace(path)


def train(env: DrivingEnv | object, config: PpoConfig, seed: int,
          out_dir=None, stop_fn=None, nets: PolicyNets | None = None) -> TrainResult:
    """Run PPO until the step/update budget, divergence, or stop_fn fires.

    `env` needs reset() -> obs and step(a) -> (obs, r, terminated, two_rounds,
    info).  stop_fn(nets, update_index, env_steps) -> bool is polled after
    every update.  All randomness derives from `seed`.
    """
    try:
        from threadpoolctl import threadpool_limits
    except ImportError:  # pragma: no cover
        from contextlib import nullcontext as threadpool_limits
    with threadpool_limits(limits=1):
        return _train_impl(env, config, seed, out_dir, stop_fn, nets)


def _train_impl(env, config, seed, out_dir, stop_fn, nets):
    ss = np.random.SeedSequence(seed)
    rng_net, rng_act, rng_shuffle, rng_entropy = [
        np.random.default_rng(s) for s in ss.spawn(4)]
    obs_dim = env.obs_dim
    if nets is None:
        nets = build_paper_networks(obs_dim, hidden=config.hidden, rng=rng_net)
    adam = Adam(nets.parameters(), lr=config.lr)
    sched = BatchSchedulerState(config.batch_init, config.minibatch)

    mem_obs: list[np.ndarray] = []
    mem_act: list[np.ndarray] = []
    mem_logp: list[float] = []
    mem_rew: list[float] = []
    mem_val: list[float] = []
    mem_done: list[bool] = []

    result = TrainResult(nets=nets)
    metrics = result.metrics
    obs = env.reset()
    ep_step = 0
    ep_return = 0.0
    ep_returns: list[float] = []
    ep_lengths: list[int] = []
    snapshot = [p.copy() for p in nets.parameters()]

    if out_dir is not None:
        out_dir = Path(out_dir)
        out_dir.mkdir(parents=True, exist_ok=True)

    while result.env_steps < config.max_env_steps and result.updates < config.max_updates:
        dist = policy_distribution(nets, obs[None, :])
        if not _dist_ok(dist):
            for p, saved in zip(nets.parameters(), snapshot):
                p[:] = saved
            result.diverged = True
            break
        action, raw = mdn_sample(dist, rng_act)
        logp = float(mdn_log_prob(dist, raw[None, :])[0])
        value = float(nets.critic(obs[None, :])[0, 0])
        next_obs, reward, terminated, two_rounds, info = env.step(action)
        mem_obs.append(obs)
        mem_act.append(raw)
        mem_logp.append(logp)
        mem_rew.append(reward * config.reward_scale)
        mem_val.append(value)
        mem_done.append(terminated)
        result.env_steps += 1
        ep_step += 1
        ep_return += reward

        fire = sched.should_update(len(mem_obs), two_rounds)
        if not fire:
            sched.observe_episode_step(ep_step)

        if fire:
            if terminated:
                bootstrap = 0.0
                ep_returns.append(ep_return)
                ep_lengths.append(ep_step)
            else:
                bootstrap = float(nets.critic(next_obs[None, :])[0, 0])
            batch_size_used = sched.batch_size
            try:
                comps = _run_update(nets, adam, config, mem_obs, mem_act, mem_logp,
                                    mem_rew, mem_val, mem_done, bootstrap,
                                    rng_shuffle, rng_entropy)
            except FloatingPointError:
                for p, saved in zip(nets.parameters(), snapshot):
                    p[:] = saved
                result.diverged = True
                break
            snapshot = [p.copy() for p in nets.parameters()]
            result.updates += 1
            if not ep_returns:
                ep_returns.append(ep_return)
                ep_lengths.append(ep_step)
            metrics.append({
                "update": result.updates,
                "steps": result.env_steps,
                "B": batch_size_used,
                "mean_return": float(np.mean(ep_returns)),
                "mean_ep_len": float(np.mean(ep_lengths)),
                "policy_loss": comps["policy_loss"],
                "value_loss": comps["value_loss"],
                "entropy": comps["entropy"],
            })
            ep_returns, ep_lengths = [], []
            mem_obs.clear(); mem_act.clear(); mem_logp.clear()
            mem_rew.clear(); mem_val.clear(); mem_done.clear()
            obs = env.reset()
            ep_step = 0
            ep_return = 0.0
            if out_dir is not None and config.checkpoint_every and \
               result.updates % config.checkpoint_every == 0:
                save_checkpoint(nets, out_dir / f"checkpoint_{result.updates:06d}.bin")
            if stop_fn is not None and stop_fn(nets, result.updates, result.env_steps):
                result.stopped_early = True
                break
        elif terminated:
            ep_returns.append(ep_return)
            ep_lengths.append(ep_step)
            obs = env.reset()
            ep_step = 0
            ep_return = 0.0
        else:
            obs = next_obs

    if out_dir is not None:
        save_checkpoint(nets, out_dir / "checkpoint.bin")
        write_metrics(metrics, out_dir / "metrics.csv")
    return result


def _dist_ok(dist: MdnDistribution) -> bool:
    return (np.all(np.isfinite(dist.alphas)) and np.all(np.isfinite(dist.means))
            and np.all(np.isfinite(dist.variances)) and np.all(dist.variances > 0.0))


def _run_update(nets, adam, config, mem_obs, mem_act, mem_logp, mem_rew,
                mem_val, mem_done, bootstrap, rng_shuffle, rng_entropy):
    for p in nets.parameters():
        if not np.all(np.isfinite(p)):
            raise FloatingPointError("non-finite network parameters")
    obs = np.stack(mem_obs)
    actions = np.stack(mem_act)
    old_logp = np.array(mem_logp)
    adv, returns = compute_gae(mem_rew, mem_val, bootstrap, mem_done,
                               config.gamma, config.lam)
    if config.adv_norm:
        adv = (adv - adv.mean()) / (adv.std() + 1e-8)
    n = len(obs)
    comps_last = None
    for _ in range(config.epochs):
        perm = rng_shuffle.permutation(n)
        for lo in range(0, n, config.minibatch):
            sel = perm[lo:lo + config.minibatch]
            batch = {"obs": obs[sel], "actions": actions[sel],
                     "old_logp": old_logp[sel], "advantages": adv[sel],
                     "returns": returns[sel]}
            dist = policy_distribution(nets, obs[sel])
            noise = draw_entropy_noise(dist, config.entropy_draws, rng_entropy)
            total, comps, grads = ppo_loss_and_grads(batch, nets, config, noise)
            adam.step(grads)
            comps_last = comps
    return comps_last
