"""Training/evaluation orchestration: the shared collection loop, greedy
evaluation, stratified bootstrap confidence intervals, return normalization,
and incremental CSV emission.
"""

from __future__ import annotations

import math
import os
import time
from dataclasses import dataclass, field

import numpy as np

from . import __version__
from .agents import ActorCritic, PPOLearner, QLearner, RolloutBatch, a2c_update, ppo_update
from .config import ExperimentConfig
from .decoupled import DecoupledLearner
from .envs import VecEnv, make_env, solve_optimal_return
from .intrinsic import RunningNormalizer, combine, make_intrinsic
from .nn import ConfigError, sample_categorical_rows


@dataclass
class EvalRecord:
    episode: int
    returns: np.ndarray
    train_ret_mean: float
    intrinsic_mean: float
    is_weight_mean: float
    kl_mean: float
    wall_s: float

    @property
    def ret_mean(self):
        return float(np.mean(self.returns))

    @property
    def ret_std(self):
        return float(np.std(self.returns))


@dataclass
class RunLog:
    config_text: str
    seed: int
    task: str
    variant: str
    optimal_return: float
    records: list = field(default_factory=list)
    is_clamp_events: int = 0
    completed_episodes: int = 0


def _env_factory(cfg: ExperimentConfig):
    env_cfg = cfg.env
    return lambda: make_env(env_cfg.name, size=env_cfg.size, n_left=env_cfg.n_l,
                            n_right=env_cfg.n_r, env_seed=env_cfg.env_seed)


class BaselineTrainer:
    """Single learner trained directly on the combined reward signal."""

    def __init__(self, learner, *, gamma, lam, n_steps, reward_normalizer,
                 act_rng, update_rng):
        self.learner = learner
        self.gamma = gamma
        self.lam = lam
        self.rollout_steps = n_steps
        self.reward_normalizer = reward_normalizer
        self.act_rng = act_rng
        self.update_rng = update_rng
        self.is_q = isinstance(learner, QLearner)
        self._diag_sums = {}
        self._diag_counts = {}
        self.clamp_counter = [0]

    def act(self, obs_rows):
        if self.is_q:
            actions = np.argmax(self.learner.q_values(obs_rows), axis=1)
            return actions, np.ones(len(actions))
        probs = self.learner.action_probs(obs_rows)
        return sample_categorical_rows(probs, self.act_rng)

    def eval_action(self, obs):
        return self.learner.greedy(obs)

    def _tally(self, diag):
        for key, value in diag.items():
            self._diag_sums[key] = self._diag_sums.get(key, 0.0) + value
            self._diag_counts[key] = self._diag_counts.get(key, 0) + 1

    def pop_diagnostics(self):
        out = {k: self._diag_sums[k] / self._diag_counts[k] for k in self._diag_sums}
        out["is_clamped"] = self.clamp_counter[0]
        self._diag_sums, self._diag_counts = {}, {}
        return out

    def observe_block(self, block: RolloutBatch, rewards_int):
        r_train = combine(block.rewards_ext, rewards_int, self.lam)
        if self.reward_normalizer is not None:
            self.reward_normalizer.update(r_train.reshape(-1))
            r_train = self.reward_normalizer.normalize_reward(r_train)
        block.rewards = r_train
        if self.is_q:
            flat = block.flat
            S, A = flat(block.obs), flat(block.actions)
            R, S2 = flat(block.rewards), flat(block.next_obs)
            D, P = flat(block.dones), flat(block.behavior_probs)
            for i in range(len(A)):
                self.learner.buffer.push(S[i], A[i], R[i], S2[i], D[i], P[i])
            diag = self.learner.update(self.gamma, self.update_rng)
            if diag is not None:
                self._tally(diag)
        elif isinstance(self.learner, PPOLearner):
            self._tally(ppo_update(self.learner, block, self.gamma, self.update_rng))
        else:
            self._tally(a2c_update(self.learner, block, self.gamma))


def build_trainer(cfg: ExperimentConfig, obs_dim, n_actions, seed):
    """All learners, rng streams, and the trainer wrapper for one run."""
    root = np.random.SeedSequence([int(seed), 0xD1CE])
    net_seq, act_seq, update_seq, intrinsic_seq = root.spawn(4)
    net_rng = np.random.default_rng(net_seq)
    act_rng = np.random.default_rng(act_seq)
    update_rng = np.random.default_rng(update_seq)
    intrinsic_rng = np.random.default_rng(intrinsic_seq)
    reward_normalizer = RunningNormalizer() if cfg.normalize_rewards else None
    a = cfg.algo
    ac_kwargs = dict(learning_rate=a.learning_rate, entropy_coef=a.entropy_coef,
                     value_coef=a.value_coef, max_grad_norm=a.max_grad_norm,
                     adam_eps=a.adam_eps, activation=a.activation)
    if not cfg.is_decoupled():
        if a.name == "a2c":
            learner = ActorCritic(obs_dim, n_actions, rng=net_rng, **ac_kwargs)
        elif a.name == "ppo":
            learner = PPOLearner(obs_dim, n_actions, rng=net_rng, clip_ratio=a.clip_ratio,
                                 epochs=a.epochs, minibatches=a.minibatches,
                                 clip_value_loss=a.clip_value_loss, **ac_kwargs)
        elif a.name == "dqn":
            learner = QLearner(obs_dim, n_actions, rng=net_rng, learning_rate=a.learning_rate,
                               tau=a.tau, batch_size=a.batch_size, max_grad_norm=a.max_grad_norm,
                               adam_eps=a.adam_eps, activation=a.activation,
                               buffer_capacity=a.buffer_capacity)
        else:
            raise ConfigError(f"unknown algo {a.name!r}")
        trainer = BaselineTrainer(learner, gamma=cfg.gamma, lam=cfg.intrinsic.lam,
                                  n_steps=a.n_steps, reward_normalizer=reward_normalizer,
                                  act_rng=act_rng, update_rng=update_rng)
    else:
        e = cfg.explore
        explore = ActorCritic(obs_dim, n_actions, rng=net_rng,
                              learning_rate=e.learning_rate, entropy_coef=e.entropy_coef,
                              value_coef=e.value_coef, max_grad_norm=e.max_grad_norm,
                              adam_eps=e.adam_eps, activation=e.activation)
        if a.name == "dea2c":
            exploit = ActorCritic(obs_dim, n_actions, rng=net_rng, **ac_kwargs)
        elif a.name == "deppo":
            exploit = PPOLearner(obs_dim, n_actions, rng=net_rng, clip_ratio=a.clip_ratio,
                                 epochs=a.epochs, minibatches=a.minibatches,
                                 clip_value_loss=a.clip_value_loss, **ac_kwargs)
        elif a.name == "dedqn":
            exploit = QLearner(obs_dim, n_actions, rng=net_rng, learning_rate=a.learning_rate,
                               tau=a.tau, batch_size=a.batch_size, max_grad_norm=a.max_grad_norm,
                               adam_eps=a.adam_eps, activation=a.activation,
                               buffer_capacity=a.buffer_capacity)
        else:
            raise ConfigError(f"unknown algo {a.name!r}")
        trainer = DecoupledLearner(
            explore, exploit, gamma=cfg.gamma, lam=cfg.intrinsic.lam,
            t_dec=cfg.decoupled.t_dec, exploit_n_steps=a.n_steps,
            explore_n_steps=e.n_steps, alpha_beta=cfg.decoupled.alpha_beta,
            alpha_e=cfg.decoupled.alpha_e, retrace=cfg.decoupled.retrace,
            pure_intrinsic=cfg.decoupled.pure_intrinsic,
            reward_normalizer=reward_normalizer, act_rng=act_rng, update_rng=update_rng,
        )
    intr = cfg.intrinsic
    driver = make_intrinsic(intr.name, obs_dim, n_actions, cfg.schedule.num_envs,
                            intrinsic_rng, increment=intr.count_increment,
                            intrinsic_lr=intr.intrinsic_lr, forward_coef=intr.forward_coef,
                            inverse_coef=intr.inverse_coef, hash_k=intr.hash_k)
    return trainer, driver


def evaluate_greedy(action_fn, env_factory, episodes, run_seed, eval_index,
                    obs_transform=None):
    """Undiscounted extrinsic returns of the greedy policy over fresh episodes.

    Each episode gets its own environment seeded from (run seed, eval index,
    episode index); the call performs no learning and mutates nothing.
    """
    returns = np.empty(episodes)
    for ep in range(episodes):
        env = env_factory()
        seq = np.random.SeedSequence([int(run_seed), int(eval_index), ep])
        obs = env.reset(seed=int(seq.generate_state(1)[0]))
        rewards, done = [], False
        while not done:
            x = obs if obs_transform is None else obs_transform(obs)
            obs, reward, done = env.step(action_fn(x))
            rewards.append(reward)
        returns[ep] = math.fsum(rewards)  # correctly-rounded episode return
    return returns


def stratified_bootstrap_ci(per_seed_values, resamples=5000, level=0.95, seed=0):
    """Bootstrap CI of the grand mean, resampling within each seed stratum."""
    if not per_seed_values or any(len(v) == 0 for v in per_seed_values):
        raise ValueError("stratified_bootstrap_ci needs >= 1 value per seed")
    if not 0.0 < level < 1.0:
        raise ValueError(f"level must lie in (0, 1), got {level}")
    rng = np.random.default_rng(seed)
    acc = np.zeros(resamples)
    for values in per_seed_values:
        values = np.asarray(values, dtype=np.float64)
        idx = rng.integers(0, len(values), size=(resamples, len(values)))
        acc += values[idx].mean(axis=1)
    means = acc / len(per_seed_values)
    alpha = (1.0 - level) / 2.0
    return float(np.quantile(means, alpha)), float(np.quantile(means, 1.0 - alpha))


def normalize_returns(per_task_values: dict):
    """Min-max rescale each task's per-algorithm values into [0, 1].

    Degenerate tasks (all values equal) map to 0.5 and are returned in the
    flagged list.
    """
    normalized, flagged = {}, []
    for task, cells in per_task_values.items():
        values = np.array(list(cells.values()), dtype=np.float64)
        lo, hi = values.min(), values.max()
        if hi - lo == 0.0:
            normalized[task] = {algo: 0.5 for algo in cells}
            flagged.append(task)
        else:
            normalized[task] = {algo: (v - lo) / (hi - lo) for algo, v in cells.items()}
    return normalized, flagged


def cross_task_means(normalized: dict):
    """Average each algorithm's normalized score over the tasks it appears in."""
    sums, counts = {}, {}
    for cells in normalized.values():
        for algo, value in cells.items():
            sums[algo] = sums.get(algo, 0.0) + value
            counts[algo] = counts.get(algo, 0) + 1
    return {algo: sums[algo] / counts[algo] for algo in sums}


def csv_header(eval_episodes):
    cols = ["episode", "ret_mean", "ret_std"]
    cols += [f"ret_e{i + 1}" for i in range(eval_episodes)]
    cols += ["train_ret_mean", "intrinsic_mean", "is_weight_mean", "kl_mean", "wall_s"]
    return ",".join(cols)


def record_to_row(rec: EvalRecord):
    cells = [str(rec.episode), repr(rec.ret_mean), repr(rec.ret_std)]
    cells += [repr(float(r)) for r in rec.returns]
    cells += [repr(rec.train_ret_mean), repr(rec.intrinsic_mean),
              repr(rec.is_weight_mean), repr(rec.kl_mean), repr(rec.wall_s)]
    return ",".join(cells)


def snapshot_text(cfg: ExperimentConfig, seed, optimal_return):
    head = [
        f"# seed = {seed}",
        f"# version = {__version__}",
        f"# task = {cfg.task_id()}",
        f"# variant = {cfg.variant_id()}",
        f"# optimal_return = {optimal_return!r}",
    ]
    return "\n".join(head) + "\n" + cfg.to_text()


def run_experiment(cfg: ExperimentConfig, seed, outdir=None, clock=None) -> RunLog:
    """One fully deterministic training run; evaluations land on every
    eval_every episode boundary (episode counted on any lane's termination)
    plus an initial one before training. Writes run.csv/config.snapshot
    incrementally when outdir is given, flushing whatever exists on abort.
    """
    clock = clock or time.perf_counter
    started = clock()
    factory = _env_factory(cfg)
    probe = factory()
    obs_dim, n_actions = probe.obs_dim, probe.n_actions
    optimal = solve_optimal_return(cfg.env.name, size=cfg.env.size,
                                   n_left=cfg.env.n_l, n_right=cfg.env.n_r)
    trainer, driver = build_trainer(cfg, obs_dim, n_actions, seed)
    venv = VecEnv([factory() for _ in range(cfg.schedule.num_envs)])
    k_lanes = venv.num_envs
    obs_normalizer = RunningNormalizer(obs_dim) if cfg.normalize_obs else None

    log = RunLog(config_text=cfg.to_text(), seed=seed, task=cfg.task_id(),
                 variant=cfg.variant_id(), optimal_return=optimal)
    writer = None
    if outdir is not None:
        run_dir = os.path.join(outdir, cfg.task_id(), cfg.variant_id(), str(seed))
        os.makedirs(run_dir, exist_ok=True)
        with open(os.path.join(run_dir, "config.snapshot"), "w") as fh:
            fh.write(snapshot_text(cfg, seed, optimal))
        writer = open(os.path.join(run_dir, "run.csv"), "w")
        writer.write(csv_header(cfg.schedule.eval_episodes) + "\n")

    def normalize(rows):
        return rows if obs_normalizer is None else obs_normalizer.normalize_obs(rows)

    def eval_policy(obs):
        return trainer.eval_action(normalize(obs))

    window_train_returns = []
    window_intrinsic = []

    def emit(eval_boundary, eval_index):
        returns = evaluate_greedy(eval_policy, factory, cfg.schedule.eval_episodes,
                                  seed, eval_index)
        diag = trainer.pop_diagnostics()
        rec = EvalRecord(
            episode=eval_boundary,
            returns=returns,
            train_ret_mean=float(np.mean(window_train_returns)) if window_train_returns else float("nan"),
            intrinsic_mean=float(np.mean(window_intrinsic)) if window_intrinsic else float("nan"),
            is_weight_mean=diag.get("is_mean", float("nan")),
            kl_mean=diag.get("kl", float("nan")),
            wall_s=clock() - started,
        )
        log.records.append(rec)
        log.is_clamp_events = diag.get("is_clamped", log.is_clamp_events)
        window_train_returns.clear()
        window_intrinsic.clear()
        if writer is not None:
            writer.write(record_to_row(rec) + "\n")
            writer.flush()

    n_steps = trainer.rollout_steps
    episodes_done = 0
    next_eval = 0
    eval_index = 0
    lane_returns = np.zeros(k_lanes)
    try:
        obs_raw = venv.reset()
        if obs_normalizer is not None:
            obs_normalizer.update(obs_raw)
        emit(0, eval_index)
        next_eval = cfg.schedule.eval_every
        eval_index += 1
        total = cfg.schedule.episodes
        block_obs = np.empty((n_steps, k_lanes, obs_dim))
        block_next = np.empty((n_steps, k_lanes, obs_dim))
        block_actions = np.empty((n_steps, k_lanes), dtype=np.int64)
        block_rewards_ext = np.empty((n_steps, k_lanes))
        block_dones = np.empty((n_steps, k_lanes), dtype=bool)
        block_probs = np.empty((n_steps, k_lanes))
        block_rint = np.empty((n_steps, k_lanes))
        while episodes_done < total:
            for t in range(n_steps):
                obs_norm = normalize(obs_raw)
                actions, probs = trainer.act(obs_norm)
                next_raw, rewards, dones, step_obs = venv.step(actions)
                r_int = driver.rewards(obs_raw, actions, step_obs, dones)
                block_obs[t] = obs_norm
                block_actions[t] = actions
                block_rewards_ext[t] = rewards
                block_dones[t] = dones
                block_probs[t] = probs
                block_rint[t] = r_int
                if obs_normalizer is not None:
                    obs_normalizer.update(next_raw)
                block_next[t] = normalize(step_obs)
                lane_returns += rewards
                for k in range(k_lanes):
                    if dones[k]:
                        episodes_done += 1
                        window_train_returns.append(lane_returns[k])
                        lane_returns[k] = 0.0
                        driver.reset_lane(k)
                obs_raw = next_raw
            window_intrinsic.extend(block_rint.reshape(-1))
            block = RolloutBatch(
                obs=block_obs.copy(), actions=block_actions.copy(),
                rewards=block_rewards_ext.copy(), rewards_ext=block_rewards_ext.copy(),
                dones=block_dones.copy(), behavior_probs=block_probs.copy(),
                next_obs=block_next.copy(), bootstrap_obs=normalize(obs_raw),
            )
            trainer.observe_block(block, block_rint.copy())
            while next_eval <= episodes_done and next_eval <= total:
                emit(next_eval, eval_index)
                eval_index += 1
                next_eval += cfg.schedule.eval_every
    finally:
        if writer is not None:
            writer.close()
    log.completed_episodes = episodes_done
    return log
