"""Baseline learners: advantage actor-critic and clipped-surrogate policy
optimisation on n-step rollouts, plus double-Q machinery (replay buffer,
target network) reused by the decoupled trainers.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .nn import (
    ConfigError,
    DenseNet,
    DivergenceError,
    adam_step,
    clip_global_norm,
    entropy_grad_rows,
    entropy_rows,
    global_norm,
    kl_divergence_rows,
    kl_grad_rows,
    softmax_rows,
)

HIDDEN = (64, 64)


@dataclass
class Transition:
    """One environment step as the off-policy store keeps it. behavior_prob is
    the acting policy's probability of the taken action at collection time."""

    state: np.ndarray
    action: int
    reward_ext: float
    reward_train: float
    next_state: np.ndarray
    done: bool
    behavior_prob: float


@dataclass
class RolloutBatch:
    """n_steps x n_envs block of transitions in collection order.

    rewards holds the training signal the consumer should learn from;
    rewards_ext keeps the raw environment reward alongside. bootstrap_values
    must be filled (one per lane) before n_step_returns is called.
    """

    obs: np.ndarray            # (n, K, obs_dim)
    actions: np.ndarray        # (n, K)
    rewards: np.ndarray        # (n, K)
    rewards_ext: np.ndarray    # (n, K)
    dones: np.ndarray          # (n, K) bool
    behavior_probs: np.ndarray  # (n, K)
    next_obs: np.ndarray       # (n, K, obs_dim), terminal obs on finished lanes
    bootstrap_obs: np.ndarray  # (K, obs_dim)
    bootstrap_values: np.ndarray | None = None

    @property
    def n_steps(self):
        return self.obs.shape[0]

    @property
    def num_envs(self):
        return self.obs.shape[1]

    def flat(self, arr):
        return arr.reshape(-1, *arr.shape[2:])


def n_step_returns(batch: RolloutBatch, gamma: float) -> np.ndarray:
    """Discounted targets G_t per transition, truncated at episode ends and
    bootstrapped from the lane value at the block boundary."""
    if batch.bootstrap_values is None:
        raise ConfigError("bootstrap_values missing on RolloutBatch")
    targets = np.empty_like(batch.rewards)
    g = np.asarray(batch.bootstrap_values, dtype=np.float64).copy()
    for t in range(batch.n_steps - 1, -1, -1):
        g = batch.rewards[t] + gamma * np.where(batch.dones[t], 0.0, g)
        targets[t] = g
    return targets


class ActorCritic:
    """Softmax policy head and state-value head, each a dense (64, 64) net
    with its own Adam state; updates clip the joint gradient norm."""

    def __init__(self, obs_dim, n_actions, *, learning_rate, entropy_coef,
                 value_coef, max_grad_norm, adam_eps, activation, rng):
        self.n_actions = n_actions
        self.learning_rate = learning_rate
        self.entropy_coef = entropy_coef
        self.value_coef = value_coef
        self.max_grad_norm = max_grad_norm
        self.adam_eps = adam_eps
        self.policy = DenseNet([obs_dim, *HIDDEN, n_actions], activation=activation, rng=rng)
        self.value = DenseNet([obs_dim, *HIDDEN, 1], activation=activation, rng=rng)

    def action_probs(self, obs_rows):
        return softmax_rows(self.policy.forward_batch(obs_rows))

    def values(self, obs_rows):
        return self.value.forward_batch(obs_rows)[:, 0]

    def greedy(self, obs):
        return greedy_action(self.action_probs(np.atleast_2d(obs))[0])

    def param_state(self):
        return [p.copy() for p in self.policy.params() + self.value.params()]


def actor_critic_grads(ac: ActorCritic, S, actions, targets, *,
                       weights=None, kl_ref=None, kl_coef=0.0):
    """Gradients of the weighted policy-gradient loss plus value regression.

    actor loss: mean(-w * log pi(a|s) * A) - entropy_coef * mean H(pi(s))
                (+ kl_coef * mean KL(pi(s), kl_ref(s)) when a reference is given)
    value loss: value_coef * mean(w * (V(s) - target)^2), targets constant.
    """
    batch = len(actions)
    probs = ac.action_probs(S)
    values = ac.values(S)
    adv = targets - values
    w = np.ones(batch) if weights is None else np.asarray(weights, dtype=np.float64)
    taken = probs[np.arange(batch), actions]
    d_logits = probs.copy()
    d_logits[np.arange(batch), actions] -= 1.0
    d_logits *= (w * adv)[:, None] / batch
    if ac.entropy_coef:
        d_logits += ac.entropy_coef * entropy_grad_rows(probs) / batch
    kl_mean = 0.0
    if kl_ref is not None:
        kl_mean = float(np.mean(kl_divergence_rows(probs, kl_ref)))
        if kl_coef:
            d_logits += kl_coef * kl_grad_rows(probs, kl_ref) / batch
    d_values = 2.0 * ac.value_coef * (w * (values - targets)) / batch
    pol_grads, _ = ac.policy.backward_batch(S, d_logits)
    val_grads, _ = ac.value.backward_batch(S, d_values[:, None])
    entropy_mean = float(np.mean(entropy_rows(probs)))
    policy_loss = float(np.mean(-w * np.log(np.maximum(taken, 1e-300)) * adv))
    value_loss = float(ac.value_coef * np.mean(w * (values - targets) ** 2))
    if not np.isfinite(policy_loss + value_loss):
        raise DivergenceError("non-finite actor-critic loss")
    diag = {
        "policy_loss": policy_loss,
        "value_loss": value_loss,
        "entropy": entropy_mean,
        "kl": kl_mean,
    }
    return pol_grads, val_grads, diag


def apply_actor_critic_grads(ac: ActorCritic, pol_grads, val_grads):
    joint = clip_global_norm(pol_grads + val_grads, ac.max_grad_norm)
    n_pol = len(pol_grads)
    adam_step(ac.policy, joint[:n_pol], ac.learning_rate, ac.adam_eps)
    adam_step(ac.value, joint[n_pol:], ac.learning_rate, ac.adam_eps)
    return global_norm(joint)


def a2c_update(ac: ActorCritic, batch: RolloutBatch, gamma, *, kl_ref=None, kl_coef=0.0):
    """One synchronous advantage actor-critic step on an n-step rollout."""
    batch.bootstrap_values = ac.values(batch.bootstrap_obs)
    targets = n_step_returns(batch, gamma).reshape(-1)
    S = batch.flat(batch.obs)
    actions = batch.flat(batch.actions)
    pol_grads, val_grads, diag = actor_critic_grads(
        ac, S, actions, targets, kl_ref=kl_ref, kl_coef=kl_coef
    )
    diag["grad_norm"] = apply_actor_critic_grads(ac, pol_grads, val_grads)
    return diag


class PPOLearner(ActorCritic):
    """Clipped-surrogate variant: several shuffled minibatch epochs per rollout,
    ratios against the collection-time probabilities, clipped value loss."""

    def __init__(self, obs_dim, n_actions, *, clip_ratio, epochs, minibatches,
                 clip_value_loss=True, **kwargs):
        super().__init__(obs_dim, n_actions, **kwargs)
        self.clip_ratio = clip_ratio
        self.epochs = epochs
        self.minibatches = minibatches
        self.clip_value_loss = clip_value_loss

    def update(self, batch: RolloutBatch, gamma, rng):
        return ppo_update(self, batch, gamma, rng)


def ppo_surrogate_grads(learner: PPOLearner, S, actions, old_probs, targets,
                        advantages, v_old, *, value_weights=None,
                        kl_ref=None, kl_coef=0.0):
    """Gradients of the clipped objective on one minibatch; advantages and
    targets are constants computed before the first epoch. value_weights
    scales only the value regression (the off-policy variant weights it by
    the importance ratio); kl_ref adds kl_coef * KL(pi(s), kl_ref)."""
    batch = len(actions)
    eps = learner.clip_ratio
    probs = learner.action_probs(S)
    values = learner.values(S)
    taken = probs[np.arange(batch), actions]
    rho = taken / old_probs
    surr_plain = rho * advantages
    surr_clip = np.clip(rho, 1.0 - eps, 1.0 + eps) * advantages
    use_plain = surr_plain <= surr_clip
    # d(-min)/d rho is -A where the unclipped branch is active, else 0
    d_rho = np.where(use_plain, -advantages, 0.0) / batch
    d_logits = (d_rho * rho)[:, None] * (-probs)
    d_logits[np.arange(batch), actions] += d_rho * rho
    if learner.entropy_coef:
        d_logits += learner.entropy_coef * entropy_grad_rows(probs) / batch
    kl_mean = 0.0
    if kl_ref is not None:
        kl_mean = float(np.mean(kl_divergence_rows(probs, kl_ref)))
        if kl_coef:
            d_logits += kl_coef * kl_grad_rows(probs, kl_ref) / batch
    w = np.ones(batch) if value_weights is None else np.asarray(value_weights)
    verr = values - targets
    if learner.clip_value_loss:
        v_clipped = v_old + np.clip(values - v_old, -eps, eps)
        cerr = v_clipped - targets
        plain_branch = verr**2 >= cerr**2
        d_values = np.where(
            plain_branch, 2.0 * verr, 2.0 * cerr * (np.abs(values - v_old) < eps)
        )
        value_loss = float(learner.value_coef * np.mean(w * np.maximum(verr**2, cerr**2)))
    else:
        d_values = 2.0 * verr
        value_loss = float(learner.value_coef * np.mean(w * verr**2))
    d_values = learner.value_coef * w * d_values / batch
    pol_grads, _ = learner.policy.backward_batch(S, d_logits)
    val_grads, _ = learner.value.backward_batch(S, d_values[:, None])
    surrogate = float(np.mean(-np.minimum(surr_plain, surr_clip)))
    if not np.isfinite(surrogate + value_loss):
        raise DivergenceError("non-finite clipped-surrogate loss")
    diag = {
        "policy_loss": surrogate,
        "value_loss": value_loss,
        "entropy": float(np.mean(entropy_rows(probs))),
        "clip_fraction": float(np.mean(~use_plain)),
        "kl": kl_mean,
    }
    return pol_grads, val_grads, diag


def ppo_update(learner: PPOLearner, batch: RolloutBatch, gamma, rng):
    batch.bootstrap_values = learner.values(batch.bootstrap_obs)
    targets = n_step_returns(batch, gamma).reshape(-1)
    S = batch.flat(batch.obs)
    actions = batch.flat(batch.actions)
    old_probs = batch.flat(batch.behavior_probs)
    v_old = learner.values(S)
    advantages = targets - v_old
    size = len(actions)
    diag = {}
    for _ in range(learner.epochs):
        order = rng.permutation(size)
        for chunk in np.array_split(order, learner.minibatches):
            pol_grads, val_grads, diag = ppo_surrogate_grads(
                learner, S[chunk], actions[chunk], old_probs[chunk],
                targets[chunk], advantages[chunk], v_old[chunk],
            )
            diag["grad_norm"] = apply_actor_critic_grads(learner, pol_grads, val_grads)
    return diag


class ReplayBuffer:
    """Bounded FIFO transition store with uniform without-replacement sampling."""

    def __init__(self, capacity: int):
        if capacity < 1:
            raise ConfigError(f"capacity must be >= 1, got {capacity}")
        self.capacity = capacity
        self.size = 0
        self._next = 0
        self._states = None

    def __len__(self):
        return self.size

    def _alloc(self, obs_dim):
        self._states = np.empty((self.capacity, obs_dim))
        self._actions = np.empty(self.capacity, dtype=np.int64)
        self._rewards = np.empty(self.capacity)
        self._next_states = np.empty((self.capacity, obs_dim))
        self._dones = np.empty(self.capacity, dtype=bool)
        self._probs = np.empty(self.capacity)

    def push(self, state, action, reward, next_state, done, behavior_prob=1.0):
        if self._states is None:
            self._alloc(len(state))
        i = self._next
        self._states[i] = state
        self._actions[i] = action
        self._rewards[i] = reward
        self._next_states[i] = next_state
        self._dones[i] = done
        self._probs[i] = behavior_prob
        self._next = (i + 1) % self.capacity
        self.size = min(self.size + 1, self.capacity)

    def push_transition(self, tr: Transition):
        self.push(tr.state, tr.action, tr.reward_train, tr.next_state, tr.done, tr.behavior_prob)

    def sample(self, batch_size, rng):
        if batch_size > self.size:
            raise ConfigError(f"cannot sample {batch_size} from buffer of {self.size}")
        idx = rng.choice(self.size, size=batch_size, replace=False)
        return (self._states[idx], self._actions[idx], self._rewards[idx],
                self._next_states[idx], self._dones[idx])

    def contains_state(self, state):
        if self._states is None:
            return False
        return bool(np.any(np.all(self._states[: self.size] == state, axis=1)))


class QLearner:
    """Online/target double-Q pair over dense nets with soft target updates."""

    def __init__(self, obs_dim, n_actions, *, learning_rate, tau, batch_size,
                 max_grad_norm, adam_eps, activation, buffer_capacity, rng):
        self.n_actions = n_actions
        self.learning_rate = learning_rate
        self.tau = tau
        self.batch_size = batch_size
        self.max_grad_norm = max_grad_norm
        self.adam_eps = adam_eps
        self.online = DenseNet([obs_dim, *HIDDEN, n_actions], activation=activation, rng=rng)
        self.target = self.online.copy()
        self.buffer = ReplayBuffer(buffer_capacity)

    def q_values(self, obs_rows):
        return self.online.forward_batch(obs_rows)

    def greedy(self, obs):
        return greedy_action(self.q_values(np.atleast_2d(obs))[0])

    def update(self, gamma, rng):
        return dqn_update(self.online, self.target, self.buffer, self.batch_size,
                          gamma, self.tau, learning_rate=self.learning_rate,
                          adam_eps=self.adam_eps, max_grad_norm=self.max_grad_norm,
                          rng=rng)


def double_dqn_targets(online, target, rewards, next_states, dones, gamma):
    """r + gamma * Q_target(s', argmax_a Q_online(s', a)), masked at terminals."""
    next_online = online.forward_batch(next_states)
    best = np.argmax(next_online, axis=1)
    next_target = target.forward_batch(next_states)[np.arange(len(best)), best]
    return rewards + gamma * np.where(dones, 0.0, next_target)


def dqn_update(online, target, buffer: ReplayBuffer, batch_size, gamma, tau, *,
               learning_rate, adam_eps, max_grad_norm, rng):
    """One double-Q regression step on a uniform batch plus a soft target update.

    Returns None (no-op) while the buffer holds fewer than batch_size items.
    """
    if len(buffer) < batch_size:
        return None
    states, actions, rewards, next_states, dones = buffer.sample(batch_size, rng)
    y = double_dqn_targets(online, target, rewards, next_states, dones, gamma)
    q_all = online.forward_batch(states)
    q_taken = q_all[np.arange(batch_size), actions]
    err = q_taken - y
    loss = float(np.mean(err**2))
    if not np.isfinite(loss):
        raise DivergenceError("non-finite Q loss")
    d_q = np.zeros_like(q_all)
    d_q[np.arange(batch_size), actions] = 2.0 * err / batch_size
    grads, _ = online.backward_batch(states, d_q)
    grads = clip_global_norm(grads, max_grad_norm)
    adam_step(online, grads, learning_rate, adam_eps)
    for tgt, src in zip(target.params(), online.params()):
        tgt *= 1.0 - tau
        tgt += tau * src
    return {"q_loss": loss, "target_mean": float(np.mean(y))}


def greedy_action(scores) -> int:
    """Argmax with ties broken toward the lowest action index."""
    return int(np.argmax(scores))
