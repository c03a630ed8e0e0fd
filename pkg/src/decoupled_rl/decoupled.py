"""Two-policy training: a behavior policy explores on intrinsic bonuses while
a separate exploitation learner trains on the extrinsic rewards it left
behind, corrected by importance weights where the learner is on-policy.
"""

from __future__ import annotations

import numpy as np

from .agents import (
    ActorCritic,
    PPOLearner,
    QLearner,
    RolloutBatch,
    a2c_update,
    actor_critic_grads,
    apply_actor_critic_grads,
    greedy_action,
    ppo_surrogate_grads,
)
from .intrinsic import combine
from .nn import ConfigError, kl_divergence_rows, sample_categorical_rows

PROB_FLOOR = 1e-8


def is_weight(pi_e_prob, pi_beta_prob, clamp_counter=None):
    """Importance ratio pi_e / pi_beta with the behavior probability floored.

    Works elementwise on arrays; clamp events are tallied into clamp_counter
    (a one-element list) when provided.
    """
    pb = np.asarray(pi_beta_prob, dtype=np.float64)
    clamped = pb < PROB_FLOOR
    if clamp_counter is not None:
        clamp_counter[0] += int(np.count_nonzero(clamped))
    return np.asarray(pi_e_prob, dtype=np.float64) / np.maximum(pb, PROB_FLOOR)


def retrace_clip(rho):
    """Truncate importance ratios at 1."""
    return np.minimum(rho, 1.0)


def kl_divergence(p, q) -> float:
    """KL(p, q) between two categorical distributions (q floored at 1e-8)."""
    return float(kl_divergence_rows(np.atleast_2d(p), np.atleast_2d(q))[0])


class StagingStore:
    """Per-step transition accumulator the actor-critic exploiters consume and
    then drop; extrinsic rewards only."""

    def __init__(self):
        self.clear()

    def clear(self):
        self.states = []
        self.actions = []
        self.rewards_ext = []
        self.next_states = []
        self.dones = []
        self.behavior_probs = []

    def extend(self, states, actions, rewards_ext, next_states, dones, behavior_probs):
        self.states.append(states)
        self.actions.append(actions)
        self.rewards_ext.append(rewards_ext)
        self.next_states.append(next_states)
        self.dones.append(dones)
        self.behavior_probs.append(behavior_probs)

    @property
    def transitions(self):
        return sum(len(chunk) for chunk in self.actions)

    def arrays(self):
        return (
            np.concatenate(self.states),
            np.concatenate(self.actions),
            np.concatenate(self.rewards_ext),
            np.concatenate(self.next_states),
            np.concatenate(self.dones),
            np.concatenate(self.behavior_probs),
        )


def dea2c_exploit_update(exploit: ActorCritic, store: StagingStore, gamma, *,
                         retrace=False, alpha_e=0.0, explore: ActorCritic | None = None,
                         clamp_counter=None):
    """One importance-weighted actor-critic step on the staged extrinsic data.

    Actor: mean(-rho log pi_e(a|s) A^e) with one-step advantages
    A^e = r + gamma V(s') - V(s); value regression weighted by the same rho.
    The store is cleared afterwards.
    """
    S, A, R, S2, DONE, BPROB = store.arrays()
    v_next = exploit.values(S2)
    targets = R + gamma * np.where(DONE, 0.0, v_next)
    probs = exploit.action_probs(S)
    rho = is_weight(probs[np.arange(len(A)), A], BPROB, clamp_counter)
    rho_used = retrace_clip(rho) if retrace else rho
    kl_ref = explore.action_probs(S) if explore is not None else None
    pol_grads, val_grads, diag = actor_critic_grads(
        exploit, S, A, targets, weights=rho_used, kl_ref=kl_ref, kl_coef=alpha_e
    )
    diag["grad_norm"] = apply_actor_critic_grads(exploit, pol_grads, val_grads)
    diag["is_mean"] = float(np.mean(rho))
    diag["is_max"] = float(np.max(rho))
    store.clear()
    return diag


def deppo_exploit_update(exploit: PPOLearner, store: StagingStore, gamma, rng, *,
                         retrace=False, alpha_e=0.0, explore: ActorCritic | None = None,
                         clamp_counter=None):
    """Clipped-surrogate exploitation step where the ratio runs against the
    recorded behavior probabilities; value loss importance-weighted as in the
    actor-critic variant. The store is cleared afterwards."""
    S, A, R, S2, DONE, BPROB = store.arrays()
    size = len(A)
    v_next = exploit.values(S2)
    targets = R + gamma * np.where(DONE, 0.0, v_next)
    v_old = exploit.values(S)
    advantages = targets - v_old
    old_probs = np.maximum(BPROB, PROB_FLOOR)
    probs0 = exploit.action_probs(S)
    rho0 = is_weight(probs0[np.arange(size), A], BPROB, clamp_counter)
    value_w = retrace_clip(rho0) if retrace else rho0
    kl_ref = explore.action_probs(S) if explore is not None else None
    diag = {}
    for _ in range(exploit.epochs):
        order = rng.permutation(size)
        for chunk in np.array_split(order, exploit.minibatches):
            pol_grads, val_grads, diag = ppo_surrogate_grads(
                exploit, S[chunk], A[chunk], old_probs[chunk], targets[chunk],
                advantages[chunk], v_old[chunk], value_weights=value_w[chunk],
                kl_ref=None if kl_ref is None else kl_ref[chunk], kl_coef=alpha_e,
            )
            diag["grad_norm"] = apply_actor_critic_grads(exploit, pol_grads, val_grads)
    diag["is_mean"] = float(np.mean(rho0))
    diag["is_max"] = float(np.max(rho0))
    store.clear()
    return diag


def dedqn_exploit_update(exploit: QLearner, gamma, rng):
    """Exactly the double-Q update on the persistent replay buffer; off-policy
    learning needs no importance correction here."""
    return exploit.update(gamma, rng)


class DecoupledLearner:
    """Behavior actor-critic plus a decoupled exploitation learner.

    act() samples from the behavior policy; observe_block() trains the
    behavior policy on the (combined or purely intrinsic) bonus signal,
    stages extrinsic transitions, and fires the exploitation update every
    t_dec staged blocks of exploit_n_steps * K transitions. Evaluation always
    queries the exploitation learner greedily.
    """

    def __init__(self, explore: ActorCritic, exploit, *, gamma, lam, t_dec,
                 exploit_n_steps, explore_n_steps=5, alpha_beta=0.0, alpha_e=0.0,
                 retrace=False, pure_intrinsic=False, reward_normalizer=None,
                 act_rng=None, update_rng=None):
        if t_dec < 1 or exploit_n_steps < 1:
            raise ConfigError("t_dec and exploit n_steps must be >= 1")
        self.explore = explore
        self.exploit = exploit
        self.rollout_steps = explore_n_steps
        self.gamma = gamma
        self.lam = lam
        self.t_dec = t_dec
        self.exploit_n_steps = exploit_n_steps
        self.alpha_beta = alpha_beta
        self.alpha_e = alpha_e
        self.retrace = retrace
        self.pure_intrinsic = pure_intrinsic
        self.reward_normalizer = reward_normalizer
        self.act_rng = act_rng if act_rng is not None else np.random.default_rng(0)
        self.update_rng = update_rng if update_rng is not None else np.random.default_rng(1)
        self.exploit_is_q = isinstance(exploit, QLearner)
        self.store = StagingStore() if not self.exploit_is_q else None
        self._staged_steps = 0
        self._blocks_staged = 0
        self.clamp_counter = [0]
        self._diag_sums = {}
        self._diag_counts = {}
        self.last_train_rewards = None

    def act(self, obs_rows):
        probs = self.explore.action_probs(obs_rows)
        return sample_categorical_rows(probs, self.act_rng)

    def eval_action(self, obs):
        return self.exploit.greedy(obs)

    def _tally(self, diag):
        for key, value in diag.items():
            self._diag_sums[key] = self._diag_sums.get(key, 0.0) + value
            self._diag_counts[key] = self._diag_counts.get(key, 0) + 1

    def pop_diagnostics(self):
        out = {k: self._diag_sums[k] / self._diag_counts[k] for k in self._diag_sums}
        out["is_clamped"] = self.clamp_counter[0]
        self._diag_sums, self._diag_counts = {}, {}
        return out

    def assemble_training_reward(self, rewards_ext, rewards_int):
        """Behavior-policy signal: lam * r_i alone in pure-intrinsic mode,
        r_e + lam * r_i otherwise; normalized when a reward normalizer is on."""
        if self.pure_intrinsic:
            r = self.lam * rewards_int
            assert np.array_equal(r, self.lam * rewards_int)
        else:
            r = combine(rewards_ext, rewards_int, self.lam)
        if self.reward_normalizer is not None:
            self.reward_normalizer.update(r.reshape(-1))
            r = self.reward_normalizer.normalize_reward(r)
        return r

    def observe_block(self, block: RolloutBatch, rewards_int):
        """Consume one explore-side rollout block: train the behavior policy,
        stage extrinsic data, run the exploitation update on schedule."""
        r_train = self.assemble_training_reward(block.rewards_ext, rewards_int)
        self.last_train_rewards = r_train
        explore_batch = RolloutBatch(
            obs=block.obs, actions=block.actions, rewards=r_train,
            rewards_ext=block.rewards_ext, dones=block.dones,
            behavior_probs=block.behavior_probs, next_obs=block.next_obs,
            bootstrap_obs=block.bootstrap_obs,
        )
        kl_ref = None
        if not self.exploit_is_q and self.alpha_beta:
            kl_ref = self.exploit.action_probs(explore_batch.flat(block.obs))
        diag = a2c_update(self.explore, explore_batch, self.gamma,
                          kl_ref=kl_ref, kl_coef=self.alpha_beta)
        self._tally({"explore_" + k: v for k, v in diag.items()})
        # stage extrinsic-only transitions for the exploitation learner
        n = block.n_steps
        flat = block.flat
        if self.exploit_is_q:
            S, A = flat(block.obs), flat(block.actions)
            R, S2 = flat(block.rewards_ext), flat(block.next_obs)
            D, P = flat(block.dones), flat(block.behavior_probs)
            for i in range(len(A)):
                self.exploit.buffer.push(S[i], A[i], R[i], S2[i], D[i], P[i])
        else:
            self.store.extend(flat(block.obs), flat(block.actions),
                              flat(block.rewards_ext), flat(block.next_obs),
                              flat(block.dones), flat(block.behavior_probs))
        self._staged_steps += n
        if self._staged_steps >= self.exploit_n_steps * self.t_dec:
            self._staged_steps = 0
            self._exploit_update()

    def _exploit_update(self):
        if self.exploit_is_q:
            diag = dedqn_exploit_update(self.exploit, self.gamma, self.update_rng)
            if diag is not None:
                self._tally(diag)
            return
        if isinstance(self.exploit, PPOLearner):
            diag = deppo_exploit_update(
                self.exploit, self.store, self.gamma, self.update_rng,
                retrace=self.retrace, alpha_e=self.alpha_e, explore=self.explore,
                clamp_counter=self.clamp_counter,
            )
        else:
            diag = dea2c_exploit_update(
                self.exploit, self.store, self.gamma,
                retrace=self.retrace, alpha_e=self.alpha_e, explore=self.explore,
                clamp_counter=self.clamp_counter,
            )
        self._tally(diag)


def run_decoupled_training(config, seed, outdir=None, clock=None):
    """Full training loop for the decoupled algorithms; thin routing wrapper
    over the shared experiment runner."""
    if not config.algo.name.startswith("de"):
        raise ConfigError(f"{config.algo.name} is not a decoupled algorithm")
    from .harness import run_experiment

    return run_experiment(config, seed, outdir=outdir, clock=clock)
