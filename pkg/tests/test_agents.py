import numpy as np
import pytest

from decoupled_rl import agents
from decoupled_rl.agents import (
    ActorCritic,
    PPOLearner,
    QLearner,
    ReplayBuffer,
    RolloutBatch,
    a2c_update,
    actor_critic_grads,
    double_dqn_targets,
    greedy_action,
    n_step_returns,
    ppo_surrogate_grads,
)
from decoupled_rl.nn import DenseNet, softmax_rows


def make_batch(rewards, dones, bootstrap_values, obs_dim=3):
    rewards = np.asarray(rewards, dtype=np.float64)
    n, k = rewards.shape
    rng = np.random.default_rng(0)
    return RolloutBatch(
        obs=rng.normal(size=(n, k, obs_dim)),
        actions=np.zeros((n, k), dtype=np.int64),
        rewards=rewards,
        rewards_ext=rewards.copy(),
        dones=np.asarray(dones, dtype=bool),
        behavior_probs=np.full((n, k), 0.5),
        next_obs=rng.normal(size=(n, k, obs_dim)),
        bootstrap_obs=rng.normal(size=(k, obs_dim)),
        bootstrap_values=np.asarray(bootstrap_values, dtype=np.float64),
    )


class TestNStepReturns:
    def test_terminal_undiscounted_sum(self):
        batch = make_batch([[0.0], [0.0], [1.0]], [[False], [False], [True]], [999.0])
        targets = n_step_returns(batch, gamma=1.0)
        assert np.allclose(targets[:, 0], [1.0, 1.0, 1.0])

    def test_single_step_bootstrap(self):
        batch = make_batch([[0.0]], [[False]], [2.0])
        assert n_step_returns(batch, gamma=0.99)[0, 0] == pytest.approx(1.98)

    def test_matches_per_step_recomputation(self):
        rng = np.random.default_rng(1)
        n, k = 6, 3
        rewards = rng.normal(size=(n, k))
        dones = rng.random(size=(n, k)) < 0.25
        boot = rng.normal(size=k)
        batch = make_batch(rewards, dones, boot)
        gamma = 0.97
        targets = n_step_returns(batch, gamma)
        for lane in range(k):
            for t in range(n):
                expected, disc = 0.0, 1.0
                m = t
                while m < n:
                    expected += disc * rewards[m, lane]
                    if dones[m, lane]:
                        break
                    disc *= gamma
                    m += 1
                else:
                    expected += disc * boot[lane]
                assert targets[t, lane] == pytest.approx(expected, abs=1e-12)

    def test_no_value_flow_across_done(self):
        batch = make_batch([[0.0], [0.0]], [[True], [False]], [1e9])
        targets = n_step_returns(batch, gamma=0.99)
        assert targets[0, 0] == 0.0  # episode ended; the huge bootstrap is masked


def make_ac(obs_dim=4, n_actions=3, seed=0, **over):
    kwargs = dict(learning_rate=1e-3, entropy_coef=0.01, value_coef=0.5,
                  max_grad_norm=0.5, adam_eps=1e-3, activation="tanh",
                  rng=np.random.default_rng(seed))
    kwargs.update(over)
    return ActorCritic(obs_dim, n_actions, **kwargs)


class TestA2C:
    def test_zero_advantage_zero_entropy_leaves_policy(self):
        ac = make_ac(entropy_coef=0.0)
        S = np.random.default_rng(2).normal(size=(5, 4))
        targets = ac.values(S)  # advantage identically zero
        before = [p.copy() for p in ac.policy.params()]
        pol_grads, _, _ = actor_critic_grads(ac, S, np.zeros(5, dtype=int), targets)
        agents.apply_actor_critic_grads(ac, pol_grads, [np.zeros_like(p) for p in ac.value.params()])
        for b, p in zip(before, ac.policy.params()):
            assert np.array_equal(b, p)

    def test_value_loss_zero_at_targets(self):
        ac = make_ac()
        S = np.random.default_rng(3).normal(size=(6, 4))
        _, _, diag = actor_critic_grads(ac, S, np.zeros(6, dtype=int), ac.values(S))
        assert diag["value_loss"] == pytest.approx(0.0, abs=1e-24)

    def test_gradients_match_finite_differences(self):
        ac = make_ac(seed=5)
        rng = np.random.default_rng(6)
        S = rng.normal(size=(4, 4))
        actions = rng.integers(0, 3, size=4)
        targets = rng.normal(size=4)
        adv_fixed = targets - ac.values(S)  # stop-gradient advantages

        def scalar_loss():
            probs = ac.action_probs(S)
            taken = probs[np.arange(4), actions]
            values = ac.values(S)
            pol = np.mean(-np.log(taken) * adv_fixed)
            ent = np.mean(-np.sum(probs * np.log(probs), axis=1))
            val = ac.value_coef * np.mean((values - targets) ** 2)
            return pol - ac.entropy_coef * ent + val

        pol_grads, val_grads, _ = actor_critic_grads(ac, S, actions, targets)
        h = 1e-5
        for analytic, net in ((pol_grads, ac.policy), (val_grads, ac.value)):
            for g, p in zip(analytic, net.params()):
                flat_idx = np.unravel_index(
                    np.argsort(np.abs(g), axis=None)[-20:], g.shape
                )
                for idx in zip(*flat_idx):
                    orig = p[idx]
                    p[idx] = orig + h
                    up = scalar_loss()
                    p[idx] = orig - h
                    down = scalar_loss()
                    p[idx] = orig
                    num = (up - down) / (2 * h)
                    assert abs(g[idx] - num) / max(abs(num), 1e-8) < 1e-4

    def test_a2c_update_runs_and_reports(self):
        ac = make_ac()
        batch = make_batch(np.zeros((2, 3)), np.zeros((2, 3), bool), np.zeros(3), obs_dim=4)
        diag = a2c_update(ac, batch, gamma=0.99)
        assert set(diag) >= {"policy_loss", "value_loss", "entropy", "grad_norm"}


def make_ppo(obs_dim=4, n_actions=3, seed=0, **over):
    kwargs = dict(learning_rate=1e-3, entropy_coef=0.0, value_coef=0.5,
                  max_grad_norm=0.5, adam_eps=1e-3, activation="tanh",
                  clip_ratio=0.1, epochs=1, minibatches=1,
                  rng=np.random.default_rng(seed))
    kwargs.update(over)
    return PPOLearner(obs_dim, n_actions, **kwargs)


class TestPPO:
    def surrogate_value(self, rho, adv, eps):
        return -min(rho * adv, float(np.clip(rho, 1 - eps, 1 + eps)) * adv)

    def test_positive_advantage_clips_high_ratio(self):
        # rho=1.3, eps=0.1, A>0: the clipped branch 1.1*A is the minimum
        assert self.surrogate_value(1.3, 2.0, 0.1) == pytest.approx(-1.1 * 2.0)

    def test_ratio_one_is_identity(self):
        assert self.surrogate_value(1.0, -3.0, 0.1) == pytest.approx(3.0)

    def test_negative_advantage_low_ratio_takes_pessimistic_branch(self):
        # rho=0.5, eps=0.1, A<0: min(0.5A, 0.9A) = 0.9A, the clipped penalty,
        # so no gradient pushes the ratio below the clip band
        adv = -2.0
        assert self.surrogate_value(0.5, adv, 0.1) == pytest.approx(-0.9 * adv)
        ppo = make_ppo()
        S = np.random.default_rng(1).normal(size=(1, 4))
        probs = ppo.action_probs(S)
        old = probs[0, 0] / 0.5  # forces rho = 0.5 for action 0
        pol_grads, _, diag = ppo_surrogate_grads(
            ppo, S, np.array([0]), np.array([old]), np.array([0.0]),
            np.array([adv]), ppo.values(S),
        )
        assert diag["clip_fraction"] == 1.0
        assert all(np.all(g == 0.0) for g in pol_grads)

    def test_first_epoch_matches_a2c_direction(self):
        rng = np.random.default_rng(7)
        S = rng.normal(size=(8, 4))
        actions = rng.integers(0, 3, size=8)
        targets = rng.normal(size=8)
        ppo = make_ppo(seed=9, clip_ratio=1e9, entropy_coef=0.01)
        ac = make_ac(seed=9, entropy_coef=0.01)
        ac.policy.load_params(ppo.policy)
        ac.value.load_params(ppo.value)
        old = ppo.action_probs(S)[np.arange(8), actions]
        v_old = ppo.values(S)
        adv = targets - v_old
        ppo_pol, _, _ = ppo_surrogate_grads(ppo, S, actions, old, targets, adv, v_old)
        a2c_pol, _, _ = actor_critic_grads(ac, S, actions, targets)
        u = np.concatenate([g.ravel() for g in ppo_pol])
        v = np.concatenate([g.ravel() for g in a2c_pol])
        cos = u @ v / (np.linalg.norm(u) * np.linalg.norm(v))
        assert cos > 0.999

    def test_surrogate_gradients_match_finite_differences(self):
        ppo = make_ppo(seed=11, entropy_coef=0.01)
        rng = np.random.default_rng(12)
        S = rng.normal(size=(5, 4))
        actions = rng.integers(0, 3, size=5)
        old = np.full(5, 0.4)
        targets = rng.normal(size=5)
        adv = rng.normal(size=5)
        v_old = ppo.values(S) + rng.normal(size=5) * 0.05

        def scalar_loss():
            probs = ppo.action_probs(S)
            taken = probs[np.arange(5), actions]
            rho = taken / old
            surr = np.minimum(rho * adv, np.clip(rho, 0.9, 1.1) * adv)
            ent = np.mean(-np.sum(probs * np.log(probs), axis=1))
            values = ppo.values(S)
            v_clip = v_old + np.clip(values - v_old, -0.1, 0.1)
            vloss = ppo.value_coef * np.mean(
                np.maximum((values - targets) ** 2, (v_clip - targets) ** 2)
            )
            return float(np.mean(-surr) - ppo.entropy_coef * ent + vloss)

        pol_grads, val_grads, _ = ppo_surrogate_grads(ppo, S, actions, old, targets, adv, v_old)
        h = 1e-6
        for analytic, net in ((pol_grads, ppo.policy), (val_grads, ppo.value)):
            for g, p in zip(analytic, net.params()):
                flat_idx = np.unravel_index(np.argsort(np.abs(g), axis=None)[-10:], g.shape)
                for idx in zip(*flat_idx):
                    orig = p[idx]
                    p[idx] = orig + h
                    up = scalar_loss()
                    p[idx] = orig - h
                    down = scalar_loss()
                    p[idx] = orig
                    num = (up - down) / (2 * h)
                    assert abs(g[idx] - num) / max(abs(num), 1e-7) < 1e-3


class TestReplayBuffer:
    def test_fifo_eviction(self):
        buf = ReplayBuffer(10)
        for i in range(13):
            s = np.array([float(i), 0.0])
            buf.push(s, 0, 0.0, s, False)
        assert len(buf) == 10
        for i in range(3):
            assert not buf.contains_state(np.array([float(i), 0.0]))
        for i in range(3, 13):
            assert buf.contains_state(np.array([float(i), 0.0]))

    def test_sample_without_replacement(self):
        buf = ReplayBuffer(8)
        for i in range(8):
            buf.push(np.array([float(i)]), i, 0.0, np.array([0.0]), False)
        states, actions, *_ = buf.sample(8, np.random.default_rng(0))
        assert sorted(actions.tolist()) == list(range(8))


class TestDQN:
    def test_terminal_target_is_reward(self):
        rng = np.random.default_rng(0)
        online = DenseNet([2, 8, 2], rng=rng)
        target = online.copy()
        y = double_dqn_targets(online, target, np.array([1.0]), np.ones((1, 2)),
                               np.array([True]), gamma=0.99)
        assert y[0] == 1.0

    def test_target_arithmetic(self):
        online = DenseNet([2, 2], rng=np.random.default_rng(1))
        target = DenseNet([2, 2], rng=np.random.default_rng(2))
        s2 = np.array([[1.0, 0.0]])
        best = int(np.argmax(online.forward_batch(s2)[0]))
        target.weights[0][...] = 0.0
        target.biases[0][...] = [2.0, 2.0]  # Q_target = 2 everywhere
        y = double_dqn_targets(online, target, np.array([1.0]), s2,
                               np.array([False]), gamma=0.99)
        assert y[0] == pytest.approx(1.0 + 0.99 * 2.0)

    def test_double_dqn_never_exceeds_max_target_bound(self):
        rng = np.random.default_rng(3)
        online = DenseNet([4, 16, 3], rng=rng)
        target = DenseNet([4, 16, 3], rng=rng)
        s2 = rng.normal(size=(50, 4))
        r = rng.normal(size=50)
        y = double_dqn_targets(online, target, r, s2, np.zeros(50, bool), gamma=0.9)
        bound = r + 0.9 * target.forward_batch(s2).max(axis=1)
        assert np.all(y <= bound + 1e-12)

    def test_update_skips_until_buffer_filled(self):
        q = QLearner(2, 2, learning_rate=1e-3, tau=0.01, batch_size=4,
                     max_grad_norm=0.5, adam_eps=1e-3, activation="tanh",
                     buffer_capacity=100, rng=np.random.default_rng(4))
        assert q.update(0.99, np.random.default_rng(0)) is None

    def test_converges_to_tabular_q_star(self):
        # deterministic 2-state chain; value-iteration oracle for Q*
        gamma = 0.5
        trans = {(0, 0): (1, 1.0), (0, 1): (0, 0.0), (1, 0): (0, 2.0), (1, 1): (1, -1.0)}
        q_star = np.zeros((2, 2))
        for _ in range(200):
            q_new = np.empty_like(q_star)
            for (s, a), (s2, r) in trans.items():
                q_new[s, a] = r + gamma * q_star[s2].max()
            q_star = q_new
        assert q_star[0, 0] == pytest.approx(8 / 3)
        learner = QLearner(2, 2, learning_rate=2e-3, tau=0.05, batch_size=4,
                           max_grad_norm=10.0, adam_eps=1e-8, activation="tanh",
                           buffer_capacity=16, rng=np.random.default_rng(5))
        eye = np.eye(2)
        for (s, a), (s2, r) in trans.items():
            learner.buffer.push(eye[s], a, r, eye[s2], False)
        rng = np.random.default_rng(6)
        for _ in range(5000):
            learner.update(gamma, rng)
        q_learned = learner.q_values(eye)
        assert np.max(np.abs(q_learned - q_star)) < 1e-2


class TestGreedyAction:
    def test_examples(self):
        assert greedy_action([0.9, 0.1]) == 0
        assert greedy_action([1.0, 1.0]) == 0

    def test_invariant_under_monotone_transform(self):
        rng = np.random.default_rng(0)
        for _ in range(100):
            scores = rng.normal(size=4)
            a = greedy_action(scores)
            assert greedy_action(np.exp(scores)) == a
            assert greedy_action(3.0 * scores + 7.0) == a
