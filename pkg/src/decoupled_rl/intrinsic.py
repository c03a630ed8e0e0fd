"""Intrinsic exploration bonuses: tabular and hashed counts, forward-model
curiosity, random-network distillation, and impact-driven bonuses, plus the
running observation/reward normalizers.

All bonus generators share one driver interface: rewards() consumes the K
transitions of a vector-env step, returns the bonus per lane, and performs
whatever model update the scheme needs at that same cadence.
"""

from __future__ import annotations

import numpy as np

from .nn import (
    ConfigError,
    DenseNet,
    DivergenceError,
    adam_step,
    log_softmax_rows,
    softmax_rows,
)

EMBED_DIM = 16
EMBED_HIDDEN = (64, 64)
HEAD_HIDDEN = (64,)


def one_hot_key(obs) -> int:
    """Index of the hot entry; -1 for the all-zero terminal pseudo-observation."""
    obs = np.asarray(obs)
    idx = int(np.argmax(obs))
    return idx if obs[idx] != 0.0 else -1


class CountTable:
    """Visitation masses keyed by hashable state keys; mass grows by `increment`."""

    def __init__(self, increment=1.0):
        if increment <= 0:
            raise ConfigError(f"count increment must be positive, got {increment}")
        self.increment = increment
        self.counts = {}

    def mass(self, key) -> float:
        return self.counts.get(key, 0.0)

    def reward(self, key) -> float:
        """Bump the key's mass, then return 1/sqrt(mass)."""
        n = self.counts.get(key, 0.0) + self.increment
        self.counts[key] = n
        return 1.0 / np.sqrt(n)

    def clear(self):
        self.counts.clear()


def count_reward(table: CountTable, state_key) -> float:
    return table.reward(state_key)


class SimHasher:
    """Sign pattern of a fixed random projection; sign(0) counts as +."""

    def __init__(self, k, obs_dim, rng):
        if k < 1:
            raise ConfigError(f"hash key dimension must be >= 1, got {k}")
        self.k = k
        self.projection = rng.standard_normal((k, obs_dim))

    def key(self, obs) -> bytes:
        bits = self.projection @ np.asarray(obs, dtype=np.float64) >= 0.0
        return np.packbits(bits).tobytes()


def simhash_key(hasher: SimHasher, obs) -> bytes:
    return hasher.key(obs)


def combine(r_ext, r_int, lam):
    """Training reward r_ext + lam * r_int."""
    if lam < 0:
        raise ConfigError(f"lambda must be >= 0, got {lam}")
    return r_ext + lam * r_int


class RunningNormalizer:
    """Streaming mean/variance (Chan's parallel update over sample batches).

    Observations normalize to (x - mean)/sqrt(var + 1e-8); rewards divide by
    the running standard deviation without centering. Before any update both
    transforms are the identity.
    """

    def __init__(self, dim=None):
        self._scalar = dim is None
        self.count = 0.0
        self.mean = 0.0 if self._scalar else np.zeros(dim)
        self.m2 = 0.0 if self._scalar else np.zeros(dim)

    def update(self, samples):
        x = np.asarray(samples, dtype=np.float64)
        x = x.reshape(-1, 1) if self._scalar else np.atleast_2d(x)
        n = x.shape[0]
        batch_mean = x.mean(axis=0)
        batch_m2 = ((x - batch_mean) ** 2).sum(axis=0)
        if self._scalar:
            batch_mean, batch_m2 = float(batch_mean[0]), float(batch_m2[0])
        if self.count == 0.0:
            self.mean, self.m2, self.count = batch_mean, batch_m2, float(n)
            return
        delta = batch_mean - self.mean
        total = self.count + n
        self.mean = self.mean + delta * (n / total)
        self.m2 = self.m2 + batch_m2 + delta**2 * (self.count * n / total)
        self.count = total

    @property
    def variance(self):
        if self.count == 0.0:
            return np.zeros_like(self.mean) if not np.isscalar(self.mean) else 0.0
        return self.m2 / self.count

    def normalize_obs(self, x):
        if self.count == 0.0:
            return np.asarray(x, dtype=np.float64)
        return (np.asarray(x, dtype=np.float64) - self.mean) / np.sqrt(self.variance + 1e-8)

    def normalize_reward(self, r):
        if self.count == 0.0:
            return r
        return r / np.sqrt(self.variance + 1e-8)


def _embed_net(obs_dim, rng):
    return DenseNet([obs_dim, *EMBED_HIDDEN, EMBED_DIM], activation="relu", rng=rng)


class IcmModel:
    """Forward/inverse dynamics over a learned state embedding.

    The bonus for a transition is the squared error of the forward model's
    next-embedding prediction, measured before the joint gradient step.
    """

    def __init__(self, obs_dim, n_actions, lr, forward_coef, inverse_coef, rng):
        self.n_actions = n_actions
        self.lr = lr
        self.forward_coef = forward_coef
        self.inverse_coef = inverse_coef
        self.embed = _embed_net(obs_dim, rng)
        self.fwd = DenseNet([EMBED_DIM + n_actions, *HEAD_HIDDEN, EMBED_DIM], activation="relu", rng=rng)
        self.inv = DenseNet([2 * EMBED_DIM, *HEAD_HIDDEN, n_actions], activation="relu", rng=rng)

    def embedding_pair(self, obs, next_obs):
        return self.embed.forward_batch(obs), self.embed.forward_batch(next_obs)

    def prediction_errors(self, emb, actions, emb_next):
        a_hot = np.zeros((len(actions), self.n_actions))
        a_hot[np.arange(len(actions)), actions] = 1.0
        pred = self.fwd.forward_batch(np.concatenate([emb, a_hot], axis=1))
        return np.sum((pred - emb_next) ** 2, axis=1), a_hot, pred

    def rewards_and_update(self, obs, actions, next_obs):
        """Per-transition forward errors, then one Adam step on the joint loss."""
        emb, emb_next = self.embedding_pair(obs, next_obs)
        errors, _, _ = self.prediction_errors(emb, actions, emb_next)
        self.train_step(obs, actions, next_obs)
        return errors

    def joint_grads(self, obs, actions, next_obs):
        """Analytic gradients of forward_coef * forward MSE plus
        inverse_coef * inverse cross-entropy for all three nets."""
        batch = len(actions)
        emb, emb_next = self.embedding_pair(obs, next_obs)
        _, a_hot, pred = self.prediction_errors(emb, actions, emb_next)
        diff = pred - emb_next
        fwd_loss = self.forward_coef * float(np.mean(np.sum(diff**2, axis=1)))
        logits = self.inv.forward_batch(np.concatenate([emb, emb_next], axis=1))
        logp = log_softmax_rows(logits)
        inv_loss = self.inverse_coef * float(-np.mean(logp[np.arange(batch), actions]))
        if not np.isfinite(fwd_loss + inv_loss):
            raise DivergenceError("non-finite curiosity loss")
        # forward branch
        d_pred = self.forward_coef * 2.0 * diff / batch
        fwd_grads, d_fwd_in = self.fwd.backward_batch(
            np.concatenate([emb, a_hot], axis=1), d_pred, need_input_grad=True
        )
        d_emb = d_fwd_in[:, :EMBED_DIM].copy()
        d_emb_next = -d_pred
        # inverse branch
        probs = softmax_rows(logits)
        d_logits = probs.copy()
        d_logits[np.arange(batch), actions] -= 1.0
        d_logits *= self.inverse_coef / batch
        inv_grads, d_inv_in = self.inv.backward_batch(
            np.concatenate([emb, emb_next], axis=1), d_logits, need_input_grad=True
        )
        d_emb += d_inv_in[:, :EMBED_DIM]
        d_emb_next += d_inv_in[:, EMBED_DIM:]
        emb_grads, _ = self.embed.backward_batch(obs, d_emb)
        emb_grads_next, _ = self.embed.backward_batch(next_obs, d_emb_next)
        emb_grads = [g + gn for g, gn in zip(emb_grads, emb_grads_next)]
        return (emb_grads, fwd_grads, inv_grads), fwd_loss + inv_loss

    def joint_loss(self, obs, actions, next_obs) -> float:
        batch = len(actions)
        emb, emb_next = self.embedding_pair(obs, next_obs)
        _, _, pred = self.prediction_errors(emb, actions, emb_next)
        fwd_loss = self.forward_coef * float(np.mean(np.sum((pred - emb_next) ** 2, axis=1)))
        logits = self.inv.forward_batch(np.concatenate([emb, emb_next], axis=1))
        logp = log_softmax_rows(logits)
        inv_loss = self.inverse_coef * float(-np.mean(logp[np.arange(batch), actions]))
        return fwd_loss + inv_loss

    def train_step(self, obs, actions, next_obs):
        (emb_grads, fwd_grads, inv_grads), loss = self.joint_grads(obs, actions, next_obs)
        adam_step(self.embed, emb_grads, self.lr, eps=1e-8)
        adam_step(self.fwd, fwd_grads, self.lr, eps=1e-8)
        adam_step(self.inv, inv_grads, self.lr, eps=1e-8)
        return loss


def icm_reward_and_update(model: IcmModel, s, a, s_next):
    return float(model.rewards_and_update(np.atleast_2d(s), [int(a)], np.atleast_2d(s_next))[0])


class RndModel:
    """Trainable predictor chasing a frozen random target embedding."""

    def __init__(self, obs_dim, lr, rng):
        self.lr = lr
        self.target = _embed_net(obs_dim, rng)
        self.predictor = _embed_net(obs_dim, rng)

    def rewards_and_update(self, obs):
        obs = np.atleast_2d(obs)
        tgt = self.target.forward_batch(obs)
        pred = self.predictor.forward_batch(obs)
        diff = pred - tgt
        errors = np.sum(diff**2, axis=1)
        if not np.all(np.isfinite(errors)):
            raise DivergenceError("non-finite distillation error")
        grads, _ = self.predictor.backward_batch(obs, 2.0 * diff / obs.shape[0])
        adam_step(self.predictor, grads, self.lr, eps=1e-8)
        return errors


def rnd_reward_and_update(model: RndModel, s):
    return float(model.rewards_and_update(s)[0])


class RideModel:
    """Embedding-change bonus scaled down by an episodic visit count of the
    destination state; the embedding trains on the same forward/inverse
    objective as the curiosity module."""

    def __init__(self, obs_dim, n_actions, lr, forward_coef, inverse_coef, num_lanes, rng):
        self.icm = IcmModel(obs_dim, n_actions, lr, forward_coef, inverse_coef, rng)
        self.episodic = [CountTable(1.0) for _ in range(num_lanes)]

    def reset_lane(self, lane):
        self.episodic[lane].clear()

    def rewards_and_update(self, obs, actions, next_obs):
        emb, emb_next = self.icm.embedding_pair(obs, next_obs)
        change = np.sum((emb_next - emb) ** 2, axis=1)
        rewards = np.empty(len(actions))
        for k in range(len(actions)):
            key = one_hot_key(next_obs[k])
            n = self.episodic[k].counts.get(key, 0.0) + 1.0
            self.episodic[k].counts[key] = n
            rewards[k] = change[k] / np.sqrt(n)
        self.icm.train_step(obs, actions, next_obs)
        return rewards


def ride_reward(model: RideModel, s, a, s_next, lane=0):
    emb, emb_next = model.icm.embedding_pair(np.atleast_2d(s), np.atleast_2d(s_next))
    change = float(np.sum((emb_next - emb) ** 2))
    key = one_hot_key(s_next)
    n = model.episodic[lane].counts.get(key, 0.0) + 1.0
    model.episodic[lane].counts[key] = n
    model.icm.train_step(np.atleast_2d(s), [int(a)], np.atleast_2d(s_next))
    return change / np.sqrt(n)


class _Driver:
    """Per-step bonus interface the trainers consume."""

    def rewards(self, obs, actions, step_obs, dones):
        raise NotImplementedError

    def reset_lane(self, lane):
        pass


class NoIntrinsic(_Driver):
    def rewards(self, obs, actions, step_obs, dones):
        return np.zeros(len(actions))


class CountIntrinsic(_Driver):
    def __init__(self, increment):
        self.table = CountTable(increment)

    def rewards(self, obs, actions, step_obs, dones):
        return np.array([self.table.reward(one_hot_key(obs[k])) for k in range(len(actions))])


class HashCountIntrinsic(_Driver):
    def __init__(self, increment, hash_k, obs_dim, rng):
        self.table = CountTable(increment)
        self.hasher = SimHasher(hash_k, obs_dim, rng)

    def rewards(self, obs, actions, step_obs, dones):
        return np.array([self.table.reward(self.hasher.key(obs[k])) for k in range(len(actions))])


class IcmIntrinsic(_Driver):
    def __init__(self, model: IcmModel):
        self.model = model

    def rewards(self, obs, actions, step_obs, dones):
        return self.model.rewards_and_update(obs, actions, step_obs)


class RndIntrinsic(_Driver):
    def __init__(self, model: RndModel):
        self.model = model

    def rewards(self, obs, actions, step_obs, dones):
        return self.model.rewards_and_update(obs)


class RideIntrinsic(_Driver):
    def __init__(self, model: RideModel):
        self.model = model

    def rewards(self, obs, actions, step_obs, dones):
        return self.model.rewards_and_update(obs, actions, step_obs)

    def reset_lane(self, lane):
        self.model.reset_lane(lane)


def make_intrinsic(name, obs_dim, n_actions, num_lanes, rng, *, increment=1.0,
                   intrinsic_lr=1e-5, forward_coef=1.0, inverse_coef=1.0, hash_k=16):
    if name == "none":
        return NoIntrinsic()
    if name == "count":
        return CountIntrinsic(increment)
    if name == "hash_count":
        return HashCountIntrinsic(increment, hash_k, obs_dim, rng)
    if name == "icm":
        return IcmIntrinsic(IcmModel(obs_dim, n_actions, intrinsic_lr, forward_coef, inverse_coef, rng))
    if name == "rnd":
        return RndIntrinsic(RndModel(obs_dim, intrinsic_lr, rng))
    if name == "ride":
        return RideIntrinsic(
            RideModel(obs_dim, n_actions, intrinsic_lr, forward_coef, inverse_coef, num_lanes, rng)
        )
    raise ConfigError(f"unknown intrinsic reward {name!r}")
