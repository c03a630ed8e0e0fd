"""Experiment configuration: typed dataclasses, flat key=value parsing with
per-(env, algorithm) defaults, canonical snapshots, and sensitivity sweeps.

Defaults are the best-identified settings for each environment family; the
bundled tables cover every env x algorithm x bonus combination so any run
resolves with no config file at all.
"""

from __future__ import annotations

from dataclasses import dataclass, field

from .nn import ConfigError

ENVS = ("deepsea", "hallway")
ALGOS = ("a2c", "ppo", "dqn", "dea2c", "deppo", "dedqn")
INTRINSICS = ("none", "count", "hash_count", "icm", "rnd", "ride")

LAMBDA_SWEEP = (0.01, 0.1, 0.25, 0.5, 1.0, 2.0, 4.0, 10.0, 100.0)
COUNT_INCREMENT_SWEEP = (0.01, 0.1, 0.2, 1.0, 5.0, 10.0, 100.0)
INTRINSIC_LR_SWEEP = (1e-9, 1e-8, 2e-8, 1e-7, 5e-7, 1e-6, 1e-5, 1e-4, 1e-3)


@dataclass
class EnvConfig:
    name: str = "deepsea"
    size: int = 10
    n_l: int = 10
    n_r: int = 0
    env_seed: int = 0


@dataclass
class AlgoConfig:
    name: str = "a2c"
    learning_rate: float = 1e-3
    entropy_coef: float = 1e-4
    value_coef: float = 0.5
    max_grad_norm: float = 0.5
    adam_eps: float = 1e-3
    n_steps: int = 5
    activation: str = "relu"
    # clipped-surrogate family
    clip_ratio: float | None = None
    epochs: int | None = None
    minibatches: int | None = None
    clip_value_loss: bool | None = None
    # Q family
    tau: float | None = None
    batch_size: int | None = None
    buffer_capacity: int | None = None


@dataclass
class ExploreConfig:
    """Behavior policy hyperparameters for the decoupled algorithms; always an
    advantage actor-critic, defaulting to the environment's best baseline."""

    learning_rate: float = 1e-3
    entropy_coef: float = 1e-4
    value_coef: float = 0.5
    max_grad_norm: float = 0.5
    adam_eps: float = 1e-3
    n_steps: int = 5
    activation: str = "relu"


@dataclass
class IntrinsicConfig:
    name: str = "none"
    lam: float = 1.0
    count_increment: float = 1.0
    intrinsic_lr: float = 1e-5
    forward_coef: float = 1.0
    inverse_coef: float = 1.0
    hash_k: int = 16


@dataclass
class DecoupledConfig:
    t_dec: int = 1
    alpha_beta: float = 0.0
    alpha_e: float = 0.0
    retrace: bool = False
    pure_intrinsic: bool = False


@dataclass
class ScheduleConfig:
    episodes: int = 100_000
    eval_every: int = 1000
    eval_episodes: int = 8
    seeds: tuple = (0, 1, 2, 3, 4)
    num_envs: int = 4


@dataclass
class ExperimentConfig:
    env: EnvConfig = field(default_factory=EnvConfig)
    algo: AlgoConfig = field(default_factory=AlgoConfig)
    explore: ExploreConfig | None = None
    intrinsic: IntrinsicConfig = field(default_factory=IntrinsicConfig)
    decoupled: DecoupledConfig | None = None
    schedule: ScheduleConfig = field(default_factory=ScheduleConfig)
    gamma: float = 0.99
    normalize_obs: bool = False
    normalize_rewards: bool = False

    def task_id(self) -> str:
        if self.env.name == "deepsea":
            return f"deepsea-{self.env.size}"
        return f"hallway-{self.env.n_l}-{self.env.n_r}"

    def variant_id(self) -> str:
        return f"{self.algo.name}-{self.intrinsic.name}"

    def is_decoupled(self) -> bool:
        return self.algo.name.startswith("de")

    def to_text(self) -> str:
        lines = []
        for key, value in sorted(_flatten(self).items()):
            lines.append(f"{key} = {_format_value(value)}")
        return "\n".join(lines) + "\n"


# Best-identified baseline settings per environment family.
_A2C = {
    "deepsea": dict(learning_rate=1e-3, activation="relu", entropy_coef=1e-4,
                    max_grad_norm=0.5, value_coef=0.5, adam_eps=1e-3, n_steps=5),
    "hallway": dict(learning_rate=3e-4, activation="tanh", entropy_coef=1e-4,
                    max_grad_norm=0.5, value_coef=0.5, adam_eps=1e-3, n_steps=5),
}
_PPO = {
    "deepsea": dict(learning_rate=1e-3, activation="tanh", entropy_coef=1e-4,
                    max_grad_norm=0.5, value_coef=0.5, adam_eps=1e-3, n_steps=10,
                    clip_ratio=0.1, epochs=10, minibatches=4, clip_value_loss=True),
    "hallway": dict(learning_rate=3e-4, activation="relu", entropy_coef=7e-4,
                    max_grad_norm=0.5, value_coef=0.5, adam_eps=1e-3, n_steps=10,
                    clip_ratio=0.1, epochs=10, minibatches=4, clip_value_loss=True),
}
_DQN = {
    "deepsea": dict(learning_rate=1e-3, activation="tanh", tau=0.01, batch_size=256,
                    buffer_capacity=100_000, max_grad_norm=0.5, adam_eps=1e-3,
                    n_steps=5, entropy_coef=0.0, value_coef=0.5),
    "hallway": dict(learning_rate=1e-4, activation="relu", tau=0.001, batch_size=512,
                    buffer_capacity=100_000, max_grad_norm=0.5, adam_eps=1e-3,
                    n_steps=5, entropy_coef=0.0, value_coef=0.5),
}
_DEA2C = {
    "deepsea": dict(learning_rate=1e-3, activation="relu", entropy_coef=1e-6,
                    max_grad_norm=0.5, value_coef=0.5, adam_eps=1e-3, n_steps=5),
    "hallway": dict(learning_rate=3e-4, activation="tanh", entropy_coef=1e-5,
                    max_grad_norm=0.5, value_coef=0.5, adam_eps=1e-3, n_steps=5),
}
_DEPPO = {
    "deepsea": dict(learning_rate=1e-3, activation="relu", entropy_coef=1e-4,
                    max_grad_norm=0.5, value_coef=0.5, adam_eps=1e-3, n_steps=10,
                    clip_ratio=0.1, epochs=10, minibatches=4, clip_value_loss=True),
    "hallway": dict(learning_rate=3e-4, activation="relu", entropy_coef=1e-6,
                    max_grad_norm=0.5, value_coef=0.5, adam_eps=1e-3, n_steps=10,
                    clip_ratio=0.1, epochs=10, minibatches=4, clip_value_loss=True),
}
_ALGO_TABLE = {"a2c": _A2C, "ppo": _PPO, "dqn": _DQN,
               "dea2c": _DEA2C, "deppo": _DEPPO, "dedqn": _DQN}

# retrace is the identified setting only for the actor-critic variant on hallway
_RETRACE_DEFAULT = {("dea2c", "hallway"): True}

# per (algorithm, env): learning rate and loss coefficients of the deep bonus models
_ICM = {
    ("a2c", "deepsea"): (1e-5, 5.0, 1.0), ("a2c", "hallway"): (1e-6, 5.0, 0.5),
    ("ppo", "deepsea"): (1e-5, 5.0, 1.0), ("ppo", "hallway"): (1e-5, 0.5, 10.0),
    ("dea2c", "deepsea"): (1e-5, 5.0, 1.0), ("dea2c", "hallway"): (1e-6, 5.0, 0.5),
    ("deppo", "deepsea"): (1e-5, 5.0, 1.0), ("deppo", "hallway"): (1e-5, 0.5, 10.0),
    ("dedqn", "deepsea"): (1e-5, 5.0, 1.0), ("dedqn", "hallway"): (1e-5, 0.5, 10.0),
    ("dqn", "deepsea"): (1e-5, 5.0, 1.0), ("dqn", "hallway"): (1e-5, 0.5, 10.0),
}
_RND_LR = {
    ("a2c", "deepsea"): 1e-7, ("a2c", "hallway"): 1e-5,
    ("ppo", "deepsea"): 1e-7, ("ppo", "hallway"): 5e-7,
}
_RIDE = {
    ("a2c", "deepsea"): (1e-5, 0.5, 10.0), ("a2c", "hallway"): (1e-5, 10.0, 0.5),
    ("ppo", "deepsea"): (5e-6, 10.0, 1.0), ("ppo", "hallway"): (1e-7, 1.0, 1.0),
}


def _intrinsic_defaults(intrinsic_name, algo_name, env_name):
    cfg = IntrinsicConfig(name=intrinsic_name)
    if intrinsic_name in ("icm",):
        lr, fwd, inv = _ICM[(algo_name, env_name)]
        cfg.intrinsic_lr, cfg.forward_coef, cfg.inverse_coef = lr, fwd, inv
    elif intrinsic_name == "rnd":
        # the decoupled variants train the behavior policy with the baseline
        # actor-critic, so they inherit its bonus-model settings
        key = (algo_name if (algo_name, env_name) in _RND_LR else "a2c", env_name)
        cfg.intrinsic_lr = _RND_LR[key]
    elif intrinsic_name == "ride":
        key = (algo_name if (algo_name, env_name) in _RIDE else "a2c", env_name)
        cfg.intrinsic_lr, cfg.forward_coef, cfg.inverse_coef = _RIDE[key]
    return cfg


def default_config(env_name="deepsea", algo_name="a2c", intrinsic_name="none") -> ExperimentConfig:
    if env_name not in ENVS:
        raise ConfigError(f"env.name must be one of {ENVS}, got {env_name!r}")
    if algo_name not in ALGOS:
        raise ConfigError(f"algo.name must be one of {ALGOS}, got {algo_name!r}")
    if intrinsic_name not in INTRINSICS:
        raise ConfigError(f"intrinsic.name must be one of {INTRINSICS}, got {intrinsic_name!r}")
    algo = AlgoConfig(name=algo_name, **_ALGO_TABLE[algo_name][env_name])
    decoupled = None
    explore = None
    if algo_name.startswith("de"):
        explore = ExploreConfig(**_A2C[env_name])
        decoupled = DecoupledConfig(retrace=_RETRACE_DEFAULT.get((algo_name, env_name), False))
    if algo_name == "a2c" and env_name == "deepsea":
        norm_obs = norm_rew = True
    elif algo_name.startswith("de"):
        # the behavior policy inherits the baseline actor-critic preprocessing
        norm_obs = norm_rew = env_name == "deepsea"
    else:
        norm_obs = norm_rew = False
    return ExperimentConfig(
        env=EnvConfig(name=env_name),
        algo=algo,
        explore=explore,
        intrinsic=_intrinsic_defaults(intrinsic_name, algo_name, env_name),
        decoupled=decoupled,
        schedule=ScheduleConfig(),
        normalize_obs=norm_obs,
        normalize_rewards=norm_rew,
    )


def _parse_bool(raw, key):
    low = raw.strip().lower()
    if low in ("true", "1", "yes"):
        return True
    if low in ("false", "0", "no"):
        return False
    raise ConfigError(f"{key}: expected a boolean, got {raw!r}")


def _parse_int(raw, key):
    try:
        return int(raw)
    except ValueError:
        raise ConfigError(f"{key}: expected an integer, got {raw!r}") from None


def _parse_float(raw, key):
    try:
        return float(raw)
    except ValueError:
        raise ConfigError(f"{key}: expected a number, got {raw!r}") from None


def _parse_seeds(raw, key):
    try:
        return tuple(int(tok) for tok in raw.replace(" ", "").split(",") if tok != "")
    except ValueError:
        raise ConfigError(f"{key}: expected comma-separated integers, got {raw!r}") from None


def _positive(value, key, kind="value"):
    if value <= 0:
        raise ConfigError(f"{key}: {kind} must be positive, got {value}")
    return value


def _nonnegative(value, key):
    if value < 0:
        raise ConfigError(f"{key}: must be >= 0, got {value}")
    return value


def _flatten(cfg: ExperimentConfig) -> dict:
    out = {
        "env.name": cfg.env.name, "env.env_seed": cfg.env.env_seed,
        "algo.name": cfg.algo.name,
        "algo.learning_rate": cfg.algo.learning_rate,
        "algo.entropy_coef": cfg.algo.entropy_coef,
        "algo.value_coef": cfg.algo.value_coef,
        "algo.max_grad_norm": cfg.algo.max_grad_norm,
        "algo.adam_eps": cfg.algo.adam_eps,
        "algo.n_steps": cfg.algo.n_steps,
        "algo.activation": cfg.algo.activation,
        "intrinsic.name": cfg.intrinsic.name,
        "intrinsic.lambda": cfg.intrinsic.lam,
        "intrinsic.count_increment": cfg.intrinsic.count_increment,
        "intrinsic.intrinsic_lr": cfg.intrinsic.intrinsic_lr,
        "intrinsic.forward_coef": cfg.intrinsic.forward_coef,
        "intrinsic.inverse_coef": cfg.intrinsic.inverse_coef,
        "intrinsic.hash_k": cfg.intrinsic.hash_k,
        "schedule.episodes": cfg.schedule.episodes,
        "schedule.eval_every": cfg.schedule.eval_every,
        "schedule.eval_episodes": cfg.schedule.eval_episodes,
        "schedule.seeds": ",".join(str(s) for s in cfg.schedule.seeds),
        "schedule.num_envs": cfg.schedule.num_envs,
        "gamma": cfg.gamma,
        "normalize_obs": cfg.normalize_obs,
        "normalize_rewards": cfg.normalize_rewards,
    }
    if cfg.env.name == "deepsea":
        out["env.size"] = cfg.env.size
    else:
        out["env.n_l"] = cfg.env.n_l
        out["env.n_r"] = cfg.env.n_r
    if cfg.algo.name in ("ppo", "deppo"):
        out["algo.clip_ratio"] = cfg.algo.clip_ratio
        out["algo.epochs"] = cfg.algo.epochs
        out["algo.minibatches"] = cfg.algo.minibatches
        out["algo.clip_value_loss"] = cfg.algo.clip_value_loss
    if cfg.algo.name in ("dqn", "dedqn"):
        out["algo.tau"] = cfg.algo.tau
        out["algo.batch_size"] = cfg.algo.batch_size
        out["algo.buffer_capacity"] = cfg.algo.buffer_capacity
    if cfg.is_decoupled():
        out["decoupled.t_dec"] = cfg.decoupled.t_dec
        out["decoupled.alpha_beta"] = cfg.decoupled.alpha_beta
        out["decoupled.alpha_e"] = cfg.decoupled.alpha_e
        out["decoupled.retrace"] = cfg.decoupled.retrace
        out["decoupled.pure_intrinsic"] = cfg.decoupled.pure_intrinsic
        out["explore.learning_rate"] = cfg.explore.learning_rate
        out["explore.entropy_coef"] = cfg.explore.entropy_coef
        out["explore.value_coef"] = cfg.explore.value_coef
        out["explore.max_grad_norm"] = cfg.explore.max_grad_norm
        out["explore.adam_eps"] = cfg.explore.adam_eps
        out["explore.n_steps"] = cfg.explore.n_steps
        out["explore.activation"] = cfg.explore.activation
    return out


def _format_value(value) -> str:
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, float):
        return repr(value)
    return str(value)


def parse_pairs(text: str) -> dict:
    """Raw key=value pairs from a flat config document; '#' starts a comment."""
    pairs = {}
    for lineno, line in enumerate(text.splitlines(), start=1):
        stripped = line.split("#", 1)[0].strip()
        if not stripped:
            continue
        if "=" not in stripped:
            raise ConfigError(f"line {lineno}: expected 'key = value', got {line!r}")
        key, value = stripped.split("=", 1)
        pairs[key.strip()] = value.strip()
    return pairs


def _apply_key(cfg: ExperimentConfig, key: str, raw: str):
    env, algo, intr = cfg.env, cfg.algo, cfg.intrinsic
    if key == "env.name" or key == "algo.name" or key == "intrinsic.name":
        return  # consumed during default resolution
    if key == "env.size":
        if env.name != "deepsea":
            raise ConfigError(f"{key}: only valid for env.name = deepsea")
        env.size = _positive(_parse_int(raw, key), key)
    elif key == "env.n_l":
        if env.name != "hallway":
            raise ConfigError(f"{key}: only valid for env.name = hallway")
        env.n_l = _positive(_parse_int(raw, key), key)
    elif key == "env.n_r":
        if env.name != "hallway":
            raise ConfigError(f"{key}: only valid for env.name = hallway")
        env.n_r = _nonnegative(_parse_int(raw, key), key)
    elif key == "env.env_seed":
        env.env_seed = _parse_int(raw, key)
    elif key == "algo.learning_rate":
        algo.learning_rate = _positive(_parse_float(raw, key), key)
    elif key == "algo.entropy_coef":
        algo.entropy_coef = _nonnegative(_parse_float(raw, key), key)
    elif key == "algo.value_coef":
        algo.value_coef = _nonnegative(_parse_float(raw, key), key)
    elif key == "algo.max_grad_norm":
        algo.max_grad_norm = _positive(_parse_float(raw, key), key)
    elif key == "algo.adam_eps":
        algo.adam_eps = _positive(_parse_float(raw, key), key)
    elif key == "algo.n_steps":
        algo.n_steps = _positive(_parse_int(raw, key), key)
    elif key == "algo.activation":
        if raw not in ("tanh", "relu"):
            raise ConfigError(f"{key}: expected tanh or relu, got {raw!r}")
        algo.activation = raw
    elif key == "algo.clip_ratio" and algo.name in ("ppo", "deppo"):
        algo.clip_ratio = _positive(_parse_float(raw, key), key)
    elif key == "algo.epochs" and algo.name in ("ppo", "deppo"):
        algo.epochs = _positive(_parse_int(raw, key), key)
    elif key == "algo.minibatches" and algo.name in ("ppo", "deppo"):
        algo.minibatches = _positive(_parse_int(raw, key), key)
    elif key == "algo.clip_value_loss" and algo.name in ("ppo", "deppo"):
        algo.clip_value_loss = _parse_bool(raw, key)
    elif key == "algo.tau" and algo.name in ("dqn", "dedqn"):
        algo.tau = _positive(_parse_float(raw, key), key)
    elif key == "algo.batch_size" and algo.name in ("dqn", "dedqn"):
        algo.batch_size = _positive(_parse_int(raw, key), key)
    elif key == "algo.buffer_capacity" and algo.name in ("dqn", "dedqn"):
        algo.buffer_capacity = _positive(_parse_int(raw, key), key)
    elif key == "intrinsic.lambda":
        intr.lam = _nonnegative(_parse_float(raw, key), key)
    elif key == "intrinsic.count_increment":
        intr.count_increment = _positive(_parse_float(raw, key), key)
    elif key == "intrinsic.intrinsic_lr":
        intr.intrinsic_lr = _positive(_parse_float(raw, key), key)
    elif key == "intrinsic.forward_coef":
        intr.forward_coef = _nonnegative(_parse_float(raw, key), key)
    elif key == "intrinsic.inverse_coef":
        intr.inverse_coef = _nonnegative(_parse_float(raw, key), key)
    elif key == "intrinsic.hash_k":
        intr.hash_k = _positive(_parse_int(raw, key), key)
    elif key.startswith("decoupled.") and cfg.is_decoupled():
        dec = cfg.decoupled
        if key == "decoupled.t_dec":
            dec.t_dec = _positive(_parse_int(raw, key), key)
        elif key == "decoupled.alpha_beta":
            dec.alpha_beta = _nonnegative(_parse_float(raw, key), key)
        elif key == "decoupled.alpha_e":
            dec.alpha_e = _nonnegative(_parse_float(raw, key), key)
        elif key == "decoupled.retrace":
            dec.retrace = _parse_bool(raw, key)
        elif key == "decoupled.pure_intrinsic":
            dec.pure_intrinsic = _parse_bool(raw, key)
        else:
            raise ConfigError(f"unknown config key {key!r}")
    elif key.startswith("explore.") and cfg.is_decoupled():
        exp = cfg.explore
        if key == "explore.learning_rate":
            exp.learning_rate = _positive(_parse_float(raw, key), key)
        elif key == "explore.entropy_coef":
            exp.entropy_coef = _nonnegative(_parse_float(raw, key), key)
        elif key == "explore.value_coef":
            exp.value_coef = _nonnegative(_parse_float(raw, key), key)
        elif key == "explore.max_grad_norm":
            exp.max_grad_norm = _positive(_parse_float(raw, key), key)
        elif key == "explore.adam_eps":
            exp.adam_eps = _positive(_parse_float(raw, key), key)
        elif key == "explore.n_steps":
            exp.n_steps = _positive(_parse_int(raw, key), key)
        elif key == "explore.activation":
            if raw not in ("tanh", "relu"):
                raise ConfigError(f"{key}: expected tanh or relu, got {raw!r}")
            exp.activation = raw
        else:
            raise ConfigError(f"unknown config key {key!r}")
    elif key == "schedule.episodes":
        cfg.schedule.episodes = _nonnegative(_parse_int(raw, key), key)
    elif key == "schedule.eval_every":
        cfg.schedule.eval_every = _positive(_parse_int(raw, key), key)
    elif key == "schedule.eval_episodes":
        cfg.schedule.eval_episodes = _positive(_parse_int(raw, key), key)
    elif key == "schedule.seeds":
        seeds = _parse_seeds(raw, key)
        if not seeds:
            raise ConfigError(f"{key}: needs at least one seed")
        cfg.schedule.seeds = seeds
    elif key == "schedule.num_envs":
        cfg.schedule.num_envs = _positive(_parse_int(raw, key), key)
    elif key == "gamma":
        value = _parse_float(raw, key)
        if not 0.0 <= value < 1.0:
            raise ConfigError(f"gamma must lie in [0, 1), got {value}")
        cfg.gamma = value
    elif key == "normalize_obs":
        cfg.normalize_obs = _parse_bool(raw, key)
    elif key == "normalize_rewards":
        cfg.normalize_rewards = _parse_bool(raw, key)
    else:
        raise ConfigError(f"unknown config key {key!r}")


def parse_config(text: str = "", overrides=()) -> ExperimentConfig:
    """Resolve a config: override flags beat document values beat defaults."""
    pairs = parse_pairs(text)
    for item in overrides:
        if "=" not in item:
            raise ConfigError(f"override {item!r} is not key=value")
        key, value = item.split("=", 1)
        pairs[key.strip()] = value.strip()
    env_name = pairs.get("env.name", "deepsea")
    algo_name = pairs.get("algo.name", "a2c")
    intrinsic_name = pairs.get("intrinsic.name", "none")
    cfg = default_config(env_name, algo_name, intrinsic_name)
    for key, raw in pairs.items():
        _apply_key(cfg, key, raw)
    return cfg


def generate_sweep(kind: str, base: ExperimentConfig):
    """Sensitivity grids: bonus scale or the decay-rate control of the bonus.

    Each returned config is an independent deep copy differing from the base
    only in the swept field.
    """
    import copy

    def with_intrinsic(field_name, value):
        cfg = copy.deepcopy(base)
        setattr(cfg.intrinsic, field_name, value)
        return cfg

    if kind == "lambda":
        return [with_intrinsic("lam", v) for v in LAMBDA_SWEEP]
    if kind == "decay":
        if base.intrinsic.name == "none":
            raise ConfigError("decay sweep needs an intrinsic reward")
        if base.intrinsic.name in ("count", "hash_count"):
            return [with_intrinsic("count_increment", v) for v in COUNT_INCREMENT_SWEEP]
        return [with_intrinsic("intrinsic_lr", v) for v in INTRINSIC_LR_SWEEP]
    raise ConfigError(f"unknown sweep kind {kind!r} (expected 'lambda' or 'decay')")


def swept_key(kind: str, intrinsic_name: str) -> str:
    if kind == "lambda":
        return "intrinsic.lambda"
    if intrinsic_name in ("count", "hash_count"):
        return "intrinsic.count_increment"
    return "intrinsic.intrinsic_lr"
