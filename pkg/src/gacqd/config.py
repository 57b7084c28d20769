"""Run configuration: defaults, validation, and the flat key=value file format.

Every knob of a run lives here so one object fully describes an experiment;
the resolved configuration is echoed into every output file header. Counter
names follow the study vocabulary: B offspring per generation, J generations,
G update loops of G_critic critic and G_actor actor steps, G_PG steps per
policy-gradient offspring, p_pg the PG share of the batch.
"""

from dataclasses import dataclass, fields, replace

from .errors import ConfigError

_TUPLE_FIELDS = ("policy_hidden", "critic_hidden", "grid_dims")

# study-vocabulary aliases accepted in config files
ALIASES = {
    "B": "batch_size",
    "J": "generations",
    "T": "episode_length",
    "G": "g",
    "G_critic": "g_critic",
    "G_actor": "g_actor",
    "G_PG": "g_pg",
}


@dataclass(frozen=True)
class RunConfig:
    # environment
    env: str = "point_gait"
    episode_length: int = 100
    dt: float = 0.05
    drag: float = 0.1
    torque_cost: float = 0.1
    # networks and trainer
    family: str = "td3"
    policy_hidden: tuple = (64, 64)
    critic_hidden: tuple = (256, 256)
    critic_lr: float = 3e-4
    actor_lr: float = 3e-4
    gamma: float = 0.99
    tau: float = 0.005
    policy_noise: float = 0.2
    noise_clip: float = 0.5
    alpha_init: float = 1.0
    dropout_rate: float = 0.01
    layer_norm: bool = True
    # generation loop
    batch_size: int = 32
    generations: int = 300
    g: int = 150
    g_critic: int = 2
    g_actor: int = 1
    sigma_iso: float = 0.01
    sigma_line: float = 0.1
    p_pg: float = 0.5
    g_pg: int = 100
    pg_lr: float = 1e-3
    grid_dims: tuple = (50, 50)
    buffer_capacity: int = 100_000
    transitions_batch: int = 64
    seed: int = 0
    n_init: int = 0  # 0 means auto: 2 * batch_size
    eval_mode: str = "deterministic"
    eval_actor: bool = True
    log_training: bool = False
    # single-policy harness
    total_steps: int = 5000
    warmup_steps: int = 256
    eval_interval: int = 250
    exploration_noise: float = 0.1

    @property
    def resolved_n_init(self) -> int:
        return self.n_init if self.n_init > 0 else 2 * self.batch_size


_ALIAS_OF = {canonical: alias for alias, canonical in ALIASES.items()}


def _require(ok: bool, key: str, why: str):
    if not ok:
        shown = key if key not in _ALIAS_OF else f"{key} ({_ALIAS_OF[key]})"
        raise ConfigError(f"config key {shown!r} is invalid: {why}")


def validate(cfg: RunConfig) -> RunConfig:
    _require(cfg.env in ("point_gait", "point_nav", "bandit"), "env",
             f"unknown environment {cfg.env!r}")
    _require(cfg.family in ("td3", "sac", "droq"), "family",
             f"unknown trainer family {cfg.family!r}")
    _require(cfg.eval_mode in ("deterministic", "stochastic"), "eval_mode",
             "must be deterministic or stochastic")
    for key in ("episode_length", "batch_size", "buffer_capacity",
                "transitions_batch", "total_steps", "eval_interval"):
        _require(getattr(cfg, key) >= 1, key, "must be positive")
    for key in ("generations", "g", "g_critic", "g_actor", "g_pg", "n_init",
                "warmup_steps", "seed"):
        _require(getattr(cfg, key) >= 0, key, "must be non-negative")
    _require(0.0 <= cfg.p_pg <= 1.0, "p_pg", "must lie in [0, 1]")
    _require(0.0 <= cfg.dropout_rate < 1.0, "dropout_rate", "must lie in [0, 1)")
    _require(0.0 <= cfg.tau <= 1.0, "tau", "must lie in [0, 1]")
    _require(0.0 <= cfg.gamma < 1.0, "gamma", "must lie in [0, 1)")
    for key in ("policy_hidden", "critic_hidden", "grid_dims"):
        _require(all(isinstance(v, int) and v >= 1 for v in getattr(cfg, key)),
                 key, "entries must be positive integers")
    for key in ("dt", "drag", "torque_cost", "critic_lr", "actor_lr",
                "sigma_iso", "sigma_line", "pg_lr", "alpha_init",
                "policy_noise", "noise_clip", "exploration_noise"):
        _require(getattr(cfg, key) >= 0.0, key, "must be non-negative")
    return cfg


def _parse_value(key: str, raw: str, target_type):
    raw = raw.strip()
    try:
        if key in _TUPLE_FIELDS:
            return tuple(int(v) for v in raw.split(",") if v.strip())
        if target_type is bool:
            if raw.lower() in ("true", "1", "yes"):
                return True
            if raw.lower() in ("false", "0", "no"):
                return False
            raise ValueError(raw)
        if target_type is int:
            return int(raw)
        if target_type is float:
            return float(raw)
        return raw
    except ValueError as err:
        raise ConfigError(f"config key {key!r} has malformed value {raw!r}") from err


def config_from_pairs(pairs: dict, base: RunConfig | None = None) -> RunConfig:
    """Apply string or typed overrides onto a base config, with validation."""
    cfg = base if base is not None else RunConfig()
    by_name = {f.name: f for f in fields(RunConfig)}
    updates = {}
    for key, raw in pairs.items():
        name = ALIASES.get(key, key)
        if name not in by_name:
            raise ConfigError(f"unknown config key {key!r}")
        if isinstance(raw, str):
            target = type(getattr(cfg, name))
            updates[name] = _parse_value(key, raw, target)
        else:
            updates[name] = tuple(raw) if name in _TUPLE_FIELDS else raw
    return validate(replace(cfg, **updates))


def parse_config(path) -> RunConfig:
    """Read a flat key=value file; '#' starts a comment; empty file is defaults."""
    pairs = {}
    try:
        text = open(path).read()
    except OSError as err:
        raise ConfigError(f"cannot read config file {path}: {err}") from err
    for lineno, line in enumerate(text.splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"{path}:{lineno}: expected key=value, got {line!r}")
        key, raw = line.split("=", 1)
        pairs[key.strip()] = raw
    return config_from_pairs(pairs)


def _fmt(value) -> str:
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, tuple):
        return ",".join(str(v) for v in value)
    if isinstance(value, float):
        return repr(value)
    return str(value)


def echo_lines(cfg: RunConfig) -> list[str]:
    """Canonical key=value lines for stdout echo and output-file headers."""
    lines = [f"{f.name}={_fmt(getattr(cfg, f.name))}" for f in fields(RunConfig)]
    lines.append(f"n_init_resolved={cfg.resolved_n_init}")
    return lines
