"""The generation loop and the single-policy baseline harness.

One generation runs, in order: select parents, produce floor(B * p_pg)
policy-gradient offspring and B - floor(B * p_pg) genetic offspring, evaluate
all offspring, evaluate the greedy actor and offer it to the archive, push
every collected transition, offer the offspring to the archive in batch
order, then run G update loops of G_critic critic and G_actor actor steps.

Determinism contract: every stochastic site draws from its own stream keyed
by (seed, purpose, generation, index) via :mod:`gacqd.seeding`, and offspring
results are committed in batch-index order even when evaluation runs on a
thread pool (GACQD_THREADS). Two runs with equal configs produce bit-equal
archives and logs.
"""

from __future__ import annotations

import os
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np

from . import archive as arch
from . import envs, heads, nets, seeding, trainers, variations
from .config import RunConfig, echo_lines, validate
from .errors import ConfigError
from .replay import ReplayBuffer

GENERATION_COLUMNS = ("generation", "env_steps_cum", "qd_score", "coverage",
                      "max_fitness", "add_ga", "add_pg", "add_actor",
                      "critic_loss_mean", "actor_loss_mean", "alpha",
                      "wall_time_s")
TRAINING_COLUMNS = ("generation", "update_index", "family", "critic_loss",
                    "actor_loss", "alpha", "mean_q")


@dataclass
class GenerationReport:
    generation: int
    env_steps_cum: int
    qd_score: float
    coverage: float
    max_fitness: float | None
    add_ga: int
    add_pg: int
    add_actor: int
    critic_loss_mean: float | None
    actor_loss_mean: float | None
    alpha: float | None
    wall_time_s: float


@dataclass
class InsertEvent:
    """One archive offer, kept for utility-accounting replays."""

    generation: int
    source: str
    kind: str
    cell: int


@dataclass
class RunResult:
    config: RunConfig
    archive: arch.Archive
    reports: list
    events: list
    episodes: int
    env_steps: int
    buffer: ReplayBuffer
    trainer: trainers.TrainerState


def csv_cell(value) -> str:
    if value is None:
        return ""
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, float):
        return repr(value)
    return str(value)


def _threads() -> int:
    try:
        return max(1, int(os.environ.get("GACQD_THREADS", "1")))
    except ValueError:
        return 1


class GacRun:
    """Mutable state of one seeded run; drives generations in order."""

    def __init__(self, cfg: RunConfig):
        validate(cfg)
        self.cfg = cfg
        self.env = envs.make_env(cfg.env, cfg.episode_length, cfg.dt, cfg.drag,
                                 cfg.torque_cost)
        if len(cfg.grid_dims) != self.env.descriptor_dim:
            raise ConfigError(
                f"grid_dims has {len(cfg.grid_dims)} axes but {cfg.env} "
                f"descriptors have {self.env.descriptor_dim}")
        self.grid = arch.GridSpec(tuple(cfg.grid_dims),
                                  self.env.descriptor_low,
                                  self.env.descriptor_high)
        self.trainer = trainers.make_trainer(
            cfg.family, self.env.state_dim, self.env.action_dim,
            seeding.stream(cfg.seed, seeding.TRAINER_INIT),
            policy_hidden=cfg.policy_hidden, critic_hidden=cfg.critic_hidden,
            critic_lr=cfg.critic_lr, actor_lr=cfg.actor_lr, gamma=cfg.gamma,
            tau=cfg.tau, policy_noise=cfg.policy_noise,
            noise_clip=cfg.noise_clip, alpha_init=cfg.alpha_init,
            dropout_rate=cfg.dropout_rate, layer_norm=cfg.layer_norm,
            batch_size=cfg.transitions_batch)
        self.vcfg = variations.VariationConfig(cfg.sigma_iso, cfg.sigma_line,
                                               cfg.p_pg, cfg.g_pg, cfg.pg_lr)
        self.archive = arch.Archive(self.grid)
        self.buffer = ReplayBuffer(cfg.buffer_capacity, self.env.state_dim,
                                   self.env.action_dim)
        self.floor = envs.fitness_floor(self.env)
        self.events: list[InsertEvent] = []
        self.reports: list[GenerationReport] = []
        self.training_rows: list = []
        self.episodes = 0
        self.env_steps = 0
        self._prev_qd = 0.0
        self._prev_coverage = 0.0

    def _rollout(self, params, rng) -> envs.Trajectory:
        traj = envs.rollout(self.env, self.trainer.actor_spec, params,
                            self.trainer.head, self.cfg.eval_mode, rng)
        self.episodes += 1
        self.env_steps += len(traj)
        return traj

    def init_archive(self) -> None:
        """Seed archive and buffer with freshly initialized genotypes."""
        cfg = self.cfg
        for i in range(cfg.resolved_n_init):
            params = nets.init_params(
                self.trainer.actor_spec,
                seeding.stream(cfg.seed, seeding.INIT_GENOTYPE, i),
                final_scale=0.01)
            traj = self._rollout(params,
                                 seeding.stream(cfg.seed, seeding.INIT_EVAL, i))
            self.buffer.push_trajectory(traj)
            out = self.archive.try_insert(params, traj.fitness, traj.descriptor,
                                          "init", 0)
            self.events.append(InsertEvent(0, "init", out.kind, out.cell))

    def _evaluate_batch(self, genotypes, gen) -> list:
        """Rollouts for a whole offspring batch, committed in index order."""
        rngs = [seeding.stream(self.cfg.seed, seeding.OFFSPRING_EVAL, gen, i)
                for i in range(len(genotypes))]
        n = _threads()
        if n > 1:
            spec, head, mode = (self.trainer.actor_spec, self.trainer.head,
                                self.cfg.eval_mode)
            with ThreadPoolExecutor(max_workers=n) as pool:
                trajs = list(pool.map(
                    lambda args: envs.rollout(self.env, spec, args[0], head,
                                              mode, args[1]),
                    zip(genotypes, rngs)))
            self.episodes += len(trajs)
            self.env_steps += sum(len(t) for t in trajs)
            return trajs
        return [self._rollout(g, rng) for g, rng in zip(genotypes, rngs)]

    def run_generation(self, gen: int) -> GenerationReport:
        cfg = self.cfg
        t0 = time.perf_counter()
        sel = seeding.stream(cfg.seed, seeding.SELECT, gen)
        parents = self.archive.select_uniform(sel, cfg.batch_size)
        n_pg, n_ga = variations.split_batch(cfg.batch_size, cfg.p_pg)
        co_parents = self.archive.select_uniform(sel, n_ga)

        offspring = []
        for i in range(n_pg):
            rng = seeding.stream(cfg.seed, seeding.PG_VARIATION, gen, i)
            offspring.append((variations.pg_variation(
                parents[i].genotype, self.trainer, self.buffer, self.vcfg,
                rng), "pg"))
        for j in range(n_ga):
            rng = seeding.stream(cfg.seed, seeding.GA_VARIATION, gen, j)
            offspring.append((variations.iso_line(
                parents[n_pg + j].genotype, co_parents[j].genotype, self.vcfg,
                rng), "ga"))

        trajs = self._evaluate_batch([g for g, _ in offspring], gen)

        adds = {"ga": 0, "pg": 0, "actor": 0}
        actor_traj = None
        if cfg.eval_actor:
            actor_traj = self._rollout(
                self.trainer.actor,
                seeding.stream(cfg.seed, seeding.ACTOR_EVAL, gen))
            out = self.archive.try_insert(self.trainer.actor,
                                          actor_traj.fitness,
                                          actor_traj.descriptor, "actor", gen)
            self.events.append(InsertEvent(gen, "actor", out.kind, out.cell))
            adds["actor"] += out.kind != "rejected"

        for traj in trajs:
            self.buffer.push_trajectory(traj)
        if actor_traj is not None:
            self.buffer.push_trajectory(actor_traj)

        for (params, source), traj in zip(offspring, trajs):
            out = self.archive.try_insert(params, traj.fitness,
                                          traj.descriptor, source, gen)
            self.events.append(InsertEvent(gen, source, out.kind, out.cell))
            adds[source] += out.kind != "rejected"

        metrics = self.archive.metrics(self.floor)
        assert metrics.qd_score >= self._prev_qd - 1e-9, "QD-score decreased"
        assert metrics.coverage >= self._prev_coverage, "coverage decreased"
        self._prev_qd, self._prev_coverage = metrics.qd_score, metrics.coverage

        rows_before = len(self.training_rows)
        trainers.train_loop(self.trainer, self.buffer, cfg.g, cfg.g_critic,
                            cfg.g_actor,
                            seeding.stream(cfg.seed, seeding.TRAIN, gen),
                            log=self.training_rows, generation=gen)
        new_rows = self.training_rows[rows_before:]
        critic_losses = [r[3] for r in new_rows if r[3] is not None]
        actor_losses = [r[4] for r in new_rows if r[4] is not None]
        report = GenerationReport(
            generation=gen,
            env_steps_cum=self.env_steps,
            qd_score=metrics.qd_score,
            coverage=metrics.coverage,
            max_fitness=metrics.max_fitness,
            add_ga=adds["ga"],
            add_pg=adds["pg"],
            add_actor=adds["actor"],
            critic_loss_mean=float(np.mean(critic_losses)) if critic_losses else None,
            actor_loss_mean=float(np.mean(actor_losses)) if actor_losses else None,
            alpha=self.trainer.alpha if self.trainer.stochastic_policy else None,
            wall_time_s=time.perf_counter() - t0,
        )
        self.reports.append(report)
        return report


def _header(cfg: RunConfig) -> list[str]:
    from . import __version__

    return [f"gacqd_version={__version__}", *echo_lines(cfg)]


def run_gac(cfg: RunConfig, out_dir=None, progress: bool = False) -> RunResult:
    """Run J generations; optionally stream CSV logs and dump the archive.

    Partial CSV output survives a mid-run error (rows are flushed as they
    are produced).
    """
    run = GacRun(cfg)
    gen_fh = train_fh = None
    if out_dir is not None:
        os.makedirs(out_dir, exist_ok=True)
        gen_fh = open(os.path.join(out_dir, "generations.csv"), "w")
        for line in _header(cfg):
            gen_fh.write(f"# {line}\n")
        gen_fh.write(",".join(GENERATION_COLUMNS) + "\n")
        if cfg.log_training:
            train_fh = open(os.path.join(out_dir, "training.csv"), "w")
            for line in _header(cfg):
                train_fh.write(f"# {line}\n")
            train_fh.write(",".join(TRAINING_COLUMNS) + "\n")
    try:
        run.init_archive()
        for gen in range(1, cfg.generations + 1):
            rows_before = len(run.training_rows)
            report = run.run_generation(gen)
            if gen_fh is not None:
                gen_fh.write(",".join(csv_cell(getattr(report, col))
                                      for col in GENERATION_COLUMNS) + "\n")
                gen_fh.flush()
            if train_fh is not None:
                for row in run.training_rows[rows_before:]:
                    train_fh.write(",".join(csv_cell(v) for v in row) + "\n")
                train_fh.flush()
            if progress:
                print(f"generation {gen}/{cfg.generations}: "
                      f"qd_score={report.qd_score:.3f} "
                      f"coverage={report.coverage:.4f}")
    finally:
        if gen_fh is not None:
            gen_fh.close()
        if train_fh is not None:
            train_fh.close()
    if out_dir is not None:
        arch.dump_archive(run.archive, os.path.join(out_dir, "archive.csv"),
                          os.path.join(out_dir, "genotypes.bin"),
                          header_lines=_header(cfg))
    return RunResult(cfg, run.archive, run.reports, run.events, run.episodes,
                     run.env_steps, run.buffer, run.trainer)


def run_single_policy(cfg: RunConfig, out_path=None):
    """Stepwise actor-critic training of one policy (the deep-RL baseline).

    Random warmup actions fill the buffer first; afterwards every environment
    step is followed by one loop of G_critic critic and G_actor actor
    updates. Returns (actor parameters, [(env_steps, eval_return), ...]).
    """
    validate(cfg)
    env = envs.make_env(cfg.env, cfg.episode_length, cfg.dt, cfg.drag,
                        cfg.torque_cost)
    trainer = trainers.make_trainer(
        cfg.family, env.state_dim, env.action_dim,
        seeding.stream(cfg.seed, seeding.TRAINER_INIT),
        policy_hidden=cfg.policy_hidden, critic_hidden=cfg.critic_hidden,
        critic_lr=cfg.critic_lr, actor_lr=cfg.actor_lr, gamma=cfg.gamma,
        tau=cfg.tau, policy_noise=cfg.policy_noise, noise_clip=cfg.noise_clip,
        alpha_init=cfg.alpha_init, dropout_rate=cfg.dropout_rate,
        layer_norm=cfg.layer_norm, batch_size=cfg.transitions_batch)
    buffer = ReplayBuffer(cfg.buffer_capacity, env.state_dim, env.action_dim)
    act_rng = seeding.stream(cfg.seed, seeding.SINGLE_ACT)
    train_rng = seeding.stream(cfg.seed, seeding.SINGLE_TRAIN)
    state = envs.reset(env)
    t = 0
    evals = []
    for step_i in range(1, cfg.total_steps + 1):
        if step_i <= cfg.warmup_steps:
            action = act_rng.uniform(-1.0, 1.0, env.action_dim)
        elif trainer.family == "td3":
            action = heads.act(trainer.actor_spec, trainer.actor,
                               trainer.head, state)
            action = np.clip(action + act_rng.normal(
                0.0, cfg.exploration_noise, env.action_dim), -1.0, 1.0)
        else:
            action = heads.act(trainer.actor_spec, trainer.actor,
                               trainer.head, state, stochastic=True,
                               rng=act_rng)
        next_state, reward, _ = envs.step(env, state, action, t)
        t += 1
        done = t == env.episode_length
        buffer.push_arrays(state, action, next_state, reward, done)
        state = next_state
        if done:
            state = envs.reset(env)
            t = 0
        if step_i > cfg.warmup_steps:
            trainers.train_loop(trainer, buffer, 1, cfg.g_critic, cfg.g_actor,
                                train_rng)
        if step_i % cfg.eval_interval == 0:
            traj = envs.rollout(env, trainer.actor_spec, trainer.actor,
                                trainer.head, "deterministic")
            evals.append((step_i, traj.fitness))
    if out_path is not None:
        with open(out_path, "w") as fh:
            for line in _header(cfg):
                fh.write(f"# {line}\n")
            fh.write("env_steps,eval_return\n")
            for steps, ret in evals:
                fh.write(f"{steps},{ret!r}\n")
    return trainer.actor, evals


def utility_summary(reports) -> dict:
    """Mean archive additions per generation, by offspring source."""
    reports = list(reports)
    if not reports:
        raise ValueError("utility_summary needs at least one generation report")
    n = len(reports)
    return {
        "ga": sum(r.add_ga for r in reports) / n,
        "pg": sum(r.add_pg for r in reports) / n,
        "actor": sum(r.add_actor for r in reports) / n,
    }
