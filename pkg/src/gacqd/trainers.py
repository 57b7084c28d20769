"""TD3, SAC, and DroQ critic/actor updates behind one uniform interface.

All three families share the same skeleton: twin critics with soft-updated
targets, one greedy actor, and Adam everywhere. They differ in the actor
parameterization (deterministic tanh for TD3, squashed Gaussian for SAC and
DroQ), in the Bellman target (TD3 smooths the target action with clipped
noise; SAC subtracts the alpha-weighted log-density), and in the critic
architecture (DroQ adds dropout and layer norm to the critic hidden layers).

Every update draws its own mini-batch; soft target updates follow every
critic step. Gradients are computed by the hand-written reverse-mode pass in
:mod:`gacqd.nets`, so each family's update is an explicit chain rule, checked
against finite differences in the test suite.

RNG consumption order within one update is part of the determinism contract:
target noise first (TD3) or reparameterization noise first (SAC/DroQ), then
dropout masks for target critic 1, target critic 2, online critic 1, online
critic 2 in that order (DroQ only).
"""

from dataclasses import dataclass

import numpy as np

from . import heads, nets
from .errors import NumericFault, ShapeError

FAMILIES = ("td3", "sac", "droq")


@dataclass
class CriticLossReport:
    loss: float
    mean_q: float
    mean_target: float


@dataclass
class TrainerState:
    """Everything the training phase mutates: nets, targets, moments, alpha."""

    family: str
    action_dim: int
    actor_spec: nets.NetSpec
    actor: np.ndarray
    adam_actor: nets.AdamState
    critic_spec: nets.NetSpec
    critic1: np.ndarray
    critic2: np.ndarray
    adam_critic1: nets.AdamState
    adam_critic2: nets.AdamState
    target_critic1: np.ndarray
    target_critic2: np.ndarray
    target_actor: np.ndarray | None
    log_alpha: float
    adam_alpha: nets.AdamState | None
    gamma: float
    tau: float
    policy_noise: float
    noise_clip: float
    target_entropy: float
    critic_lr: float
    actor_lr: float
    batch_size: int

    @property
    def alpha(self) -> float:
        return float(np.exp(self.log_alpha))

    @property
    def head(self) -> str:
        return heads.HEAD_TANH if self.family == "td3" else heads.HEAD_GAUSS

    @property
    def stochastic_policy(self) -> bool:
        return self.family in ("sac", "droq")


def make_trainer(family: str, state_dim: int, action_dim: int,
                 rng: np.random.Generator, *, policy_hidden=(64, 64),
                 critic_hidden=(256, 256), critic_lr=3e-4, actor_lr=3e-4,
                 gamma=0.99, tau=0.005, policy_noise=0.2, noise_clip=0.5,
                 alpha_init=1.0, dropout_rate=0.01, layer_norm=True,
                 batch_size=64) -> TrainerState:
    """Build a freshly initialized trainer.

    dropout_rate / layer_norm shape the critics only for the droq family;
    with rate 0 and layer norm off, droq is architecturally identical to sac.
    """
    if family not in FAMILIES:
        raise ShapeError(f"unknown trainer family {family!r}")
    head = heads.HEAD_TANH if family == "td3" else heads.HEAD_GAUSS
    actor_spec = heads.actor_net(head, state_dim, action_dim, tuple(policy_hidden))
    regularized = family == "droq"
    critic_spec = nets.mlp([state_dim + action_dim, *critic_hidden, 1],
                           hidden_activation="relu",
                           layer_norm=layer_norm if regularized else False,
                           dropout=dropout_rate if regularized else 0.0)
    actor = nets.init_params(actor_spec, rng, final_scale=0.01)
    critic1 = nets.init_params(critic_spec, rng)
    critic2 = nets.init_params(critic_spec, rng)
    return TrainerState(
        family=family,
        action_dim=action_dim,
        actor_spec=actor_spec,
        actor=actor,
        adam_actor=nets.AdamState.fresh(actor_spec.param_count),
        critic_spec=critic_spec,
        critic1=critic1,
        critic2=critic2,
        adam_critic1=nets.AdamState.fresh(critic_spec.param_count),
        adam_critic2=nets.AdamState.fresh(critic_spec.param_count),
        target_critic1=critic1.copy(),
        target_critic2=critic2.copy(),
        target_actor=actor.copy() if family == "td3" else None,
        log_alpha=float(np.log(alpha_init)),
        adam_alpha=None if family == "td3" else nets.AdamState.fresh(1),
        gamma=gamma,
        tau=tau,
        policy_noise=policy_noise,
        noise_clip=noise_clip,
        target_entropy=-float(action_dim),
        critic_lr=critic_lr,
        actor_lr=actor_lr,
        batch_size=batch_size,
    )


def _critic_masks(state: TrainerState, batch_size: int, rng):
    if state.critic_spec.has_dropout:
        return nets.draw_masks(state.critic_spec, batch_size, rng)
    return None


def bellman_targets(state: TrainerState, batch, rng) -> np.ndarray:
    """Per-transition regression targets y for both critics."""
    n = len(batch)
    if state.family == "td3":
        eps = np.clip(rng.normal(0.0, state.policy_noise, (n, state.action_dim)),
                      -state.noise_clip, state.noise_clip)
        a2 = nets.forward(state.actor_spec, state.target_actor, batch.s_next)
        a2 = np.clip(a2 + eps, -1.0, 1.0)
        entropy_bonus = 0.0
    else:
        out2 = nets.forward(state.actor_spec, state.actor, batch.s_next)
        xi = rng.standard_normal((n, state.action_dim))
        a2, logp2, _, _, _ = heads.squash_sample(out2, xi)
        entropy_bonus = state.alpha * logp2
    x2 = np.concatenate([batch.s_next, a2], axis=1)
    q1t = nets.forward_batch(state.critic_spec, state.target_critic1, x2,
                             _critic_masks(state, n, rng))[0][:, 0]
    q2t = nets.forward_batch(state.critic_spec, state.target_critic2, x2,
                             _critic_masks(state, n, rng))[0][:, 0]
    q_next = np.minimum(q1t, q2t) - entropy_bonus
    return batch.r + state.gamma * (1.0 - batch.done) * q_next


def critic_loss_and_grad(state: TrainerState, params: np.ndarray, batch,
                         y: np.ndarray, masks=None):
    """Mean-squared Bellman error and its gradient for one critic.

    ``y`` and ``masks`` are inputs, so the loss is a deterministic function
    of ``params`` (what the finite-difference oracle needs).
    """
    x = np.concatenate([batch.s, batch.a], axis=1)
    q, cache = nets.forward_batch(state.critic_spec, params, x, masks,
                                  keep_cache=True)
    diff = q[:, 0] - y
    loss = float(np.mean(diff * diff))
    pgrad, _ = nets.backward_batch(state.critic_spec, params, x,
                                   (2.0 * diff)[:, None], masks, cache)
    return loss, pgrad, float(np.mean(q))


def update_critic(state: TrainerState, batch, rng) -> CriticLossReport:
    """One regression step for both critics plus soft target updates."""
    y = bellman_targets(state, batch, rng)
    n = len(batch)
    losses = []
    mean_q = 0.0
    for params, adam in ((state.critic1, state.adam_critic1),
                         (state.critic2, state.adam_critic2)):
        masks = _critic_masks(state, n, rng)
        loss, pgrad, q_mean = critic_loss_and_grad(state, params, batch, y, masks)
        if not np.isfinite(loss):
            raise NumericFault("non-finite critic loss")
        nets.adam_step_inplace(params, pgrad, adam, state.critic_lr)
        losses.append(loss)
        if params is state.critic1:
            mean_q = q_mean
    nets.soft_update_inplace(state.target_critic1, state.critic1, state.tau)
    nets.soft_update_inplace(state.target_critic2, state.critic2, state.tau)
    if state.family == "td3":
        nets.soft_update_inplace(state.target_actor, state.actor, state.tau)
    return CriticLossReport(0.5 * (losses[0] + losses[1]), mean_q,
                            float(np.mean(y)))


def _min_critic_grads(state: TrainerState, x, n, critic_masks):
    """(q_min, dq_min/da rows): gradient flows through the smaller critic."""
    m1, m2 = critic_masks if critic_masks is not None else (None, None)
    q1, c1 = nets.forward_batch(state.critic_spec, state.critic1, x, m1, True)
    q2, c2 = nets.forward_batch(state.critic_spec, state.critic2, x, m2, True)
    ones = np.ones((n, 1))
    _, xg1 = nets.backward_batch(state.critic_spec, state.critic1, x, ones, m1, c1)
    _, xg2 = nets.backward_batch(state.critic_spec, state.critic2, x, ones, m2, c2)
    pick1 = (q1[:, 0] <= q2[:, 0])[:, None]
    q_min = np.where(pick1[:, 0], q1[:, 0], q2[:, 0])
    dim_s = x.shape[1] - state.action_dim
    ga = np.where(pick1, xg1[:, dim_s:], xg2[:, dim_s:])
    return q_min, ga


def actor_loss_and_grad(state: TrainerState, params: np.ndarray, batch, *,
                        xi: np.ndarray | None = None, critic_masks=None):
    """Family-appropriate actor objective and gradient, stochasticity frozen.

    TD3 minimizes -mean Q1(s, pi(s)); SAC/DroQ minimize
    mean(alpha * logp - min Q(s, a~)) with the reparameterized action
    a~ = tanh(mu + sigma * xi) for the given noise ``xi``. ``critic_masks``
    is a (masks1, masks2) pair for DroQ critic dropout.
    """
    n = len(batch)
    if state.family == "td3":
        act, cache_a = nets.forward_batch(state.actor_spec, params, batch.s,
                                          keep_cache=True)
        x = np.concatenate([batch.s, act], axis=1)
        q1, cache_q = nets.forward_batch(state.critic_spec, state.critic1, x,
                                         keep_cache=True)
        _, xg = nets.backward_batch(state.critic_spec, state.critic1, x,
                                    np.ones((n, 1)), cache=cache_q)
        ga = xg[:, batch.s.shape[1]:]
        loss = -float(np.mean(q1))
        # minimize -mean Q: upstream rows are d(-q_row)/d(action_row)
        pgrad, _ = nets.backward_batch(state.actor_spec, params, batch.s,
                                       -ga, cache=cache_a)
        return loss, pgrad
    out, cache_a = nets.forward_batch(state.actor_spec, params, batch.s,
                                      keep_cache=True)
    a, logp, _, sigma, gate = heads.squash_sample(out, xi)
    x = np.concatenate([batch.s, a], axis=1)
    q_min, ga = _min_critic_grads(state, x, n, critic_masks)
    alpha = state.alpha
    # loss = mean(alpha * logp - q_min); chain through a = tanh(mu + sigma*xi)
    # with d(logp)/dmu = 2a and d(logp)/dlogstd = -1 + 2a*sigma*xi
    da = 1.0 - a * a
    up_mu = alpha * 2.0 * a - ga * da
    up_ls = gate * (alpha * (-1.0 + 2.0 * a * sigma * xi) - ga * da * sigma * xi)
    upstream = np.concatenate([up_mu, up_ls], axis=1)
    loss = float(np.mean(alpha * logp - q_min))
    pgrad, _ = nets.backward_batch(state.actor_spec, params, batch.s,
                                   upstream, cache=cache_a)
    return loss, pgrad


def actor_gradient_step(state: TrainerState, params: np.ndarray,
                        adam: nets.AdamState, batch, lr: float, rng
                        ) -> tuple[np.ndarray, nets.AdamState, float]:
    """One family-appropriate actor step on a caller-owned parameter vector.

    Reads the trainer's critics (and alpha) but never mutates the trainer:
    the offspring generator and the greedy-actor update share this path.
    """
    if params.shape != (state.actor_spec.param_count,):
        raise ShapeError("actor parameter length does not match the trainer's "
                         "policy architecture")
    xi = critic_masks = None
    if state.family != "td3":
        xi = rng.standard_normal((len(batch), state.action_dim))
        critic_masks = (_critic_masks(state, len(batch), rng),
                        _critic_masks(state, len(batch), rng))
    loss, pgrad = actor_loss_and_grad(state, params, batch, xi=xi,
                                      critic_masks=critic_masks)
    if not np.isfinite(loss):
        raise NumericFault("non-finite actor loss")
    new_params = params.copy()
    new_adam = adam.copy()
    nets.adam_step_inplace(new_params, pgrad, new_adam, lr)
    return new_params, new_adam, loss


def update_actor(state: TrainerState, batch, rng) -> float:
    """One greedy-actor step at the trainer's own learning rate."""
    params, adam, loss = actor_gradient_step(state, state.actor,
                                             state.adam_actor, batch,
                                             state.actor_lr, rng)
    state.actor = params
    state.adam_actor = adam
    return loss


def update_alpha(state: TrainerState, batch, rng) -> float:
    """One step of automatic entropy-temperature tuning (sac/droq only).

    Minimizes mean(-log_alpha * (logp + target_entropy)) over log alpha, so
    alpha grows while policy entropy sits below the target and shrinks above.
    """
    if state.family == "td3":
        raise ShapeError("alpha tuning applies to sac/droq trainers only")
    out = nets.forward(state.actor_spec, state.actor, batch.s)
    xi = rng.standard_normal((len(batch), state.action_dim))
    _, logp, _, _, _ = heads.squash_sample(out, xi)
    grad = np.array([-float(np.mean(logp + state.target_entropy))])
    la = np.array([state.log_alpha])
    nets.adam_step_inplace(la, grad, state.adam_alpha, state.critic_lr)
    state.log_alpha = float(la[0])
    return state.alpha


def train_loop(state: TrainerState, buffer, g_loops: int, g_critic: int,
               g_actor: int, rng, log: list | None = None,
               generation: int = 0) -> TrainerState:
    """g_loops iterations of {g_critic critic steps, then g_actor actor steps}.

    sac/droq actors are followed by one alpha step each. Every update draws a
    fresh batch of the trainer's batch size. Appends one row per update to
    ``log`` when given: (generation, update_index, family, critic_loss,
    actor_loss, alpha, mean_q); inapplicable fields are None.
    """
    update_index = 0
    for _ in range(g_loops):
        for _ in range(g_critic):
            batch = buffer.sample(state.batch_size, rng)
            report = update_critic(state, batch, rng)
            if log is not None:
                alpha = state.alpha if state.stochastic_policy else None
                log.append((generation, update_index, state.family,
                            report.loss, None, alpha, report.mean_q))
            update_index += 1
        for _ in range(g_actor):
            batch = buffer.sample(state.batch_size, rng)
            actor_loss = update_actor(state, batch, rng)
            if state.stochastic_policy:
                update_alpha(state, buffer.sample(state.batch_size, rng), rng)
            if log is not None:
                alpha = state.alpha if state.stochastic_policy else None
                log.append((generation, update_index, state.family,
                            None, actor_loss, alpha, None))
            update_index += 1
    return state


def clone_state(state: TrainerState) -> TrainerState:
    """Deep copy of all mutable arrays (purity checks, reductions)."""
    return TrainerState(
        family=state.family,
        action_dim=state.action_dim,
        actor_spec=state.actor_spec,
        actor=state.actor.copy(),
        adam_actor=state.adam_actor.copy(),
        critic_spec=state.critic_spec,
        critic1=state.critic1.copy(),
        critic2=state.critic2.copy(),
        adam_critic1=state.adam_critic1.copy(),
        adam_critic2=state.adam_critic2.copy(),
        target_critic1=state.target_critic1.copy(),
        target_critic2=state.target_critic2.copy(),
        target_actor=None if state.target_actor is None else state.target_actor.copy(),
        log_alpha=state.log_alpha,
        adam_alpha=None if state.adam_alpha is None else state.adam_alpha.copy(),
        gamma=state.gamma,
        tau=state.tau,
        policy_noise=state.policy_noise,
        noise_clip=state.noise_clip,
        target_entropy=state.target_entropy,
        critic_lr=state.critic_lr,
        actor_lr=state.actor_lr,
        batch_size=state.batch_size,
    )


def state_fingerprint(state: TrainerState) -> bytes:
    """Byte image of every mutable numeric field, for bit-equality checks."""
    parts = [state.actor, state.adam_actor.m, state.adam_actor.v,
             state.critic1, state.critic2,
             state.adam_critic1.m, state.adam_critic1.v,
             state.adam_critic2.m, state.adam_critic2.v,
             state.target_critic1, state.target_critic2]
    if state.target_actor is not None:
        parts.append(state.target_actor)
    blob = b"".join(p.tobytes() for p in parts)
    blob += np.float64(state.log_alpha).tobytes()
    if state.adam_alpha is not None:
        blob += state.adam_alpha.m.tobytes() + state.adam_alpha.v.tobytes()
    blob += np.int64(state.adam_actor.t).tobytes()
    blob += np.int64(state.adam_critic1.t).tobytes()
    return blob
