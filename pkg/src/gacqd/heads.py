"""Action heads: how a network output becomes a bounded action.

Two parameterizations cover all trainer families:

- ``tanh``: the network's output activation is tanh, so the output IS the
  action (deterministic policies).
- ``gauss``: the network emits [mean, log-std] per action dimension; actions
  are tanh-squashed Gaussian samples (stochastic policies). The log-std is
  clamped to a fixed range to keep densities well-behaved.
"""

import numpy as np

from . import nets
from .errors import ShapeError

HEAD_TANH = "tanh"
HEAD_GAUSS = "gauss"

LOG_STD_MIN = -5.0
LOG_STD_MAX = 2.0

_HALF_LOG_2PI = 0.5 * np.log(2.0 * np.pi)
_LOG2 = np.log(2.0)


def head_output_dim(head: str, action_dim: int) -> int:
    if head == HEAD_TANH:
        return action_dim
    if head == HEAD_GAUSS:
        return 2 * action_dim
    raise ShapeError(f"unknown action head {head!r}")


def actor_net(head: str, state_dim: int, action_dim: int,
              hidden: tuple[int, ...]) -> nets.NetSpec:
    """Policy architecture for a head: tanh output for tanh heads, raw
    [mean, log-std] output for gaussian heads."""
    out_act = "tanh" if head == HEAD_TANH else "identity"
    return nets.mlp([state_dim, *hidden, head_output_dim(head, action_dim)],
                    hidden_activation="relu", output_activation=out_act)


def split_gauss(out: np.ndarray):
    """Split a gaussian-head output into (mu, clamped log-std, in-range gate).

    The gate is 1 where the raw log-std lies strictly inside the clamp range,
    0 where the clamp is active; gradients through the clamp use it.
    """
    action_dim = out.shape[-1] // 2
    mu = out[..., :action_dim]
    raw = out[..., action_dim:]
    gate = ((raw > LOG_STD_MIN) & (raw < LOG_STD_MAX)).astype(np.float64)
    return mu, np.clip(raw, LOG_STD_MIN, LOG_STD_MAX), gate


def squash_sample(out: np.ndarray, xi: np.ndarray):
    """Reparameterized tanh-Gaussian sample.

    Returns (action, log-prob, pre-squash value z, sigma, gate); log-prob
    includes the tanh change-of-variables correction.
    """
    mu, log_std, gate = split_gauss(out)
    sigma = np.exp(log_std)
    z = mu + sigma * xi
    action = np.tanh(z)
    # log(1 - tanh(z)^2) = 2 (log 2 - z - softplus(-2z)), stable for large |z|
    log_det = 2.0 * (_LOG2 - z - np.logaddexp(0.0, -2.0 * z))
    logp = np.sum(-0.5 * xi * xi - _HALF_LOG_2PI - log_std - log_det, axis=-1)
    return action, logp, z, sigma, gate


def mean_action(out: np.ndarray) -> np.ndarray:
    """Deterministic action of a gaussian head: tanh of the mean."""
    mu, _, _ = split_gauss(out)
    return np.tanh(mu)


def act(spec: nets.NetSpec, params: np.ndarray, head: str, state: np.ndarray,
        stochastic: bool = False, rng: np.random.Generator | None = None):
    """Action for a single state under the given head and mode."""
    out = nets.forward(spec, params, state)
    if head == HEAD_TANH:
        return out
    if stochastic:
        xi = rng.standard_normal(out.shape[-1] // 2)
        action, _, _, _, _ = squash_sample(out, xi)
        return action
    return mean_action(out)
