"""Minimal dense networks with hand-written reverse-mode gradients.

A network is a fixed MLP described by :class:`NetSpec`; its parameters live in
one flat float64 vector laid out layer by layer: weights row-major, then
biases, then layer-norm gain and offset when that layer has layer norm. Every
actor and critic in the package is one of these.

Per layer the forward pass computes ``act(layernorm(dropout(W x + b)))``,
where dropout and layer norm are optional. Dropout uses inverted scaling
(kept units divided by the keep probability) with masks drawn from a
caller-supplied generator, so training runs are replayable. Layer norm
normalizes each pre-activation row to zero mean / unit variance
(epsilon-guarded) before gain/offset.

The heavy lifting is delegated to the active kernel backend (compiled
extension or numpy fallback, see :mod:`gacqd.backend`).
"""

from __future__ import annotations

import struct
from dataclasses import dataclass
from functools import cached_property
from typing import Callable, Sequence

import numpy as np

from .backend import kernels
from .errors import NumericFault, ShapeError

LN_EPS = 1e-6
ADAM_BETA1 = 0.9
ADAM_BETA2 = 0.999
ADAM_EPS = 1e-8

_ACT_CODES = {"identity": 0, "relu": 1, "tanh": 2}


@dataclass(frozen=True)
class NetSpec:
    """Architecture of one MLP; per-layer tuples have len(layer_sizes) - 1."""

    layer_sizes: tuple[int, ...]
    activations: tuple[str, ...]
    layer_norm: tuple[bool, ...]
    dropout: tuple[float, ...]

    def __post_init__(self):
        if len(self.layer_sizes) < 2:
            raise ShapeError("layer_sizes needs at least input and output")
        if any(s <= 0 for s in self.layer_sizes):
            raise ShapeError(f"layer sizes must be positive: {self.layer_sizes}")
        n = len(self.layer_sizes) - 1
        for name, seq in (("activations", self.activations),
                          ("layer_norm", self.layer_norm),
                          ("dropout", self.dropout)):
            if len(seq) != n:
                raise ShapeError(f"{name} must have one entry per layer ({n})")
        for act in self.activations:
            if act not in _ACT_CODES:
                raise ShapeError(f"unknown activation {act!r}")
        if any(not (0.0 <= r < 1.0) for r in self.dropout):
            raise ShapeError("dropout rates must lie in [0, 1)")

    @cached_property
    def n_layers(self) -> int:
        return len(self.layer_sizes) - 1

    @cached_property
    def param_count(self) -> int:
        total = 0
        for i in range(self.n_layers):
            total += self.layer_sizes[i + 1] * (self.layer_sizes[i] + 1)
            if self.layer_norm[i]:
                total += 2 * self.layer_sizes[i + 1]
        return total

    @cached_property
    def has_dropout(self) -> bool:
        return any(r > 0.0 for r in self.dropout)

    @cached_property
    def _arrays(self):
        sizes = np.asarray(self.layer_sizes, dtype=np.int64)
        acts = np.asarray([_ACT_CODES[a] for a in self.activations], dtype=np.int64)
        ln = np.asarray(self.layer_norm, dtype=np.uint8)
        return sizes, acts, ln

    @property
    def in_dim(self) -> int:
        return self.layer_sizes[0]

    @property
    def out_dim(self) -> int:
        return self.layer_sizes[-1]


def mlp(sizes: Sequence[int], hidden_activation: str = "relu",
        output_activation: str = "identity", layer_norm: bool = False,
        dropout: float = 0.0) -> NetSpec:
    """Build a NetSpec with uniform hidden layers and a plain output layer."""
    n = len(sizes) - 1
    acts = tuple([hidden_activation] * (n - 1) + [output_activation])
    lns = tuple([layer_norm] * (n - 1) + [False])
    drops = tuple([dropout] * (n - 1) + [0.0])
    return NetSpec(tuple(int(s) for s in sizes), acts, lns, drops)


def init_params(spec: NetSpec, rng: np.random.Generator,
                final_scale: float = 1.0) -> np.ndarray:
    """Uniform fan-in init (+-1/sqrt(fan_in)); last layer scaled by final_scale."""
    parts = []
    for i in range(spec.n_layers):
        n_in, n_out = spec.layer_sizes[i], spec.layer_sizes[i + 1]
        bound = 1.0 / np.sqrt(n_in)
        w = rng.uniform(-bound, bound, size=n_out * n_in)
        b = rng.uniform(-bound, bound, size=n_out)
        if i == spec.n_layers - 1:
            w = w * final_scale
            b = b * final_scale
        parts.append(w)
        parts.append(b)
        if spec.layer_norm[i]:
            parts.append(np.ones(n_out))
            parts.append(np.zeros(n_out))
    return np.concatenate(parts)


def draw_masks(spec: NetSpec, batch: int, rng: np.random.Generator):
    """Inverted-scaling dropout masks; None when the spec has no dropout.

    Only layers with a positive rate consume random numbers, so a rate-0 spec
    leaves the generator untouched.
    """
    if not spec.has_dropout:
        return None
    masks = []
    for i in range(spec.n_layers):
        rate = spec.dropout[i]
        if rate > 0.0:
            keep = 1.0 - rate
            m = (rng.random((batch, spec.layer_sizes[i + 1])) < keep) / keep
            masks.append(m)
        else:
            masks.append(None)
    return masks


def _check_forward_args(spec: NetSpec, params: np.ndarray, x: np.ndarray):
    if params.shape != (spec.param_count,):
        raise ShapeError(
            f"params has {params.shape[0] if params.ndim == 1 else params.shape} "
            f"values, spec needs {spec.param_count}")
    if x.shape[-1] != spec.in_dim:
        raise ShapeError(f"input width {x.shape[-1]} != {spec.in_dim}")


def forward_batch(spec: NetSpec, params: np.ndarray, x: np.ndarray,
                  masks=None, keep_cache: bool = False):
    """Batched forward pass; returns (out, cache); cache is None unless kept."""
    x = np.ascontiguousarray(x, dtype=np.float64)
    _check_forward_args(spec, params, x)
    sizes, acts, ln = spec._arrays
    return kernels.mlp_forward(sizes, acts, ln, params, x, masks, LN_EPS,
                               keep_cache)


def forward(spec: NetSpec, params: np.ndarray, x, dropout_rng=None) -> np.ndarray:
    """Evaluate the network on one input vector or a batch.

    ``dropout_rng`` marks training mode: masks are drawn from it for layers
    with a positive dropout rate. Without it, dropout is a no-op (inference).
    """
    x = np.asarray(x, dtype=np.float64)
    single = x.ndim == 1
    xb = x[None, :] if single else x
    masks = draw_masks(spec, xb.shape[0], dropout_rng) if dropout_rng is not None else None
    out, _ = forward_batch(spec, params, xb, masks)
    return out[0] if single else out


def backward_batch(spec: NetSpec, params: np.ndarray, x: np.ndarray,
                   upstream: np.ndarray, masks=None, cache=None):
    """Reverse-mode pass; returns (param_grad, input_grad).

    param_grad is d(mean-over-rows loss)/d(params); input_grad is per-row,
    not averaged. Pass the same masks (and optionally the forward cache) as
    the paired forward call.
    """
    x = np.ascontiguousarray(x, dtype=np.float64)
    upstream = np.ascontiguousarray(upstream, dtype=np.float64)
    _check_forward_args(spec, params, x)
    if upstream.shape != (x.shape[0], spec.out_dim):
        raise ShapeError(
            f"upstream shape {upstream.shape} != {(x.shape[0], spec.out_dim)}")
    sizes, acts, ln = spec._arrays
    return kernels.mlp_backward(sizes, acts, ln, params, x, upstream, masks,
                                LN_EPS, cache)


def backward(spec: NetSpec, params: np.ndarray, x: np.ndarray,
             upstream: np.ndarray, dropout_rng=None) -> np.ndarray:
    """Gradient of the batch-mean loss w.r.t. params.

    ``dropout_rng`` must be a generator in the same state as the one given to
    the paired forward call so the same masks are drawn.
    """
    x = np.asarray(x, dtype=np.float64)
    masks = draw_masks(spec, x.shape[0], dropout_rng) if dropout_rng is not None else None
    pgrad, _ = backward_batch(spec, params, x, upstream, masks)
    return pgrad


@dataclass
class AdamState:
    """First/second moment estimates plus the step counter."""

    m: np.ndarray
    v: np.ndarray
    t: int = 0
    beta1: float = ADAM_BETA1
    beta2: float = ADAM_BETA2
    eps: float = ADAM_EPS

    @classmethod
    def fresh(cls, n: int) -> "AdamState":
        return cls(m=np.zeros(n), v=np.zeros(n))

    def copy(self) -> "AdamState":
        return AdamState(self.m.copy(), self.v.copy(), self.t,
                         self.beta1, self.beta2, self.eps)


def _check_grad(grad: np.ndarray):
    finite = np.isfinite(grad)
    if not finite.all():
        idx = int(np.argmin(finite))
        raise NumericFault(f"non-finite gradient component at index {idx}", idx)


def adam_step_inplace(params: np.ndarray, grad: np.ndarray, state: AdamState,
                      lr: float) -> None:
    """Bias-corrected Adam update mutating params and state."""
    if params.shape != grad.shape or params.shape != state.m.shape:
        raise ShapeError("params, grad, and Adam moments must share a length")
    _check_grad(grad)
    state.t += 1
    kernels.adam_update(params, grad, state.m, state.v, state.t, lr,
                        state.beta1, state.beta2, state.eps)


def adam_step(params: np.ndarray, grad: np.ndarray, state: AdamState,
              lr: float) -> tuple[np.ndarray, AdamState]:
    """Functional Adam step: returns (new_params, new_state)."""
    new_params = params.copy()
    new_state = state.copy()
    adam_step_inplace(new_params, grad, new_state, lr)
    return new_params, new_state


def soft_update_inplace(target: np.ndarray, online: np.ndarray, tau: float) -> None:
    """target <- (1 - tau) * target + tau * online."""
    if target.shape != online.shape:
        raise ShapeError("target and online parameter lengths differ")
    if not 0.0 <= tau <= 1.0:
        raise ValueError(f"tau must lie in [0, 1], got {tau}")
    kernels.lerp(target, online, tau)


def soft_update(target: np.ndarray, online: np.ndarray, tau: float) -> np.ndarray:
    """Functional form of the soft target update."""
    out = target.copy()
    soft_update_inplace(out, online, tau)
    return out


def grad_check(params: np.ndarray,
               value_and_grad: Callable[[np.ndarray], tuple[float, np.ndarray]],
               eps: float = 1e-5) -> float:
    """Max relative error between analytic and central-difference gradients.

    Stochastic layers must be frozen by the caller (fixed masks / noise);
    finite differences are meaningless otherwise.
    """
    _, analytic = value_and_grad(params)
    worst = 0.0
    probe = params.astype(np.float64).copy()
    for i in range(probe.shape[0]):
        saved = probe[i]
        probe[i] = saved + eps
        up, _ = value_and_grad(probe)
        probe[i] = saved - eps
        down, _ = value_and_grad(probe)
        probe[i] = saved
        numeric = (up - down) / (2.0 * eps)
        denom = max(1.0, abs(analytic[i]), abs(numeric))
        worst = max(worst, abs(analytic[i] - numeric) / denom)
    return worst


def pack_params(values: np.ndarray) -> bytes:
    """Little-endian float64 payload prefixed by a 32-bit length."""
    v = np.ascontiguousarray(values, dtype="<f8")
    return struct.pack("<I", v.shape[0]) + v.tobytes()


def unpack_params(buf: bytes, offset: int = 0) -> tuple[np.ndarray, int]:
    """Inverse of pack_params; returns (vector, offset past the record)."""
    (n,) = struct.unpack_from("<I", buf, offset)
    start = offset + 4
    end = start + 8 * n
    vec = np.frombuffer(buf[start:end], dtype="<f8").astype(np.float64)
    return vec, end
