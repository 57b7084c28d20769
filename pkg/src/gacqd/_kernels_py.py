"""Pure-numpy fallback for the compiled kernels.

Semantics must stay identical to ``_kernels.pyx``: same parameter layout,
same activation codes (0=identity, 1=relu, 2=tanh), same averaging rules.
Parameter gradients are averaged over the batch; input gradients are per-row.
"""

import numpy as np

ACT_IDENTITY = 0
ACT_RELU = 1
ACT_TANH = 2


def _layer_views(sizes, ln, params):
    """Yield (W, b, gain, offset) views into the flat parameter vector."""
    off = 0
    for layer in range(len(sizes) - 1):
        n_in = int(sizes[layer])
        n_out = int(sizes[layer + 1])
        w = params[off : off + n_out * n_in].reshape(n_out, n_in)
        off += n_out * n_in
        b = params[off : off + n_out]
        off += n_out
        gain = offset = None
        if ln[layer]:
            gain = params[off : off + n_out]
            off += n_out
            offset = params[off : off + n_out]
            off += n_out
        yield w, b, gain, offset


def mlp_forward(sizes, acts, ln, params, x, masks, ln_eps, keep_cache):
    """Run the network on batch ``x``; optionally keep per-layer caches.

    Returns (output, cache). ``cache[l]`` is (activation, zhat, inv_std),
    the latter two None for layers without layer norm.
    """
    h = x
    cache = [] if keep_cache else None
    for layer, (w, b, gain, offset) in enumerate(_layer_views(sizes, ln, params)):
        z = h @ w.T + b
        if masks is not None and masks[layer] is not None:
            z = z * masks[layer]
        zhat = inv = None
        if ln[layer]:
            mu = z.mean(axis=1, keepdims=True)
            var = z.var(axis=1, keepdims=True)
            inv = 1.0 / np.sqrt(var + ln_eps)
            zhat = (z - mu) * inv
            z = gain * zhat + offset
        code = acts[layer]
        if code == ACT_RELU:
            h = np.maximum(z, 0.0)
        elif code == ACT_TANH:
            h = np.tanh(z)
        else:
            h = z
        if keep_cache:
            cache.append((h, zhat, inv))
    return h, cache


def mlp_backward(sizes, acts, ln, params, x, upstream, masks, ln_eps, cache):
    """Reverse-mode pass. Returns (param_grad, input_grad).

    ``param_grad`` is d(mean-over-rows loss)/d(params); ``input_grad`` holds
    per-row d(loss_row)/d(input_row), not averaged.
    """
    if cache is None:
        _, cache = mlp_forward(sizes, acts, ln, params, x, masks, ln_eps, True)
    n_layers = len(sizes) - 1
    batch = x.shape[0]
    pgrad = np.zeros_like(params)
    views = list(_layer_views(sizes, ln, params))
    gviews = list(_layer_views(sizes, ln, pgrad))
    da = upstream
    for layer in range(n_layers - 1, -1, -1):
        w, _, gain, _ = views[layer]
        dw, db, dgain, doffset = gviews[layer]
        a_out, zhat, inv = cache[layer]
        h = cache[layer - 1][0] if layer > 0 else x
        code = acts[layer]
        if code == ACT_RELU:
            dz = da * (a_out > 0.0)
        elif code == ACT_TANH:
            dz = da * (1.0 - a_out * a_out)
        else:
            dz = da
        if ln[layer]:
            dgain += (dz * zhat).sum(axis=0)
            doffset += dz.sum(axis=0)
            dzhat = dz * gain
            m1 = dzhat.mean(axis=1, keepdims=True)
            m2 = (dzhat * zhat).mean(axis=1, keepdims=True)
            dz = inv * (dzhat - m1 - zhat * m2)
        if masks is not None and masks[layer] is not None:
            dz = dz * masks[layer]
        dw += dz.T @ h
        db += dz.sum(axis=0)
        da = dz @ w
    pgrad /= batch
    return pgrad, da


def adam_update(params, grad, m, v, t, lr, beta1, beta2, eps):
    """One bias-corrected Adam step, in place on params/m/v. ``t`` is 1-based."""
    m *= beta1
    m += (1.0 - beta1) * grad
    v *= beta2
    v += (1.0 - beta2) * grad * grad
    mhat = m / (1.0 - beta1**t)
    vhat = v / (1.0 - beta2**t)
    params -= lr * mhat / (np.sqrt(vhat) + eps)


def lerp(target, online, tau):
    """target <- (1 - tau) * target + tau * online, in place."""
    target *= 1.0 - tau
    target += tau * online
