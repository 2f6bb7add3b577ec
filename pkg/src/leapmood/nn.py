"""Small numpy layer kit with hand-derived gradients.

Every layer is a pair of functions: ``*_forward`` returns outputs plus a cache,
``*_backward`` consumes upstream gradients and the cache and returns input
gradients plus a dict of parameter gradients keyed like the parameter dict.

Sequence layers are batched: inputs are ``(B, T, d)`` with an integer length
per row, and positions ``t >= length`` are padding. A 2-D ``(T, d)`` input
with a scalar length is accepted as a batch of one.
"""

from __future__ import annotations

import numpy as np

from .errors import InputError, NumericError

DTYPE = np.float64


def check_finite(name: str, *arrays) -> None:
    for a in arrays:
        if not np.all(np.isfinite(a)):
            raise NumericError(f"non-finite values in {name}")


def sigmoid(x):
    # tanh form never overflows
    return 0.5 * (1.0 + np.tanh(0.5 * x))


def logsumexp(x, axis=-1, keepdims=False):
    m = np.max(x, axis=axis, keepdims=True)
    m = np.where(np.isfinite(m), m, 0.0)
    out = np.log(np.sum(np.exp(x - m), axis=axis, keepdims=True)) + m
    return out if keepdims else np.squeeze(out, axis=axis)


def _as_batch(x, lengths):
    x = np.asarray(x, dtype=DTYPE)
    single = x.ndim == 2
    if single:
        x = x[None]
    lengths = np.atleast_1d(np.asarray(lengths, dtype=np.int64))
    if lengths.shape != (x.shape[0],):
        raise InputError(f"lengths shape {lengths.shape} does not match batch {x.shape[0]}")
    if np.any(lengths < 0) or np.any(lengths > x.shape[1]):
        raise InputError(f"lengths must lie in [0, {x.shape[1]}]")
    return x, lengths, single


# ---------------------------------------------------------------- embedding

def embedding_forward(table, ids):
    return table[ids]


def embedding_backward(dout, ids, table_shape):
    grad = np.zeros(table_shape, dtype=DTYPE)
    np.add.at(grad, ids.reshape(-1), dout.reshape(-1, table_shape[1]))
    return grad


# --------------------------------------------------------------------- LSTM

def init_lstm(rng, d_in, hidden, scale=None):
    """Gate blocks are laid out ``[input, forget, cell, output]`` along axis 1."""
    s = scale if scale is not None else 1.0 / np.sqrt(hidden)
    b = np.zeros(4 * hidden)
    b[hidden:2 * hidden] = 1.0  # forget-gate bias
    return {
        "W": rng.uniform(-s, s, size=(d_in, 4 * hidden)),
        "U": rng.uniform(-s, s, size=(hidden, 4 * hidden)),
        "b": b,
    }


def lstm_forward(x, params, lengths, input_mask=None, recurrent_mask=None):
    """Run an LSTM over padded sequences.

    ``input_mask`` (B, d) and ``recurrent_mask`` (B, h) are pre-scaled dropout
    masks reused at every timestep; pass ``None`` at inference.

    Returns ``(outputs, final_hidden, cache)``. ``outputs`` is zero at padded
    positions; ``final_hidden`` is the state after the last valid step.
    """
    x, lengths, single = _as_batch(x, lengths)
    W, U, b = params["W"], params["U"], params["b"]
    B, T, _ = x.shape
    h_dim = U.shape[0]
    h = np.zeros((B, h_dim))
    c = np.zeros((B, h_dim))
    out = np.zeros((B, T, h_dim))
    steps = []
    for t in range(T):
        m = (t < lengths).astype(DTYPE)[:, None]
        xt = x[:, t] if input_mask is None else x[:, t] * input_mask
        hr = h if recurrent_mask is None else h * recurrent_mask
        z = xt @ W + hr @ U + b
        i = sigmoid(z[:, :h_dim])
        f = sigmoid(z[:, h_dim:2 * h_dim])
        g = np.tanh(z[:, 2 * h_dim:3 * h_dim])
        o = sigmoid(z[:, 3 * h_dim:])
        c_new = f * c + i * g
        tc = np.tanh(c_new)
        h_new = o * tc
        steps.append((m, xt, hr, c, i, f, g, o, tc))
        c = m * c_new + (1.0 - m) * c
        h = m * h_new + (1.0 - m) * h
        out[:, t] = m * h_new
    check_finite("lstm output", out)
    cache = (params, steps, input_mask, recurrent_mask, single, x.shape)
    if single:
        return out[0], h[0], cache
    return out, h, cache


def lstm_backward(dout, dh_final, cache):
    """Return ``(dx, grads)`` for :func:`lstm_forward`."""
    params, steps, input_mask, recurrent_mask, single, x_shape = cache
    W, U = params["W"], params["U"]
    B, T, _ = x_shape
    h_dim = U.shape[0]
    if dout is None:
        dout = np.zeros((B, T, h_dim))
    elif single:
        dout = dout[None]
    if dh_final is None:
        dh_final = np.zeros((B, h_dim))
    elif single:
        dh_final = dh_final[None]
    dW = np.zeros_like(W)
    dU = np.zeros_like(U)
    db = np.zeros(4 * h_dim)
    dx = np.zeros(x_shape)
    dh_next = dh_final.copy()
    dc_next = np.zeros((B, h_dim))
    for t in range(T - 1, -1, -1):
        m, xt, hr, c_prev, i, f, g, o, tc = steps[t]
        dh_new = m * (dout[:, t] + dh_next)
        dc_new = m * dc_next + dh_new * o * (1.0 - tc * tc)
        do = dh_new * tc
        di = dc_new * g
        dg = dc_new * i
        df = dc_new * c_prev
        dz = np.concatenate(
            [di * i * (1 - i), df * f * (1 - f), dg * (1 - g * g), do * o * (1 - o)], axis=1
        )
        dW += xt.T @ dz
        dU += hr.T @ dz
        db += dz.sum(axis=0)
        dxt = dz @ W.T
        dx[:, t] = dxt if input_mask is None else dxt * input_mask
        dhr = dz @ U.T
        dh_prev = dhr if recurrent_mask is None else dhr * recurrent_mask
        dh_next = dh_prev + (1.0 - m) * dh_next
        dc_next = dc_new * f + (1.0 - m) * dc_next
    grads = {"W": dW, "U": dU, "b": db}
    return (dx[0] if single else dx), grads


def _reverse_index(lengths, T):
    """Per-row permutation reversing the valid prefix; an involution."""
    t = np.arange(T)[None, :]
    L = lengths[:, None]
    return np.where(t < L, L - 1 - t, t)


def bilstm_forward(x, params_fwd, params_bwd, lengths, recurrent_masks=(None, None)):
    """Bidirectional LSTM; output is ``[forward | backward]`` along the last axis."""
    x, lengths, single = _as_batch(x, lengths)
    B, T, _ = x.shape
    rows = np.arange(B)[:, None]
    rev = _reverse_index(lengths, T)
    out_f, _, cache_f = lstm_forward(x, params_fwd, lengths, recurrent_mask=recurrent_masks[0])
    out_r, _, cache_b = lstm_forward(x[rows, rev], params_bwd, lengths, recurrent_mask=recurrent_masks[1])
    out = np.concatenate([out_f, out_r[rows, rev]], axis=-1)
    cache = (cache_f, cache_b, rev, single, params_fwd["U"].shape[0])
    return (out[0] if single else out), cache


def bilstm_backward(dout, cache):
    cache_f, cache_b, rev, single, h_dim = cache
    if single:
        dout = dout[None]
    rows = np.arange(dout.shape[0])[:, None]
    dx_f, g_f = lstm_backward(dout[..., :h_dim], None, cache_f)
    dx_r, g_b = lstm_backward(dout[..., h_dim:][rows, rev], None, cache_b)
    dx = dx_f + dx_r[rows, rev]
    return (dx[0] if single else dx), g_f, g_b


# ---------------------------------------------------------------- attention

def init_attention(rng, k, a):
    s = 1.0 / np.sqrt(k)
    return {
        "W": rng.uniform(-s, s, size=(k, a)),
        "b": np.zeros(a),
        "v": rng.uniform(-1.0 / np.sqrt(a), 1.0 / np.sqrt(a), size=a),
    }


def attention_forward(hidden, params, lengths):
    """Additive attention pooling.

    Scores ``e_t = v . tanh(W^T h_t + b)`` over valid steps, softmax weights
    (zero on padding), output ``sum_t alpha_t h_t``. Returns
    ``(pooled, alpha, cache)``.
    """
    hidden, lengths, single = _as_batch(hidden, lengths)
    if np.any(lengths < 1):
        raise InputError("attention needs at least one valid timestep per row")
    B, T, _ = hidden.shape
    u = np.tanh(hidden @ params["W"] + params["b"])
    e = u @ params["v"]
    valid = np.arange(T)[None, :] < lengths[:, None]
    e = np.where(valid, e, -np.inf)
    e = e - e.max(axis=1, keepdims=True)
    w = np.exp(e)
    alpha = w / w.sum(axis=1, keepdims=True)
    pooled = np.einsum("bt,btk->bk", alpha, hidden)
    check_finite("attention output", pooled)
    cache = (hidden, params, u, alpha, single)
    if single:
        return pooled[0], alpha[0], cache
    return pooled, alpha, cache


def attention_backward(dpooled, cache):
    hidden, params, u, alpha, single = cache
    if single:
        dpooled = dpooled[None]
    dalpha = np.einsum("bk,btk->bt", dpooled, hidden)
    dh = alpha[:, :, None] * dpooled[:, None, :]
    de = alpha * (dalpha - np.sum(alpha * dalpha, axis=1, keepdims=True))
    dv = np.einsum("bt,bta->a", de, u)
    dpre = de[:, :, None] * params["v"] * (1.0 - u * u)
    dW = np.einsum("btk,bta->ka", hidden, dpre)
    db = dpre.sum(axis=(0, 1))
    dh += dpre @ params["W"].T
    return (dh[0] if single else dh), {"W": dW, "b": db, "v": dv}


# ------------------------------------------------------------ dense/softmax

def init_dense(rng, k, n):
    s = 1.0 / np.sqrt(k)
    return {"W": rng.uniform(-s, s, size=(k, n)), "b": np.zeros(n)}


def log_softmax(logits):
    z = logits - logits.max(axis=-1, keepdims=True)
    return z - np.log(np.sum(np.exp(z), axis=-1, keepdims=True))


def dense_forward(x, params):
    logits = x @ params["W"] + params["b"]
    logp = log_softmax(logits)
    check_finite("dense output", logp)
    return logp, (x, params, logp)


def dense_softmax(x, params):
    """Probability vector(s) from a dense layer; rows sum to one."""
    return np.exp(dense_forward(x, params)[0])


def dense_backward(dlogp, cache):
    """Backprop through ``log_softmax(x W + b)`` given d loss / d log-probs."""
    x, params, logp = cache
    p = np.exp(logp)
    dlogits = dlogp - p * dlogp.sum(axis=-1, keepdims=True)
    x2 = x.reshape(-1, x.shape[-1])
    d2 = dlogits.reshape(-1, dlogits.shape[-1])
    grads = {"W": x2.T @ d2, "b": d2.sum(axis=0)}
    return dlogits @ params["W"].T, grads


# ---------------------------------------------------------------------- CRF

def init_crf(n_labels):
    return {
        "transitions": np.zeros((n_labels, n_labels)),
        "start": np.zeros(n_labels),
        "end": np.zeros(n_labels),
    }


def crf_score(emissions, path, params):
    """Unnormalized score of one label path."""
    path = list(path)
    s = params["start"][path[0]] + params["end"][path[-1]]
    s += sum(emissions[t, y] for t, y in enumerate(path))
    s += sum(params["transitions"][a, b] for a, b in zip(path, path[1:]))
    return float(s)


def _crf_forward_backward(emissions, params):
    S, L = emissions.shape
    T = params["transitions"]
    alpha = np.empty((S, L))
    beta = np.empty((S, L))
    alpha[0] = params["start"] + emissions[0]
    for s in range(1, S):
        alpha[s] = logsumexp(alpha[s - 1][:, None] + T, axis=0) + emissions[s]
    beta[S - 1] = params["end"]
    for s in range(S - 2, -1, -1):
        beta[s] = logsumexp(T + (emissions[s + 1] + beta[s + 1])[None, :], axis=1)
    log_z = logsumexp(alpha[S - 1] + params["end"])
    return alpha, beta, log_z


def crf_log_partition(emissions, params):
    emissions = np.asarray(emissions, dtype=DTYPE)
    return float(_crf_forward_backward(emissions, params)[2])


def crf_nll(emissions, gold, params):
    """Negative log-likelihood of ``gold`` under a linear-chain CRF.

    Returns ``(loss, grads)``; ``grads`` has an ``"emissions"`` entry next to
    the parameter gradients.
    """
    emissions = np.asarray(emissions, dtype=DTYPE)
    S, L = emissions.shape
    if S < 1:
        raise InputError("CRF needs at least one position")
    gold = [int(y) for y in gold]
    if len(gold) != S:
        raise InputError(f"{len(gold)} gold labels for {S} positions")
    if any(not 0 <= y < L for y in gold):
        raise InputError(f"gold labels {gold} outside [0, {L})")
    alpha, beta, log_z = _crf_forward_backward(emissions, params)
    loss = log_z - crf_score(emissions, gold, params)
    if not np.isfinite(loss):
        raise NumericError("non-finite CRF loss")

    unary = np.exp(alpha + beta - log_z)
    d_em = unary.copy()
    d_start = unary[0].copy()
    d_end = unary[S - 1].copy()
    d_T = np.zeros((L, L))
    for s in range(S - 1):
        pair = alpha[s][:, None] + params["transitions"] + (emissions[s + 1] + beta[s + 1])[None, :]
        d_T += np.exp(pair - log_z)
    for s, y in enumerate(gold):
        d_em[s, y] -= 1.0
    d_start[gold[0]] -= 1.0
    d_end[gold[-1]] -= 1.0
    for a, b in zip(gold, gold[1:]):
        d_T[a, b] -= 1.0
    # loss >= 0 holds mathematically; clamp rounding noise
    return max(float(loss), 0.0), {"emissions": d_em, "transitions": d_T, "start": d_start, "end": d_end}


def crf_viterbi(emissions, params):
    """Highest-scoring path; ties go to the lowest label id."""
    emissions = np.asarray(emissions, dtype=DTYPE)
    S, L = emissions.shape
    T = params["transitions"]
    delta = params["start"] + emissions[0]
    back = np.zeros((S, L), dtype=np.int64)
    for s in range(1, S):
        cand = delta[:, None] + T
        back[s] = np.argmax(cand, axis=0)
        delta = cand[back[s], np.arange(L)] + emissions[s]
    final = delta + params["end"]
    y = int(np.argmax(final))
    best = float(final[y])
    path = [y]
    for s in range(S - 1, 0, -1):
        y = int(back[s, y])
        path.append(y)
    return path[::-1], best


# ------------------------------------------------------------------ dropout

DROPOUT_MODES = ("standard", "spatial", "recurrent")


def dropout_mask(shape, rate, rng):
    if not 0.0 <= rate < 1.0:
        raise InputError(f"dropout rate must lie in [0, 1), got {rate}")
    if rate == 0.0:
        return np.ones(shape)
    keep = rng.random(shape) >= rate
    return keep / (1.0 - rate)


def dropout_apply(x, rate, mode="standard", rng=None, training=True):
    """Inverted dropout.

    ``standard`` draws an independent mask per element. ``spatial`` and
    ``recurrent`` draw one mask per (row, channel) and reuse it along the
    time axis (axis -2), which zeroes whole channels of a ``(B, T, C)``
    sequence; the recurrent flavour is what LSTMs apply to ``h_{t-1}``.
    """
    if mode not in DROPOUT_MODES:
        raise InputError(f"unknown dropout mode {mode!r}")
    if not 0.0 <= rate < 1.0:
        raise InputError(f"dropout rate must lie in [0, 1), got {rate}")
    x = np.asarray(x, dtype=DTYPE)
    if not training or rate == 0.0:
        return x
    if mode == "standard" or x.ndim < 2:
        shape = x.shape
    else:
        shape = x.shape[:-2] + (1, x.shape[-1])
    return x * dropout_mask(shape, rate, rng)


# --------------------------------------------------------------------- Adam

class AdamState:
    def __init__(self):
        self.step = 0
        self.m: dict[str, np.ndarray] = {}
        self.v: dict[str, np.ndarray] = {}


def adam_step(params, grads, state: AdamState, lr, beta1=0.9, beta2=0.999, eps=1e-8):
    """In-place bias-corrected Adam update of every array in ``params``."""
    for name, g in grads.items():
        if name not in params or params[name].shape != g.shape:
            raise InputError(
                f"gradient {name!r} shape {g.shape} does not match parameter "
                f"{params[name].shape if name in params else None}"
            )
    state.step += 1
    t = state.step
    c1 = 1.0 - beta1 ** t
    c2 = 1.0 - beta2 ** t
    for name, g in grads.items():
        m = state.m.setdefault(name, np.zeros_like(g))
        v = state.v.setdefault(name, np.zeros_like(g))
        m *= beta1
        m += (1.0 - beta1) * g
        v *= beta2
        v += (1.0 - beta2) * g * g
        params[name] -= lr * (m / c1) / (np.sqrt(v / c2) + eps)
    return params, state
