"""Neural building blocks on top of the autodiff tape."""
from __future__ import annotations

import math

import numpy as np

from . import autodiff as ad
from .autodiff import Tensor, as_tensor


def linear(x, weight, bias=None) -> Tensor:
    """Affine map ``x @ weight + bias`` for a rank-2 input."""
    x, weight = as_tensor(x), as_tensor(weight)
    if x.data.shape[-1] != weight.data.shape[0]:
        raise ValueError(
            f"linear shape mismatch: input {x.data.shape} vs weight {weight.data.shape}"
        )
    out = ad.matmul(x, weight)
    if bias is not None:
        out = ad.add(out, bias)
    return out


def mlp(x, layers, activation=ad.relu) -> Tensor:
    """Feed-forward stack: activation between hidden layers, linear output.

    ``layers`` is a list of (weight, bias) pairs.
    """
    out = as_tensor(x)
    last = len(layers) - 1
    for i, (w, b) in enumerate(layers):
        out = linear(out, w, b)
        if i != last:
            out = activation(out)
    return out


def gru_step(x, h, params) -> Tensor:
    """One GRU cell step for a batch of rows.

    z = sigmoid([x,h] Wz + bz); r = sigmoid([x,h] Wr + br)
    n = tanh([x, r*h] Wh + bh); h' = (1-z)*h + z*n
    """
    x, h = as_tensor(x), as_tensor(h)
    if x.data.ndim != 2 or h.data.ndim != 2 or x.data.shape[0] != h.data.shape[0]:
        raise ValueError(f"gru_step expects matching rank-2 batches: {x.data.shape} vs {h.data.shape}")
    xh = ad.concat([x, h], axis=1)
    z = ad.sigmoid(linear(xh, params["Wz"], params["bz"]))
    r = ad.sigmoid(linear(xh, params["Wr"], params["br"]))
    xrh = ad.concat([x, ad.mul(r, h)], axis=1)
    n = ad.tanh(linear(xrh, params["Wh"], params["bh"]))
    one_minus_z = ad.sub(1.0, z)
    return ad.add(ad.mul(one_minus_z, h), ad.mul(z, n))


def gru_params(store, name, input_size, hidden_size):
    """Register the three gate projections of a GRU cell.

    Input blocks are Xavier-uniform, recurrent blocks orthogonal.
    """
    params = {}
    for gate in ("z", "r", "h"):
        wx = store.xavier(f"{name}.Wx{gate}", (input_size, hidden_size))
        wh = store.orthogonal(f"{name}.Wh{gate}", (hidden_size, hidden_size))
        params[f"W{gate}"] = store.register(
            f"{name}.W{gate}", np.concatenate([wx, wh], axis=0)
        )
        params[f"b{gate}"] = store.zeros(f"{name}.b{gate}", (hidden_size,))
    return params


def run_gru(chain, params, h0) -> Tensor:
    """Unroll a GRU over a (steps, batch, features) sequence of row batches.

    ``chain`` is a list of rank-2 tensors, one per step. Returns the final
    hidden state; per-step hidden states via ``run_gru_states``.
    """
    h = h0
    for x in chain:
        h = gru_step(x, h, params)
    return h


def run_gru_states(chain, params, h0) -> list:
    states = []
    h = h0
    for x in chain:
        h = gru_step(x, h, params)
        states.append(h)
    return states


def scaled_dot_attention(q, k, v):
    """Single-head attention: softmax(q kᵀ / sqrt(d)) v.

    Returns (output, weights); weight rows sum to 1.
    """
    q, k, v = as_tensor(q), as_tensor(k), as_tensor(v)
    if k.data.shape[0] == 0:
        raise ValueError("no keys")
    if k.data.shape[0] != v.data.shape[0]:
        raise ValueError(f"key/value row mismatch: {k.data.shape} vs {v.data.shape}")
    if q.data.shape[-1] != k.data.shape[-1]:
        raise ValueError(f"query/key width mismatch: {q.data.shape} vs {k.data.shape}")
    scale = 1.0 / math.sqrt(q.data.shape[-1])
    scores = ad.mul(ad.matmul(q, ad.transpose(k)), scale)
    weights = ad.softmax(scores, axis=-1)
    return ad.matmul(weights, v), weights


def laplace_nll(y, mu, b) -> Tensor:
    """Elementwise Laplace negative log-likelihood log(2b) + |y-mu|/b.

    The caller sums over coordinates and averages over steps as needed.
    """
    mu, b = as_tensor(mu), as_tensor(b)
    y = np.asarray(y, dtype=np.float64) if not isinstance(y, Tensor) else y
    if np.any(b.data <= 0):
        raise ValueError("scale must be positive")
    return ad.add(ad.log(ad.mul(b, 2.0)), ad.div(ad.absolute(ad.sub(y, mu)), b))
