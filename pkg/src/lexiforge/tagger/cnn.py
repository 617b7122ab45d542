"""Convolutional emission scorer written directly in numpy.

embedding -> parallel same-padded convolutions (kernels 3 and 5) -> concat
-> three same-padded convolutions with ReLU and dropout -> per-token affine map.
All activations at padded positions are held at zero, so a padded batch gives
exactly the same scores as sequences processed one by one.
"""

from __future__ import annotations

from dataclasses import asdict, dataclass, field

import numpy as np


@dataclass
class CnnConfig:
    embed_dim: int = 300
    parallel_kernels: tuple[int, ...] = (3, 5)
    parallel_channels: int = 128
    deep_layers: int = 3
    deep_channels: int = 256
    deep_kernel: int = 5
    dropout_rate: float = 0.5
    init_scale: float = 0.1

    def __post_init__(self):
        self.parallel_kernels = tuple(self.parallel_kernels)
        if min(self.embed_dim, self.parallel_channels, self.deep_layers, self.deep_channels, self.deep_kernel) <= 0:
            raise ValueError("CNN sizes must be positive")
        if any(k <= 0 or k % 2 == 0 for k in self.parallel_kernels + (self.deep_kernel,)):
            raise ValueError("kernel sizes must be positive and odd for same padding")
        if not 0.0 <= self.dropout_rate < 1.0:
            raise ValueError("dropout_rate must lie in [0, 1)")

    def to_dict(self):
        d = asdict(self)
        d["parallel_kernels"] = list(self.parallel_kernels)
        return d


def init_cnn_params(config: CnnConfig, vocab_size: int, num_labels: int, rng: np.random.Generator,
                    dtype=np.float32) -> dict[str, np.ndarray]:
    s = config.init_scale

    def u(*shape):
        return rng.uniform(-s, s, size=shape).astype(dtype)

    p = {"embed": u(vocab_size, config.embed_dim)}
    p["embed"][0] = 0.0
    for k in config.parallel_kernels:
        p[f"par{k}.W"] = u(k * config.embed_dim, config.parallel_channels)
        p[f"par{k}.b"] = np.zeros(config.parallel_channels, dtype)
    c_in = config.parallel_channels * len(config.parallel_kernels)
    for i in range(config.deep_layers):
        p[f"deep{i}.W"] = u(config.deep_kernel * c_in, config.deep_channels)
        p[f"deep{i}.b"] = np.zeros(config.deep_channels, dtype)
        c_in = config.deep_channels
    p["out.W"] = u(c_in, num_labels)
    p["out.b"] = np.zeros(num_labels, dtype)
    return p


def _im2col(x, k):
    B, T, C = x.shape
    pad = k // 2
    xp = np.zeros((B, T + 2 * pad, C), dtype=x.dtype)
    xp[:, pad:pad + T] = x
    return np.concatenate([xp[:, i:i + T] for i in range(k)], axis=2)


def _col2im(dcols, k, C):
    B, T, _ = dcols.shape
    pad = k // 2
    dxp = np.zeros((B, T + 2 * pad, C), dtype=dcols.dtype)
    for i in range(k):
        dxp[:, i:i + T] += dcols[:, :, i * C:(i + 1) * C]
    return dxp[:, pad:pad + T]


def conv1d(x, W, b, k):
    cols = _im2col(x, k)
    return cols @ W + b, cols


def cnn_forward(ids, mask, params, config: CnnConfig, train=False, rng: np.random.Generator | None = None):
    """Emission scores (B, T, K) and the cache needed by :func:`cnn_backward`.

    ``ids`` is (B, T) int, ``mask`` (B, T) bool.  In train mode each deep ReLU
    output is followed by inverted dropout drawn from ``rng``.
    """
    ids = np.asarray(ids)
    if ids.ndim == 1:
        ids = ids[None]
        mask = np.ones_like(ids, dtype=bool) if mask is None else np.asarray(mask)[None]
    mask = np.asarray(mask, dtype=bool)
    vocab_size = params["embed"].shape[0]
    if ids.size and (ids.max() >= vocab_size or ids.min() < 0):
        raise ValueError(f"token id out of range for vocabulary of size {vocab_size}")
    dtype = params["embed"].dtype
    m = mask.astype(dtype)[:, :, None]
    x0 = params["embed"][ids] * m
    cache = {"ids": ids, "m": m, "par": [], "deep": []}
    outs = []
    for k in config.parallel_kernels:
        z, cols = conv1d(x0, params[f"par{k}.W"], params[f"par{k}.b"], k)
        a = np.maximum(z, 0) * m
        cache["par"].append((k, cols, z))
        outs.append(a)
    h = np.concatenate(outs, axis=2)
    p = config.dropout_rate
    for i in range(config.deep_layers):
        z, cols = conv1d(h, params[f"deep{i}.W"], params[f"deep{i}.b"], config.deep_kernel)
        a = np.maximum(z, 0) * m
        drop = None
        if train and p > 0:
            if rng is None:
                raise ValueError("train mode needs an rng for dropout")
            drop = (rng.random(a.shape) >= p).astype(dtype) / dtype.type(1.0 - p)
            a = a * drop
        cache["deep"].append((cols, z, drop))
        h = a
    cache["h"] = h
    logits = (h @ params["out.W"] + params["out.b"]) * m
    return logits, cache


def cnn_backward(d_logits, cache, params, config: CnnConfig) -> dict[str, np.ndarray]:
    m = cache["m"]
    d_logits = d_logits * m
    grads = {}
    h = cache["h"]
    K = d_logits.shape[2]
    grads["out.W"] = h.reshape(-1, h.shape[2]).T @ d_logits.reshape(-1, K)
    grads["out.b"] = d_logits.sum(axis=(0, 1))
    dh = d_logits @ params["out.W"].T
    for i in reversed(range(config.deep_layers)):
        cols, z, drop = cache["deep"][i]
        if drop is not None:
            dh = dh * drop
        dz = dh * (z > 0) * m
        W = params[f"deep{i}.W"]
        grads[f"deep{i}.W"] = cols.reshape(-1, cols.shape[2]).T @ dz.reshape(-1, dz.shape[2])
        grads[f"deep{i}.b"] = dz.sum(axis=(0, 1))
        dh = _col2im(dz @ W.T, config.deep_kernel, W.shape[0] // config.deep_kernel)
    d_x0 = 0
    offset = 0
    for k, cols, z in cache["par"]:
        width = z.shape[2]
        dz = dh[:, :, offset:offset + width] * (z > 0) * m
        offset += width
        W = params[f"par{k}.W"]
        grads[f"par{k}.W"] = cols.reshape(-1, cols.shape[2]).T @ dz.reshape(-1, width)
        grads[f"par{k}.b"] = dz.sum(axis=(0, 1))
        d_x0 = d_x0 + _col2im(dz @ W.T, k, config.embed_dim)
    d_x0 = d_x0 * m
    d_embed = np.zeros_like(params["embed"])
    np.add.at(d_embed, cache["ids"].ravel(), d_x0.reshape(-1, config.embed_dim))
    d_embed[0] = 0.0
    grads["embed"] = d_embed
    return grads


def log_softmax(logits, axis=-1):
    mx = np.max(logits, axis=axis, keepdims=True)
    shifted = logits - mx
    return shifted - np.log(np.sum(np.exp(shifted), axis=axis, keepdims=True))


def log_softmax_nll(emissions, gold, mask=None) -> float:
    """Mean over unmasked tokens of -log softmax(emissions)[gold]."""
    em = np.asarray(emissions, dtype=np.float64)
    gold = np.asarray(gold)
    if em.ndim == 2:
        em, gold = em[None], gold[None]
        mask = None if mask is None else np.asarray(mask)[None]
    mask = np.ones(gold.shape, bool) if mask is None else np.asarray(mask, bool)
    lp = log_softmax(em)
    picked = np.take_along_axis(lp, gold[:, :, None], axis=2)[:, :, 0]
    n = mask.sum()
    return float(-(picked * mask).sum() / n) if n else 0.0


def softmax_nll_grad(logits, gold, mask):
    """Summed token NLL and its gradient w.r.t. the logits."""
    lp = log_softmax(logits)
    m = mask.astype(logits.dtype)
    picked = np.take_along_axis(lp, gold[:, :, None], axis=2)[:, :, 0]
    loss = float(-(picked * m).sum())
    d = np.exp(lp)
    np.put_along_axis(d, gold[:, :, None], np.take_along_axis(d, gold[:, :, None], axis=2) - 1.0, axis=2)
    return loss, d * m[:, :, None]
