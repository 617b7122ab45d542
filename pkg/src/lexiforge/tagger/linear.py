"""Sparse feature templates for the linear-chain CRF baseline."""

from __future__ import annotations

from typing import Iterable, Sequence

import numpy as np


def token_features(tokens: Sequence[str], t: int) -> list[str]:
    w = tokens[t]
    lw = w.lower()
    feats = ["bias", f"w={w}", f"lw={lw}"]
    for n in (1, 2, 3):
        if len(lw) >= n:
            feats.append(f"p{n}={lw[:n]}")
            feats.append(f"s{n}={lw[-n:]}")
    if w[:1].isupper():
        feats.append("is_cap")
    if w.isdigit():
        feats.append("is_digit")
    for off in (-2, -1, 1, 2):
        j = t + off
        feats.append(f"w[{off:+d}]={tokens[j].lower() if 0 <= j < len(tokens) else '<s>' if j < 0 else '</s>'}")
    return feats


def sentence_features(tokens: Sequence[str]) -> list[list[str]]:
    return [token_features(tokens, t) for t in range(len(tokens))]


class FeatureIndex:
    """Feature string -> column of the weight matrix; unseen features are dropped at lookup."""

    def __init__(self, names: Iterable[str] = ()):
        self.names = list(names)
        self.index = {f: i for i, f in enumerate(self.names)}

    @classmethod
    def build(cls, sentences: Iterable[Sequence[str]]) -> "FeatureIndex":
        seen = {}
        for tokens in sentences:
            for feats in sentence_features(tokens):
                for f in feats:
                    seen.setdefault(f, None)
        return cls(sorted(seen))

    def __len__(self):
        return len(self.names)

    def encode(self, tokens: Sequence[str]) -> list[list[int]]:
        return [[self.index[f] for f in feats if f in self.index] for feats in sentence_features(tokens)]


def pack_features(encoded: Sequence[Sequence[Sequence[int]]], pad_index: int) -> np.ndarray:
    """(B, T, F) index array padded with ``pad_index``."""
    B = len(encoded)
    T = max((len(s) for s in encoded), default=0)
    F = max((len(f) for s in encoded for f in s), default=1)
    out = np.full((B, T, F), pad_index, dtype=np.int64)
    for b, seq in enumerate(encoded):
        for t, feats in enumerate(seq):
            out[b, t, :len(feats)] = feats
    return out


def linear_emissions(feature_ids, weights) -> np.ndarray:
    """emissions[..., t, k] = sum of the weight rows of the features fired at t.

    ``feature_ids`` is (T, F) or (B, T, F) with padding pointing at an all-zero
    row of ``weights``.
    """
    return weights[feature_ids].sum(axis=-2)


def linear_backward(feature_ids, d_emissions, weights_shape, pad_index) -> np.ndarray:
    K = d_emissions.shape[-1]
    F = feature_ids.shape[-1]
    dW = np.zeros(weights_shape, dtype=d_emissions.dtype)
    np.add.at(dW, feature_ids.reshape(-1), np.repeat(d_emissions.reshape(-1, K), F, axis=0))
    dW[pad_index] = 0.0
    return dW
