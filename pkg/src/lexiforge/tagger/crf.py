"""Linear-chain CRF: forward algorithm, marginals, negative log-likelihood and Viterbi.

Path score for labels y_1..y_T:
    start[y_1] + sum_t emissions[t, y_t] + sum_t transitions[y_{t-1}, y_t] + stop[y_T]
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np


def logsumexp(a, axis=None, keepdims=False):
    m = np.max(a, axis=axis, keepdims=True)
    m = np.where(np.isfinite(m), m, 0.0)
    with np.errstate(divide="ignore"):  # log(0) = -inf is the right answer for all -inf input
        out = np.log(np.sum(np.exp(a - m), axis=axis, keepdims=True)) + m
    return out if keepdims else np.squeeze(out, axis=axis)


@dataclass
class CrfParams:
    transitions: np.ndarray
    start: np.ndarray
    stop: np.ndarray

    @classmethod
    def zeros(cls, k, dtype=np.float64):
        return cls(np.zeros((k, k), dtype), np.zeros(k, dtype), np.zeros(k, dtype))

    @property
    def num_labels(self):
        return self.start.shape[0]


def path_score(emissions, crf: CrfParams, labels) -> float:
    y = np.asarray(labels)
    em = np.asarray(emissions)
    score = crf.start[y[0]] + em[np.arange(len(y)), y].sum() + crf.stop[y[-1]]
    if len(y) > 1:
        score += crf.transitions[y[:-1], y[1:]].sum()
    return float(score)


def crf_log_partition(emissions, crf: CrfParams) -> float:
    """log of the summed exponentiated path scores over all K^T label sequences."""
    em = np.asarray(emissions, dtype=np.float64)
    alpha = crf.start + em[0]
    for t in range(1, em.shape[0]):
        alpha = logsumexp(alpha[:, None] + crf.transitions, axis=0) + em[t]
    return float(logsumexp(alpha + crf.stop))


def crf_nll(emissions, crf: CrfParams, gold) -> float:
    return crf_log_partition(emissions, crf) - path_score(emissions, crf, gold)


def viterbi_decode(emissions, crf: CrfParams) -> tuple[list[int], float]:
    """Best-scoring label path; ties go to the smallest label index at each backtracking step."""
    em = np.asarray(emissions, dtype=np.float64)
    T, K = em.shape
    delta = crf.start + em[0]
    back = np.zeros((T, K), dtype=np.int64)
    for t in range(1, T):
        cand = delta[:, None] + crf.transitions
        back[t] = np.argmax(cand, axis=0)
        delta = cand[back[t], np.arange(K)] + em[t]
    final = delta + crf.stop
    best = int(np.argmax(final))
    path = [best]
    for t in range(T - 1, 0, -1):
        best = int(back[t, best])
        path.append(best)
    path.reverse()
    return path, float(final[path[-1]])


# ---------------------------------------------------------------------------
# batched loss and gradients for training

def crf_batch_nll_grad(emissions, mask, gold, crf: CrfParams):
    """Summed NLL over a padded batch and its gradients.

    emissions (B, T, K), mask (B, T) bool with every row a prefix of Trues,
    gold (B, T) int.  Returns ``(loss_sum, d_emissions, d_transitions, d_start, d_stop)``.
    """
    em = emissions
    B, T, K = em.shape
    trans = crf.transitions
    m = mask.astype(em.dtype)
    lengths = mask.sum(axis=1)
    alpha = np.empty_like(em)
    alpha[:, 0] = crf.start + em[:, 0]
    for t in range(1, T):
        new = logsumexp(alpha[:, t - 1, :, None] + trans[None], axis=1) + em[:, t]
        alpha[:, t] = np.where(mask[:, t, None], new, alpha[:, t - 1])
    log_z = logsumexp(alpha[:, T - 1] + crf.stop, axis=1)

    beta = np.empty_like(em)
    beta[:, T - 1] = crf.stop
    for t in range(T - 2, -1, -1):
        new = logsumexp(trans[None] + (em[:, t + 1] + beta[:, t + 1])[:, None, :], axis=2)
        beta[:, t] = np.where(mask[:, t + 1, None], new, crf.stop)

    marg = np.exp(alpha + beta - log_z[:, None, None]) * m[:, :, None]
    d_trans = np.zeros_like(trans)
    for t in range(T - 1):
        xi = np.exp(alpha[:, t, :, None] + trans[None] + (em[:, t + 1] + beta[:, t + 1])[:, None, :]
                    - log_z[:, None, None])
        d_trans += np.einsum("bij,b->ij", xi, m[:, t + 1])

    rows = np.arange(B)
    last = gold[rows, lengths - 1]
    gold_score = crf.start[gold[:, 0]] + crf.stop[last]
    gold_score = gold_score + (np.take_along_axis(em, gold[:, :, None], axis=2)[:, :, 0] * m).sum(axis=1)
    if T > 1:
        gold_score = gold_score + (trans[gold[:, :-1], gold[:, 1:]] * m[:, 1:]).sum(axis=1)

    d_em = marg.copy()
    onehot = np.zeros_like(em)
    np.put_along_axis(onehot, gold[:, :, None], 1.0, axis=2)
    d_em -= onehot * m[:, :, None]
    if T > 1:
        np.add.at(d_trans, (gold[:, :-1][mask[:, 1:]], gold[:, 1:][mask[:, 1:]]), -1.0)
    d_start = marg[:, 0].sum(axis=0)
    np.add.at(d_start, gold[:, 0], -1.0)
    d_stop = marg[rows, lengths - 1].sum(axis=0)
    np.add.at(d_stop, last, -1.0)
    loss = float((log_z - gold_score).sum())
    return loss, d_em, d_trans, d_start, d_stop
