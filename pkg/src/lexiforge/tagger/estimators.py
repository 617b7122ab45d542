"""Scikit-learn style sequence taggers trained from scratch with Adam.

``X`` is a list of token sequences, ``y`` a list of BIO label sequences.
"""

from __future__ import annotations

import logging
from dataclasses import asdict, dataclass

import numpy as np
from sklearn.base import BaseEstimator
from sklearn.utils.validation import check_is_fitted

from ..errors import TrainingError
from ..evaluation import sequence_entity_metrics
from .cnn import CnnConfig, cnn_backward, cnn_forward, init_cnn_params, softmax_nll_grad
from .crf import CrfParams, crf_batch_nll_grad, viterbi_decode
from .labels import PAD, LabelSet, Vocab
from .linear import FeatureIndex, linear_backward, linear_emissions, pack_features

log = logging.getLogger(__name__)

MODEL_KINDS = ("cnn", "cnn_crf", "linear_crf")


@dataclass
class TrainConfig:
    learning_rate: float = 1e-3
    batch_size: int = 32
    max_epochs: int = 10
    patience: int = 2
    rng_seed: int = 0

    def __post_init__(self):
        if self.learning_rate <= 0 or self.batch_size <= 0 or self.max_epochs <= 0 or self.patience <= 0:
            raise ValueError("learning rate, batch size, epochs and patience must be positive")


def check_sequences(X, y=None):
    """Validate ragged token/label input; returns lists of lists."""
    if isinstance(X, str) or not hasattr(X, "__iter__"):
        raise ValueError("X must be a list of token sequences")
    X = [list(s) for s in X]
    for s in X:
        if any(not isinstance(t, str) for t in s):
            raise ValueError("tokens must be strings")
    if y is None:
        return X
    y = [list(s) for s in y]
    if len(X) != len(y):
        raise ValueError(f"X has {len(X)} sequences but y has {len(y)}")
    for i, (a, b) in enumerate(zip(X, y)):
        if len(a) != len(b):
            raise ValueError(f"sequence {i}: {len(a)} tokens but {len(b)} labels")
    return X, y


class Adam:
    def __init__(self, params, lr=1e-3, beta1=0.9, beta2=0.999, eps=1e-8):
        self.lr, self.beta1, self.beta2, self.eps = lr, beta1, beta2, eps
        self.m = {k: np.zeros_like(v) for k, v in params.items()}
        self.v = {k: np.zeros_like(v) for k, v in params.items()}
        self.t = 0

    def step(self, params, grads):
        self.t += 1
        c1 = 1 - self.beta1 ** self.t
        c2 = 1 - self.beta2 ** self.t
        for k in sorted(grads):
            g = grads[k]
            m, v = self.m[k], self.v[k]
            m *= self.beta1
            m += (1 - self.beta1) * g
            v *= self.beta2
            v += (1 - self.beta2) * g * g
            params[k] -= (self.lr * (m / c1) / (np.sqrt(v / c2) + self.eps)).astype(params[k].dtype)


def _pad(seqs, fill=0):
    T = max(len(s) for s in seqs)
    out = np.full((len(seqs), T), fill, dtype=np.int64)
    mask = np.zeros((len(seqs), T), dtype=bool)
    for i, s in enumerate(seqs):
        out[i, :len(s)] = s
        mask[i, :len(s)] = True
    return out, mask


class _SequenceTagger(BaseEstimator):
    use_crf = True

    # -- subclass hooks ---------------------------------------------------
    def _prepare(self, X):  # build vocab / feature index from training tokens
        raise NotImplementedError

    def _init_params(self, rng):
        raise NotImplementedError

    def _encode(self, seq):
        raise NotImplementedError

    def _batch(self, encoded):
        raise NotImplementedError

    def _forward(self, batch, train=False, rng=None):
        raise NotImplementedError

    def _backward(self, d_em, cache):
        raise NotImplementedError

    # -- shared machinery -------------------------------------------------
    @property
    def _dtype(self):
        return np.dtype(getattr(self, "dtype", "float64"))

    def _crf(self):
        p = self.params_
        return CrfParams(p["crf.transitions"], p["crf.start"], p["crf.stop"])

    def _loss_and_grads(self, batch, gold, train=False, rng=None):
        """Mean loss over the batch unit (sequences for CRF, tokens for softmax) and gradients."""
        em, cache = self._forward(batch, train=train, rng=rng)
        mask = batch["mask"]
        if self.use_crf:
            crf = self._crf()
            loss, d_em, d_t, d_s, d_e = crf_batch_nll_grad(em, mask, gold, crf)
            n = len(gold)
            grads = self._backward(d_em / n, cache)
            grads["crf.transitions"] = d_t / n
            grads["crf.start"] = d_s / n
            grads["crf.stop"] = d_e / n
        else:
            loss, d_em = softmax_nll_grad(em, gold, mask)
            n = int(mask.sum())
            grads = self._backward(d_em / n, cache)
        return loss / n, grads

    def _label_batches(self, X, y, order, batch_size):
        for i in range(0, len(order), batch_size):
            idx = order[i:i + batch_size]
            batch = self._batch([self._encoded[j] for j in idx])
            gold, _ = _pad([y[j] for j in idx])
            yield batch, gold

    def fit(self, X, y, X_dev=None, y_dev=None):
        X, y = check_sequences(X, y)
        if not X:
            raise TrainingError("empty training set")
        self.labels_ = LabelSet()
        y_ids = [self.labels_.encode(s) for s in y]
        rng = np.random.default_rng(self.random_state)
        self._prepare(X)
        self.params_ = self._init_params(rng)
        K = len(self.labels_)
        if self.use_crf:
            self.params_["crf.transitions"] = np.zeros((K, K), self._dtype)
            self.params_["crf.start"] = np.zeros(K, self._dtype)
            self.params_["crf.stop"] = np.zeros(K, self._dtype)
        self._encoded = [self._encode(s) for s in X]
        keep = [i for i, s in enumerate(X) if s]
        opt = Adam(self.params_, lr=self.learning_rate)
        self.history_ = []
        self.initial_loss_ = self._mean_loss(keep, y_ids)
        best_f1, best_params, bad_epochs = -1.0, None, 0
        for epoch in range(1, self.max_epochs + 1):
            order = [keep[i] for i in rng.permutation(len(keep))]
            total, units = 0.0, 0
            for batch, gold in self._label_batches(X, y_ids, order, self.batch_size):
                loss, grads = self._loss_and_grads(batch, gold, train=True, rng=rng)
                if not np.isfinite(loss):
                    raise TrainingError(f"loss diverged (NaN/inf) at epoch {epoch}")
                opt.step(self.params_, grads)
                w = len(gold) if self.use_crf else int(batch["mask"].sum())
                total += loss * w
                units += w
            record = {"epoch": epoch, "train_loss": total / units}
            if X_dev is not None and len(X_dev):
                pred = self.predict(X_dev)
                s = sequence_entity_metrics(pred, [list(l) for l in y_dev])
                record.update(dev_precision=s.precision, dev_recall=s.recall, dev_f1=s.f1)
                if s.f1 > best_f1:
                    best_f1, bad_epochs = s.f1, 0
                    best_params = {k: v.copy() for k, v in self.params_.items()}
                else:
                    bad_epochs += 1
            self.history_.append(record)
            log.info("epoch %d %s", epoch, record)
            if X_dev is not None and len(X_dev) and bad_epochs >= self.patience:
                break
        if best_params is not None:
            self.params_ = best_params
        del self._encoded
        return self

    def _mean_loss(self, keep, y_ids):
        total, units = 0.0, 0
        for batch, gold in self._label_batches(None, y_ids, keep, max(self.batch_size, 64)):
            loss, _ = self._loss_and_grads(batch, gold)
            w = len(gold) if self.use_crf else int(batch["mask"].sum())
            total += loss * w
            units += w
        return total / units if units else 0.0

    def emissions(self, X) -> list[np.ndarray]:
        """Per-sequence (T, K) emission scores in eval mode."""
        check_is_fitted(self, "params_")
        X = check_sequences(X)
        out = []
        for i in range(0, len(X), 64):
            chunk = X[i:i + 64]
            nonempty = [s for s in chunk if s]
            ems = iter([])
            if nonempty:
                em, _ = self._forward(self._batch([self._encode(s) for s in nonempty]))
                ems = iter([em[j, :len(s)] for j, s in enumerate(nonempty)])
            K = len(self.labels_)
            out.extend(next(ems) if s else np.zeros((0, K)) for s in chunk)
        return out

    def predict(self, X) -> list[list[str]]:
        out = []
        for em in self.emissions(X):
            if em.shape[0] == 0:
                out.append([])
            elif self.use_crf:
                out.append(self.labels_.decode(viterbi_decode(em, self._crf())[0]))
            else:
                out.append(self.labels_.decode(np.argmax(em, axis=1)))
        return out

    def score(self, X, y):
        X, y = check_sequences(X, y)
        return sequence_entity_metrics(self.predict(X), y).f1

    def loss(self, X, y) -> float:
        """Mean training objective on (X, y) in eval mode (no dropout)."""
        X, y = check_sequences(X, y)
        self._encoded = [self._encode(s) for s in X]
        try:
            return self._mean_loss([i for i, s in enumerate(X) if s], [self.labels_.encode(s) for s in y])
        finally:
            del self._encoded


class LinearCRFTagger(_SequenceTagger):
    """CRF over sparse hand-written token features."""

    use_crf = True

    def __init__(self, learning_rate=1e-3, batch_size=32, max_epochs=10, patience=2, random_state=0,
                 dtype="float64"):
        self.learning_rate = learning_rate
        self.batch_size = batch_size
        self.max_epochs = max_epochs
        self.patience = patience
        self.random_state = random_state
        self.dtype = dtype

    def _prepare(self, X):
        self.features_ = FeatureIndex.build(X)

    def _init_params(self, rng):
        # the extra last row is the padding feature, pinned at zero
        return {"linear.W": np.zeros((len(self.features_) + 1, len(self.labels_)), self._dtype)}

    def _encode(self, seq):
        return self.features_.encode(seq)

    def _batch(self, encoded):
        pad = len(self.features_)
        fids = pack_features(encoded, pad)
        mask = np.zeros(fids.shape[:2], dtype=bool)
        for i, s in enumerate(encoded):
            mask[i, :len(s)] = True
        return {"features": fids, "mask": mask}

    def _forward(self, batch, train=False, rng=None):
        em = linear_emissions(batch["features"], self.params_["linear.W"])
        return em * batch["mask"][:, :, None], batch

    def _backward(self, d_em, cache):
        W = self.params_["linear.W"]
        return {"linear.W": linear_backward(cache["features"], d_em, W.shape, W.shape[0] - 1)}


class CNNTagger(_SequenceTagger):
    """Convolutional tagger; ``use_crf`` switches between log-softmax and a CRF output layer."""

    def __init__(self, use_crf=False, embed_dim=300, parallel_kernels=(3, 5), parallel_channels=128,
                 deep_layers=3, deep_channels=256, deep_kernel=5, dropout_rate=0.5, min_freq=3,
                 learning_rate=1e-3, batch_size=32, max_epochs=10, patience=2, random_state=0,
                 dtype="float32"):
        self.use_crf = use_crf
        self.embed_dim = embed_dim
        self.parallel_kernels = parallel_kernels
        self.parallel_channels = parallel_channels
        self.deep_layers = deep_layers
        self.deep_channels = deep_channels
        self.deep_kernel = deep_kernel
        self.dropout_rate = dropout_rate
        self.min_freq = min_freq
        self.learning_rate = learning_rate
        self.batch_size = batch_size
        self.max_epochs = max_epochs
        self.patience = patience
        self.random_state = random_state
        self.dtype = dtype

    @property
    def config(self) -> CnnConfig:
        return CnnConfig(self.embed_dim, tuple(self.parallel_kernels), self.parallel_channels, self.deep_layers,
                         self.deep_channels, self.deep_kernel, self.dropout_rate)

    def _prepare(self, X):
        self.vocab_ = Vocab.build(X, self.min_freq)

    def _init_params(self, rng):
        return init_cnn_params(self.config, len(self.vocab_), len(self.labels_), rng, self._dtype)

    def _encode(self, seq):
        return self.vocab_.encode(seq)

    def _batch(self, encoded):
        ids, mask = _pad(encoded, PAD)
        return {"ids": ids, "mask": mask}

    def _forward(self, batch, train=False, rng=None):
        return cnn_forward(batch["ids"], batch["mask"], self.params_, self.config, train=train, rng=rng)

    def _backward(self, d_em, cache):
        return cnn_backward(d_em.astype(self._dtype), cache, self.params_, self.config)


class CNNCRFTagger(CNNTagger):
    def __init__(self, use_crf=True, embed_dim=300, parallel_kernels=(3, 5), parallel_channels=128,
                 deep_layers=3, deep_channels=256, deep_kernel=5, dropout_rate=0.5, min_freq=3,
                 learning_rate=1e-3, batch_size=32, max_epochs=10, patience=2, random_state=0,
                 dtype="float32"):
        super().__init__(use_crf, embed_dim, parallel_kernels, parallel_channels, deep_layers, deep_channels,
                         deep_kernel, dropout_rate, min_freq, learning_rate, batch_size, max_epochs, patience,
                         random_state, dtype)


def make_tagger(kind: str, config: TrainConfig | None = None, **overrides) -> _SequenceTagger:
    kind = kind.replace("-", "_")
    config = config or TrainConfig()
    common = dict(learning_rate=config.learning_rate, batch_size=config.batch_size,
                  max_epochs=config.max_epochs, patience=config.patience, random_state=config.rng_seed)
    common.update(overrides)
    if kind == "linear_crf":
        return LinearCRFTagger(**common)
    if kind == "cnn":
        return CNNTagger(use_crf=False, **common)
    if kind == "cnn_crf":
        return CNNCRFTagger(use_crf=True, **common)
    raise ValueError(f"unknown model kind {kind!r}; expected one of {MODEL_KINDS}")


def train(kind: str, train_data, dev_data=None, config: TrainConfig | None = None, **overrides):
    """Fit a tagger on ``(X, y)`` pairs; returns the estimator (``history_`` holds per-epoch records)."""
    X, y = train_data
    if not len(X):
        raise TrainingError("empty training set")
    model = make_tagger(kind, config, **overrides)
    if dev_data is not None:
        model.fit(X, y, dev_data[0], dev_data[1])
    else:
        model.fit(X, y)
    return model


def train_config_dict(model) -> dict:
    return {k: v for k, v in model.get_params().items()}
