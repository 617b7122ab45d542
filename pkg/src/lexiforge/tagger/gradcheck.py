"""Central finite-difference verification of the analytic training gradients."""

from __future__ import annotations

import numpy as np

from .estimators import make_tagger
from .labels import LabelSet


def _setup(kind, tokens, labels, seed, **overrides):
    rng = np.random.default_rng(seed)
    if kind.replace("-", "_") != "linear_crf":
        overrides.setdefault("min_freq", 1)
    model = make_tagger(kind, dtype="float64", **overrides)
    model.labels_ = LabelSet()
    model._prepare([tokens])
    params = model._init_params(rng)
    K = len(model.labels_)
    if "linear.W" in params:
        W = params["linear.W"]
        W[:-1] = rng.uniform(-0.1, 0.1, size=W[:-1].shape)
    if model.use_crf:
        params["crf.transitions"] = rng.uniform(-0.5, 0.5, (K, K))
        params["crf.start"] = rng.uniform(-0.5, 0.5, K)
        params["crf.stop"] = rng.uniform(-0.5, 0.5, K)
    model.params_ = params
    batch = model._batch([model._encode(tokens)])
    gold = np.array([model.labels_.encode(labels)])
    return model, batch, gold, rng


def _active_rows(name, batch, size):
    if name == "embed":
        return np.unique(batch["ids"])
    if name == "linear.W":
        return np.unique(batch["features"][batch["features"] < size - 1])
    return None


def _relu_pattern(model, batch):
    """Sign pattern of every ReLU input, or None for models without one."""
    if "ids" not in batch:
        return None
    _, cache = model._forward(batch)
    return np.concatenate([z.ravel() > 0 for _, _, z in cache["par"]] + [z.ravel() > 0 for _, z, _ in cache["deep"]])


def grad_check(kind, sample, epsilon=1e-4, n_coords=20, seed=0, detail=False, **overrides):
    """Max relative error between analytic and finite-difference gradients.

    ``sample`` is ``(tokens, labels)``.  At least ``n_coords`` coordinates per
    parameter group are probed (all of them when the group is smaller); for
    lookup tables the rows are restricted to those the sample touches.  A probe
    whose +/- epsilon evaluations switch any ReLU on or off measures the kink
    rather than the derivative, so it is discarded and another coordinate drawn.
    With ``detail=True`` the result is ``(max_error, per_group_error, skipped)``.
    """
    tokens, labels = sample
    model, batch, gold, rng = _setup(kind, list(tokens), list(labels), seed, **overrides)
    _, grads = model._loss_and_grads(batch, gold)
    base_pattern = _relu_pattern(model, batch)
    per_group, skipped = {}, {}
    for name in sorted(model.params_):
        p = model.params_[name]
        rows = _active_rows(name, batch, p.shape[0])
        if rows is not None:
            cand = (rows[:, None] * p.shape[1] + np.arange(p.shape[1])[None]).ravel()
        else:
            cand = np.arange(p.size)
        flat = p.reshape(-1)
        worst, used, skipped[name] = 0.0, 0, 0
        for idx in rng.permutation(cand):
            if used >= n_coords:
                break
            orig = flat[idx]
            flat[idx] = orig + epsilon
            up = model._loss_and_grads(batch, gold)[0]
            crossed = base_pattern is not None and not np.array_equal(_relu_pattern(model, batch), base_pattern)
            flat[idx] = orig - epsilon
            down = model._loss_and_grads(batch, gold)[0]
            crossed = crossed or (base_pattern is not None
                                  and not np.array_equal(_relu_pattern(model, batch), base_pattern))
            flat[idx] = orig
            if crossed:
                skipped[name] += 1
                continue
            used += 1
            numeric = (up - down) / (2 * epsilon)
            analytic = grads[name].reshape(-1)[idx]
            scale = max(abs(numeric), abs(analytic))
            if scale > 1e-10:
                worst = max(worst, abs(numeric - analytic) / scale)
        per_group[name] = worst
    top = max(per_group.values())
    return (top, per_group, skipped) if detail else top
