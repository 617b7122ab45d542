"""Versioned binary model container.

Layout: magic ``LXFMODEL``, uint32 format version, uint64 header length, a UTF-8
JSON header (kind, estimator parameters, labels, vocabulary or feature names,
tensor names and shapes, history), then each tensor as row-major little-endian
float64 in header order.
"""

from __future__ import annotations

import json
import struct

import numpy as np

from .estimators import CNNCRFTagger, CNNTagger, LinearCRFTagger
from .labels import LabelSet, Vocab
from .linear import FeatureIndex

MAGIC = b"LXFMODEL"
FORMAT_VERSION = 1


def model_kind(model) -> str:
    if isinstance(model, LinearCRFTagger):
        return "linear_crf"
    return "cnn_crf" if model.use_crf else "cnn"


def save_model(model, path, extra: dict | None = None) -> None:
    names = sorted(model.params_)
    params = model.get_params()
    if "parallel_kernels" in params:
        params["parallel_kernels"] = list(params["parallel_kernels"])
    header = {
        "format_version": FORMAT_VERSION,
        "kind": model_kind(model),
        "estimator_params": params,
        "labels": model.labels_.labels,
        "tensors": [{"name": n, "shape": list(model.params_[n].shape)} for n in names],
        "history": getattr(model, "history_", []),
        "initial_loss": getattr(model, "initial_loss_", None),
        "extra": extra or {},
    }
    if hasattr(model, "vocab_"):
        header["vocab"] = model.vocab_.itos[2:]
        header["min_freq"] = model.vocab_.min_freq
    if hasattr(model, "features_"):
        header["features"] = model.features_.names
    blob = json.dumps(header, ensure_ascii=False, sort_keys=True).encode("utf-8")
    with open(path, "wb") as fh:
        fh.write(MAGIC)
        fh.write(struct.pack("<IQ", FORMAT_VERSION, len(blob)))
        fh.write(blob)
        for n in names:
            fh.write(np.ascontiguousarray(model.params_[n], dtype="<f8").tobytes())


def load_model(path):
    with open(path, "rb") as fh:
        data = fh.read()
    if data[:8] != MAGIC:
        raise ValueError(f"{path}: not a model file")
    version, hlen = struct.unpack_from("<IQ", data, 8)
    if version != FORMAT_VERSION:
        raise ValueError(f"{path}: unsupported model format version {version}")
    pos = 8 + 12
    header = json.loads(data[pos:pos + hlen].decode("utf-8"))
    pos += hlen
    kind = header["kind"]
    cls = {"linear_crf": LinearCRFTagger, "cnn": CNNTagger, "cnn_crf": CNNCRFTagger}[kind]
    params = header["estimator_params"]
    if "parallel_kernels" in params:
        params["parallel_kernels"] = tuple(params["parallel_kernels"])
    model = cls(**params)
    model.labels_ = LabelSet(header["labels"])
    if "vocab" in header:
        model.vocab_ = Vocab(header["vocab"], header.get("min_freq", 3))
    if "features" in header:
        model.features_ = FeatureIndex(header["features"])
    dtype = np.dtype(params.get("dtype", "float64"))
    model.params_ = {}
    for spec in header["tensors"]:
        shape = tuple(spec["shape"])
        count = int(np.prod(shape)) if shape else 1
        arr = np.frombuffer(data, dtype="<f8", count=count, offset=pos).reshape(shape)
        model.params_[spec["name"]] = arr.astype(dtype)
        pos += count * 8
    model.history_ = header.get("history", [])
    model.initial_loss_ = header.get("initial_loss")
    model.extra_ = header.get("extra", {})
    return model
