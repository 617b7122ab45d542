"""Sequence taggers: CNN, CNN-CRF and a linear-feature CRF."""

from .cnn import CnnConfig, cnn_forward, log_softmax_nll
from .crf import CrfParams, crf_log_partition, crf_nll, path_score, viterbi_decode
from .estimators import CNNCRFTagger, CNNTagger, LinearCRFTagger, TrainConfig, make_tagger, train
from .gradcheck import grad_check
from .labels import LabelSet, Vocab
from .linear import linear_emissions
from .modelio import load_model, save_model

__all__ = [
    "CNNCRFTagger", "CNNTagger", "CnnConfig", "CrfParams", "LabelSet", "LinearCRFTagger", "TrainConfig", "Vocab",
    "cnn_forward", "crf_log_partition", "crf_nll", "grad_check", "linear_emissions", "load_model",
    "log_softmax_nll", "make_tagger", "path_score", "save_model", "train", "viterbi_decode",
]
