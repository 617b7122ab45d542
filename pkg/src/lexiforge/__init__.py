"""Lexicon construction for emerging concepts.

The pipeline filters raw corpora, annotates them against a gold lexicon in a
BIO scheme, builds similarity-gated context blocks, trains CNN / CNN-CRF /
linear-CRF sequence taggers from scratch and extracts new candidate terms for
expert review.
"""

__version__ = "0.1.0"
