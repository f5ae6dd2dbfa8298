"""Noisy-channel decoding, n-best reranking and BLEU over desk-scale toy models."""

from ._core import (
    ArgumentError,
    DataError,
    DecoderConfig,
    Error,
    Models,
    NBestEntry,
    ScoreWeights,
    SyntheticConfig,
    TransportError,
    TuneResult,
    Vocabulary,
    bleu,
    combine,
    exhaustive_rerank,
    format_weights,
    group_by_sentence,
    make_synthetic,
    parse_weights,
    read_nbest,
    rerank,
    rerank_bleu,
    rerank_score,
    run_cli,
    select_best,
    sentence_precisions,
    tune,
    write_nbest,
)

__version__ = "0.1.0"

__all__ = [name for name in dir() if not name.startswith("_")]
