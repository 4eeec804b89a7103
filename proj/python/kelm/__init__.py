"""Hierarchical knowledge enhancement for machine reading comprehension.

Thin wrapper over the compiled `_kelm` extension: knowledge-graph loading
and K-hop retrieval, BILINEAR embedding training, tokenization and entity
linking, span decoding, metrics, the synthetic benchmark generator and the
two-stage training loop.
"""

from _kelm import (  # noqa: F401
    EmbeddingTable,
    KelmError,
    KnowledgeGraph,
    TokenizedText,
    bilinear_score,
    build_lexicon,
    decode_span,
    evaluate_kge,
    evaluate_run,
    find_mentions,
    gen_synthetic,
    khop_subgraph,
    load_embeddings,
    load_triples,
    metrics_extractive,
    metrics_multirc,
    normalize_answer,
    tokenize,
    train_bilinear,
    train_run,
)

__all__ = [
    "EmbeddingTable",
    "KelmError",
    "KnowledgeGraph",
    "TokenizedText",
    "bilinear_score",
    "build_lexicon",
    "decode_span",
    "evaluate_kge",
    "evaluate_run",
    "find_mentions",
    "gen_synthetic",
    "khop_subgraph",
    "load_embeddings",
    "load_triples",
    "metrics_extractive",
    "metrics_multirc",
    "normalize_answer",
    "tokenize",
    "train_bilinear",
    "train_run",
]
