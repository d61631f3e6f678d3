from .config import DpConfig, TrainConfig
from .embedding import CASE_CODES, EdgeBatch, EdgeCase, EmbeddingTable, RowGradient
from .graph import Edge, EdgeSplit, IngestStats, Sign, SignedEdge, SignedGraph, WeightRule
from .privacy import LedgerSnapshot, PrivacyLedger
from .reports import Component, EvalRecord, EvalReport, RunManifest, TrainReport

__all__ = [
    "CASE_CODES",
    "Component",
    "DpConfig",
    "Edge",
    "EdgeBatch",
    "EdgeCase",
    "EdgeSplit",
    "EmbeddingTable",
    "EvalRecord",
    "EvalReport",
    "IngestStats",
    "LedgerSnapshot",
    "PrivacyLedger",
    "RowGradient",
    "RunManifest",
    "Sign",
    "SignedEdge",
    "SignedGraph",
    "TrainConfig",
    "TrainReport",
    "WeightRule",
]
