"""Personalized session-based recommendation on a heterogeneous global graph.

The package turns per-user session logs into a typed directed graph over
user and item nodes, trains a relation-aware graph neural network plus an
attention/gated session encoder on next-item prediction, and evaluates with
HR@k / MRR@k against an item-to-item baseline and ablation arms.
"""

__version__ = "0.1.0"
