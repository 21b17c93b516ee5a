"""Causal span extraction toolkit.

Extracts cause, effect, and signal spans from sentences via stacked BILOU
sequence tagging with a linear-chain CRF, detects sentence-level causality
with a class-weighted linear classifier, augments annotated training data,
and scores predictions with relaxed labeled-span metrics.
"""

__version__ = "0.1.0"
