"""Event prediction over quintuple temporal knowledge graphs.

Quintuple events (subject, relation, object, day, text summary) feed three
prediction heads: a ranking object predictor (relational graph convolutions,
a recurrent relation tracker, and a convolutional decoder), a generative
object-prediction harness driven by prompt templates, and a multi-event
forecaster that aggregates per-event text embeddings with self-attention.
"""

__version__ = "0.1.0"
