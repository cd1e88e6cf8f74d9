"""Transformer sidecar for the event-prediction toolkit.

Speaks two contracts with the main package: the binary embedding store
format (magic ``LEAPEMB1``) and the newline-delimited JSON generation
protocol (``{"id", "prompt"}`` -> ``{"id", "text"}``, ping health check).
Also packages the two fine-tuning recipes: masked-language-model tuning
for the encoder and sequence-to-sequence tuning for the generator.
"""

__version__ = "0.1.0"
