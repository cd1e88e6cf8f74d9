"""Bridge configuration: model identifiers, pooling, decoding, and the
two fine-tuning hyperparameter blocks.

Model identifiers are either a local checkpoint directory / hub name, or a
``tiny-random[:key=value,...]`` recipe that builds a small randomly
initialized model with a tokenizer trained on the corpus at hand (the only
option in offline environments, and what the tests use).
"""

from __future__ import annotations

from dataclasses import dataclass, field

POOLING_MODES = ("all_tokens", "exclude_special")
REPRESENTATIONS = ("hidden", "logits")

TINY_SCHEME = "tiny-random"


@dataclass
class MlmTuning:
    lr: float = 2e-5
    epochs: int = 40
    weight_decay: float = 1e-2
    block_size: int = 512
    mask_probability: float = 0.15
    batch_size: int = 8


@dataclass
class Seq2SeqTuning:
    lr: float = 3e-4
    epochs: int = 5
    weight_decay: float = 1e-2
    batch_size: int = 2
    max_source_length: int = 512
    max_target_length: int = 32


@dataclass
class BridgeConfig:
    encoder_model: str = "roberta-large"
    generator_model: str = "google/flan-t5-base"
    pooling: str = "all_tokens"
    representation: str = "hidden"
    device: str = "cpu"
    max_new_tokens: int = 16
    beam_size: int = 1
    seed: int = 0
    mlm: MlmTuning = field(default_factory=MlmTuning)
    seq2seq: Seq2SeqTuning = field(default_factory=Seq2SeqTuning)

    def __post_init__(self):
        if self.pooling not in POOLING_MODES:
            raise ValueError(f"pooling must be one of {POOLING_MODES}, got {self.pooling!r}")
        if self.representation not in REPRESENTATIONS:
            raise ValueError(
                f"representation must be one of {REPRESENTATIONS}, got {self.representation!r}"
            )
        if self.max_new_tokens <= 0 or self.beam_size <= 0:
            raise ValueError("decoding parameters must be positive")

    @property
    def decoding(self) -> dict:
        """Decoding parameters echoed into generation responses."""
        return {"max_new_tokens": self.max_new_tokens, "beam_size": self.beam_size}


def parse_tiny_options(name: str) -> dict[str, int] | None:
    """Return the option map for a ``tiny-random[:k=v,...]`` identifier,
    or None when the identifier names a real checkpoint."""
    if not name.startswith(TINY_SCHEME):
        return None
    options: dict[str, int] = {}
    rest = name[len(TINY_SCHEME) :]
    if rest.startswith(":"):
        for part in rest[1:].split(","):
            if not part:
                continue
            key, _, value = part.partition("=")
            options[key.strip()] = int(value)
    elif rest:
        raise ValueError(f"malformed tiny-random identifier {name!r}")
    return options
