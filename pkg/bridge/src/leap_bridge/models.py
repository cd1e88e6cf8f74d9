"""Model and tokenizer construction.

Real checkpoints load with ``from_pretrained``; the ``tiny-random`` recipe
trains a word-level tokenizer on the supplied corpus and initializes a
small model around it, which keeps everything runnable offline.
"""

from __future__ import annotations

from typing import Iterable, Sequence

import torch
from tokenizers import Tokenizer
from tokenizers.models import WordLevel
from tokenizers.pre_tokenizers import Whitespace
from tokenizers.processors import TemplateProcessing
from tokenizers.trainers import WordLevelTrainer
from transformers import (
    AutoModelForMaskedLM,
    AutoModelForSeq2SeqLM,
    AutoTokenizer,
    PreTrainedTokenizerFast,
    RobertaConfig,
    RobertaForMaskedLM,
    T5Config,
    T5ForConditionalGeneration,
)

from .config import BridgeConfig, parse_tiny_options


class ModelLoadError(RuntimeError):
    pass


SPECIAL_TOKENS = ["<pad>", "<unk>", "<s>", "</s>", "<mask>"]


def train_word_tokenizer(texts: Iterable[str], vocab_size: int = 4000) -> PreTrainedTokenizerFast:
    """Word-level tokenizer over whitespace-split corpus tokens."""
    tokenizer = Tokenizer(WordLevel(unk_token="<unk>"))
    tokenizer.pre_tokenizer = Whitespace()
    tokenizer.train_from_iterator(
        texts, WordLevelTrainer(vocab_size=vocab_size, special_tokens=SPECIAL_TOKENS)
    )
    tokenizer.post_processor = TemplateProcessing(
        single="<s> $A </s>",
        pair="<s> $A </s> $B </s>",
        special_tokens=[("<s>", 2), ("</s>", 3)],
    )
    return PreTrainedTokenizerFast(
        tokenizer_object=tokenizer,
        pad_token="<pad>",
        unk_token="<unk>",
        bos_token="<s>",
        eos_token="</s>",
        mask_token="<mask>",
        cls_token="<s>",
        sep_token="</s>",
    )


def _tiny_encoder(tokenizer: PreTrainedTokenizerFast, options: dict, seed: int) -> RobertaForMaskedLM:
    hidden = options.get("hidden", 32)
    layers = options.get("layers", 2)
    heads = options.get("heads", 2)
    max_pos = options.get("max_pos", 640)
    torch.manual_seed(seed)
    config = RobertaConfig(
        vocab_size=len(tokenizer),
        hidden_size=hidden,
        num_hidden_layers=layers,
        num_attention_heads=heads,
        intermediate_size=4 * hidden,
        max_position_embeddings=max_pos,
        pad_token_id=tokenizer.pad_token_id,
        bos_token_id=tokenizer.bos_token_id,
        eos_token_id=tokenizer.eos_token_id,
    )
    return RobertaForMaskedLM(config)


def _tiny_generator(tokenizer: PreTrainedTokenizerFast, options: dict, seed: int) -> T5ForConditionalGeneration:
    d_model = options.get("hidden", 64)
    layers = options.get("layers", 2)
    heads = options.get("heads", 2)
    torch.manual_seed(seed)
    config = T5Config(
        vocab_size=len(tokenizer),
        d_model=d_model,
        d_ff=4 * d_model,
        d_kv=max(8, d_model // heads),
        num_layers=layers,
        num_heads=heads,
        pad_token_id=tokenizer.pad_token_id,
        eos_token_id=tokenizer.eos_token_id,
        decoder_start_token_id=tokenizer.pad_token_id,
    )
    return T5ForConditionalGeneration(config)


def load_encoder(cfg: BridgeConfig, corpus: Sequence[str] | None = None):
    """(tokenizer, masked-LM model) for cfg.encoder_model.

    The LM head stays attached so logits pooling is available; hidden-state
    pooling uses the base encoder underneath it.
    """
    options = parse_tiny_options(cfg.encoder_model)
    try:
        if options is None:
            tokenizer = AutoTokenizer.from_pretrained(cfg.encoder_model)
            model = AutoModelForMaskedLM.from_pretrained(cfg.encoder_model)
        else:
            if not corpus:
                raise ModelLoadError("tiny-random encoder needs a corpus to train its tokenizer")
            tokenizer = train_word_tokenizer(corpus)
            model = _tiny_encoder(tokenizer, options, cfg.seed)
    except ModelLoadError:
        raise
    except Exception as exc:
        raise ModelLoadError(f"cannot load encoder {cfg.encoder_model!r}: {exc}") from exc
    model.to(cfg.device)
    model.eval()
    return tokenizer, model


def load_generator(cfg: BridgeConfig, corpus: Sequence[str] | None = None):
    """(tokenizer, seq2seq model) for cfg.generator_model."""
    options = parse_tiny_options(cfg.generator_model)
    try:
        if options is None:
            tokenizer = AutoTokenizer.from_pretrained(cfg.generator_model)
            model = AutoModelForSeq2SeqLM.from_pretrained(cfg.generator_model)
        else:
            if not corpus:
                raise ModelLoadError("tiny-random generator needs a corpus to train its tokenizer")
            tokenizer = train_word_tokenizer(corpus)
            model = _tiny_generator(tokenizer, options, cfg.seed)
    except ModelLoadError:
        raise
    except Exception as exc:
        raise ModelLoadError(f"cannot load generator {cfg.generator_model!r}: {exc}") from exc
    model.to(cfg.device)
    model.eval()
    return tokenizer, model


def save_checkpoint(tokenizer, model, directory) -> None:
    model.save_pretrained(directory)
    tokenizer.save_pretrained(directory)
