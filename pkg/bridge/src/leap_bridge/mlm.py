"""Masked-language-model fine-tuning of the encoder.

The corpus is tokenized without special tokens, concatenated, and chunked
into fixed blocks; training masks tokens at the configured probability
(80% mask token, 10% random, 10% kept). Perplexity (exp of the mean
masked-token negative log-likelihood) is measured before and after on the
same fixed evaluation masks so the comparison is like for like.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import torch

from .config import BridgeConfig
from .models import load_encoder, save_checkpoint


@dataclass(frozen=True)
class MlmReport:
    perplexity_before: float
    perplexity_after: float
    blocks: int
    checkpoint: str


def _blocks_from_corpus(texts: Sequence[str], tokenizer, block_size: int) -> torch.Tensor:
    stream: list[int] = []
    for text in texts:
        stream.extend(tokenizer(text, add_special_tokens=False)["input_ids"])
    usable = (len(stream) // block_size) * block_size
    if usable == 0:
        # corpus shorter than one block: pad a single block
        pad = tokenizer.pad_token_id
        stream = (stream + [pad] * block_size)[:block_size]
        usable = block_size
    return torch.tensor(stream[:usable], dtype=torch.long).view(-1, block_size)


def _mask_tokens(blocks: torch.Tensor, tokenizer, probability: float, generator: torch.Generator):
    """Standard MLM corruption; labels are -100 outside masked positions."""
    inputs = blocks.clone()
    labels = blocks.clone()
    masked = torch.rand(blocks.shape, generator=generator) < probability
    special = torch.zeros_like(masked)
    for token_id in (tokenizer.pad_token_id, tokenizer.bos_token_id, tokenizer.eos_token_id):
        if token_id is not None:
            special |= blocks == token_id
    masked &= ~special
    if not masked.any():
        masked[0, 0] = True
    labels[~masked] = -100
    replace = masked & (torch.rand(blocks.shape, generator=generator) < 0.8)
    inputs[replace] = tokenizer.mask_token_id
    randomize = masked & ~replace & (torch.rand(blocks.shape, generator=generator) < 0.5)
    random_ids = torch.randint(len(tokenizer), blocks.shape, generator=generator)
    inputs[randomize] = random_ids[randomize]
    return inputs, labels


def _eval_perplexity(model, eval_batches, device) -> float:
    model.eval()
    total_nll = 0.0
    total_masked = 0
    with torch.no_grad():
        for inputs, labels in eval_batches:
            out = model(input_ids=inputs.to(device), labels=labels.to(device))
            n = int((labels != -100).sum())
            total_nll += float(out.loss) * n
            total_masked += n
    return float(torch.exp(torch.tensor(total_nll / total_masked)))


def finetune_mlm(
    corpus: Sequence[str],
    cfg: BridgeConfig,
    out_dir,
    encoder=None,
) -> MlmReport:
    """Tune the encoder on the corpus; returns before/after perplexity and
    writes a checkpoint loadable by the embedding exporter."""
    tokenizer, model = encoder if encoder is not None else load_encoder(cfg, corpus=corpus)
    device = cfg.device
    model.to(device)
    blocks = _blocks_from_corpus(corpus, tokenizer, cfg.mlm.block_size)

    eval_gen = torch.Generator().manual_seed(cfg.seed + 1)
    eval_batches = [
        _mask_tokens(blocks[i : i + cfg.mlm.batch_size], tokenizer, cfg.mlm.mask_probability, eval_gen)
        for i in range(0, len(blocks), cfg.mlm.batch_size)
    ]
    before = _eval_perplexity(model, eval_batches, device)

    train_gen = torch.Generator().manual_seed(cfg.seed)
    optimizer = torch.optim.AdamW(model.parameters(), lr=cfg.mlm.lr, weight_decay=cfg.mlm.weight_decay)
    model.train()
    order_gen = torch.Generator().manual_seed(cfg.seed + 2)
    for _ in range(cfg.mlm.epochs):
        order = torch.randperm(len(blocks), generator=order_gen)
        for start in range(0, len(blocks), cfg.mlm.batch_size):
            batch = blocks[order[start : start + cfg.mlm.batch_size]]
            inputs, labels = _mask_tokens(batch, tokenizer, cfg.mlm.mask_probability, train_gen)
            loss = model(input_ids=inputs.to(device), labels=labels.to(device)).loss
            optimizer.zero_grad()
            loss.backward()
            optimizer.step()

    after = _eval_perplexity(model, eval_batches, device)
    save_checkpoint(tokenizer, model, out_dir)
    return MlmReport(before, after, len(blocks), str(out_dir))
