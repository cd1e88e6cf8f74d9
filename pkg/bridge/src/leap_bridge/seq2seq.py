"""Sequence-to-sequence fine-tuning of the generator on prompt/answer
pairs, with ROUGE measured before and after on an evaluation set (the
training pairs themselves by default, i.e. a memorization check)."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import torch

from .config import BridgeConfig
from .models import load_generator, save_checkpoint
from .serve import GenerationBackend
from .textscore import rouge_f1


@dataclass(frozen=True)
class RougeReport:
    rouge1: float
    rouge2: float
    rougeL: float


@dataclass(frozen=True)
class Seq2SeqReport:
    before: RougeReport
    after: RougeReport
    pairs: int
    checkpoint: str


def _encode_batch(pairs, tokenizer, cfg: BridgeConfig, device):
    sources = tokenizer(
        [p for p, _ in pairs],
        return_tensors="pt",
        padding=True,
        truncation=True,
        max_length=cfg.seq2seq.max_source_length,
    )
    # targets carry no leading bos: the decoder should emit the answer
    # tokens directly, terminated by eos
    limit = cfg.seq2seq.max_target_length - 1
    rows = [
        tokenizer(answer, add_special_tokens=False)["input_ids"][:limit] + [tokenizer.eos_token_id]
        for _, answer in pairs
    ]
    width = max(len(r) for r in rows)
    labels = torch.full((len(rows), width), -100, dtype=torch.long)
    for i, row in enumerate(rows):
        labels[i, : len(row)] = torch.tensor(row, dtype=torch.long)
    return (
        sources["input_ids"].to(device),
        sources["attention_mask"].to(device),
        labels.to(device),
    )


def evaluate_rouge(pairs: Sequence[tuple[str, str]], backend: GenerationBackend) -> RougeReport:
    scores = [rouge_f1(answer, backend.generate(prompt)) for prompt, answer in pairs]
    n = len(scores)
    return RougeReport(
        rouge1=sum(s[0] for s in scores) / n,
        rouge2=sum(s[1] for s in scores) / n,
        rougeL=sum(s[2] for s in scores) / n,
    )


def finetune_seq2seq(
    pairs: Sequence[tuple[str, str]],
    cfg: BridgeConfig,
    out_dir,
    eval_pairs: Sequence[tuple[str, str]] | None = None,
    generator=None,
) -> Seq2SeqReport:
    """Tune the generator on (prompt, answer) pairs; writes a checkpoint
    servable by the generation endpoint."""
    if not pairs:
        raise ValueError("no training pairs")
    corpus = [text for pair in pairs for text in pair]
    tokenizer, model = generator if generator is not None else load_generator(cfg, corpus=corpus)
    device = cfg.device
    model.to(device)
    eval_pairs = list(eval_pairs) if eval_pairs is not None else list(pairs)
    backend = GenerationBackend(cfg, generator=(tokenizer, model))

    before = evaluate_rouge(eval_pairs, backend)

    optimizer = torch.optim.AdamW(
        model.parameters(), lr=cfg.seq2seq.lr, weight_decay=cfg.seq2seq.weight_decay
    )
    order_gen = torch.Generator().manual_seed(cfg.seed)
    model.train()
    for _ in range(cfg.seq2seq.epochs):
        order = torch.randperm(len(pairs), generator=order_gen).tolist()
        for start in range(0, len(pairs), cfg.seq2seq.batch_size):
            batch = [pairs[i] for i in order[start : start + cfg.seq2seq.batch_size]]
            input_ids, attention_mask, labels = _encode_batch(batch, tokenizer, cfg, device)
            loss = model(input_ids=input_ids, attention_mask=attention_mask, labels=labels).loss
            optimizer.zero_grad()
            loss.backward()
            optimizer.step()
    model.eval()

    after = evaluate_rouge(eval_pairs, backend)
    save_checkpoint(tokenizer, model, out_dir)
    return Seq2SeqReport(before, after, len(pairs), str(out_dir))
