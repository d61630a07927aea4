"""Mini-batch training for the sequence models.

Batches are grouped by (input length, target length) so each subgroup runs
as one matrix-shaped forward/backward; gradients are recombined into the
batch mean in a fixed order, which keeps whole runs bit-reproducible for a
given seed.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, NamedTuple

import numpy as np

from .corpus import EOS_ID, ImputationExample, TokenSeq
from .models import Batch, Model, batch_loss_and_grads
from .neural import AdamState, adam_step, clip_global_norm


@dataclass
class TrainSettings:
    epochs: int = 30
    batch_size: int = 512
    lr: float = 1e-3
    lr_after: float = 1e-4
    lr_switch_epoch: int = 10  # epochs 1..switch use lr, the rest lr_after
    grad_clip: float = 5.0
    log_every: int = 100
    max_batches: int | None = None


class TrainExample(NamedTuple):
    """Surface-token training pair; EOS is appended to targets by the loop."""

    inputs: tuple[int, ...]
    zero_mask: tuple[bool, ...] | None
    targets: tuple[int, ...]


def lm_examples(sentences: list[TokenSeq]) -> list[TrainExample]:
    """Reconstruction task: the target is the input sentence itself."""
    return [TrainExample(s.tokens[:s.T], None, s.tokens[:s.T])
            for s in sentences]


def imputation_examples(examples: list[ImputationExample]) -> list[TrainExample]:
    return [TrainExample(e.input_tokens.tokens[:e.input_tokens.T], e.zero_mask,
                         e.target_tokens.tokens[:e.target_tokens.T])
            for e in examples]


def kl_weight_at(anneal_steps: int, step: int) -> float:
    """Linear 0 -> 1 ramp over anneal_steps batches; 1.0 when the ramp is off."""
    if anneal_steps <= 0:
        return 1.0
    return min(1.0, step / anneal_steps)


def train_model(model: Model, examples: list[TrainExample],
                settings: TrainSettings, rng: np.random.Generator,
                log: Callable[[str], None] | None = None,
                adam: AdamState | None = None) -> list[dict]:
    """Adam training with the two-phase learning rate schedule.

    Returns one history record per batch with the loss components and the
    KL weight in effect. The model is updated in place; pass an AdamState to
    keep the optimizer accumulators (for checkpointing or resuming).
    """
    if not examples:
        raise ValueError("no training examples")
    params = model.named_params()
    if adam is None:
        adam = AdamState(lr=settings.lr)
    history: list[dict] = []
    n = len(examples)
    step = 0
    for epoch in range(1, settings.epochs + 1):
        adam.lr = (settings.lr if epoch <= settings.lr_switch_epoch
                   else settings.lr_after)
        order = rng.permutation(n)
        for start in range(0, n, settings.batch_size):
            batch = [examples[int(i)] for i in order[start:start + settings.batch_size]]
            kl_w = kl_weight_at(model.config.kl_anneal_steps, step)
            stats, grads = _batch_step(model, batch, kl_w, rng)
            norm = clip_global_norm(grads, settings.grad_clip)
            adam_step(params, grads, adam)
            step += 1
            record = {"step": step, "epoch": epoch, "lr": adam.lr,
                      "kl_weight": kl_w, "grad_norm": norm, **stats}
            history.append(record)
            if log is not None and (step % settings.log_every == 0 or step == 1):
                log(f"step {step} epoch {epoch} "
                    f"recon {stats['recon']:.4f} kld {stats['kld']:.4f} "
                    f"kl_weight {kl_w:.3f} lr {adam.lr:g}")
            if settings.max_batches is not None and step >= settings.max_batches:
                return history
    return history


def _batch_step(model: Model, batch: list[TrainExample], kl_weight: float,
                rng: np.random.Generator):
    """Forward/backward over one shuffled batch, grouped by sequence lengths."""
    groups: dict[tuple[int, int], list[TrainExample]] = {}
    for ex in batch:
        groups.setdefault((len(ex.inputs), len(ex.targets)), []).append(ex)
    total_grads = model.zero_grads()
    sums = {"total": 0.0, "recon": 0.0, "kld": 0.0}
    B = len(batch)
    needs_noise = model.config.variant != "ae"
    word_drop = model.config.word_dropout > 0.0
    for key in sorted(groups):
        exs = groups[key]
        tokens = np.array([ex.inputs for ex in exs], dtype=np.intp)
        if exs[0].zero_mask is not None:
            mask = np.array([ex.zero_mask for ex in exs], dtype=bool)
        else:
            mask = None
        targets = np.array([ex.targets + (EOS_ID,) for ex in exs], dtype=np.intp)
        noise = (rng.standard_normal((len(exs), model.config.d_z))
                 if needs_noise else None)
        stats, grads = batch_loss_and_grads(
            model, Batch(tokens, mask, targets), kl_weight, noise,
            compute_grads=True, word_drop_rng=rng if word_drop else None)
        w = len(exs) / B
        for name, g in grads.items():
            total_grads[name] += w * g
        for k in sums:
            sums[k] += float(stats[k].sum())
    return {k: v / B for k, v in sums.items()}, total_grads
