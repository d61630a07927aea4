"""Inference-time sequence generation (beam search) and the BLEU metric."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np


class EmptyReference(ValueError):
    pass


@dataclass
class Hypothesis:
    """One beam entry. ``tokens`` excludes EOS; ``path`` is the emission
    sequence used for tie-breaking and does include EOS when emitted."""

    tokens: tuple[int, ...]
    path: tuple[int, ...]
    logp: float
    state: object = None
    done: bool = False

    def sort_key(self):
        # higher logp first; ties toward lower token ids, then shorter paths
        return (-self.logp, self.path)


@dataclass
class Beam:
    """Fixed-width frontier; completed hypotheses stay frozen in their slots."""

    width: int = 7
    max_len: int = 40
    hypotheses: list[Hypothesis] = field(default_factory=list)


def beam_search(step_fn, init_state, eos_token: int, beam: int = 7,
                max_len: int = 40, start_token: int | None = None,
                length_normalize: bool = False) -> list[int]:
    """Highest cumulative log-probability sequence under a step decoder.

    step_fn(state, prev_token) returns (log-probabilities over the vocab,
    new state). Each round every live hypothesis is extended by every token
    and the top `beam` candidates survive by cumulative log-probability;
    emitting eos_token freezes a hypothesis in its slot, and anything still
    live at max_len stops as-is (without an EOS factor). Ties break toward
    lower token ids and then shorter sequences. With beam=1 this is exactly
    greedy argmax decoding. Returned tokens exclude EOS.
    """
    if beam < 1:
        raise ValueError(f"beam must be >= 1, got {beam}")
    if start_token is None:
        start_token = eos_token
    front = Beam(width=beam, max_len=max_len,
                 hypotheses=[Hypothesis((), (), 0.0, init_state)])
    for _ in range(max_len):
        live = [h for h in front.hypotheses if not h.done]
        if not live:
            break
        frozen = [h for h in front.hypotheses if h.done]
        logps = []
        states = []
        for hyp in live:
            prev = hyp.tokens[-1] if hyp.tokens else start_token
            logp, state = step_fn(hyp.state, prev)
            logps.append(np.asarray(logp, dtype=float))
            states.append(state)
        scores = np.stack(logps)
        scores += np.array([h.logp for h in live])[:, None]
        front.hypotheses = _select(live, states, scores, frozen, eos_token, beam)
    finished = [h if h.done else Hypothesis(h.tokens, h.path, h.logp, None, True)
                for h in front.hypotheses]
    if length_normalize:
        best = min(finished,
                   key=lambda h: (-h.logp / max(1, len(h.tokens)), h.path))
    else:
        best = min(finished, key=Hypothesis.sort_key)
    return list(best.tokens)


def _select(live, states, scores, frozen, eos_token, beam):
    """Top `beam` of frozen hypotheses plus all one-token extensions."""
    n, V = scores.shape

    def build(i: int, tok: int) -> Hypothesis:
        hyp = live[i]
        lp = float(scores[i, tok])
        if tok == eos_token:
            return Hypothesis(hyp.tokens, hyp.path + (tok,), lp, None, True)
        return Hypothesis(hyp.tokens + (tok,), hyp.path + (tok,), lp,
                          states[i], False)

    flat = scores.reshape(-1)
    k = min(beam, flat.size)
    top = np.argpartition(-flat, k - 1)[:k]
    boundary = flat[top].min()
    if int((flat >= boundary).sum()) > k:
        # exact tie handling at the cut: sort every boundary candidate
        pool = [build(j // V, j % V) for j in np.flatnonzero(flat >= boundary)]
    else:
        pool = [build(j // V, j % V) for j in (int(t) for t in top)]
    pool.extend(frozen)
    pool.sort(key=Hypothesis.sort_key)
    return pool[:beam]


def greedy_first_token(step_fn, init_state, start_token: int) -> int:
    """Argmax of the first decoder step (lowest token id on ties)."""
    logp, _ = step_fn(init_state, start_token)
    return int(np.argmax(logp))


def _ngram_counts(tokens, n: int) -> dict:
    counts: dict = {}
    for i in range(len(tokens) - n + 1):
        g = tuple(tokens[i:i + n])
        counts[g] = counts.get(g, 0) + 1
    return counts


def bleu(candidate, reference, max_n: int = 4, smoothing: bool = True,
         epsilon: float = 0.1) -> float:
    """Sentence BLEU: geometric mean of clipped n-gram precisions times BP.

    Precision denominators are clamped to at least 1; with smoothing on, an
    n-gram order with zero matches contributes epsilon / denominator instead
    of zeroing the whole score. An empty candidate scores 0 outright.
    """
    reference = list(reference)
    if not reference:
        raise EmptyReference("reference must be nonempty")
    candidate = list(candidate)
    if not candidate:
        return 0.0
    log_p_sum = 0.0
    for n in range(1, max_n + 1):
        cand_counts = _ngram_counts(candidate, n)
        ref_counts = _ngram_counts(reference, n)
        matched = sum(min(c, ref_counts.get(g, 0))
                      for g, c in cand_counts.items())
        denom = max(1, sum(cand_counts.values()))
        if matched == 0:
            if not smoothing:
                return 0.0
            p = epsilon / denom
        else:
            p = matched / denom
        log_p_sum += np.log(p) / max_n
    c, r = len(candidate), len(reference)
    bp = 1.0 if c > r else float(np.exp(1.0 - r / c))
    return float(bp * np.exp(log_p_sum))
