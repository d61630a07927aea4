"""Shared fixtures and independent oracles used across the suite."""

from __future__ import annotations

from itertools import product

import numpy as np
import pytest

from sentvae.corpus import build_vocab, tokenize
from sentvae.embedding import SkipgramConfig, train_skipgram
from sentvae.models import ModelConfig, init_model
from sentvae.synthetic import toy_corpus


def make_decoder_table(V: int, rng: np.random.Generator, alpha: float = 1.0):
    """A toy stochastic decoder whose distribution depends on the full prefix.

    States are prefix tuples, so the table behaves like a real autoregressive
    model; distributions are Dirichlet draws cached per (state, token).
    """
    table: dict = {}

    def step(state, token):
        key = (state, token)
        if key not in table:
            table[key] = np.log(rng.dirichlet(np.full(V, alpha)))
        return table[key], state + (token,)

    return step


def exhaustive_best(step, V: int, max_len: int, eos: int) -> tuple[int, ...]:
    """Brute-force argmax over every output string of length <= max_len.

    Strings shorter than max_len pay the EOS probability; strings of exactly
    max_len stop without it. Ties break like the beam: lower token id first,
    then shorter (comparison on the emission path including EOS).
    """
    best = None
    vocab = [t for t in range(V) if t != eos]
    for L in range(max_len + 1):
        for s in product(vocab, repeat=L):
            state, prev, lp = (), eos, 0.0
            for tok in s:
                logp, _ = step(state, prev)
                lp += float(logp[tok])
                state, prev = state + (prev,), tok
            if L < max_len:
                logp, _ = step(state, prev)
                lp += float(logp[eos])
                key = (-lp, s + (eos,))
            else:
                key = (-lp, s)
            if best is None or key < best[0]:
                best = (key, s)
    return best[1]


@pytest.fixture(scope="session")
def toy_setup():
    """32 distinct short sentences, their vocab and small trained embeddings."""
    rng = np.random.default_rng(0)
    sents = [tokenize(line) for line in toy_corpus(32, rng)]
    vocab = build_vocab(sents, min_count=1)
    encoded = [vocab.encode(s) for s in sents]
    with_eos = [vocab.encode(s, append_eos=True) for s in sents]
    emb = train_skipgram(with_eos, vocab,
                         SkipgramConfig(dim=24, window=3, negatives=3,
                                        epochs=5, seed=0))
    return {"sentences": encoded, "vocab": vocab, "embeddings": emb}


def small_model(variant: str, vocab_size: int = 9, d_word: int = 4, d_h: int = 5,
                d_z: int = 5, max_len: int = 10, seed: int = 0,
                emb_scale: float = 0.5):
    rng = np.random.default_rng(seed)
    cfg = ModelConfig(variant, vocab_size, d_word=d_word, d_h=d_h, d_z=d_z,
                      max_len=max_len, kl_anneal_steps=0)
    emb = rng.standard_normal((vocab_size, d_word)) * emb_scale
    return init_model(cfg, emb, rng)
