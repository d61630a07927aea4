"""Skip-gram word vector pre-training and similarity utilities.

Vectors are trained once with negative sampling and then frozen; the
sequence models look words up in the resulting table and never fine-tune it.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .corpus import TokenSeq, Vocab

Array = np.ndarray


class EmptyCorpus(ValueError):
    pass


class ZeroVector(ValueError):
    pass


@dataclass
class SkipgramConfig:
    dim: int = 100
    window: int = 5
    negatives: int = 5
    epochs: int = 10
    lr: float = 0.025
    seed: int = 0

    def validate(self) -> None:
        if min(self.dim, self.window, self.negatives, self.epochs) <= 0:
            raise ValueError("dim, window, negatives and epochs must be positive")
        if self.lr <= 0:
            raise ValueError("lr must be positive")


@dataclass
class EmbeddingMatrix:
    """One row of word vectors per vocabulary id, UNK and EOS included."""

    vectors: Array  # (V, dim)
    vocab: Vocab

    @property
    def dim(self) -> int:
        return self.vectors.shape[1]


def _sentence_pairs(tokens, window: int, rng: np.random.Generator):
    """(center, context) pairs with a per-center window drawn from [1, window]."""
    T = len(tokens)
    spans = rng.integers(1, window + 1, size=T)
    centers, contexts = [], []
    for i in range(T):
        lo = max(0, i - int(spans[i]))
        hi = min(T, i + int(spans[i]) + 1)
        for j in range(lo, hi):
            if j != i:
                centers.append(tokens[i])
                contexts.append(tokens[j])
    return np.array(centers, dtype=np.intp), np.array(contexts, dtype=np.intp)


def sgns_loss(w_center: Array, w_context: Array, centers: Array,
              contexts: Array, negatives: Array) -> float:
    """Mean negative-sampling loss over a fixed pair set (lower is better)."""
    vc = w_center[centers]
    pos = np.einsum("nd,nd->n", vc, w_context[contexts])
    neg = np.einsum("nd,nkd->nk", vc, w_context[negatives])
    # -log sigmoid(x) == log(1 + exp(-x)), stable via logaddexp
    loss = np.logaddexp(0.0, -pos) + np.logaddexp(0.0, neg).sum(axis=1)
    return float(loss.mean())


def train_skipgram(corpus: list[TokenSeq], vocab: Vocab,
                   config: SkipgramConfig | None = None,
                   loss_trace: list | None = None) -> EmbeddingMatrix:
    """Train center-word vectors on encoded sentences (EOS tokens included).

    Negatives are drawn from the corpus unigram distribution raised to the
    3/4 power. The learning rate decays linearly with the number of center
    words processed, floored at 1e-4 of its initial value. Deterministic for
    a fixed config.seed.
    """
    cfg = config or SkipgramConfig()
    cfg.validate()
    if not corpus:
        raise EmptyCorpus("skip-gram needs a nonempty corpus")
    V = len(vocab)
    rng = np.random.default_rng(cfg.seed)

    counts = np.zeros(V)
    for seq in corpus:
        counts += np.bincount(np.asarray(seq.tokens, dtype=np.intp), minlength=V)
    noise = counts ** 0.75
    if noise.sum() == 0:
        raise EmptyCorpus("corpus contains no tokens")
    noise_cdf = np.cumsum(noise / noise.sum())

    w_center = (rng.random((V, cfg.dim)) - 0.5) / cfg.dim
    w_context = np.zeros((V, cfg.dim))

    total_words = cfg.epochs * sum(len(seq.tokens) for seq in corpus)
    processed = 0
    for _epoch in range(cfg.epochs):
        for si, seq in enumerate(corpus):
            lr = cfg.lr * max(1.0 - processed / total_words, 1e-4)
            processed += len(seq.tokens)
            centers, contexts = _sentence_pairs(seq.tokens, cfg.window, rng)
            if centers.size == 0:
                continue
            negs = np.searchsorted(
                noise_cdf, rng.random((centers.size, cfg.negatives)))

            vc = w_center[centers]                       # (n, d)
            up = w_context[contexts]                     # (n, d)
            un = w_context[negs]                         # (n, k, d)
            s_pos = _sigmoid(np.einsum("nd,nd->n", vc, up))
            s_neg = _sigmoid(np.einsum("nd,nkd->nk", vc, un))

            g_pos = s_pos - 1.0                          # d/dscore of -log sigmoid
            d_vc = g_pos[:, None] * up + np.einsum("nk,nkd->nd", s_neg, un)
            d_up = g_pos[:, None] * vc
            d_un = s_neg[..., None] * vc[:, None, :]

            np.add.at(w_center, centers, -lr * d_vc)
            np.add.at(w_context, contexts, -lr * d_up)
            np.add.at(w_context, negs.reshape(-1),
                      -lr * d_un.reshape(-1, cfg.dim))

            if loss_trace is not None:
                loss = (-np.log(np.clip(s_pos, 1e-12, None)).mean()
                        - np.log(np.clip(1 - s_neg, 1e-12, None)).sum(axis=1).mean())
                loss_trace.append((si, float(loss)))
    return EmbeddingMatrix(w_center, vocab)


def _sigmoid(x: Array) -> Array:
    return 0.5 * (np.tanh(0.5 * x) + 1.0)


def cosine_similarity(u: Array, v: Array) -> float:
    nu = float(np.dot(u, u))
    nv = float(np.dot(v, v))
    if nu == 0.0 or nv == 0.0:
        raise ZeroVector("cosine similarity undefined for zero vectors")
    c = float(np.dot(u, v)) / np.sqrt(nu * nv)
    return float(np.clip(c, -1.0, 1.0))


def most_similar(emb: EmbeddingMatrix, word: str, k: int = 5) -> list[tuple[str, float]]:
    """Top-k vocabulary neighbours of a word by cosine similarity."""
    wid = emb.vocab.word_to_id.get(word)
    if wid is None:
        raise KeyError(f"{word!r} not in vocabulary")
    target = emb.vectors[wid]
    norms = np.linalg.norm(emb.vectors, axis=1)
    tnorm = np.linalg.norm(target)
    if tnorm == 0.0:
        raise ZeroVector(f"{word!r} has a zero vector")
    with np.errstate(divide="ignore", invalid="ignore"):
        sims = emb.vectors @ target / (norms * tnorm)
    sims[wid] = -np.inf
    sims[norms == 0.0] = -np.inf
    order = np.argsort(-sims)[:k]
    return [(emb.vocab.id_to_word[i], float(sims[i])) for i in order]


def save_embeddings(emb: EmbeddingMatrix, path) -> None:
    V, d = emb.vectors.shape
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(f"{V} {d}\n")
        for i in range(V):
            row = " ".join(f"{x:.17g}" for x in emb.vectors[i])
            fh.write(f"{emb.vocab.id_to_word[i]} {row}\n")


def load_embeddings(path, vocab: Vocab) -> EmbeddingMatrix:
    with open(path, encoding="utf-8") as fh:
        header = fh.readline().split()
        V, d = int(header[0]), int(header[1])
        if V != len(vocab):
            raise ValueError(f"embedding file has {V} rows, vocab has {len(vocab)}")
        vectors = np.empty((V, d))
        for i in range(V):
            parts = fh.readline().rstrip("\n").split(" ")
            if parts[0] != vocab.id_to_word[i]:
                raise ValueError(
                    f"row {i} is {parts[0]!r}, vocab says {vocab.id_to_word[i]!r}")
            if len(parts) - 1 != d:
                raise ValueError(f"row {i} has {len(parts) - 1} values, header says {d}")
            vectors[i] = [float(x) for x in parts[1:]]
    return EmbeddingMatrix(vectors, vocab)
