"""Text normalization, vocabulary construction and dataset generation.

Covers the shared preprocessing pipeline (lowercase, strip punctuation,
frequency-thresholded vocabulary with UNK/EOS) plus the two task-specific
dataset builders: imputation corruption and paraphrase negative pairs.
"""

from __future__ import annotations

import re
from dataclasses import dataclass
from typing import Iterable, NamedTuple

import numpy as np

UNK = "UNK"
EOS = "EOS"
UNK_ID = 0
EOS_ID = 1

_WORD_RE = re.compile(r"[^\W_]+", re.UNICODE)


class TooShort(ValueError):
    """Sentence too short for the requested corruption scenario."""


def tokenize(text: str) -> list[str]:
    """Lowercase, strip punctuation and split into maximal alphanumeric runs."""
    return _WORD_RE.findall(text.lower())


class TokenSeq(NamedTuple):
    """A sentence as word ids. ``T`` counts surface words, excluding any EOS."""

    tokens: tuple[int, ...]
    T: int


@dataclass
class Vocab:
    """Bidirectional word/id map with reserved UNK and EOS tokens.

    Ids are dense: reserved tokens first (UNK=0, EOS=1), then corpus words
    ordered by descending count with lexicographic tie-break. ``counts``
    records the build-corpus occurrence count per kept word; UNK carries the
    total count of words dropped by the threshold, EOS the sentence count.
    """

    word_to_id: dict[str, int]
    id_to_word: list[str]
    counts: list[int]
    min_count: int

    @property
    def unk_id(self) -> int:
        return UNK_ID

    @property
    def eos_id(self) -> int:
        return EOS_ID

    def __len__(self) -> int:
        return len(self.id_to_word)

    def encode(self, words: Iterable[str], append_eos: bool = False) -> TokenSeq:
        ids = [self.word_to_id.get(w, self.unk_id) for w in words]
        n_words = len(ids)
        if append_eos:
            ids.append(self.eos_id)
        return TokenSeq(tuple(ids), n_words)

    def decode(self, tokens: Iterable[int]) -> list[str]:
        return [self.id_to_word[t] for t in tokens]


def build_vocab(corpus: list[list[str]], min_count: int = 7) -> Vocab:
    """Build a Vocab from tokenized sentences, keeping words seen >= min_count times."""
    if min_count < 1:
        raise ValueError(f"min_count must be >= 1, got {min_count}")
    freq: dict[str, int] = {}
    for sent in corpus:
        for w in sent:
            freq[w] = freq.get(w, 0) + 1
    kept = sorted((w for w, c in freq.items() if c >= min_count),
                  key=lambda w: (-freq[w], w))
    dropped_total = sum(c for w, c in freq.items() if c < min_count)
    id_to_word = [UNK, EOS] + kept
    counts = [dropped_total, len(corpus)] + [freq[w] for w in kept]
    word_to_id = {w: i for i, w in enumerate(id_to_word)}
    return Vocab(word_to_id, id_to_word, counts, min_count)


def save_vocab(vocab: Vocab, path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(serialize_vocab(vocab))


def serialize_vocab(vocab: Vocab) -> str:
    lines = [f"{w}\t{i}\t{vocab.counts[i]}"
             for i, w in enumerate(vocab.id_to_word)]
    return "\n".join(lines) + "\n"


def load_vocab(path) -> Vocab:
    id_to_word: list[str] = []
    counts: list[int] = []
    with open(path, encoding="utf-8") as fh:
        for line in fh:
            line = line.rstrip("\n")
            if not line:
                continue
            word, idx, count = line.split("\t")
            if int(idx) != len(id_to_word):
                raise ValueError(f"non-dense id {idx} for word {word!r}")
            id_to_word.append(word)
            counts.append(int(count))
    if id_to_word[:2] != [UNK, EOS]:
        raise ValueError("vocab file must list UNK and EOS first")
    word_to_id = {w: i for i, w in enumerate(id_to_word)}
    if len(word_to_id) != len(id_to_word):
        raise ValueError("duplicate word in vocab file")
    return Vocab(word_to_id, id_to_word, counts, min_count=1)


SCENARIOS = ("s1", "s2", "s3")


@dataclass
class ImputationExample:
    scenario: str
    input_tokens: TokenSeq
    zero_mask: tuple[bool, ...] | None
    target_tokens: TokenSeq


def erased_window(T: int) -> int:
    """Width of the "last 20%" window, ceil(0.2*T), at least 1."""
    return max(1, -(-T // 5))


def make_imputation_example(sentence: TokenSeq, scenario: str,
                            rng: np.random.Generator) -> ImputationExample:
    """Corrupt a surface sentence for one of the three imputation scenarios.

    s1 drops the last word, s2 zero-masks one position drawn uniformly from
    the last 20% window, s3 drops the whole window. The dropped material
    becomes the target.
    """
    if scenario not in SCENARIOS:
        raise ValueError(f"unknown scenario {scenario!r}")
    toks = sentence.tokens[:sentence.T]
    T = sentence.T
    if scenario == "s1":
        if T < 2:
            raise TooShort(f"s1 needs T >= 2, got {T}")
        return ImputationExample(
            "s1", TokenSeq(toks[:-1], T - 1), None, TokenSeq(toks[-1:], 1))
    if T < 5:
        raise TooShort(f"{scenario} needs T >= 5, got {T}")
    w = erased_window(T)
    if scenario == "s2":
        pos = T - w + int(rng.integers(w))
        mask = tuple(i == pos for i in range(T))
        return ImputationExample(
            "s2", TokenSeq(toks, T), mask, TokenSeq(toks[pos:pos + 1], 1))
    return ImputationExample(
        "s3", TokenSeq(toks[:T - w], T - w), None, TokenSeq(toks[T - w:], w))


@dataclass
class ParaphrasePair:
    sent_a: TokenSeq
    sent_b: TokenSeq
    label: str  # "equivalent" | "not_equivalent"


def make_paraphrase_negatives(positives: list[ParaphrasePair], vocab: Vocab,
                              rng: np.random.Generator) -> list[ParaphrasePair]:
    """One negative per positive: replace 20% of sent_b's words with random vocab words.

    Replacement positions are distinct; each replacement is drawn uniformly
    from the vocabulary minus UNK, EOS and the word being replaced.
    """
    if any(p.label != "equivalent" for p in positives):
        raise ValueError("positives must all be labeled equivalent")
    word_ids = np.arange(2, len(vocab))
    if len(word_ids) < 2:
        raise ValueError("vocabulary too small to draw replacements")
    negatives = []
    for pair in positives:
        toks = list(pair.sent_b.tokens[:pair.sent_b.T])
        n_replace = erased_window(len(toks))
        positions = rng.choice(len(toks), size=n_replace, replace=False)
        for pos in sorted(int(p) for p in positions):
            pool = word_ids[word_ids != toks[pos]]
            toks[pos] = int(pool[rng.integers(len(pool))])
        negatives.append(ParaphrasePair(
            pair.sent_a, TokenSeq(tuple(toks), len(toks)), "not_equivalent"))
    return negatives


def read_corpus(path) -> list[str]:
    """Plain text corpus, one sentence per line; blank lines ignored."""
    with open(path, encoding="utf-8") as fh:
        return [line.rstrip("\n") for line in fh if line.strip()]


def prepare_sentences(lines: Iterable[str], max_len: int = 40) -> list[list[str]]:
    """Tokenize raw lines and keep sentences with 1..max_len surface words."""
    out = []
    for line in lines:
        words = tokenize(line)
        if 1 <= len(words) <= max_len:
            out.append(words)
    return out
