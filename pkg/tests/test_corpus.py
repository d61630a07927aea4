import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from sentvae.corpus import (
    EOS,
    EOS_ID,
    TokenSeq,
    TooShort,
    UNK,
    UNK_ID,
    build_vocab,
    erased_window,
    load_vocab,
    make_imputation_example,
    make_paraphrase_negatives,
    ParaphrasePair,
    prepare_sentences,
    save_vocab,
    serialize_vocab,
    tokenize,
)


@pytest.mark.parametrize("text, expected", [
    ("What is the name of the pension plan",
     ["what", "is", "the", "name", "of", "the", "pension", "plan"]),
    ("Hello, World!", ["hello", "world"]),
    ("", []),
    ("Don't stop-me now...", ["don", "t", "stop", "me", "now"]),
    ("A1 b2  c3", ["a1", "b2", "c3"]),
])
def test_tokenize(text, expected):
    assert tokenize(text) == expected


def test_build_vocab_threshold():
    corpus = [["apple"]] * 7 + [["pear"]] * 6
    vocab = build_vocab(corpus, min_count=7)
    assert "apple" in vocab.word_to_id
    assert "pear" not in vocab.word_to_id
    assert len(vocab) == 3  # UNK, EOS, apple


def test_build_vocab_empty():
    vocab = build_vocab([], min_count=7)
    assert vocab.id_to_word == [UNK, EOS]
    assert vocab.unk_id == UNK_ID and vocab.eos_id == EOS_ID
    assert vocab.unk_id != vocab.eos_id


def test_build_vocab_matches_bruteforce_counter():
    rng = np.random.default_rng(5)
    words = [f"w{i}" for i in range(30)]
    corpus = [[words[rng.integers(30)] for _ in range(rng.integers(3, 9))]
              for _ in range(50)]
    min_count = 3
    vocab = build_vocab(corpus, min_count)
    # independent hash-count oracle
    counts: dict = {}
    for sent in corpus:
        for w in sent:
            counts[w] = counts.get(w, 0) + 1
    kept = {w for w, c in counts.items() if c >= min_count}
    assert set(vocab.id_to_word[2:]) == kept
    # deterministic order: descending count, lexicographic ties
    order = vocab.id_to_word[2:]
    keys = [(-counts[w], w) for w in order]
    assert keys == sorted(keys)
    for w in kept:
        assert vocab.counts[vocab.word_to_id[w]] == counts[w]


def test_build_vocab_deterministic():
    corpus = [["b", "a", "b"], ["a", "c"], ["c", "a"]]
    v1 = build_vocab(corpus, 1)
    v2 = build_vocab(corpus, 1)
    assert v1.id_to_word == v2.id_to_word


def test_encode_decode():
    vocab = build_vocab([["red", "fox"], ["red", "dog"]], min_count=1)
    seq = vocab.encode(["red", "fox"])
    assert vocab.decode(seq.tokens) == ["red", "fox"]
    assert seq.T == 2

    oov = vocab.encode(["red", "wolf"])
    assert oov.tokens[1] == vocab.unk_id
    assert vocab.decode(oov.tokens) == ["red", UNK]

    eos = vocab.encode(["fox"], append_eos=True)
    assert eos.tokens[-1] == vocab.eos_id
    assert eos.T == 1


@given(st.lists(st.sampled_from(["red", "fox", "dog", "runs"]),
                min_size=1, max_size=12))
def test_roundtrip_in_vocab(words):
    vocab = build_vocab([["red", "fox"], ["dog", "runs"]], min_count=1)
    assert vocab.decode(vocab.encode(words).tokens) == words


def test_vocab_file_roundtrip(tmp_path):
    corpus = [["red", "fox", "red"], ["dog", "runs", "dog", "red"]]
    vocab = build_vocab(corpus, min_count=1)
    path = tmp_path / "vocab.tsv"
    save_vocab(vocab, path)
    first_bytes = path.read_bytes()
    loaded = load_vocab(path)
    assert loaded.id_to_word == vocab.id_to_word
    assert loaded.counts == vocab.counts
    save_vocab(loaded, path)
    assert path.read_bytes() == first_bytes  # bit-exact round trip
    assert serialize_vocab(loaded) == serialize_vocab(vocab)


def test_vocab_file_reserved_first(tmp_path):
    path = tmp_path / "vocab.tsv"
    path.write_text("foo\t0\t3\nEOS\t1\t1\n")
    with pytest.raises(ValueError):
        load_vocab(path)


@pytest.mark.parametrize("T, want", [(1, 1), (4, 1), (5, 1), (6, 2), (10, 2),
                                     (11, 3), (40, 8)])
def test_erased_window(T, want):
    assert erased_window(T) == want


def _seq(n):
    return TokenSeq(tuple(range(2, 2 + n)), n)


class TestImputation:
    def test_s1(self):
        seq = _seq(10)
        ex = make_imputation_example(seq, "s1", np.random.default_rng(0))
        assert ex.input_tokens.T == 9
        assert ex.input_tokens.tokens == seq.tokens[:9]
        assert ex.target_tokens.tokens == seq.tokens[9:]
        assert ex.zero_mask is None

    def test_s3(self):
        seq = _seq(10)
        ex = make_imputation_example(seq, "s3", np.random.default_rng(0))
        assert ex.input_tokens.T == 8
        assert ex.target_tokens.T == 2
        assert ex.target_tokens.tokens == seq.tokens[8:]

    def test_s2_position_window_and_reproducible(self):
        seq = _seq(10)
        seen = set()
        for seed in range(40):
            ex = make_imputation_example(seq, "s2", np.random.default_rng(seed))
            pos = ex.zero_mask.index(True)
            assert sum(ex.zero_mask) == 1
            assert pos in (8, 9)  # last ceil(0.2*10) = 2 positions, 0-based
            assert ex.input_tokens.tokens == seq.tokens
            assert ex.target_tokens.tokens == (seq.tokens[pos],)
            seen.add(pos)
            again = make_imputation_example(seq, "s2", np.random.default_rng(seed))
            assert again.zero_mask == ex.zero_mask
        assert seen == {8, 9}

    def test_s2_draw_matches_rng_replay(self):
        seq = _seq(10)
        for seed in range(10):
            ex = make_imputation_example(seq, "s2", np.random.default_rng(seed))
            # oracle: enumerate the rng draw the same way
            expected = 10 - 2 + int(np.random.default_rng(seed).integers(2))
            assert ex.zero_mask.index(True) == expected

    def test_too_short(self):
        one = _seq(1)
        with pytest.raises(TooShort):
            make_imputation_example(one, "s1", np.random.default_rng(0))
        four = _seq(4)
        for scenario in ("s2", "s3"):
            with pytest.raises(TooShort):
                make_imputation_example(four, scenario, np.random.default_rng(0))

    def test_s3_minimum_length(self):
        five = _seq(5)
        ex = make_imputation_example(five, "s3", np.random.default_rng(0))
        assert ex.target_tokens.T == 1
        assert ex.input_tokens.T == 4


class TestParaphraseNegatives:
    def _positives(self, rng, vocab, n=12):
        pairs = []
        for _ in range(n):
            la = int(rng.integers(4, 12))
            lb = int(rng.integers(4, 12))
            def ids(k):
                return tuple(int(rng.integers(2, len(vocab))) for _ in range(k))
            pairs.append(ParaphrasePair(TokenSeq(ids(la), la),
                                        TokenSeq(ids(lb), lb), "equivalent"))
        return pairs

    def _vocab(self):
        return build_vocab([[f"w{i}" for i in range(40)]], min_count=1)

    def test_hamming_distance_exact(self):
        vocab = self._vocab()
        rng = np.random.default_rng(3)
        positives = self._positives(rng, vocab)
        negatives = make_paraphrase_negatives(positives, vocab,
                                              np.random.default_rng(9))
        assert len(negatives) == len(positives)
        for pos, neg in zip(positives, negatives):
            assert neg.label == "not_equivalent"
            assert neg.sent_a == pos.sent_a
            diffs = sum(a != b for a, b in
                        zip(pos.sent_b.tokens, neg.sent_b.tokens))
            assert diffs == erased_window(pos.sent_b.T)
            for a, b in zip(pos.sent_b.tokens, neg.sent_b.tokens):
                if a != b:
                    assert b not in (UNK_ID, EOS_ID)

    def test_deterministic(self):
        vocab = self._vocab()
        positives = self._positives(np.random.default_rng(3), vocab)
        n1 = make_paraphrase_negatives(positives, vocab, np.random.default_rng(7))
        n2 = make_paraphrase_negatives(positives, vocab, np.random.default_rng(7))
        assert [p.sent_b.tokens for p in n1] == [p.sent_b.tokens for p in n2]

    def test_rejects_nonpositive_input(self):
        vocab = self._vocab()
        bad = [ParaphrasePair(vocab.encode(["w1"]), vocab.encode(["w2"]),
                              "not_equivalent")]
        with pytest.raises(ValueError):
            make_paraphrase_negatives(bad, vocab, np.random.default_rng(0))


@settings(deadline=None, max_examples=40)
@given(st.integers(1, 60), st.integers(0, 2 ** 31 - 1))
def test_prepare_sentences_length_filter(n_words, seed):
    rng = np.random.default_rng(seed)
    line = " ".join(f"w{int(rng.integers(10))}" for _ in range(n_words))
    kept = prepare_sentences([line], max_len=40)
    assert (len(kept) == 1) == (n_words <= 40)


def test_prepare_sentences_drops_empty():
    assert prepare_sentences(["...", "!!", "ok then"]) == [["ok", "then"]]
