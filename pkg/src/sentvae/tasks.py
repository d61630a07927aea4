"""The three evaluation harnesses: reconstruction BLEU, imputation, paraphrase.

Reports double as machine-readable records: every report converts to
``metric<TAB>value`` lines that are safe to append across runs.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .corpus import EOS_ID, ImputationExample, ParaphrasePair, TokenSeq
from .decoding import beam_search, bleu, greedy_first_token
from .embedding import cosine_similarity
from .models import Model, conditioning_vector, decoder_stepper
from .neural import AdamState, DenseParams, adam_step, dropout, log_softmax, softmax

Array = np.ndarray


def length_bin(T: int, width: int = 5) -> str:
    lo = ((T - 1) // width) * width + 1
    return f"{lo}-{lo + width - 1}"


@dataclass
class LmReport:
    mean_bleu: float
    per_length_bins: dict[str, float]
    bin_counts: dict[str, int]
    n_sentences: int

    def records(self, prefix: str = "lm") -> list[tuple[str, object]]:
        out: list[tuple[str, object]] = [
            (f"{prefix}_bleu_mean", self.mean_bleu),
            (f"{prefix}_sentences", self.n_sentences),
        ]
        for b in sorted(self.per_length_bins, key=lambda s: int(s.split("-")[0])):
            key = b.replace("-", "_")
            out.append((f"{prefix}_bleu_len_{key}", self.per_length_bins[b]))
            out.append((f"{prefix}_count_len_{key}", self.bin_counts[b]))
        return out


def eval_language_modeling(model: Model, sentences: list[TokenSeq],
                           rng: np.random.Generator | None = None,
                           beam: int = 7, samples: int = 5,
                           length_normalize: bool = False) -> LmReport:
    """Reconstruct each sentence via beam search and score BLEU against it.

    The variational variants decode from the mean of `samples` latent draws;
    the plain autoencoder is fully deterministic and ignores rng.
    """
    if not sentences:
        raise ValueError("empty test corpus")
    bin_totals: dict[str, float] = {}
    bin_counts: dict[str, int] = {}
    total = 0.0
    for sent in sentences:
        tokens = list(sent.tokens[:sent.T])
        if not 1 <= len(tokens) <= model.config.max_len:
            raise ValueError(
                f"sentence length {len(tokens)} outside 1..{model.config.max_len}")
        cond = conditioning_vector(model, tokens, None, rng, samples)
        init, step = decoder_stepper(model, cond)
        decoded = beam_search(step, init, EOS_ID, beam, model.config.max_len,
                              length_normalize=length_normalize)
        score = bleu(decoded, tokens)
        total += score
        b = length_bin(len(tokens))
        bin_totals[b] = bin_totals.get(b, 0.0) + score
        bin_counts[b] = bin_counts.get(b, 0) + 1
    means = {b: bin_totals[b] / bin_counts[b] for b in bin_totals}
    return LmReport(total / len(sentences), means, bin_counts, len(sentences))


@dataclass
class ImputationReport:
    scenario: str
    metric: str  # "accuracy" for s1/s2, "bleu" for s3
    value: float
    n_examples: int

    def records(self, prefix: str = "impute") -> list[tuple[str, object]]:
        return [(f"{prefix}_{self.scenario}_{self.metric}", self.value),
                (f"{prefix}_{self.scenario}_examples", self.n_examples)]


def eval_imputation(model: Model, examples: list[ImputationExample],
                    scenario: str, rng: np.random.Generator | None = None,
                    beam: int = 7, samples: int = 5) -> ImputationReport:
    """Exact-match accuracy for s1/s2 (one greedy step), mean BLEU for s3."""
    if not examples:
        raise ValueError("no imputation examples")
    for ex in examples:
        if ex.scenario != scenario:
            raise ValueError(
                f"scenario mismatch: asked for {scenario}, example is {ex.scenario}")
    single = scenario in ("s1", "s2")
    total = 0.0
    for ex in examples:
        tokens = list(ex.input_tokens.tokens[:ex.input_tokens.T])
        cond = conditioning_vector(model, tokens, ex.zero_mask, rng, samples)
        init, step = decoder_stepper(model, cond)
        if single:
            pred = greedy_first_token(step, init, EOS_ID)
            total += float(pred == ex.target_tokens.tokens[0])
        else:
            decoded = beam_search(step, init, EOS_ID, beam, model.config.max_len)
            total += bleu(decoded, list(ex.target_tokens.tokens[:ex.target_tokens.T]))
    value = total / len(examples)
    return ImputationReport(scenario, "accuracy" if single else "bleu",
                            value, len(examples))


# ---------------------------------------------------------------------------
# Paraphrase identification
# ---------------------------------------------------------------------------

@dataclass
class PiClassifier:
    """Two tanh hidden layers with dropout, softmax over {not_equiv, equiv}."""

    layer1: DenseParams
    layer2: DenseParams
    output: DenseParams
    dropout_rate: float = 0.3

    def named_params(self) -> dict[str, Array]:
        return {"layer1.w": self.layer1.w, "layer1.b": self.layer1.b,
                "layer2.w": self.layer2.w, "layer2.b": self.layer2.b,
                "output.w": self.output.w, "output.b": self.output.b}


def init_pi_classifier(d_in: int, rng: np.random.Generator, hidden1: int = 100,
                       hidden2: int = 50, dropout_rate: float = 0.3) -> PiClassifier:
    return PiClassifier(DenseParams.init(hidden1, d_in, rng),
                        DenseParams.init(hidden2, hidden1, rng),
                        DenseParams.init(2, hidden2, rng),
                        dropout_rate)


def pi_logits(clf: PiClassifier, x: Array,
              rng: np.random.Generator | None = None, training: bool = False):
    h1 = np.tanh(x @ clf.layer1.w.T + clf.layer1.b)
    h1d, keep1 = dropout(h1, clf.dropout_rate if training else 0.0, rng, training)
    h2 = np.tanh(h1d @ clf.layer2.w.T + clf.layer2.b)
    h2d, keep2 = dropout(h2, clf.dropout_rate if training else 0.0, rng, training)
    logits = h2d @ clf.output.w.T + clf.output.b
    return logits, (x, h1, h1d, keep1, h2, h2d, keep2)


def pi_predict(clf: PiClassifier, x: Array) -> Array:
    logits, _ = pi_logits(clf, x)
    return np.argmax(logits, axis=-1)


def paraphrase_features(model: Model, pairs: list[ParaphrasePair],
                        rng: np.random.Generator | None = None,
                        samples: int = 5):
    """Frozen per-pair features [code_a ; code_b] plus labels.

    Also returns the cosine similarity between the two codes for each
    human-equivalent pair, the quantity reported alongside the classifier.
    """
    feats = []
    labels = []
    equiv_cos = []
    for pair in pairs:
        za = conditioning_vector(model, list(pair.sent_a.tokens[:pair.sent_a.T]),
                                 None, rng, samples)
        zb = conditioning_vector(model, list(pair.sent_b.tokens[:pair.sent_b.T]),
                                 None, rng, samples)
        feats.append(np.concatenate([za, zb]))
        is_pos = pair.label == "equivalent"
        labels.append(1 if is_pos else 0)
        if is_pos:
            equiv_cos.append(cosine_similarity(za, zb))
    return np.array(feats), np.array(labels, dtype=np.intp), equiv_cos


def train_paraphrase(clf: PiClassifier, x: Array, y: Array, epochs: int = 100,
                     lr: float = 1e-3, batch_size: int = 512,
                     rng: np.random.Generator | None = None) -> list[float]:
    """Cross-entropy training with Adam; returns the per-epoch mean loss."""
    if len(x) == 0:
        raise ValueError("empty training set")
    if rng is None:
        rng = np.random.default_rng(0)
    params = clf.named_params()
    adam = AdamState(lr=lr)
    losses = []
    n = len(x)
    for _epoch in range(epochs):
        order = rng.permutation(n)
        epoch_loss = 0.0
        for start in range(0, n, batch_size):
            idx = order[start:start + batch_size]
            xb, yb = x[idx], y[idx]
            logits, cache = pi_logits(clf, xb, rng, training=True)
            logp = log_softmax(logits)
            rows = np.arange(len(idx))
            epoch_loss += -float(logp[rows, yb].sum())
            grads = _pi_backward(clf, cache, logits, yb)
            adam_step(params, grads, adam)
        losses.append(epoch_loss / n)
    return losses


def _pi_backward(clf: PiClassifier, cache, logits: Array, y: Array):
    x, h1, h1d, keep1, h2, h2d, keep2 = cache
    B = len(y)
    d_logits = softmax(logits) / B
    d_logits[np.arange(B), y] -= 1.0 / B
    grads = {"output.w": d_logits.T @ h2d, "output.b": d_logits.sum(axis=0)}
    dh2d = d_logits @ clf.output.w
    if keep2 is not None:
        dh2d = dh2d * keep2 / (1.0 - clf.dropout_rate)
    da2 = dh2d * (1.0 - h2 * h2)
    grads["layer2.w"] = da2.T @ h1d
    grads["layer2.b"] = da2.sum(axis=0)
    dh1d = da2 @ clf.layer2.w
    if keep1 is not None:
        dh1d = dh1d * keep1 / (1.0 - clf.dropout_rate)
    da1 = dh1d * (1.0 - h1 * h1)
    grads["layer1.w"] = da1.T @ x
    grads["layer1.b"] = da1.sum(axis=0)
    return grads


@dataclass
class PiReport:
    """Rates from one confusion matrix, "equivalent" being the positive class."""

    error_rate: float
    false_alarm_rate: float  # 1 - precision
    miss_rate: float         # 1 - recall
    mean_pair_cosine: float
    tp: int
    fp: int
    fn: int
    tn: int

    def records(self, prefix: str = "pi") -> list[tuple[str, object]]:
        return [(f"{prefix}_error_rate", self.error_rate),
                (f"{prefix}_false_alarm_rate", self.false_alarm_rate),
                (f"{prefix}_miss_rate", self.miss_rate),
                (f"{prefix}_mean_pair_cosine", self.mean_pair_cosine),
                (f"{prefix}_tp", self.tp), (f"{prefix}_fp", self.fp),
                (f"{prefix}_fn", self.fn), (f"{prefix}_tn", self.tn)]


def eval_paraphrase(clf: PiClassifier, x: Array, y: Array,
                    equiv_cosines: list[float]) -> PiReport:
    if len(x) == 0:
        raise ValueError("empty test set")
    pred = pi_predict(clf, x)
    tp = int(np.sum((pred == 1) & (y == 1)))
    fp = int(np.sum((pred == 1) & (y == 0)))
    fn = int(np.sum((pred == 0) & (y == 1)))
    tn = int(np.sum((pred == 0) & (y == 0)))
    n = len(y)
    error = (fp + fn) / n
    false_alarm = fp / (tp + fp) if tp + fp else 0.0
    miss = fn / (tp + fn) if tp + fn else 0.0
    mean_cos = float(np.mean(equiv_cosines)) if equiv_cosines else float("nan")
    return PiReport(error, false_alarm, miss, mean_cos, tp, fp, fn, tn)


def paraphrase_protocol(model: Model, train_pairs: list[ParaphrasePair],
                        test_pairs: list[ParaphrasePair], repeats: int = 5,
                        base_seed: int = 0, epochs: int = 100, lr: float = 1e-3,
                        batch_size: int = 512, samples: int = 5,
                        hidden1: int = 100, hidden2: int = 50,
                        dropout_rate: float = 0.3):
    """Train the identification MLP `repeats` times on frozen codes.

    Features are computed once (seeded) and shared; each repeat reseeds the
    classifier initialization, dropout and batch order. Returns the list of
    reports plus mean/std of each rate across repeats.
    """
    feat_rng = np.random.default_rng(base_seed)
    x_train, y_train, _ = paraphrase_features(model, train_pairs, feat_rng, samples)
    x_test, y_test, test_cos = paraphrase_features(model, test_pairs, feat_rng, samples)
    reports = []
    for r in range(repeats):
        rng = np.random.default_rng(base_seed + 1000 + r)
        clf = init_pi_classifier(x_train.shape[1], rng, hidden1, hidden2,
                                 dropout_rate)
        train_paraphrase(clf, x_train, y_train, epochs, lr, batch_size, rng)
        reports.append(eval_paraphrase(clf, x_test, y_test, test_cos))
    summary = {}
    for name in ("error_rate", "false_alarm_rate", "miss_rate"):
        vals = np.array([getattr(r, name) for r in reports])
        summary[f"{name}_mean"] = float(vals.mean())
        summary[f"{name}_std"] = float(vals.std())
    summary["mean_pair_cosine"] = reports[0].mean_pair_cosine
    return reports, summary


def format_metric_lines(records: list[tuple[str, object]]) -> list[str]:
    """metric<TAB>value lines; floats print with full precision."""
    lines = []
    for key, value in records:
        if isinstance(value, float):
            lines.append(f"{key}\t{value:.17g}")
        else:
            lines.append(f"{key}\t{value}")
    return lines
