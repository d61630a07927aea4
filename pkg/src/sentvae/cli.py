"""Command-line entry points: prepare -> embed -> train -> evaluate.

Every command resolves its settings from built-in defaults, then an optional
``key = value`` config file, then flags (flags win), logs the resolved
configuration with the seed to stderr, and emits metric records as
``metric<TAB>value`` lines on stdout. Relative paths resolve against
$SENTVAE_DATA_DIR when it is set. Exit codes: 0 ok, 1 user error, 2 internal.
"""

from __future__ import annotations

import argparse
import os
import sys
import traceback
from dataclasses import asdict, dataclass, fields

import numpy as np

from . import checkpoint as ckpt
from . import corpus as corpus_mod
from . import synthetic
from .corpus import (
    ParaphrasePair,
    TooShort,
    build_vocab,
    load_vocab,
    make_imputation_example,
    make_paraphrase_negatives,
    prepare_sentences,
    read_corpus,
    save_vocab,
    serialize_vocab,
    tokenize,
)
from .embedding import (
    EmptyCorpus,
    SkipgramConfig,
    ZeroVector,
    load_embeddings,
    save_embeddings,
    train_skipgram,
)
from .models import ModelConfig, conditioning_vector, init_model
from .neural import AdamState
from .tasks import (
    eval_imputation,
    eval_language_modeling,
    eval_paraphrase,
    format_metric_lines,
    init_pi_classifier,
    paraphrase_features,
    train_paraphrase,
)
from .tasks import PiClassifier
from .training import (
    TrainSettings,
    imputation_examples,
    lm_examples,
    train_model,
)

TASKS = ("lm", "impute-s1", "impute-s2", "impute-s3")


@dataclass
class RunConfig:
    """Every knob a run can turn; snapshotted into checkpoints for provenance."""

    variant: str = "svae"
    task: str = "lm"
    d_word: int = 100
    d_h: int = 300
    d_z: int = 300
    max_len: int = 40
    min_count: int = 7
    epochs: int = 30
    batch_size: int = 512
    lr: float = 1e-3
    lr_after: float = 1e-4
    lr_switch_epoch: int = 10
    grad_clip: float = 5.0
    kl_anneal_steps: int = 10000
    word_dropout: float = 0.0
    beam: int = 7
    samples: int = 5
    seed: int = 0
    max_batches: int = 0  # 0 means no cap
    log_every: int = 100


# paper protocol for the imputation models: fewer epochs, earlier lr switch
IMPUTE_DEFAULTS = {"epochs": 15, "lr_switch_epoch": 5}

USER_ERRORS = (OSError, ValueError, KeyError, TooShort, EmptyCorpus,
               ZeroVector, ckpt.CheckpointError)


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(f"{message}\n{self.format_usage()}")


def log(msg: str) -> None:
    print(msg, file=sys.stderr)


def resolve_path(path: str) -> str:
    base = os.environ.get("SENTVAE_DATA_DIR")
    if base and not os.path.isabs(path):
        return os.path.join(base, path)
    return path


def _emit(records, metrics_out: str | None) -> None:
    lines = format_metric_lines(records)
    for line in lines:
        print(line)
    if metrics_out:
        with open(resolve_path(metrics_out), "a", encoding="utf-8") as fh:
            fh.write("\n".join(lines) + "\n")


def _add_config_flags(p: argparse.ArgumentParser, names) -> None:
    flag_of = {"batch_size": "--batch"}
    for f in fields(RunConfig):
        if f.name not in names:
            continue
        conv = str if isinstance(f.default, str) else type(f.default)
        flag = flag_of.get(f.name, "--" + f.name.replace("_", "-"))
        p.add_argument(flag, dest=f.name, type=conv, default=None)
    p.add_argument("--config", default=None,
                   help="key = value file; flags override its entries")


def resolve_config(args) -> RunConfig:
    """defaults < task defaults < config file < explicit flags."""
    values = {f.name: f.default for f in fields(RunConfig)}
    file_cfg = {}
    if getattr(args, "config", None):
        with open(resolve_path(args.config), encoding="utf-8") as fh:
            file_cfg = ckpt.parse_config_text(fh.read())
    task = getattr(args, "task", None) or file_cfg.get("task") or values["task"]
    if str(task).startswith("impute"):
        values.update(IMPUTE_DEFAULTS)
    for key, val in file_cfg.items():
        if key not in values:
            raise ValueError(f"unknown config key {key!r}")
        values[key] = val
    for key in values:
        flag = getattr(args, key, None)
        if flag is not None:
            values[key] = flag
    coerced = {}
    for f in fields(RunConfig):
        v = values[f.name]
        if isinstance(f.default, str):
            coerced[f.name] = str(v)
        elif isinstance(f.default, float):
            coerced[f.name] = float(v)
        else:
            coerced[f.name] = int(v)
    rc = RunConfig(**coerced)
    if rc.task not in TASKS:
        raise ValueError(f"task must be one of {TASKS}, got {rc.task!r}")
    return rc


def _log_config(command: str, rc: RunConfig) -> None:
    flat = " ".join(f"{k}={v}" for k, v in sorted(asdict(rc).items()))
    log(f"[{command}] resolved config: {flat}")
    log(f"[{command}] seed: {rc.seed}")


def _vocab_and_hash(path: str):
    vocab = load_vocab(path)
    return vocab, ckpt.vocab_hash_of(serialize_vocab(vocab))


def _load_model(path: str, vocab_path: str | None):
    expect = None
    vocab = None
    if vocab_path:
        vocab, expect = _vocab_and_hash(resolve_path(vocab_path))
    data = ckpt.load_checkpoint(resolve_path(path), expect)
    return data, vocab


def _encode_corpus(vocab, path: str, max_len: int):
    sents = prepare_sentences(read_corpus(resolve_path(path)), max_len)
    if not sents:
        raise ValueError(f"no usable sentences in {path}")
    return [vocab.encode(words) for words in sents]


# ---------------------------------------------------------------------------
# Commands
# ---------------------------------------------------------------------------

def cmd_prepare(args) -> int:
    lines = read_corpus(resolve_path(args.corpus))
    sents = prepare_sentences(lines, args.max_len)
    if not sents:
        raise ValueError("corpus has no sentences after filtering")
    vocab = build_vocab(sents, args.min_count)
    out_dir = resolve_path(args.out_dir)
    os.makedirs(out_dir, exist_ok=True)
    save_vocab(vocab, os.path.join(out_dir, "vocab.tsv"))
    texts = [" ".join(words) for words in sents]
    with open(os.path.join(out_dir, "corpus.txt"), "w", encoding="utf-8") as fh:
        fh.write("\n".join(texts) + "\n")
    if args.held_out:
        if args.held_out >= len(texts):
            raise ValueError("held-out size must be smaller than the corpus")
        rng = np.random.default_rng(args.seed)
        test_idx = set(map(int, rng.permutation(len(texts))[:args.held_out]))
        for name, keep in (("train.txt", lambda i: i not in test_idx),
                           ("test.txt", lambda i: i in test_idx)):
            with open(os.path.join(out_dir, name), "w", encoding="utf-8") as fh:
                fh.write("\n".join(t for i, t in enumerate(texts) if keep(i)) + "\n")
    log(f"[prepare] {len(sents)} sentences, vocab size {len(vocab)} "
        f"(min_count {args.min_count}) -> {out_dir}")
    return 0


def cmd_train_embeddings(args) -> int:
    vocab, _ = _vocab_and_hash(resolve_path(args.vocab))
    sents = prepare_sentences(read_corpus(resolve_path(args.corpus)), args.max_len)
    encoded = [vocab.encode(words, append_eos=True) for words in sents]
    cfg = SkipgramConfig(dim=args.dim, window=args.window,
                         negatives=args.negatives, epochs=args.epochs,
                         lr=args.lr, seed=args.seed)
    log(f"[train-embeddings] {len(encoded)} sentences, V={len(vocab)}, "
        f"dim={cfg.dim}, window={cfg.window}, k={cfg.negatives}, "
        f"epochs={cfg.epochs}, seed={cfg.seed}")
    emb = train_skipgram(encoded, vocab, cfg)
    save_embeddings(emb, resolve_path(args.out))
    log(f"[train-embeddings] wrote {args.out}")
    return 0


def _build_examples(rc: RunConfig, sentences, rng):
    if rc.task == "lm":
        return lm_examples(sentences)
    scenario = rc.task.split("-")[1]
    examples = []
    for s in sentences:
        try:
            examples.append(make_imputation_example(s, scenario, rng))
        except TooShort:
            continue
    if not examples:
        raise ValueError(f"no sentences long enough for {rc.task}")
    return imputation_examples(examples)


def cmd_train(args) -> int:
    rc = resolve_config(args)
    _log_config("train", rc)
    vocab, vocab_hash = _vocab_and_hash(resolve_path(args.vocab))
    emb = load_embeddings(resolve_path(args.embeddings), vocab)
    if args.d_word is not None and args.d_word != emb.dim:
        raise ValueError(
            f"--d-word {args.d_word} does not match embedding dim {emb.dim}")
    sentences = _encode_corpus(vocab, args.corpus, rc.max_len)
    rng = np.random.default_rng(rc.seed)
    examples = _build_examples(rc, sentences, rng)
    model_cfg = ModelConfig(variant=rc.variant, vocab_size=len(vocab),
                            d_word=emb.dim, d_h=rc.d_h, d_z=rc.d_z,
                            max_len=rc.max_len,
                            kl_anneal_steps=rc.kl_anneal_steps,
                            word_dropout=rc.word_dropout)
    model = init_model(model_cfg, emb.vectors, rng)
    settings = TrainSettings(
        epochs=rc.epochs, batch_size=rc.batch_size, lr=rc.lr,
        lr_after=rc.lr_after, lr_switch_epoch=rc.lr_switch_epoch,
        grad_clip=rc.grad_clip, log_every=rc.log_every,
        max_batches=rc.max_batches or None)
    adam = AdamState(lr=rc.lr)
    history = train_model(model, examples, settings, rng, log=log, adam=adam)
    snapshot = asdict(rc)
    snapshot.update({"command": "train", "corpus": args.corpus,
                     "vocab": args.vocab, "embeddings": args.embeddings})
    ckpt.save_checkpoint(resolve_path(args.out), model, snapshot, vocab_hash,
                         adam=adam, rng_state=rng.bit_generator.state)
    last = history[-1]
    log(f"[train] finished at step {last['step']}: recon {last['recon']:.4f} "
        f"kld {last['kld']:.4f} -> {args.out}")
    return 0


def cmd_eval_lm(args) -> int:
    data, vocab = _load_model(args.checkpoint, args.vocab)
    model = data.model
    rc_seed = args.seed if args.seed is not None else 0
    beam = args.beam if args.beam is not None else int(data.config.get("beam", 7))
    samples = (args.samples if args.samples is not None
               else int(data.config.get("samples", 5)))
    log(f"[eval-lm] checkpoint={args.checkpoint} variant={model.config.variant} "
        f"beam={beam} samples={samples} seed={rc_seed}")
    sentences = _encode_corpus(vocab, args.corpus, model.config.max_len)
    rng = np.random.default_rng(rc_seed)
    report = eval_language_modeling(model, sentences, rng, beam, samples)
    _emit(report.records(), args.metrics_out)
    return 0


def cmd_eval_impute(args) -> int:
    data, vocab = _load_model(args.checkpoint, args.vocab)
    model = data.model
    trained_task = str(data.config.get("task", ""))
    requested = f"impute-{args.scenario}"
    if trained_task != requested:
        raise ValueError(
            f"checkpoint was trained for task {trained_task!r}, "
            f"eval requested {requested!r}")
    rc_seed = args.seed if args.seed is not None else 0
    beam = args.beam if args.beam is not None else int(data.config.get("beam", 7))
    samples = (args.samples if args.samples is not None
               else int(data.config.get("samples", 5)))
    log(f"[eval-impute] scenario={args.scenario} seed={rc_seed}")
    sentences = _encode_corpus(vocab, args.corpus, model.config.max_len)
    rng = np.random.default_rng(rc_seed)
    examples = []
    for s in sentences:
        try:
            examples.append(make_imputation_example(s, args.scenario, rng))
        except TooShort:
            continue
    report = eval_imputation(model, examples, args.scenario, rng, beam, samples)
    _emit(report.records(), args.metrics_out)
    return 0


def _read_pairs(vocab, path: str, max_len: int) -> list[ParaphrasePair]:
    pairs = []
    with open(resolve_path(path), encoding="utf-8") as fh:
        for ln, line in enumerate(fh, 1):
            line = line.rstrip("\n")
            if not line.strip():
                continue
            parts = line.split("\t")
            if len(parts) != 2:
                raise ValueError(f"{path}:{ln}: expected sent_a<TAB>sent_b")
            a, b = (tokenize(p) for p in parts)
            if not a or not b or len(a) > max_len or len(b) > max_len:
                continue
            pairs.append(ParaphrasePair(vocab.encode(a), vocab.encode(b),
                                        "equivalent"))
    if not pairs:
        raise ValueError(f"no usable pairs in {path}")
    return pairs


def _pair_dataset(model, vocab, pairs, rng, samples):
    negatives = make_paraphrase_negatives(pairs, vocab, rng)
    return paraphrase_features(model, pairs + negatives, rng, samples)


def cmd_train_pi(args) -> int:
    data, vocab = _load_model(args.encoder, args.vocab)
    model = data.model
    seed = args.seed if args.seed is not None else 0
    samples = args.samples if args.samples is not None else 5
    log(f"[train-pi] encoder={args.encoder} repeats={args.repeats} "
        f"epochs={args.epochs} lr={args.lr} batch={args.batch} seed={seed}")
    rng = np.random.default_rng(seed)
    train_pairs = _read_pairs(vocab, args.pairs, model.config.max_len)
    x_train, y_train, _ = _pair_dataset(model, vocab, train_pairs, rng, samples)
    test_set = None
    if args.test_pairs:
        test_pairs = _read_pairs(vocab, args.test_pairs, model.config.max_len)
        test_set = _pair_dataset(model, vocab, test_pairs, rng, samples)

    reports = []
    first_clf = None
    for r in range(args.repeats):
        clf_rng = np.random.default_rng(seed + 1000 + r)
        clf = init_pi_classifier(x_train.shape[1], clf_rng,
                                 args.hidden1, args.hidden2, args.dropout)
        train_paraphrase(clf, x_train, y_train, args.epochs, args.lr,
                         args.batch, clf_rng)
        if first_clf is None:
            first_clf = clf
        if test_set is not None:
            x_test, y_test, test_cos = test_set
            reports.append(eval_paraphrase(clf, x_test, y_test, test_cos))
    if args.out:
        cfg = {"kind": "pi", "d_in": x_train.shape[1], "hidden1": args.hidden1,
               "hidden2": args.hidden2, "dropout": args.dropout,
               "seed": seed, "epochs": args.epochs, "lr": args.lr,
               "batch": args.batch, "encoder": args.encoder}
        ckpt.save_blob(resolve_path(args.out), cfg, data.vocab_hash,
                       first_clf.named_params())
        log(f"[train-pi] wrote {args.out}")
    if reports:
        records = []
        for name in ("error_rate", "false_alarm_rate", "miss_rate"):
            vals = np.array([getattr(rep, name) for rep in reports])
            records.append((f"pi_{name}_mean", float(vals.mean())))
            records.append((f"pi_{name}_std", float(vals.std())))
        records.append(("pi_mean_pair_cosine", reports[0].mean_pair_cosine))
        records.append(("pi_repeats", len(reports)))
        _emit(records, args.metrics_out)
    return 0


def _load_pi(path: str, expect_hash: str | None) -> PiClassifier:
    config, _, tensors, _, _ = ckpt.load_blob(resolve_path(path), expect_hash)
    if config.get("kind") != "pi":
        raise ckpt.CheckpointError(f"{path} is not a paraphrase classifier")
    from .neural import DenseParams
    return PiClassifier(
        DenseParams(tensors["layer1.w"].copy(), tensors["layer1.b"].copy()),
        DenseParams(tensors["layer2.w"].copy(), tensors["layer2.b"].copy()),
        DenseParams(tensors["output.w"].copy(), tensors["output.b"].copy()),
        float(config.get("dropout", 0.3)))


def cmd_eval_pi(args) -> int:
    data, vocab = _load_model(args.encoder, args.vocab)
    model = data.model
    clf = _load_pi(args.classifier, data.vocab_hash if args.vocab else None)
    seed = args.seed if args.seed is not None else 0
    samples = args.samples if args.samples is not None else 5
    log(f"[eval-pi] classifier={args.classifier} seed={seed}")
    rng = np.random.default_rng(seed)
    pairs = _read_pairs(vocab, args.pairs, model.config.max_len)
    x, y, cos = _pair_dataset(model, vocab, pairs, rng, samples)
    report = eval_paraphrase(clf, x, y, cos)
    _emit(report.records(), args.metrics_out)
    return 0


def cmd_encode(args) -> int:
    data, vocab = _load_model(args.checkpoint, args.vocab)
    model = data.model
    seed = args.seed if args.seed is not None else 0
    samples = args.samples if args.samples is not None else 5
    rng = np.random.default_rng(seed)
    if args.text is not None:
        lines = [args.text]
    else:
        lines = [line.rstrip("\n") for line in sys.stdin if line.strip()]
    for line in lines:
        words = tokenize(line)
        if not words:
            raise ValueError(f"no tokens in input line {line!r}")
        if len(words) > model.config.max_len:
            raise ValueError(f"input longer than max_len={model.config.max_len}")
        seq = vocab.encode(words)
        z = conditioning_vector(model, list(seq.tokens), None, rng, samples)
        print(" ".join(f"{v:.17g}" for v in z))
    return 0


def cmd_make_corpus(args) -> int:
    rng = np.random.default_rng(args.seed)
    makers = {"toy": synthetic.toy_corpus,
              "news": synthetic.news_like_corpus,
              "suffix": synthetic.deterministic_suffix_corpus}
    lines = makers[args.kind](args.n, rng)
    with open(resolve_path(args.out), "w", encoding="utf-8") as fh:
        fh.write("\n".join(lines) + "\n")
    log(f"[make-corpus] wrote {args.n} {args.kind} sentences to {args.out}")
    return 0


# ---------------------------------------------------------------------------
# Parser
# ---------------------------------------------------------------------------

def build_parser() -> _Parser:
    parser = _Parser(prog="sentvae", description=__doc__)
    sub = parser.add_subparsers(dest="command")

    p = sub.add_parser("prepare", help="tokenize, build vocab, write datasets")
    p.add_argument("--corpus", required=True)
    p.add_argument("--out-dir", required=True)
    p.add_argument("--min-count", type=int, default=7)
    p.add_argument("--max-len", type=int, default=40)
    p.add_argument("--held-out", type=int, default=0)
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=cmd_prepare)

    p = sub.add_parser("train-embeddings", help="skip-gram pre-training")
    p.add_argument("--corpus", required=True)
    p.add_argument("--vocab", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--dim", type=int, default=100)
    p.add_argument("--window", type=int, default=5)
    p.add_argument("--negatives", type=int, default=5)
    p.add_argument("--epochs", type=int, default=10)
    p.add_argument("--lr", type=float, default=0.025)
    p.add_argument("--max-len", type=int, default=40)
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=cmd_train_embeddings)

    p = sub.add_parser("train", help="train a sequence model")
    p.add_argument("--corpus", required=True)
    p.add_argument("--vocab", required=True)
    p.add_argument("--embeddings", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--variant", choices=("ae", "vae", "svae"), default=None)
    p.add_argument("--task", choices=TASKS, default=None)
    _add_config_flags(p, {f.name for f in fields(RunConfig)}
                      - {"variant", "task", "beam", "samples"})
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("eval-lm", help="reconstruction BLEU on a test corpus")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--corpus", required=True)
    p.add_argument("--vocab", required=True)
    p.add_argument("--beam", type=int, default=None)
    p.add_argument("--samples", type=int, default=None)
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--metrics-out", default=None)
    p.set_defaults(func=cmd_eval_lm)

    p = sub.add_parser("eval-impute", help="missing-word imputation metrics")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--corpus", required=True)
    p.add_argument("--vocab", required=True)
    p.add_argument("--scenario", choices=("s1", "s2", "s3"), required=True)
    p.add_argument("--beam", type=int, default=None)
    p.add_argument("--samples", type=int, default=None)
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--metrics-out", default=None)
    p.set_defaults(func=cmd_eval_impute)

    p = sub.add_parser("train-pi", help="train the paraphrase classifier")
    p.add_argument("--encoder", required=True, help="sequence model checkpoint")
    p.add_argument("--pairs", required=True, help="TSV of equivalent pairs")
    p.add_argument("--vocab", required=True)
    p.add_argument("--test-pairs", default=None)
    p.add_argument("--out", default=None)
    p.add_argument("--repeats", type=int, default=5)
    p.add_argument("--epochs", type=int, default=100)
    p.add_argument("--lr", type=float, default=1e-3)
    p.add_argument("--batch", type=int, default=512)
    p.add_argument("--hidden1", type=int, default=100)
    p.add_argument("--hidden2", type=int, default=50)
    p.add_argument("--dropout", type=float, default=0.3)
    p.add_argument("--samples", type=int, default=None)
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--metrics-out", default=None)
    p.set_defaults(func=cmd_train_pi)

    p = sub.add_parser("eval-pi", help="evaluate a saved paraphrase classifier")
    p.add_argument("--encoder", required=True)
    p.add_argument("--classifier", required=True)
    p.add_argument("--pairs", required=True)
    p.add_argument("--vocab", required=True)
    p.add_argument("--samples", type=int, default=None)
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--metrics-out", default=None)
    p.set_defaults(func=cmd_eval_pi)

    p = sub.add_parser("encode", help="dump sentence code vectors")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--vocab", required=True)
    p.add_argument("--text", default=None, help="one sentence; else reads stdin")
    p.add_argument("--samples", type=int, default=None)
    p.add_argument("--seed", type=int, default=None)
    p.set_defaults(func=cmd_encode)

    p = sub.add_parser("make-corpus", help="write a synthetic toy corpus")
    p.add_argument("--kind", choices=("toy", "news", "suffix"), default="news")
    p.add_argument("--n", type=int, required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=cmd_make_corpus)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except UsageError as e:
        print(f"error: {e}", file=sys.stderr)
        return 1
    if getattr(args, "command", None) is None:
        parser.print_usage(sys.stderr)
        return 1
    try:
        return args.func(args)
    except UsageError as e:
        print(f"error: {e}", file=sys.stderr)
        return 1
    except USER_ERRORS as e:
        print(f"error: {e}", file=sys.stderr)
        return 1
    except Exception:
        traceback.print_exc()
        return 2


if __name__ == "__main__":
    sys.exit(main())
