"""The three sentence models sharing one bidirectional GRU encoder.

Variants: "ae" reconstructs from the concatenated final encoder states, "vae"
maps them through a linear latent head to a Gaussian code, and "svae"
additionally concatenates an attention-weighted sum of the sentence's word
embeddings before the latent head. The decoder is a single GRU conditioned on
the code both through its initial state and as part of every step's input.

All gradients are computed by hand (reverse mode through the unrolled
sequence) and are verified against central finite differences in the tests.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import NamedTuple

import numpy as np

from .corpus import EOS_ID, TokenSeq, UNK_ID
from .neural import (
    DenseParams,
    EncoderStates,
    GruParams,
    GRU_FIELDS,
    apply_zero_mask,
    encode_bidirectional_backward,
    encode_bidirectional_forward,
    gru_backward,
    gru_forward,
    log_softmax,
    softmax,
)

Array = np.ndarray

VARIANTS = ("ae", "vae", "svae")
LOGVAR_CLAMP = 20.0
ATTENTION_EPS = 1e-8


@dataclass
class ModelConfig:
    variant: str
    vocab_size: int
    d_word: int = 100
    d_h: int = 300
    d_z: int = 300
    max_len: int = 40
    kl_anneal_steps: int = 10000
    word_dropout: float = 0.0

    def __post_init__(self) -> None:
        if self.variant not in VARIANTS:
            raise ValueError(f"variant must be one of {VARIANTS}, got {self.variant!r}")
        if min(self.vocab_size, self.d_word, self.d_h, self.d_z, self.max_len) <= 0:
            raise ValueError("all dimensions must be positive")
        if not 0.0 <= self.word_dropout < 1.0:
            raise ValueError("word_dropout must be in [0, 1)")

    @property
    def cond_dim(self) -> int:
        """Width of the vector conditioning the decoder."""
        return 2 * self.d_h if self.variant == "ae" else self.d_z

    @property
    def latent_input_dim(self) -> int:
        """Width of the concatenated encoder state feeding the latent head."""
        if self.variant == "svae":
            return 2 * self.d_h + self.d_word
        if self.variant == "vae":
            return 2 * self.d_h
        raise ValueError("ae has no latent head")


@dataclass
class Model:
    config: ModelConfig
    embeddings: Array  # (V, d_word), frozen during seq2seq training
    enc_fwd: GruParams
    enc_bwd: GruParams
    mu_head: DenseParams | None
    logvar_head: DenseParams | None
    dec_init: DenseParams
    dec: GruParams
    out: DenseParams

    def named_params(self) -> dict[str, Array]:
        """Trainable tensors in a fixed order (embeddings excluded)."""
        params: dict[str, Array] = {}
        for prefix, gru in (("enc_fwd", self.enc_fwd), ("enc_bwd", self.enc_bwd)):
            for f in GRU_FIELDS:
                params[f"{prefix}.{f}"] = getattr(gru, f)
        if self.mu_head is not None:
            params["mu.w"] = self.mu_head.w
            params["mu.b"] = self.mu_head.b
            params["logvar.w"] = self.logvar_head.w
            params["logvar.b"] = self.logvar_head.b
        params["dec_init.w"] = self.dec_init.w
        params["dec_init.b"] = self.dec_init.b
        for f in GRU_FIELDS:
            params[f"dec.{f}"] = getattr(self.dec, f)
        params["out.w"] = self.out.w
        params["out.b"] = self.out.b
        return params

    def zero_grads(self) -> dict[str, Array]:
        return {k: np.zeros_like(v) for k, v in self.named_params().items()}


def init_model(config: ModelConfig, embeddings: Array,
               rng: np.random.Generator) -> Model:
    if embeddings.shape != (config.vocab_size, config.d_word):
        raise ValueError(
            f"embeddings shape {embeddings.shape} does not match config "
            f"({config.vocab_size}, {config.d_word})")
    enc_fwd = GruParams.init(config.d_word, config.d_h, rng)
    enc_bwd = GruParams.init(config.d_word, config.d_h, rng)
    if config.variant == "ae":
        mu_head = logvar_head = None
    else:
        mu_head = DenseParams.init(config.d_z, config.latent_input_dim, rng)
        logvar_head = DenseParams.init(config.d_z, config.latent_input_dim, rng)
    dec_init = DenseParams.init(config.d_z, config.cond_dim, rng)
    dec = GruParams.init(config.d_word + config.cond_dim, config.d_z, rng)
    out = DenseParams.init(config.vocab_size, config.d_z, rng)
    return Model(config, np.asarray(embeddings, dtype=float), enc_fwd, enc_bwd,
                 mu_head, logvar_head, dec_init, dec, out)


# ---------------------------------------------------------------------------
# Attention weights and the weighted bag of word vectors
# ---------------------------------------------------------------------------

@dataclass
class AttentionWeights:
    """Per-position weights from each sweep and their average; each sums to 1."""

    forward: Array
    backward: Array
    averaged: Array


def _direction_weights(states_dir: Array, anchor: Array):
    e = np.einsum("...td,...d->...t", states_dir, anchor)
    total = e.sum(axis=-1, keepdims=True)
    fallback = np.abs(total) < ATTENTION_EPS
    T = states_dir.shape[-2]
    safe = np.where(fallback, 1.0, total)
    a = np.where(fallback, 1.0 / T, e / safe)
    return a, (a, safe, fallback)


def attention_forward(states: EncoderStates):
    a_fwd, cache_f = _direction_weights(states.forward, states.forward_final)
    a_bwd, cache_b = _direction_weights(states.backward, states.backward_final)
    avg = 0.5 * (a_fwd + a_bwd)
    return AttentionWeights(a_fwd, a_bwd, avg), (cache_f, cache_b)


def attention_weights(states: EncoderStates) -> AttentionWeights:
    """Normalized dot products between each state and its sweep's final state.

    Per direction, e_i = h_i . h_final and a_i = e_i / sum_k e_k; when the
    normalizer is within 1e-8 of zero that direction falls back to uniform
    1/T. The averaged weights are the arithmetic mean of the two directions.
    """
    weights, _ = attention_forward(states)
    return weights


def attention_backward(d_avg: Array, caches, states: EncoderStates):
    """Gradients of the averaged weights w.r.t. the per-position states."""
    cache_f, cache_b = caches
    d_fwd = _one_direction_backward(0.5 * d_avg, cache_f, states.forward, -1)
    d_bwd = _one_direction_backward(0.5 * d_avg, cache_b, states.backward, 0)
    return d_fwd, d_bwd


def _one_direction_backward(da: Array, cache, states_dir: Array,
                            anchor_row: int) -> Array:
    a, safe, fallback = cache
    inner = (da * a).sum(axis=-1, keepdims=True)
    de = np.where(fallback, 0.0, (da - inner) / safe)
    # e_i = h_i . anchor where the anchor is itself a row of states_dir, so
    # the product rule adds a second term into that row.
    anchor = states_dir[..., anchor_row, :]
    dstates = de[..., None] * anchor[..., None, :]
    dstates[..., anchor_row, :] += np.einsum("...t,...td->...d", de, states_dir)
    return dstates


def doc_info_vector(weights: AttentionWeights, embeddings: Array) -> Array:
    """Weighted sum of the sentence's word embeddings with the averaged weights."""
    if weights.averaged.shape[-1] != embeddings.shape[-2]:
        raise ValueError("weights and embeddings disagree on sentence length")
    return np.einsum("...t,...td->...d", weights.averaged, embeddings)


# ---------------------------------------------------------------------------
# Latent head
# ---------------------------------------------------------------------------

@dataclass
class LatentDistribution:
    """Diagonal Gaussian q(z|x); sigma = exp(0.5 * logvar) is always positive."""

    mu: Array
    logvar: Array

    @property
    def sigma(self) -> Array:
        return np.exp(0.5 * self.logvar)


def latent_params(states: EncoderStates, h_d: Array | None,
                  mu_head: DenseParams, logvar_head: DenseParams) -> LatentDistribution:
    """Linear maps from the concatenated encoder state to (mu, logvar)."""
    parts = [states.forward_final, states.backward_final]
    if h_d is not None:
        parts.append(h_d)
    h_l = np.concatenate(parts, axis=-1)
    mu = h_l @ mu_head.w.T + mu_head.b
    logvar = np.clip(h_l @ logvar_head.w.T + logvar_head.b,
                     -LOGVAR_CLAMP, LOGVAR_CLAMP)
    return LatentDistribution(mu, logvar)


def kld(dist: LatentDistribution):
    """KL(q || N(0, I)) in closed form, summed over latent dimensions."""
    lv = dist.logvar
    return 0.5 * (dist.mu ** 2 + np.exp(lv) - 1.0 - lv).sum(axis=-1)


def sample_latent(dist: LatentDistribution, rng: np.random.Generator) -> Array:
    """Reparameterized draw z = mu + sigma * eps with eps ~ N(0, I)."""
    eps = rng.standard_normal(dist.mu.shape)
    return dist.mu + dist.sigma * eps


def mean_latent(dist: LatentDistribution, n: int = 5,
                rng: np.random.Generator | None = None) -> Array:
    if n < 1:
        raise ValueError(f"n must be >= 1, got {n}")
    total = np.zeros_like(dist.mu)
    for _ in range(n):
        total += sample_latent(dist, rng)
    return total / n


# ---------------------------------------------------------------------------
# Full forward/backward
# ---------------------------------------------------------------------------

class Batch(NamedTuple):
    """Same-length training examples as id arrays; targets end with EOS."""

    tokens: Array                 # (B, T) input word ids
    zero_mask: Array | None       # (B, T) bool or None
    targets: Array                # (B, S) target ids, last column is EOS


def _check_lengths(config: ModelConfig, T: int, S: int) -> None:
    if T < 1 or S < 1:
        raise ValueError("empty input or target")
    if T > config.max_len or S - 1 > config.max_len:
        raise ValueError(
            f"sequence length exceeds max_len={config.max_len} (T={T}, S={S})")


def batch_loss_and_grads(model: Model, batch: Batch, kl_weight: float,
                         noise: Array | None, compute_grads: bool = True,
                         word_drop_rng: np.random.Generator | None = None):
    """Mean loss over a same-length batch, optionally with analytic gradients.

    noise carries the (B, d_z) standard normal draws for the latent sample;
    it is ignored for the plain autoencoder. Returns
    (stats, grads) where stats holds per-example total / reconstruction /
    KL arrays and grads maps parameter names to gradients of the batch mean.
    """
    cfg = model.config
    tokens = np.asarray(batch.tokens, dtype=np.intp)
    targets = np.asarray(batch.targets, dtype=np.intp)
    B, T = tokens.shape
    S = targets.shape[1]
    _check_lengths(cfg, T, S)

    x = apply_zero_mask(model.embeddings[tokens], batch.zero_mask)
    states, enc_caches = encode_bidirectional_forward(
        x, None, model.enc_fwd, model.enc_bwd)
    ff = states.forward[:, -1, :]
    bf = states.backward[:, 0, :]

    att_caches = h_d = dist = None
    kld_b = np.zeros(B)
    if cfg.variant == "ae":
        cond = np.concatenate([ff, bf], axis=-1)
        h_l = clamp_ok = None
    else:
        if cfg.variant == "svae":
            weights, att_caches = attention_forward(states)
            h_d = np.einsum("bt,btd->bd", weights.averaged, x)
            h_l = np.concatenate([ff, bf, h_d], axis=-1)
        else:
            h_l = np.concatenate([ff, bf], axis=-1)
        mu = h_l @ model.mu_head.w.T + model.mu_head.b
        lv_raw = h_l @ model.logvar_head.w.T + model.logvar_head.b
        clamp_ok = np.abs(lv_raw) <= LOGVAR_CLAMP
        dist = LatentDistribution(mu, np.clip(lv_raw, -LOGVAR_CLAMP, LOGVAR_CLAMP))
        kld_b = kld(dist)
        if noise is None:
            raise ValueError("vae/svae forward needs latent noise draws")
        cond = mu + dist.sigma * noise

    # Decoder with teacher forcing; the first input token is EOS.
    prev = np.empty((B, S), dtype=np.intp)
    prev[:, 0] = EOS_ID
    prev[:, 1:] = targets[:, :-1]
    if cfg.word_dropout > 0.0 and word_drop_rng is not None:
        drop = word_drop_rng.random((B, S)) < cfg.word_dropout
        prev = np.where(drop, UNK_ID, prev)

    a0 = cond @ model.dec_init.w.T + model.dec_init.b
    s = np.tanh(a0)
    s0 = s
    dec_caches = []
    dec_states = []
    recon_b = np.zeros(B)
    rows = np.arange(B)
    for t in range(S):
        step_in = np.concatenate([model.embeddings[prev[:, t]], cond], axis=-1)
        s, cache = gru_forward(step_in, s, model.dec)
        logits = s @ model.out.w.T + model.out.b
        logp = log_softmax(logits)
        recon_b -= logp[rows, targets[:, t]]
        dec_caches.append(cache)
        dec_states.append(s)

    total_b = recon_b + kl_weight * kld_b
    stats = {"total": total_b, "recon": recon_b, "kld": kld_b}
    if not compute_grads:
        return stats, None

    grads = model.zero_grads()
    g_enc_fwd = GruParams(*(grads[f"enc_fwd.{f}"] for f in GRU_FIELDS))
    g_enc_bwd = GruParams(*(grads[f"enc_bwd.{f}"] for f in GRU_FIELDS))
    g_dec = GruParams(*(grads[f"dec.{f}"] for f in GRU_FIELDS))

    inv_b = 1.0 / B
    d_cond = np.zeros_like(cond)
    carry = np.zeros_like(s0)
    d_word = cfg.d_word
    for t in range(S - 1, -1, -1):
        s_t = dec_states[t]
        logits = s_t @ model.out.w.T + model.out.b
        d_logits = softmax(logits) * inv_b
        d_logits[rows, targets[:, t]] -= inv_b
        grads["out.w"] += d_logits.T @ s_t
        grads["out.b"] += d_logits.sum(axis=0)
        ds = d_logits @ model.out.w + carry
        d_in, carry = gru_backward(ds, dec_caches[t], model.dec, g_dec)
        d_cond += d_in[:, d_word:]
    d_a0 = carry * (1.0 - s0 * s0)
    grads["dec_init.w"] += d_a0.T @ cond
    grads["dec_init.b"] += d_a0.sum(axis=0)
    d_cond += d_a0 @ model.dec_init.w

    d_states_f = np.zeros_like(states.forward)
    d_states_b = np.zeros_like(states.backward)
    if cfg.variant == "ae":
        d_states_f[:, -1, :] += d_cond[:, :cfg.d_h]
        d_states_b[:, 0, :] += d_cond[:, cfg.d_h:]
    else:
        dz = d_cond
        d_mu = dz + (kl_weight * inv_b) * dist.mu
        d_lv = dz * noise * 0.5 * dist.sigma \
            + (kl_weight * inv_b) * 0.5 * (np.exp(dist.logvar) - 1.0)
        d_lv_raw = np.where(clamp_ok, d_lv, 0.0)
        grads["mu.w"] += d_mu.T @ h_l
        grads["mu.b"] += d_mu.sum(axis=0)
        grads["logvar.w"] += d_lv_raw.T @ h_l
        grads["logvar.b"] += d_lv_raw.sum(axis=0)
        d_hl = d_mu @ model.mu_head.w + d_lv_raw @ model.logvar_head.w
        d_states_f[:, -1, :] += d_hl[:, :cfg.d_h]
        d_states_b[:, 0, :] += d_hl[:, cfg.d_h:2 * cfg.d_h]
        if cfg.variant == "svae":
            d_hd = d_hl[:, 2 * cfg.d_h:]
            d_avg = np.einsum("bd,btd->bt", d_hd, x)
            add_f, add_b = attention_backward(d_avg, att_caches, states)
            d_states_f += add_f
            d_states_b += add_b

    encode_bidirectional_backward(
        EncoderStates(d_states_f, d_states_b), enc_caches,
        model.enc_fwd, model.enc_bwd, g_enc_fwd, g_enc_bwd)
    return stats, grads


def forward_loss(model: Model, sentence: TokenSeq, target: TokenSeq,
                 kl_weight: float, rng: np.random.Generator | None = None,
                 teacher_forcing: bool = True, zero_mask=None,
                 noise: Array | None = None) -> tuple[float, float, float]:
    """Loss of one sentence: (total, reconstruction, kld).

    The target must end with EOS. For the variational variants the latent
    draw comes from rng unless an explicit noise vector is supplied.
    total = reconstruction + kl_weight * kld; the kld term is identically
    zero for the plain autoencoder.
    """
    if target.tokens[-1] != EOS_ID:
        raise ValueError("target must end with EOS")
    if not 0.0 <= kl_weight <= 1.0:
        raise ValueError(f"kl_weight must be in [0, 1], got {kl_weight}")
    if model.config.variant != "ae" and noise is None:
        if rng is None:
            raise ValueError("vae/svae forward_loss needs rng or explicit noise")
        noise = rng.standard_normal(model.config.d_z)
    if not teacher_forcing:
        return _free_running_loss(model, sentence, target, kl_weight,
                                  zero_mask, noise)
    batch = Batch(np.asarray([sentence.tokens[:sentence.T]]),
                  None if zero_mask is None else np.asarray([zero_mask]),
                  np.asarray([target.tokens]))
    stats, _ = batch_loss_and_grads(
        model, batch, kl_weight,
        None if noise is None else np.asarray([noise]), compute_grads=False)
    return (float(stats["total"][0]), float(stats["recon"][0]),
            float(stats["kld"][0]))


def _free_running_loss(model, sentence, target, kl_weight, zero_mask, noise):
    """Score the target while feeding the decoder its own argmax predictions."""
    cfg = model.config
    tokens = list(sentence.tokens[:sentence.T])
    _check_lengths(cfg, len(tokens), len(target.tokens))
    states, h_d, x = _encode_tokens(model, tokens, zero_mask)
    if cfg.variant == "ae":
        cond = np.concatenate([states.forward_final, states.backward_final])
        kld_val = 0.0
    else:
        dist = latent_params(states, h_d, model.mu_head, model.logvar_head)
        kld_val = float(kld(dist))
        cond = dist.mu + dist.sigma * noise
    init, step = decoder_stepper(model, cond)
    state = init
    prev = EOS_ID
    recon = 0.0
    for t in range(len(target.tokens)):
        logp, state = step(state, prev)
        recon -= float(logp[target.tokens[t]])
        prev = int(np.argmax(logp))
    total = recon + kl_weight * kld_val
    return total, recon, kld_val


# ---------------------------------------------------------------------------
# Inference helpers
# ---------------------------------------------------------------------------

def _encode_tokens(model: Model, tokens, zero_mask):
    x = apply_zero_mask(model.embeddings[np.asarray(tokens, dtype=np.intp)],
                        zero_mask)
    states, _ = encode_bidirectional_forward(
        x, None, model.enc_fwd, model.enc_bwd)
    h_d = None
    if model.config.variant == "svae":
        weights, _ = attention_forward(states)
        h_d = doc_info_vector(weights, x)
    return states, h_d, x


def encode_sentence(model: Model, tokens, zero_mask=None) -> EncoderStates:
    states, _, _ = _encode_tokens(model, tokens, zero_mask)
    return states


def sentence_distribution(model: Model, tokens, zero_mask=None) -> LatentDistribution:
    if model.config.variant == "ae":
        raise ValueError("ae has no latent distribution")
    states, h_d, _ = _encode_tokens(model, tokens, zero_mask)
    return latent_params(states, h_d, model.mu_head, model.logvar_head)


def conditioning_vector(model: Model, tokens, zero_mask=None,
                        rng: np.random.Generator | None = None,
                        samples: int = 5) -> Array:
    """The vector handed to the decoder: final states (ae) or a latent mean.

    For the variational variants this is the mean of `samples` reparameterized
    draws; the plain autoencoder path is deterministic and never touches rng.
    """
    states, h_d, _ = _encode_tokens(model, tokens, zero_mask)
    if model.config.variant == "ae":
        return np.concatenate([states.forward_final, states.backward_final])
    dist = latent_params(states, h_d, model.mu_head, model.logvar_head)
    return mean_latent(dist, samples, rng)


def decoder_stepper(model: Model, cond: Array):
    """Initial state plus a (state, token) -> (log-probs, state) step closure."""
    s0 = np.tanh(model.dec_init.w @ cond + model.dec_init.b)

    def step(state, token):
        x = np.concatenate([model.embeddings[token], cond])
        s = gru_forward(x, state, model.dec)[0]
        return log_softmax(s @ model.out.w.T + model.out.b), s

    return s0, step
