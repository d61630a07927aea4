"""Minimal numeric backbone: GRU, dense layers, Adam, dropout, grad checking.

Everything is float64 and batched over a leading axis where it helps; the
fixed model topologies in this package backpropagate by hand through these
primitives (full unroll, no truncation), so each forward here has a matching
backward that consumes the forward's cache.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable

import numpy as np

Array = np.ndarray


def sigmoid(x: Array) -> Array:
    # tanh form is overflow-free for large |x|
    return 0.5 * (np.tanh(0.5 * x) + 1.0)


def xavier_init(shape: tuple[int, int], rng: np.random.Generator) -> Array:
    """Uniform Xavier/Glorot draw for a (fan_out, fan_in) matrix."""
    fan_out, fan_in = shape
    if fan_out <= 0 or fan_in <= 0:
        raise ValueError(f"dims must be positive, got {shape}")
    bound = np.sqrt(6.0 / (fan_in + fan_out))
    return rng.uniform(-bound, bound, size=shape)


def xavier_bound(shape: tuple[int, int]) -> float:
    fan_out, fan_in = shape
    return float(np.sqrt(6.0 / (fan_in + fan_out)))


@dataclass
class DenseParams:
    """Affine map y = W x + b with W of shape (d_out, d_in)."""

    w: Array
    b: Array

    @staticmethod
    def init(d_out: int, d_in: int, rng: np.random.Generator) -> "DenseParams":
        return DenseParams(xavier_init((d_out, d_in), rng), np.zeros(d_out))

    def zeros_like(self) -> "DenseParams":
        return DenseParams(np.zeros_like(self.w), np.zeros_like(self.b))


def dense(x: Array, p: DenseParams, activation: str = "none") -> Array:
    """activation(W x + b); x may carry a leading batch axis."""
    y = x @ p.w.T + p.b
    if activation == "none":
        return y
    if activation == "tanh":
        return np.tanh(y)
    if activation == "sigmoid":
        return sigmoid(y)
    if activation == "softmax":
        return softmax(y)
    raise ValueError(f"unknown activation {activation!r}")


def softmax(logits: Array) -> Array:
    z = logits - logits.max(axis=-1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=-1, keepdims=True)


def log_softmax(logits: Array) -> Array:
    z = logits - logits.max(axis=-1, keepdims=True)
    return z - np.log(np.exp(z).sum(axis=-1, keepdims=True))


GRU_FIELDS = ("w_z", "w_r", "w_h", "u_z", "u_r", "u_h", "b_z", "b_r", "b_h")


@dataclass
class GruParams:
    """GRU cell weights. W_* map inputs (d_in) and U_* map state (d_h) to d_h."""

    w_z: Array
    w_r: Array
    w_h: Array
    u_z: Array
    u_r: Array
    u_h: Array
    b_z: Array
    b_r: Array
    b_h: Array

    @staticmethod
    def init(d_in: int, d_h: int, rng: np.random.Generator) -> "GruParams":
        def w():
            return xavier_init((d_h, d_in), rng)

        def u():
            return xavier_init((d_h, d_h), rng)

        return GruParams(w(), w(), w(), u(), u(), u(),
                         np.zeros(d_h), np.zeros(d_h), np.zeros(d_h))

    def zeros_like(self) -> "GruParams":
        return GruParams(*(np.zeros_like(getattr(self, f)) for f in GRU_FIELDS))


def gru_step(x: Array, h: Array, p: GruParams) -> Array:
    """One GRU update: h' = (1-z)*h + z*tanh(W_h x + U_h (r*h) + b_h)."""
    h_new, _ = gru_forward(x, h, p)
    return h_new


def gru_forward(x: Array, h: Array, p: GruParams):
    """gru_step plus the cache consumed by gru_backward."""
    if x.shape[-1] != p.w_z.shape[1] or h.shape[-1] != p.u_z.shape[1]:
        raise ValueError(
            f"shape mismatch: x {x.shape}, h {h.shape}, "
            f"W {p.w_z.shape}, U {p.u_z.shape}")
    z = sigmoid(x @ p.w_z.T + h @ p.u_z.T + p.b_z)
    r = sigmoid(x @ p.w_r.T + h @ p.u_r.T + p.b_r)
    hhat = np.tanh(x @ p.w_h.T + (r * h) @ p.u_h.T + p.b_h)
    h_new = (1.0 - z) * h + z * hhat
    return h_new, (x, h, z, r, hhat)


def gru_backward(dh_new: Array, cache, p: GruParams, grads: GruParams):
    """Backprop one step; accumulates into grads, returns (dx, dh_prev)."""
    x, h, z, r, hhat = cache
    batched = x.ndim == 2
    dz = dh_new * (hhat - h)
    dhhat = dh_new * z
    dh = dh_new * (1.0 - z)

    da_h = dhhat * (1.0 - hhat * hhat)
    drh = da_h @ p.u_h
    dr = drh * h
    dh = dh + drh * r
    da_r = dr * r * (1.0 - r)
    da_z = dz * z * (1.0 - z)

    dx = da_h @ p.w_h + da_r @ p.w_r + da_z @ p.w_z
    dh = dh + da_r @ p.u_r + da_z @ p.u_z

    rh = r * h
    if batched:
        grads.w_z += da_z.T @ x
        grads.w_r += da_r.T @ x
        grads.w_h += da_h.T @ x
        grads.u_z += da_z.T @ h
        grads.u_r += da_r.T @ h
        grads.u_h += da_h.T @ rh
        grads.b_z += da_z.sum(axis=0)
        grads.b_r += da_r.sum(axis=0)
        grads.b_h += da_h.sum(axis=0)
    else:
        grads.w_z += np.outer(da_z, x)
        grads.w_r += np.outer(da_r, x)
        grads.w_h += np.outer(da_h, x)
        grads.u_z += np.outer(da_z, h)
        grads.u_r += np.outer(da_r, h)
        grads.u_h += np.outer(da_h, rh)
        grads.b_z += da_z
        grads.b_r += da_r
        grads.b_h += da_h
    return dx, dh


@dataclass
class EncoderStates:
    """Per-position forward/backward GRU states of a bidirectional sweep.

    Rows are indexed by word position: forward[i] is the state after reading
    words 1..i+1 left to right, backward[i] the state after reading words
    T..i+1 right to left. Each sweep's final state is therefore forward[-1]
    and backward[0]. Arrays are (T, d_h) or (B, T, d_h) when batched.
    """

    forward: Array
    backward: Array

    @property
    def forward_final(self) -> Array:
        return self.forward[..., -1, :]

    @property
    def backward_final(self) -> Array:
        return self.backward[..., 0, :]


def apply_zero_mask(seq: Array, zero_mask) -> Array:
    """Zero the embedding at masked positions; mask shape matches seq minus d."""
    if zero_mask is None:
        return seq
    mask = np.asarray(zero_mask, dtype=bool)
    if mask.shape != seq.shape[:-1]:
        raise ValueError(
            f"zero_mask shape {mask.shape} must match sequence {seq.shape[:-1]}")
    out = seq.copy()
    out[mask] = 0.0
    return out


def encode_bidirectional(seq: Array, zero_mask, fwd: GruParams,
                         bwd: GruParams) -> EncoderStates:
    """Run both GRU sweeps over an embedded sentence (T, d_in) or (B, T, d_in)."""
    states, _ = encode_bidirectional_forward(seq, zero_mask, fwd, bwd)
    return states


def encode_bidirectional_forward(seq: Array, zero_mask, fwd: GruParams,
                                 bwd: GruParams):
    T = seq.shape[-2]
    if T < 1:
        raise ValueError("empty sequence")
    x = apply_zero_mask(seq, zero_mask)
    d_h = fwd.u_z.shape[0]
    batch_shape = x.shape[:-2]

    h = np.zeros(batch_shape + (d_h,))
    fwd_states = []
    fwd_caches = []
    for i in range(T):
        h, cache = gru_forward(x[..., i, :], h, fwd)
        fwd_states.append(h)
        fwd_caches.append(cache)

    h = np.zeros(batch_shape + (d_h,))
    bwd_states = [None] * T
    bwd_caches = [None] * T
    for i in range(T - 1, -1, -1):
        h, cache = gru_forward(x[..., i, :], h, bwd)
        bwd_states[i] = h
        bwd_caches[i] = cache

    states = EncoderStates(np.stack(fwd_states, axis=-2),
                           np.stack(bwd_states, axis=-2))
    return states, (fwd_caches, bwd_caches)


def encode_bidirectional_backward(dstates: EncoderStates, caches,
                                  fwd: GruParams, bwd: GruParams,
                                  gfwd: GruParams, gbwd: GruParams) -> None:
    """BPTT through both sweeps given gradients for every per-position state."""
    fwd_caches, bwd_caches = caches
    T = len(fwd_caches)
    carry = np.zeros_like(dstates.forward[..., 0, :])
    for i in range(T - 1, -1, -1):
        dh = dstates.forward[..., i, :] + carry
        _, carry = gru_backward(dh, fwd_caches[i], fwd, gfwd)
    carry = np.zeros_like(carry)
    for i in range(T):
        dh = dstates.backward[..., i, :] + carry
        _, carry = gru_backward(dh, bwd_caches[i], bwd, gbwd)


@dataclass
class AdamState:
    """Per-parameter Adam accumulators keyed by parameter name."""

    lr: float
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    t: int = 0
    m: dict = field(default_factory=dict)
    v: dict = field(default_factory=dict)


def adam_step(params: dict[str, Array], grads: dict[str, Array],
              state: AdamState) -> None:
    """Standard Adam update with bias correction, in place."""
    state.t += 1
    b1, b2 = state.beta1, state.beta2
    c1 = 1.0 - b1 ** state.t
    c2 = 1.0 - b2 ** state.t
    for name, p in params.items():
        g = grads[name]
        if g.shape != p.shape:
            raise ValueError(f"shape mismatch for {name}: {g.shape} vs {p.shape}")
        m = state.m.setdefault(name, np.zeros_like(p))
        v = state.v.setdefault(name, np.zeros_like(p))
        m += (1.0 - b1) * (g - m)
        v += (1.0 - b2) * (g * g - v)
        p -= state.lr * (m / c1) / (np.sqrt(v / c2) + state.eps)


def clip_global_norm(grads: dict[str, Array], max_norm: float) -> float:
    """Scale all gradients so their joint L2 norm is at most max_norm."""
    total = 0.0
    for g in grads.values():
        total += float(np.sum(g * g))
    norm = float(np.sqrt(total))
    if norm > max_norm and norm > 0.0:
        scale = max_norm / norm
        for g in grads.values():
            g *= scale
    return norm


def dropout(x: Array, rate: float, rng: np.random.Generator,
            training: bool = True):
    """Inverted dropout. Returns (output, keep_mask); mask is None at inference."""
    if not 0.0 <= rate < 1.0:
        raise ValueError(f"rate must be in [0, 1), got {rate}")
    if not training or rate == 0.0:
        return x, None
    keep = rng.random(x.shape) >= rate
    return x * keep / (1.0 - rate), keep


def grad_check(f: Callable[[dict[str, Array]], tuple[float, dict[str, Array]]],
               params: dict[str, Array], h: float = 1e-5,
               loss_fn: Callable[[dict[str, Array]], float] | None = None) -> float:
    """Max relative error between f's analytic gradients and central differences.

    f maps a name->array dict to (scalar loss, name->array gradients) and must
    be deterministic. Each parameter's gradient is compared as a whole:
    |analytic - numeric| / max(|analytic|, |numeric|, 1e-12) with the L2 norm,
    which keeps finite-difference roundoff on near-zero coordinates from
    swamping the comparison. Pass loss_fn to evaluate the perturbed points
    without recomputing gradients.
    """
    if loss_fn is None:
        def loss_fn(ps):
            return f(ps)[0]
    _, analytic = f(params)
    worst = 0.0
    for name, p in params.items():
        ga = analytic[name].reshape(-1)
        flat = p.reshape(-1)
        numeric = np.empty_like(ga)
        for i in range(flat.size):
            orig = flat[i]
            flat[i] = orig + h
            up = loss_fn(params)
            flat[i] = orig - h
            down = loss_fn(params)
            flat[i] = orig
            numeric[i] = (up - down) / (2.0 * h)
        diff = float(np.linalg.norm(ga - numeric))
        err = diff / max(float(np.linalg.norm(ga)),
                         float(np.linalg.norm(numeric)), 1e-12)
        worst = max(worst, err)
    return worst
