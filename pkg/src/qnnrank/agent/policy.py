"""Causal self-attention policy over gate tokens.

Weights are plain float64 numpy arrays keyed by name; torch is used only as
the reverse-mode engine inside :func:`policy_loss` and for batched forward
passes.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable

import numpy as np
import torch
import torch.nn.functional as F

from ..ansatz import TokenSequence


@dataclass(frozen=True)
class PolicyShape:
    vocab: int
    max_len: int
    embed_dim: int = 64
    layer_count: int = 2
    head_count: int = 4
    ff_dim: int = 128

    def __post_init__(self):
        if self.embed_dim % self.head_count:
            raise ValueError("embed_dim must be divisible by head_count")
        if min(self.vocab, self.max_len, self.embed_dim, self.layer_count, self.ff_dim) < 1:
            raise ValueError("policy dimensions must be positive")


@dataclass
class PolicyParams:
    shape: PolicyShape
    tensors: dict[str, np.ndarray] = field(default_factory=dict)

    def copy(self) -> PolicyParams:
        return PolicyParams(self.shape, {k: v.copy() for k, v in self.tensors.items()})

    def check(self) -> None:
        expected = tensor_shapes(self.shape)
        if set(expected) != set(self.tensors):
            raise ValueError("parameter names do not match the policy shape")
        for k, s in expected.items():
            if self.tensors[k].shape != s:
                raise ValueError(f"{k}: expected shape {s}, got {self.tensors[k].shape}")
            if not np.all(np.isfinite(self.tensors[k])):
                raise ValueError(f"{k} contains non-finite values")


def tensor_shapes(shape: PolicyShape) -> dict[str, tuple[int, ...]]:
    d, f, v = shape.embed_dim, shape.ff_dim, shape.vocab
    out = {"tok_emb": (v, d), "pos_emb": (shape.max_len, d)}
    for i in range(shape.layer_count):
        out |= {
            f"l{i}.ln1_g": (d,), f"l{i}.ln1_b": (d,),
            f"l{i}.wq": (d, d), f"l{i}.wk": (d, d), f"l{i}.wv": (d, d), f"l{i}.wo": (d, d),
            f"l{i}.bq": (d,), f"l{i}.bk": (d,), f"l{i}.bv": (d,), f"l{i}.bo": (d,),
            f"l{i}.ln2_g": (d,), f"l{i}.ln2_b": (d,),
            f"l{i}.w1": (d, f), f"l{i}.b1": (f,), f"l{i}.w2": (f, d), f"l{i}.b2": (d,),
        }
    out |= {"lnf_g": (d,), "lnf_b": (d,), "head_w": (d, v), "head_b": (v,)}
    return out


def init_policy(shape: PolicyShape, rng: np.random.Generator) -> PolicyParams:
    """Xavier-uniform matrices, unit norm gains, zero biases."""
    tensors = {}
    for name, s in tensor_shapes(shape).items():
        leaf = name.rsplit(".", 1)[-1]
        if len(s) == 2:
            bound = math.sqrt(6.0 / (s[0] + s[1]))
            tensors[name] = rng.uniform(-bound, bound, s)
        elif leaf.endswith("_g"):
            tensors[name] = np.ones(s)
        else:
            tensors[name] = np.zeros(s)
    return PolicyParams(shape, tensors)


def _forward(t: dict[str, torch.Tensor], shape: PolicyShape, tokens: torch.Tensor) -> torch.Tensor:
    """Logits ``(B, T, vocab)``; position ``k`` scores the token after ``k``."""
    b, T = tokens.shape
    d, h = shape.embed_dim, shape.head_count
    hd = d // h
    x = t["tok_emb"][tokens] + t["pos_emb"][:T]
    mask = torch.ones(T, T, dtype=torch.bool).triu(1)
    for i in range(shape.layer_count):
        p = f"l{i}."
        y = F.layer_norm(x, (d,), t[p + "ln1_g"], t[p + "ln1_b"])
        q = (y @ t[p + "wq"] + t[p + "bq"]).view(b, T, h, hd).transpose(1, 2)
        k = (y @ t[p + "wk"] + t[p + "bk"]).view(b, T, h, hd).transpose(1, 2)
        v = (y @ t[p + "wv"] + t[p + "bv"]).view(b, T, h, hd).transpose(1, 2)
        att = (q @ k.transpose(-1, -2)) / math.sqrt(hd)
        att = att.masked_fill(mask, float("-inf")).softmax(-1)
        y = (att @ v).transpose(1, 2).reshape(b, T, d)
        x = x + y @ t[p + "wo"] + t[p + "bo"]
        y = F.layer_norm(x, (d,), t[p + "ln2_g"], t[p + "ln2_b"])
        y = F.gelu(y @ t[p + "w1"] + t[p + "b1"])
        x = x + y @ t[p + "w2"] + t[p + "b2"]
    x = F.layer_norm(x, (d,), t["lnf_g"], t["lnf_b"])
    return x @ t["head_w"] + t["head_b"]


def _as_torch(params: PolicyParams, grad: bool = False) -> dict[str, torch.Tensor]:
    return {k: torch.tensor(v, requires_grad=grad) for k, v in params.tensors.items()}


def _tokens(seqs) -> np.ndarray:
    return np.asarray([s.tokens if isinstance(s, TokenSequence) else s for s in seqs], dtype=np.int64)


def batch_logits(params: PolicyParams, tokens: np.ndarray) -> np.ndarray:
    """Logits at every position of a ``(B, T)`` token array."""
    tokens = np.asarray(tokens, dtype=np.int64)
    if tokens.ndim != 2 or not 1 <= tokens.shape[1] <= params.shape.max_len:
        raise ValueError(f"token batch must be (B, T) with 1 <= T <= {params.shape.max_len}")
    with torch.no_grad():
        return _forward(_as_torch(params), params.shape, torch.from_numpy(tokens)).numpy()


def policy_logits(params: PolicyParams, prefix) -> np.ndarray:
    """Next-token logits after ``prefix`` (a TokenSequence or int sequence)."""
    toks = prefix.tokens if isinstance(prefix, TokenSequence) else tuple(prefix)
    if not 1 <= len(toks) < params.shape.max_len:
        raise ValueError(f"prefix length must be in 1..{params.shape.max_len - 1}, got {len(toks)}")
    return batch_logits(params, np.asarray([toks]))[0, -1]


def _draw(logits: np.ndarray, rng: np.random.Generator) -> np.ndarray:
    z = logits - logits.max(axis=-1, keepdims=True)
    p = np.exp(z)
    cdf = np.cumsum(p, axis=-1)
    u = rng.random(logits.shape[0]) * cdf[:, -1]
    return np.minimum((cdf < u[:, None]).sum(axis=-1), logits.shape[-1] - 1)


def sample_batch(
    params: PolicyParams,
    count: int,
    length: int,
    rng: np.random.Generator,
    logits_fn: Callable[[np.ndarray], np.ndarray] | None = None,
) -> np.ndarray:
    """``count`` sequences of ``length`` tokens with first token 0.

    ``logits_fn`` replaces the policy (maps a ``(B, l)`` prefix array to
    ``(B, vocab)`` logits); tests use it to force degenerate distributions.
    """
    if length < 2:
        raise ValueError("sequence length must be >= 2")
    if length > params.shape.max_len:
        raise ValueError(f"length {length} exceeds the policy's max_len {params.shape.max_len}")
    seqs = np.zeros((count, length), dtype=np.int64)
    for l in range(1, length):
        prefix = seqs[:, :l]
        logits = logits_fn(prefix) if logits_fn else batch_logits(params, prefix)[:, -1]
        seqs[:, l] = _draw(np.asarray(logits, dtype=float), rng)
    return seqs


def sample_sequence(params: PolicyParams, length: int, rng: np.random.Generator, n: int | None = None,
                    logits_fn=None) -> TokenSequence:
    if n is None:
        n = math.isqrt(params.shape.vocab)
    return TokenSequence(n, tuple(sample_batch(params, 1, length, rng, logits_fn)[0]))


def policy_loss(params: PolicyParams, sequences, rewards) -> tuple[float, dict[str, np.ndarray]]:
    """Reward-weighted negative log-likelihood and its gradient.

    ``rewards[s, l - 2]`` is the reward for choosing token ``l`` (1-based,
    ``l >= 2``) of sequence ``s``; rewards are constants. The sum is divided
    by (number of sequences) x (sequence length).
    """
    tokens = _tokens(sequences)
    r = np.asarray(rewards, dtype=float)
    if tokens.ndim != 2 or tokens.shape[0] == 0:
        raise ValueError("need a non-empty batch of equal-length sequences")
    count, length = tokens.shape
    if r.shape != (count, length - 1):
        raise ValueError(f"rewards must have shape {(count, length - 1)}, got {r.shape}")
    t = _as_torch(params, grad=True)
    tok = torch.from_numpy(tokens)
    logp = torch.log_softmax(_forward(t, params.shape, tok[:, :-1]), dim=-1)
    chosen = logp.gather(-1, tok[:, 1:, None])[..., 0]
    loss = -(chosen * torch.from_numpy(r)).sum() / (count * length)
    names = list(t)
    grads = torch.autograd.grad(loss, [t[k] for k in names], allow_unused=True)
    out = {
        k: (g.numpy() if g is not None else np.zeros_like(params.tensors[k]))
        for k, g in zip(names, grads)
    }
    return float(loss.item()), out
