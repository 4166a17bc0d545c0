"""Transformer building blocks: multi-head attention and pre-norm encoder blocks."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from . import autodiff as ad
from .autodiff import ShapeError, Tensor

MASK_BIAS = -1e30  # additive score for masked keys; exp() underflows to exactly 0


def _param(rng, shape, fan_in, fan_out) -> Tensor:
    return Tensor(ad.glorot_uniform(rng, shape, fan_in, fan_out), requires_grad=True)


def _zeros(shape) -> Tensor:
    return Tensor(np.zeros(shape), requires_grad=True)


def _ones(shape) -> Tensor:
    return Tensor(np.ones(shape), requires_grad=True)


@dataclass
class AttentionParams:
    wq: Tensor
    bq: Tensor
    wk: Tensor
    bk: Tensor
    wv: Tensor
    bv: Tensor
    wo: Tensor
    bo: Tensor

    def params(self):
        return [self.wq, self.bq, self.wk, self.bk, self.wv, self.bv, self.wo, self.bo]


def init_attention(rng: np.random.Generator, dim: int) -> AttentionParams:
    mats = [_param(rng, (dim, dim), dim, dim) for _ in range(4)]
    return AttentionParams(mats[0], _zeros(dim), mats[1], _zeros(dim),
                           mats[2], _zeros(dim), mats[3], _zeros(dim))


def multi_head_attention(x, heads: int, p: AttentionParams, mask=None) -> Tensor:
    """Standard scaled dot-product attention over [T, D] or [B, T, D].

    ``mask`` is an optional [B, T] 0/1 array; keys with mask 0 receive
    exactly zero attention weight. The op contains no positional signal,
    so permuting input rows permutes output rows identically.
    """
    x = x if isinstance(x, Tensor) else Tensor(x)
    squeeze = x.ndim == 2
    if squeeze:
        x = ad.reshape(x, (1,) + x.shape)
    b, t, d = x.shape
    if d % heads != 0:
        raise ShapeError(f"multi_head_attention: heads={heads} does not divide dim={d}")
    dh = d // heads

    def split(h):
        h = ad.reshape(h, (b, t, heads, dh))
        return ad.transpose(h, (0, 2, 1, 3))  # [B, H, T, dh]

    q = split(ad.add(ad.matmul(x, p.wq), p.bq))
    k = split(ad.add(ad.matmul(x, p.wk), p.bk))
    v = split(ad.add(ad.matmul(x, p.wv), p.bv))

    scores = ad.scale(ad.matmul(q, ad.transpose(k, (0, 1, 3, 2))), 1.0 / math.sqrt(dh))
    if mask is not None:
        mask = np.asarray(mask, dtype=np.float64)
        scores = ad.add(scores, (1.0 - mask)[:, None, None, :] * MASK_BIAS)
    attn = ad.softmax(scores, axis=-1)
    ctx = ad.transpose(ad.matmul(attn, v), (0, 2, 1, 3))
    out = ad.add(ad.matmul(ad.reshape(ctx, (b, t, d)), p.wo), p.bo)
    return ad.reshape(out, (t, d)) if squeeze else out


@dataclass
class EncoderBlock:
    """Pre-norm block: x + MHA(LN(x)), then x + FFN(LN(x)), FFN hidden = 2*dim."""

    ln1_g: Tensor
    ln1_b: Tensor
    attn: AttentionParams
    ln2_g: Tensor
    ln2_b: Tensor
    w1: Tensor
    b1: Tensor
    w2: Tensor
    b2: Tensor

    def params(self):
        return ([self.ln1_g, self.ln1_b] + self.attn.params()
                + [self.ln2_g, self.ln2_b, self.w1, self.b1, self.w2, self.b2])


def init_block(rng: np.random.Generator, dim: int) -> EncoderBlock:
    hidden = 2 * dim
    return EncoderBlock(
        ln1_g=_ones(dim), ln1_b=_zeros(dim),
        attn=init_attention(rng, dim),
        ln2_g=_ones(dim), ln2_b=_zeros(dim),
        w1=_param(rng, (dim, hidden), dim, hidden), b1=_zeros(hidden),
        w2=_param(rng, (hidden, dim), hidden, dim), b2=_zeros(dim),
    )


def encoder_block(x: Tensor, block: EncoderBlock, heads: int, mask=None) -> Tensor:
    h = ad.layer_norm(x, block.ln1_g, block.ln1_b)
    x = ad.add(x, multi_head_attention(h, heads, block.attn, mask=mask))
    h = ad.layer_norm(x, block.ln2_g, block.ln2_b)
    h = ad.relu(ad.add(ad.matmul(h, block.w1), block.b1))
    return ad.add(x, ad.add(ad.matmul(h, block.w2), block.b2))
