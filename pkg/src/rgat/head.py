"""Target pooling, gated fusion of the two encoders, and the classifier."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import autodiff as ad
from .autodiff import Tensor
from .encoders import uniform

CLASSES = ("negative", "neutral", "positive")


def polarity_to_class(p: int) -> int:
    return int(p) + 1


def class_to_polarity(c: int) -> int:
    return int(c) - 1


def span_weights(spans, n) -> np.ndarray:
    """``B x n`` averaging weights, ``1/m`` on each span token and 0 elsewhere."""
    w = np.zeros((len(spans), n))
    for b, (s, e) in enumerate(spans):
        if e <= s:
            raise ValueError(f"empty target span {(s, e)}")
        if s < 0 or e > n:
            raise ValueError(f"target span {(s, e)} outside [0, {n})")
        w[b, s:e] = 1.0 / (e - s)
    return w


def pool_span(H: Tensor, spans) -> Tensor:
    """Average of the span rows of each ``n x d`` slice of ``H`` (``B x n x d`` -> ``B x d``)."""
    B, n, d = H.shape
    w = span_weights(spans, n)
    return ad.reshape(ad.matmul(Tensor(w[:, None, :]), H), (B, d))


@dataclass
class HeadParams:
    w_con: Tensor
    b_con: Tensor
    w_syn: Tensor
    b_syn: Tensor
    w_g: Tensor
    b_g: Tensor
    w_out: Tensor
    b_out: Tensor

    @classmethod
    def init(cls, rng, d_con=100, d_syn=100, d_fuse=50, n_classes=3):
        def lin(d_in, d_out, name):
            b = 1.0 / np.sqrt(d_in)
            return uniform(rng, (d_in, d_out), b, f"head.w_{name}"), uniform(rng, (d_out,), b, f"head.b_{name}")

        w_con, b_con = lin(d_con, d_fuse, "con")
        w_syn, b_syn = lin(d_syn, d_fuse, "syn")
        w_g, b_g = lin(2 * d_fuse, d_fuse, "g")
        w_out, b_out = lin(d_fuse, n_classes, "out")
        return cls(w_con, b_con, w_syn, b_syn, w_g, b_g, w_out, b_out)

    def params(self) -> dict[str, Tensor]:
        return {t.name: t for t in vars(self).values()}


def fuse(h_syn: Tensor, h_con: Tensor, w_g: Tensor, b_g: Tensor) -> Tensor:
    """``g * h_syn + (1 - g) * h_con`` with ``g = sigmoid([h_syn; h_con] W_g + b_g)``."""
    g = ad.sigmoid(ad.add(ad.matmul(ad.concat([h_syn, h_con], axis=-1), w_g), b_g))
    return ad.add(h_con, ad.mul(g, ad.sub(h_syn, h_con)))


def logits(h_f: Tensor, w: Tensor, b: Tensor) -> Tensor:
    return ad.add(ad.matmul(h_f, w), b)


def l2_penalty(params) -> Tensor:
    terms = [ad.sum(ad.mul(p, p)) for p in params]
    total = terms[0]
    for t in terms[1:]:
        total = ad.add(total, t)
    return total


def classify_loss(h_f: Tensor, gold, w: Tensor, b: Tensor, l2: float = 0.0, theta=()):
    """Class probabilities and summed cross-entropy plus ``l2 * ||theta||^2``."""
    gold = np.asarray(gold, dtype=np.int64)
    z = logits(h_f, w, b)
    logp = ad.log_softmax(z, axis=-1)
    picked = ad.getitem(logp, (np.arange(len(gold)), gold))
    loss = ad.scale(ad.sum(picked), -1.0)
    theta = list(theta)
    if l2 and theta:
        loss = ad.add(loss, ad.scale(l2_penalty(theta), l2))
    return np.exp(logp.data), loss
