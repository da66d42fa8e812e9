"""Graph attention encoders over typed dependency graphs.

Shapes: node states ``H`` are ``B x n x d``; attention tensors are
``B x Z x n x n`` (batch, head, query node i, neighbour j); relation
embeddings gathered per edge are ``B x n x n x d_r``.  Weight matrices act
on row vectors (``h @ W``), with the Z heads stacked along the output axis.

Variants:

``transformer``  all token pairs attend, no relation terms
``gat``          graph-masked attention, no relation terms
``gat-ratt``     node + relation attention scores, plain aggregation
``rgat``         node + relation attention scores, relation-aware aggregation
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import autodiff as ad
from .autodiff import Tensor
from .encoders import uniform

VARIANTS = ("transformer", "gat", "gat-ratt", "rgat")


def _heads(x: Tensor, n_heads: int) -> Tensor:
    """``B x n x d`` -> ``B x Z x n x d/Z``."""
    B, n, d = x.shape
    return ad.transpose(ad.reshape(x, (B, n, n_heads, d // n_heads)), (0, 2, 1, 3))


def _merge_heads(x: Tensor) -> Tensor:
    B, Z, n, dh = x.shape
    return ad.reshape(ad.transpose(x, (0, 2, 1, 3)), (B, n, Z * dh))


def node_scores(H: Tensor, w_q: Tensor, w_k: Tensor, n_heads: int) -> Tensor:
    """Scaled dot products ``(h_i W_Q)·(h_j W_K) / sqrt(d/Z)`` for every pair (unmasked)."""
    dh = w_q.shape[1] // n_heads
    q = _heads(ad.matmul(H, w_q), n_heads)
    k = _heads(ad.matmul(H, w_k), n_heads)
    return ad.scale(ad.matmul(q, ad.transpose(k, (0, 1, 3, 2))), 1.0 / np.sqrt(dh))


def relation_scores(H: Tensor, R: Tensor, w_q: Tensor, w_kr: Tensor, n_heads: int) -> Tensor:
    """Scaled dot products ``(h_i W_Q)·(r_ij W_K') / sqrt(d/Z)`` for every pair (unmasked)."""
    B, n, _, _ = R.shape
    dh = w_q.shape[1] // n_heads
    q = _heads(ad.matmul(H, w_q), n_heads)                              # B Z n dh
    kr = ad.reshape(ad.matmul(R, w_kr), (B, n, n, n_heads, dh))
    kr = ad.transpose(kr, (0, 3, 1, 4, 2))                              # B Z n dh n
    q = ad.reshape(q, (B, n_heads, n, 1, dh))
    e = ad.matmul(q, kr)                                                # B Z n 1 n
    return ad.scale(ad.reshape(e, (B, n_heads, n, n)), 1.0 / np.sqrt(dh))


def mix_normalize(e_node: Tensor, e_rel: Tensor | None, mask, beta1=None, beta2=None) -> Tensor:
    """Attention weights ``softmax_j(beta1 * e^N_ij + beta2 * e^R_ij)`` over neighbours.

    With ``beta1``/``beta2`` omitted the scores are simply added.  ``mask``
    broadcasts against the score shape; entries outside it are exactly 0.
    """
    s = e_node if beta1 is None else ad.mul(e_node, beta1)
    if e_rel is not None:
        s = ad.add(s, e_rel if beta2 is None else ad.mul(e_rel, beta2))
    return ad.masked_softmax(s, mask)


def aggregate(H: Tensor, alpha: Tensor, w_v: Tensor, R: Tensor | None = None,
              w_vr: Tensor | None = None) -> Tensor:
    """Per head ``sigmoid(sum_j alpha_ij (h_j W_V + r_ij W_Vr))``, heads concatenated.

    Without ``R``/``w_vr`` this is plain attention-weighted aggregation.
    """
    B, Z, n, _ = alpha.shape
    v = _heads(ad.matmul(H, w_v), Z)
    out = ad.matmul(alpha, v)
    if R is not None and w_vr is not None:
        a = ad.reshape(alpha, (B, Z, n, 1, n))
        r = ad.reshape(R, (B, 1, n, n, R.shape[-1]))
        ar = ad.reshape(ad.matmul(a, r), (B, Z, n, R.shape[-1]))   # sum_j alpha_ij r_ij
        out = ad.add(out, ad.matmul(ar, w_vr))
    return _merge_heads(ad.sigmoid(out))


def pct(H: Tensor, w1: Tensor, b1: Tensor, w2: Tensor, b2: Tensor) -> Tensor:
    """Kernel-size-1 convolution pair, i.e. a per-token two-layer feed-forward."""
    return ad.add(ad.matmul(ad.relu(ad.add(ad.matmul(H, w1), b1)), w2), b2)


@dataclass
class GraphLayer:
    w_q: Tensor
    w_k: Tensor
    w_v: Tensor
    w_kr: Tensor
    w_vr: Tensor
    w_p1: Tensor
    b_p1: Tensor
    w_p2: Tensor
    b_p2: Tensor
    beta1: Tensor
    beta2: Tensor

    @classmethod
    def init(cls, rng, d, n_heads, rel_dim, prefix):
        if d % n_heads:
            raise ValueError(f"model dim {d} not divisible by {n_heads} heads")
        dh = d // n_heads
        bd, br = 1.0 / np.sqrt(d), 1.0 / np.sqrt(rel_dim)
        return cls(
            w_q=uniform(rng, (d, d), bd, f"{prefix}.w_q"),
            w_k=uniform(rng, (d, d), bd, f"{prefix}.w_k"),
            w_v=uniform(rng, (d, d), bd, f"{prefix}.w_v"),
            w_kr=uniform(rng, (rel_dim, d), br, f"{prefix}.w_kr"),
            w_vr=uniform(rng, (rel_dim, dh), br, f"{prefix}.w_vr"),
            w_p1=uniform(rng, (d, d), bd, f"{prefix}.w_p1"),
            b_p1=uniform(rng, (d,), bd, f"{prefix}.b_p1"),
            w_p2=uniform(rng, (d, d), bd, f"{prefix}.w_p2"),
            b_p2=uniform(rng, (d,), bd, f"{prefix}.b_p2"),
            beta1=Tensor(np.ones(1), requires_grad=True, name=f"{prefix}.beta1"),
            beta2=Tensor(np.ones(1), requires_grad=True, name=f"{prefix}.beta2"),
        )

    def params(self, variant="rgat", weighted_factors=False) -> dict[str, Tensor]:
        names = ["w_q", "w_k", "w_v", "w_p1", "b_p1", "w_p2", "b_p2"]
        if variant in ("gat-ratt", "rgat"):
            names.append("w_kr")
            if weighted_factors:
                names += ["beta1", "beta2"]
        if variant == "rgat":
            names.append("w_vr")
        return {getattr(self, k).name: getattr(self, k) for k in names}


@dataclass
class GraphEncoder:
    """Input projection followed by a stack of attention/aggregation/PCT layers."""

    w_in: Tensor
    b_in: Tensor
    layers: list[GraphLayer] = field(default_factory=list)
    n_heads: int = 5
    variant: str = "rgat"
    weighted_factors: bool = False

    @classmethod
    def init(cls, rng, d_in=360, d=100, n_heads=5, rel_dim=30, n_layers=6, variant="rgat",
             weighted_factors=False):
        if variant not in VARIANTS:
            raise ValueError(f"unknown variant {variant!r}; expected one of {VARIANTS}")
        if not 0 <= n_layers <= 8:
            raise ValueError(f"layers must lie in [0, 8], got {n_layers}")
        b = 1.0 / np.sqrt(d_in)
        layers = [GraphLayer.init(rng, d, n_heads, rel_dim, f"graph.{l}") for l in range(n_layers)]
        return cls(uniform(rng, (d_in, d), b, "graph.w_in"), uniform(rng, (d,), b, "graph.b_in"),
                   layers, n_heads, variant, weighted_factors)

    def params(self) -> dict[str, Tensor]:
        out = {"graph.w_in": self.w_in, "graph.b_in": self.b_in}
        for layer in self.layers:
            out.update(layer.params(self.variant, self.weighted_factors))
        return out

    def attention_mask(self, adj, token_mask):
        """Boolean ``B x 1 x n x n`` mask of pairs allowed to attend."""
        if self.variant == "transformer":
            m = token_mask[:, :, None] & token_mask[:, None, :]
        else:
            m = np.asarray(adj, dtype=bool)
        return m[:, None, :, :]

    def __call__(self, x: Tensor, adj, rel_ids, rel_table: Tensor, token_mask=None, trace=None):
        """Encode ``x`` (``B x n x d_in``); append per-layer attention arrays to ``trace``."""
        B, n, _ = x.shape
        if token_mask is None:
            token_mask = np.ones((B, n), dtype=bool)
        mask = self.attention_mask(adj, token_mask)
        relational = self.variant in ("gat-ratt", "rgat")
        R = ad.embedding_lookup(rel_table, rel_ids) if relational else None
        H = ad.add(ad.matmul(x, self.w_in), self.b_in)
        for layer in self.layers:
            e_node = node_scores(H, layer.w_q, layer.w_k, self.n_heads)
            e_rel = relation_scores(H, R, layer.w_q, layer.w_kr, self.n_heads) if relational else None
            if relational and self.weighted_factors:
                alpha = mix_normalize(e_node, e_rel, mask, layer.beta1, layer.beta2)
            else:
                alpha = mix_normalize(e_node, e_rel, mask)
            if trace is not None:
                trace.append(alpha.data.copy())
            if self.variant == "rgat":
                H = aggregate(H, alpha, layer.w_v, R, layer.w_vr)
            else:
                H = aggregate(H, alpha, layer.w_v)
            H = pct(H, layer.w_p1, layer.b_p1, layer.w_p2, layer.b_p2)
        return H
