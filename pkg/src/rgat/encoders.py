"""Input features and the BiLSTM contextual encoder.

Sequences are processed as right-padded batches ``B x n``; ``lengths`` gives
the number of real tokens per row.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import autodiff as ad
from .autodiff import Tensor

MAX_DISTANCE = 50


def uniform(rng, shape, bound, name=None, requires_grad=True) -> Tensor:
    return Tensor(rng.uniform(-bound, bound, size=shape), requires_grad=requires_grad, name=name)


def position_indices(n: int, span: tuple[int, int], max_distance: int = MAX_DISTANCE) -> np.ndarray:
    """Signed distance of each token to the nearest target token, clamped and shifted.

    Tokens inside the span get distance 0; the result lies in
    ``[0, 2 * max_distance]``.
    """
    start, end = span
    idx = np.arange(n)
    dist = np.where(idx < start, idx - start, np.where(idx >= end, idx - (end - 1), 0))
    return np.clip(dist, -max_distance, max_distance) + max_distance


@dataclass
class EmbeddingSet:
    word: Tensor
    pos: Tensor
    position: Tensor
    relation: Tensor

    @classmethod
    def init(cls, rng, n_words, n_pos, n_relations, word_dim=300, pos_dim=30, position_dim=30,
             relation_dim=30, max_distance=MAX_DISTANCE, pretrained=None):
        if pretrained is not None:
            if pretrained.shape != (n_words, word_dim):
                raise ad.ShapeError(f"pretrained word table {pretrained.shape} != {(n_words, word_dim)}")
            word = Tensor(pretrained, requires_grad=False, name="emb.word")
        else:
            word = uniform(rng, (n_words, word_dim), 0.25, "emb.word")
        return cls(
            word=word,
            pos=uniform(rng, (n_pos, pos_dim), 0.25, "emb.pos"),
            position=uniform(rng, (2 * max_distance + 1, position_dim), 0.25, "emb.position"),
            relation=uniform(rng, (n_relations, relation_dim), 0.25, "emb.relation"),
        )

    def params(self) -> dict[str, Tensor]:
        return {"emb.word": self.word, "emb.pos": self.pos, "emb.position": self.position,
                "emb.relation": self.relation}


def embed(words, pos, positions, emb: EmbeddingSet, dropout=0.0, training=False, rng=None) -> Tensor:
    """Concatenate word, POS and position embeddings per token.

    Dropout applies to the word embeddings only.
    """
    v = ad.embedding_lookup(emb.word, words)
    v = ad.dropout(v, dropout, training, rng)
    t = ad.embedding_lookup(emb.pos, pos)
    p = ad.embedding_lookup(emb.position, positions)
    return ad.concat([v, t, p], axis=-1)


@dataclass
class LSTMParams:
    w_x: Tensor  # d_in x 4H, gate order input, forget, cell, output
    w_h: Tensor  # H x 4H
    b: Tensor    # 4H

    @classmethod
    def init(cls, rng, d_in, hidden, prefix="lstm"):
        bound = 1.0 / np.sqrt(hidden)
        b = rng.uniform(-bound, bound, size=4 * hidden)
        b[hidden:2 * hidden] += 1.0
        return cls(uniform(rng, (d_in, 4 * hidden), bound, f"{prefix}.w_x"),
                   uniform(rng, (hidden, 4 * hidden), bound, f"{prefix}.w_h"),
                   Tensor(b, requires_grad=True, name=f"{prefix}.b"))

    @property
    def hidden(self):
        return self.w_h.shape[0]


def lstm(x: Tensor, p: LSTMParams) -> Tensor:
    """Left-to-right LSTM over ``B x n x d_in`` from zero state, returns ``B x n x H``."""
    B, n, _ = x.shape
    H = p.hidden
    xw = ad.add(ad.matmul(x, p.w_x), p.b)
    h = Tensor(np.zeros((B, H)))
    c = Tensor(np.zeros((B, H)))
    outs = []
    for t in range(n):
        z = ad.add(xw[:, t, :], ad.matmul(h, p.w_h))
        i = ad.sigmoid(z[:, :H])
        f = ad.sigmoid(z[:, H:2 * H])
        g = ad.tanh(z[:, 2 * H:3 * H])
        o = ad.sigmoid(z[:, 3 * H:])
        c = ad.add(ad.mul(f, c), ad.mul(i, g))
        h = ad.mul(o, ad.tanh(c))
        outs.append(h)
    return ad.stack(outs, axis=1)


def reverse_index(lengths, n) -> np.ndarray:
    """Per-row gather index reversing the first ``lengths[b]`` positions."""
    idx = np.tile(np.arange(n), (len(lengths), 1))
    for b, L in enumerate(lengths):
        idx[b, :L] = np.arange(L)[::-1]
    return idx


@dataclass
class BiLSTMParams:
    fwd: LSTMParams
    bwd: LSTMParams

    @classmethod
    def init(cls, rng, d_in=360, hidden=50):
        return cls(LSTMParams.init(rng, d_in, hidden, "bilstm.fwd"),
                   LSTMParams.init(rng, d_in, hidden, "bilstm.bwd"))

    @property
    def output_dim(self):
        return 2 * self.fwd.hidden

    def params(self) -> dict[str, Tensor]:
        return {t.name: t for t in (self.fwd.w_x, self.fwd.w_h, self.fwd.b,
                                    self.bwd.w_x, self.bwd.w_h, self.bwd.b)}


def bilstm(x: Tensor, p: BiLSTMParams, lengths=None) -> Tensor:
    """Row i of the output is ``[forward h_i ; backward h_i]``."""
    B, n, _ = x.shape
    if lengths is None:
        lengths = [n] * B
    fwd = lstm(x, p.fwd)
    rev = reverse_index(lengths, n)[:, :, None]
    x_rev = ad.take_along(x, rev, axis=1)
    bwd = ad.take_along(lstm(x_rev, p.bwd), rev, axis=1)
    return ad.concat([fwd, bwd], axis=-1)
