"""Full classifier: embeddings -> (BiLSTM, graph encoder) -> pooled fusion -> softmax."""
from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from . import autodiff as ad
from .autodiff import Tensor
from .config import ModelConfig
from .depgraph import Instance, RelationVocab
from .encoders import BiLSTMParams, EmbeddingSet, bilstm, embed, position_indices
from .graph import GraphEncoder
from .head import HeadParams, classify_loss, fuse, logits, polarity_to_class, pool_span


class Vocab:
    """Token vocabulary with ``<pad>`` = 0 and ``<unk>`` = 1."""

    PAD, UNK = 0, 1

    def __init__(self, items=()):
        self.itos = ["<pad>", "<unk>"]
        self.stoi = {s: i for i, s in enumerate(self.itos)}
        for it in items:
            if it not in self.stoi:
                self.stoi[it] = len(self.itos)
                self.itos.append(it)

    @classmethod
    def build(cls, sequences) -> "Vocab":
        seen = {}
        for seq in sequences:
            for s in seq:
                seen.setdefault(s, None)
        return cls(seen)

    def __len__(self):
        return len(self.itos)

    def __call__(self, items) -> list[int]:
        return [self.stoi.get(s, self.UNK) for s in items]


@dataclass
class Batch:
    words: np.ndarray
    pos: np.ndarray
    positions: np.ndarray
    lengths: list[int]
    token_mask: np.ndarray
    adj: np.ndarray
    rel: np.ndarray
    spans: list[tuple[int, int]]
    gold: np.ndarray

    def __len__(self):
        return len(self.lengths)


def read_embeddings(path, vocab: Vocab, dim: int, rng) -> np.ndarray:
    """Word table for ``vocab`` from a ``token v1 ... v_dim`` text file.

    Rows for tokens absent from the file are drawn uniform(-0.25, 0.25); the
    padding row is zero.
    """
    table = rng.uniform(-0.25, 0.25, size=(len(vocab), dim))
    table[Vocab.PAD] = 0.0
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, 1):
            parts = line.rstrip().split(" ")
            if len(parts) < dim + 1:
                continue
            tok, vals = " ".join(parts[:-dim]), parts[-dim:]
            k = vocab.stoi.get(tok)
            if k is None:
                continue
            try:
                table[k] = np.asarray(vals, dtype=np.float64)
            except ValueError:
                raise ValueError(f"{path}:{lineno}: non-numeric embedding values") from None
    return table


class RGATModel:
    def __init__(self, config: ModelConfig, word_vocab: Vocab, pos_vocab: Vocab,
                 rel_vocab: RelationVocab, pretrained: np.ndarray | None = None, rng=None):
        c = self.config = config
        self.word_vocab, self.pos_vocab, self.rel_vocab = word_vocab, pos_vocab, rel_vocab
        rng = rng if rng is not None else np.random.default_rng(c.seed)
        self.emb = EmbeddingSet.init(rng, len(word_vocab), len(pos_vocab), len(rel_vocab),
                                     c.word_dim, c.pos_dim, c.position_dim, c.relation_dim,
                                     c.max_distance, pretrained)
        d_in = c.word_dim + c.pos_dim + c.position_dim
        self.bilstm = BiLSTMParams.init(rng, d_in, c.hidden_dim // 2)
        self.graph = GraphEncoder.init(rng, d_in, c.graph_dim, c.heads, c.relation_dim, c.layers,
                                       c.variant, c.weighted_factors)
        self.head = HeadParams.init(rng, c.hidden_dim, c.graph_dim, c.fusion_dim)

    # parameters

    def all_params(self) -> dict[str, Tensor]:
        out = dict(self.emb.params())
        out.update(self.bilstm.params())
        for layer in self.graph.layers:
            out.update(layer.params("rgat", True))
        out.update({"graph.w_in": self.graph.w_in, "graph.b_in": self.graph.b_in})
        out.update(self.head.params())
        return out

    def trainable(self) -> dict[str, Tensor]:
        """Parameters that receive gradients and the L2 penalty for this variant."""
        out = {k: v for k, v in self.emb.params().items() if v.requires_grad}
        if self.graph.variant not in ("gat-ratt", "rgat"):
            out.pop("emb.relation")
        out.update(self.bilstm.params())
        out.update(self.graph.params())
        out.update(self.head.params())
        return out

    def state_dict(self) -> dict[str, np.ndarray]:
        return {k: v.data.copy() for k, v in self.all_params().items()}

    def load_state_dict(self, state: dict[str, np.ndarray]):
        params = self.all_params()
        missing = sorted(set(params) - set(state))
        if missing:
            raise KeyError(f"checkpoint lacks parameters {missing}")
        for k, p in params.items():
            if state[k].shape != p.shape:
                raise ad.ShapeError(f"{k}: checkpoint shape {state[k].shape} != model shape {p.shape}")
            p.data[...] = state[k]

    def save(self, path):
        meta = {
            "config": self.config.to_dict(),
            "word_vocab": self.word_vocab.itos,
            "pos_vocab": self.pos_vocab.itos,
            "relation_vocab": self.rel_vocab.to_list(),
        }
        ad.save_tensors(path, self.state_dict(), meta)

    @classmethod
    def load(cls, path) -> "RGATModel":
        state, meta = ad.load_tensors(path)
        wv, pv = Vocab(meta["word_vocab"][2:]), Vocab(meta["pos_vocab"][2:])
        rv = RelationVocab.from_list(meta["relation_vocab"])
        config = ModelConfig.from_dict(meta["config"])
        frozen = state["emb.word"] if config.embeddings else None
        model = cls(config, wv, pv, rv, pretrained=frozen)
        model.load_state_dict(state)
        return model

    # data

    def featurize(self, instances: Sequence[Instance]) -> Batch:
        B = len(instances)
        n = max(x.n for x in instances)
        words = np.zeros((B, n), dtype=np.int64)
        pos = np.zeros((B, n), dtype=np.int64)
        positions = np.full((B, n), self.config.max_distance, dtype=np.int64)
        adj = np.zeros((B, n, n), dtype=bool)
        rel = np.zeros((B, n, n), dtype=np.int64)
        mask = np.zeros((B, n), dtype=bool)
        for b, x in enumerate(instances):
            m = x.n
            words[b, :m] = self.word_vocab(x.tokens)
            pos[b, :m] = self.pos_vocab(x.pos_tags)
            positions[b, :m] = position_indices(m, x.target_span, self.config.max_distance)
            g = x.graph.with_vocab(self.rel_vocab)
            adj[b, :m, :m] = g.adj == 1
            rel[b, :m, :m] = g.labels
            mask[b, :m] = True
        return Batch(words, pos, positions, [x.n for x in instances], mask, adj, rel,
                     [x.target_span for x in instances],
                     np.array([polarity_to_class(x.polarity) for x in instances]))

    # forward

    def fused(self, batch: Batch, training=False, rng=None, trace=None) -> Tensor:
        c = self.config
        x = embed(batch.words, batch.pos, batch.positions, self.emb, c.dropout, training, rng)
        h = bilstm(x, self.bilstm, batch.lengths)
        g = self.graph(x, batch.adj, batch.rel, self.emb.relation, batch.token_mask, trace)
        hp = self.head
        h_con = ad.add(ad.matmul(pool_span(h, batch.spans), hp.w_con), hp.b_con)
        h_syn = ad.add(ad.matmul(pool_span(g, batch.spans), hp.w_syn), hp.b_syn)
        return fuse(h_syn, h_con, hp.w_g, hp.b_g)

    def loss(self, batch: Batch, training=False, rng=None, l2=None):
        """Returns (class probabilities, summed cross-entropy + L2 loss tensor)."""
        h_f = self.fused(batch, training, rng)
        lam = self.config.l2 if l2 is None else l2
        return classify_loss(h_f, batch.gold, self.head.w_out, self.head.b_out, lam,
                             self.trainable().values())

    def predict_proba(self, instances: Sequence[Instance], batch_size=64) -> np.ndarray:
        out = []
        for k in range(0, len(instances), batch_size):
            batch = self.featurize(instances[k:k + batch_size])
            z = logits(self.fused(batch), self.head.w_out, self.head.b_out).data
            z = z - z.max(axis=1, keepdims=True)
            p = np.exp(z)
            out.append(p / p.sum(axis=1, keepdims=True))
        return np.concatenate(out) if out else np.zeros((0, 3))

    def attention(self, instance: Instance) -> list[np.ndarray]:
        """Per-layer ``Z x n x n`` attention weights for one instance."""
        trace = []
        self.fused(self.featurize([instance]), trace=trace)
        return [a[0] for a in trace]
