"""Typed dependency graphs, CoNLL-U / JSONL ingestion and graph perturbations."""
from __future__ import annotations

import hashlib
import heapq
import io
import json
import os
from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np

POLARITY = {"positive": 1, "negative": -1, "neutral": 0}
POLARITY_NAME = {v: k for k, v in POLARITY.items()}


class GraphError(ValueError):
    """Raised for heads/labels that do not describe a single rooted tree."""


class ConlluError(ValueError):
    pass


class RelationVocab:
    """Bijective mapping between relation label strings and contiguous ids.

    Ids 0-3 are reserved and never change: NONE (no edge), SELF (self loop),
    REMOVED (ablated label) and UNK (label unseen when the vocab was built).
    """

    NONE, SELF, REMOVED, UNK = 0, 1, 2, 3
    RESERVED = ("<none>", "<self>", "<removed>", "<unk>")

    def __init__(self, labels: Iterable[str] = ()):
        self._itos = list(self.RESERVED)
        self._stoi = {s: i for i, s in enumerate(self._itos)}
        for lab in labels:
            if lab not in self._stoi:
                self._stoi[lab] = len(self._itos)
                self._itos.append(lab)
        self.name = hashlib.sha256("\n".join(self._itos).encode("utf-8")).hexdigest()[:16]

    @classmethod
    def from_records(cls, records: Iterable[dict]) -> "RelationVocab":
        labels = set()
        for r in records:
            labels.update(lab for h, lab in zip(r["head"], r["deprel"]) if h != 0)
        return cls(sorted(labels))

    def __len__(self):
        return len(self._itos)

    def __contains__(self, label):
        return label in self._stoi

    def __eq__(self, other):
        return isinstance(other, RelationVocab) and self._itos == other._itos

    def __hash__(self):
        return hash(self.name)

    def id(self, label: str) -> int:
        return self._stoi.get(label, self.UNK)

    def label(self, idx: int) -> str:
        return self._itos[idx]

    @property
    def labels(self) -> list[str]:
        return list(self._itos[len(self.RESERVED):])

    @property
    def non_reserved_ids(self) -> np.ndarray:
        return np.arange(len(self.RESERVED), len(self._itos))

    def is_reserved(self, idx: int) -> bool:
        return 0 <= idx < len(self.RESERVED)

    def to_list(self) -> list[str]:
        return list(self._itos)

    @classmethod
    def from_list(cls, itos: Sequence[str]) -> "RelationVocab":
        if tuple(itos[:len(cls.RESERVED)]) != cls.RESERVED:
            raise ValueError("relation vocab does not start with the reserved labels")
        return cls(itos[len(cls.RESERVED):])

    def save(self, path):
        with open(path, "w", encoding="utf-8") as fh:
            json.dump(self.to_list(), fh)

    @classmethod
    def load(cls, path) -> "RelationVocab":
        with open(path, encoding="utf-8") as fh:
            return cls.from_list(json.load(fh))

    def __repr__(self):
        return f"RelationVocab({len(self)} ids, name={self.name})"


def _readonly(a):
    a = np.array(a)
    a.setflags(write=False)
    return a


@dataclass(frozen=True, eq=False)
class DepGraph:
    """Undirected typed graph over the tokens of one sentence.

    ``adj`` is symmetric with ones on the diagonal; ``labels[i, j]`` holds a
    relation id wherever ``adj[i, j] == 1`` and ``RelationVocab.NONE``
    elsewhere.  The diagonal carries ``RelationVocab.SELF``.
    """

    adj: np.ndarray
    labels: np.ndarray
    vocab: RelationVocab = field(repr=False)

    def __post_init__(self):
        object.__setattr__(self, "adj", _readonly(np.asarray(self.adj, dtype=np.int8)))
        object.__setattr__(self, "labels", _readonly(np.asarray(self.labels, dtype=np.int64)))
        self.validate()

    @property
    def n(self) -> int:
        return self.adj.shape[0]

    @property
    def label_vocab_ref(self) -> str:
        return self.vocab.name

    def validate(self):
        adj, lab = self.adj, self.labels
        if adj.ndim != 2 or adj.shape[0] != adj.shape[1] or lab.shape != adj.shape:
            raise GraphError(f"adjacency {adj.shape} and labels {lab.shape} must be equal square matrices")
        if not np.array_equal(adj, adj.T):
            raise GraphError("adjacency is not symmetric")
        if not np.all(np.diag(adj) == 1):
            raise GraphError("self loops missing")
        if not np.array_equal(lab, lab.T):
            raise GraphError("labels are not symmetric")
        if not np.array_equal(lab != RelationVocab.NONE, adj == 1):
            raise GraphError("labels must be set exactly where edges exist")

    def edges(self) -> list[tuple[int, int]]:
        """Off-diagonal undirected edges as (i, j) with i < j, row-major."""
        i, j = np.nonzero(np.triu(self.adj, k=1))
        return list(zip(i.tolist(), j.tolist()))

    def edge_labels(self) -> list[int]:
        return [int(self.labels[i, j]) for i, j in self.edges()]

    def is_tree(self) -> bool:
        edges = self.edges()
        if len(edges) != self.n - 1:
            return False
        seen, stack = {0}, [0]
        while stack:
            u = stack.pop()
            for v in np.nonzero(self.adj[u])[0].tolist():
                if v not in seen:
                    seen.add(v)
                    stack.append(v)
        return len(seen) == self.n

    def permuted(self, perm: Sequence[int]) -> "DepGraph":
        """Graph with node ``perm[k]`` moved to position ``k``."""
        perm = np.asarray(perm)
        return DepGraph(self.adj[np.ix_(perm, perm)], self.labels[np.ix_(perm, perm)], self.vocab)

    def with_vocab(self, vocab: RelationVocab) -> "DepGraph":
        """Re-index labels into another vocab; labels it lacks become UNK."""
        if vocab == self.vocab:
            return self
        lut = np.array([vocab.id(self.vocab.label(k)) if not self.vocab.is_reserved(k) else k
                        for k in range(len(self.vocab))])
        return DepGraph(self.adj, lut[self.labels], vocab)


def _from_edges(n, edges, edge_labels, vocab) -> DepGraph:
    adj = np.eye(n, dtype=np.int8)
    lab = np.full((n, n), RelationVocab.NONE, dtype=np.int64)
    np.fill_diagonal(lab, RelationVocab.SELF)
    for (i, j), r in zip(edges, edge_labels):
        adj[i, j] = adj[j, i] = 1
        lab[i, j] = lab[j, i] = r
    return DepGraph(adj, lab, vocab)


def build_graph(heads: Sequence[int], labels: Sequence[str], vocab: RelationVocab) -> DepGraph:
    """Symmetrised, self-looped typed graph from a 1-based head list (0 = root).

    Both directions of an arc carry its label id.  The root's own arc adds no
    edge.  Labels missing from ``vocab`` map to UNK.
    """
    n = len(heads)
    if len(labels) != n:
        raise GraphError(f"heads ({n}) and labels ({len(labels)}) differ in length")
    if n == 0:
        raise GraphError("empty sentence")
    roots = [i for i, h in enumerate(heads) if h == 0]
    if len(roots) != 1:
        raise GraphError(f"expected exactly one root, found {len(roots)} at positions {roots}")
    for i, h in enumerate(heads):
        if not 0 <= h <= n:
            raise GraphError(f"head {h} of token {i + 1} outside [0, {n}]")
        if h == i + 1:
            raise GraphError(f"token {i + 1} is its own head")
    for start in range(n):
        seen, k = set(), start
        while heads[k] != 0:
            if k in seen:
                raise GraphError(f"cycle through token {k + 1}")
            seen.add(k)
            k = heads[k] - 1
    edges = [(heads[i] - 1, i) for i in range(n) if heads[i] != 0]
    return _from_edges(n, edges, [vocab.id(labels[i]) for i in range(n) if heads[i] != 0], vocab)


def prufer_decode(seq: Sequence[int], n: int) -> list[tuple[int, int]]:
    """Edges of the labelled tree on ``n`` nodes encoded by a Prüfer sequence."""
    degree = [1] * n
    for v in seq:
        degree[v] += 1
    leaves = [i for i in range(n) if degree[i] == 1]
    heapq.heapify(leaves)
    edges = []
    for v in seq:
        leaf = heapq.heappop(leaves)
        edges.append((min(leaf, v), max(leaf, v)))
        degree[v] -= 1
        if degree[v] == 1:
            heapq.heappush(leaves, v)
    u, w = heapq.heappop(leaves), heapq.heappop(leaves)
    edges.append((u, w))
    return edges


def random_tree(n: int, vocab: RelationVocab, seed=None) -> DepGraph:
    """Uniformly random labelled spanning tree via a random Prüfer sequence.

    Edge labels are drawn uniformly from the non-reserved relation ids.
    """
    if n < 1:
        raise ValueError(f"random_tree: need n >= 1, got {n}")
    rng = seed if isinstance(seed, np.random.Generator) else np.random.default_rng(seed)
    if n == 1:
        return _from_edges(1, [], [], vocab)
    choices = vocab.non_reserved_ids
    if len(choices) == 0:
        raise ValueError("random_tree: vocab has no non-reserved labels")
    seq = rng.integers(0, n, size=n - 2).tolist()
    edges = prufer_decode(seq, n)
    return _from_edges(n, edges, rng.choice(choices, size=len(edges)).tolist(), vocab)


def permute_labels(g: DepGraph, seed=None) -> DepGraph:
    """Shuffle edge labels over the undirected edge list, keeping the structure.

    Edges are enumerated as in :meth:`DepGraph.edges`; edge ``k`` receives
    the label previously on edge ``perm[k]`` where
    ``perm = default_rng(seed).permutation(len(edges))``.
    """
    rng = seed if isinstance(seed, np.random.Generator) else np.random.default_rng(seed)
    edges = g.edges()
    old = g.edge_labels()
    perm = rng.permutation(len(edges))
    return _from_edges(g.n, edges, [old[k] for k in perm], g.vocab)


def mask_label(g: DepGraph, label_id: int, drop_edges: bool = False) -> DepGraph:
    """Replace ``label_id`` with REMOVED everywhere (or delete those edges)."""
    if g.vocab.is_reserved(label_id) or not 0 <= label_id < len(g.vocab):
        raise ValueError(f"mask_label: {label_id} is not a maskable relation id")
    hit = g.labels == label_id
    if not hit.any():
        return g
    lab = np.array(g.labels)
    adj = np.array(g.adj)
    if drop_edges:
        lab[hit] = RelationVocab.NONE
        adj[hit] = 0
    else:
        lab[hit] = RelationVocab.REMOVED
    return DepGraph(adj, lab, g.vocab)


# CoNLL-U

def _lines(stream):
    if isinstance(stream, (str, os.PathLike)):
        with open(stream, encoding="utf-8") as fh:
            yield from fh
    else:
        yield from stream


def read_conllu(stream) -> list[tuple[list[str], list[str], list[int], list[str]]]:
    """Parse CoNLL-U into (tokens, upos, heads, deprels) per sentence.

    Multiword ranges (``3-4``) and empty nodes (``5.1``) are skipped.
    """
    sentences = []
    cur = ([], [], [], [])

    def flush():
        nonlocal cur
        if cur[0]:
            sentences.append(cur)
        cur = ([], [], [], [])

    for lineno, raw in enumerate(_lines(stream), 1):
        line = raw.rstrip("\r\n")
        if not line.strip():
            flush()
            continue
        if line.startswith("#"):
            continue
        cols = line.split("\t")
        if len(cols) != 10:
            raise ConlluError(f"line {lineno}: expected 10 tab-separated columns, got {len(cols)}")
        tid = cols[0]
        if "-" in tid or "." in tid:
            continue
        try:
            head = int(cols[6])
        except ValueError:
            raise ConlluError(f"line {lineno}: HEAD {cols[6]!r} is not an integer") from None
        cur[0].append(cols[1])
        cur[1].append(cols[3])
        cur[2].append(head)
        cur[3].append(cols[7])
    flush()
    return sentences


def write_conllu(sentences, stream):
    for tokens, tags, heads, rels in sentences:
        for i, (tok, tag, h, r) in enumerate(zip(tokens, tags, heads, rels), 1):
            stream.write("\t".join([str(i), tok, "_", tag, "_", "_", str(h), r, "_", "_"]) + "\n")
        stream.write("\n")


# instances

@dataclass(frozen=True, eq=False)
class Instance:
    """One target mention in one sentence, with its graph and gold polarity."""

    tokens: tuple
    pos_tags: tuple
    target_span: tuple
    polarity: int
    graph: DepGraph
    id: str | None = None

    def __post_init__(self):
        object.__setattr__(self, "tokens", tuple(self.tokens))
        object.__setattr__(self, "pos_tags", tuple(self.pos_tags))
        object.__setattr__(self, "target_span", tuple(int(x) for x in self.target_span))
        n = len(self.tokens)
        s, e = self.target_span
        if not 0 <= s < e <= n:
            raise ValueError(f"target span {self.target_span} invalid for {n} tokens")
        if len(self.pos_tags) != n:
            raise ValueError(f"{len(self.pos_tags)} POS tags for {n} tokens")
        if self.graph.n != n:
            raise ValueError(f"graph has {self.graph.n} nodes for {n} tokens")
        if self.polarity not in POLARITY_NAME:
            raise ValueError(f"polarity must be one of 1, -1, 0, got {self.polarity!r}")

    @property
    def n(self):
        return len(self.tokens)

    def replace_graph(self, graph: DepGraph) -> "Instance":
        return Instance(self.tokens, self.pos_tags, self.target_span, self.polarity, graph, self.id)


_RECORD_KEYS = ("tokens", "pos", "head", "deprel", "target", "polarity")


def validate_record(rec: dict, where: str = "record") -> dict:
    missing = [k for k in _RECORD_KEYS if k not in rec]
    if missing:
        raise ValueError(f"{where}: missing fields {missing}")
    n = len(rec["tokens"])
    for k in ("pos", "head", "deprel"):
        if len(rec[k]) != n:
            raise ValueError(f"{where}: field {k!r} has length {len(rec[k])}, expected {n}")
    if rec["polarity"] not in POLARITY:
        raise ValueError(f"{where}: polarity {rec['polarity']!r} not in {sorted(POLARITY)}")
    t = rec["target"]
    if len(t) != 2 or not 0 <= t[0] < t[1] <= n:
        raise ValueError(f"{where}: target {t} is not a valid half-open span over {n} tokens")
    return rec


def read_records(stream) -> list[dict]:
    records = []
    for lineno, line in enumerate(_lines(stream), 1):
        if not line.strip():
            continue
        try:
            rec = json.loads(line)
        except json.JSONDecodeError as exc:
            raise ValueError(f"line {lineno}: invalid JSON ({exc.msg})") from None
        records.append(validate_record(rec, f"line {lineno}"))
    return records


def write_records(records: Iterable[dict], stream):
    close = False
    if isinstance(stream, (str, os.PathLike)):
        stream, close = open(stream, "w", encoding="utf-8"), True
    try:
        for rec in records:
            stream.write(json.dumps(rec, sort_keys=True, ensure_ascii=False) + "\n")
    finally:
        if close:
            stream.close()


def record_to_instance(rec: dict, vocab: RelationVocab) -> Instance:
    g = build_graph(rec["head"], rec["deprel"], vocab)
    return Instance(rec["tokens"], rec["pos"], tuple(rec["target"]), POLARITY[rec["polarity"]], g,
                    rec.get("id"))


def records_to_instances(records: Iterable[dict], vocab: RelationVocab) -> list[Instance]:
    out = []
    for k, rec in enumerate(records):
        try:
            out.append(record_to_instance(rec, vocab))
        except (GraphError, ValueError) as exc:
            raise ValueError(f"instance {rec.get('id', k)}: {exc}") from None
    return out


def conllu_to_records(conllu, targets) -> list[dict]:
    """Join parsed sentences with (sentence index, start, end, polarity) rows."""
    sents = read_conllu(conllu)
    out = []
    for k, (sid, start, end, pol) in enumerate(targets):
        if not 0 <= sid < len(sents):
            raise ValueError(f"target row {k}: sentence index {sid} out of range")
        toks, tags, heads, rels = sents[sid]
        out.append(validate_record({
            "id": f"{sid}:{start}-{end}", "tokens": toks, "pos": tags, "head": heads, "deprel": rels,
            "target": [start, end], "polarity": pol,
        }, f"target row {k}"))
    return out


def read_targets(stream) -> list[tuple[int, int, int, str]]:
    """Tab-separated ``sentence_index start end polarity`` rows."""
    rows = []
    for lineno, line in enumerate(_lines(stream), 1):
        if not line.strip() or line.startswith("#"):
            continue
        cols = line.split()
        if len(cols) != 4:
            raise ValueError(f"line {lineno}: expected 4 columns, got {len(cols)}")
        try:
            rows.append((int(cols[0]), int(cols[1]), int(cols[2]), cols[3]))
        except ValueError:
            raise ValueError(f"line {lineno}: index columns must be integers") from None
    return rows


def dumps_records(records) -> str:
    buf = io.StringIO()
    write_records(records, buf)
    return buf.getvalue()
