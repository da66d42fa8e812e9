"""Synthetic targeted-sentiment data whose class is carried only by an edge label.

Each sentence is a uniformly random tree over random tokens.  One token is
the target; one of its tree neighbours is the cue.  The cue edge is
labelled ``dep0`` for positive, ``dep1`` for negative and a filler label for
neutral.  The target's other edges carry filler labels; all remaining edges
draw from every label, so ``dep0``/``dep1`` also occur away from the target.

Tokens, tree shape, target and cue are drawn independently of the class, so
a model blind to edge labels sees no class signal.
"""
from __future__ import annotations

from collections import deque

import numpy as np

from .depgraph import prufer_decode

POS_CUE, NEG_CUE = "dep0", "dep1"
CLASS_NAMES = ("positive", "negative", "neutral")


def label_names(n_labels: int) -> list[str]:
    if n_labels < 3:
        raise ValueError("need at least 3 relation labels (two cues and a filler)")
    return [f"dep{k}" for k in range(n_labels)]


def orient(edges, n, root) -> list[int]:
    """1-based head list of the tree ``edges`` hung from ``root``."""
    nbrs = [[] for _ in range(n)]
    for a, b in edges:
        nbrs[a].append(b)
        nbrs[b].append(a)
    heads = [0] * n
    seen = {root}
    queue = deque([root])
    while queue:
        u = queue.popleft()
        for v in nbrs[u]:
            if v not in seen:
                seen.add(v)
                heads[v] = u + 1
                queue.append(v)
    return heads


def gen_synthetic(n_instances: int, vocab_sizes=(50, 8, 5), seed=0, length=(5, 10)) -> list[dict]:
    """Instance records (JSONL schema) for the label-determined task.

    ``vocab_sizes`` is (words, relation labels, POS tags); ``length`` the
    inclusive range of sentence lengths.
    """
    n_words, n_labels, n_tags = vocab_sizes
    labels = label_names(n_labels)
    fillers = labels[2:]
    rng = np.random.default_rng(seed)
    out = []
    for k in range(n_instances):
        n = int(rng.integers(length[0], length[1] + 1))
        tokens = [f"w{i}" for i in rng.integers(0, n_words, size=n)]
        tags = [f"T{i}" for i in rng.integers(0, n_tags, size=n)]
        edges = prufer_decode(rng.integers(0, n, size=n - 2).tolist(), n)
        root = int(rng.integers(0, n))
        target = int(rng.integers(0, n))
        nbrs = sorted({b if a == target else a for a, b in edges if target in (a, b)})
        cue = nbrs[int(rng.integers(0, len(nbrs)))]
        polarity = CLASS_NAMES[int(rng.integers(0, 3))]
        heads = orient(edges, n, root)
        rels = ["root"] * n
        for child in range(n):
            head = heads[child] - 1
            if head < 0:
                continue
            if {head, child} == {target, cue}:
                rel = {"positive": POS_CUE, "negative": NEG_CUE}.get(polarity)
                rel = rel or fillers[int(rng.integers(0, len(fillers)))]
            elif target in (head, child):
                rel = fillers[int(rng.integers(0, len(fillers)))]
            else:
                rel = labels[int(rng.integers(0, len(labels)))]
            rels[child] = rel
        out.append({"id": f"syn{seed}-{k}", "tokens": tokens, "pos": tags, "head": heads,
                    "deprel": rels, "target": [target, target + 1], "polarity": polarity})
    return out


def cue_label(record: dict) -> str | None:
    """Label on the target's cue edge if it is one of the two cue labels."""
    t = record["target"][0]
    for child, (h, rel) in enumerate(zip(record["head"], record["deprel"])):
        if h and t in (h - 1, child) and rel in (POS_CUE, NEG_CUE):
            return rel
    return None
