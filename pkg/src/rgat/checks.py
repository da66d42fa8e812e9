"""Reference fixtures shared by ``rgat gradcheck`` and the test-suite."""
from __future__ import annotations

import numpy as np

from . import autodiff as ad
from .config import ModelConfig
from .depgraph import Instance, RelationVocab, build_graph
from .model import RGATModel, Vocab

TINY_DIMS = dict(word_dim=8, pos_dim=4, position_dim=4, relation_dim=4, hidden_dim=10,
                 graph_dim=10, heads=5, fusion_dim=6)


def tiny_instance() -> Instance:
    """Six tokens, target "food", parsed as a small tree with five labels."""
    vocab = RelationVocab(["nsubj", "dobj", "amod", "det", "punct"])
    g = build_graph([2, 0, 4, 2, 4, 2], ["nsubj", "root", "det", "dobj", "amod", "punct"], vocab)
    return Instance("the food was great here !".split(), ["DT", "NN", "VBD", "JJ", "RB", "."],
                    (1, 2), 1, g, "tiny-0")


def tiny_model(seed=0, **overrides) -> tuple[RGATModel, Instance]:
    inst = tiny_instance()
    cfg = ModelConfig(**{**TINY_DIMS, "layers": 2, "dropout": 0.0, "seed": seed, **overrides})
    model = RGATModel(cfg, Vocab.build([inst.tokens]), Vocab.build([inst.pos_tags]), inst.graph.vocab,
                      rng=np.random.default_rng(seed))
    return model, inst


def default_gradcheck(seed=0, eps=1e-5, n_coords=10_000) -> float:
    """Max relative error over every trainable coordinate of the tiny model's loss."""
    model, inst = tiny_model(seed)
    batch = model.featurize([inst])
    return ad.grad_check(lambda: model.loss(batch)[1], list(model.trainable().values()), eps,
                         n_coords, seed)
