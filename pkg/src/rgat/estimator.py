"""scikit-learn compatible front end for the RGAT classifier."""
from __future__ import annotations

from typing import Sequence

import numpy as np
from sklearn.base import BaseEstimator, ClassifierMixin, TransformerMixin
from sklearn.utils.validation import check_is_fitted

from .config import ModelConfig
from .depgraph import POLARITY, Instance
from .model import RGATModel
from .training import evaluate, perturb, train


def check_instances(X, name="X") -> list[Instance]:
    if isinstance(X, Instance):
        raise TypeError(f"{name} must be a sequence of Instance objects, not a single Instance")
    try:
        X = list(X)
    except TypeError:
        raise TypeError(f"{name} must be a sequence of Instance objects") from None
    if not X:
        raise ValueError(f"{name} is empty")
    bad = [type(x).__name__ for x in X if not isinstance(x, Instance)]
    if bad:
        raise TypeError(f"{name} must contain Instance objects, found {sorted(set(bad))}")
    return X


def check_polarities(y, n) -> np.ndarray:
    y = [POLARITY[v] if isinstance(v, str) else int(v) for v in y]
    if len(y) != n:
        raise ValueError(f"y has {len(y)} labels for {n} instances")
    if not set(y) <= {-1, 0, 1}:
        raise ValueError(f"polarities must be -1, 0 or 1, got {sorted(set(y) - {-1, 0, 1})}")
    return np.asarray(y)


class RGATClassifier(ClassifierMixin, TransformerMixin, BaseEstimator):
    """Targeted sentiment classifier over dependency-parsed instances.

    ``fit``/``predict`` take sequences of :class:`~rgat.depgraph.Instance`.
    ``y`` is optional: when given it overrides each instance's polarity.
    Predictions are polarities in ``classes_`` = (-1, 0, 1).  ``transform``
    returns the fused 50-d target representation.
    """

    def __init__(self, variant="rgat", layers=6, weighted_factors=False, word_dim=300, pos_dim=30,
                 position_dim=30, relation_dim=30, hidden_dim=100, graph_dim=100, heads=5,
                 fusion_dim=50, max_distance=50, dropout=0.7, l2=1e-5, lr=1e-3, beta1=0.9,
                 beta2=0.999, eps=1e-8, epochs=50, batch_size=32, patience=10, seed=0,
                 embeddings="", mask_label="", drop_masked_edges=False, random_tree=False,
                 permute_labels=False):
        self.variant = variant
        self.layers = layers
        self.weighted_factors = weighted_factors
        self.word_dim = word_dim
        self.pos_dim = pos_dim
        self.position_dim = position_dim
        self.relation_dim = relation_dim
        self.hidden_dim = hidden_dim
        self.graph_dim = graph_dim
        self.heads = heads
        self.fusion_dim = fusion_dim
        self.max_distance = max_distance
        self.dropout = dropout
        self.l2 = l2
        self.lr = lr
        self.beta1 = beta1
        self.beta2 = beta2
        self.eps = eps
        self.epochs = epochs
        self.batch_size = batch_size
        self.patience = patience
        self.seed = seed
        self.embeddings = embeddings
        self.mask_label = mask_label
        self.drop_masked_edges = drop_masked_edges
        self.random_tree = random_tree
        self.permute_labels = permute_labels

    @classmethod
    def from_config(cls, config: ModelConfig) -> "RGATClassifier":
        return cls(**config.to_dict())

    def to_config(self) -> ModelConfig:
        return ModelConfig.from_dict(self.get_params())

    def fit(self, X, y=None, eval_set=None):
        X = check_instances(X)
        if y is not None:
            y = check_polarities(y, len(X))
            X = [Instance(x.tokens, x.pos_tags, x.target_span, int(p), x.graph, x.id) for x, p in zip(X, y)]
        dev = check_instances(eval_set, "eval_set") if eval_set is not None else None
        self.model_, self.history_ = train(self.to_config(), X, dev)
        self.classes_ = np.array([-1, 0, 1])
        return self

    def _inputs(self, X):
        check_is_fitted(self, "model_")
        return perturb(check_instances(X), self.model_.config, "test")

    def predict_proba(self, X) -> np.ndarray:
        return self.model_.predict_proba(self._inputs(X))

    def predict(self, X) -> np.ndarray:
        check_is_fitted(self, "model_")
        return self.classes_[self.predict_proba(X).argmax(axis=1)]

    def transform(self, X) -> np.ndarray:
        X = self._inputs(X)
        out = []
        for k in range(0, len(X), 64):
            out.append(self.model_.fused(self.model_.featurize(X[k:k + 64])).data)
        return np.concatenate(out)

    def score(self, X, y=None, sample_weight=None):
        if y is None:
            y = [x.polarity for x in check_instances(X)]
        return super().score(X, y, sample_weight)

    def evaluate(self, X):
        return evaluate(self.model_, self._inputs(X))

    def save(self, path):
        check_is_fitted(self, "model_")
        self.model_.save(path)

    @classmethod
    def load(cls, path) -> "RGATClassifier":
        model = RGATModel.load(path)
        est = cls.from_config(model.config)
        est.model_, est.history_, est.classes_ = model, [], np.array([-1, 0, 1])
        return est
