"""Optimiser, training loop, evaluation and input perturbations.

Random streams: every consumer draws from
``default_rng(SeedSequence([seed, stream, *keys]))`` with ``stream`` one of
the constants below, so adding a consumer never shifts another's sequence.
"""
from __future__ import annotations

import logging
import math
from typing import Sequence

import numpy as np

from .config import ModelConfig
from .depgraph import Instance, RelationVocab, mask_label, permute_labels, random_tree
from .head import CLASSES
from .metrics import MetricsReport, score
from .model import RGATModel, Vocab, read_embeddings

log = logging.getLogger(__name__)

INIT, SHUFFLE, DROPOUT, PERTURB = 0, 1, 2, 3
SPLITS = {"train": 0, "dev": 1, "test": 2}


def stream(seed: int, kind: int, *keys: int) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence([int(seed), int(kind), *map(int, keys)]))


class TrainingError(RuntimeError):
    pass


class Adamax:
    """Adam variant with an infinity-norm second moment."""

    def __init__(self, params: dict, lr=1e-3, beta1=0.9, beta2=0.999, eps=1e-8):
        self.params = params
        self.lr, self.beta1, self.beta2, self.eps = lr, beta1, beta2, eps
        self.t = 0
        self.m = {k: np.zeros_like(p.data) for k, p in params.items()}
        self.u = {k: np.zeros_like(p.data) for k, p in params.items()}

    def step(self):
        self.t += 1
        for k, p in self.params.items():
            if not np.all(np.isfinite(p.grad)):
                raise TrainingError(f"non-finite gradient in {k} at step {self.t}")
        corr = self.lr / (1.0 - self.beta1 ** self.t)
        for k, p in self.params.items():
            adamax_update(p.data, p.grad, self.m[k], self.u[k], corr, self.beta1, self.beta2, self.eps)

    def zero_grad(self):
        for p in self.params.values():
            p.zero_grad()


def adamax_update(theta, g, m, u, step_size, beta1=0.9, beta2=0.999, eps=1e-8):
    """In-place update; ``step_size`` is the bias-corrected ``lr / (1 - beta1**t)``."""
    m *= beta1
    m += (1.0 - beta1) * g
    np.maximum(beta2 * u, np.abs(g), out=u)
    theta -= step_size * m / (u + eps)


# data preparation

def perturb(instances: Sequence[Instance], config: ModelConfig, split: str = "train") -> list[Instance]:
    """Apply the configured label masking / random trees / label permutation."""
    out = list(instances)
    if not out:
        return out
    vocab = out[0].graph.vocab
    if config.mask_label:
        if config.mask_label not in vocab:
            raise ValueError(f"mask_label {config.mask_label!r} not in the relation vocabulary")
        lid = vocab.id(config.mask_label)
        out = [x.replace_graph(mask_label(x.graph, lid, config.drop_masked_edges)) for x in out]
    if config.random_tree:
        out = [x.replace_graph(random_tree(x.n, vocab, stream(config.seed, PERTURB, SPLITS[split], k)))
               for k, x in enumerate(out)]
    if config.permute_labels:
        out = [x.replace_graph(permute_labels(x.graph, stream(config.seed, PERTURB, SPLITS[split], k)))
               for k, x in enumerate(out)]
    return out


def shared_vocab(instances: Sequence[Instance]) -> RelationVocab:
    vocab = instances[0].graph.vocab
    for x in instances:
        if x.graph.vocab != vocab:
            raise ValueError("training instances were built with different relation vocabularies")
    return vocab


def build_model(config: ModelConfig, train_set: Sequence[Instance]) -> RGATModel:
    words = Vocab.build(x.tokens for x in train_set)
    tags = Vocab.build(x.pos_tags for x in train_set)
    rng = stream(config.seed, INIT)
    pretrained = read_embeddings(config.embeddings, words, config.word_dim, rng) if config.embeddings else None
    return RGATModel(config, words, tags, shared_vocab(train_set), pretrained, rng)


# training

def evaluate(model: RGATModel, instances: Sequence[Instance], batch_size: int = 64) -> MetricsReport:
    if len(instances) == 0:
        raise ValueError("evaluate: empty instance set")
    probs = model.predict_proba(instances, batch_size)
    gold = [x.polarity + 1 for x in instances]
    return score(gold, probs.argmax(axis=1))


def predictions(model: RGATModel, instances: Sequence[Instance]) -> list[dict]:
    probs = model.predict_proba(instances)
    return [{"id": x.id if x.id is not None else k, "probs": p.tolist(), "label": CLASSES[int(p.argmax())],
             "gold": CLASSES[x.polarity + 1]} for k, (x, p) in enumerate(zip(instances, probs))]


def train_epoch(model: RGATModel, opt: Adamax, data: Sequence[Instance], epoch: int) -> float:
    c = model.config
    order = stream(c.seed, SHUFFLE, epoch).permutation(len(data))
    total = 0.0
    for k, start in enumerate(range(0, len(data), c.batch_size)):
        batch = model.featurize([data[i] for i in order[start:start + c.batch_size]])
        opt.zero_grad()
        _, loss = model.loss(batch, training=True, rng=stream(c.seed, DROPOUT, epoch, k))
        value = loss.item()
        if not math.isfinite(value):
            raise TrainingError(f"non-finite loss at epoch {epoch}, batch {k}")
        loss.backward()
        try:
            opt.step()
        except TrainingError as exc:
            raise TrainingError(f"epoch {epoch}, batch {k}: {exc}") from None
        total += value
    return total


def train(config: ModelConfig, train_set: Sequence[Instance], dev_set: Sequence[Instance] | None = None,
          callback=None):
    """Train with early stopping on dev accuracy.

    Returns the model holding the best-dev parameters and one report per
    epoch (dev metrics; ``loss`` is the summed training loss).  Without a dev
    set, training accuracy drives model selection.  ``callback(epoch, report)``
    runs after every epoch; a true return value stops training.
    """
    if not train_set:
        raise ValueError("train: empty training set")
    train_set = perturb(train_set, config, "train")
    dev_set = perturb(dev_set, config, "dev") if dev_set else train_set
    model = build_model(config, train_set)
    opt = Adamax(model.trainable(), config.lr, config.beta1, config.beta2, config.eps)
    history, best, best_acc, stale = [], None, -1.0, 0
    for epoch in range(config.epochs):
        loss = train_epoch(model, opt, train_set, epoch)
        rep = evaluate(model, dev_set)
        rep.loss = loss
        rep.extra["epoch"] = epoch
        history.append(rep)
        log.info("epoch %d loss %.4f dev acc %.4f f1 %.4f", epoch, loss, rep.accuracy, rep.macro_f1)
        if rep.accuracy > best_acc:
            best_acc, best, stale = rep.accuracy, model.state_dict(), 0
        else:
            stale += 1
        if stale >= config.patience or (callback is not None and callback(epoch, rep)):
            break
    model.load_state_dict(best)
    return model, history
