import numpy as np
import pytest

from rgat.autodiff import Tensor
from rgat.checks import TINY_DIMS, tiny_instance, tiny_model
from rgat.config import ConfigError, ModelConfig
from rgat.depgraph import RelationVocab, records_to_instances
from rgat.model import RGATModel
from rgat.synthetic import gen_synthetic
from rgat.training import (
    DROPOUT, INIT, Adamax, TrainingError, adamax_update, build_model, evaluate, perturb, predictions, stream, train,
    train_epoch,
)


def synthetic_split(n, seed, vocab=None):
    recs = gen_synthetic(n, seed=seed)
    vocab = vocab or RelationVocab.from_records(recs)
    return records_to_instances(recs, vocab), vocab


def small_config(**kw):
    return ModelConfig(**{**TINY_DIMS, "layers": 1, "epochs": 2, "batch_size": 8, "dropout": 0.3, **kw})


# optimiser

def test_adamax_two_steps_by_hand():
    lr, b1, b2, eps, g = 0.1, 0.9, 0.999, 1e-8, 0.5
    theta, m, u = 1.0, 0.0, 0.0
    expected = []
    for t in (1, 2):
        m = b1 * m + (1 - b1) * g
        u = max(b2 * u, abs(g))
        theta = theta - lr / (1 - b1 ** t) * m / (u + eps)
        expected.append(theta)
    p = Tensor(np.array([1.0]), requires_grad=True)
    opt = Adamax({"p": p}, lr, b1, b2, eps)
    got = []
    for _ in range(2):
        p.grad[...] = g
        opt.step()
        got.append(p.data[0])
    assert got == expected
    assert got[0] == pytest.approx(0.9, abs=1e-7) and got[1] == pytest.approx(0.8, abs=1e-7)


def test_adamax_update_uses_infinity_norm():
    theta, m, u = np.zeros(2), np.zeros(2), np.array([3.0, 0.1])
    adamax_update(theta, np.array([1.0, -2.0]), m, u, 1.0, 0.5, 0.5, 0.0)
    np.testing.assert_array_equal(u, [1.5, 2.0])
    np.testing.assert_array_equal(m, [0.5, -1.0])


def test_adamax_refuses_non_finite_gradients():
    p = Tensor(np.ones(2), requires_grad=True)
    opt = Adamax({"p": p})
    p.grad[0] = np.nan
    with pytest.raises(TrainingError, match="non-finite gradient in p"):
        opt.step()


# streams

def test_streams_are_independent_and_reproducible():
    a = stream(3, INIT).random(4)
    assert np.array_equal(a, stream(3, INIT).random(4))
    assert not np.array_equal(a, stream(3, DROPOUT).random(4))
    assert not np.array_equal(stream(3, DROPOUT, 0, 1).random(4), stream(3, DROPOUT, 1, 0).random(4))


# perturbations

def test_perturb_is_split_and_seed_specific():
    data, _ = synthetic_split(20, 0)
    cfg = small_config(random_tree=True)
    tr = perturb(data, cfg, "train")
    assert all(x.graph.is_tree() for x in tr)
    assert all(np.array_equal(a.graph.labels, b.graph.labels) for a, b in zip(tr, perturb(data, cfg, "train")))
    te = perturb(data, cfg, "test")
    assert any(not np.array_equal(a.graph.adj, b.graph.adj) for a, b in zip(tr, te))
    pl = perturb(data, small_config(permute_labels=True), "train")
    for a, b in zip(pl, data):
        assert np.array_equal(a.graph.adj, b.graph.adj)
        assert sorted(a.graph.edge_labels()) == sorted(b.graph.edge_labels())


def test_mask_label_config():
    data, vocab = synthetic_split(10, 0)
    out = perturb(data, small_config(mask_label="dep0"), "train")
    assert not any((x.graph.labels == vocab.id("dep0")).any() for x in out)
    with pytest.raises(ValueError, match="not in the relation vocabulary"):
        perturb(data, small_config(mask_label="nsubj"), "train")


def test_random_tree_and_permute_are_exclusive():
    with pytest.raises(ConfigError):
        small_config(random_tree=True, permute_labels=True)


# training

def test_training_is_deterministic():
    train_set, vocab = synthetic_split(40, 1)
    dev, _ = synthetic_split(20, 2, vocab)
    cfg = small_config(epochs=3)
    m1, h1 = train(cfg, train_set, dev)
    m2, h2 = train(cfg, train_set, dev)
    assert [h.loss for h in h1] == [h.loss for h in h2]
    assert [h.accuracy for h in h1] == [h.accuracy for h in h2]
    s1, s2 = m1.state_dict(), m2.state_dict()
    assert all(np.array_equal(s1[k], s2[k]) for k in s1)


def test_single_instance_is_memorised():
    inst = tiny_instance()
    cfg = ModelConfig(**{**TINY_DIMS, "layers": 2, "epochs": 30, "patience": 30, "lr": 0.05, "dropout": 0.0})
    model, hist = train(cfg, [inst])
    assert hist[-1].accuracy == 1.0
    assert model.predict_proba([inst])[0].argmax() == inst.polarity + 1


def test_early_stopping_keeps_best_dev_weights():
    train_set, vocab = synthetic_split(30, 3)
    dev, _ = synthetic_split(30, 4, vocab)
    model, hist = train(small_config(epochs=6, patience=2, lr=0.01), train_set, dev)
    assert len(hist) <= 6
    assert evaluate(model, dev).accuracy == max(h.accuracy for h in hist)


@pytest.mark.filterwarnings("ignore::RuntimeWarning")
def test_non_finite_loss_aborts_with_position():
    train_set, _ = synthetic_split(16, 5)
    cfg = small_config()
    model = build_model(cfg, train_set)
    model.head.b_out.data[0] = np.inf
    opt = Adamax(model.trainable())
    with pytest.raises(TrainingError, match="epoch 0, batch 0"):
        train_epoch(model, opt, train_set, 0)


def test_evaluate_empty_set():
    model, _ = tiny_model()
    with pytest.raises(ValueError, match="empty"):
        evaluate(model, [])
    with pytest.raises(ValueError, match="empty"):
        train(small_config(), [])


def test_predictions_rows():
    model, inst = tiny_model()
    rows = predictions(model, [inst])
    assert rows[0]["id"] == "tiny-0" and rows[0]["gold"] == "positive"
    assert sum(rows[0]["probs"]) == pytest.approx(1.0)


def test_relational_table_only_trained_when_used():
    model, _ = tiny_model(variant="gat")
    assert "emb.relation" not in model.trainable()
    model, _ = tiny_model(variant="gat-ratt")
    assert "emb.relation" in model.trainable()
    assert not any("w_vr" in k for k in model.trainable())


def test_checkpoint_round_trip(tmp_path):
    model, inst = tiny_model(seed=4)
    path = tmp_path / "m.ckpt"
    model.save(path)
    back = RGATModel.load(path)
    assert back.config == model.config
    np.testing.assert_array_equal(back.predict_proba([inst]), model.predict_proba([inst]))
    back.save(tmp_path / "m2.ckpt")
    assert (tmp_path / "m2.ckpt").read_bytes() == path.read_bytes()


def test_batching_does_not_change_predictions():
    data, vocab = synthetic_split(12, 6)
    model = build_model(small_config(layers=2), data)
    together = model.predict_proba(data, batch_size=12)
    alone = np.concatenate([model.predict_proba([x]) for x in data])
    np.testing.assert_allclose(together, alone, atol=1e-12)


# config

def test_config_text_round_trip():
    cfg = ModelConfig(variant="gat-ratt", layers=3, weighted_factors=True, lr=0.002, mask_label="amod")
    assert ModelConfig.from_text(cfg.to_text()) == cfg


@pytest.mark.parametrize("text,msg", [
    ("layerz = 3", "unknown config keys"),
    ("layers = three", "cannot parse"),
    ("variant = gcn", "variant"),
    ("layers = 9", "layers"),
    ("layers 3", "line 1"),
    ("lr = 1\nlr = 2", "duplicate"),
    ("weighted_factors = maybe", "cannot parse"),
])
def test_config_errors(text, msg):
    with pytest.raises(ConfigError, match=msg):
        ModelConfig.from_text(text)


def test_config_comments_and_bools():
    cfg = ModelConfig.from_text("# note\nrandom_tree = yes  # perturb\nheads = 4\ngraph_dim = 8\n")
    assert cfg.random_tree is True and cfg.heads == 4
