from collections import Counter

import numpy as np
import pytest

from rgat.depgraph import RelationVocab, read_records, records_to_instances, write_records
from rgat.synthetic import NEG_CUE, POS_CUE, cue_label, gen_synthetic, orient


def test_class_balance_1000():
    counts = Counter(r["polarity"] for r in gen_synthetic(1000, seed=7))
    assert set(counts) == {"positive", "negative", "neutral"}
    for c in counts.values():
        assert abs(c / 1000 - 1 / 3) <= 0.05


def test_polarity_is_a_function_of_the_cue_label():
    want = {POS_CUE: "positive", NEG_CUE: "negative", None: "neutral"}
    for rec in gen_synthetic(500, seed=1):
        assert rec["polarity"] == want[cue_label(rec)]


def test_swapping_cue_labels_flips_polarity():
    swap = {POS_CUE: NEG_CUE, NEG_CUE: POS_CUE}
    flip = {"positive": "negative", "negative": "positive", "neutral": "neutral"}
    for rec in gen_synthetic(100, seed=2):
        t = rec["target"][0]
        rels = [swap.get(r, r) if h and t in (h - 1, c) else r
                for c, (h, r) in enumerate(zip(rec["head"], rec["deprel"]))]
        swapped = {**rec, "deprel": rels}
        label = cue_label(swapped)
        expected = {POS_CUE: "positive", NEG_CUE: "negative", None: "neutral"}[label]
        assert expected == flip[rec["polarity"]]


def test_cue_labels_also_appear_away_from_target():
    far = 0
    for rec in gen_synthetic(300, seed=3):
        t = rec["target"][0]
        far += sum(1 for c, (h, r) in enumerate(zip(rec["head"], rec["deprel"]))
                   if h and t not in (h - 1, c) and r in (POS_CUE, NEG_CUE))
    assert far > 100


def test_unlabelled_view_is_class_independent():
    # sentence length, target position and target degree should not predict the class
    recs = gen_synthetic(3000, seed=4)
    by_class = {}
    for r in recs:
        t = r["target"][0]
        deg = sum(1 for c, h in enumerate(r["head"]) if h and t in (h - 1, c))
        by_class.setdefault(r["polarity"], []).append((len(r["tokens"]), deg))
    means = {k: np.mean(v, axis=0) for k, v in by_class.items()}
    ref = means["neutral"]
    for m in means.values():
        assert np.all(np.abs(m - ref) < 0.2)


def test_records_build_valid_trees(tmp_path):
    recs = gen_synthetic(50, seed=5)
    path = tmp_path / "s.jsonl"
    write_records(recs, path)
    back = read_records(path)
    insts = records_to_instances(back, RelationVocab.from_records(back))
    assert all(x.graph.is_tree() for x in insts)
    assert {x.target_span[1] - x.target_span[0] for x in insts} == {1}


def test_generator_is_deterministic():
    assert gen_synthetic(30, seed=9) == gen_synthetic(30, seed=9)
    assert gen_synthetic(30, seed=9) != gen_synthetic(30, seed=10)


def test_needs_a_filler_label():
    with pytest.raises(ValueError, match="at least 3"):
        gen_synthetic(5, vocab_sizes=(10, 2, 3))


def test_orient():
    assert orient([(0, 1), (1, 2)], 3, 1) == [2, 0, 2]
