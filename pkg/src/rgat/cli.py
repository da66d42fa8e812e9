"""Command line entry point: ``rgat <command> ...``.

Every command that writes files puts them in ``<out>/<command>-<digest>/``
next to a ``manifest.json``; the digest is taken over the manifest itself
(config, input digests, seed, code version), so identical inputs land in the
same directory with byte-identical contents.
"""
from __future__ import annotations

import argparse
import csv
import hashlib
import io
import json
import logging
import os
import sys

from . import __version__
from .checks import default_gradcheck
from .config import ConfigError, ModelConfig
from .depgraph import (
    POLARITY_NAME, RelationVocab, conllu_to_records, read_records, read_targets, records_to_instances,
    write_records,
)
from .experiments import SUITES, run_suite, write_result
from .model import RGATModel
from .synthetic import gen_synthetic
from .training import TrainingError, evaluate, perturb, predictions, train

log = logging.getLogger("rgat")

GRADCHECK_TOL = 1e-4


class CLIError(Exception):
    pass


def sha256(path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 20), b""):
            h.update(chunk)
    return h.hexdigest()


def _require(path):
    if not os.path.isfile(path):
        raise CLIError(f"no such file: {path}")
    return path


def load_config(args) -> ModelConfig:
    cfg = ModelConfig.from_file(_require(args.config)) if getattr(args, "config", None) else ModelConfig()
    over = {}
    if getattr(args, "seed", None) is not None:
        over["seed"] = args.seed
    if getattr(args, "variant", None):
        over["variant"] = args.variant
    if getattr(args, "layers", None) is not None:
        over["layers"] = args.layers
    if getattr(args, "weighted_factors", False):
        over["weighted_factors"] = True
    if getattr(args, "mask_label", None):
        over["mask_label"] = args.mask_label
    if getattr(args, "random_tree", False):
        over["random_tree"] = True
    if getattr(args, "permute_labels", False):
        over["permute_labels"] = True
    return ModelConfig.from_dict({**cfg.to_dict(), **over})


class RunDir:
    """Collects outputs in memory, then writes them with their manifest."""

    def __init__(self, out, command, config=None, inputs=(), extra=None):
        self.out, self.command = out, command
        self.manifest = {
            "command": command,
            "code_version": __version__,
            "config": config.to_dict() if config is not None else None,
            "seed": config.seed if config is not None else None,
            "inputs": {p: sha256(p) for p in inputs},
            **(extra or {}),
        }
        digest = hashlib.sha256(json.dumps(self.manifest, sort_keys=True).encode()).hexdigest()[:12]
        self.path = os.path.join(out, f"{command}-{digest}")
        os.makedirs(self.path, exist_ok=True)
        self.outputs = []

    def file(self, name):
        self.outputs.append(name)
        return os.path.join(self.path, name)

    def write(self, name, text):
        with open(self.file(name), "w", encoding="utf-8") as fh:
            fh.write(text)

    def close(self):
        self.manifest["outputs"] = sorted(self.outputs)
        with open(os.path.join(self.path, "manifest.json"), "w", encoding="utf-8") as fh:
            json.dump(self.manifest, fh, indent=2, sort_keys=True)
            fh.write("\n")
        return self.path


def _instances(paths, vocab=None):
    recs = [read_records(_require(p)) for p in paths]
    if vocab is None:
        vocab = RelationVocab.from_records(recs[0])
    return [records_to_instances(r, vocab) for r in recs], vocab


def history_csv(history) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["epoch", "train_loss", "dev_accuracy", "dev_macro_F1"])
    for h in history:
        w.writerow([h.extra["epoch"], repr(h.loss), repr(h.accuracy), repr(h.macro_f1)])
    return buf.getvalue()


# commands

def cmd_ingest(args):
    with open(_require(args.targets), encoding="utf-8") as fh:
        targets = read_targets(fh)
    records = conllu_to_records(_require(args.conllu), targets)
    write_records(records, args.out)
    print(f"wrote {len(records)} instances to {args.out}")


def cmd_synth(args):
    records = gen_synthetic(args.n, (args.words, args.labels, args.tags), args.seed,
                            (args.min_len, args.max_len))
    write_records(records, args.out)
    print(f"wrote {len(records)} instances to {args.out}")


def cmd_train(args):
    cfg = load_config(args)
    (train_set, dev_set), _ = _instances([args.train, args.dev])
    run = RunDir(args.out, "train", cfg, [args.train, args.dev])
    model, history = train(cfg, train_set, dev_set)
    model.save(run.file("model.ckpt"))
    run.write("config.txt", cfg.to_text())
    run.write("history.csv", history_csv(history))
    best = max(history, key=lambda h: h.accuracy)
    run.write("metrics.json", json.dumps({"best_dev": best.to_dict(), "epochs": len(history)},
                                         indent=2, sort_keys=True) + "\n")
    print(f"best dev accuracy {best.accuracy:.4f} macro-F1 {best.macro_f1:.4f}")
    print(run.close())


def cmd_eval(args):
    model = RGATModel.load(_require(args.checkpoint))
    (test_set,), _ = _instances([args.test], model.rel_vocab)
    test_set = perturb(test_set, model.config, "test")
    run = RunDir(args.out, "eval", model.config, [args.checkpoint, args.test])
    rep = evaluate(model, test_set)
    run.write("metrics.json", json.dumps(rep.to_dict(), indent=2, sort_keys=True) + "\n")
    run.write("predictions.jsonl", "".join(json.dumps(p, sort_keys=True) + "\n"
                                           for p in predictions(model, test_set)))
    print(f"accuracy {rep.accuracy:.4f} macro-F1 {rep.macro_f1:.4f}")
    print(run.close())


def cmd_suite(args):
    if args.name not in SUITES:
        raise CLIError(f"unknown suite {args.name!r}; expected one of {', '.join(SUITES)}")
    cfg = load_config(args)
    data, _ = _instances([args.train, args.dev, args.test])
    seeds = [int(s) for s in args.seeds.split(",")] if args.seeds else None
    labels = args.labels.split(",") if args.labels else None
    run = RunDir(args.out, f"suite-{args.name}", cfg, [args.train, args.dev, args.test],
                 {"seeds": seeds, "labels": labels})
    result = run_suite(args.name, cfg, data, seeds, labels, args.jobs)
    for name in write_result(result, run.path):
        run.outputs.append(name)
    for s in result["summary"]:
        print(f"{s['variant']:>16s}  n={s['n_seeds']:2d}  acc {s['accuracy_mean']:.4f}  "
              f"F1 {s['macro_F1_mean']:.4f}")
    print(run.close())


def cmd_gradcheck(args):
    err = default_gradcheck(seed=args.seed or 0, eps=args.eps)
    ok = err < GRADCHECK_TOL
    print(f"max relative error {err:.3e} ({'ok' if ok else 'FAIL'}, tolerance {GRADCHECK_TOL:g})")
    return 0 if ok else 1


def attention_trace(model: RGATModel, inst) -> dict:
    layers = model.attention(inst)
    g = inst.graph.with_vocab(model.rel_vocab)
    probs = model.predict_proba([inst])[0]
    edges = []
    for i in range(inst.n):
        for j in range(inst.n):
            if g.adj[i, j]:
                edges.append({"i": i, "j": j, "label": model.rel_vocab.label(int(g.labels[i, j])),
                              "weights": [[float(a[z, i, j]) for z in range(a.shape[0])] for a in layers]})
    return {"id": inst.id, "tokens": list(inst.tokens), "target": list(inst.target_span),
            "variant": model.config.variant, "gold": POLARITY_NAME[inst.polarity],
            "prediction": POLARITY_NAME[int(probs.argmax()) - 1], "probs": probs.tolist(), "edges": edges}


def cmd_trace(args):
    model = RGATModel.load(_require(args.checkpoint))
    (data,), _ = _instances([args.data], model.rel_vocab)
    data = perturb(data, model.config, "test")
    if args.ids:
        wanted = args.ids.split(",")
        by_id = {str(x.id): x for x in data}
        missing = [i for i in wanted if i not in by_id]
        if missing:
            raise CLIError(f"instance ids not found: {missing}")
        data = [by_id[i] for i in wanted]
    run = RunDir(args.out, "trace", model.config, [args.checkpoint, args.data], {"ids": args.ids})
    traces = [attention_trace(model, x) for x in data]
    run.write("trace.json", json.dumps(traces, indent=2, sort_keys=True) + "\n")
    print(run.close())


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="rgat", description=__doc__.splitlines()[0])
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    def model_flags(sp):
        sp.add_argument("--config", help="flat 'key = value' config file")
        sp.add_argument("--seed", type=int)
        sp.add_argument("--out", default="runs")
        sp.add_argument("--variant", choices=["transformer", "gat", "gat-ratt", "rgat"])
        sp.add_argument("--layers", type=int)
        sp.add_argument("--weighted-factors", action="store_true")
        sp.add_argument("--mask-label")
        sp.add_argument("--random-tree", action="store_true")
        sp.add_argument("--permute-labels", action="store_true")

    sp = sub.add_parser("ingest", help="CoNLL-U + target rows -> instance JSONL")
    sp.add_argument("conllu")
    sp.add_argument("targets", help="rows: sentence_index start end polarity")
    sp.add_argument("--out", required=True)
    sp.set_defaults(func=cmd_ingest)

    sp = sub.add_parser("synth", help="generate the label-determined synthetic dataset")
    sp.add_argument("--n", type=int, required=True)
    sp.add_argument("--seed", type=int, default=0)
    sp.add_argument("--out", required=True)
    sp.add_argument("--words", type=int, default=50)
    sp.add_argument("--labels", type=int, default=8)
    sp.add_argument("--tags", type=int, default=5)
    sp.add_argument("--min-len", type=int, default=5)
    sp.add_argument("--max-len", type=int, default=10)
    sp.set_defaults(func=cmd_synth)

    sp = sub.add_parser("train", help="train a model")
    sp.add_argument("train")
    sp.add_argument("dev")
    model_flags(sp)
    sp.set_defaults(func=cmd_train)

    sp = sub.add_parser("eval", help="evaluate a checkpoint")
    sp.add_argument("checkpoint")
    sp.add_argument("test")
    sp.add_argument("--out", default="runs")
    sp.set_defaults(func=cmd_eval)

    sp = sub.add_parser("suite", help="run an experiment suite")
    sp.add_argument("name", help=", ".join(SUITES))
    sp.add_argument("train")
    sp.add_argument("dev")
    sp.add_argument("test")
    sp.add_argument("--seeds", help="comma-separated seeds")
    sp.add_argument("--labels", help="comma-separated labels for label_ablation")
    sp.add_argument("--jobs", type=int, default=1)
    model_flags(sp)
    sp.set_defaults(func=cmd_suite)

    sp = sub.add_parser("gradcheck", help="finite-difference check of the default tiny model")
    sp.add_argument("--seed", type=int, default=0)
    sp.add_argument("--eps", type=float, default=1e-5)
    sp.set_defaults(func=cmd_gradcheck)

    sp = sub.add_parser("trace", help="export attention weights for instances")
    sp.add_argument("checkpoint")
    sp.add_argument("data")
    sp.add_argument("--ids", help="comma-separated instance ids (default: all)")
    sp.add_argument("--out", default="runs")
    sp.set_defaults(func=cmd_trace)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args) or 0
    except (CLIError, ConfigError, TrainingError, ValueError, KeyError, OSError) as exc:
        print(f"rgat {args.command}: error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
