"""Experiment suites: variant ablation, parse perturbation, label removal,
weighted attention factors and depth sweep."""
from __future__ import annotations

import csv
import io
import json
import logging
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass

import numpy as np

from .config import ModelConfig
from .training import evaluate, perturb, train

log = logging.getLogger(__name__)

SUITES = ("ablation", "parse_perturb", "label_ablation", "weighted_factors", "depth_sweep")
ABLATION_ROWS = ("transformer", "gat", "gat-ratt", "rgat")
# frequent labels grouped as clausal arguments, nominal modifiers and others
DEFAULT_ABLATION_LABELS = ("nsubj", "dobj", "ccomp", "xcomp", "nmod", "amod", "advmod", "det", "case",
                           "conj", "cc", "punct")
RANDOM_TREE_SEEDS = 10
CSV_FIELDS = ("suite", "variant", "seed", "accuracy", "macro_F1")


@dataclass
class Job:
    suite: str
    row: str
    config: ModelConfig


def plan(suite: str, config: ModelConfig, seeds=None, labels=None) -> list[Job]:
    """Training runs making up ``suite``; each run is fully described by its config."""
    if suite not in SUITES:
        raise ValueError(f"unknown suite {suite!r}; expected one of {SUITES}")
    seeds = list(seeds) if seeds else [config.seed]
    base = config.replace(random_tree=False, permute_labels=False, mask_label="")
    jobs = []
    if suite == "ablation":
        for row in ABLATION_ROWS:
            jobs += [Job(suite, row, base.replace(variant=row, seed=s)) for s in seeds]
    elif suite == "parse_perturb":
        rgat = base.replace(variant="rgat")
        jobs += [Job(suite, "gold", rgat.replace(seed=s)) for s in seeds]
        jobs += [Job(suite, "random_tree", rgat.replace(seed=seeds[0] + k, random_tree=True))
                 for k in range(RANDOM_TREE_SEEDS)]
        jobs += [Job(suite, "permuted_labels", rgat.replace(seed=s, permute_labels=True)) for s in seeds]
    elif suite == "label_ablation":
        rgat = base.replace(variant="rgat")
        jobs += [Job(suite, "baseline", rgat.replace(seed=s)) for s in seeds]
        for lab in labels or DEFAULT_ABLATION_LABELS:
            jobs += [Job(suite, f"-{lab}", rgat.replace(seed=s, mask_label=lab,
                                                       drop_masked_edges=config.drop_masked_edges))
                     for s in seeds]
    elif suite == "weighted_factors":
        rgat = base.replace(variant="rgat")
        jobs += [Job(suite, "rgat", rgat.replace(seed=s, weighted_factors=False)) for s in seeds]
        jobs += [Job(suite, "rgat-weighted", rgat.replace(seed=s, weighted_factors=True)) for s in seeds]
    elif suite == "depth_sweep":
        for depth in range(1, 9):
            jobs += [Job(suite, f"L={depth}", base.replace(layers=depth, seed=s)) for s in seeds]
    return jobs


def run_job(job: Job, data) -> dict:
    train_set, dev_set, test_set = data
    model, history = train(job.config, train_set, dev_set)
    rep = evaluate(model, perturb(test_set, job.config, "test"))
    row = {"suite": job.suite, "variant": job.row, "seed": job.config.seed,
           "accuracy": rep.accuracy, "macro_F1": rep.macro_f1, "epochs": len(history)}
    if job.config.weighted_factors:
        row["beta1"] = [float(l.beta1.data[0]) for l in model.graph.layers]
        row["beta2"] = [float(l.beta2.data[0]) for l in model.graph.layers]
    log.info("%s %s seed=%d acc=%.4f f1=%.4f", job.suite, job.row, job.config.seed, rep.accuracy, rep.macro_f1)
    return row


def _run_packed(args):
    return run_job(*args)


def run_suite(suite: str, config: ModelConfig, data, seeds=None, labels=None, jobs: int = 1) -> dict:
    """Train every run of ``suite`` and return per-run rows plus a per-row summary.

    ``data`` is (train, dev, test) instance lists.  Perturbations configured
    on a run apply to all three splits.
    """
    todo = plan(suite, config, seeds, labels)
    if jobs > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            rows = list(pool.map(_run_packed, [(j, data) for j in todo]))
    else:
        rows = [run_job(j, data) for j in todo]
    return {"suite": suite, "runs": rows, "summary": summarize(suite, rows)}


def summarize(suite: str, rows: list[dict]) -> list[dict]:
    order = list(dict.fromkeys(r["variant"] for r in rows))
    out = []
    base_acc = None
    for name in order:
        sel = [r for r in rows if r["variant"] == name]
        acc = np.array([r["accuracy"] for r in sel])
        f1 = np.array([r["macro_F1"] for r in sel])
        s = {"suite": suite, "variant": name, "n_seeds": len(sel),
             "accuracy_mean": float(acc.mean()), "accuracy_std": float(acc.std()),
             "macro_F1_mean": float(f1.mean()), "macro_F1_std": float(f1.std()),
             "seeds": [r["seed"] for r in sel]}
        if suite == "label_ablation":
            if name == "baseline":
                base_acc = s["accuracy_mean"]
            elif base_acc is not None:
                s["accuracy_decrement"] = base_acc - s["accuracy_mean"]
        if suite == "depth_sweep":
            s["layers"] = int(name.split("=")[1])
        if "beta1" in sel[0]:
            b1 = np.concatenate([r["beta1"] for r in sel])
            b2 = np.concatenate([r["beta2"] for r in sel])
            s.update(beta1_mean=float(b1.mean()), beta1_std=float(b1.std()),
                     beta2_mean=float(b2.mean()), beta2_std=float(b2.std()))
        out.append(s)
    return out


def runs_csv(result: dict) -> str:
    buf = io.StringIO()
    w = csv.DictWriter(buf, fieldnames=CSV_FIELDS, extrasaction="ignore", lineterminator="\n")
    w.writeheader()
    for r in result["runs"]:
        w.writerow({**r, "accuracy": repr(r["accuracy"]), "macro_F1": repr(r["macro_F1"])})
    return buf.getvalue()


def summary_csv(result: dict) -> str:
    keys = []
    for s in result["summary"]:
        keys += [k for k in s if k not in keys and k != "seeds"]
    buf = io.StringIO()
    w = csv.DictWriter(buf, fieldnames=keys, extrasaction="ignore", lineterminator="\n")
    w.writeheader()
    for s in result["summary"]:
        w.writerow(s)
    return buf.getvalue()


def write_result(result: dict, out_dir):
    """``runs.csv``, ``summary.csv`` (plot-ready) and ``result.json`` under ``out_dir``."""
    os.makedirs(out_dir, exist_ok=True)
    paths = {}
    for name, text in (("runs.csv", runs_csv(result)), ("summary.csv", summary_csv(result)),
                       ("result.json", json.dumps(result, indent=2, sort_keys=True) + "\n")):
        p = os.path.join(out_dir, name)
        with open(p, "w", encoding="utf-8") as fh:
            fh.write(text)
        paths[name] = p
    return paths
