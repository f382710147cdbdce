"""Command-line front end: gen-data, train, eval, ablate, project, report.

Configuration is a flat JSON object with dotted keys (``hp.alpha``,
``synthetic.rho``, ``variant.name`` ...). Values from ``--config`` are
overridden by ``--set key=value`` and by the dedicated flags. The whole
configuration is validated before any work starts; an unknown key or a bad
value exits with status 2 and writes nothing.

Exit codes: 0 success, 1 runtime or I/O failure, 2 configuration error.
"""

import argparse
import json
import logging
import os
import sys
from dataclasses import fields

import numpy as np

from .config import VARIANTS, HyperParams, variant
from .dataset import SyntheticSpec, atomic_write_text, dump_corpus, generate_synthetic, load_corpus
from .errors import ConfigError
from .evaluator import (
    EvalReport,
    compactness_metrics,
    eval_pair_matrix,
    project_2d,
    projection_tsv,
    render_table,
)
from .persist import dumps_model, load_model
from .trainer import train_run

log = logging.getLogger("semspec")

OUTPUT_ENV = "SEMSPEC_OUTPUT_DIR"
DEFAULT_OUTPUT = "semspec-out"
COMMANDS = ("gen-data", "train", "eval", "ablate", "project", "report")


def _defaults():
    d = {
        "seed": 0,
        "corpus.path": None,
        "corpus.format": None,
        "synthetic.seed": None,  # None: follow the run seed
        "variant.name": "emu",
        "variant.train_languages": ["en"],
        "variant.adversarial_languages": [],
        "model.path": None,  # None: evaluate the frozen input embeddings
        "eval.pivot": "en",
        "eval.z": 1.96,
        "eval.baseline": "frozen",  # "frozen", a report path, or None
        "eval.normalize_variance": True,
        "ablate.variants": list(VARIANTS),
        "ablate.seeds": [0, 1, 2, 3, 4],
        "project.split": "test",
        "project.languages": [],
        "report.inputs": [],
    }
    for f in fields(SyntheticSpec):
        if f.name != "seed":
            d[f"synthetic.{f.name}"] = f.default
    for f in fields(HyperParams):
        if f.name != "seed":
            d[f"hp.{f.name}"] = f.default
    return d


DEFAULTS = _defaults()


def _check_type(key, value):
    default = DEFAULTS[key]
    if value is None:
        if default is not None and key not in ("eval.baseline",):
            raise ConfigError(f"{key} may not be null", key=key)
        return value
    if default is None:
        if key in ("synthetic.seed",):
            if isinstance(value, bool) or not isinstance(value, int):
                raise ConfigError(f"{key} must be an integer", key=key)
        elif not isinstance(value, str):
            raise ConfigError(f"{key} must be a string", key=key)
        return value
    if isinstance(default, bool):
        if not isinstance(value, bool):
            raise ConfigError(f"{key} must be true or false", key=key)
    elif isinstance(default, int):
        if isinstance(value, float) and value.is_integer():
            value = int(value)
        if isinstance(value, bool) or not isinstance(value, int):
            raise ConfigError(f"{key} must be an integer", key=key)
    elif isinstance(default, float):
        if isinstance(value, bool) or not isinstance(value, (int, float)):
            raise ConfigError(f"{key} must be a number", key=key)
        value = float(value)
    elif isinstance(default, list):
        if not isinstance(value, list):
            raise ConfigError(f"{key} must be a list", key=key)
    elif isinstance(default, str) and not isinstance(value, str):
        raise ConfigError(f"{key} must be a string", key=key)
    return value


def _parse_value(text):
    try:
        return json.loads(text)
    except json.JSONDecodeError:
        return text


def resolve_config(args):
    """Merge defaults, the config file and command-line overrides, then validate."""
    values = dict(DEFAULTS)
    overrides = {}
    if args.config:
        try:
            with open(args.config, encoding="utf-8") as fh:
                loaded = json.load(fh)
        except (OSError, json.JSONDecodeError) as exc:
            raise ConfigError(f"cannot read config file {args.config}: {exc}", key="--config") from None
        if not isinstance(loaded, dict):
            raise ConfigError("config file must hold a JSON object", key="--config")
        overrides.update(loaded)
    for item in args.set or []:
        key, sep, text = item.partition("=")
        if not sep:
            raise ConfigError(f"--set expects key=value, got {item!r}", key=item)
        overrides[key.strip()] = _parse_value(text)
    for key, flag in (("seed", args.seed), ("corpus.path", args.corpus), ("model.path", args.model),
                      ("variant.name", args.variant)):
        if flag is not None:
            overrides[key] = flag
    if args.inputs:
        overrides["report.inputs"] = list(args.inputs)
    for key, value in overrides.items():
        if key not in DEFAULTS:
            raise ConfigError(f"unknown config key {key!r}", key=key)
        values[key] = _check_type(key, value)
    build_parts(values)  # validates every value before any work starts
    return values


def build_parts(cfg, seed=None):
    """Typed objects for a resolved config, optionally under another seed."""
    seed = cfg["seed"] if seed is None else seed
    syn = {k.split(".", 1)[1]: v for k, v in cfg.items() if k.startswith("synthetic.")}
    syn["seed"] = seed if syn["seed"] is None else syn["seed"]
    spec = SyntheticSpec(**syn)
    hp_values = {k.split(".", 1)[1]: v for k, v in cfg.items() if k.startswith("hp.")}
    try:
        hp = HyperParams(seed=seed, **hp_values)
    except ConfigError as exc:
        raise ConfigError(str(exc), key=f"hp.{exc.key}") from None
    var = variant(cfg["variant.name"], cfg["variant.train_languages"], cfg["variant.adversarial_languages"])
    for name in cfg["ablate.variants"]:
        if name not in VARIANTS:
            raise ConfigError(f"unknown variant {name!r}", key="ablate.variants")
    for s in cfg["ablate.seeds"]:
        if isinstance(s, bool) or not isinstance(s, int):
            raise ConfigError("seeds must be integers", key="ablate.seeds")
    if cfg["project.split"] not in ("train", "test"):
        raise ConfigError("split must be train or test", key="project.split")
    if cfg["eval.z"] <= 0:
        raise ConfigError("z must be positive", key="eval.z")
    if cfg["corpus.format"] not in (None, "jsonl", "tsv"):
        raise ConfigError(f"unknown corpus format {cfg['corpus.format']!r}", key="corpus.format")
    return spec, hp, var


def _load_or_generate(cfg, seed=None):
    spec, _, _ = build_parts(cfg, seed)
    if cfg["corpus.path"]:
        return load_corpus(cfg["corpus.path"], cfg["corpus.format"])
    return generate_synthetic(spec)


def _with_seed(cfg, seed):
    out = dict(cfg)
    out["seed"] = seed
    return out


# ---------------------------------------------------------------- commands

def cmd_gen_data(cfg):
    spec, _, _ = build_parts(cfg)
    corpus = generate_synthetic(spec)
    corpus.meta = {"config": cfg, "seed": cfg["seed"], "synthetic": spec.to_dict()}
    fmt = cfg["corpus.format"] or "jsonl"
    stats = corpus.statistics()
    log.info("generated %d examples in %d languages", len(corpus.examples), len(corpus.languages))
    return {f"corpus.{fmt}": dump_corpus(corpus, fmt),
            "corpus_stats.json": json.dumps({"config": cfg, "seed": cfg["seed"], "statistics": stats},
                                            indent=2, sort_keys=True) + "\n"}


def train_model(cfg, corpus, seed=None):
    """Train under ``cfg``; returns ``(model, log, model_config)``."""
    _, hp, var = build_parts(cfg, seed)
    model, _, train_log = train_run(corpus, var, hp)
    model_config = {
        "hp": hp.to_dict(), "variant": var.to_dict(), "dim": corpus.dim,
        "n_classes": corpus.n_classes, "intents": corpus.intents,
        "run": _with_seed(cfg, hp.seed), "seed": hp.seed,
    }
    train_log.config["run"] = model_config["run"]
    return model, train_log, model_config


def cmd_train(cfg):
    corpus = _load_or_generate(cfg)
    model, train_log, model_config = train_model(cfg, corpus)
    return {"model.txt": dumps_model(model, model_config), "trainlog.jsonl": train_log.to_jsonl()}


def evaluate_embeddings(cfg, corpus, embeddings, baseline_embeddings=None):
    pivot = cfg["eval.pivot"]
    baseline = None
    if baseline_embeddings is not None:
        base = eval_pair_matrix(baseline_embeddings, corpus, pivot=pivot, z=cfg["eval.z"])
        baseline = {(c["src"], c["tgt"]): c for c in base.cells}
    report = eval_pair_matrix(embeddings, corpus, pivot=pivot, z=cfg["eval.z"], baseline=baseline)
    test = corpus.select(split="test", labeled=True)
    report.compactness = compactness_metrics(
        embeddings[test], corpus.labels[test], corpus.langs[test], corpus.groups[test],
        normalize=cfg["eval.normalize_variance"],
    )
    return report


def _embed(cfg, corpus):
    if not cfg["model.path"]:
        return corpus.embeddings, {"model": None}
    model, model_config = load_model(cfg["model.path"])
    return model.embed(corpus.embeddings), {"model": model_config}


def cmd_eval(cfg):
    corpus = _load_or_generate(cfg)
    emb, info = _embed(cfg, corpus)
    baseline_emb = None
    baseline_report = None
    if cfg["eval.baseline"] == "frozen":
        baseline_emb = corpus.embeddings
    elif cfg["eval.baseline"]:
        with open(cfg["eval.baseline"], encoding="utf-8") as fh:
            baseline_report = EvalReport.from_dict(json.load(fh))
    report = evaluate_embeddings(cfg, corpus, emb, baseline_emb)
    if baseline_report is not None:
        from .evaluator import binomial_ci, intervals_disjoint
        for c in report.cells:
            try:
                b = baseline_report.cell(c["src"], c["tgt"])
            except KeyError:
                continue
            c["significant"] = intervals_disjoint(
                binomial_ci(c["correct"], c["n"], report.z), binomial_ci(b["correct"], b["n"], report.z))
    report.config = {"run": cfg, "seed": cfg["seed"], **info}
    name = info["model"]["variant"]["loss"] if info["model"] else "frozen"
    header = "# config " + json.dumps({"run": cfg, "seed": cfg["seed"]}, sort_keys=True) + "\n"
    return {"eval_report.json": report.to_json(), "eval_report.txt": header + report.to_table(name)}


def run_variant(cfg, corpus, name, seed):
    """One paired ablation cell: train ``name`` under ``seed`` and evaluate it."""
    run_cfg = _with_seed(cfg, seed)
    run_cfg["variant.name"] = name
    model, _, _ = train_model(run_cfg, corpus, seed)
    return evaluate_embeddings(run_cfg, corpus, model.embed(corpus.embeddings))


def _mean_cells(reports):
    cells = []
    for i, c in enumerate(reports[0].cells):
        accs = [r.cells[i]["accuracy"] for r in reports]
        cells.append({"src": c["src"], "tgt": c["tgt"], "accuracy": float(np.mean(accs)),
                      "correct": None, "n": c["n"], "significant": None})
    return cells


def cmd_ablate(cfg):
    seeds = cfg["ablate.seeds"]
    names = cfg["ablate.variants"]
    if not seeds or not names:
        raise ConfigError("ablation needs at least one seed and one variant", key="ablate.seeds")
    runs = {"frozen": []}
    runs.update({name: [] for name in names})
    for seed in seeds:
        corpus = _load_or_generate(cfg, seed)
        runs["frozen"].append(evaluate_embeddings(_with_seed(cfg, seed), corpus, corpus.embeddings))
        for name in names:
            log.info("ablate: seed %d variant %s", seed, name)
            runs[name].append(run_variant(cfg, corpus, name, seed))
    summary = {}
    for name, reports in runs.items():
        cells = _mean_cells(reports)
        summary[name] = {
            "per_seed": [{"seed": s, "cells": r.cells, "compactness": r.compactness} for s, r in zip(seeds, reports)],
            "mean_cells": cells,
            "mean_accuracy": float(np.mean([c["accuracy"] for c in cells])),
        }
    ref = summary["emu"]["mean_accuracy"] if "emu" in summary else None
    for entry in summary.values():
        entry["drop_pp"] = None if ref is None else 100.0 * (ref - entry["mean_accuracy"])
    doc = {"config": cfg, "seeds": seeds, "z": cfg["eval.z"], "variants": summary}
    return {"ablation.json": json.dumps(doc, indent=2, sort_keys=True) + "\n",
            "ablation.txt": "# config " + json.dumps({"run": cfg}, sort_keys=True) + "\n" + render_ablation(doc)}


def render_ablation(doc):
    named = [(name, EvalReport(entry["mean_cells"], doc["z"])) for name, entry in doc["variants"].items()]
    table = render_table(named).splitlines()
    out = [table[0] + "  drop(pp)"]
    for line, entry in zip(table[1:], doc["variants"].values()):
        drop = entry["drop_pp"]
        out.append(line + ("" if drop is None else f"{drop:10.2f}"))
    return "\n".join(out) + "\n"


def cmd_project(cfg):
    corpus = _load_or_generate(cfg)
    emb, info = _embed(cfg, corpus)
    rows = corpus.select(split=cfg["project.split"])
    if cfg["project.languages"]:
        rows = rows[np.isin(corpus.langs[rows], cfg["project.languages"])]
    coords, frac, degenerate = project_2d(emb[rows])
    if degenerate:
        log.warning("projection input has zero variance; coordinates are all zero")
    header = "# config " + json.dumps({"run": cfg, "seed": cfg["seed"]}, sort_keys=True) + "\n"
    raw = [header + "id\tembedding"]
    raw += [f"{corpus.ids[i]}\t" + " ".join(repr(float(v)) for v in emb[i]) for i in rows]
    meta = {"run": cfg, "seed": cfg["seed"], "explained_variance": [float(f) for f in frac],
            "degenerate": bool(degenerate), "n_points": int(rows.size), **info}
    return {"projection.tsv": header + projection_tsv(corpus, coords, rows),
            "projection.json": json.dumps(meta, indent=2, sort_keys=True) + "\n",
            "embeddings.tsv": "\n".join(raw) + "\n"}


def cmd_report(cfg):
    inputs = cfg["report.inputs"]
    if not inputs:
        raise ConfigError("report needs at least one input file", key="report.inputs")
    parts = []
    named = []
    for path in inputs:
        with open(path, encoding="utf-8") as fh:
            doc = json.load(fh)
        if "variants" in doc:
            parts.append(f"## {path}\n" + render_ablation(doc))
        else:
            report = EvalReport.from_dict(doc)
            model = report.config.get("model")
            named.append((model["variant"]["loss"] if model else "frozen", report))
    if named:
        parts.insert(0, render_table(named))
    text = "\n".join(parts)
    sys.stdout.write(text)
    return {"report.txt": text}


HANDLERS = {
    "gen-data": cmd_gen_data,
    "train": cmd_train,
    "eval": cmd_eval,
    "ablate": cmd_ablate,
    "project": cmd_project,
    "report": cmd_report,
}


def build_parser():
    parser = argparse.ArgumentParser(prog="semspec", description=__doc__.split("\n\n")[0])
    sub = parser.add_subparsers(dest="command", required=True)
    for name in COMMANDS:
        p = sub.add_parser(name)
        p.add_argument("--config", help="JSON file of dotted keys")
        p.add_argument("--set", action="append", metavar="KEY=VALUE", help="override one key (value parsed as JSON)")
        p.add_argument("--out", help=f"output directory (default ${OUTPUT_ENV} or ./{DEFAULT_OUTPUT})")
        p.add_argument("--seed", type=int)
        p.add_argument("--corpus", help="corpus file (JSONL/TSV, optionally .gz); default: synthetic")
        p.add_argument("--model", help="model dump; default: frozen input embeddings")
        p.add_argument("--variant", help="training variant name")
        p.add_argument("-v", "--verbose", action="store_true")
        if name == "report":
            p.add_argument("inputs", nargs="*", help="eval_report.json or ablation.json files")
        else:
            p.set_defaults(inputs=None)
    return parser


def main(argv=None):
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    out_dir = args.out or os.environ.get(OUTPUT_ENV) or DEFAULT_OUTPUT
    try:
        cfg = resolve_config(args)
        outputs = HANDLERS[args.command](cfg)
        for fname, text in outputs.items():
            atomic_write_text(os.path.join(out_dir, fname), text)
    except ConfigError as exc:
        where = f" [{exc.key}]" if exc.key else ""
        print(f"semspec: config error{where}: {exc}", file=sys.stderr)
        return 2
    except (OSError, ValueError, RuntimeError, ArithmeticError, KeyError) as exc:
        print(f"semspec: error: {exc}", file=sys.stderr)
        return 1
    for fname in outputs:
        log.info("wrote %s", os.path.join(out_dir, fname))
    return 0


if __name__ == "__main__":
    sys.exit(main())
