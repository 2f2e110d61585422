"""Command-line entry point: ``wcl train | ccl-analyze | sweep-beta | probe``."""
from __future__ import annotations

import argparse
import json
import logging
import os
import sys
import time

import numpy as np

from . import encoder, trainer, weakgraph
from .config import RunConfig, load_config
from .errors import ConfigError, MalformedFile, WCLError, ZeroRowError
from .matkernel import l2_normalize_rows, read_wcle, write_wcle
from .synthdata import linear_probe, load_dataset, save_dataset

log = logging.getLogger("wcl")

EXIT_OK, EXIT_RUNTIME, EXIT_USAGE = 0, 1, 2


def _json_line(obj) -> str:
    return json.dumps(obj, sort_keys=True, separators=(",", ":"))


def run_training(rc: RunConfig, out_dir: str | None = None) -> dict:
    """Train, probe, and (when ``out_dir`` is set) write all run artifacts."""
    ds = rc.dataset()
    cfg = rc.train
    lines: list[str] = []
    started = time.perf_counter()
    result = trainer.train(cfg, ds, log=lambda em: lines.append(_json_line(em.record(cfg))))
    accuracy = trainer.evaluate(result.params, ds, rc.probe_fraction, rc.effective_probe_seed)
    trace = encoder.forward(result.params, ds.x)
    _, comp = weakgraph.weak_labels_from_embeddings(trace.v)
    summary = {
        "probe_accuracy": accuracy,
        "epochs": cfg.epochs,
        "beta": cfg.beta,
        "final_loss_overall": result.metrics[-1].loss_overall if result.metrics else None,
        "batch_component_count_last_epoch": result.metrics[-1].component_count if result.metrics else None,
        "dataset_components": weakgraph.component_stats(comp),
        "component_purity": weakgraph.component_purity(comp, ds.labels),
        "ccl_backend": trainer.weakgraph._kernels.BACKEND,
        "wall_time_s": round(time.perf_counter() - started, 3),
    }
    if out_dir is not None:
        os.makedirs(out_dir, exist_ok=True)
        with open(os.path.join(out_dir, "metrics.jsonl"), "w", encoding="utf-8") as fh:
            fh.writelines(line + "\n" for line in lines)
        encoder.save_checkpoint(os.path.join(out_dir, "model.wclm"), result.params)
        write_wcle(os.path.join(out_dir, "embeddings.wcle"), trace.v)
        if rc.data_path is None:
            save_dataset(os.path.join(out_dir, "dataset.wcle"), ds)
        with open(os.path.join(out_dir, "summary.json"), "w", encoding="utf-8") as fh:
            json.dump(summary, fh, indent=2, sort_keys=True)
            fh.write("\n")
    return summary


def cmd_train(args) -> int:
    rc = load_config(args.config)
    summary = run_training(rc, rc.output_dir)
    print(_json_line({"output_dir": rc.output_dir, "probe_accuracy": summary["probe_accuracy"]}))
    return EXIT_OK


def cmd_ccl_analyze(args) -> int:
    try:
        emb = l2_normalize_rows(read_wcle(args.embeddings))
    except (MalformedFile, ZeroRowError) as exc:
        raise ConfigError("embeddings", str(exc)) from None
    if emb.shape[0] < 2:
        raise ConfigError("embeddings", "need at least two embeddings")
    _, comp = weakgraph.weak_labels_from_embeddings(emb)
    print(json.dumps(weakgraph.component_stats(comp), sort_keys=True))
    return EXIT_OK


def parse_betas(text: str) -> list[float]:
    items = [t.strip() for t in text.split(",") if t.strip()]
    if not items:
        raise ConfigError("betas", "empty beta list")
    try:
        betas = [float(t) for t in items]
    except ValueError:
        raise ConfigError("betas", f"cannot parse {text!r}") from None
    if any(not np.isfinite(b) or b < 0 for b in betas):
        raise ConfigError("betas", "values must be finite and non-negative")
    return betas


def format_sweep(rows) -> str:
    return "beta,accuracy\n" + "".join(f"{b:g},{acc:.6f}\n" for b, acc in rows)


def cmd_sweep_beta(args) -> int:
    betas = parse_betas(args.betas)
    rc = load_config(args.config)
    rows = []
    for beta in betas:
        summary = run_training(rc.with_beta(beta))
        rows.append((beta, summary["probe_accuracy"]))
        log.info("beta=%g accuracy=%.4f", beta, summary["probe_accuracy"])
    text = format_sweep(rows)
    os.makedirs(rc.output_dir, exist_ok=True)
    with open(os.path.join(rc.output_dir, "sweep.csv"), "w", encoding="utf-8") as fh:
        fh.write(text)
    sys.stdout.write(text)
    return EXIT_OK


def cmd_probe(args) -> int:
    try:
        params = encoder.load_checkpoint(args.model)
        ds = load_dataset(args.dataset)
    except (MalformedFile, OSError) as exc:
        raise ConfigError("model/dataset", str(exc)) from None
    if not 0 < args.fraction < 1:
        raise ConfigError("fraction", "must lie strictly between 0 and 1")
    acc = linear_probe(trainer.embed(params, ds.x), ds.labels, args.fraction, args.seed)
    print(_json_line({"accuracy": acc}))
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="wcl", description=__doc__)
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("train", help="train a model from a config file")
    p.add_argument("--config", required=True)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("ccl-analyze", help="1-NN connected-component statistics of a WCLE embedding file")
    p.add_argument("--embeddings", required=True)
    p.set_defaults(func=cmd_ccl_analyze)

    p = sub.add_parser("sweep-beta", help="train and probe once per swap-loss weight")
    p.add_argument("--config", required=True)
    p.add_argument("--betas", required=True, help="comma-separated list, e.g. 0.125,0.25,0.5")
    p.set_defaults(func=cmd_sweep_beta)

    p = sub.add_parser("probe", help="linear-probe accuracy of a saved model on a saved dataset")
    p.add_argument("--model", required=True)
    p.add_argument("--dataset", required=True)
    p.add_argument("--fraction", type=float, default=0.5)
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=cmd_probe)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(message)s")
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (WCLError, OSError, ArithmeticError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
