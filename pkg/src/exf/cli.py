"""Command-line entry point.

Exit codes: 0 success, 1 usage/config/load error, 2 runtime error,
3 verification failure.
"""
from __future__ import annotations

import argparse
import contextlib
import json
import os
import sys
from dataclasses import replace
from pathlib import Path

import numpy as np
from threadpoolctl import threadpool_limits

from . import checkpoint, config, gradcheck
from .data import load_dataset
from .errors import ConfigError, ExfError, InvalidParameterError, ParseError
from .evaluation import rank_pairs_by_weight, recall_at_k, spectral_decay
from .transfer import (
    accuracy,
    distill_classifier,
    extract_knowledge,
    train_classifier,
    train_source,
    train_target,
)

EXIT_OK, EXIT_CONFIG, EXIT_RUNTIME, EXIT_VERIFY = 0, 1, 2, 3


class UsageError(ExfError):
    pass


def _dump(obj) -> str:
    return json.dumps(obj, sort_keys=True, indent=2)


def _thread_limit(deterministic: bool):
    cap = os.environ.get("EXF_THREADS")
    limit = None
    if cap:
        try:
            limit = max(1, int(cap))
        except ValueError:
            raise UsageError(f"EXF_THREADS must be an integer, got {cap!r}") from None
    if deterministic:
        limit = 1
    return threadpool_limits(limits=limit) if limit else contextlib.nullcontext()


def _load_config(args):
    cfg = config.load(args.config)
    if args.seed is not None:
        cfg["seed"] = args.seed
    if args.deterministic is not None:
        cfg["deterministic"] = args.deterministic
    out = Path(args.out) if args.out else config.resolve(cfg, cfg["output"]["dir"])
    return cfg, out


def _retrieval(model, ds, k_values, normalize):
    ks = [k for k in k_values if k < len(ds)]
    return recall_at_k(model.embed(ds.features), ds.labels, ks, normalize=normalize).to_dict()


def cmd_train_source(cfg, out: Path) -> dict:
    train, test = config.build_dataset(cfg)
    src = cfg["source"]
    optim = config.optim_config(src)
    if src["kind"] == "classifier":
        if cfg["dataset"]["split"] != "sample":
            raise ConfigError("a classifier source needs dataset.split = 'sample'")
        model, tlog = train_classifier(
            train, src["dims"], src["epochs"], cfg["seed"], src["batch_size"], optim,
            config.source_augment(cfg),
        )
        summary = {"train_accuracy": accuracy(model, train), "test_accuracy": accuracy(model, test)}
    else:
        model, tlog = train_source(
            train, src["dims"], src["epochs"], cfg["seed"], src["batch_size"], src["delta"], optim,
            config.source_augment(cfg),
        )
        k_values = cfg["eval"]["k_values"]
        summary = {
            "recall_train": _retrieval(model, train, k_values, True),
            "recall_test": _retrieval(model, test, k_values, True),
        }
    out.mkdir(parents=True, exist_ok=True)
    meta = {"role": "source", "kind": src["kind"], "seed": cfg["seed"], "epochs": src["epochs"]}
    checkpoint.save(model, out / "source.ckpt", meta)
    tlog.write(out / "source_log.jsonl", include_wall_time=not cfg["deterministic"])
    return summary


def _source_path(cfg, out):
    given = cfg["source"].get("checkpoint")
    return config.resolve(cfg, given) if given else out / "source.ckpt"


def _embedding_summary(model, train, test, k_values, normalize):
    return {
        "recall_train": _retrieval(model, train, k_values, normalize),
        "recall_test": _retrieval(model, test, k_values, normalize),
        "rho": spectral_decay(model.embed(train.features)).rho,
    }


def _fmt(v):
    return format(v, "g")


def cmd_transfer(cfg, out: Path) -> dict:
    train, test = config.build_dataset(cfg)
    path = _source_path(cfg, out)
    if not path.exists():
        raise ConfigError(f"source checkpoint not found: {path}")
    try:
        source, _ = checkpoint.load(path)
    except ParseError as exc:
        raise ConfigError(str(exc)) from None
    if list(source.layer_dims) != list(cfg["source"]["dims"]):
        raise ConfigError(
            f"source checkpoint dims {list(source.layer_dims)} differ from config {cfg['source']['dims']}"
        )
    base = config.transfer_config(cfg)
    base.validate()
    out.mkdir(parents=True, exist_ok=True)
    include_wall = not cfg["deterministic"]
    k_values = cfg["eval"]["k_values"]

    if base.mode == "classifier_distill":
        student, slog = distill_classifier(source, train, base)
        plain, _ = distill_classifier(source, train, replace(base, lambda_hkd=0.0, lambda_rc=0.0))
        checkpoint.save(student, out / "target.ckpt", {"role": "target", "mode": base.mode, "seed": cfg["seed"]})
        slog.write(out / "target_log.jsonl", include_wall)
        report = {
            "mode": base.mode,
            "teacher_test_accuracy": accuracy(source, test),
            "student_test_accuracy": accuracy(student, test),
            "plain_ce_test_accuracy": accuracy(plain, test),
            "lambda_hkd": base.lambda_hkd,
            "lambda_rc": base.lambda_rc,
        }
        (out / "report.json").write_text(_dump(report) + "\n", encoding="utf-8")
        return report

    sweep = cfg.get("sweep", {})
    sigmas = sweep.get("sigma", [base.loss_cfg.sigma])
    deltas = sweep.get("delta", [base.loss_cfg.delta])
    multi = len(sigmas) * len(deltas) > 1
    rows = []
    for sigma in sigmas:
        for delta in deltas:
            tc = config.transfer_config(cfg, sigma=sigma, delta=delta)
            target, tlog = train_target(source, train, tc)
            stem = f"target_sigma{_fmt(sigma)}_delta{_fmt(delta)}" if multi else "target"
            meta = {"role": "target", "mode": tc.mode, "loss": tc.loss, "sigma": sigma,
                    "delta": delta, "seed": cfg["seed"], "epochs": tc.epochs}
            checkpoint.save(target, out / f"{stem}.ckpt", meta)
            tlog.write(out / f"{stem}_log.jsonl", include_wall)
            row = {"sigma": sigma, "delta": delta, "checkpoint": f"{stem}.ckpt"}
            row.update(_embedding_summary(target, train, test, k_values, False))
            rows.append(row)

    # evenly spaced subset so every training class is represented
    pick = np.unique(np.linspace(0, len(train) - 1, min(len(train), 64)).astype(int))
    W = extract_knowledge(source, train.features[pick], base.loss_cfg.sigma).W
    top = min(cfg["eval"]["pair_top"], pick.size * (pick.size - 1) // 2)
    ranking = rank_pairs_by_weight(W, train.labels[pick], top)
    report = {
        "mode": base.mode,
        "loss": base.loss,
        "ablation": base.loss == "unrelaxed_relative",
        "source": _embedding_summary(source, train, test, k_values, True),
        "targets": rows,
        "pair_ranking": ranking.to_dict(),
    }
    (out / "report.json").write_text(_dump(report) + "\n", encoding="utf-8")
    (out / "pair_ranking.txt").write_text(ranking.to_text() + "\n", encoding="utf-8")
    return report


def cmd_eval(checkpoint_path, dataset_path, k_values, fmt=None, normalize=False) -> dict:
    try:
        model, _ = checkpoint.load(checkpoint_path)
        ds = load_dataset(dataset_path, fmt)
    except FileNotFoundError as exc:
        raise ConfigError(f"file not found: {exc.filename}") from None
    except ParseError as exc:
        raise ConfigError(str(exc)) from None
    if model.in_dim != ds.dim:
        raise ConfigError(f"checkpoint expects width {model.in_dim}, dataset has {ds.dim}")
    E = model.embed(ds.features)
    try:
        retrieval = recall_at_k(E, ds.labels, k_values, normalize=normalize)
    except InvalidParameterError as exc:
        raise ConfigError(str(exc)) from None
    return {"retrieval": retrieval.to_dict(), "spectral": spectral_decay(E).to_dict()}


def cmd_gradcheck(seed=0, trials=100, corrupt=None):
    if trials < 1:
        raise UsageError("trials must be >= 1")
    results = gradcheck.run(seed, trials, corrupt)
    lines = [f"{'op':<26}{'max_rel_err':>14}  status"]
    for r in results:
        lines.append(f"{r.op:<26}{r.max_error:>14.3e}  {'ok' if r.passed else 'FAIL'}")
    failed = [r for r in results if not r.passed]
    return lines, failed


def build_parser():
    p = argparse.ArgumentParser(prog="exf", description="Embedding transfer with relaxed contrastive losses.")
    sub = p.add_subparsers(dest="command", required=True)

    def run_flags(sp):
        sp.add_argument("--config", required=True, help="experiment JSON file")
        sp.add_argument("--seed", type=int, help="override the config seed")
        sp.add_argument("--deterministic", dest="deterministic", action="store_true", default=None)
        sp.add_argument("--no-deterministic", dest="deterministic", action="store_false")
        sp.add_argument("--out", help="output directory (overrides output.dir)")

    run_flags(sub.add_parser("train-source", help="train the source embedding model"))
    run_flags(sub.add_parser("transfer", help="train target model(s) from a source checkpoint"))

    ev = sub.add_parser("eval", help="Recall@K and spectral decay of a checkpoint on a dataset")
    ev.add_argument("--checkpoint", required=True)
    ev.add_argument("--dataset", required=True)
    ev.add_argument("--format", choices=["csv", "bin"])
    ev.add_argument("--k", type=int, nargs="+", default=[1, 2, 4, 8])
    ev.add_argument("--normalize", action="store_true", help="l2-normalize embeddings first")

    gc = sub.add_parser("gradcheck", help="finite-difference check of all gradients")
    gc.add_argument("--seed", type=int, default=0)
    gc.add_argument("--trials", type=int, default=100)
    gc.add_argument("--corrupt", choices=list(gradcheck.OPS) + ["mlp_backward"], help=argparse.SUPPRESS)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        if args.command == "gradcheck":
            with _thread_limit(True):
                lines, failed = cmd_gradcheck(args.seed, args.trials, args.corrupt)
            print("\n".join(lines))
            for r in failed:
                print(f"gradient check failed: {r.op} (seed={args.seed}, trial={r.worst_trial}, "
                      f"rel err {r.max_error:.3e})", file=sys.stderr)
            return EXIT_VERIFY if failed else EXIT_OK
        if args.command == "eval":
            with _thread_limit(True):
                result = cmd_eval(args.checkpoint, args.dataset, args.k, args.format, args.normalize)
            print(_dump(result))
            return EXIT_OK
        cfg, out = _load_config(args)
        with _thread_limit(cfg["deterministic"]):
            if args.command == "train-source":
                result = cmd_train_source(cfg, out)
            else:
                result = cmd_transfer(cfg, out)
        print(_dump(result))
        return EXIT_OK
    except (ConfigError, UsageError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except ExfError as exc:
        print(f"runtime error: {exc}", file=sys.stderr)
        return EXIT_RUNTIME
    except (OSError, ValueError, FloatingPointError) as exc:
        print(f"runtime error: {exc}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
