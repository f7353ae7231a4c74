"""Command-line entry point: ``gcnse {generate,train,explain,reproduce,eval}``.

Exit codes: 0 when everything requested succeeded, 1 when a requested
assertion failed, 2 on bad input. Failures are also written as JSON to
``<out>/failure.json`` and stderr.
"""

from __future__ import annotations

import argparse
import csv
import json
import os
import sys

import numpy as np

from . import explain, metrics, recipes, scenarios
from .config import SCENARIOS, ConfigError, ExperimentConfig, load_config
from .graph import GraphFormatError, load_graph, save_graph
from .model import WeightingScheme, evaluate_split, exp_decay_weights, prepare, save_model, train
from .runner import WORKERS_ENV, derive_seeds, run_many

EXIT_OK, EXIT_ASSERT, EXIT_INPUT = 0, 1, 2

EVAL_SCHEMES = ("se", "uniform", "exp-decay", "static")


class AssertionFailed(Exception):
    def __init__(self, report: dict):
        super().__init__(report.get("message", "assertion failed"))
        self.report = report


def _write_json(path: str, payload) -> None:
    with open(path, "w") as fh:
        json.dump(payload, fh, indent=2, sort_keys=True)
        fh.write("\n")


def _write_rows(path: str, header: list[str], rows) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(header)
        for row in rows:
            w.writerow([repr(float(v)) if isinstance(v, (float, np.floating)) else v for v in row])


# ---------------------------------------------------------------------------
# configuration


def build_config(args: argparse.Namespace) -> ExperimentConfig:
    cfg = load_config(args.config) if args.config else ExperimentConfig()
    cfg = cfg.replace(
        seed=args.seed,
        runs=args.runs,
        runs_per_mask=args.runs_per_mask,
        scheme=args.scheme,
        variant=args.variant,
        out=args.out,
        scenario=args.scenario,
        iterations=args.iterations,
    )
    if args.workers is not None:
        cfg = cfg.replace(workers=args.workers)
    elif os.environ.get(WORKERS_ENV):
        cfg = cfg.replace(workers=int(os.environ[WORKERS_ENV]))
    return cfg


def _graph(args, cfg: ExperimentConfig):
    return load_graph(args.graph) if args.graph else scenarios.build(cfg)


# ---------------------------------------------------------------------------
# commands


def cmd_generate(args, cfg: ExperimentConfig) -> dict:
    g = scenarios.build(cfg)
    path = os.path.join(cfg.out, "graph.txt")
    save_graph(g, path)
    return {"graph": path, "scenario": cfg.scenario, "timesteps": g.num_timesteps}


def cmd_train(args, cfg: ExperimentConfig) -> dict:
    g = _graph(args, cfg)
    scheme = cfg.weighting()
    _, run_seed = cfg.seeds()
    res = train(g, cfg.train_config(), seed=run_seed, scheme=scheme)
    prepared = prepare(g, static=scheme.kind == "static")
    report = evaluate_split(res.params, prepared, res.split.test)
    save_model(res.params, os.path.join(cfg.out, "model.npz"), cfg.train_config())
    payload = report.to_dict()
    payload.update(
        scheme=scheme.kind,
        best_iteration=res.best_iteration,
        val_accuracy=res.val_accuracy[res.best_iteration],
        split_sizes=[len(res.split.train), len(res.split.val), len(res.split.test)],
    )
    _write_json(os.path.join(cfg.out, "metrics.json"), payload)
    _write_rows(os.path.join(cfg.out, "attention.csv"), ["timestep", "weight"], enumerate(res.attention))
    if len(res.attention_streams) > 1:
        _write_rows(
            os.path.join(cfg.out, "attention_attributes.csv"), ["timestep", "weight"],
            enumerate(res.attention_streams[1]),
        )
    if cfg.min_acc is not None and report.accuracy < cfg.min_acc:
        raise AssertionFailed({"message": "test accuracy below min_acc", "accuracy": report.accuracy,
                               "min_acc": cfg.min_acc})
    return payload


def cmd_explain(args, cfg: ExperimentConfig) -> dict:
    g = _graph(args, cfg)
    prepared = prepare(g)
    _, run_seed = cfg.seeds()
    tc = cfg.train_config()
    att = explain.attention_runs(prepared, tc, cfg.runs, run_seed, cfg.weighting(), cfg.workers)
    imp = explain.importance(prepared, att.mean, tc, cfg.runs_per_mask, run_seed, cfg.workers, cfg.eval_on)
    r = r_decay = None
    error = None
    try:
        r = explain.attention_importance_correlation(att.mean, imp)
        r_decay = explain.attention_importance_correlation(exp_decay_weights(g.num_timesteps, cfg.lam), imp)
    except metrics.UndefinedMetricError as exc:
        error = str(exc)
    extra = {"r_decay": r_decay, "attention_runs": att.runs.tolist(), "eval_on": cfg.eval_on}
    if error:
        extra["r_error"] = error
    explain.write_importance(
        imp, os.path.join(cfg.out, "importance.csv"), os.path.join(cfg.out, "explain.json"), r, extra
    )
    summary = {"m": imp.reference_accuracy, "r": r, "r_decay": r_decay}
    if cfg.min_r is not None and (r is None or not r > cfg.min_r):
        raise AssertionFailed({"message": error or "correlation not above min_r", "r": r, "min_r": cfg.min_r})
    return summary


def _eval_task(task):
    g, tc, kind, lam, seed = task
    scheme = WeightingScheme(kind=kind, lam=lam)
    res = train(g, tc, seed=seed, scheme=scheme)
    return evaluate_split(res.params, prepare(g, static=kind == "static"), res.split.test).to_dict()


def cmd_eval(args, cfg: ExperimentConfig) -> dict:
    """Compare weighting schemes over ``runs`` paired seeds."""
    g = _graph(args, cfg)
    kinds = [cfg.weighting().kind] if args.scheme else list(EVAL_SCHEMES)
    _, run_seed = cfg.seeds()
    seeds = derive_seeds(run_seed, cfg.runs)
    tasks = [(g, cfg.train_config(), k, cfg.lam, s) for k in kinds for s in seeds]
    out = run_many(_eval_task, tasks, cfg.workers)
    table = {}
    rows = []
    for i, kind in enumerate(kinds):
        chunk = out[i * cfg.runs:(i + 1) * cfg.runs]
        entry = {}
        for key in ("acc", "auc", "f1"):
            vals = np.array([c[key] for c in chunk])
            entry[key] = float(vals.mean())
            entry[f"{key}_std"] = float(vals.std(ddof=1)) if len(vals) > 1 else 0.0
        table[kind] = entry
        rows.append([kind, entry["acc"], entry["acc_std"], entry["auc"], entry["auc_std"], entry["f1"], entry["f1_std"]])
    _write_json(os.path.join(cfg.out, "eval.json"), {"runs": cfg.runs, "schemes": table})
    _write_rows(os.path.join(cfg.out, "eval.csv"),
                ["scheme", "acc", "acc_std", "auc", "auc_std", "f1", "f1_std"], rows)
    if cfg.min_acc is not None:
        low = {k: v["acc"] for k, v in table.items() if v["acc"] < cfg.min_acc}
        if low:
            raise AssertionFailed({"message": "mean accuracy below min_acc", "below": low, "min_acc": cfg.min_acc})
    return table


def cmd_reproduce(args, cfg: ExperimentConfig) -> dict:
    res = recipes.run(args.figure, cfg)
    recipes.write_bundle(res, os.path.join(cfg.out, args.figure))
    summary = res.summary()
    if not res.passed:
        raise AssertionFailed({"message": f"{args.figure}: property check failed", **summary})
    return summary


COMMANDS = {
    "generate": cmd_generate,
    "train": cmd_train,
    "explain": cmd_explain,
    "eval": cmd_eval,
    "reproduce": cmd_reproduce,
}


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="key=value config file")
    common.add_argument("--graph", help="graph file; defaults to generating the configured scenario")
    common.add_argument("--out", help="output directory (default: out)")
    common.add_argument("--seed", type=int)
    common.add_argument("--runs", type=int, help="training runs per curve")
    common.add_argument("--runs-per-mask", type=int, dest="runs_per_mask")
    common.add_argument("--workers", type=int, help=f"worker processes (env {WORKERS_ENV} when unset)")
    common.add_argument("--scheme", choices=("se", "uniform", "exp-decay", "static"))
    common.add_argument("--variant", choices=("single", "dual"))
    common.add_argument("--scenario", choices=SCENARIOS)
    common.add_argument("--iterations", type=int)

    p = argparse.ArgumentParser(prog="gcnse", description="Snapshot-attention GCN experiments on dynamic graphs.")
    sub = p.add_subparsers(dest="command", required=True)
    sub.add_parser("generate", parents=[common], help="write a synthetic scenario graph")
    sub.add_parser("train", parents=[common], help="train one model; write model, metrics and attention")
    sub.add_parser("explain", parents=[common], help="averaged attention, masking importance and correlation")
    sub.add_parser("eval", parents=[common], help="compare weighting schemes over several runs")
    rp = sub.add_parser("reproduce", parents=[common], help="run a named experiment and check its property")
    rp.add_argument("figure", choices=sorted(recipes.RECIPES))
    return p


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    out_dir = args.out or "out"
    try:
        cfg = build_config(args)
        out_dir = cfg.out
        os.makedirs(cfg.out, exist_ok=True)
        stale = os.path.join(cfg.out, "failure.json")
        if os.path.exists(stale):
            os.remove(stale)
        result = COMMANDS[args.command](args, cfg)
    except AssertionFailed as exc:
        return _fail(out_dir, args.command, EXIT_ASSERT, "assertion", exc.report)
    except GraphFormatError as exc:
        return _fail(out_dir, args.command, EXIT_INPUT, "graph-format", {"message": str(exc), "line": exc.line})
    except (ConfigError, ValueError, OSError) as exc:
        return _fail(out_dir, args.command, EXIT_INPUT, type(exc).__name__, {"message": str(exc)})
    json.dump({"status": "ok", "command": args.command, "result": recipes._plain(result)}, sys.stdout,
              indent=2, sort_keys=True)
    sys.stdout.write("\n")
    return EXIT_OK


def _fail(out_dir: str, command: str, code: int, kind: str, report: dict) -> int:
    payload = {"status": "failed", "command": command, "kind": kind, "exit_code": code,
               **recipes._plain(report)}
    try:
        os.makedirs(out_dir, exist_ok=True)
        _write_json(os.path.join(out_dir, "failure.json"), payload)
    except OSError:
        pass
    json.dump(payload, sys.stderr, indent=2, sort_keys=True)
    sys.stderr.write("\n")
    return code


if __name__ == "__main__":
    sys.exit(main())
