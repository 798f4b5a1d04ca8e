"""Experiment front-end.

Subcommands: train, eval, ablate, analyze, compare-baselines.  One YAML
config per experiment; flags override fields dot-path style.  Exit codes:
0 success, 2 usage/config error, 3 runtime failure.  METAKG_OUT_ROOT
overrides the root that relative output directories resolve against.
"""

from __future__ import annotations

import argparse
import os
import sys
from pathlib import Path

from . import analysis, config as config_mod, evaluation, meta
from .checkpoint import CheckpointError, load_state
from .episodes import EpisodeError, RngStream, make_task_distribution
from .meta import ConfigError


def _out_dir(cfg) -> Path:
    root = os.environ.get("METAKG_OUT_ROOT", ".")
    path = Path(cfg.out_dir)
    return path if path.is_absolute() else Path(root) / path


def _prepare(config_path, overrides):
    cfg = config_mod.load(config_path)
    if overrides:
        cfg = config_mod.apply_overrides(cfg, overrides)
    cfg = config_mod.sync_seed(cfg)
    dist = make_task_distribution(cfg.distribution, RngStream(cfg.seed, 0))
    return cfg, dist


def _snapshot(cfg, out_dir: Path) -> None:
    out_dir.mkdir(parents=True, exist_ok=True)
    config_mod.save(cfg, out_dir / "config.yaml")


def cmd_train(args) -> int:
    cfg, dist = _prepare(args.config, args.override)
    out_dir = _out_dir(cfg)
    _snapshot(cfg, out_dir)
    state = None
    if args.resume:
        state = load_state(args.resume)
    meta.train(cfg.train, dist, state=state, out_dir=out_dir)
    print(f"training complete; artifacts in {out_dir}")
    return 0


def cmd_eval(args) -> int:
    cfg, dist = _prepare(args.config, args.override)
    state = load_state(args.checkpoint)
    out_dir = _out_dir(cfg)
    _snapshot(cfg, out_dir)
    reports = {
        "base": evaluation.evaluate(
            state, dist, cfg.eval.split, cfg.eval.n_episodes, cfg.train,
            q_per_class=cfg.eval.q_per_class,
        )
    }
    if cfg.eval.kg_at_test:
        reports["kg_at_test"] = evaluation.evaluate(
            state, dist, cfg.eval.split, cfg.eval.n_episodes, cfg.train,
            q_per_class=cfg.eval.q_per_class, kg_at_test=True,
        )
    table = evaluation.report_table(reports)
    (out_dir / "eval_report.txt").write_text(table + "\n")
    (out_dir / "eval_report.csv").write_text(evaluation.report_csv(reports))
    print(table)
    return 0


def cmd_ablate(args) -> int:
    cfg, dist = _prepare(args.config, args.override)
    out_dir = _out_dir(cfg)
    _snapshot(cfg, out_dir)
    grid = evaluation.run_ablation_grid(
        cfg.train, dist, args.alphas, args.lambdas, n_eval_episodes=cfg.eval.n_episodes
    )
    table = evaluation.report_table(grid)
    (out_dir / "ablation_grid.txt").write_text(table + "\n")
    (out_dir / "ablation_grid.csv").write_text(evaluation.report_csv(grid))
    print(table)
    return 0


def cmd_analyze(args) -> int:
    cfg, dist = _prepare(args.config, args.override)
    state = load_state(args.checkpoint)
    out_dir = _out_dir(cfg)
    _snapshot(cfg, out_dir)
    n_tasks = args.n_tasks or cfg.analysis.n_tasks
    k = args.k or cfg.analysis.k
    report, _, _ = analysis.encoding_quality_study(
        state, dist, n_tasks, cfg.train, k=k,
        out_path=out_dir / "encodings.jsonl",
        normalized_laplacian=cfg.analysis.normalized_laplacian,
    )
    (out_dir / "spectrum.csv").write_text(report.to_csv())
    print(f"low-frequency energy c(0.2) = {report.concentration(0.2):.4f}")
    return 0


def cmd_compare(args) -> int:
    cfg, dist = _prepare(args.config, args.override)
    out_dir = _out_dir(cfg)
    _snapshot(cfg, out_dir)
    reports = evaluation.compare_baselines(
        cfg.train, dist, n_eval_episodes=cfg.eval.n_episodes
    )
    table = evaluation.report_table(reports)
    (out_dir / "baseline_comparison.txt").write_text(table + "\n")
    (out_dir / "baseline_comparison.csv").write_text(evaluation.report_csv(reports))
    print(table)
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="metakg")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p):
        p.add_argument("config", help="path to experiment YAML config")
        p.add_argument("-o", "--override", action="append", default=[],
                       metavar="KEY=VALUE", help="dot-path config override")

    p = sub.add_parser("train", help="run the training loop")
    common(p)
    p.add_argument("--resume", help="checkpoint to resume from")
    p.set_defaults(fn=cmd_train)

    p = sub.add_parser("eval", help="evaluate a checkpoint")
    common(p)
    p.add_argument("--checkpoint", required=True)
    p.set_defaults(fn=cmd_eval)

    p = sub.add_parser("ablate", help="ema-alpha / lambda sensitivity grid")
    common(p)
    p.add_argument("--alphas", type=float, nargs="+", default=[0.2])
    p.add_argument("--lambdas", type=float, nargs="+", default=[0.05])
    p.set_defaults(fn=cmd_ablate)

    p = sub.add_parser("analyze", help="graph-spectral study of task encodings")
    common(p)
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--n-tasks", type=int, default=None)
    p.add_argument("--k", type=int, default=None)
    p.set_defaults(fn=cmd_analyze)

    p = sub.add_parser("compare-baselines", help="train and compare all variants")
    common(p)
    p.set_defaults(fn=cmd_compare)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.fn(args)
    except (ConfigError, EpisodeError, CheckpointError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except Exception as exc:  # runtime failure
        print(f"runtime failure: {exc}", file=sys.stderr)
        return 3


if __name__ == "__main__":
    sys.exit(main())
