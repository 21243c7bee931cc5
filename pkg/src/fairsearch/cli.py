"""Command-line interface: fairsearch train|generate|retrain|sweep|report.

Exit codes: 0 success, 1 runtime or numeric failure, 2 usage or
configuration problems.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys

from . import harness, nncore
from .errors import ConfigError, DataError, FairsearchError, SchemaError
from .generate import SearchConfig


def _add_search_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--seeds", type=int, default=200, help="initial seeds (default 200)")
    p.add_argument("--global-iter", type=int, default=5)
    p.add_argument("--local-iter", type=int, default=5)
    p.add_argument("--step", type=float, default=0.05, help="perturbation step p")
    p.add_argument("--eps", type=float, default=0.3, help="FGSM/PGD budget")
    p.add_argument("--alpha", type=float, default=0.05, help="PGD step size")
    p.add_argument("--pgd-steps", type=int, default=25)
    p.add_argument("--rng-seed", type=int, default=0)
    p.add_argument("--cap", type=int, default=256, help="similar counterpart cap")
    p.add_argument("--k", type=int, default=4, help="K-Means clusters for seeding")
    p.add_argument("--max-pool", type=int, default=None,
                   help="optional per-round cap on the breadth-phase pool")


def _search_config(args) -> SearchConfig:
    return SearchConfig(
        n_seeds=args.seeds,
        global_iter=args.global_iter,
        local_iter=args.local_iter,
        step_p=args.step,
        pgd_eps=args.eps,
        pgd_alpha=args.alpha,
        pgd_steps=args.pgd_steps,
        rng_seed=args.rng_seed,
        counterpart_cap=args.cap,
        k_clusters=args.k,
        max_pool=args.max_pool,
    )


def _parse_grid(text: str) -> list[int]:
    try:
        return [int(t) for t in text.split(",") if t.strip()]
    except ValueError:
        raise ConfigError(f"bad grid {text!r}; expected comma-separated integers") from None


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="fairsearch", description=__doc__)
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("train", help="train a baseline model")
    p.add_argument("--dataset", required=True)
    p.add_argument("--schema", required=True)
    p.add_argument("--out", required=True, help="model output path")
    p.add_argument("--epochs", type=int, default=100)
    p.add_argument("--batch-size", type=int, default=32)
    p.add_argument("--lr", type=float, default=1e-3)
    p.add_argument("--optimizer", choices=["adam", "sgd"], default="adam")
    p.add_argument("--rng-seed", type=int, default=0)
    p.add_argument("--threshold", type=float, default=0.5)
    p.add_argument("--cap", type=int, default=256)

    p = sub.add_parser("generate", help="generate and evaluate adversarial instances")
    p.add_argument("--model", required=True)
    p.add_argument("--dataset", required=True)
    p.add_argument("--schema", required=True)
    p.add_argument("--technique", choices=list(harness.TECHNIQUES), default="robustfair")
    p.add_argument("--out", required=True, help="output directory")
    _add_search_flags(p)

    p = sub.add_parser("retrain", help="retrain on detected adversarial instances")
    p.add_argument("--model", required=True)
    p.add_argument("--dataset", required=True)
    p.add_argument("--schema", required=True)
    p.add_argument("--adversarial", required=True, nargs="+",
                   help="instances.meta.json files from generate runs")
    p.add_argument("--fraction", type=float, default=0.10)
    p.add_argument("--rng-seed", type=int, default=0)
    p.add_argument("--stratified", action="store_true",
                   help="sample per confusion category instead of uniformly")
    p.add_argument("--out", required=True, help="output directory")

    p = sub.add_parser("sweep", help="grid of searches, one row of counts each")
    p.add_argument("--model", required=True)
    p.add_argument("--dataset", required=True)
    p.add_argument("--schema", required=True)
    p.add_argument("--seeds-grid", default="200", help="e.g. 100,200,300")
    p.add_argument("--global-iter-grid", default="5")
    p.add_argument("--local-iter-grid", default="5")
    p.add_argument("--out", required=True, help="sweep.csv path")
    _add_search_flags(p)

    p = sub.add_parser("report", help="recompute a report from written instances")
    p.add_argument("--instances-meta", required=True)
    p.add_argument("--model", required=True)
    p.add_argument("--schema", required=True)
    p.add_argument("--out", default=None, help="optional output directory")
    return parser


def _run(args) -> int:
    if args.command == "train":
        cfg = nncore.TrainConfig(
            epochs=args.epochs,
            batch_size=args.batch_size,
            learning_rate=args.lr,
            optimizer=args.optimizer,
            rng_seed=args.rng_seed,
        )
        metrics = harness.cmd_train(
            args.dataset, args.schema, args.out,
            train_cfg=cfg, threshold=args.threshold, counterpart_cap=args.cap,
        )
        print(json.dumps(metrics, indent=2))
    elif args.command == "generate":
        report = harness.cmd_generate(
            args.model, args.dataset, args.schema, args.technique,
            _search_config(args), args.out,
        )
        print(json.dumps(report.to_dict(), indent=2))
    elif args.command == "retrain":
        comparison = harness.cmd_retrain(
            args.model, args.dataset, args.schema, args.adversarial,
            fraction=args.fraction, rng_seed=args.rng_seed,
            out_dir=args.out, stratified=args.stratified,
        )
        comparison.pop("model", None)
        print(json.dumps(comparison, indent=2))
    elif args.command == "sweep":
        rows = harness.cmd_sweep(
            args.model, args.dataset, args.schema, _search_config(args),
            _parse_grid(args.seeds_grid),
            _parse_grid(args.global_iter_grid),
            _parse_grid(args.local_iter_grid),
            out_csv=args.out,
        )
        print(json.dumps(rows, indent=2))
    elif args.command == "report":
        report = harness.cmd_report(args.instances_meta, args.model, args.schema, args.out)
        print(json.dumps(report.to_dict(), indent=2))
    return 0


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(
        level=logging.DEBUG if args.verbose else logging.INFO,
        format="%(levelname)s %(name)s: %(message)s",
    )
    try:
        return _run(args)
    except (ConfigError, SchemaError, FileNotFoundError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except (DataError, FairsearchError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    raise SystemExit(main())
