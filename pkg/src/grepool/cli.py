"""Command-line entry point.

Exit codes: 0 success, 2 configuration error, 3 I/O error (missing or
unreadable dataset/graph file), 4 numerical divergence in at least one run.
"""

from __future__ import annotations

import argparse
import csv
import itertools
import logging
import sys
from pathlib import Path

import numpy as np

from . import records
from .bench import bench
from .config import ConfigError, ExperimentConfig, dataset_dir, load_config, load_dataset
from .data import FormatError, IngestionError, parse_tu_dataset
from .training import ExperimentResult, config_dict, run_experiment
from .wl import read_edge_list, wl_equivalent, wl_histograms

EXIT_OK, EXIT_CONFIG, EXIT_IO, EXIT_DIVERGED = 0, 2, 3, 4

log = logging.getLogger("grepool")


def _load(args) -> tuple[ExperimentConfig, list]:
    overrides = list(args.set or ())
    if args.jobs is not None:
        overrides.append(f"train.jobs={args.jobs}")
    cfg = load_config(args.config, overrides)
    graphs = load_dataset(cfg.dataset)
    return cfg, graphs


def _run_cell(cfg: ExperimentConfig, graphs, out_dir: Path, cell: dict, recs: list,
              long_rows: list | None = None) -> ExperimentResult:
    tc = cfg.train_config(**cell)
    cdict = config_dict(tc)
    chash = records.config_hash({"dataset": cfg.dataset.name, **cdict})
    res = run_experiment(graphs, tc, cfg.train.n_seeds, cfg.train.jobs)
    curves_dir = out_dir / "curves"
    curves_dir.mkdir(parents=True, exist_ok=True)
    method = tc.method.name
    for r in res.runs:
        rel = Path("curves") / f"{method}_{chash}_seed{r.seed}.csv"
        records.write_curves(out_dir / rel, r.curves())
        recs.append({
            "kind": "run", "dataset": cfg.dataset.name, "method": method,
            "config_hash": chash, "seed": r.seed, "accuracy": r.test_acc,
            "valid_accuracy": r.valid_acc, "best_epoch": r.best_epoch,
            "failed": r.failed, "diagnostics": r.diagnostics,
            "cell": cell, "curves": str(rel),
        })
        if long_rows is not None:
            long_rows.append({**cell, "seed": r.seed, "accuracy": r.test_acc})
    recs.append({
        "kind": "aggregate", "dataset": cfg.dataset.name, "method": method,
        "config_hash": chash, "config": cdict, "cell": cell,
        "mean": res.mean, "std": res.std, "n_runs": len(res.runs), "n_failed": res.failures,
    })
    return res


def cmd_train(args) -> int:
    cfg, graphs = _load(args)
    out_dir = Path(cfg.output_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    recs: list[dict] = []
    res = _run_cell(cfg, graphs, out_dir, {}, recs)
    records.write_records(out_dir / "records.jsonl", recs)
    agg = recs[-1]
    table = records.format_table(
        [{"dataset": agg["dataset"], "method": agg["method"], "mean": agg["mean"],
          "std": agg["std"], "runs": agg["n_runs"], "failed": agg["n_failed"]}],
        ["dataset", "method", "mean", "std", "runs", "failed"])
    (out_dir / "summary.txt").write_text(table)
    print(table, end="")
    return EXIT_DIVERGED if res.failures else EXIT_OK


def cmd_ablate(args) -> int:
    cfg, graphs = _load(args)
    sweep = cfg.sweep
    axes = {k: v for k, v in (("strategy", sweep.strategy), ("p", sweep.p),
                              ("layers", sweep.layers), ("lam", sweep.lam)) if v}
    if not axes:
        raise ConfigError("sweep: at least one sweep list is required for ablate")
    # validate every cell before spending time on any of them
    cells = [dict(zip(axes, combo)) for combo in itertools.product(*axes.values())]
    for cell in cells:
        try:
            cfg.train_config(**cell)
        except ValueError as exc:
            raise ConfigError(f"sweep cell {cell}: {exc}") from exc
    out_dir = Path(cfg.output_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    recs: list[dict] = []
    long_rows: list[dict] = []
    rows = []
    failed = False
    for cell in cells:
        res = _run_cell(cfg, graphs, out_dir, cell, recs, long_rows)
        failed |= bool(res.failures)
        rows.append({**cell, "method": recs[-1]["method"], "mean": res.mean, "std": res.std})
    records.write_records(out_dir / "records.jsonl", recs)
    with open(out_dir / "ablation_long.csv", "w", newline="") as fh:
        w = csv.DictWriter(fh, fieldnames=[*axes, "seed", "accuracy"])
        w.writeheader()
        w.writerows(long_rows)
    table = records.format_table(rows, [*axes, "method", "mean", "std"])
    (out_dir / "summary.txt").write_text(table)
    print(table, end="")
    return EXIT_DIVERGED if failed else EXIT_OK


def _fmt_hist(h) -> str:
    return "{" + ", ".join(f"{c}:{k}" for c, k in sorted(h.items())) + "}"


def cmd_wltest(args) -> int:
    g1 = read_edge_list(args.graph_a)
    g2 = read_edge_list(args.graph_b)
    same = wl_equivalent(g1, g2)
    print("equivalent" if same else "distinguishable")
    h1, h2 = wl_histograms(g1, g2)
    for r, (a, b) in enumerate(zip(h1, h2)):
        print(f"round {r}: A={_fmt_hist(a)} B={_fmt_hist(b)}")
    return EXIT_OK


def cmd_bench(args) -> int:
    rows = bench(args.n, dim=args.dim, heads=args.heads, repeats=args.repeats)
    rows = [{**r, "seconds": f"{r['seconds']:.3e}"} for r in rows]
    print(records.format_table(rows, ["n", "seconds", "ratio"]), end="")
    return EXIT_OK


def cmd_parse_check(args) -> int:
    from .config import DatasetSection

    section = DatasetSection(name=args.name, root=args.root)
    d = dataset_dir(section)
    graphs = parse_tu_dataset(d, args.name)
    sizes = np.array([g.n for g in graphs])
    labels = np.array([g.label for g in graphs])
    print(f"dataset      {args.name} ({d})")
    print(f"graphs       {len(graphs)}")
    print(f"mean nodes   {sizes.mean():.2f}")
    print(f"classes      {labels.max() + 1} {np.bincount(labels).tolist()}")
    print(f"feature dim  {graphs[0].d}")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="grepool", description="Attention-based graph pooling lab")
    ap.add_argument("-v", "--verbose", action="store_true")
    sub = ap.add_subparsers(dest="command", required=True)

    for name, fn, help_ in (("train", cmd_train, "train over several seeds and aggregate"),
                            ("ablate", cmd_ablate, "sweep strategy x pooling ratio (x layers x lambda)")):
        p = sub.add_parser(name, help=help_)
        p.add_argument("config", help="YAML experiment config")
        p.add_argument("--set", action="append", metavar="KEY=VALUE",
                       help="override a config value, e.g. train.p=0.3 (repeatable)")
        p.add_argument("--jobs", type=int, default=None, help="parallel seed runs (overrides train.jobs)")
        p.set_defaults(func=fn)

    p = sub.add_parser("wltest", help="1-WL equivalence of two edge-list graphs")
    p.add_argument("graph_a")
    p.add_argument("graph_b")
    p.set_defaults(func=cmd_wltest)

    p = sub.add_parser("bench", help="time attention scoring for several graph sizes")
    p.add_argument("n", nargs="+", type=int)
    p.add_argument("--dim", type=int, default=128)
    p.add_argument("--heads", type=int, default=4)
    p.add_argument("--repeats", type=int, default=50)
    p.set_defaults(func=cmd_bench)

    p = sub.add_parser("parse-check", help="parse a TU dataset and print its statistics")
    p.add_argument("name")
    p.add_argument("--root", default=None, help="dataset root (default: $GREPOOL_DATA_ROOT)")
    p.set_defaults(func=cmd_parse_check)
    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (IngestionError, FormatError, OSError) as exc:
        print(f"i/o error: {exc}", file=sys.stderr)
        return EXIT_IO


if __name__ == "__main__":
    sys.exit(main())
