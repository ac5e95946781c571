"""Command-line entry point.

Subcommands: maxcut, pool-demo, gen-multipartite, train-graph, train-node,
gradcheck. Usage errors exit with 2, runtime errors with 1. Reports carry a
reproducibility stanza (config, seeds, version) in their header; by default
the volatile wall_time_s column is left empty so identical invocations
produce byte-identical report bodies (pass --timings to fill it).
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import os
import sys
from concurrent.futures import ProcessPoolExecutor

import numpy as np

from . import __version__
from .autodiff import Tape, constant
from .datasets import generate_multipartite_dataset, load_dataset, save_dataset
from .errors import McpoolError
from .gradcheck import composite_gradchecks, primitive_gradchecks
from .graph import GeneratorSpec
from .maxcut import CutModelConfig
from .pipelines import (
    MAXCUT_METHODS,
    RESULT_COLUMNS,
    TASK_RESULT_COLUMNS,
    NodeSplit,
    TaskConfig,
    TwoCommunitySpec,
    experiment_row,
    resolve_source,
    run_maxcut_experiment,
    train_graph_classifier,
    train_node_classifier,
)
from .pool import MaxCutPoolLayer

GRADCHECK_GATE = 1e-4


def _positive_int(text: str) -> int:
    value = int(text)
    if value < 1:
        raise argparse.ArgumentTypeError(f"must be >= 1, got {text}")
    return value


def _ratio(text: str) -> float:
    value = float(text)
    if not (0.0 < value <= 1.0):
        raise argparse.ArgumentTypeError(f"ratio must be in (0, 1], got {text}")
    return value


def _nonneg_float(text: str) -> float:
    value = float(text)
    if value < 0:
        raise argparse.ArgumentTypeError(f"must be >= 0, got {text}")
    return value


def _positive_float(text: str) -> float:
    value = float(text)
    if value <= 0:
        raise argparse.ArgumentTypeError(f"must be > 0, got {text}")
    return value


def parse_source(text: str):
    """Parse 'ring:32', 'grid2d:6x6', 'er:50:0.1', 'complete:6',
    'bipartite:3x4', 'blocks:N:PIN:POUT' or 'gset:PATH'."""
    kind, _, rest = text.partition(":")
    try:
        if kind == "ring":
            return GeneratorSpec.ring(int(rest))
        if kind == "grid2d":
            r, c = rest.split("x")
            return GeneratorSpec.grid2d(int(r), int(c))
        if kind == "complete":
            return GeneratorSpec.complete(int(rest))
        if kind == "bipartite":
            a, b = rest.split("x")
            return GeneratorSpec.complete_bipartite(int(a), int(b))
        if kind == "er":
            n, p = rest.split(":")
            return GeneratorSpec.erdos_renyi(int(n), float(p))
        if kind == "blocks":
            n, p_in, p_out = rest.split(":")
            return TwoCommunitySpec(int(n), float(p_in), float(p_out))
        if kind == "gset":
            return rest
    except (ValueError, McpoolError) as exc:
        raise argparse.ArgumentTypeError(f"bad graph source {text!r}: {exc}")
    raise argparse.ArgumentTypeError(
        f"unknown graph source {text!r}; use ring:N, grid2d:RxC, er:N:P, "
        "complete:N, bipartite:AxB, blocks:N:PIN:POUT or gset:PATH"
    )


def parse_seeds(text: str) -> list[int]:
    try:
        return [int(tok) for tok in text.split(",") if tok.strip() != ""]
    except ValueError:
        raise argparse.ArgumentTypeError(f"bad seed list {text!r}")


def parse_layer_sizes(text: str) -> tuple[int, ...]:
    """Parse 'WxK' lists: '32x4,16x4,8x4' -> (32,)*4 + (16,)*4 + (8,)*4."""
    sizes: list[int] = []
    for token in text.split(","):
        token = token.strip()
        if not token:
            continue
        if "x" in token:
            width, count = token.split("x")
            sizes.extend([int(width)] * int(count))
        else:
            sizes.append(int(token))
    if not sizes or any(s < 1 for s in sizes):
        raise argparse.ArgumentTypeError(f"bad layer-size list {text!r}")
    return tuple(sizes)


def default_seed() -> int:
    return int(os.environ.get("MCPOOL_SEED", "0"))


def _stanza(command: str, args_dict: dict, seeds) -> list[str]:
    return [
        f"# mcpool {__version__}",
        f"# command: {command}",
        f"# config: {json.dumps(args_dict, sort_keys=True, default=str)}",
        f"# seeds: {','.join(str(s) for s in seeds)}",
    ]


def _format_cell(value, timings: bool, column: str):
    if column == "wall_time_s":
        return f"{value:.3f}" if timings else ""
    if isinstance(value, float):
        return f"{value:.12g}"
    if value is None:
        return ""
    return str(value)


def write_report(path, rows, columns, stanza_lines, fmt: str, timings: bool):
    if fmt == "csv":
        buf = io.StringIO()
        for line in stanza_lines:
            buf.write(line + "\r\n")
        writer = csv.writer(buf, lineterminator="\r\n")
        writer.writerow(columns)
        for row in rows:
            writer.writerow(
                [_format_cell(row.get(c), timings, c) for c in columns]
            )
        text = buf.getvalue()
    else:
        header = {"mcpool": __version__}
        for line in stanza_lines[1:]:
            key, _, val = line[2:].partition(": ")
            header[key] = val
        body = [header]
        for row in rows:
            out = dict(row)
            if not timings:
                out["wall_time_s"] = None
            body.append(out)
        text = json.dumps(body, indent=2, default=str) + "\n"
    with open(path, "w", encoding="ascii", newline="") as fh:
        fh.write(text)


def _print_summary(rows, columns):
    widths = {c: max(len(c), *(len(_format_cell(r.get(c), True, c)) for r in rows))
              for c in columns}
    print("  ".join(c.ljust(widths[c]) for c in columns))
    for r in rows:
        print("  ".join(
            _format_cell(r.get(c), True, c).ljust(widths[c]) for c in columns
        ))


def _cut_config(args) -> CutModelConfig:
    return CutModelConfig(
        hetmp_sizes=args.scorenet,
        delta=args.delta,
        lr=args.lr,
        epochs=args.epochs,
    )


def cmd_maxcut(args) -> int:
    config = _cut_config(args)
    tasks = [(method, seed) for method in args.method for seed in args.seeds]
    if args.jobs > 1:
        with ProcessPoolExecutor(max_workers=args.jobs) as pool:
            rows = list(pool.map(
                _maxcut_task,
                [(args.graph, m, s, config, args.graph_seed) for m, s in tasks],
            ))
    else:
        rows = run_maxcut_experiment(args.graph, args.method, args.seeds,
                                     config, args.graph_seed)
    stanza = _stanza("maxcut", _public_args(args), args.seeds)
    write_report(args.out, rows, RESULT_COLUMNS, stanza, args.format,
                 args.timings)
    _print_summary(rows, RESULT_COLUMNS)
    return 0


def _maxcut_task(task):
    source, method, seed, config, graph_seed = task
    return experiment_row(source, method, seed, config, graph_seed)


def cmd_pool_demo(args) -> int:
    g, label = resolve_source(args.graph, args.graph_seed)
    feats = g.features if g.features is not None else np.ones((g.n, 1))
    layer = MaxCutPoolLayer(feats.shape[1], args.seeds[0], ratio=args.ratio,
                            max_iter=args.max_iter, hetmp_sizes=args.scorenet,
                            delta=args.delta)
    out = layer.forward(Tape(), g, constant(feats), seed=args.seeds[0])
    pooled = out.pooled_graph
    print(f"source: {label}")
    print(f"nodes: {g.n} -> {pooled.n}")
    print(f"undirected edges: {g.num_undirected_edges} -> "
          f"{pooled.num_undirected_edges}")
    print(f"aux loss: {out.aux_loss.item():.6f}")
    print(f"random fallbacks: {out.assignment.random_fallback_count}")
    hops = out.assignment.hops
    print(f"max hop distance: {int(hops.max())}")
    return 0


def cmd_gen_multipartite(args) -> int:
    dataset = generate_multipartite_dataset(
        args.centers, args.per_class, args.max_cluster,
        noise_scale=args.noise_scale, seed=args.seed,
    )
    save_dataset(dataset, args.out)
    print(f"wrote {len(dataset)} graphs ({dataset.class_count} classes) "
          f"to {args.out}")
    return 0


def cmd_train_graph(args) -> int:
    dataset = load_dataset(args.data)
    config = TaskConfig(ratio=args.ratio, beta=args.beta, lr=args.lr,
                        epochs=args.epochs, max_iter=args.max_iter,
                        delta=args.delta, hetmp_sizes=args.scorenet,
                        variant=args.variant, no_loss=args.no_loss)
    rows = []
    for seed in args.seeds:
        report = train_graph_classifier(dataset, config, seed)
        rows.append(_task_row("multipartite", "train-graph", seed, report))
        if args.report:
            with open(f"{args.report}.seed{seed}.json", "w") as fh:
                json.dump(report.to_dict(), fh, indent=2)
    stanza = _stanza("train-graph", _public_args(args), args.seeds)
    write_report(args.out, rows, TASK_RESULT_COLUMNS, stanza, args.format,
                 args.timings)
    _print_summary(rows, TASK_RESULT_COLUMNS)
    return 0


def cmd_train_node(args) -> int:
    g, label = resolve_source(args.graph, args.graph_seed)
    if g.labels is None:
        raise McpoolError("node training needs a labeled graph source")
    rng = np.random.default_rng(args.graph_seed)
    idx = rng.permutation(g.n)
    n_train = int(0.6 * g.n)
    n_val = int(0.2 * g.n)
    split = NodeSplit(idx[:n_train], idx[n_train:n_train + n_val],
                      idx[n_train + n_val:])
    config = TaskConfig(ratio=args.ratio, beta=args.beta, lr=args.lr,
                        epochs=args.epochs, max_iter=args.max_iter,
                        delta=args.delta, hetmp_sizes=args.scorenet,
                        variant=args.variant, no_loss=args.no_loss)
    rows = []
    for seed in args.seeds:
        report = train_node_classifier(g, split, config, seed)
        rows.append(_task_row(label, "train-node", seed, report))
    stanza = _stanza("train-node", _public_args(args), args.seeds)
    write_report(args.out, rows, TASK_RESULT_COLUMNS, stanza, args.format,
                 args.timings)
    _print_summary(rows, TASK_RESULT_COLUMNS)
    return 0


def _task_row(label, method, seed, report) -> dict:
    return {
        "graph": label,
        "method": method,
        "seed": seed,
        "n": "",
        "undirected_edges": "",
        "cut_value": "",
        "cut_fraction": "",
        "loss": report.total_losses[-1],
        "epochs_run": report.epochs_run,
        "wall_time_s": report.wall_time_s,
        "accuracy": report.final_metric,
        "val_loss": (min(report.val_losses) if report.val_losses else None),
        "checkpoint_epoch": report.checkpoint_epoch,
    }


def cmd_gradcheck(args) -> int:
    worst = 0.0
    print(f"{'check':24s}  worst relative error")
    for name, err in {**primitive_gradchecks(args.seed, args.eps),
                      **composite_gradchecks(args.seed, args.eps)}.items():
        print(f"{name:24s}  {err:.3e}")
        worst = max(worst, err)
    print(f"{'WORST':24s}  {worst:.3e}  (gate {GRADCHECK_GATE:.0e})")
    return 0 if worst <= GRADCHECK_GATE else 1


def _public_args(args) -> dict:
    skip = {"func", "out", "report"}
    out = {}
    for key, value in sorted(vars(args).items()):
        if key in skip:
            continue
        if isinstance(value, GeneratorSpec):
            value = value.label
        out[key] = value
    return out


def _nonneg_int(text: str) -> int:
    value = int(text)
    if value < 0:
        raise argparse.ArgumentTypeError(f"must be >= 0, got {text}")
    return value


def _at_least_two(text: str) -> int:
    value = int(text)
    if value < 2:
        raise argparse.ArgumentTypeError(f"must be >= 2, got {text}")
    return value


def _add_common(sub, with_source=True, epochs_default=2000, lr_default=8e-4):
    if with_source:
        sub.add_argument("--graph", required=True, type=parse_source,
                         help="ring:N | grid2d:RxC | er:N:P | complete:N | "
                              "bipartite:AxB | blocks:N:PIN:POUT | gset:PATH")
        sub.add_argument("--graph-seed", type=int, default=0,
                         help="seed for randomized graph sources")
    sub.add_argument("--seeds", type=parse_seeds,
                     default=None, help="comma-separated run seeds")
    sub.add_argument("--out", default="results.csv", help="report path")
    sub.add_argument("--format", choices=("csv", "json"), default="csv")
    sub.add_argument("--timings", action="store_true",
                     help="include measured wall times (breaks byte "
                          "reproducibility of reports)")
    sub.add_argument("--lr", type=_positive_float, default=lr_default)
    sub.add_argument("--epochs", type=_positive_int, default=epochs_default)
    sub.add_argument("--delta", type=_nonneg_float, default=2.0)
    sub.add_argument("--beta", type=_nonneg_float, default=1.0)
    sub.add_argument("--ratio", type=_ratio, default=0.5)
    sub.add_argument("--max-iter", type=_nonneg_int, default=3)
    sub.add_argument("--scorenet", type=parse_layer_sizes,
                     default=parse_layer_sizes("32x4,16x4,8x4"),
                     help="HetMP stack sizes, e.g. 32x4,16x4,8x4")
    sub.add_argument("--jobs", type=_positive_int, default=1,
                     help="seed-parallel worker processes")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="mcpool",
        description="Cut partitions and hierarchical pooling on graphs",
    )
    parser.add_argument("--version", action="version", version=__version__)
    subs = parser.add_subparsers(dest="command", required=True)

    p = subs.add_parser("maxcut", help="run cut solvers on one graph")
    _add_common(p)
    p.add_argument("--method", type=lambda t: t.split(","),
                   default=["maxcutpool"],
                   help=f"comma-separated subset of {','.join(MAXCUT_METHODS)}")
    p.set_defaults(func=cmd_maxcut)

    p = subs.add_parser("pool-demo", help="print pooled-graph statistics")
    _add_common(p)
    p.set_defaults(func=cmd_pool_demo)

    p = subs.add_parser("gen-multipartite", help="generate the dataset file")
    p.add_argument("--centers", type=_at_least_two, required=True)
    p.add_argument("--per-class", type=_positive_int, required=True)
    p.add_argument("--max-cluster", type=_positive_int, required=True)
    p.add_argument("--noise-scale", type=_nonneg_float, default=0.1)
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_gen_multipartite)

    p = subs.add_parser("train-graph", help="train the graph classifier")
    p.add_argument("--data", required=True, help="JSON Lines dataset path")
    _add_common(p, with_source=False, epochs_default=150, lr_default=1e-3)
    p.add_argument("--variant", choices=("plain", "expressive"),
                   default="plain")
    p.add_argument("--no-loss", action="store_true",
                   help="ablation: drop the auxiliary loss from the total")
    p.add_argument("--report", default=None,
                   help="also dump per-seed run reports as JSON")
    p.set_defaults(func=cmd_train_graph)

    p = subs.add_parser("train-node", help="train the node classifier")
    _add_common(p, epochs_default=150, lr_default=1e-3)
    p.add_argument("--variant", choices=("plain", "expressive"),
                   default="plain")
    p.add_argument("--no-loss", action="store_true")
    p.set_defaults(func=cmd_train_node)

    p = subs.add_parser("gradcheck", help="finite-difference gradient audit")
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--eps", type=_positive_float, default=1e-5)
    p.set_defaults(func=cmd_gradcheck)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    if hasattr(args, "seeds") and args.seeds is None:
        args.seeds = [default_seed()]
    if hasattr(args, "seed") and args.seed is None:
        args.seed = default_seed()
    try:
        return args.func(args)
    except McpoolError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


def run() -> None:
    sys.exit(main())


if __name__ == "__main__":
    run()
