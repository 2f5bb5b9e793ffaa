"""Command-line front end: ``rprembed <subcommand> ...``.

Exit codes: 0 success, 1 invalid input or usage, 2 runtime failure.
"""

from __future__ import annotations

import argparse
import logging
import sys
import warnings

import numpy as np

from . import evaluation as ev
from .config import TrainConfig, format_config, load_config
from .errors import ValidationError
from .graph import Graph, load_graph, save_graph
from .io import atomic_write_text
from .structfeat import all_structural_features, write_features
from .trainer import export_embeddings, infer, load_embeddings, load_model, save_model, train, \
    write_training_log

EXIT_OK, EXIT_INVALID, EXIT_RUNTIME = 0, 1, 2


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_INVALID, f"{self.prog}: error: {message}\n")


def _formatter(prog):
    return argparse.ArgumentDefaultsHelpFormatter(prog, max_help_position=32, width=100)


def _parse_set(items: list[str]) -> dict[str, str]:
    out = {}
    for item in items:
        if "=" not in item:
            raise ValidationError(f"--set expects KEY=VALUE, got {item!r}")
        key, val = item.split("=", 1)
        out[key.strip()] = val.strip()
    return out


def _add_config_flags(p):
    p.add_argument("--config", help="config file of 'key = value' lines")
    p.add_argument("--set", dest="overrides", action="append", default=[], metavar="KEY=VALUE",
                   help="override one config key (repeatable)")
    p.add_argument("--seed", type=int, default=None, help="random seed (overrides the config)")
    p.add_argument("--threads", type=int, default=1,
                   help="worker threads for feature extraction")


def _resolve_config(args) -> TrainConfig:
    overrides = _parse_set(args.overrides)
    if args.seed is not None:
        overrides["seed"] = args.seed
    if args.threads < 1:
        raise ValidationError("--threads must be >= 1")
    return load_config(args.config, overrides)


def _echo(cfg: TrainConfig | None = None, **extra) -> None:
    print("# resolved configuration")
    if cfg is not None:
        for line in format_config(cfg).splitlines():
            print(f"# {line}")
    for key, val in extra.items():
        print(f"# {key} = {val}")


def _read_ids(path) -> list[str]:
    with open(path, encoding="utf-8") as fh:
        return [tok for line in fh for tok in line.split("#", 1)[0].split()]


def _indices(g: Graph, ids: list[str]) -> np.ndarray:
    return np.array([g.index_of(v) for v in ids], dtype=np.int64)


# -- subcommands ----------------------------------------------------------------

def cmd_train(args) -> int:
    cfg = _resolve_config(args)
    _echo(cfg, threads=args.threads)
    g = load_graph(args.edges, args.features, args.labels)
    res = train(g, cfg, threads=args.threads, checkpoint_path=args.checkpoint)
    save_model(args.out_model, res.model)
    if args.out_emb:
        export_embeddings(res.embeddings, args.out_emb, g.node_ids)
    if args.log:
        write_training_log(args.log, res.log)
    last = res.log[-1].mean_loss if res.log else float("nan")
    print(f"trained on {g.num_nodes} nodes, {g.num_edges} edges; "
          f"{res.stats['steps']} steps; final mean loss {last:.6f}")
    return EXIT_OK


def cmd_infer(args) -> int:
    model, _ = load_model(args.model)
    seed = model.rpr.seed if args.seed is None else args.seed
    _echo(None, model=args.model, seed=seed, threads=args.threads)
    g = load_graph(args.edges, args.features)
    if args.nodes:
        ids = _read_ids(args.nodes)
        idx = _indices(g, ids)
    else:
        ids, idx = list(g.node_ids), None
    emb = infer(model, g, idx, seed=seed, threads=args.threads)
    export_embeddings(emb, args.out, ids)
    print(f"embedded {len(ids)} nodes")
    return EXIT_OK


def cmd_features(args) -> int:
    cfg = _resolve_config(args)
    _echo(cfg, threads=args.threads)
    g = load_graph(args.edges, args.features)
    table = all_structural_features(g, cfg.rpr, cfg.seed, threads=args.threads)
    write_features(args.out, g, table)
    print(f"wrote descriptors for {g.num_nodes} nodes (k={cfg.rpr.k})")
    return EXIT_OK


def cmd_eval_classify(args) -> int:
    _echo(None, train_frac=args.train_frac, repeats=args.repeats, seed=args.seed, l2=args.l2)
    ids, emb = load_embeddings(args.emb)
    g_ids = {v: i for i, v in enumerate(ids)}
    from .graph import LabelSet, read_labels

    table, multilabel = read_labels(args.labels)
    missing = [v for v in table if v not in g_ids]
    if missing:
        raise ValidationError(f"{args.labels}: {len(missing)} labeled nodes have no embedding "
                              f"(first: {missing[0]!r})")
    assignments = [table.get(v) for v in ids]
    labels = LabelSet.from_assignments(assignments, multilabel=multilabel)
    summary = ev.evaluate_embeddings(emb, labels, args.train_frac, args.repeats, args.seed, args.l2)
    print(summary.table())
    if args.out_csv:
        atomic_write_text(args.out_csv, summary.csv())
    return EXIT_OK


def cmd_eval_mirror(args) -> int:
    cfg = _resolve_config(args)
    _echo(cfg, inductive=args.inductive, survival=args.survival)
    g = load_graph(args.edges, args.features)
    if args.inductive:
        dist = ev.inductive_mirror_experiment(g, cfg, args.survival, cfg.seed)
    else:
        dist = ev.mirror_experiment(g, ev.default_train_fn(cfg), cfg.seed)
    print(f"mirrored pairs: {len(dist.mirrored)}  mean distance {dist.mean_mirrored:.6f}")
    print(f"connected pairs: {len(dist.connected)}  mean distance {dist.mean_connected:.6f}")
    print(f"ratio: {dist.ratio:.4f}")
    if args.out_csv:
        dist.write_csv(args.out_csv)
    return EXIT_OK


def cmd_eval_correlation(args) -> int:
    cfg = _resolve_config(args)
    _echo(cfg)
    g = load_graph(args.edges, args.features)
    ids, emb = load_embeddings(args.emb)
    if list(ids) != list(g.node_ids):
        emb = emb[[{v: i for i, v in enumerate(ids)}[v] for v in g.node_ids]] \
            if set(ids) >= set(g.node_ids) else None
        if emb is None:
            raise ValidationError(f"{args.emb}: embeddings do not cover every graph node")
    feats = all_structural_features(g, cfg.rpr, cfg.seed, threads=args.threads)
    corr = ev.structural_correlation(g, feats, emb)
    print(f"pearson  {corr['pearson']:.6f}")
    print(f"spearman {corr['spearman']:.6f}")
    return EXIT_OK


def cmd_perturb(args) -> int:
    _echo(None, survival=args.survival, seed=args.seed)
    g = load_graph(args.edges, args.features)
    out = ev.perturb_network(g, args.survival, np.random.default_rng(args.seed))
    save_graph(out, args.out, args.out_features)
    print(f"kept {out.num_edges} of {g.num_edges} edges")
    return EXIT_OK


# -- parser -------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="rprembed", formatter_class=_formatter,
                     description="Inductive structure-aware node embeddings.")
    parser.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = parser.add_subparsers(dest="command", metavar="COMMAND", parser_class=_Parser)
    sub.required = True

    p = sub.add_parser("train", help="train a model", formatter_class=_formatter,
                       description="Train the generator on a graph and export embeddings.")
    p.add_argument("--edges", required=True, help="edge list file")
    p.add_argument("--features", required=True, help="node content file")
    p.add_argument("--labels", help="node label file (optional)")
    p.add_argument("--out-model", required=True, help="model file to write")
    p.add_argument("--out-emb", help="embedding file to write")
    p.add_argument("--log", help="CSV training log to write")
    p.add_argument("--checkpoint", help="resumable checkpoint path (see checkpoint_every)")
    _add_config_flags(p)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("infer", help="embed nodes with a trained model", formatter_class=_formatter,
                       description="Embed (possibly unseen) nodes of a graph with a trained model.")
    p.add_argument("--model", required=True, help="model file")
    p.add_argument("--edges", required=True, help="edge list file")
    p.add_argument("--features", required=True, help="node content file")
    p.add_argument("--nodes", help="file of node ids to embed (default: every node)")
    p.add_argument("--out", required=True, help="embedding file to write")
    p.add_argument("--seed", type=int, default=None, help="random seed (default: the model's)")
    p.add_argument("--threads", type=int, default=1, help="worker threads for feature extraction")
    p.set_defaults(func=cmd_infer)

    p = sub.add_parser("features", help="compute structural descriptors", formatter_class=_formatter,
                       description="Compute top-k rooted PageRank descriptors for every node.")
    p.add_argument("--edges", required=True, help="edge list file")
    p.add_argument("--features", help="node content file (optional)")
    p.add_argument("--out", required=True, help="descriptor file to write")
    _add_config_flags(p)
    p.set_defaults(func=cmd_features)

    p = sub.add_parser("eval-classify", help="node classification from embeddings",
                       formatter_class=_formatter,
                       description="One-vs-rest logistic regression on stratified random splits.")
    p.add_argument("--emb", required=True, help="embedding file")
    p.add_argument("--labels", required=True, help="node label file")
    p.add_argument("--train-frac", type=float, default=0.3, help="fraction of labeled nodes used to fit")
    p.add_argument("--repeats", type=int, default=10, help="number of random splits")
    p.add_argument("--seed", type=int, default=0, help="random seed for the splits")
    p.add_argument("--l2", type=float, default=1e-4, help="L2 penalty")
    p.add_argument("--out-csv", help="metrics CSV to write")
    p.set_defaults(func=cmd_eval_classify)

    p = sub.add_parser("eval-mirror", help="mirror-network distance experiment",
                       formatter_class=_formatter,
                       description="Compare embedding distances of mirrored and connected pairs.")
    p.add_argument("--edges", required=True, help="edge list file")
    p.add_argument("--features", required=True, help="node content file")
    p.add_argument("--inductive", action="store_true",
                   help="train on two perturbed copies, infer on two more")
    p.add_argument("--survival", type=float, default=0.2,
                   help="edge survival probability for the inductive variant")
    p.add_argument("--out-csv", help="two-column distance CSV to write")
    _add_config_flags(p)
    p.set_defaults(func=cmd_eval_mirror)

    p = sub.add_parser("eval-correlation", help="structural vs embedding distance correlation",
                       formatter_class=_formatter,
                       description="Pearson and Spearman correlation over connected pairs.")
    p.add_argument("--edges", required=True, help="edge list file")
    p.add_argument("--features", required=True, help="node content file")
    p.add_argument("--emb", required=True, help="embedding file")
    _add_config_flags(p)
    p.set_defaults(func=cmd_eval_correlation)

    p = sub.add_parser("perturb", help="randomly drop edges and shuffle content bits",
                       formatter_class=_formatter,
                       description="Keep each edge with probability s; swap one content bit per node.")
    p.add_argument("--edges", required=True, help="edge list file")
    p.add_argument("--features", required=True, help="node content file")
    p.add_argument("--survival", type=float, required=True, help="edge survival probability s")
    p.add_argument("--seed", type=int, default=0, help="random seed")
    p.add_argument("--out", required=True, help="edge list file to write")
    p.add_argument("--out-features", help="content file to write")
    p.set_defaults(func=cmd_perturb)
    return parser


def run(argv: list[str] | None = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    with warnings.catch_warnings():
        warnings.simplefilter("always")
        warnings.showwarning = _show_warning
        try:
            return args.func(args)
        except (ValidationError, FileNotFoundError, IsADirectoryError) as exc:
            print(f"error: {exc}", file=sys.stderr)
            return EXIT_INVALID
        except Exception as exc:  # noqa: BLE001 - top-level runtime failure
            print(f"runtime failure: {type(exc).__name__}: {exc}", file=sys.stderr)
            return EXIT_RUNTIME


def _show_warning(message, category, filename, lineno, file=None, line=None):
    print(f"warning: {message}", file=sys.stderr)


def main() -> None:
    sys.exit(run())
