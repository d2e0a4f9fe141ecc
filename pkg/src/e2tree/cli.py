"""Command line: ``e2tree {fit,explain,evaluate,summarize,run} -c CONFIG``.

Exit codes: 0 success, 1 invalid input or config, 2 file system error,
3 internal invariant violation.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
import time
from dataclasses import replace
from pathlib import Path

from .config import load_config
from .dataset import format_summary, summarize
from .export import read_matrix_bin
from .forest import Forest
from .pipeline import (
    InvariantError,
    evaluate,
    explain,
    fit,
    format_fidelity,
    format_metrics,
    load_data,
    write_evaluate,
    write_explain,
    write_fit,
)

EXIT_OK, EXIT_INVALID, EXIT_IO, EXIT_INVARIANT = 0, 1, 2, 3

log = logging.getLogger("e2tree")


def _config(args):
    cfg = load_config(args.config, args.set or ())
    if args.out is not None:
        cfg = replace(cfg, out_dir=Path(args.out).resolve())
    if args.n_jobs is not None:
        cfg = replace(cfg, n_jobs=args.n_jobs)
    return cfg


def cmd_summarize(args) -> int:
    cfg = _config(args)
    data, split = load_data(cfg)
    print(f"rows: {data.n}  predictors: {data.p}  train: {len(split.train)}  test: {len(split.test)}")
    print(format_summary(summarize(data)), end="")
    return EXIT_OK


def cmd_fit(args) -> int:
    cfg = _config(args)
    data, split = load_data(cfg)
    t0 = time.perf_counter()
    fr = fit(cfg, data, split)
    log.info("fit %d trees in %.2fs", fr.forest.n_trees, time.perf_counter() - t0)
    write_fit(cfg.out_dir, fr)
    print(format_metrics(fr), end="")
    return EXIT_OK


def _load_forest(cfg, args, data):
    path = Path(args.forest) if getattr(args, "forest", None) else cfg.out_dir / "forest.json"
    try:
        return Forest.load(path, data)
    except json.JSONDecodeError as e:
        raise ValueError(f"{path}: not valid JSON ({e})") from e
    except KeyError as e:
        raise ValueError(f"{path}: missing field {e}") from e


def cmd_explain(args) -> int:
    cfg = _config(args)
    data, _ = load_data(cfg)
    forest = _load_forest(cfg, args, data)
    er = explain(cfg, forest, data)
    k = cfg.k or len(er.tree.terminals())
    order = evaluate(er.O, er.O, min(k, er.O.shape[0])).labels_o.order
    write_explain(cfg.out_dir, er, order)
    print(f"terminal nodes: {len(er.tree.terminals())}")
    print((cfg.out_dir / "node_table.txt").read_text(), end="")
    return EXIT_OK


def cmd_evaluate(args) -> int:
    cfg = _config(args)
    out = cfg.out_dir
    O = read_matrix_bin(Path(args.o) if args.o else out / "O.bin")
    Ohat = read_matrix_bin(Path(args.ohat) if args.ohat else out / "Ohat.bin")
    tree_json = Path(args.tree) if args.tree else out / "e2tree.json"
    row_ids = list(range(O.shape[0]))
    k = args.k or cfg.k
    if tree_json.is_file():
        meta = json.loads(tree_json.read_text())
        k = k or meta["n_terminal"]
        root = next(nd for nd in meta["nodes"] if nd["t"] == 1)
        if len(root["rows"]) == O.shape[0]:
            row_ids = root["rows"]
    if k is None:
        raise ValueError("k not given and no e2tree.json to take the terminal count from")
    report = evaluate(O, Ohat, int(k))
    write_evaluate(out, report, row_ids)
    print(format_fidelity(report), end="")
    return EXIT_OK


def cmd_run(args) -> int:
    for step in (cmd_fit, cmd_explain, cmd_evaluate):
        code = step(args)
        if code != EXIT_OK:
            return code
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("-c", "--config", required=True, help="INI run configuration")
    common.add_argument(
        "--set", action="append", metavar="SECTION.KEY=VALUE", help="override a config value (repeatable)"
    )
    common.add_argument("-o", "--out", help="output directory (overrides [output] dir)")
    common.add_argument("-j", "--n-jobs", type=int, help="worker processes for forest fitting")
    common.add_argument("-v", "--verbose", action="store_true")

    parser = argparse.ArgumentParser(prog="e2tree", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)
    sub.add_parser("summarize", parents=[common], help="describe the dataset").set_defaults(func=cmd_summarize)
    sub.add_parser("fit", parents=[common], help="fit the forest, write forest.json and metrics").set_defaults(
        func=cmd_fit
    )
    p = sub.add_parser("explain", parents=[common], help="grow the surrogate tree, write O, Ohat and plots")
    p.add_argument("--forest", help="forest.json (default: in the output directory)")
    p.set_defaults(func=cmd_explain)
    p = sub.add_parser("evaluate", parents=[common], help="cluster O and Ohat and report the FMI")
    p.add_argument("--o", help="O.bin (default: in the output directory)")
    p.add_argument("--ohat", help="Ohat.bin (default: in the output directory)")
    p.add_argument("--tree", help="e2tree.json used for the default k")
    p.add_argument("-k", type=int, help="number of clusters (default: surrogate terminal count)")
    p.set_defaults(func=cmd_evaluate)
    p = sub.add_parser("run", parents=[common], help="fit, explain and evaluate in one go")
    p.add_argument("-k", type=int, help="number of clusters (default: surrogate terminal count)")
    p.set_defaults(func=cmd_run, forest=None, o=None, ohat=None, tree=None)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(
        level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s: %(message)s"
    )
    try:
        return args.func(args)
    except InvariantError as e:
        print(f"e2tree: internal error: {e}", file=sys.stderr)
        return EXIT_INVARIANT
    except OSError as e:
        print(f"e2tree: {e}", file=sys.stderr)
        return EXIT_IO
    except ValueError as e:
        print(f"e2tree: {e}", file=sys.stderr)
        return EXIT_INVALID


if __name__ == "__main__":
    sys.exit(main())
