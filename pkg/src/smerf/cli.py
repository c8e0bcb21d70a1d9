"""Command-line interface.

Exit codes: 0 success, 1 usage error, 2 data error, 3 internal error.
Machine-readable CSV tables go to stdout (or ``--table``); the human
summary goes to stderr. ``SMERF_THREADS`` caps worker threads unless
``--threads`` is given.
"""

from __future__ import annotations

import argparse
import csv
import io as _io
import logging
import sys
from dataclasses import replace
from pathlib import Path
from typing import List, Optional, Sequence

import numpy as np

from . import io
from .core import AXIS, BINARY, BOOTSTRAP, SUBSAMPLE, Hyperparams, NoCoveredPairs, SmerfError
from .experiments import run_linkpred, theory_sweep
from .forest import make_grid, oob_rmse, predict_matrix, train_forest, tune
from .importance import feature_importance
from .metrics import evaluate_distances
from .reductions import absolute_distance, indicator_distance, squared_half_distance
from .simdata import gen_sbm_network, generate

log = logging.getLogger("smerf")

EXIT_OK, EXIT_USAGE, EXIT_DATA, EXIT_INTERNAL = 0, 1, 2, 3
_MODES = {"rf": AXIS, "binary": BINARY}


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


# ---------------------------------------------------------------------------
# output helpers
# ---------------------------------------------------------------------------


def _emit_table(args, header: Sequence[str], rows: List[Sequence]) -> None:
    buf = _io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    for r in rows:
        w.writerow([repr(float(v)) if isinstance(v, (float, np.floating)) else v for v in r])
    text = buf.getvalue()
    if getattr(args, "table", None):
        Path(args.table).write_text(text)
    else:
        sys.stdout.write(text)


def _say(msg: str) -> None:
    print(msg, file=sys.stderr)


# ---------------------------------------------------------------------------
# shared flags
# ---------------------------------------------------------------------------


def _add_forest_flags(p: argparse.ArgumentParser, trees: int = 500) -> None:
    p.add_argument("--trees", type=int, default=trees, help="number of trees (default %(default)s)")
    p.add_argument("--d", type=int, default=None, help="projections tried per node (default round(sqrt(p)))")
    p.add_argument("--min-parent", type=int, default=2)
    p.add_argument("--max-depth", type=int, default=None)
    p.add_argument("--mode", choices=sorted(_MODES), default="rf",
                   help="rf: axis-aligned features; binary: sparse +-1 projections")
    p.add_argument("--lam", type=float, default=3.0, help="mean nonzeros per binary projection")
    p.add_argument("--sampling", choices=(BOOTSTRAP, SUBSAMPLE), default=BOOTSTRAP)
    p.add_argument("--subsample-size", type=float, default=None,
                   help="bag size for subsampling: count if >= 1, else fraction of n")


def _add_common(p: argparse.ArgumentParser) -> None:
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--threads", type=int, default=None, help="worker threads (default SMERF_THREADS or 1)")
    p.add_argument("--table", default=None, help="write the CSV table here instead of stdout")


def _hyperparams(args) -> Hyperparams:
    size = args.subsample_size
    if size is not None and size >= 1:
        size = int(size)
    return Hyperparams(num_trees=args.trees, d=args.d, min_parent=args.min_parent,
                       max_depth=args.max_depth, sampling=args.sampling, subsample_size=size,
                       projection=_MODES[args.mode], lam=args.lam, seed=args.seed)


def _training_data(args):
    """Features, distance matrix and (for the regression reduction) responses."""
    have_dist = args.dist is not None
    have_labels = args.labels is not None or args.reduction is not None
    if have_dist == have_labels:
        raise UsageError("give exactly one of --dist or --labels with --reduction")
    if have_labels and (args.labels is None or args.reduction is None):
        raise UsageError("--labels and --reduction go together")
    X = io.read_matrix(args.features)
    responses = None
    if have_dist:
        Z = io.read_matrix(args.dist)
    else:
        y = io.read_vector(args.labels)
        if y.shape[0] != X.shape[0]:
            raise SmerfError(f"{args.labels}: {y.shape[0]} labels for {X.shape[0]} feature rows")
        if args.reduction == "class":
            Z = indicator_distance(y)
        else:
            if y.dtype.kind not in "fi":
                raise SmerfError(f"{args.labels}: the {args.reduction} reduction needs numeric responses")
            Z = squared_half_distance(y) if args.reduction == "reg" else absolute_distance(y)
            if args.reduction == "reg":
                responses = y
    if Z.shape != (X.shape[0], X.shape[0]):
        raise SmerfError(f"distance matrix {Z.shape} does not match {X.shape[0]} feature rows")
    return X, Z, responses


def _add_training_inputs(p: argparse.ArgumentParser) -> None:
    p.add_argument("--features", required=True, help="n x p feature CSV (optional header)")
    p.add_argument("--dist", help="n x n distance CSV")
    p.add_argument("--labels", help="one label or response per line")
    p.add_argument("--reduction", choices=("class", "reg", "abs"),
                   help="class: 0/1 indicator; reg: (y_i - y_j)^2 / 2; abs: |y_i - y_j|")


def _oob_rows(forest, X):
    try:
        rep = oob_rmse(forest, X)
        return rep.rmse, rep.covered_pairs, rep.total_pairs
    except NoCoveredPairs:
        n = forest.n_train
        return float("nan"), 0, n * (n - 1) // 2


# ---------------------------------------------------------------------------
# commands
# ---------------------------------------------------------------------------


def cmd_simulate(args) -> int:
    if args.n < 2:
        raise UsageError("pairwise data needs --n >= 2")
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    if args.family == "sbm":
        A, attrs = gen_sbm_network(args.n, args.blocks, args.p_in, args.p_out, args.attr_noise, args.seed)
        io.write_matrix(out / "features.csv", attrs, [f"a{j + 1}" for j in range(attrs.shape[1])])
        io.write_edges(out / "edges.csv", A)
        io.write_matrix(out / "dist.csv", 1.0 - A)
        _say(f"sbm: {args.n} nodes, {int(A.sum() // 2)} edges -> {out}")
        return EXIT_OK
    data = generate(args.family, args.n, args.seed)
    io.write_matrix(out / "features.csv", data.X, [f"x{j + 1}" for j in range(data.X.shape[1])])
    io.write_matrix(out / "dist.csv", data.Z)
    if data.Q is not None:
        io.write_matrix(out / "sim.csv", data.Q)
    if data.family == "theory":
        io.write_matrix(out / "responses.csv", data.y[:, None], ["y"])
    _say(f"{args.family}: {args.n} points x {data.X.shape[1]} features -> {out}")
    return EXIT_OK


def cmd_train(args) -> int:
    X, Z, responses = _training_data(args)
    hp = _hyperparams(args)
    forest = train_forest(X, Z, hp, responses=responses, n_jobs=args.threads)
    io.save_model(forest, args.out)
    rmse, covered, total = _oob_rows(forest, X)
    _emit_table(args, ["metric", "value"],
                [["oob_rmse", rmse], ["covered_pairs", covered], ["total_pairs", total]])
    _say(f"trained {hp.num_trees} trees on {X.shape[0]} points; OOB RMSE {rmse:.6g} "
         f"over {covered}/{total} pairs -> {args.out}")
    return EXIT_OK


def cmd_tune(args) -> int:
    X, Z, responses = _training_data(args)
    base = _hyperparams(args)
    grid = make_grid(X.shape[1], base.projection, base, exponents=args.exponents, min_parents=args.min_parents)
    best, reports, forest = tune(X, Z, grid, seed=args.seed, responses=responses,
                                 n_jobs=args.threads, return_forest=True)
    rows = [[hp.d, hp.min_parent, rep.rmse, rep.covered_pairs] for hp, rep in zip(grid, reports)]
    _emit_table(args, ["d", "min_parent", "oob_rmse", "covered_pairs"], rows)
    if args.out:
        io.save_model(forest, args.out)
    _say(f"best d={best.d} min_parent={best.min_parent} of {len(grid)} settings")
    return EXIT_OK


def cmd_predict(args) -> int:
    forest = io.load_model(args.model)
    X = io.read_matrix(args.features)
    pred = predict_matrix(forest, X, n_jobs=args.threads)
    io.write_matrix(args.out, pred)
    _say(f"predicted {X.shape[0]} x {X.shape[0]} distances -> {args.out}")
    return EXIT_OK


def cmd_evaluate(args) -> int:
    pred = io.read_matrix(args.pred)
    truth = io.read_matrix(args.truth)
    rep = evaluate_distances(pred, truth)
    rows = [[k, v] for k, v in rep.values.items()] + [[k, v] for k, v in rep.counts.items()]
    _emit_table(args, ["metric", "value"], rows)
    _say(", ".join(f"{k}={v:.4f}" for k, v in rep.values.items()))
    return EXIT_OK


def cmd_importance(args) -> int:
    forest = io.load_model(args.model)
    names = None
    if args.features:
        names = io.read_header(args.features)
    if names is None or len(names) != forest.n_features:
        names = [f"x{j + 1}" for j in range(forest.n_features)]
    imp = feature_importance(forest)
    _emit_table(args, ["feature", "raw", "normalized"],
                [[n, r, v] for n, r, v in zip(names, imp.raw, imp.normalized)])
    top = np.argsort(-imp.normalized, kind="stable")[:5]
    _say("top features: " + ", ".join(names[i] for i in top))
    return EXIT_OK


def cmd_linkpred(args) -> int:
    attrs = io.read_matrix(args.attributes)
    A = io.read_edges(args.edges, n=attrs.shape[0])
    hp = _hyperparams(args)
    grid = None
    if args.tune:
        grid = make_grid(attrs.shape[1], hp.projection, hp)
    rows = []
    for tp in args.tp:
        if not 0.0 < tp < 1.0:
            raise UsageError("--tp values must lie in (0, 1)")
        reps = [run_linkpred(A, attrs, tp, args.seed + r, hp=hp, grid=grid,
                             zero_diagonal=args.zero_diagonal, include_cross=args.include_cross,
                             n_jobs=args.threads)
                for r in range(args.replicates)]
        roc = np.array([r["auc_roc"] for r in reps])
        pr = np.array([r["auc_pr"] for r in reps])
        prev = np.array([r["prevalence"] for r in reps])
        rows.append([tp, roc.mean(), roc.std(), pr.mean(), pr.std(), prev.mean(), args.replicates])
        _say(f"tp={tp:.2f}: AUC-ROC {roc.mean():.3f} +- {roc.std():.3f}, "
             f"AUC-PR {pr.mean():.3f} +- {pr.std():.3f} (prevalence {prev.mean():.3f})")
    _emit_table(args, ["tp", "auc_roc_mean", "auc_roc_std", "auc_pr_mean", "auc_pr_std",
                       "prevalence", "replicates"], rows)
    return EXIT_OK


def cmd_theory_check(args) -> int:
    if args.kmin < 1 or args.kmax < args.kmin:
        raise UsageError("need 1 <= --kmin <= --kmax")
    rows = theory_sweep(range(args.kmin, args.kmax + 1), seed=args.seed, num_trees=args.trees,
                        n_test=args.test, d=args.d, n_jobs=args.threads)
    _emit_table(args, ["n", "s_n"], rows)
    for n, s in rows:
        _say(f"n={n:6d}  s_n={s:.5f}")
    return EXIT_OK


# ---------------------------------------------------------------------------
# parser
# ---------------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="smerf", description="Similarity and metric random forests.")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("simulate", help="write a synthetic dataset")
    p.add_argument("--family", required=True, choices=("regression", "bilinear", "radial", "theory", "sbm"))
    p.add_argument("--n", type=int, required=True)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True, help="output directory")
    p.add_argument("--blocks", type=int, default=3, help="SBM blocks")
    p.add_argument("--p-in", type=float, default=0.5)
    p.add_argument("--p-out", type=float, default=0.05)
    p.add_argument("--attr-noise", type=float, default=0.1)
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("train", help="train a forest and save the model")
    _add_training_inputs(p)
    _add_forest_flags(p)
    _add_common(p)
    p.add_argument("--out", required=True, help="model file")
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("tune", help="choose d and min-parent by out-of-bag RMSE")
    _add_training_inputs(p)
    _add_forest_flags(p)
    _add_common(p)
    p.add_argument("--exponents", type=float, nargs="+", default=[0.25, 0.5, 0.75, 1.0, 1.5],
                   help="grid of d = p^a")
    p.add_argument("--min-parents", type=int, nargs="+", default=[2, 4, 8])
    p.add_argument("--out", default=None, help="save the best model here")
    p.set_defaults(func=cmd_tune)

    p = sub.add_parser("predict", help="predict pairwise distances between rows of a feature CSV")
    p.add_argument("--model", required=True)
    p.add_argument("--features", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--threads", type=int, default=None)
    p.set_defaults(func=cmd_predict)

    p = sub.add_parser("evaluate", help="RMSE, Spearman and mAP-10 of predicted vs true distances")
    p.add_argument("--pred", required=True)
    p.add_argument("--truth", required=True)
    p.add_argument("--table", default=None)
    p.set_defaults(func=cmd_evaluate)

    p = sub.add_parser("importance", help="split-gain feature importance of a saved model")
    p.add_argument("--model", required=True)
    p.add_argument("--features", default=None, help="feature CSV whose header names the columns")
    p.add_argument("--table", default=None)
    p.set_defaults(func=cmd_importance)

    p = sub.add_parser("linkpred", help="link prediction from node attributes")
    p.add_argument("--edges", required=True, help="source,target edge list (0-based ids)")
    p.add_argument("--attributes", required=True, help="n x q attribute CSV")
    p.add_argument("--tp", type=float, nargs="+", default=[0.5], help="training node proportions")
    p.add_argument("--replicates", type=int, default=5)
    p.add_argument("--zero-diagonal", action="store_true", help="set z_ii = 0 instead of 1 - a_ii")
    p.add_argument("--include-cross", action="store_true", help="also score train-test node pairs")
    p.add_argument("--tune", action="store_true", help="pick d and min-parent by OOB RMSE per replicate")
    _add_forest_flags(p)
    _add_common(p)
    p.set_defaults(func=cmd_linkpred)

    p = sub.add_parser("theory-check", help="s_n convergence sweep on the additive model")
    p.add_argument("--kmin", type=int, default=4)
    p.add_argument("--kmax", type=int, default=12)
    p.add_argument("--trees", type=int, default=1000)
    p.add_argument("--test", type=int, default=200)
    p.add_argument("--d", type=int, default=1)
    _add_common(p)
    p.set_defaults(func=cmd_theory_check)
    return parser


def main(argv: Optional[Sequence[str]] = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except UsageError as exc:
        _say(f"smerf {args.command}: error: {exc}")
        return EXIT_USAGE
    except (SmerfError, ValueError, OSError) as exc:
        _say(f"smerf {args.command}: {exc}")
        return EXIT_DATA
    except Exception as exc:  # noqa: BLE001
        log.exception("internal error")
        _say(f"smerf {args.command}: internal error: {exc}")
        return EXIT_INTERNAL


if __name__ == "__main__":
    sys.exit(main())
