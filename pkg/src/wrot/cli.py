"""Command-line front end.

Subcommands:

* ``distance``: robust (or plain entropic) transport distance between two
  feature files, optionally with a random feature grouping.
* ``contour``: loss values over the prediction simplex for three labels,
  written as an ``x,y,loss`` CSV (losses normalized so the maximum is 1).
* ``train``: fit the softmax classifier with a transport loss and write a
  checkpoint (plus the grouping file when one is used).
* ``eval``: AUC / mean average precision of a checkpoint on a dataset.

Exit codes: 0 success, 1 bad input or I/O failure, 2 solver non-convergence,
3 training divergence.
"""

from __future__ import annotations

import argparse
import json
import sys

import numpy as np

from .classifier import (
    TrainConfig,
    TrainingDivergedError,
    evaluate,
    load_model,
    save_model,
    sgd_train,
)
from .data_io import (
    load_dataset,
    load_embedding_file,
    load_grouping,
    make_grouping,
    save_grouping,
)
from .frank_wolfe import FWConfig, rot_distance, w22_distance
from .measures import make_measure
from .metric_solvers import DSConfig, KLConfig, PNormConfig
from .rot_loss import LabelSpace, RotLossConfig, rot_loss
from .sinkhorn import SinkhornConfig, SinkhornConvergenceError

__all__ = ["main"]

_FAMILIES = ("pnorm", "kl", "ds", "w22")


def _metric_config(family, k, lambda_m):
    if family == "pnorm":
        return PNormConfig(k=k)
    if family == "kl":
        return KLConfig(lambda_m=lambda_m)
    if family == "ds":
        return DSConfig(lambda_m=lambda_m)
    return None  # w22: fixed identity metric


def _load_points(path):
    from .data_io import _load_features

    return _load_features(path)


def cmd_distance(args) -> int:
    src = make_measure(_load_points(args.src))
    tgt = make_measure(_load_points(args.tgt))
    sink = SinkhornConfig(lambda_beta=args.lambda_beta)
    if args.family == "w22":
        value = w22_distance(src, tgt, sink)
        result = {"value": value, "gap": 0.0, "iterations": 1, "family": "w22"}
        exit_code = 0
    else:
        grouping = None
        if args.r is not None:
            grouping = make_grouping(src.dim, args.r, args.seed)
        config = FWConfig(
            metric=_metric_config(args.family, args.k, args.lambda_m),
            sinkhorn=sink,
            max_iter=args.fw_iters,
            gap_tol=args.gap_tol,
            grouping=grouping,
        )
        solved = rot_distance(src, tgt, config)
        result = {
            "value": solved.value,
            "gap": solved.gap_history[-1],
            "iterations": solved.iterations_used,
            "family": args.family,
        }
        exit_code = 0
        if not solved.converged:
            print(
                f"warning: duality gap {result['gap']:.3e} above tolerance "
                f"{args.gap_tol:.3e} after {solved.iterations_used} iterations",
                file=sys.stderr,
            )
            exit_code = 2
    if args.json:
        print(json.dumps(result))
    else:
        print(f"family     {result['family']}")
        print(f"value      {result['value']:.10g}")
        print(f"gap        {result['gap']:.3e}")
        print(f"iterations {result['iterations']}")
    return exit_code


def cmd_contour(args) -> int:
    label_names = [s for s in args.labels.split(",") if s]
    if len(label_names) != 3:
        raise ValueError("--labels must name exactly 3 labels (comma-separated)")
    names, matrix = load_embedding_file(args.embeddings)
    index = {n: i for i, n in enumerate(names)}
    missing = [n for n in label_names if n not in index]
    if missing:
        raise ValueError(f"labels not in embedding file: {', '.join(missing)}")
    emb = matrix[[index[n] for n in label_names]]
    labels = LabelSpace(embeddings=emb)
    config = RotLossConfig(
        metric=_metric_config(args.family, args.k, args.lambda_m),
        lambda_gamma=args.lambda_gamma,
        fw_iters=args.fw_iters,
        sinkhorn=SinkhornConfig(lambda_beta=args.lambda_beta),
    )
    target = np.array([0.0, 0.0, 1.0])  # third label is the true one

    grid = np.linspace(0.0, 1.0, args.grid_n)
    points = []
    values = []
    for x in grid:
        for y in grid:
            z = 1.0 - x - y
            if z < -1e-12:
                continue  # infeasible corner of the square
            h = np.array([x, y, max(z, 0.0)])
            h = h / h.sum()
            points.append((x, y))
            values.append(rot_loss(h, target, labels, config).value)
    values = np.asarray(values)
    peak = values.max()
    if peak > 0:
        values = values / peak
    with open(args.out, "w", encoding="utf-8") as fh:
        fh.write("x,y,loss\n")
        for (x, y), v in zip(points, values):
            fh.write(f"{x:.6f},{y:.6f},{v:.10g}\n")
    print(f"wrote {len(points)} grid losses to {args.out}")
    return 0


def _train_label_space(args) -> tuple[LabelSpace, list[str]]:
    names, matrix = load_embedding_file(args.embeddings)
    grouping = None
    if args.r is not None:
        grouping = make_grouping(matrix.shape[1], args.r, args.seed)
    return LabelSpace(embeddings=matrix, grouping=grouping), names


def cmd_train(args) -> int:
    labels_space, names = _train_label_space(args)
    dataset = load_dataset(args.features, args.labels, label_names=names)
    loss = RotLossConfig(
        metric=_metric_config(args.family, args.k, args.lambda_m),
        lambda_gamma=args.lambda_gamma,
        sinkhorn=SinkhornConfig(lambda_beta=args.lambda_beta),
    )
    config = TrainConfig(
        loss=loss,
        learning_rate=args.lr,
        epochs=args.epochs,
        weight_decay=args.weight_decay,
        seed=args.seed,
    )
    result = sgd_train(dataset, labels_space, config)
    for i, (loss_val, secs) in enumerate(
        zip(result.epoch_losses, result.epoch_seconds)
    ):
        print(f"epoch {i:3d}  loss {loss_val:.6f}  time {secs:.3f}s")
    save_model(result.model, args.model_out)
    print(f"wrote model to {args.model_out}")
    if labels_space.grouping is not None and args.grouping_out:
        save_grouping(labels_space.grouping, args.grouping_out)
        print(f"wrote grouping to {args.grouping_out}")
    return 0


def cmd_eval(args) -> int:
    model = load_model(args.model_in)
    dataset = load_dataset(args.features, args.labels, num_labels=model.n_labels)
    if args.grouping_in:
        load_grouping(args.grouping_in)  # validates the companion file
    metrics = evaluate(model, dataset)
    print(f"auc {metrics.auc:.6f}")
    print(f"map {metrics.mean_average_precision:.6f}")
    if args.metrics_json:
        with open(args.metrics_json, "w", encoding="utf-8") as fh:
            json.dump(
                {"auc": metrics.auc, "map": metrics.mean_average_precision}, fh
            )
            fh.write("\n")
    return 0


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="wrot", description="Robust transport distances, losses, and training"
    )
    sub = parser.add_subparsers(dest="command", required=True)

    def add_family(p):
        p.add_argument("--family", choices=_FAMILIES, default="pnorm")
        p.add_argument("--k", type=int, default=1, help="p-norm index (p=2k/(2k-1))")
        p.add_argument("--lambda-m", type=float, default=1.0, dest="lambda_m")
        p.add_argument("--lambda-beta", type=float, default=0.2, dest="lambda_beta")

    p = sub.add_parser("distance", help="robust distance between two point clouds")
    p.add_argument("--src", required=True)
    p.add_argument("--tgt", required=True)
    add_family(p)
    p.add_argument("--r", type=int, default=None, help="group count for feature grouping")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--fw-iters", type=int, default=200, dest="fw_iters")
    p.add_argument("--gap-tol", type=float, default=1e-6, dest="gap_tol")
    p.add_argument("--json", action="store_true")
    p.set_defaults(func=cmd_distance)

    p = sub.add_parser("contour", help="loss surface over a 3-label simplex")
    p.add_argument("--labels", required=True, help="three comma-separated label names")
    p.add_argument("--embeddings", required=True)
    add_family(p)
    p.add_argument("--lambda-gamma", type=float, default=0.02, dest="lambda_gamma")
    p.add_argument("--fw-iters", type=int, default=1, dest="fw_iters")
    p.add_argument("--grid-n", type=int, default=101, dest="grid_n")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_contour)

    p = sub.add_parser("train", help="train the softmax classifier")
    p.add_argument("--features", required=True)
    p.add_argument("--labels", required=True)
    p.add_argument("--embeddings", required=True)
    add_family(p)
    p.add_argument("--r", type=int, default=None)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--lr", type=float, default=0.01)
    p.add_argument("--epochs", type=int, default=50)
    p.add_argument("--lambda-gamma", type=float, default=0.02, dest="lambda_gamma")
    p.add_argument("--weight-decay", type=float, default=0.0005, dest="weight_decay")
    p.add_argument("--model-out", required=True, dest="model_out")
    p.add_argument("--grouping-out", default=None, dest="grouping_out")
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("eval", help="evaluate a checkpoint")
    p.add_argument("--model-in", required=True, dest="model_in")
    p.add_argument("--features", required=True)
    p.add_argument("--labels", required=True)
    p.add_argument("--grouping-in", default=None, dest="grouping_in")
    p.add_argument("--metrics-json", default=None, dest="metrics_json")
    p.set_defaults(func=cmd_eval)
    return parser


def main(argv=None) -> int:
    parser = _build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        # argparse exits 0 for --help, 2 for usage errors; usage errors are
        # bad input in this tool's exit-code scheme.
        return 0 if exc.code == 0 else 1
    try:
        return args.func(args)
    except TrainingDivergedError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 3
    except SinkhornConvergenceError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except (ValueError, OSError, OverflowError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
