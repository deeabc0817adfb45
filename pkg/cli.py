"""
Command-line front end.

    python cli.py simulate --spec poisson_f1 --n 3000 --seed 1 --out d.csv
    python cli.py fit --data d.csv --loss poisson --mode newton --out m.json
    python cli.py predict --model m.json --data d.csv --out p.csv
    python cli.py evaluate --model m.json --data d.csv
    python cli.py tune --data d.csv --loss poisson --mode newton --out scores.csv
    python cli.py benchmark --spec multi_classif_fht --n 3000 --splits 10 --out results.csv
    python cli.py trace --spec msr_r --n 6000 --mode newton --out trace.csv

Exit codes: 0 success, 1 usage, 2 bad data or configuration, 3 numerical failure.
"""
import argparse
import logging
import os
import sys
from typing import Optional, Sequence

import numpy as np
import pandas as pd

from boosting import FitConfig, UpdateMode, fit, load_model, predict, save_model
from config import configure_logging
from datagen import loss_for, named_simspec, simulate, SIM_DATASETS
from dataset import (
    Dataset, default_loss, ingest_csv, ingest_features_csv, prediction_frame, write_csv, write_frame,
)
from exceptions import NumericalError, TriboostError
from gridSearch import (
    DEFAULT_METHODS, TRACE_LEARNING_RATES, BenchmarkMethod, BenchmarkPlan, TuningGrid, benchmark, grid_search,
    trace_run,
)
from losses import LossFamily, LossSpec
from tree import LeafConstraint
from validation import SplitPlan, neg_log_likelihood, validation_score

logger = logging.getLogger("triboost")

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_DATA = 2
EXIT_NUMERIC = 3


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def _floats(text):
    try:
        return tuple(float(v) for v in text.split(",") if v.strip())
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated numbers, got {text!r}")


def _modes(text):
    try:
        return tuple(BenchmarkMethod.parse(v) for v in text.split(",") if v.strip())
    except ValueError:
        raise argparse.ArgumentTypeError(
            f"modes must be gradient, newton or hybrid, optionally as mode:constraint, got {text!r}"
        )


# ---------------------------------------------------------------------------
# shared argument groups
# ---------------------------------------------------------------------------

def _add_loss_args(p):
    p.add_argument("--loss", choices=[f.value for f in LossFamily],
                   help="Loss family (defaults to the simulated dataset's own loss with --spec)")
    p.add_argument("--num-classes", type=int, default=None, help="K for the multiclass loss")
    p.add_argument("--gamma", type=float, default=10.0, help="Gamma shape parameter")
    p.add_argument("--sigma", type=float, default=1.0, help="Tobit latent standard deviation")
    p.add_argument("--y-lower", type=float, default=None, help="Tobit lower threshold (default: min response)")
    p.add_argument("--y-upper", type=float, default=None, help="Tobit upper threshold (default: max response)")


def _add_source_args(p):
    p.add_argument("--data", help="Input CSV with a header row")
    p.add_argument("--target", default="y", help="Response column name")
    p.add_argument("--one-hot", action="store_true", help="Expand string columns into 0/1 dummies")
    p.add_argument("--spec", choices=sorted(SIM_DATASETS), help="Simulate this dataset instead of reading --data")
    p.add_argument("--n", type=int, default=3000, help="Simulated sample size")
    p.add_argument("--data-seed", type=int, default=0, help="Seed of the simulated dataset")


def _add_tree_args(p):
    p.add_argument("--max-depth", type=int, default=5)
    p.add_argument("--constraint", choices=[c.value for c in LeafConstraint], default=None,
                   help="Leaf constraint (default: count for gradient/hybrid, equivalent for newton)")


def _add_grid_args(p):
    _add_tree_args(p)
    p.add_argument("--iterations-max", type=int, default=1000)
    p.add_argument("--learning-rates", type=_floats, default=(1.0, 0.1, 0.01, 0.001))
    p.add_argument("--min-leaf-values", type=_floats, default=(1.0, 5.0, 25.0, 100.0))
    p.add_argument("--untuned", action="store_true", help="Fix the leaf minimum at its default of 1")


def _grid_from_args(args):
    kwargs = dict(
        iterations_max=args.iterations_max,
        learning_rates=args.learning_rates,
        constraint_mode=args.constraint,
        max_depth=args.max_depth,
    )
    if args.untuned:
        return TuningGrid.untuned(**kwargs)
    return TuningGrid(min_per_leaf_values=args.min_leaf_values, **kwargs)


def _load_source(args):
    """Dataset and its loss from --data or --spec."""
    spec_name = getattr(args, "spec", None)
    if spec_name:
        spec = named_simspec(spec_name, args.n, args.data_seed, gamma=args.gamma, sigma=args.sigma,
                             num_classes=args.num_classes or 5)
        dataset = simulate(spec)
        if args.loss is None:
            return dataset, loss_for(dataset, args.num_classes)
        return dataset, _loss_from_args(args, dataset)
    if not args.data:
        raise argparse.ArgumentTypeError("one of --data or --spec is required")
    if args.loss is None:
        raise argparse.ArgumentTypeError("--loss is required with --data")
    dataset = ingest_csv(args.data, args.target, one_hot=args.one_hot)
    return dataset, _loss_from_args(args, dataset)


def _loss_from_args(args, dataset: Dataset) -> LossSpec:
    return default_loss(
        dataset, args.loss, num_classes=args.num_classes, gamma=args.gamma, sigma=args.sigma,
        y_lower=args.y_lower, y_upper=args.y_upper,
    )


def _model_features(model, path, one_hot, target):
    features, names = ingest_features_csv(path, one_hot=one_hot, drop=target)
    if model.feature_names:
        placeholder = Dataset(features, np.zeros(features.shape[0]), names)
        features = placeholder.align(model.feature_names, model.dummy_columns or ()).features
    return features


# ---------------------------------------------------------------------------
# commands
# ---------------------------------------------------------------------------

def cmd_simulate(args):
    spec = named_simspec(
        args.spec, args.n, args.seed, gamma=args.gamma, sigma=args.sigma,
        num_classes=args.num_classes, literal_fht_sign=args.literal_fht_sign,
    )
    dataset = simulate(spec)
    write_csv(dataset, args.out)
    if "y_lower" in dataset.meta:
        logger.info("Censoring thresholds: y_lower=%.17g, y_upper=%.17g",
                    dataset.meta["y_lower"], dataset.meta["y_upper"])
    return EXIT_OK


def cmd_fit(args):
    dataset, loss = _load_source(args)
    config = FitConfig.for_mode(
        args.mode,
        num_iterations=args.iterations,
        learning_rate=args.learning_rate,
        max_depth=args.max_depth,
        min_per_leaf=args.min_leaf,
        leaf_constraint=args.constraint,
        n_jobs=args.jobs,
    )
    model = fit(dataset, loss, config)
    save_model(model, args.out)
    return EXIT_OK


def cmd_predict(args):
    model = load_model(args.model)
    features = _model_features(model, args.data, args.one_hot, args.target)
    scores = predict(model, features, upto=args.upto)
    write_frame(prediction_frame(model.loss, scores), args.out)
    logger.info("Wrote %d predictions to %s", scores.shape[0], args.out)
    return EXIT_OK


def cmd_evaluate(args):
    model = load_model(args.model)
    dataset = ingest_csv(args.data, args.target, one_hot=args.one_hot)
    if model.feature_names:
        dataset = dataset.align(model.feature_names, model.dummy_columns or ())
    scores = predict(model, dataset.features, upto=args.upto)
    if model.loss.family.is_classification:
        name = "error_rate"
        value = validation_score(model.loss, scores, dataset.response)
    else:
        name = "neg_log_likelihood"
        value = neg_log_likelihood(model.loss, scores, dataset.response)
    print(f"{name},{value:.17g}")
    return EXIT_OK


def _partitions(args, dataset):
    plan = SplitPlan(seed=args.seed)
    return [dataset.subset(idx) for idx in plan.split(dataset.n_rows)]


def cmd_tune(args):
    dataset, loss = _load_source(args)
    train, valid, test = _partitions(args, dataset)
    grid = _grid_from_args(args)
    config, model, score_table = grid_search(train, valid, loss, grid, args.mode, n_jobs=args.jobs)
    write_frame(score_table, args.out)
    test_score = validation_score(loss, predict(model, test.features), test.response)
    print(
        f"mode={config.mode.value},learning_rate={config.learning_rate:g},"
        f"min_leaf={config.tree.min_per_leaf:g},M={config.num_iterations},test_score={test_score:.17g}"
    )
    if args.model_out:
        save_model(model, args.model_out)
    return EXIT_OK


def _trace_rate(args):
    if args.fixed_lr is not None:
        return args.fixed_lr
    name = getattr(args, "spec", None)
    if name in TRACE_LEARNING_RATES:
        return TRACE_LEARNING_RATES[name]
    raise argparse.ArgumentTypeError(
        f"--fixed-lr is required; fixed rates are known for {sorted(TRACE_LEARNING_RATES)}"
    )


def cmd_benchmark(args):
    dataset, loss = _load_source(args)
    grid = _grid_from_args(args)
    plan = BenchmarkPlan(
        splits=args.splits,
        seed=args.seed,
        modes=args.modes,
        trace_learning_rate=_trace_rate(args) if args.trace_dir else None,
    )
    results, traces = benchmark(dataset, loss, grid, plan, n_jobs=args.jobs)
    write_frame(results, args.out)
    if args.trace_dir:
        os.makedirs(args.trace_dir, exist_ok=True)
        for (split_id, label), trace in sorted(traces.items()):
            name = label.replace(":", "_")
            write_frame(trace, os.path.join(args.trace_dir, f"trace_{name}_split{split_id}.csv"))
    logger.info("Wrote %d result rows to %s", len(results), args.out)
    return EXIT_OK


def cmd_trace(args):
    dataset, loss = _load_source(args)
    train, _, test = _partitions(args, dataset)
    config = FitConfig.for_mode(
        args.mode,
        num_iterations=args.iterations,
        learning_rate=_trace_rate(args),
        max_depth=args.max_depth,
        min_per_leaf=args.min_leaf,
        leaf_constraint=args.constraint,
        n_jobs=args.jobs,
    )
    write_frame(trace_run(train, test, loss, config), args.out)
    return EXIT_OK


def build_parser():
    parser = _Parser(prog="triboost", description="Gradient, Newton and hybrid tree boosting.")
    verbosity = parser.add_mutually_exclusive_group()
    verbosity.add_argument("-v", "--verbose", action="store_true", help="Debug logging")
    verbosity.add_argument("-q", "--quiet", action="store_true", help="Warnings only")
    parser.add_argument("--jobs", type=int, default=None,
                        help="Worker count (default: TRIBOOST_THREADS, 0 = all cores)")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("simulate", help="Write a simulated dataset")
    p.add_argument("--spec", required=True, choices=sorted(SIM_DATASETS))
    p.add_argument("--n", type=int, default=3000)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--gamma", type=float, default=10.0)
    p.add_argument("--sigma", type=float, default=1.0)
    p.add_argument("--num-classes", type=int, default=5)
    p.add_argument("--literal-fht-sign", action="store_true",
                   help="Use -1 for every sign term of the binary FHT score")
    p.add_argument("--out", required=True)
    p.set_defaults(handler=cmd_simulate)

    p = sub.add_parser("fit", help="Fit a model and save it as JSON")
    _add_source_args(p)
    _add_loss_args(p)
    _add_tree_args(p)
    p.add_argument("--mode", choices=[m.value for m in UpdateMode], default=UpdateMode.NEWTON.value)
    p.add_argument("--iterations", type=int, default=100)
    p.add_argument("--learning-rate", type=float, default=0.1)
    p.add_argument("--min-leaf", type=float, default=1.0)
    p.add_argument("--out", required=True)
    p.set_defaults(handler=cmd_fit)

    p = sub.add_parser("predict", help="Write scores and responses for a CSV")
    p.add_argument("--model", required=True)
    p.add_argument("--data", required=True)
    p.add_argument("--target", default="y", help="Column dropped from the features if present")
    p.add_argument("--one-hot", action="store_true")
    p.add_argument("--upto", type=int, default=None, help="Use only the first UPTO iterations")
    p.add_argument("--out", required=True)
    p.set_defaults(handler=cmd_predict)

    p = sub.add_parser("evaluate", help="Error rate or mean negative log-likelihood on a CSV")
    p.add_argument("--model", required=True)
    p.add_argument("--data", required=True)
    p.add_argument("--target", default="y")
    p.add_argument("--one-hot", action="store_true")
    p.add_argument("--upto", type=int, default=None)
    p.set_defaults(handler=cmd_evaluate)

    p = sub.add_parser("tune", help="Grid search (M, nu, S) on a random train/validation/test split")
    _add_source_args(p)
    _add_loss_args(p)
    _add_grid_args(p)
    p.add_argument("--mode", choices=[m.value for m in UpdateMode], default=UpdateMode.NEWTON.value)
    p.add_argument("--seed", type=int, default=0, help="Split seed")
    p.add_argument("--out", required=True, help="Score table CSV")
    p.add_argument("--model-out", default=None, help="Save the selected model here")
    p.set_defaults(handler=cmd_tune)

    p = sub.add_parser("benchmark", help="Tune and test every mode over repeated splits")
    _add_source_args(p)
    _add_loss_args(p)
    _add_grid_args(p)
    p.add_argument("--modes", type=_modes, default=DEFAULT_METHODS,
                   help="Comma-separated methods, e.g. gradient,hybrid,newton,newton:hessian-sum")
    p.add_argument("--splits", type=int, default=10)
    p.add_argument("--seed", type=int, default=0, help="Seed of the first split")
    p.add_argument("--trace-dir", default=None, help="Also write per-iteration traces here")
    p.add_argument("--fixed-lr", type=float, default=None, help="Learning rate of the traces")
    p.add_argument("--out", required=True, help="Result CSV")
    p.set_defaults(handler=cmd_benchmark)

    p = sub.add_parser("trace", help="Training loss and test score versus iteration at a fixed learning rate")
    _add_source_args(p)
    _add_loss_args(p)
    _add_tree_args(p)
    p.add_argument("--mode", choices=[m.value for m in UpdateMode], default=UpdateMode.NEWTON.value)
    p.add_argument("--iterations", type=int, default=1000)
    p.add_argument("--fixed-lr", type=float, default=None)
    p.add_argument("--min-leaf", type=float, default=1.0)
    p.add_argument("--seed", type=int, default=0, help="Split seed")
    p.add_argument("--out", required=True)
    p.set_defaults(handler=cmd_trace)
    return parser


def main(argv: Optional[Sequence[str]] = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    configure_logging(1 if args.verbose else -1 if args.quiet else 0)
    try:
        return args.handler(args)
    except argparse.ArgumentTypeError as exc:
        parser.print_usage(sys.stderr)
        logger.error("%s", exc)
        return EXIT_USAGE
    except NumericalError as exc:
        logger.error("Numerical failure: %s", exc)
        return EXIT_NUMERIC
    except (TriboostError, FileNotFoundError, pd.errors.ParserError, UnicodeDecodeError) as exc:
        logger.error("%s", exc)
        return EXIT_DATA


if __name__ == "__main__":
    sys.exit(main())
