"""Command-line entry points for the benchmark drivers.

Exit codes: 0 success, 1 configuration error, 2 run failure(s) present
in a report or a failed check, 3 I/O error.
"""

import argparse
import json
import math
import sys

from .bench import (
    ExperimentGrid,
    emit_report,
    gradient_suite,
    run_grid,
    run_longrun,
    run_selfconsistency,
    write_curves_csv,
    write_trace_csv,
)
from .errors import ConfigurationError, DomainError, IdxFormatError
from .estimators import EstimatorSpec, parse_variant
from .oracle import sample_average_mi
from .tasks import GaussianTask, rho_for_mi, sample_pool

EXIT_OK = 0
EXIT_CONFIG = 1
EXIT_RUN_FAILURES = 2
EXIT_IO = 3

GRID_HYPERPARAMS = ("epochs", "batch_size", "learning_rate", "hidden_dims")


def load_grid_config(path, seed_override=None):
    """Build an ExperimentGrid from a JSON config file.

    Estimator entries may be short strings (``"smile:1"``) or objects
    with explicit EstimatorSpec fields; grid-level ``epochs``,
    ``batch_size``, ``learning_rate``, and ``hidden_dims`` apply to
    every estimator that does not override them.
    """
    try:
        with open(path) as fh:
            raw = json.load(fh)
    except json.JSONDecodeError as exc:
        raise ConfigurationError(f"{path} is not valid JSON: {exc}") from exc
    if not isinstance(raw, dict):
        raise ConfigurationError(f"{path} must hold a JSON object")

    defaults = {}
    for key in GRID_HYPERPARAMS:
        if key in raw:
            defaults[key] = tuple(raw[key]) if key == "hidden_dims" else raw[key]

    specs = []
    for entry in raw.get("estimators", []):
        if isinstance(entry, str):
            specs.append(parse_variant(entry, **defaults))
        elif isinstance(entry, dict):
            merged = {**defaults, **entry}
            if "hidden_dims" in merged:
                merged["hidden_dims"] = tuple(merged["hidden_dims"])
            try:
                specs.append(EstimatorSpec(**merged))
            except TypeError as exc:
                raise ConfigurationError(f"bad estimator entry {entry!r}: {exc}") from exc
        else:
            raise ConfigurationError(f"bad estimator entry {entry!r}")

    try:
        return ExperimentGrid(
            dims=tuple(raw.get("dims", ())),
            mi_targets=tuple(raw.get("mi_targets", ())),
            train_sizes=tuple(raw.get("train_sizes", ())),
            cubic=tuple(bool(v) for v in raw.get("cubic", (False,))),
            estimators=tuple(specs),
            n_seeds=int(raw.get("n_seeds", 1)),
            eval_size=int(raw.get("eval_size", 10240)),
            base_seed=int(seed_override if seed_override is not None else raw.get("base_seed", 0)),
        )
    except (TypeError, ValueError) as exc:
        raise ConfigurationError(f"bad grid config in {path}: {exc}") from exc


def _cmd_grid(args):
    grid = load_grid_config(args.config, seed_override=args.seed)
    rows, summary = run_grid(grid, parallelism=args.parallelism)
    emit_report(rows, args.format, args.out)
    print(f"wrote {len(rows)} rows to {args.out}")
    for cell in summary:
        print(
            "{dim}d mi={mi_target:g} n={train_size} cubic={cubic} {estimator}: "
            "error {mean_error:+.2f} +- {std_estimate:.2f} ({n_runs} runs, {n_failed} failed)"
            .format(**cell)
        )
    failed = sum(1 for row in rows if row.status != "ok")
    if failed:
        print(f"{failed} run(s) failed; see the status column", file=sys.stderr)
        return EXIT_RUN_FAILURES
    return EXIT_OK


def _cmd_longrun(args):
    specs = [
        parse_variant(token, batch_size=args.batch, epochs=1)
        for token in args.estimators.split(",")
        if token.strip()
    ]
    if not specs:
        raise ConfigurationError("no estimators given")
    points = run_longrun(
        dim=args.dim,
        mi_target=args.mi,
        steps=args.steps,
        batch_size=args.batch,
        estimator_specs=specs,
        seed=args.seed,
        record_every=args.record_every,
        smoothing=args.smoothing,
        eval_size=args.eval_size,
    )
    write_trace_csv(points, args.out)
    print(f"wrote {len(points)} trace points to {args.out}")
    return EXIT_OK


def _cmd_selfconsistency(args):
    curves = run_selfconsistency(
        images_path=args.images,
        labels_path=args.labels,
        rows_step=args.rows_step,
        seed=args.seed,
        train_size=args.train_size,
        eval_size=args.eval_size,
        epochs=args.epochs,
    )
    write_curves_csv(curves, args.out)
    print(f"wrote curves to {args.out}")
    return EXIT_OK


def _cmd_gradcheck(args):
    reports = gradient_suite(tolerance=args.tolerance, trials=args.trials, seed=args.seed)
    all_ok = True
    for name in sorted(reports):
        rep = reports[name]
        verdict = "pass" if rep.passed else "FAIL"
        print(f"{name}: max relative error {rep.max_relative_error:.3e} ({verdict})")
        all_ok = all_ok and rep.passed
    return EXIT_OK if all_ok else EXIT_RUN_FAILURES


def _cmd_oracle(args):
    task = GaussianTask(dim=args.dim, rho=rho_for_mi(args.dim, args.mi), cubic=args.cubic)
    pool = sample_pool(task, args.n, args.seed)
    result = sample_average_mi(task, pool)
    print(
        f"sample-average estimate: {result.estimate:.6f} nats "
        f"(se {result.standard_error:.6f}, n {result.n}, true {args.mi:g})"
    )
    return EXIT_OK


def build_parser():
    parser = argparse.ArgumentParser(
        prog="mibench",
        description="Train and score mutual-information estimators on synthetic tasks.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    grid = sub.add_parser("grid", help="run an estimation grid from a JSON config")
    grid.add_argument("--config", required=True, help="JSON grid definition")
    grid.add_argument("--out", default="grid_report.csv", help="report path")
    grid.add_argument("--format", choices=("csv", "json"), default="csv")
    grid.add_argument("--parallelism", type=int, default=1, help="worker processes")
    grid.add_argument("--seed", type=int, default=None, help="override the config base_seed")
    grid.set_defaults(func=_cmd_grid)

    longrun = sub.add_parser("longrun", help="stream fresh batches and trace estimates")
    longrun.add_argument("--dim", type=int, required=True)
    longrun.add_argument("--mi", type=float, required=True)
    longrun.add_argument("--steps", type=int, required=True)
    longrun.add_argument("--batch", type=int, default=64)
    longrun.add_argument(
        "--estimators",
        default="demi,smile:1,smile:inf",
        help="comma list, e.g. demi:0.5,mine,smile:1,smile:inf,infonce,ccmi",
    )
    longrun.add_argument("--seed", type=int, default=0)
    longrun.add_argument("--out", default="longrun_trace.csv")
    longrun.add_argument("--record-every", type=int, default=100, dest="record_every")
    longrun.add_argument("--smoothing", type=float, default=0.9)
    longrun.add_argument("--eval-size", type=int, default=10240, dest="eval_size")
    longrun.set_defaults(func=_cmd_longrun)

    selfc = sub.add_parser("selfconsistency", help="image-based estimator sanity curves")
    selfc.add_argument("--images", required=True, help="IDX3 image file")
    selfc.add_argument("--labels", default=None, help="optional IDX1 label file")
    selfc.add_argument("--rows-step", type=int, default=4, dest="rows_step")
    selfc.add_argument("--out", default="selfconsistency.csv")
    selfc.add_argument("--seed", type=int, default=0)
    selfc.add_argument("--train-size", type=int, default=20000, dest="train_size")
    selfc.add_argument("--eval-size", type=int, default=4096, dest="eval_size")
    selfc.add_argument("--epochs", type=int, default=5)
    selfc.set_defaults(func=_cmd_selfconsistency)

    gradcheck = sub.add_parser("gradcheck", help="finite-difference gradient verification")
    gradcheck.add_argument("--tolerance", type=float, default=1e-4)
    gradcheck.add_argument("--trials", type=int, default=20)
    gradcheck.add_argument("--seed", type=int, default=0)
    gradcheck.set_defaults(func=_cmd_gradcheck)

    oracle = sub.add_parser("oracle", help="sample-average estimate with exact densities")
    oracle.add_argument("--dim", type=int, required=True)
    oracle.add_argument("--mi", type=float, required=True)
    oracle.add_argument("--n", type=int, default=10240)
    oracle.add_argument("--seed", type=int, default=0)
    oracle.add_argument("--cubic", action="store_true")
    oracle.set_defaults(func=_cmd_oracle)
    return parser


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except (ConfigurationError, DomainError) as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (IdxFormatError, OSError) as exc:
        print(f"I/O error: {exc}", file=sys.stderr)
        return EXIT_IO


if __name__ == "__main__":
    sys.exit(main())
