"""Experiment drivers: estimation grids, long-run traces, image tests.

Every run in a grid derives all of its randomness (pools, network init,
training stream, evaluation shuffle) by hashing the cell key with the
grid's base seed, so result content is a pure function of (grid,
base_seed) and is unaffected by worker scheduling.  Wall-clock times are
recorded per row for reporting but are, of course, not reproducible.
"""

import csv
import json
import math
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, replace

import numpy as np

from .errors import ConfigurationError, DomainError, MibenchError, TrainingDivergenceError
from .estimators import (
    EstimatorSpec,
    demi_estimate,
    demi_loss,
    dv_objective,
    estimate,
    infonce_objective,
    smile_objective,
    train,
)
from .idx import normalize_images, read_idx_images, read_idx_labels
from .nn import adam_step, backward, forward, grad_check, init_adam, init_net
from .oracle import draw_true_lifted
from .seeding import derive_seed
from .tasks import GaussianTask, SamplePool, rho_for_mi, sample_pool

RESULT_COLUMNS = (
    "dim",
    "mi_target",
    "train_size",
    "cubic",
    "estimator",
    "seed",
    "estimate",
    "error",
    "wall_time_s",
    "status",
)


@dataclass(frozen=True)
class ExperimentGrid:
    """Cartesian product of task cells, estimators, and seeds."""

    dims: tuple
    mi_targets: tuple
    train_sizes: tuple
    cubic: tuple
    estimators: tuple
    n_seeds: int
    eval_size: int = 10240
    base_seed: int = 0

    def __post_init__(self):
        for name in ("dims", "mi_targets", "train_sizes", "cubic", "estimators"):
            value = tuple(getattr(self, name))
            if not value:
                raise ConfigurationError(f"grid field {name} must be nonempty")
            object.__setattr__(self, name, value)
        if self.n_seeds < 1:
            raise ConfigurationError(f"n_seeds must be >= 1, got {self.n_seeds}")
        if self.eval_size < 1:
            raise ConfigurationError(f"eval_size must be >= 1, got {self.eval_size}")
        for spec in self.estimators:
            if not isinstance(spec, EstimatorSpec):
                raise ConfigurationError(f"estimators entries must be EstimatorSpec, got {spec!r}")

    def runs(self):
        """All (dim, mi, size, cubic, spec, seed_index) tuples, in the
        deterministic emission order of the report."""
        out = []
        for dim in self.dims:
            for mi in self.mi_targets:
                for size in self.train_sizes:
                    for cubic in self.cubic:
                        for spec in self.estimators:
                            for s in range(self.n_seeds):
                                out.append((dim, mi, size, cubic, spec, s))
        return out


@dataclass
class ResultRow:
    dim: int
    mi_target: float
    train_size: int
    cubic: bool
    estimator: str
    seed: int
    estimate: float
    error: float
    wall_time_s: float
    status: str = "ok"


def _run_one(args):
    dim, mi, size, cubic, spec, seed_idx, eval_size, base_seed = args
    key = (dim, mi, size, cubic, spec.tag, seed_idx)
    start = time.perf_counter()
    try:
        task = GaussianTask(dim=dim, rho=rho_for_mi(dim, mi), cubic=cubic)
        train_pool = sample_pool(task, size, derive_seed(base_seed, *key, "train"))
        eval_pool = sample_pool(task, eval_size, derive_seed(base_seed, *key, "eval"))
        run_spec = replace(spec, seed=derive_seed(base_seed, *key, "fit"))
        net, _ = train(run_spec, train_pool)
        report = estimate(
            run_spec, net, eval_pool, eval_seed=derive_seed(base_seed, *key, "shuffle")
        )
        est, err, status = report.estimate, mi - report.estimate, "ok"
    except Exception as exc:  # a failed cell must not abort the grid
        est, err, status = math.nan, math.nan, f"error: {exc}"
    wall = time.perf_counter() - start
    return ResultRow(
        dim=dim,
        mi_target=mi,
        train_size=size,
        cubic=cubic,
        estimator=spec.tag,
        seed=seed_idx,
        estimate=est,
        error=err,
        wall_time_s=wall,
        status=status,
    )


def run_grid(grid, parallelism=1):
    """Execute every (cell, seed) run; returns (rows, summary).

    Rows come back in the grid's deterministic order whatever the
    worker count; ``summary`` aggregates mean error and the standard
    deviation of the estimates per cell and estimator, recomputed purely
    from the rows.
    """
    args = [run + (grid.eval_size, grid.base_seed) for run in grid.runs()]
    if parallelism <= 1:
        rows = [_run_one(a) for a in args]
    else:
        with ProcessPoolExecutor(max_workers=parallelism) as pool:
            rows = list(pool.map(_run_one, args))
    return rows, summarize(rows)


def summarize(rows):
    """Per-cell mean error and std of the estimates, from rows alone."""
    groups = {}
    for row in rows:
        key = (row.dim, row.mi_target, row.train_size, row.cubic, row.estimator)
        groups.setdefault(key, []).append(row)
    out = []
    for key in sorted(groups, key=lambda k: tuple(str(p) for p in k)):
        cell = groups[key]
        ok = [r for r in cell if r.status == "ok"]
        estimates = np.asarray([r.estimate for r in ok])
        out.append(
            {
                "dim": key[0],
                "mi_target": key[1],
                "train_size": key[2],
                "cubic": key[3],
                "estimator": key[4],
                "n_runs": len(cell),
                "n_failed": len(cell) - len(ok),
                "mean_error": float(np.mean([r.error for r in ok])) if ok else math.nan,
                "std_estimate": float(np.std(estimates, ddof=1)) if len(ok) > 1 else 0.0,
            }
        )
    return out


def _format_value(value):
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, float):
        return repr(value)
    return str(value)


def emit_report(rows, fmt, path):
    """Write rows as CSV or JSON with the fixed column set."""
    if not rows:
        raise ConfigurationError("refusing to emit an empty report")
    if fmt == "csv":
        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(RESULT_COLUMNS)
            for row in rows:
                writer.writerow([_format_value(getattr(row, col)) for col in RESULT_COLUMNS])
    elif fmt == "json":
        payload = [{col: getattr(row, col) for col in RESULT_COLUMNS} for row in rows]
        with open(path, "w") as fh:
            json.dump(payload, fh, indent=1)
            fh.write("\n")
    else:
        raise ConfigurationError(f"unknown report format {fmt!r}")


def _row_from_fields(fields):
    return ResultRow(
        dim=int(fields["dim"]),
        mi_target=float(fields["mi_target"]),
        train_size=int(fields["train_size"]),
        cubic=str(fields["cubic"]).lower() in ("true", "1"),
        estimator=str(fields["estimator"]),
        seed=int(fields["seed"]),
        estimate=float(fields["estimate"]),
        error=float(fields["error"]),
        wall_time_s=float(fields["wall_time_s"]),
        status=str(fields["status"]),
    )


def load_report(path, fmt):
    """Parse a report written by :func:`emit_report` back into rows."""
    if fmt == "csv":
        with open(path, newline="") as fh:
            reader = csv.DictReader(fh)
            if tuple(reader.fieldnames or ()) != RESULT_COLUMNS:
                raise ConfigurationError(f"unexpected report header in {path}")
            return [_row_from_fields(fields) for fields in reader]
    if fmt == "json":
        with open(path) as fh:
            return [_row_from_fields(fields) for fields in json.load(fh)]
    raise ConfigurationError(f"unknown report format {fmt!r}")


# ---------------------------------------------------------------------------
# Long-run training study
# ---------------------------------------------------------------------------


@dataclass
class TracePoint:
    step: int
    estimator: str
    estimate: float
    smoothed: float


def _longrun_update(task, spec, net, state, batch_size, step_seed):
    """One optimizer step on a fresh batch from the true distribution."""
    if spec.variant in ("demi", "ccmi"):
        alpha = spec.alpha if spec.variant == "demi" else 0.5
        xs, ys, zs = draw_true_lifted(task, batch_size, alpha, step_seed)
        _, cache = forward(net, np.hstack([xs, ys]))
        _, score_grads = demi_loss(cache.scores, zs)
        adam_step(net, state, backward(net, cache, score_grads))
        return
    joint = sample_pool(task, batch_size, step_seed)
    if spec.variant in ("mine", "smile"):
        rng = np.random.default_rng(derive_seed(step_seed, "shuffle"))
        shuffled = joint.ys[rng.permutation(batch_size)]
        inputs = np.vstack([joint.pairs(), np.hstack([joint.xs, shuffled])])
        _, cache = forward(net, inputs)
        tau = spec.tau if spec.variant == "smile" else math.inf
        _, gj, gm = smile_objective(cache.scores[:batch_size], cache.scores[batch_size:], tau)
        adam_step(net, state, backward(net, cache, -np.concatenate([gj, gm])))
        return
    inputs = np.hstack(
        [np.repeat(joint.xs, batch_size, axis=0), np.tile(joint.ys, (batch_size, 1))]
    )
    _, cache = forward(net, inputs)
    _, gmat = infonce_objective(cache.scores.reshape(batch_size, batch_size))
    adam_step(net, state, backward(net, cache, -gmat.ravel()))


def run_longrun(
    dim,
    mi_target,
    steps,
    batch_size,
    estimator_specs,
    seed,
    record_every=100,
    smoothing=0.9,
    eval_size=10240,
):
    """Train each estimator on endless fresh batches, recording a trace.

    Every ``record_every`` steps (and at the final step) the current
    network is evaluated on a fixed held-out pool; the trace carries the
    raw estimate and an exponentially smoothed companion.  A divergence
    freezes further updates for that estimator but evaluation continues,
    so the blow-up itself stays visible in the trace.
    """
    if steps < 0:
        raise DomainError(f"steps must be >= 0, got {steps}")
    task = GaussianTask(dim=dim, rho=rho_for_mi(dim, mi_target), cubic=False)
    traces = []
    for spec in estimator_specs:
        traces.extend(
            _longrun_single(
                task,
                spec,
                steps,
                batch_size,
                derive_seed(seed, "longrun", spec.tag),
                record_every,
                smoothing,
                eval_size,
            )
        )
    return traces


def _longrun_single(task, spec, steps, batch_size, seed, record_every, smoothing, eval_size):
    eval_pool = sample_pool(task, eval_size, derive_seed(seed, "eval"))
    eval_shuffle = derive_seed(seed, "shuffle")
    net = init_net([2 * task.dim, *spec.hidden_dims, 1], spec.output_mode, derive_seed(seed, "init"))
    state = init_adam(net, spec.learning_rate)
    frozen = False
    smoothed = math.nan
    points = []
    for step in range(1, steps + 1):
        if not frozen:
            try:
                _longrun_update(task, spec, net, state, batch_size, derive_seed(seed, "step", step))
            except TrainingDivergenceError:
                frozen = True
        if step % record_every == 0 or step == steps:
            try:
                est = estimate(spec, net, eval_pool, eval_seed=eval_shuffle).estimate
            except MibenchError:
                est = math.nan
            if math.isfinite(est):
                smoothed = est if not math.isfinite(smoothed) else (
                    smoothing * smoothed + (1.0 - smoothing) * est
                )
            points.append(
                TracePoint(step=step, estimator=spec.tag, estimate=est, smoothed=smoothed)
            )
    return points


def write_trace_csv(points, path):
    """Write long-run trace points as CSV (step,estimator,estimate,smoothed)."""
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["step", "estimator", "estimate", "smoothed"])
        for p in points:
            writer.writerow([p.step, p.estimator, repr(p.estimate), repr(p.smoothed)])


# ---------------------------------------------------------------------------
# Image self-consistency study
# ---------------------------------------------------------------------------


def _downsample(images):
    """2x2 mean pooling; odd trailing rows/columns are trimmed."""
    n, r, c = images.shape
    r2, c2 = r - r % 2, c - c % 2
    trimmed = images[:, :r2, :c2]
    return trimmed.reshape(n, r2 // 2, 2, c2 // 2, 2).mean(axis=(2, 4))


def _mask_rows(images, t):
    """Zero out every row below the top ``t`` rows."""
    out = images.copy()
    out[:, t:, :] = 0.0
    return out


def _flat(images):
    return images.reshape(images.shape[0], -1)


def _image_mi(x_mat, y_mat, train_size, eval_size, spec_kwargs, seed):
    """Train one paired/unpaired classifier and estimate MI in nats."""
    n = x_mat.shape[0]
    train_n = min(train_size, n - eval_size)
    if train_n < spec_kwargs["batch_size"]:
        raise ConfigurationError(
            f"{n} images leave {train_n} training rows; need >= {spec_kwargs['batch_size']}"
        )
    train_pool = SamplePool(xs=x_mat[:train_n], ys=y_mat[:train_n])
    eval_pool = SamplePool(xs=x_mat[n - eval_size:], ys=y_mat[n - eval_size:])
    spec = EstimatorSpec(variant="demi", seed=seed, **spec_kwargs)
    net, _ = train(spec, train_pool)
    return demi_estimate(net, eval_pool, spec.alpha).estimate


def run_selfconsistency(
    images_path,
    labels_path=None,
    rows_step=4,
    seed=0,
    train_size=20000,
    eval_size=4096,
    epochs=5,
    batch_size=64,
    learning_rate=5e-4,
    hidden_dims=(512, 512),
    alpha=0.5,
):
    """Three image-based sanity curves for the classifier estimator.

    1. Independence/monotonicity: MI between an image and its top-``t``
       rows, swept over ``t`` and normalized by the unmasked value.
       The raw curve is emitted alongside the normalized one, so a
       degenerate final value stays diagnosable.
    2. Data processing: MI([X,X], [Y1,Y2]) / MI(X, Y1) with Y1 keeping
       three more rows than Y2; extra processing of the second copy
       should not add information, so the ratio should sit near 1.
    3. Additivity: MI([X1,X2], [Y1,Y2]) / MI(X1, Y1) for independent
       image pairs, ideally near 2.

    Returns a dict mapping metric name to a list of (t, value) pairs.
    """
    images = read_idx_images(images_path)
    if labels_path is not None:
        labels = read_idx_labels(labels_path)
        if labels.shape[0] != images.shape[0]:
            raise ConfigurationError(
                f"{labels.shape[0]} labels for {images.shape[0]} images"
            )
    norm = normalize_images(images)
    n, r, _ = norm.shape
    spec_kwargs = {
        "alpha": alpha,
        "epochs": epochs,
        "batch_size": batch_size,
        "learning_rate": learning_rate,
        "hidden_dims": tuple(hidden_dims),
    }
    if rows_step < 1:
        raise ConfigurationError(f"rows_step must be >= 1, got {rows_step}")
    ts = list(range(0, r + 1, rows_step))
    if ts[-1] != r:
        ts.append(r)

    x_flat = _flat(_downsample(norm))
    curves = {
        "independence_raw": [],
        "independence_normalized": [],
        "data_processing_ratio": [],
        "additivity_ratio": [],
    }

    masked_mi = {}
    for t in ts:
        y_flat = _flat(_downsample(_mask_rows(norm, t)))
        masked_mi[t] = _image_mi(
            x_flat, y_flat, train_size, eval_size, spec_kwargs, derive_seed(seed, "indep", t)
        )
        curves["independence_raw"].append((t, masked_mi[t]))
    final = masked_mi[r]
    for t in ts:
        normalized = masked_mi[t] / final if abs(final) > 1e-9 else math.nan
        curves["independence_normalized"].append((t, normalized))

    for t2 in [t for t in ts if t + 3 <= r]:
        t1 = t2 + 3
        y1 = _flat(_downsample(_mask_rows(norm, t1)))
        y2 = _flat(_downsample(_mask_rows(norm, t2)))
        numerator = _image_mi(
            np.hstack([x_flat, x_flat]),
            np.hstack([y1, y2]),
            train_size,
            eval_size,
            spec_kwargs,
            derive_seed(seed, "dp-num", t2),
        )
        denominator = _image_mi(
            x_flat, y1, train_size, eval_size, spec_kwargs, derive_seed(seed, "dp-den", t2)
        )
        ratio = numerator / denominator if abs(denominator) > 1e-9 else math.nan
        curves["data_processing_ratio"].append((t2, ratio))

    half = n // 2
    a, b = norm[:half], norm[half:2 * half]
    xa, xb = _flat(_downsample(a)), _flat(_downsample(b))
    for t in [t for t in ts if t > 0]:
        ya = _flat(_downsample(_mask_rows(a, t)))
        yb = _flat(_downsample(_mask_rows(b, t)))
        numerator = _image_mi(
            np.hstack([xa, xb]),
            np.hstack([ya, yb]),
            train_size,
            eval_size,
            spec_kwargs,
            derive_seed(seed, "add-num", t),
        )
        denominator = _image_mi(
            xa, ya, train_size, eval_size, spec_kwargs, derive_seed(seed, "add-den", t)
        )
        ratio = numerator / denominator if abs(denominator) > 1e-9 else math.nan
        curves["additivity_ratio"].append((t, ratio))
    return curves


def write_curves_csv(curves, path):
    """Write self-consistency curves as CSV (metric,t,value)."""
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["metric", "t", "value"])
        for metric in sorted(curves):
            for t, value in curves[metric]:
                writer.writerow([metric, t, repr(float(value))])


# ---------------------------------------------------------------------------
# Gradient verification suite
# ---------------------------------------------------------------------------


def _random_net_and_batch(rng, output_mode):
    din = int(rng.integers(4, 9))
    hidden = [int(rng.integers(5, 10)), int(rng.integers(5, 10))]
    net = init_net([din, *hidden, 1], output_mode, int(rng.integers(0, 2 ** 31)))
    batch = rng.standard_normal((8, din))
    return net, batch


def gradient_suite(tolerance=1e-4, trials=20, seed=0):
    """Finite-difference checks for every training loss.

    Each trial draws a fresh small network and batch, differentiates the
    full loss (through the network) analytically, and compares against
    central differences on a parameter subsample.  Returns a dict
    mapping loss name to the worst GradCheckReport across trials.
    """
    rng = np.random.default_rng(seed)
    worst = {}

    def record(name, report):
        prev = worst.get(name)
        if prev is None or report.max_relative_error > prev.max_relative_error:
            worst[name] = report

    for trial in range(trials):
        net, batch = _random_net_and_batch(rng, "logistic")
        labels = (rng.random(8) < 0.5).astype(np.int64)

        def ce_eval(n):
            _, cache = forward(n, batch)
            loss, score_grads = demi_loss(cache.scores, labels)
            return loss, backward(n, cache, score_grads)

        record("cross_entropy", grad_check(net, ce_eval, tolerance, seed=trial))

        net, batch = _random_net_and_batch(rng, "linear")
        marg = rng.standard_normal(batch.shape)

        def dv_eval(n):
            _, cache = forward(n, np.vstack([batch, marg]))
            value, gj, gm = dv_objective(cache.scores[:8], cache.scores[8:])
            return value, backward(n, cache, np.concatenate([gj, gm]))

        record("dv", grad_check(net, dv_eval, tolerance, seed=trial))

        tau = 1.0

        def smile_eval(n):
            _, cache = forward(n, np.vstack([batch, marg]))
            value, gj, gm = smile_objective(cache.scores[:8], cache.scores[8:], tau)
            return value, backward(n, cache, np.concatenate([gj, gm]))

        # keep every marginal score clear of the clip boundary so the
        # finite-difference probe never straddles the kink
        _, probe_cache = forward(net, np.vstack([batch, marg]))
        while np.min(np.abs(np.abs(probe_cache.scores[8:]) - tau)) < 1e-3:
            marg = rng.standard_normal(batch.shape)
            _, probe_cache = forward(net, np.vstack([batch, marg]))

        record("smile", grad_check(net, smile_eval, tolerance, seed=trial))

        net, batch = _random_net_and_batch(rng, "linear")
        din = batch.shape[1]
        left = rng.standard_normal((6, din - din // 2))
        right = rng.standard_normal((6, din // 2))
        pairs = np.hstack(
            [np.repeat(left, 6, axis=0), np.tile(right, (6, 1))]
        )

        def nce_eval(n):
            _, cache = forward(n, pairs)
            value, gmat = infonce_objective(cache.scores.reshape(6, 6))
            return value, backward(n, cache, gmat.ravel())

        record("infonce", grad_check(net, nce_eval, tolerance, seed=trial))
    return worst
