"""Five mutual-information estimators behind one train/estimate interface.

Variants
--------
``demi``
    Trains a logistic classifier to tell genuine pairs from resampled
    ones at label prior ``alpha``; the estimate is the mean raw score
    (log odds) on held-out joint pairs minus ``logit(alpha)``.
``mine``
    Linear-output critic trained and evaluated on the Donsker-Varadhan
    bound: mean joint score minus the log mean exponentiated marginal
    score.
``smile``
    Same critic as ``mine`` but the exponentiated marginal scores are
    clamped to ``[exp(-tau), exp(tau)]`` inside the partition term, in
    training and evaluation alike.  ``tau=inf`` reproduces ``mine``
    exactly.
``infonce``
    Batch-softmax contrastive bound on an N x N score matrix; capped at
    ``ln N`` by construction.
``ccmi``
    Uses the ``alpha = 0.5`` classifier like ``demi`` but subtracts a
    marginal-side correction, the log mean inverse odds over unpaired
    pairs (computed from raw scores as ``logmeanexp(-s)``).

All scores are raw (pre-sigmoid) everywhere; partition-style terms go
through log-sum-exp, so nothing here exponentiates an unbounded score
directly.
"""

import math
from dataclasses import dataclass, field, replace

import numpy as np

from .errors import (
    ConfigurationError,
    DomainError,
    EstimateUnstableError,
    ShapeError,
    TrainingDivergenceError,
)
from .lifting import epoch_stream
from .nn import (
    adam_step,
    backward,
    forward,
    init_adam,
    init_net,
    logit,
    stable_sigmoid,
)
from .seeding import derive_seed
from .tasks import SamplePool

VARIANTS = ("demi", "mine", "smile", "infonce", "ccmi")

# Saturation watermark for logistic scores; counted in diagnostics but
# never applied to the estimate.
SATURATION_LOGIT = 50.0


@dataclass(frozen=True)
class EstimatorSpec:
    """Estimator variant plus its training hyperparameters."""

    variant: str
    alpha: float = 0.5
    tau: float = math.inf
    epochs: int = 20
    batch_size: int = 64
    learning_rate: float = 5e-4
    hidden_dims: tuple = (256, 256)
    seed: int = 0
    infonce_eval_batch: int = 0  # 0 means "use batch_size"

    def __post_init__(self):
        if self.variant not in VARIANTS:
            raise ConfigurationError(f"unknown variant {self.variant!r}; pick one of {VARIANTS}")
        if self.variant == "demi" and not (0.0 < self.alpha < 1.0):
            raise ConfigurationError(f"demi alpha must lie in (0, 1), got {self.alpha}")
        if self.variant == "ccmi" and self.alpha != 0.5:
            raise ConfigurationError("ccmi trains its classifier at alpha = 0.5")
        if self.variant == "smile" and not self.tau > 0:
            raise ConfigurationError(f"smile tau must be positive (or inf), got {self.tau}")
        if self.epochs < 0:
            raise ConfigurationError(f"epochs must be >= 0, got {self.epochs}")
        if self.batch_size < 2:
            raise ConfigurationError(f"batch_size must be >= 2, got {self.batch_size}")
        if self.learning_rate <= 0:
            raise ConfigurationError(f"learning_rate must be positive, got {self.learning_rate}")
        object.__setattr__(self, "hidden_dims", tuple(int(h) for h in self.hidden_dims))

    @property
    def output_mode(self):
        return "logistic" if self.variant in ("demi", "ccmi") else "linear"

    @property
    def tag(self):
        if self.variant == "demi":
            return f"demi_a{self.alpha:g}"
        if self.variant == "smile":
            return "smile_tinf" if math.isinf(self.tau) else f"smile_t{self.tau:g}"
        return self.variant


def parse_variant(text, **overrides):
    """Build an EstimatorSpec from a short string like ``smile:1``.

    Accepted forms: ``demi``, ``demi:0.25``, ``mine``, ``smile:1``,
    ``smile:inf``, ``infonce``, ``ccmi``.  Keyword overrides set the
    training hyperparameters.
    """
    text = text.strip().lower()
    name, _, arg = text.partition(":")
    if name == "demi":
        alpha = float(arg) if arg else 0.5
        return EstimatorSpec(variant="demi", alpha=alpha, **overrides)
    if name == "smile":
        tau = math.inf if arg in ("inf", "") else float(arg)
        return EstimatorSpec(variant="smile", tau=tau, **overrides)
    if name in ("mine", "infonce", "ccmi"):
        if arg:
            raise ConfigurationError(f"variant {name!r} takes no parameter, got {text!r}")
        return EstimatorSpec(variant=name, **overrides)
    raise ConfigurationError(f"cannot parse estimator {text!r}")


@dataclass
class EstimateReport:
    """One estimate with the internals needed to audit it."""

    estimate: float
    n_eval: int
    diagnostics: dict = field(default_factory=dict)


def logmeanexp(values):
    """ln(mean(exp(values))) via the usual max shift."""
    values = np.asarray(values, dtype=np.float64)
    if values.size == 0:
        raise DomainError("logmeanexp of an empty array")
    peak = float(np.max(values))
    return peak + math.log(float(np.mean(np.exp(values - peak))))


def demi_loss(raw_scores, labels):
    """Mean binary cross-entropy in raw-score form, with gradients.

    Returns ``(loss, dloss/dscore)``; the per-score gradient is
    ``(sigmoid(s) - z) / m``.
    """
    s = np.asarray(raw_scores, dtype=np.float64)
    z = np.asarray(labels, dtype=np.float64)
    if s.size == 0:
        raise DomainError("empty batch")
    if s.shape != z.shape:
        raise ShapeError(f"scores {s.shape} and labels {z.shape} must align")
    # -[z ln sigma(s) + (1-z) ln(1 - sigma(s))] = logaddexp(0, s) - z s
    losses = np.logaddexp(0.0, s) - z * s
    grads = (stable_sigmoid(s) - z) / s.shape[0]
    return float(np.mean(losses)), grads


def _clipped_dv(joint_scores, marginal_scores, tau):
    """Donsker-Varadhan value with the partition term clamped at tau.

    Returns (value, joint gradients, marginal gradients) of the
    objective.  ``tau=inf`` is the plain DV bound; clamped marginal
    scores receive zero gradient.
    """
    sj = np.asarray(joint_scores, dtype=np.float64)
    sm = np.asarray(marginal_scores, dtype=np.float64)
    if sj.size == 0 or sm.size == 0:
        raise DomainError("joint and marginal score batches must be nonempty")
    clipped = np.clip(sm, -tau, tau)
    peak = float(np.max(clipped))
    shifted = np.exp(clipped - peak)
    partition = peak + math.log(float(np.mean(shifted)))
    value = float(np.mean(sj)) - partition
    gj = np.full(sj.shape[0], 1.0 / sj.shape[0])
    softmax = shifted / float(np.sum(shifted))
    inside = (sm > -tau) & (sm < tau)
    gm = -softmax * inside
    return value, gj, gm


def dv_objective(joint_scores, marginal_scores):
    """Plain Donsker-Varadhan objective and its score gradients."""
    return _clipped_dv(joint_scores, marginal_scores, math.inf)


def smile_objective(joint_scores, marginal_scores, tau):
    """Clamped-partition DV objective used to train smile critics."""
    if not tau > 0:
        raise DomainError(f"tau must be positive (or inf), got {tau}")
    return _clipped_dv(joint_scores, marginal_scores, tau)


def smile_estimate(joint_scores, marginal_scores, tau):
    """Smile estimate on fixed scores; ``tau=inf`` equals the DV value."""
    if not tau > 0:
        raise DomainError(f"tau must be positive (or inf), got {tau}")
    value, _, _ = _clipped_dv(joint_scores, marginal_scores, tau)
    return value


def infonce_objective(score_matrix):
    """Batch-softmax contrastive bound on an N x N score matrix.

    Entry (i, j) scores the pair (x_i, y_j); matched pairs sit on the
    diagonal.  Returns ``(value, dvalue/dscores)``.  The value never
    exceeds ln N.
    """
    s = np.asarray(score_matrix, dtype=np.float64)
    if s.ndim != 2 or s.shape[0] != s.shape[1]:
        raise ShapeError(f"score matrix must be square, got {s.shape}")
    n = s.shape[0]
    if n < 2:
        raise ShapeError(f"need at least a 2 x 2 score matrix, got {s.shape}")
    peaks = np.max(s, axis=1, keepdims=True)
    shifted = np.exp(s - peaks)
    row_sums = np.sum(shifted, axis=1, keepdims=True)
    lse = peaks[:, 0] + np.log(row_sums[:, 0])
    value = float(np.mean(np.diag(s) - lse)) + math.log(n)
    grads = -shifted / row_sums
    grads[np.arange(n), np.arange(n)] += 1.0
    grads /= n
    return value, grads


def _require_mode(model, mode, variant):
    actual = getattr(model, "output_mode", mode)
    if actual != mode:
        raise ConfigurationError(f"{variant} needs a {mode}-output model, got {actual}")


def demi_estimate(classifier, eval_pairs, alpha):
    """Mean raw score on joint pairs minus ``logit(alpha)``.

    The classifier only needs a ``raw_scores`` method, so the exact
    posterior from :mod:`mibench.oracle` plugs in directly.
    """
    if not (0.0 < alpha < 1.0):
        raise DomainError(f"alpha must lie strictly inside (0, 1), got {alpha}")
    _require_mode(classifier, "logistic", "demi")
    scores = classifier.raw_scores(eval_pairs.pairs())
    mean_logit = float(np.mean(scores))
    saturated = int(np.count_nonzero(np.abs(scores) > SATURATION_LOGIT))
    return EstimateReport(
        estimate=mean_logit - logit(alpha),
        n_eval=scores.shape[0],
        diagnostics={"mean_logit": mean_logit, "saturated_count": saturated},
    )


def ccmi_estimate(classifier, joint_pairs, unpaired_pairs):
    """Mean raw score on joint pairs minus the inverse-odds partition.

    The second term is ``ln(mean(exp(-s)))`` over unpaired-pair scores,
    evaluated by log-sum-exp so large scores cannot overflow.
    """
    _require_mode(classifier, "logistic", "ccmi")
    sj = classifier.raw_scores(joint_pairs.pairs())
    su = classifier.raw_scores(unpaired_pairs.pairs())
    mean_logit = float(np.mean(sj))
    partition = logmeanexp(-su)
    estimate = mean_logit - partition
    if not math.isfinite(estimate):
        raise EstimateUnstableError(
            "ccmi estimate non-finite", float(np.max(np.abs(su))) if su.size else math.nan
        )
    return EstimateReport(
        estimate=estimate,
        n_eval=sj.shape[0],
        diagnostics={
            "mean_logit": mean_logit,
            "partition_term": partition,
            "max_abs_score": float(np.max(np.abs(su))),
        },
    )


def _epoch_slices(n, batch_size, rng):
    """Permutation of range(n) cut into batch_size slices."""
    perm = rng.permutation(n)
    return [perm[k * batch_size:(k + 1) * batch_size] for k in range(math.ceil(n / batch_size))]


def train(spec, train_pool):
    """Fit the variant's network on ``train_pool``.

    Returns ``(net, epoch_log)`` where ``epoch_log`` holds the mean
    training loss (demi/ccmi) or mean training objective (the rest) per
    epoch.  Fully deterministic given ``spec.seed``.
    """
    if train_pool.n < spec.batch_size:
        raise ConfigurationError(
            f"pool of {train_pool.n} rows is smaller than batch_size {spec.batch_size}"
        )
    dims = [train_pool.dx + train_pool.dy, *spec.hidden_dims, 1]
    net = init_net(dims, spec.output_mode, derive_seed(spec.seed, "init"))
    if spec.epochs == 0:
        return net, []
    state = init_adam(net, spec.learning_rate)
    if spec.variant in ("demi", "ccmi"):
        return _train_classifier(spec, train_pool, net, state)
    if spec.variant in ("mine", "smile"):
        return _train_dv(spec, train_pool, net, state)
    return _train_infonce(spec, train_pool, net, state)


def _check_batch_value(value, epoch, batch, step):
    if not math.isfinite(value):
        raise TrainingDivergenceError(
            f"non-finite training value at epoch {epoch} batch {batch}", step
        )


def _train_classifier(spec, pool, net, state):
    alpha = spec.alpha if spec.variant == "demi" else 0.5
    log = []
    for e in range(spec.epochs):
        total, count = 0.0, 0
        stream = epoch_stream(pool, alpha, spec.batch_size, derive_seed(spec.seed, "stream", e))
        for k, batch in enumerate(stream):
            _, cache = forward(net, batch.inputs())
            loss, score_grads = demi_loss(cache.scores, batch.zs)
            _check_batch_value(loss, e, k, state.step_count + 1)
            grads = backward(net, cache, score_grads)
            adam_step(net, state, grads)
            total += loss * batch.m
            count += batch.m
        log.append(total / count)
    return net, log


def _train_dv(spec, pool, net, state):
    tau = spec.tau if spec.variant == "smile" else math.inf
    log = []
    for e in range(spec.epochs):
        rng = np.random.default_rng(derive_seed(spec.seed, "stream", e))
        total, count = 0.0, 0
        for k, rows in enumerate(_epoch_slices(pool.n, spec.batch_size, rng)):
            bx, by = pool.xs[rows], pool.ys[rows]
            shuffled = by[rng.permutation(rows.shape[0])]
            inputs = np.vstack([np.hstack([bx, by]), np.hstack([bx, shuffled])])
            _, cache = forward(net, inputs)
            m = rows.shape[0]
            value, gj, gm = _clipped_dv(cache.scores[:m], cache.scores[m:], tau)
            _check_batch_value(value, e, k, state.step_count + 1)
            grads = backward(net, cache, -np.concatenate([gj, gm]))
            adam_step(net, state, grads)
            total += value * m
            count += m
        log.append(total / count)
    return net, log


def _train_infonce(spec, pool, net, state):
    log = []
    for e in range(spec.epochs):
        rng = np.random.default_rng(derive_seed(spec.seed, "stream", e))
        total, count = 0.0, 0
        for k, rows in enumerate(_epoch_slices(pool.n, spec.batch_size, rng)):
            m = rows.shape[0]
            if m < 2:  # a trailing 1-row slice cannot form a contrast
                continue
            bx, by = pool.xs[rows], pool.ys[rows]
            inputs = np.hstack([np.repeat(bx, m, axis=0), np.tile(by, (m, 1))])
            _, cache = forward(net, inputs)
            value, gmat = infonce_objective(cache.scores.reshape(m, m))
            _check_batch_value(value, e, k, state.step_count + 1)
            grads = backward(net, cache, -gmat.ravel())
            adam_step(net, state, grads)
            total += value * m
            count += m
        log.append(total / count)
    return net, log


def _shuffled_pairs(pool, seed):
    """Unpaired-pair inputs built from a seeded shuffle of the y rows."""
    rng = np.random.default_rng(seed)
    return SamplePool(xs=pool.xs, ys=pool.ys[rng.permutation(pool.n)])


def estimate(spec, model, eval_pool, eval_seed=None):
    """Evaluate a trained model on a held-out pool of joint pairs.

    ``eval_seed`` fixes the marginal-side shuffle used by mine, smile,
    and ccmi; it defaults to a value derived from ``spec.seed`` so a
    full run is reproducible end to end.
    """
    if eval_seed is None:
        eval_seed = derive_seed(spec.seed, "eval-shuffle")
    if spec.variant == "demi":
        return demi_estimate(model, eval_pool, spec.alpha)
    if spec.variant == "ccmi":
        return ccmi_estimate(model, eval_pool, _shuffled_pairs(eval_pool, eval_seed))
    if spec.variant in ("mine", "smile"):
        _require_mode(model, "linear", spec.variant)
        sj = model.raw_scores(eval_pool.pairs())
        sm = model.raw_scores(_shuffled_pairs(eval_pool, eval_seed).pairs())
        tau = spec.tau if spec.variant == "smile" else math.inf
        value, _, _ = _clipped_dv(sj, sm, tau)
        diag = {
            "mean_score": float(np.mean(sj)),
            "partition_term": float(np.mean(sj)) - value,
        }
        if spec.variant == "smile":
            diag["clipped_fraction"] = float(np.mean((sm < -tau) | (sm > tau)))
        return EstimateReport(estimate=value, n_eval=sj.shape[0], diagnostics=diag)
    if spec.variant == "infonce":
        _require_mode(model, "linear", "infonce")
        n_block = spec.infonce_eval_batch or spec.batch_size
        n_blocks = eval_pool.n // n_block
        if n_blocks == 0:
            raise ConfigurationError(
                f"eval pool of {eval_pool.n} rows cannot fill one {n_block}-pair block"
            )
        values = []
        for b in range(n_blocks):
            rows = slice(b * n_block, (b + 1) * n_block)
            bx, by = eval_pool.xs[rows], eval_pool.ys[rows]
            inputs = np.hstack([np.repeat(bx, n_block, axis=0), np.tile(by, (n_block, 1))])
            scores = model.raw_scores(inputs).reshape(n_block, n_block)
            value, _ = infonce_objective(scores)
            values.append(value)
        return EstimateReport(
            estimate=float(np.mean(values)),
            n_eval=n_blocks * n_block,
            diagnostics={"n_blocks": float(n_blocks), "block_size": float(n_block)},
        )
    raise ConfigurationError(f"unknown variant {spec.variant!r}")
