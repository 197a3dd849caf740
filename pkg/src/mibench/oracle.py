"""Analytic ground-truth machinery for the Gaussian task family.

Two oracles anchor every estimator test in this package:

* the sample-average estimator, which averages the exact
  log-density-ratio over held-out joint pairs and converges to the true
  mutual information by the law of large numbers; and
* the exact posterior classifier for the lifted labeling task, whose
  raw score is ``log_ratio + logit(alpha)``.  It is consumable anywhere
  a trained network's raw score is, which turns estimator identities
  into exact tests.
"""

import math
from dataclasses import dataclass

import numpy as np

from .errors import DomainError
from .nn import logit
from .seeding import derive_seed
from .tasks import analytic_log_ratio, sample_pool, sample_product_pool

__all__ = [
    "OptimalPosterior",
    "MiSampleEstimate",
    "sample_average_mi",
    "optimal_posterior_score",
    "bayes_optimal_ce_loss",
    "draw_true_lifted",
]


@dataclass(frozen=True)
class OptimalPosterior:
    """Exact posterior P(z=1 | x, y) for the lifted task at ``alpha``.

    Its raw score (the log odds) is the analytic log ratio shifted by
    ``logit(alpha)``; the probability itself is the sigmoid of that and
    is never needed to recover the score.
    """

    task: object
    alpha: float

    def __post_init__(self):
        if not (0.0 < self.alpha < 1.0):
            raise DomainError(f"alpha must lie strictly inside (0, 1), got {self.alpha}")

    def raw_scores(self, inputs):
        """Raw scores for concatenated (x, y) rows, network layout."""
        inputs = np.asarray(inputs, dtype=np.float64)
        d = self.task.dim
        x, y = inputs[:, :d], inputs[:, d:]
        return analytic_log_ratio(self.task, x, y) + logit(self.alpha)

    def score(self, x, y):
        """Raw score for a single (x, y) pair or aligned batches."""
        return analytic_log_ratio(self.task, x, y) + logit(self.alpha)


def optimal_posterior_score(posterior, x, y):
    """Raw score (log odds) of the exact posterior at the given points."""
    return posterior.score(x, y)


@dataclass(frozen=True)
class MiSampleEstimate:
    estimate: float
    standard_error: float
    n: int


def sample_average_mi(task, eval_pairs):
    """Average the exact log ratio over jointly drawn pairs.

    Returns the estimate together with its Monte Carlo standard error
    (sample std over sqrt(n)).
    """
    ratios = analytic_log_ratio(task, eval_pairs.xs, eval_pairs.ys)
    n = ratios.shape[0]
    se = float(np.std(ratios, ddof=1) / math.sqrt(n)) if n > 1 else 0.0
    return MiSampleEstimate(estimate=float(np.mean(ratios)), standard_error=se, n=n)


def draw_true_lifted(task, m, alpha, seed):
    """Sample (x, y, z) directly from the true lifted distribution.

    z ~ Bernoulli(alpha); z=1 rows are genuine joint draws, z=0 rows are
    independent draws from the two true marginals.  Unlike the pool
    based construction in :mod:`mibench.lifting`, nothing is resampled
    from a finite set.
    """
    if not (0.0 < alpha < 1.0):
        raise DomainError(f"alpha must lie strictly inside (0, 1), got {alpha}")
    if m < 1:
        raise DomainError(f"m must be >= 1, got {m}")
    rng = np.random.default_rng(seed)
    zs = (rng.random(m) < alpha).astype(np.int64)
    n1 = int(zs.sum())
    xs = np.empty((m, task.dim))
    ys = np.empty((m, task.dim))
    if n1 > 0:
        joint = sample_pool(task, n1, derive_seed(seed, "lifted-joint"))
        xs[zs == 1] = joint.xs
        ys[zs == 1] = joint.ys
    if m - n1 > 0:
        prod = sample_product_pool(task, m - n1, derive_seed(seed, "lifted-product"))
        xs[zs == 0] = prod.xs
        ys[zs == 0] = prod.ys
    return xs, ys, zs


def bayes_optimal_ce_loss(task, alpha, n_mc, seed):
    """Monte Carlo estimate of the minimum achievable labeling loss.

    Draws ``n_mc`` rows from the true lifted distribution and averages
    the negative log posterior of the correct label under the exact
    posterior.  No trained classifier can beat this floor (up to Monte
    Carlo error), so it serves as a training-quality reference.
    """
    if n_mc < 1:
        raise DomainError(f"n_mc must be >= 1, got {n_mc}")
    xs, ys, zs = draw_true_lifted(task, n_mc, alpha, seed)
    t = analytic_log_ratio(task, xs, ys) + logit(alpha)
    # -ln sigma(t) = softplus(-t); -ln(1 - sigma(t)) = softplus(t)
    losses = np.where(zs == 1, np.logaddexp(0.0, -t), np.logaddexp(0.0, t))
    return float(np.mean(losses))
