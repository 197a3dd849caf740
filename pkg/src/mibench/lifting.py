"""Labeled paired/unpaired batch construction.

A lifted batch augments (x, y) rows with a Bernoulli(alpha) label z.
Rows with z=1 are genuine pairs taken from one pool row; rows with z=0
combine an x row and a y row drawn independently (with replacement), so
they follow the product of the pool's empirical marginals.  Index
collisions on z=0 rows are allowed: the product distribution assigns
them probability 1/n like any other combination.

Random draws per batch happen in a fixed order (labels, then the joint
index source, then the two unpaired index vectors), which pins the
batch content for a given seed.
"""

import math
from dataclasses import dataclass

import numpy as np

from .errors import DomainError
from .seeding import derive_seed


@dataclass(frozen=True)
class LiftedBatch:
    """One minibatch of (x, y, z) training rows."""

    xs: np.ndarray
    ys: np.ndarray
    zs: np.ndarray
    alpha: float

    @property
    def m(self):
        return self.zs.shape[0]

    def inputs(self):
        """Concatenated (x, y) rows for the classifier."""
        return np.hstack([self.xs, self.ys])


def _check_alpha(alpha):
    if not (0.0 < alpha < 1.0):
        raise DomainError(f"alpha must lie strictly inside (0, 1), got {alpha}")


def draw_lifted(pool, m, alpha, seed):
    """Draw ``m`` independent lifted rows from ``pool``.

    Per row: z ~ Bernoulli(alpha); if z=1 a single pool index is drawn
    uniformly with replacement and supplies both x and y; if z=0 two
    independent uniform indices supply x and y separately.
    """
    _check_alpha(alpha)
    if pool.n < 2:
        raise DomainError("need at least 2 pool rows to form unpaired draws")
    if m < 1:
        raise DomainError(f"m must be >= 1, got {m}")
    rng = np.random.default_rng(seed)
    zs = (rng.random(m) < alpha).astype(np.int64)
    joint_idx = rng.integers(0, pool.n, size=m)
    x_idx = rng.integers(0, pool.n, size=m)
    y_idx = rng.integers(0, pool.n, size=m)
    paired = zs == 1
    xi = np.where(paired, joint_idx, x_idx)
    yi = np.where(paired, joint_idx, y_idx)
    return LiftedBatch(xs=pool.xs[xi], ys=pool.ys[yi], zs=zs, alpha=float(alpha))


def epoch_stream(pool, alpha, batch_size, seed):
    """Yield lifted batches covering one epoch of ``pool``.

    The epoch is a fresh permutation of the pool cut into
    ceil(n / batch_size) slices.  Each slice row gets its own z; rows
    with z=1 take the (x, y) pair of their permutation slot (so every
    pool pair appears at most once per epoch as a joint example), rows
    with z=0 draw their x and y indices independently from the whole
    pool, as in :func:`draw_lifted`.
    """
    _check_alpha(alpha)
    if batch_size < 2:
        raise DomainError(f"batch_size must be >= 2, got {batch_size}")
    if pool.n < 2:
        raise DomainError("need at least 2 pool rows to form unpaired draws")
    rng = np.random.default_rng(seed)
    perm = rng.permutation(pool.n)
    n_batches = math.ceil(pool.n / batch_size)
    for k in range(n_batches):
        slot = perm[k * batch_size:(k + 1) * batch_size]
        m = slot.shape[0]
        zs = (rng.random(m) < alpha).astype(np.int64)
        x_idx = rng.integers(0, pool.n, size=m)
        y_idx = rng.integers(0, pool.n, size=m)
        paired = zs == 1
        xi = np.where(paired, slot, x_idx)
        yi = np.where(paired, slot, y_idx)
        yield LiftedBatch(xs=pool.xs[xi], ys=pool.ys[yi], zs=zs, alpha=float(alpha))


def epoch_seeds(base_seed, n_epochs):
    """Independent per-epoch stream seeds derived from ``base_seed``."""
    return [derive_seed(base_seed, "epoch", e) for e in range(n_epochs)]
