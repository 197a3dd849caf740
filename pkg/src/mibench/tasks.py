"""Correlated-Gaussian benchmark tasks with closed-form ground truth.

A task pairs two d-dimensional variables component by component: each
``(x_i, y_i)`` is bivariate normal with correlation ``rho``, independent
across components, giving mutual information ``-(d/2) ln(1 - rho^2)``
nats in closed form.  The optional cubic variant maps ``y_i -> y_i**3``
element-wise after sampling; being deterministic and invertible, it
leaves the mutual information (and the pointwise joint/marginal density
ratio) unchanged.

Sampling uses numpy's PCG64 generator and its standard-normal stream;
this exact stream is part of the reproducibility contract, so pools are
bitwise-stable for a given seed on a given numpy version.
"""

import csv
import math
from dataclasses import dataclass

import numpy as np

from .errors import DomainError, ShapeError

POOL_MAGIC = int.from_bytes(b"MIPOOL01", "little")


@dataclass(frozen=True)
class GaussianTask:
    """Component-wise correlated Gaussian pair, optionally cubed.

    Attributes
    ----------
    dim : int
        Per-variable dimension d.
    rho : float
        Per-component correlation in [0, 1).
    cubic : bool
        Whether y is cubed element-wise after sampling.
    """

    dim: int
    rho: float
    cubic: bool = False

    def __post_init__(self):
        if self.dim < 1:
            raise DomainError(f"dim must be >= 1, got {self.dim}")
        if not (0.0 <= self.rho < 1.0):
            raise DomainError(f"rho must be in [0, 1), got {self.rho}")


@dataclass(frozen=True)
class SamplePool:
    """A finite set of jointly drawn (x, y) rows standing in for p(x,y)."""

    xs: np.ndarray
    ys: np.ndarray

    def __post_init__(self):
        xs = np.asarray(self.xs, dtype=np.float64)
        ys = np.asarray(self.ys, dtype=np.float64)
        if xs.ndim != 2 or ys.ndim != 2 or xs.shape[0] != ys.shape[0]:
            raise ShapeError(f"xs {xs.shape} and ys {ys.shape} must be row-aligned 2-d arrays")
        if xs.shape[0] < 1:
            raise ShapeError("pool must hold at least one row")
        object.__setattr__(self, "xs", xs)
        object.__setattr__(self, "ys", ys)

    @property
    def n(self):
        return self.xs.shape[0]

    @property
    def dx(self):
        return self.xs.shape[1]

    @property
    def dy(self):
        return self.ys.shape[1]

    def pairs(self):
        """Concatenated (x, y) rows, the network input layout."""
        return np.hstack([self.xs, self.ys])


def rho_for_mi(dim, target_mi):
    """Correlation giving ``target_mi`` nats at dimension ``dim``.

    Inverts mi = -(dim/2) ln(1 - rho^2) to
    rho = sqrt(1 - exp(-2 mi / dim)).
    """
    if target_mi < 0:
        raise DomainError(f"target_mi must be >= 0, got {target_mi}")
    if dim < 1:
        raise DomainError(f"dim must be >= 1, got {dim}")
    return math.sqrt(1.0 - math.exp(-2.0 * target_mi / dim))


def true_mi(task):
    """Exact mutual information of the task in nats."""
    return -(task.dim / 2.0) * math.log1p(-task.rho * task.rho)


def sample_pool(task, n, seed):
    """Draw ``n`` i.i.d. joint samples.

    x ~ N(0, I_d); y_i = rho * x_i + sqrt(1 - rho^2) * eps_i with
    eps ~ N(0, I_d); the cubic variant cubes y afterwards.  The x block
    is drawn before the noise block, so for a fixed seed the cubic and
    non-cubic pools share the same underlying Gaussian stream.
    """
    if n < 1:
        raise DomainError(f"n must be >= 1, got {n}")
    rng = np.random.default_rng(seed)
    xs = rng.standard_normal((n, task.dim))
    eps = rng.standard_normal((n, task.dim))
    ys = task.rho * xs + math.sqrt(1.0 - task.rho * task.rho) * eps
    if task.cubic:
        ys = ys ** 3
    return SamplePool(xs=xs, ys=ys)


def sample_product_pool(task, n, seed):
    """Draw ``n`` rows from the product of the task's true marginals.

    Both marginals are standard normal per component (y before cubing),
    so this is two independent Gaussian blocks, with y cubed for cubic
    tasks.  Used where genuinely unpaired data is needed rather than
    pool resampling.
    """
    if n < 1:
        raise DomainError(f"n must be >= 1, got {n}")
    rng = np.random.default_rng(seed)
    xs = rng.standard_normal((n, task.dim))
    ys = rng.standard_normal((n, task.dim))
    if task.cubic:
        ys = ys ** 3
    return SamplePool(xs=xs, ys=ys)


def signed_cbrt(v):
    """Element-wise real cube root, preserving sign."""
    return np.cbrt(np.asarray(v, dtype=np.float64))


def analytic_log_ratio(task, x, y):
    """Exact log p(x,y) - log p(x)p(y) at the given points.

    Accepts single vectors or row-aligned batches.  For cubic tasks the
    cube is inverted by the signed cube root first; the change-of-
    variables terms cancel between the joint and marginal densities, so
    the ratio itself is transform-invariant.
    """
    if task.rho >= 1.0:
        raise DomainError("log ratio undefined at rho >= 1")
    x = np.asarray(x, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    single = x.ndim == 1 and y.ndim == 1
    x = np.atleast_2d(x)
    y = np.atleast_2d(y)
    if x.shape[1] != task.dim or y.shape[1] != task.dim or x.shape[0] != y.shape[0]:
        raise ShapeError(f"expected row-aligned (m, {task.dim}) arrays, got {x.shape}, {y.shape}")
    if task.cubic:
        y = signed_cbrt(y)
    s2 = 1.0 - task.rho * task.rho
    resid = y - task.rho * x
    per_row = (
        -0.5 * task.dim * math.log(s2)
        - np.sum(resid * resid, axis=1) / (2.0 * s2)
        + np.sum(y * y, axis=1) / 2.0
    )
    return float(per_row[0]) if single else per_row


def save_pool_binary(pool, path):
    """Write a pool as flat binary.

    Header: magic, n, dx, dy as little-endian int64; then the xs block
    and the ys block, row-major little-endian float64.
    """
    header = np.asarray([POOL_MAGIC, pool.n, pool.dx, pool.dy], dtype="<i8")
    with open(path, "wb") as fh:
        fh.write(header.tobytes())
        fh.write(np.ascontiguousarray(pool.xs, dtype="<f8").tobytes())
        fh.write(np.ascontiguousarray(pool.ys, dtype="<f8").tobytes())


def load_pool_binary(path):
    """Read a pool written by :func:`save_pool_binary`."""
    with open(path, "rb") as fh:
        raw = fh.read()
    if len(raw) < 32:
        raise ShapeError(f"pool file {path} too short for header")
    magic, n, dx, dy = (int(v) for v in np.frombuffer(raw, dtype="<i8", count=4))
    if magic != POOL_MAGIC:
        raise ShapeError(f"bad pool magic {magic:#x} in {path}")
    expect = 32 + 8 * n * (dx + dy)
    if len(raw) != expect:
        raise ShapeError(f"pool file {path} has {len(raw)} bytes, expected {expect}")
    xs = np.frombuffer(raw, dtype="<f8", count=n * dx, offset=32).reshape(n, dx)
    ys = np.frombuffer(raw, dtype="<f8", count=n * dy, offset=32 + 8 * n * dx).reshape(n, dy)
    return SamplePool(xs=xs.copy(), ys=ys.copy())


def save_pool_csv(pool, path):
    """Write a pool as CSV with columns x0..x{dx-1}, y0..y{dy-1}."""
    header = [f"x{i}" for i in range(pool.dx)] + [f"y{i}" for i in range(pool.dy)]
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(header)
        for xr, yr in zip(pool.xs, pool.ys):
            writer.writerow([repr(v) for v in xr] + [repr(v) for v in yr])


def load_pool_csv(path):
    """Read a pool written by :func:`save_pool_csv`."""
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader)
        dx = sum(1 for c in header if c.startswith("x"))
        dy = sum(1 for c in header if c.startswith("y"))
        if dx == 0 or dy == 0 or dx + dy != len(header):
            raise ShapeError(f"unrecognized pool CSV header in {path}: {header}")
        rows = [[float(v) for v in row] for row in reader if row]
    data = np.asarray(rows, dtype=np.float64)
    return SamplePool(xs=data[:, :dx], ys=data[:, dx:])
