"""Hot numeric kernels, JIT-compiled with numba when available.

Set ``MIBENCH_NUMBA=0`` in the environment to force the pure-numpy path
(useful for debugging and for benchmarking the two paths against each
other; see ``benchmarks/kernel_benchmark.py``).  Both paths execute the
same source below, so results are identical.

Network parameters live in a single flat float64 vector.  Layer ``l``
maps ``dims[l]`` inputs to ``dims[l+1]`` outputs; its weight block is
stored transposed, as a C-contiguous ``(dims[l], dims[l+1])`` matrix at
``w_off[l]``, followed by the bias at ``b_off[l]``.  Hidden activations
are kept in one flat buffer so each layer's slice reshapes to a
contiguous matrix.
"""

import os

import numpy as np


def _numba_requested():
    flag = os.environ.get("MIBENCH_NUMBA", "1").strip().lower()
    return flag not in ("0", "false", "off", "no")


NUMBA_ENABLED = False

if _numba_requested():
    try:
        from numba import njit

        NUMBA_ENABLED = True
    except ImportError:  # pragma: no cover - numba is a declared dependency
        pass

if not NUMBA_ENABLED:

    def njit(*args, **kwargs):
        if args and callable(args[0]):
            return args[0]

        def passthrough(func):
            return func

        return passthrough


@njit(cache=True)
def forward_kernel(params, dims, w_off, b_off, x):
    """Forward pass; returns (flat hidden activations, raw scores)."""
    m = x.shape[0]
    n_layers = dims.shape[0] - 1
    hid_total = 0
    for l in range(1, n_layers):
        hid_total += dims[l]
    acts = np.empty(m * hid_total, dtype=np.float64)
    scores = np.empty(m, dtype=np.float64)
    h = x
    offset = 0
    for l in range(n_layers):
        din = dims[l]
        dout = dims[l + 1]
        wt = params[w_off[l]:w_off[l] + din * dout].reshape(din, dout)
        b = params[b_off[l]:b_off[l] + dout]
        z = np.dot(h, wt) + b
        if l < n_layers - 1:
            z = np.maximum(z, 0.0)
            acts[offset:offset + m * dout] = z.ravel()
            h = acts[offset:offset + m * dout].reshape(m, dout)
            offset += m * dout
        else:
            scores[:] = z[:, 0]
    return acts, scores


@njit(cache=True)
def backward_kernel(params, dims, w_off, b_off, x, acts, score_grads):
    """Reverse pass for the scalar-output network.

    ``score_grads`` holds dL/ds per sample; the return value is dL/dtheta
    in the flat parameter layout.
    """
    m = x.shape[0]
    n_layers = dims.shape[0] - 1
    grad = np.zeros_like(params)

    act_off = np.empty(n_layers, dtype=np.int64)
    offset = 0
    for l in range(1, n_layers):
        act_off[l - 1] = offset
        offset += m * dims[l]

    dz = score_grads.copy().reshape(m, 1)
    for l in range(n_layers - 1, -1, -1):
        din = dims[l]
        dout = dims[l + 1]
        if l == 0:
            h_in = x
        else:
            h_in = acts[act_off[l - 1]:act_off[l - 1] + m * din].reshape(m, din)
        gw = np.dot(h_in.T, dz)
        grad[w_off[l]:w_off[l] + din * dout] = gw.ravel()
        grad[b_off[l]:b_off[l] + dout] = np.sum(dz, axis=0)
        if l > 0:
            wt = params[w_off[l]:w_off[l] + din * dout].reshape(din, dout)
            dh = np.dot(dz, wt.T)
            dz = dh * (h_in > 0.0)
    return grad


@njit(cache=True)
def adam_kernel(params, m1, m2, grad, step, lr, beta1, beta2, eps):
    """In-place bias-corrected Adam update at (1-based) ``step``."""
    c1 = 1.0 - beta1 ** step
    c2 = 1.0 - beta2 ** step
    m1[:] = beta1 * m1 + (1.0 - beta1) * grad
    m2[:] = beta2 * m2 + (1.0 - beta2) * grad * grad
    params -= lr * (m1 / c1) / (np.sqrt(m2 / c2) + eps)
