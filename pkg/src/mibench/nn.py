"""Dense scoring networks with manual reverse-mode gradients and Adam.

The networks are fully connected ReLU stacks mapping a concatenated
``(x, y)`` input to one scalar.  ``linear`` mode exposes the raw score
directly; ``logistic`` mode additionally squashes it through a sigmoid
for probability output.  The raw pre-sigmoid score is always retained,
so downstream log-odds are computed from it exactly and never recovered
from the squashed probability.

All parameters are float64.  Everything here is deterministic given the
seed: the same ``init_net`` call yields bitwise-identical parameters.
"""

from dataclasses import dataclass

import numpy as np

from ._accel import adam_kernel, backward_kernel, forward_kernel
from .errors import (
    CacheMismatchError,
    ConfigurationError,
    DomainError,
    ShapeError,
    TrainingDivergenceError,
)

OUTPUT_MODES = ("linear", "logistic")

# Serialized model header: layer count and dims as little-endian int64,
# then per layer the (out x in) weight matrix row-major and the bias,
# both float64, then one byte for the output mode.
_MODE_BYTES = {"linear": 0, "logistic": 1}


def stable_sigmoid(s):
    """Numerically stable sigmoid, clipped strictly inside (0, 1)."""
    s = np.asarray(s, dtype=np.float64)
    out = np.empty_like(s)
    pos = s >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-s[pos]))
    es = np.exp(s[~pos])
    out[~pos] = es / (1.0 + es)
    tiny = np.nextafter(0.0, 1.0)
    top = np.nextafter(1.0, 0.0)
    return np.clip(out, tiny, top)


def softplus(s):
    """log(1 + exp(s)) without overflow."""
    return np.logaddexp(0.0, np.asarray(s, dtype=np.float64))


def logit(u):
    """Log odds ln(u / (1 - u)) for u strictly inside (0, 1)."""
    if not (0.0 < u < 1.0):
        raise DomainError(f"logit needs u in (0, 1), got {u}")
    return float(np.log(u / (1.0 - u)))


class DenseNet:
    """Parameter container for a concat-input MLP with scalar output.

    Attributes
    ----------
    layer_dims : tuple of int
        Widths including input and the final width-1 output.
    output_mode : str
        ``"linear"`` or ``"logistic"``.
    params : ndarray
        Flat float64 parameter vector; weight blocks are stored
        transposed (input-major) for contiguous matmuls.
    version : int
        Incremented on every optimizer step; forward caches record it so
        a stale cache is detected in :func:`backward`.
    """

    def __init__(self, layer_dims, output_mode, params):
        layer_dims = tuple(int(d) for d in layer_dims)
        if len(layer_dims) < 2:
            raise ConfigurationError(f"need at least input and output widths, got {layer_dims}")
        if any(d <= 0 for d in layer_dims):
            raise ConfigurationError(f"layer widths must be positive, got {layer_dims}")
        if layer_dims[-1] != 1:
            raise ConfigurationError(f"output width must be 1, got {layer_dims[-1]}")
        if output_mode not in OUTPUT_MODES:
            raise ConfigurationError(f"unknown output_mode {output_mode!r}")
        self.layer_dims = layer_dims
        self.output_mode = output_mode
        self.version = 0

        dims = np.asarray(layer_dims, dtype=np.int64)
        n_layers = len(layer_dims) - 1
        w_off = np.empty(n_layers, dtype=np.int64)
        b_off = np.empty(n_layers, dtype=np.int64)
        offset = 0
        for l in range(n_layers):
            w_off[l] = offset
            offset += dims[l] * dims[l + 1]
            b_off[l] = offset
            offset += dims[l + 1]
        self._dims = dims
        self._w_off = w_off
        self._b_off = b_off
        self._n_params = int(offset)

        params = np.asarray(params, dtype=np.float64)
        if params.shape != (self._n_params,):
            raise ShapeError(f"expected {self._n_params} parameters, got shape {params.shape}")
        self.params = params

    @property
    def n_layers(self):
        return len(self.layer_dims) - 1

    @property
    def n_params(self):
        return self._n_params

    @property
    def weights(self):
        """Per-layer weight matrices, shaped (out, in). Views, not copies."""
        out = []
        for l in range(self.n_layers):
            din, dout = self.layer_dims[l], self.layer_dims[l + 1]
            block = self.params[self._w_off[l]:self._w_off[l] + din * dout]
            out.append(block.reshape(din, dout).T)
        return out

    @property
    def biases(self):
        """Per-layer bias vectors. Views, not copies."""
        out = []
        for l in range(self.n_layers):
            dout = self.layer_dims[l + 1]
            out.append(self.params[self._b_off[l]:self._b_off[l] + dout])
        return out

    def split_flat(self, vec):
        """Split a flat parameter-shaped vector into (out, in) weight and
        bias arrays per layer, mirroring :attr:`weights`/:attr:`biases`."""
        vec = np.asarray(vec, dtype=np.float64)
        if vec.shape != (self._n_params,):
            raise ShapeError(f"expected shape ({self._n_params},), got {vec.shape}")
        pairs = []
        for l in range(self.n_layers):
            din, dout = self.layer_dims[l], self.layer_dims[l + 1]
            w = vec[self._w_off[l]:self._w_off[l] + din * dout].reshape(din, dout).T
            b = vec[self._b_off[l]:self._b_off[l] + dout]
            pairs.append((w, b))
        return pairs

    def copy(self):
        net = DenseNet(self.layer_dims, self.output_mode, self.params.copy())
        net.version = self.version
        return net

    def raw_scores(self, inputs):
        """Raw (pre-sigmoid) scores for a batch, without keeping a cache."""
        inputs = _check_inputs(self, inputs)
        _, scores = forward_kernel(self.params, self._dims, self._w_off, self._b_off, inputs)
        return scores


@dataclass
class ForwardCache:
    """Activations recorded by :func:`forward` for one batch."""

    inputs: np.ndarray
    hidden: np.ndarray
    scores: np.ndarray
    net_version: int


def _check_inputs(net, inputs):
    inputs = np.ascontiguousarray(inputs, dtype=np.float64)
    if inputs.ndim != 2 or inputs.shape[1] != net.layer_dims[0]:
        raise ShapeError(
            f"inputs must be (batch, {net.layer_dims[0]}), got {inputs.shape}"
        )
    return inputs


def init_net(layer_dims, output_mode, seed):
    """Create a network with uniform weights at scale 1/sqrt(fan_in).

    Weights for each layer are drawn i.i.d. from
    U(-1/sqrt(fan_in), +1/sqrt(fan_in)) using numpy's PCG64 generator
    seeded with ``seed``; biases start at zero.  The draw order is fixed
    (layer by layer, input-major), so results are reproducible bit for
    bit.
    """
    probe = DenseNet(layer_dims, output_mode, np.zeros(_count_params(layer_dims)))
    rng = np.random.default_rng(seed)
    params = np.zeros(probe.n_params, dtype=np.float64)
    for l in range(probe.n_layers):
        din, dout = probe.layer_dims[l], probe.layer_dims[l + 1]
        bound = 1.0 / np.sqrt(din)
        start = probe._w_off[l]
        params[start:start + din * dout] = rng.uniform(-bound, bound, size=din * dout)
    return DenseNet(layer_dims, output_mode, params)


def _count_params(layer_dims):
    dims = [int(d) for d in layer_dims]
    if len(dims) < 2:
        raise ConfigurationError(f"need at least input and output widths, got {dims}")
    return sum(dims[l] * dims[l + 1] + dims[l + 1] for l in range(len(dims) - 1))


def forward(net, inputs):
    """Run the network on a batch.

    Returns
    -------
    outputs : ndarray
        Raw scores in linear mode; probabilities strictly inside (0, 1)
        in logistic mode.
    cache : ForwardCache
        Holds the raw scores and hidden activations for :func:`backward`.
    """
    inputs = _check_inputs(net, inputs)
    hidden, scores = forward_kernel(net.params, net._dims, net._w_off, net._b_off, inputs)
    cache = ForwardCache(inputs=inputs, hidden=hidden, scores=scores, net_version=net.version)
    if net.output_mode == "logistic":
        return stable_sigmoid(scores), cache
    return scores, cache


def backward(net, cache, output_gradients):
    """Gradients of sum_i g_i * s_i w.r.t. all parameters.

    ``output_gradients`` holds dL/ds per sample, where s is the raw
    score (losses in this package differentiate through the sigmoid
    themselves, keeping saturation out of the chain).  Returns a flat
    gradient vector aligned with ``net.params``.
    """
    if cache.net_version != net.version:
        raise CacheMismatchError(
            f"cache built at net version {cache.net_version}, net is at {net.version}"
        )
    g = np.ascontiguousarray(output_gradients, dtype=np.float64)
    if g.shape != cache.scores.shape:
        raise ShapeError(f"output_gradients shape {g.shape} != scores shape {cache.scores.shape}")
    return backward_kernel(
        net.params, net._dims, net._w_off, net._b_off, cache.inputs, cache.hidden, g
    )


@dataclass
class AdamState:
    """Adam moments and hyperparameters for one network."""

    first_moment: np.ndarray
    second_moment: np.ndarray
    step_count: int
    learning_rate: float
    beta1: float = 0.9
    beta2: float = 0.999
    epsilon: float = 1e-8


def init_adam(net, learning_rate, beta1=0.9, beta2=0.999, epsilon=1e-8):
    if learning_rate <= 0:
        raise ConfigurationError(f"learning_rate must be positive, got {learning_rate}")
    return AdamState(
        first_moment=np.zeros(net.n_params),
        second_moment=np.zeros(net.n_params),
        step_count=0,
        learning_rate=float(learning_rate),
        beta1=beta1,
        beta2=beta2,
        epsilon=epsilon,
    )


def adam_step(net, state, gradients):
    """One bias-corrected Adam update, in place. Returns (net, state)."""
    gradients = np.asarray(gradients, dtype=np.float64)
    if gradients.shape != (net.n_params,):
        raise ShapeError(f"gradient shape {gradients.shape} != ({net.n_params},)")
    step = state.step_count + 1
    if not np.all(np.isfinite(gradients)):
        raise TrainingDivergenceError("non-finite gradients", step)
    adam_kernel(
        net.params,
        state.first_moment,
        state.second_moment,
        gradients,
        step,
        state.learning_rate,
        state.beta1,
        state.beta2,
        state.epsilon,
    )
    state.step_count = step
    net.version += 1
    if not np.all(np.isfinite(net.params)):
        raise TrainingDivergenceError("non-finite parameters after update", step)
    return net, state


@dataclass
class GradCheckReport:
    max_relative_error: float
    passed: bool
    n_checked: int
    worst_index: int


def grad_check(net, loss_evaluator, tolerance, n_coords=200, step=1e-5, seed=0):
    """Compare analytic gradients against central finite differences.

    ``loss_evaluator(net)`` must deterministically return
    ``(loss, flat_gradient)``.  A random subsample of at least
    ``n_coords`` coordinates (or all, if the network is smaller) is
    perturbed by ``+-step``; the relative error uses an absolute floor
    of 1e-6 so exactly-zero gradients do not produce spurious blowups.
    """
    _, analytic = loss_evaluator(net)
    analytic = np.asarray(analytic, dtype=np.float64)
    rng = np.random.default_rng(seed)
    n = net.n_params
    if n <= n_coords:
        coords = np.arange(n)
    else:
        coords = rng.choice(n, size=n_coords, replace=False)
    max_rel = 0.0
    worst = int(coords[0])
    for j in coords:
        saved = net.params[j]
        net.params[j] = saved + step
        up, _ = loss_evaluator(net)
        net.params[j] = saved - step
        down, _ = loss_evaluator(net)
        net.params[j] = saved
        numeric = (up - down) / (2.0 * step)
        denom = max(abs(analytic[j]), abs(numeric), 1e-6)
        rel = abs(analytic[j] - numeric) / denom
        if rel > max_rel:
            max_rel = rel
            worst = int(j)
    return GradCheckReport(
        max_relative_error=float(max_rel),
        passed=bool(max_rel < tolerance),
        n_checked=len(coords),
        worst_index=worst,
    )


def save_model(net, path):
    """Write a trained network to ``path`` in the flat binary layout.

    Layout: the width count as little-endian int64, then the layer
    widths (input through output) as int64, then for each layer the
    (out x in) weight matrix row-major followed by the bias, all
    little-endian float64, then a single output-mode byte (0 linear,
    1 logistic).
    """
    with open(path, "wb") as fh:
        dims = np.asarray(net.layer_dims, dtype="<i8")
        fh.write(np.int64(len(net.layer_dims)).astype("<i8").tobytes())
        fh.write(dims.tobytes())
        for w, b in zip(net.weights, net.biases):
            fh.write(np.ascontiguousarray(w, dtype="<f8").tobytes())
            fh.write(np.ascontiguousarray(b, dtype="<f8").tobytes())
        fh.write(bytes([_MODE_BYTES[net.output_mode]]))


def load_model(path):
    """Read a network written by :func:`save_model`."""
    with open(path, "rb") as fh:
        raw = fh.read()
    n_dims = int(np.frombuffer(raw, dtype="<i8", count=1, offset=0)[0])
    if n_dims < 2 or n_dims > 1000:
        raise ShapeError(f"implausible layer count {n_dims} in model file {path}")
    dims = np.frombuffer(raw, dtype="<i8", count=n_dims, offset=8).tolist()
    offset = 8 + 8 * n_dims
    net = DenseNet(dims, "linear", np.zeros(_count_params(dims)))
    for l in range(net.n_layers):
        din, dout = dims[l], dims[l + 1]
        w = np.frombuffer(raw, dtype="<f8", count=din * dout, offset=offset).reshape(dout, din)
        offset += 8 * din * dout
        b = np.frombuffer(raw, dtype="<f8", count=dout, offset=offset)
        offset += 8 * dout
        net.params[net._w_off[l]:net._w_off[l] + din * dout] = w.T.ravel()
        net.params[net._b_off[l]:net._b_off[l] + dout] = b
    mode_byte = raw[offset]
    mode = {v: k for k, v in _MODE_BYTES.items()}.get(mode_byte)
    if mode is None:
        raise ShapeError(f"unknown output-mode byte {mode_byte} in model file {path}")
    net.output_mode = mode
    return net
