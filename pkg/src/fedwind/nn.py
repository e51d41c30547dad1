"""Dense feed-forward networks with exact analytic gradients.

Everything is plain float64 numpy: forward passes record a tape, the
backward pass replays it, and a small first-order optimizer (plain SGD or
Adam) applies the resulting gradients. Parameter sets are flat, ordered
value objects so they can be copied, averaged across clients, and moved
over a wire as bytes without any shared state.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass, replace
from typing import Sequence

import numpy as np
from scipy.special import expit

from .errors import FormatError, NumericError, ProtocolError, ShapeError, StateError

ACTIVATIONS = ("relu", "sigmoid", "linear")
_ACTIVATION_CODE = {name: i for i, name in enumerate(ACTIVATIONS)}

_MAGIC = b"FWNP"
_FORMAT_VERSION = 1
HEADER_BYTES = 8        # magic(4) + version(2) + layer count(2)
LAYER_HEADER_BYTES = 9  # input width(4) + output width(4) + activation code(1)
VALUE_BYTES = 8         # one little-endian IEEE-754 float64 per parameter


@dataclass(frozen=True)
class LayerSpec:
    """Widths and activation of one dense layer."""

    input_width: int
    output_width: int
    activation: str

    def __post_init__(self) -> None:
        if self.input_width < 1 or self.output_width < 1:
            raise ValueError("layer widths must be >= 1")
        if self.activation not in ACTIVATIONS:
            raise ValueError(f"unknown activation {self.activation!r}")


class NetworkParams:
    """Ordered (weight, bias) pairs for one dense network.

    Weights have shape (output_width, input_width), biases (output_width,).
    Two parameter sets are averaging-compatible iff their shape signatures
    are equal.
    """

    __slots__ = ("weights", "biases", "activations")

    def __init__(
        self,
        weights: Sequence[np.ndarray],
        biases: Sequence[np.ndarray],
        activations: Sequence[str],
    ) -> None:
        self.weights = [np.asarray(w, dtype=np.float64) for w in weights]
        self.biases = [np.asarray(b, dtype=np.float64) for b in biases]
        self.activations = [str(a) for a in activations]
        n = len(self.weights)
        if n == 0 or len(self.biases) != n or len(self.activations) != n:
            raise ShapeError("need one (weight, bias, activation) triple per layer")
        for i, (w, b, a) in enumerate(zip(self.weights, self.biases, self.activations)):
            if a not in ACTIVATIONS:
                raise ValueError(f"layer {i}: unknown activation {a!r}")
            if w.ndim != 2 or b.ndim != 1 or w.shape[0] != b.shape[0]:
                raise ShapeError(f"layer {i}: weight {w.shape} and bias {b.shape} disagree")
            if i > 0 and self.weights[i - 1].shape[0] != w.shape[1]:
                raise ShapeError(
                    f"layer {i}: input width {w.shape[1]} does not chain with "
                    f"previous output width {self.weights[i - 1].shape[0]}"
                )
            if not (np.isfinite(w).all() and np.isfinite(b).all()):
                raise NumericError(f"layer {i}: non-finite parameter values")

    @property
    def shape_signature(self) -> tuple[LayerSpec, ...]:
        return tuple(
            LayerSpec(w.shape[1], w.shape[0], a)
            for w, a in zip(self.weights, self.activations)
        )

    @property
    def n_params(self) -> int:
        return sum(w.size + b.size for w, b in zip(self.weights, self.biases))

    def copy(self) -> "NetworkParams":
        return NetworkParams(
            [w.copy() for w in self.weights],
            [b.copy() for b in self.biases],
            list(self.activations),
        )

    def flat(self) -> np.ndarray:
        """All parameters concatenated in layer order, weights then bias."""
        parts = []
        for w, b in zip(self.weights, self.biases):
            parts.append(w.ravel())
            parts.append(b)
        return np.concatenate(parts)

    def __repr__(self) -> str:  # pragma: no cover
        widths = [self.weights[0].shape[1]] + [w.shape[0] for w in self.weights]
        return f"NetworkParams({'->'.join(map(str, widths))}, {self.activations})"


def init_params(layer_specs: Sequence[LayerSpec], rng: np.random.Generator) -> NetworkParams:
    """Seeded Glorot-uniform weights (limit sqrt(6/(fan_in+fan_out))), zero biases."""
    weights, biases, activations = [], [], []
    for spec in layer_specs:
        limit = np.sqrt(6.0 / (spec.input_width + spec.output_width))
        weights.append(rng.uniform(-limit, limit, size=(spec.output_width, spec.input_width)))
        biases.append(np.zeros(spec.output_width))
        activations.append(spec.activation)
    return NetworkParams(weights, biases, activations)


def _activate(name: str, z: np.ndarray) -> np.ndarray:
    if name == "relu":
        return np.maximum(z, 0.0)
    if name == "sigmoid":
        return expit(z)
    return z


@dataclass
class ForwardTape:
    """Per-layer activation record; enough to replay exact gradients."""

    params: NetworkParams
    layer_inputs: list[np.ndarray]
    pre_activations: list[np.ndarray]
    output: np.ndarray


def forward(params: NetworkParams, inputs: np.ndarray) -> tuple[np.ndarray, ForwardTape]:
    """Evaluate the network on a vector (n,) or a batch (B, n).

    Returns (output, tape); the tape feeds :func:`backward`.
    """
    x = np.asarray(inputs, dtype=np.float64)
    if x.ndim not in (1, 2) or x.shape[-1] != params.weights[0].shape[1]:
        raise ShapeError(
            f"input shape {x.shape} does not match first layer input width "
            f"{params.weights[0].shape[1]}"
        )
    layer_inputs, pre_activations = [], []
    for w, b, act in zip(params.weights, params.biases, params.activations):
        layer_inputs.append(x)
        z = x @ w.T + b
        pre_activations.append(z)
        x = _activate(act, z)
    return x, ForwardTape(params, layer_inputs, pre_activations, x)


def backward(
    params: NetworkParams,
    tape: ForwardTape,
    output_gradient: np.ndarray,
) -> tuple[NetworkParams, np.ndarray]:
    """Exact gradients of sum(output * output_gradient) w.r.t. parameters and input.

    For batched tapes the parameter gradients are summed over the batch and
    the input gradient keeps the batch dimension.
    """
    if tape.params is not params:
        raise StateError("tape was produced by a different parameter set")
    g = np.asarray(output_gradient, dtype=np.float64)
    if g.shape != tape.output.shape:
        raise ShapeError(f"output gradient {g.shape} does not match output {tape.output.shape}")

    n_layers = len(params.weights)
    grad_w: list[np.ndarray] = [None] * n_layers  # type: ignore[list-item]
    grad_b: list[np.ndarray] = [None] * n_layers  # type: ignore[list-item]
    for i in range(n_layers - 1, -1, -1):
        act = params.activations[i]
        z = tape.pre_activations[i]
        if act == "relu":
            g = g * (z > 0.0)
        elif act == "sigmoid":
            post = tape.layer_inputs[i + 1] if i + 1 < n_layers else tape.output
            g = g * post * (1.0 - post)
        x = tape.layer_inputs[i]
        if g.ndim == 2:
            grad_w[i] = g.T @ x
            grad_b[i] = g.sum(axis=0)
        else:
            grad_w[i] = np.outer(g, x)
            grad_b[i] = g.copy()
        g = g @ params.weights[i]
    return NetworkParams(grad_w, grad_b, list(params.activations)), g


@dataclass(frozen=True)
class OptimizerState:
    """First-order optimizer state; moment accumulators mirror the network shapes."""

    learning_rate: float
    method: str = "adam"  # "adam" | "sgd"
    beta1: float = 0.9
    beta2: float = 0.999
    epsilon: float = 1e-8
    step: int = 0
    first_moments: tuple[np.ndarray, ...] = ()
    second_moments: tuple[np.ndarray, ...] = ()

    def __post_init__(self) -> None:
        if self.learning_rate <= 0.0:
            raise ValueError("learning_rate must be positive")
        if self.method not in ("adam", "sgd"):
            raise ValueError(f"unknown optimizer method {self.method!r}")

    @classmethod
    def for_params(cls, params: NetworkParams, learning_rate: float,
                   method: str = "adam") -> "OptimizerState":
        arrays = [a for pair in zip(params.weights, params.biases) for a in pair]
        return cls(learning_rate=learning_rate, method=method,
                   first_moments=tuple(np.zeros_like(a) for a in arrays),
                   second_moments=tuple(np.zeros_like(a) for a in arrays))


def apply_gradients(
    params: NetworkParams,
    gradients: NetworkParams,
    opt_state: OptimizerState,
) -> tuple[NetworkParams, OptimizerState]:
    """One optimizer step against the gradient; returns new params and state."""
    if params.shape_signature != gradients.shape_signature:
        raise ShapeError("gradient shapes do not match parameter shapes")
    flat_grads = [a for pair in zip(gradients.weights, gradients.biases) for a in pair]
    for g in flat_grads:
        if not np.isfinite(g).all():
            raise NumericError("non-finite gradient")
    flat_params = [a for pair in zip(params.weights, params.biases) for a in pair]

    lr = opt_state.learning_rate
    if opt_state.method == "sgd":
        updated = [p - lr * g for p, g in zip(flat_params, flat_grads)]
        new_state = opt_state
    else:
        t = opt_state.step + 1
        b1, b2, eps = opt_state.beta1, opt_state.beta2, opt_state.epsilon
        m = tuple(b1 * m0 + (1.0 - b1) * g
                  for m0, g in zip(opt_state.first_moments, flat_grads))
        v = tuple(b2 * v0 + (1.0 - b2) * g * g
                  for v0, g in zip(opt_state.second_moments, flat_grads))
        c1, c2 = 1.0 - b1 ** t, 1.0 - b2 ** t
        updated = [p - lr * (mi / c1) / (np.sqrt(vi / c2) + eps)
                   for p, mi, vi in zip(flat_params, m, v)]
        new_state = replace(opt_state, step=t, first_moments=m, second_moments=v)

    new_params = NetworkParams(updated[0::2], updated[1::2], list(params.activations))
    return new_params, new_state


def average_params(param_sets: Sequence[NetworkParams]) -> NetworkParams:
    """Element-wise arithmetic mean, summed in list order (bit-deterministic)."""
    if not param_sets:
        raise ProtocolError("cannot average an empty list of parameter sets")
    signature = param_sets[0].shape_signature
    for i, p in enumerate(param_sets[1:], start=1):
        if p.shape_signature != signature:
            raise ProtocolError(f"parameter set {i} is not averaging-compatible")
    n = float(len(param_sets))
    acc_w = [np.zeros_like(w) for w in param_sets[0].weights]
    acc_b = [np.zeros_like(b) for b in param_sets[0].biases]
    for p in param_sets:
        for aw, w in zip(acc_w, p.weights):
            aw += w
        for ab, b in zip(acc_b, p.biases):
            ab += b
    return NetworkParams([w / n for w in acc_w], [b / n for b in acc_b],
                         list(param_sets[0].activations))


def serialized_size(params: NetworkParams) -> int:
    """Exact byte length of :func:`serialize_params` for this shape."""
    n_layers = len(params.weights)
    return HEADER_BYTES + LAYER_HEADER_BYTES * n_layers + VALUE_BYTES * params.n_params


def serialize_params(params: NetworkParams) -> bytes:
    """Pack into the on-wire format.

    Layout: magic ``FWNP``, u16 version, u16 layer count; per layer u32
    input width, u32 output width, u8 activation code; then all values as
    little-endian float64, layer by layer, weights row-major then bias.
    """
    parts = [struct.pack("<4sHH", _MAGIC, _FORMAT_VERSION, len(params.weights))]
    for w, a in zip(params.weights, params.activations):
        parts.append(struct.pack("<IIB", w.shape[1], w.shape[0], _ACTIVATION_CODE[a]))
    for w, b in zip(params.weights, params.biases):
        parts.append(np.ascontiguousarray(w, dtype="<f8").tobytes())
        parts.append(np.ascontiguousarray(b, dtype="<f8").tobytes())
    return b"".join(parts)


def read_params(data: bytes, offset: int = 0) -> tuple[NetworkParams, int]:
    """Decode one parameter set starting at ``offset``; returns (params, next offset)."""
    end = offset + HEADER_BYTES
    if len(data) < end:
        raise FormatError("buffer too short for header")
    magic, version, n_layers = struct.unpack_from("<4sHH", data, offset)
    if magic != _MAGIC:
        raise FormatError(f"bad magic {magic!r}")
    if version != _FORMAT_VERSION:
        raise FormatError(f"unsupported format version {version}")
    if n_layers < 1:
        raise FormatError("layer count must be >= 1")

    specs = []
    for _ in range(n_layers):
        if len(data) < end + LAYER_HEADER_BYTES:
            raise FormatError("buffer too short for layer headers")
        in_w, out_w, code = struct.unpack_from("<IIB", data, end)
        end += LAYER_HEADER_BYTES
        if code >= len(ACTIVATIONS):
            raise FormatError(f"unknown activation code {code}")
        if in_w < 1 or out_w < 1:
            raise FormatError("layer widths must be >= 1")
        specs.append(LayerSpec(in_w, out_w, ACTIVATIONS[code]))

    weights, biases = [], []
    for spec in specs:
        n_values = spec.output_width * spec.input_width + spec.output_width
        if len(data) < end + VALUE_BYTES * n_values:
            raise FormatError("buffer too short for parameter values")
        values = np.frombuffer(data, dtype="<f8", count=n_values, offset=end)
        end += VALUE_BYTES * n_values
        split = spec.output_width * spec.input_width
        weights.append(values[:split].reshape(spec.output_width, spec.input_width).copy())
        biases.append(values[split:].copy())

    try:
        params = NetworkParams(weights, biases, [s.activation for s in specs])
    except (ShapeError, NumericError) as exc:
        raise FormatError(f"decoded payload is not a valid parameter set: {exc}") from exc
    return params, end


def deserialize_params(data: bytes) -> NetworkParams:
    """Inverse of :func:`serialize_params`; rejects trailing bytes."""
    params, end = read_params(data, 0)
    if end != len(data):
        raise FormatError(f"{len(data) - end} trailing bytes after parameter payload")
    return params
