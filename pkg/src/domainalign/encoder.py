"""Feed-forward feature extractor with explicit forward/backward passes.

Hidden layers use tanh (smooth, so finite-difference checks stay clean);
the final linear output is L2-normalized onto the unit sphere.
"""

from dataclasses import dataclass

import numpy as np

from .numerics import (
    EPS_NORM,
    DegenerateVectorError,
    InvalidInputError,
    make_rng,
)


@dataclass
class EncoderParams:
    weights: list          # weights[l]: (fan_out, fan_in)
    biases: list           # biases[l]: (fan_out,)
    input_dim: int
    output_dim: int

    def copy(self):
        return EncoderParams(
            [w.copy() for w in self.weights],
            [b.copy() for b in self.biases],
            self.input_dim,
            self.output_dim,
        )

    def flatten(self):
        return np.concatenate(
            [w.ravel() for w in self.weights] + [b.ravel() for b in self.biases])

    def with_flat(self, theta):
        out = self.copy()
        off = 0
        for i, w in enumerate(out.weights):
            out.weights[i] = theta[off:off + w.size].reshape(w.shape).copy()
            off += w.size
        for i, b in enumerate(out.biases):
            out.biases[i] = theta[off:off + b.size].copy()
            off += b.size
        return out


@dataclass
class ForwardTape:
    x: np.ndarray          # (n, D) inputs
    hidden: list           # per hidden layer: post-tanh activations (n, h)
    pre_norm: np.ndarray   # (n, L) last linear output
    v: np.ndarray          # (n, L) unit-norm features


def init_encoder(input_dim, hidden_dims, output_dim, seed):
    """Glorot-uniform weights, zero biases."""
    dims = [input_dim] + list(hidden_dims) + [output_dim]
    if any(d < 1 for d in dims):
        raise InvalidInputError(f"all dims must be >= 1, got {dims}")
    rng = make_rng(seed)
    weights, biases = [], []
    for fan_in, fan_out in zip(dims[:-1], dims[1:]):
        bound = np.sqrt(6.0 / (fan_in + fan_out))
        weights.append(rng.uniform(-bound, bound, size=(fan_out, fan_in)))
        biases.append(np.zeros(fan_out))
    return EncoderParams(weights, biases, input_dim, output_dim)


def forward(params: EncoderParams, x) -> ForwardTape:
    """Run a single vector or an (n, D) batch through the encoder."""
    x = np.atleast_2d(np.asarray(x, dtype=np.float64))
    if x.shape[1] != params.input_dim:
        raise InvalidInputError(
            f"input dim {x.shape[1]} != encoder dim {params.input_dim}")
    h = x
    hidden = []
    n_layers = len(params.weights)
    for l in range(n_layers - 1):
        h = np.tanh(h @ params.weights[l].T + params.biases[l])
        hidden.append(h)
    pre_norm = h @ params.weights[-1].T + params.biases[-1]
    norms = np.linalg.norm(pre_norm, axis=1, keepdims=True)
    if np.any(norms < EPS_NORM):
        raise DegenerateVectorError("pre-normalization output has near-zero norm")
    v = pre_norm / norms
    return ForwardTape(x, hidden, pre_norm, v)


def backward(params: EncoderParams, tape: ForwardTape, grad_v):
    """Gradients of sum_i <grad_v_i, v_i> wrt parameters and inputs.

    grad_v is (n, L) matching the tape. Returns (weight grads, bias grads,
    grad wrt x of shape (n, D)); parameter grads are summed over the batch.
    """
    g = np.atleast_2d(np.asarray(grad_v, dtype=np.float64))
    if g.shape != tape.v.shape:
        raise InvalidInputError(f"grad shape {g.shape} != {tape.v.shape}")

    # through v = u / ||u||: (g - v <v, g>) / ||u||
    norms = np.linalg.norm(tape.pre_norm, axis=1, keepdims=True)
    d_pre = (g - tape.v * np.sum(tape.v * g, axis=1, keepdims=True)) / norms

    grad_w = [None] * len(params.weights)
    grad_b = [None] * len(params.biases)
    delta = d_pre
    for l in range(len(params.weights) - 1, -1, -1):
        below = tape.hidden[l - 1] if l > 0 else tape.x
        grad_w[l] = delta.T @ below
        grad_b[l] = delta.sum(axis=0)
        if l > 0:
            delta = (delta @ params.weights[l]) * (1.0 - tape.hidden[l - 1] ** 2)
    grad_x = delta @ params.weights[0]
    return grad_w, grad_b, grad_x


def encode(params: EncoderParams, x):
    """Unit-norm features only, no tape."""
    return forward(params, x).v
