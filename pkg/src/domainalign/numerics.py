"""Small numerical kernels shared by every other module.

Everything runs in float64. Single precision makes the 1e-5 gradient
checks meaningless, so there is deliberately no dtype knob.
"""

import numpy as np

EPS_PROB = 1e-12   # clamp inside logs; tau=0.01 sharpening reaches machine zero
EPS_NORM = 1e-12   # a feature vector this small is a bug upstream


class InvalidInputError(ValueError):
    pass


class DegenerateVectorError(ValueError):
    """Raised when a vector with (near-)zero norm hits l2_normalize."""


def make_rng(seed: int) -> np.random.Generator:
    """Seeded PCG64 stream; same seed, same sequence."""
    return np.random.Generator(np.random.PCG64(seed))


def softmax(z):
    """Stable softmax over the last axis."""
    z = np.asarray(z, dtype=np.float64)
    if z.size == 0 or not np.all(np.isfinite(z)):
        raise InvalidInputError("softmax requires finite, non-empty logits")
    shifted = z - z.max(axis=-1, keepdims=True)
    e = np.exp(shifted)
    return e / e.sum(axis=-1, keepdims=True)


def log_softmax(z):
    z = np.asarray(z, dtype=np.float64)
    if z.size == 0 or not np.all(np.isfinite(z)):
        raise InvalidInputError("log_softmax requires finite, non-empty logits")
    shifted = z - z.max(axis=-1, keepdims=True)
    return shifted - np.log(np.exp(shifted).sum(axis=-1, keepdims=True))


def cross_entropy(p, q):
    """H(p, q) = -sum_c p_c log q_c, with q clamped at EPS_PROB."""
    p = np.asarray(p, dtype=np.float64)
    q = np.asarray(q, dtype=np.float64)
    if p.shape != q.shape:
        raise InvalidInputError(
            f"cross_entropy length mismatch: {p.shape} vs {q.shape}")
    return float(-np.sum(p * np.log(np.maximum(q, EPS_PROB))))


def l2_normalize(v):
    v = np.asarray(v, dtype=np.float64)
    n = np.linalg.norm(v)
    if n < EPS_NORM:
        raise DegenerateVectorError(f"norm {n} below {EPS_NORM}")
    return v / n


def l2_normalize_backward(v, upstream):
    """Jacobian-vector product of v -> v/||v||: (I/||v|| - v v^T/||v||^3) g."""
    v = np.asarray(v, dtype=np.float64)
    g = np.asarray(upstream, dtype=np.float64)
    n = np.linalg.norm(v)
    if n < EPS_NORM:
        raise DegenerateVectorError(f"norm {n} below {EPS_NORM}")
    return g / n - v * (v @ g) / n**3


def fd_gradient_check(loss_fn, params, h=1e-5):
    """Max relative error between loss_fn's analytic gradient and central
    finite differences.

    loss_fn(theta) -> (loss, grad) over a flat float64 vector; must be
    deterministic. h must lie in [1e-7, 1e-4].
    """
    if not (1e-7 <= h <= 1e-4):
        raise InvalidInputError(f"h={h} outside [1e-7, 1e-4]")
    theta = np.asarray(params, dtype=np.float64).copy()
    _, grad = loss_fn(theta)
    grad = np.asarray(grad, dtype=np.float64)
    worst = 0.0
    for i in range(theta.size):
        orig = theta[i]
        theta[i] = orig + h
        f_plus, _ = loss_fn(theta)
        theta[i] = orig - h
        f_minus, _ = loss_fn(theta)
        theta[i] = orig
        fd = (f_plus - f_minus) / (2.0 * h)
        denom = max(abs(fd), abs(grad[i]), 1e-8)
        worst = max(worst, abs(fd - grad[i]) / denom)
    return worst
