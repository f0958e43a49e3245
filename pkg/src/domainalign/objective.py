"""Training objective: in-domain self-matching against memory-bank soft
labels, cross-domain classifier agreement, and their weighted sum averaged
over the R cluster granularities. All gradients are analytic.
"""

from dataclasses import dataclass, field

import numpy as np

from .numerics import EPS_PROB, InvalidInputError, log_softmax, softmax


@dataclass
class ClassifierPair:
    run_index: int
    w_a: np.ndarray   # (k, L), bias-free
    w_b: np.ndarray

    def copy(self):
        return ClassifierPair(self.run_index, self.w_a.copy(), self.w_b.copy())


@dataclass
class LossReport:
    total: float
    l_in: float                      # mean over runs
    l_cross: float                   # mean over runs
    per_run: list                    # (l_in, l_cross, l_join) per run
    grad_v_a: np.ndarray
    grad_v_b: np.ndarray
    grad_pairs: list = field(default_factory=list)  # (dW_A, dW_B) per run


def init_classifiers(runs):
    """One bias-free linear classifier pair per cluster run, rows copied
    from that run's domain centroids."""
    return [
        ClassifierPair(r, run.centroids_a.copy(), run.centroids_b.copy())
        for r, run in enumerate(runs)
    ]


def soft_labels(w, memory_rows, tau):
    """Detached targets: softmax of the classifier logits on the memory
    rows, sharpened by tau (applied to the target branch only)."""
    if tau <= 0:
        raise InvalidInputError(f"tau must be > 0, got {tau}")
    return softmax((np.atleast_2d(memory_rows) @ w.T) / tau)


def iss_loss(w, feats, memory_rows, tau, soft_targets=None):
    """Self-matching loss for one domain and one classifier.

    Target per sample: softmax(w @ m / tau), detached (no gradient through
    the memory row or the target branch of w). Prediction: softmax(w @ v).
    Returns (mean cross-entropy, dW, dV). Passing soft_targets skips the
    target computation; tests use that to express the stop-gradient
    contract explicitly.
    """
    if tau <= 0:
        raise InvalidInputError(f"tau must be > 0, got {tau}")
    feats = np.atleast_2d(feats)
    memory_rows = np.atleast_2d(memory_rows)
    if feats.shape != memory_rows.shape:
        raise InvalidInputError(
            f"features {feats.shape} vs memory rows {memory_rows.shape}")
    n = feats.shape[0]

    # targets in log-space: tau=0.01 scales logits by 100
    p = soft_labels(w, memory_rows, tau) if soft_targets is None else soft_targets
    logits = feats @ w.T
    log_q = log_softmax(logits)
    q = np.exp(log_q)

    loss = float(-np.sum(p * np.maximum(log_q, np.log(EPS_PROB))) / n)
    d_logits = (q - p) / n
    return loss, d_logits.T @ feats, d_logits @ w


def cca_loss(w_a, w_b, feats_a, feats_b, reduction="mean"):
    """Classifier-agreement loss: per sample, the absolute difference of the
    two classifiers' logits reduced over the k dimensions (mean by default),
    then batch-averaged per domain and summed over the two domains.
    Subgradient of |.| at 0 is taken as 0."""
    if reduction not in ("mean", "sum"):
        raise InvalidInputError(f"unknown reduction {reduction!r}")
    diff_w = w_a - w_b
    k = w_a.shape[0]
    scale = 1.0 / k if reduction == "mean" else 1.0

    loss = 0.0
    dw_a = np.zeros_like(w_a)
    dw_b = np.zeros_like(w_b)
    grads_v = []
    for feats in (feats_a, feats_b):
        feats = np.atleast_2d(feats)
        if feats.shape[0] == 0:
            raise InvalidInputError("empty batch in classifier-agreement loss")
        n = feats.shape[0]
        d = feats @ diff_w.T                      # (n, k)
        loss += float(np.sum(np.abs(d)) * scale / n)
        s = np.sign(d) * (scale / n)
        dw_a += s.T @ feats
        dw_b -= s.T @ feats
        grads_v.append(s @ diff_w)
    return loss, dw_a, dw_b, grads_v[0], grads_v[1]


def joint_loss(pairs, feats_a, mem_a, feats_b, mem_b, lam, tau,
               use_iss=True, use_cca=True, cca_reduction="mean",
               iss_targets=None):
    """Per run: L_in^A + L_in^B + lam * (L_cross^A + L_cross^B); the report
    total is the mean over runs, and every gradient carries the 1/R factor.

    use_iss / use_cca switch off one term for ablations (the remaining term
    keeps weight 1). iss_targets, when given, is a list of (p_a, p_b)
    frozen soft labels per run (used by gradient checks to pin the detached
    target branch).
    """
    feats_a = np.atleast_2d(feats_a)
    feats_b = np.atleast_2d(feats_b)
    n_runs = len(pairs)
    grad_v_a = np.zeros_like(feats_a)
    grad_v_b = np.zeros_like(feats_b)
    grad_pairs = []
    per_run = []

    for r, pair in enumerate(pairs):
        l_in = 0.0
        l_cross = 0.0
        dw_a = np.zeros_like(pair.w_a)
        dw_b = np.zeros_like(pair.w_b)
        dva = np.zeros_like(feats_a)
        dvb = np.zeros_like(feats_b)

        p_a, p_b = iss_targets[r] if iss_targets is not None else (None, None)
        in_a, g_wa, g_va = iss_loss(pair.w_a, feats_a, mem_a, tau, soft_targets=p_a)
        in_b, g_wb, g_vb = iss_loss(pair.w_b, feats_b, mem_b, tau, soft_targets=p_b)
        l_in = in_a + in_b
        if use_iss:
            dw_a += g_wa
            dw_b += g_wb
            dva += g_va
            dvb += g_vb

        cross, c_wa, c_wb, c_va, c_vb = cca_loss(
            pair.w_a, pair.w_b, feats_a, feats_b, reduction=cca_reduction)
        l_cross = cross
        cca_weight = lam if use_iss else 1.0
        if use_cca:
            dw_a += cca_weight * c_wa
            dw_b += cca_weight * c_wb
            dva += cca_weight * c_va
            dvb += cca_weight * c_vb

        if use_iss and use_cca:
            l_join = l_in + lam * l_cross
        elif use_iss:
            l_join = l_in
        else:
            l_join = l_cross
        per_run.append((l_in, l_cross, l_join))

        grad_pairs.append((dw_a / n_runs, dw_b / n_runs))
        grad_v_a += dva / n_runs
        grad_v_b += dvb / n_runs

    total = float(np.mean([j for (_, _, j) in per_run]))
    return LossReport(
        total=total,
        l_in=float(np.mean([i for (i, _, _) in per_run])),
        l_cross=float(np.mean([c for (_, c, _) in per_run])),
        per_run=per_run,
        grad_v_a=grad_v_a,
        grad_v_b=grad_v_b,
        grad_pairs=grad_pairs,
    )
