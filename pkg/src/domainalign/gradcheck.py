"""Finite-difference verification of every analytic gradient: encoder
backprop, both loss terms, and the joint objective end to end. Used by the
CLI `gradcheck` command and by the test suite.
"""

from dataclasses import dataclass

import numpy as np

from . import encoder, objective
from .numerics import fd_gradient_check, make_rng

TOLERANCE = 1e-5


@dataclass
class CheckRow:
    name: str
    rel_err: float

    @property
    def passed(self):
        return self.rel_err <= TOLERANCE


def _unit_rows(rng, n, dim):
    m = rng.standard_normal((n, dim))
    return m / np.linalg.norm(m, axis=1, keepdims=True)


def check_encoder(seed, corrupt=False):
    """Gradient of a fixed linear functional of the encoder output."""
    rng = make_rng(seed)
    d, h, L, n = 6, 8, 5, 3
    params = encoder.init_encoder(d, [h], L, seed)
    x = rng.standard_normal((n, d))
    g = rng.standard_normal((n, L))
    theta0 = params.flatten()

    def loss_fn(theta):
        p = params.with_flat(theta)
        tape = encoder.forward(p, x)
        loss = float(np.sum(g * tape.v))
        gw, gb, _ = encoder.backward(p, tape, g)
        grad = np.concatenate([m.ravel() for m in gw] + [b.ravel() for b in gb])
        if corrupt:
            grad = grad + 1e-2
        return loss, grad

    return CheckRow(f"encoder[{seed}]", fd_gradient_check(loss_fn, theta0))


def check_iss(seed, corrupt=False):
    """ISS gradient wrt classifier weights and features jointly.

    Soft-label targets are frozen at the base point: they are a detached
    branch, so the finite-difference loss must hold them fixed too.
    """
    rng = make_rng(seed)
    n, k, L, tau = 4, 3, 5, 0.5
    w = rng.standard_normal((k, L))
    v = _unit_rows(rng, n, L)
    m = _unit_rows(rng, n, L)
    targets = objective.soft_labels(w, m, tau)
    theta0 = np.concatenate([w.ravel(), v.ravel()])

    def loss_fn(theta):
        w_ = theta[:k * L].reshape(k, L)
        v_ = theta[k * L:].reshape(n, L)
        loss, dw, dv = objective.iss_loss(w_, v_, m, tau, soft_targets=targets)
        grad = np.concatenate([dw.ravel(), dv.ravel()])
        if corrupt:
            grad = grad + 1e-2
        return loss, grad

    return CheckRow(f"iss[{seed}]", fd_gradient_check(loss_fn, theta0))


def check_cca(seed, corrupt=False):
    """Agreement-loss gradient, sampled away from |.| kinks."""
    rng = make_rng(seed)
    n, k, L = 3, 4, 5
    for _ in range(100):
        w_a = rng.standard_normal((k, L))
        w_b = rng.standard_normal((k, L))
        va = _unit_rows(rng, n, L)
        vb = _unit_rows(rng, n, L)
        diffs = np.vstack([va, vb]) @ (w_a - w_b).T
        if np.min(np.abs(diffs)) > 1e-3:
            break

    theta0 = np.concatenate([w_a.ravel(), w_b.ravel(), va.ravel(), vb.ravel()])

    def loss_fn(theta):
        o = 0
        wa = theta[o:o + k * L].reshape(k, L); o += k * L
        wb = theta[o:o + k * L].reshape(k, L); o += k * L
        va_ = theta[o:o + n * L].reshape(n, L); o += n * L
        vb_ = theta[o:].reshape(n, L)
        loss, dwa, dwb, dva, dvb = objective.cca_loss(wa, wb, va_, vb_)
        grad = np.concatenate([dwa.ravel(), dwb.ravel(), dva.ravel(), dvb.ravel()])
        if corrupt:
            grad = grad + 1e-2
        return loss, grad

    return CheckRow(f"cca[{seed}]", fd_gradient_check(loss_fn, theta0))


def check_joint(seed, corrupt=False):
    """Full composite: encoder parameters and all classifier weights."""
    rng = make_rng(seed)
    d, L, n = 5, 6, 3
    ks = [2, 4]
    lam, tau = 0.3, 0.5
    params = encoder.init_encoder(d, [7], L, seed)
    pairs = [
        objective.ClassifierPair(r, rng.standard_normal((k, L)),
                                 rng.standard_normal((k, L)))
        for r, k in enumerate(ks)
    ]
    x_a = rng.standard_normal((n, d))
    x_b = rng.standard_normal((n, d))
    mem_a = _unit_rows(rng, n, L)
    mem_b = _unit_rows(rng, n, L)
    # detached soft labels, frozen at the base point
    targets = [
        (objective.soft_labels(p.w_a, mem_a, tau),
         objective.soft_labels(p.w_b, mem_b, tau))
        for p in pairs
    ]

    sizes = [params.flatten().size] + [2 * k * L for k in ks]
    theta0 = np.concatenate(
        [params.flatten()]
        + [np.concatenate([p.w_a.ravel(), p.w_b.ravel()]) for p in pairs])

    def loss_fn(theta):
        off = sizes[0]
        p = params.with_flat(theta[:off])
        prs = []
        for r, k in enumerate(ks):
            wa = theta[off:off + k * L].reshape(k, L); off += k * L
            wb = theta[off:off + k * L].reshape(k, L); off += k * L
            prs.append(objective.ClassifierPair(r, wa, wb))
        tape_a = encoder.forward(p, x_a)
        tape_b = encoder.forward(p, x_b)
        rep = objective.joint_loss(prs, tape_a.v, mem_a, tape_b.v, mem_b,
                                   lam, tau, iss_targets=targets)
        gw_a, gb_a, _ = encoder.backward(p, tape_a, rep.grad_v_a)
        gw_b, gb_b, _ = encoder.backward(p, tape_b, rep.grad_v_b)
        g_theta = np.concatenate(
            [(wa + wb).ravel() for wa, wb in zip(gw_a, gw_b)]
            + [(ba + bb).ravel() for ba, bb in zip(gb_a, gb_b)])
        g_pairs = [np.concatenate([dwa.ravel(), dwb.ravel()])
                   for dwa, dwb in rep.grad_pairs]
        grad = np.concatenate([g_theta] + g_pairs)
        if corrupt:
            grad = grad + 1e-2
        return rep.total, grad

    return CheckRow(f"joint[{seed}]", fd_gradient_check(loss_fn, theta0))


def run_suite(seed=0, configs_per_check=5, corrupt=False):
    """One row per seeded micro-configuration; 4 checks x configs."""
    rows = []
    for i in range(configs_per_check):
        rows.append(check_encoder(seed + i, corrupt))
        rows.append(check_iss(seed + 100 + i, corrupt))
        rows.append(check_cca(seed + 200 + i, corrupt))
        rows.append(check_joint(seed + 300 + i, corrupt))
    return rows
