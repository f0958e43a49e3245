"""Training loop: initialize banks/clusters/classifiers, then SGD over
mixed-domain mini-batches with post-step memory updates, evaluating
cross-domain retrieval after every epoch.
"""

import struct
from dataclasses import dataclass, field

import numpy as np

from . import clustering, encoder, memory, objective, retrieval
from .data import DOMAIN_A, DOMAIN_B
from .numerics import InvalidInputError, make_rng

CHECKPOINT_MAGIC = b"CODC"
CHECKPOINT_VERSION = 1


@dataclass(frozen=True)
class Hyperparams:
    eta: float = 0.95           # memory momentum
    batch_size: int = 16        # per-domain samples per mini-batch
    lam: float = 0.01           # weight on the classifier-agreement term
    epochs: int = 20
    tau: float = 0.01           # soft-label temperature
    lr: float = 0.003
    n_k: int = 10               # base cluster count
    n_runs: int = 4             # cluster granularities n_k..n_runs*n_k
    hidden_dims: tuple = (128,)
    embed_dim: int = 64
    seed: int = 0
    variant: str = "full"       # full | iss | cca
    cca_reduction: str = "mean"

    def validate(self):
        if not 0.0 <= self.eta <= 1.0:
            raise InvalidInputError(f"eta {self.eta} outside [0,1]")
        if self.batch_size < 1 or self.epochs < 1 or self.n_runs < 1:
            raise InvalidInputError("batch_size, epochs, n_runs must be >= 1")
        if self.lam < 0 or self.tau <= 0 or self.lr < 0:
            raise InvalidInputError("need lam >= 0, tau > 0, lr >= 0")
        if self.variant not in ("full", "iss", "cca"):
            raise InvalidInputError(f"unknown variant {self.variant!r}")


@dataclass
class TrainState:
    params: encoder.EncoderParams
    pairs: list
    bank_a: memory.MemoryBank
    bank_b: memory.MemoryBank
    runs: list
    epoch: int = 0
    history: list = field(default_factory=list)   # append-only metric log


def initialize(train_a, train_b, hp: Hyperparams) -> TrainState:
    """Encoder init, banks filled from its features, clustering at all
    granularities, centroid-initialized classifiers."""
    hp.validate()
    params = encoder.init_encoder(
        train_a.dim, hp.hidden_dims, hp.embed_dim, hp.seed)
    bank_a = memory.init_bank(train_a, params, hp.eta)
    bank_b = memory.init_bank(train_b, params, hp.eta)
    runs = clustering.build_cluster_runs(
        bank_a.slots, bank_b.slots, hp.n_k, hp.n_runs, seed=hp.seed)
    pairs = objective.init_classifiers(runs)
    return TrainState(params, pairs, bank_a, bank_b, runs)


def _batches(n_a, n_b, batch_size, rng):
    """Pair index batches from both domains. The larger domain is consumed
    exactly once per epoch; the smaller one cycles with reshuffles."""
    big, small = (n_a, n_b) if n_a >= n_b else (n_b, n_a)
    big_perm = rng.permutation(big)
    small_perm = rng.permutation(small)
    small_pos = 0
    for start in range(0, big, batch_size):
        big_idx = big_perm[start:start + batch_size]
        take = len(big_idx)
        small_idx = []
        while take > 0:
            if small_pos == small:
                small_perm = rng.permutation(small)
                small_pos = 0
            grab = min(take, small - small_pos)
            small_idx.extend(small_perm[small_pos:small_pos + grab])
            small_pos += grab
            take -= grab
        small_idx = np.array(small_idx)
        yield (big_idx, small_idx) if n_a >= n_b else (small_idx, big_idx)


def epoch(state: TrainState, train_a, train_b, hp: Hyperparams, rng):
    feats_a_all = train_a.features
    feats_b_all = train_b.features
    ids_a = train_a.ids
    ids_b = train_b.ids
    use_iss = hp.variant in ("full", "iss")
    use_cca = hp.variant in ("full", "cca")

    for idx_a, idx_b in _batches(len(train_a), len(train_b), hp.batch_size, rng):
        tape_a = encoder.forward(state.params, feats_a_all[idx_a])
        tape_b = encoder.forward(state.params, feats_b_all[idx_b])
        mem_a = state.bank_a.snapshot(ids_a[idx_a])
        mem_b = state.bank_b.snapshot(ids_b[idx_b])

        report = objective.joint_loss(
            state.pairs, tape_a.v, mem_a, tape_b.v, mem_b,
            hp.lam, hp.tau, use_iss=use_iss, use_cca=use_cca,
            cca_reduction=hp.cca_reduction)

        gw_a, gb_a, _ = encoder.backward(state.params, tape_a, report.grad_v_a)
        gw_b, gb_b, _ = encoder.backward(state.params, tape_b, report.grad_v_b)

        for l in range(len(state.params.weights)):
            state.params.weights[l] -= hp.lr * (gw_a[l] + gw_b[l])
            state.params.biases[l] -= hp.lr * (gb_a[l] + gb_b[l])
        for pair, (dwa, dwb) in zip(state.pairs, report.grad_pairs):
            pair.w_a -= hp.lr * dwa
            pair.w_b -= hp.lr * dwb

        # bank update comes after the gradient step, using the pre-step features
        state.bank_a.update_batch(ids_a[idx_a], tape_a.v)
        state.bank_b.update_batch(ids_b[idx_b], tape_b.v)

    state.epoch += 1
    return state


def evaluate_cross_domain(params, test_a, test_b):
    """mAP@All in both directions on label-carrying test splits."""
    va = encoder.encode(params, test_a.features)
    vb = encoder.encode(params, test_b.features)
    la = np.array(test_a.labels)
    lb = np.array(test_b.labels)
    rep_ab = retrieval.evaluate_direction(va, la, vb, test_b.ids, lb, "A->B")
    rep_ba = retrieval.evaluate_direction(vb, lb, va, test_a.ids, la, "B->A")
    return rep_ab, rep_ba


def train(train_a, train_b, test_a, test_b, hp: Hyperparams):
    """Full run. Training only ever sees label-stripped views; the labeled
    test splits are used for the per-epoch retrieval metric."""
    hp.validate()
    train_a = train_a.without_labels()
    train_b = train_b.without_labels()
    state = initialize(train_a, train_b, hp)
    rng = make_rng(hp.seed + 1)

    for _ in range(hp.epochs):
        epoch(state, train_a, train_b, hp, rng)
        rep_ab, rep_ba = evaluate_cross_domain(state.params, test_a, test_b)
        state.history.append({
            "epoch": state.epoch,
            "A->B": rep_ab.map_all,
            "B->A": rep_ba.map_all,
        })

    summary = {}
    for direction in ("A->B", "B->A"):
        vals = [row[direction] for row in state.history]
        summary[direction] = {"best": max(vals), "last": vals[-1]}
    return state, summary


def write_metrics_csv(path, history, summary):
    with open(path, "w") as f:
        f.write("epoch,direction,mAP\n")
        for row in history:
            for direction in ("A->B", "B->A"):
                f.write(f"{row['epoch']},{direction},{row[direction]!r}\n")
        for direction in ("A->B", "B->A"):
            f.write(f"best,{direction},{summary[direction]['best']!r}\n")
            f.write(f"last,{direction},{summary[direction]['last']!r}\n")


# --- checkpoint ------------------------------------------------------------
# magic CODC, version byte, u8 layer count, per layer u64 rows/cols + f64
# weights (row-major) + f64 biases; u8 run count, per run u64 k, u64 L,
# W_A then W_B; per bank: u8 domain, f64 momentum, u64 N, u64 L, ids, rows.

def _pack_matrix(f, m):
    f.write(struct.pack("<QQ", m.shape[0], m.shape[1]))
    f.write(np.ascontiguousarray(m, dtype="<f8").tobytes())


def _unpack_matrix(blob, off):
    rows, cols = struct.unpack_from("<QQ", blob, off)
    off += 16
    m = np.frombuffer(blob, dtype="<f8", count=rows * cols, offset=off)
    return m.reshape(rows, cols).copy(), off + 8 * rows * cols


def save_checkpoint(path, state: TrainState):
    with open(path, "wb") as f:
        f.write(CHECKPOINT_MAGIC)
        f.write(bytes([CHECKPOINT_VERSION]))
        f.write(bytes([len(state.params.weights)]))
        for w, b in zip(state.params.weights, state.params.biases):
            _pack_matrix(f, w)
            f.write(np.ascontiguousarray(b, dtype="<f8").tobytes())
        f.write(bytes([len(state.pairs)]))
        for pair in state.pairs:
            _pack_matrix(f, pair.w_a)
            _pack_matrix(f, pair.w_b)
        for bank in (state.bank_a, state.bank_b):
            f.write(bytes([0 if bank.domain == DOMAIN_A else 1]))
            f.write(struct.pack("<d", bank.momentum))
            f.write(struct.pack("<Q", len(bank)))
            f.write(np.ascontiguousarray(bank.ids, dtype="<q").tobytes())
            _pack_matrix(f, bank.slots)


def load_checkpoint(path):
    with open(path, "rb") as f:
        blob = f.read()
    if blob[:4] != CHECKPOINT_MAGIC:
        raise InvalidInputError(f"{path}: not a checkpoint file")
    if blob[4] != CHECKPOINT_VERSION:
        raise InvalidInputError(f"{path}: unsupported version {blob[4]}")
    off = 5
    n_layers = blob[off]
    off += 1
    weights, biases = [], []
    for _ in range(n_layers):
        w, off = _unpack_matrix(blob, off)
        b = np.frombuffer(blob, dtype="<f8", count=w.shape[0], offset=off).copy()
        off += 8 * w.shape[0]
        weights.append(w)
        biases.append(b)
    params = encoder.EncoderParams(
        weights, biases, weights[0].shape[1], weights[-1].shape[0])

    n_pairs = blob[off]
    off += 1
    pairs = []
    for r in range(n_pairs):
        w_a, off = _unpack_matrix(blob, off)
        w_b, off = _unpack_matrix(blob, off)
        pairs.append(objective.ClassifierPair(r, w_a, w_b))

    banks = []
    for _ in range(2):
        dom = DOMAIN_A if blob[off] == 0 else DOMAIN_B
        off += 1
        (momentum,) = struct.unpack_from("<d", blob, off)
        off += 8
        (n,) = struct.unpack_from("<Q", blob, off)
        off += 8
        ids = np.frombuffer(blob, dtype="<q", count=n, offset=off).copy()
        off += 8 * n
        slots, off = _unpack_matrix(blob, off)
        banks.append(memory.MemoryBank(dom, ids, slots, momentum))

    return TrainState(params, pairs, banks[0], banks[1], runs=[])
