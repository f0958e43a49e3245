import dataclasses

import numpy as np
import pytest

from domainalign import encoder, objective, trainer
from domainalign.data import SynthConfig, generate_synthetic, split_train_test
from domainalign.numerics import make_rng


def tiny_problem(seed=0, classes=4, per_class=8, dim=6):
    cfg = SynthConfig(num_classes=classes, samples_per_class_per_domain=per_class,
                      input_dim=dim, seed=seed)
    ds_a, ds_b = generate_synthetic(cfg)
    tr_a, te_a = split_train_test(ds_a, 0.8, seed)
    tr_b, te_b = split_train_test(ds_b, 0.8, seed)
    return tr_a, tr_b, te_a, te_b


def tiny_hp(**kw):
    base = dict(batch_size=4, epochs=2, n_k=2, n_runs=2,
                hidden_dims=(8,), embed_dim=5, seed=0)
    base.update(kw)
    return trainer.Hyperparams(**base)


class TestInitialize:
    def test_bank_slots_match_encoder(self):
        tr_a, tr_b, _, _ = tiny_problem()
        hp = tiny_hp()
        state = trainer.initialize(tr_a, tr_b, hp)
        expected = encoder.encode(state.params, tr_a.features)
        for i, rec in enumerate(tr_a.records):
            np.testing.assert_array_equal(state.bank_a.read(rec.id), expected[i])

    def test_classifiers_from_centroids(self):
        tr_a, tr_b, _, _ = tiny_problem()
        state = trainer.initialize(tr_a, tr_b, tiny_hp())
        for run, pair in zip(state.runs, state.pairs):
            np.testing.assert_array_equal(pair.w_a, run.centroids_a)
            np.testing.assert_array_equal(pair.w_b, run.centroids_b)

    def test_deterministic(self):
        tr_a, tr_b, _, _ = tiny_problem()
        s1 = trainer.initialize(tr_a, tr_b, tiny_hp())
        s2 = trainer.initialize(tr_a, tr_b, tiny_hp())
        for w1, w2 in zip(s1.params.weights, s2.params.weights):
            np.testing.assert_array_equal(w1, w2)
        np.testing.assert_array_equal(s1.bank_a.slots, s2.bank_a.slots)
        for p1, p2 in zip(s1.pairs, s2.pairs):
            np.testing.assert_array_equal(p1.w_a, p2.w_a)


class TestEpoch:
    def test_zero_lr_leaves_params_but_updates_banks(self):
        tr_a, tr_b, _, _ = tiny_problem()
        hp = tiny_hp(lr=0.0)
        state = trainer.initialize(tr_a, tr_b, hp)
        w_before = [w.copy() for w in state.params.weights]
        slots_before = state.bank_a.slots.copy()
        trainer.epoch(state, tr_a, tr_b, hp, make_rng(1))
        for w0, w1 in zip(w_before, state.params.weights):
            np.testing.assert_array_equal(w0, w1)
        # banks moved (eta < 1 and features differ from slots only when
        # params changed; with lr=0 features equal init slots, so check
        # via a nonzero-lr epoch instead)
        hp2 = tiny_hp(lr=0.01)
        state2 = trainer.initialize(tr_a, tr_b, hp2)
        trainer.epoch(state2, tr_a, tr_b, hp2, make_rng(1))
        assert not np.array_equal(slots_before, state2.bank_a.slots)

    def test_single_batch_covers_everything(self):
        tr_a, tr_b, _, _ = tiny_problem(classes=2, per_class=4)
        # train split: 2 classes x 3 = 6 per domain
        hp = tiny_hp(batch_size=6, n_k=2, n_runs=1)
        batches = list(trainer._batches(6, 6, 6, make_rng(0)))
        assert len(batches) == 1
        idx_a, idx_b = batches[0]
        assert sorted(idx_a) == list(range(6))
        assert sorted(idx_b) == list(range(6))

    def test_smaller_domain_cycles(self):
        batches = list(trainer._batches(10, 4, 3, make_rng(0)))
        big_seen = np.concatenate([b[0] for b in batches])
        assert sorted(big_seen) == list(range(10))
        # tail batch kept
        assert len(batches[-1][0]) == 1

    def test_sgd_update_exactness(self):
        # one batch: theta_after == theta_before - lr * grad(theta_before),
        # with the gradient computed against the pre-step memory banks
        tr_a, tr_b, _, _ = tiny_problem(classes=2, per_class=4)
        hp = tiny_hp(batch_size=6, n_k=2, n_runs=1, lr=0.05)
        state = trainer.initialize(tr_a, tr_b, hp)
        params_before = state.params.copy()
        pairs_before = [p.copy() for p in state.pairs]
        bank_a_before = state.bank_a.slots.copy()
        bank_b_before = state.bank_b.slots.copy()

        rng_clone = make_rng(99)
        trainer.epoch(state, tr_a, tr_b, hp, make_rng(99))

        idx_a, idx_b = next(trainer._batches(6, 6, 6, rng_clone))
        tape_a = encoder.forward(params_before, tr_a.features[idx_a])
        tape_b = encoder.forward(params_before, tr_b.features[idx_b])
        rows_a = {int(i): r for r, i in enumerate(tr_a.ids)}
        mem_a = bank_a_before[[rows_a[int(i)] for i in tr_a.ids[idx_a]]]
        rows_b = {int(i): r for r, i in enumerate(tr_b.ids)}
        mem_b = bank_b_before[[rows_b[int(i)] for i in tr_b.ids[idx_b]]]
        rep = objective.joint_loss(pairs_before, tape_a.v, mem_a, tape_b.v,
                                   mem_b, hp.lam, hp.tau)
        gw_a, gb_a, _ = encoder.backward(params_before, tape_a, rep.grad_v_a)
        gw_b, gb_b, _ = encoder.backward(params_before, tape_b, rep.grad_v_b)
        for l in range(len(params_before.weights)):
            expected = params_before.weights[l] - hp.lr * (gw_a[l] + gw_b[l])
            np.testing.assert_allclose(state.params.weights[l], expected,
                                       atol=1e-12)
        # memory update used the pre-step features and followed the step
        eta = hp.eta
        for pos, i in enumerate(idx_a):
            blended = eta * mem_a[pos] + (1 - eta) * tape_a.v[pos]
            expected_slot = blended / np.linalg.norm(blended)
            np.testing.assert_allclose(
                state.bank_a.read(int(tr_a.ids[i])), expected_slot, atol=1e-12)

    def test_descent_on_small_step(self):
        tr_a, tr_b, _, _ = tiny_problem(classes=2, per_class=4)
        hp = tiny_hp(batch_size=6, n_k=2, n_runs=1, lr=1e-4)
        state = trainer.initialize(tr_a, tr_b, hp)

        def batch_loss(params, pairs):
            tape_a = encoder.forward(params, tr_a.features)
            tape_b = encoder.forward(params, tr_b.features)
            mem_a = state.bank_a.snapshot(tr_a.ids)
            mem_b = state.bank_b.snapshot(tr_b.ids)
            return objective.joint_loss(
                pairs, tape_a.v, mem_a, tape_b.v, mem_b, hp.lam, hp.tau).total

        before = batch_loss(state.params, state.pairs)
        trainer.epoch(state, tr_a, tr_b, hp, make_rng(3))
        after = batch_loss(state.params, state.pairs)
        assert after < before


class TestTrain:
    def test_metric_log_and_best_last(self):
        tr_a, tr_b, te_a, te_b = tiny_problem()
        hp = tiny_hp(epochs=3)
        state, summary = trainer.train(tr_a, tr_b, te_a, te_b, hp)
        assert len(state.history) == 3
        for direction in ("A->B", "B->A"):
            vals = [r[direction] for r in state.history]
            assert summary[direction]["best"] == max(vals)
            assert summary[direction]["last"] == vals[-1]

    def test_single_epoch_best_equals_last(self):
        tr_a, tr_b, te_a, te_b = tiny_problem()
        _, summary = trainer.train(tr_a, tr_b, te_a, te_b, tiny_hp(epochs=1))
        for direction in ("A->B", "B->A"):
            assert summary[direction]["best"] == summary[direction]["last"]

    def test_full_determinism(self):
        tr_a, tr_b, te_a, te_b = tiny_problem()
        s1, sum1 = trainer.train(tr_a, tr_b, te_a, te_b, tiny_hp())
        s2, sum2 = trainer.train(tr_a, tr_b, te_a, te_b, tiny_hp())
        for w1, w2 in zip(s1.params.weights, s2.params.weights):
            np.testing.assert_array_equal(w1, w2)
        assert s1.history == s2.history
        assert sum1 == sum2

    def test_training_never_sees_labels(self):
        # train() must hand label-stripped views to the optimization path
        tr_a, tr_b, te_a, te_b = tiny_problem()
        seen = {}
        orig = trainer.initialize

        def spy(a, b, hp):
            seen["labels"] = (a.labels, b.labels)
            return orig(a, b, hp)

        trainer_initialize = trainer.initialize
        trainer.initialize = spy
        try:
            trainer.train(tr_a, tr_b, te_a, te_b, tiny_hp(epochs=1))
        finally:
            trainer.initialize = trainer_initialize
        assert all(l is None for l in seen["labels"][0])
        assert all(l is None for l in seen["labels"][1])


class TestCheckpoint:
    def test_round_trip(self, tmp_path):
        tr_a, tr_b, te_a, te_b = tiny_problem()
        state, _ = trainer.train(tr_a, tr_b, te_a, te_b, tiny_hp(epochs=1))
        path = tmp_path / "ck.bin"
        trainer.save_checkpoint(path, state)
        back = trainer.load_checkpoint(path)
        for w1, w2 in zip(state.params.weights, back.params.weights):
            np.testing.assert_array_equal(w1, w2)
        for b1, b2 in zip(state.params.biases, back.params.biases):
            np.testing.assert_array_equal(b1, b2)
        for p1, p2 in zip(state.pairs, back.pairs):
            np.testing.assert_array_equal(p1.w_a, p2.w_a)
            np.testing.assert_array_equal(p1.w_b, p2.w_b)
        np.testing.assert_array_equal(state.bank_a.slots, back.bank_a.slots)
        np.testing.assert_array_equal(state.bank_b.ids, back.bank_b.ids)
        assert back.bank_a.momentum == state.bank_a.momentum

    def test_rejects_garbage(self, tmp_path):
        path = tmp_path / "bad.bin"
        path.write_bytes(b"XXXX123")
        with pytest.raises(Exception):
            trainer.load_checkpoint(path)


def test_hyperparams_validation():
    with pytest.raises(Exception):
        trainer.Hyperparams(eta=1.5).validate()
    with pytest.raises(Exception):
        trainer.Hyperparams(tau=0.0).validate()
    with pytest.raises(Exception):
        trainer.Hyperparams(variant="nope").validate()
    trainer.Hyperparams().validate()


def test_hyperparams_defaults_match_protocol():
    hp = trainer.Hyperparams()
    assert (hp.eta, hp.batch_size, hp.lam) == (0.95, 16, 0.01)
    assert (hp.epochs, hp.tau, hp.lr) == (20, 0.01, 0.003)
    assert (hp.n_k, hp.n_runs) == (10, 4)


def test_metrics_csv(tmp_path):
    history = [{"epoch": 1, "A->B": 0.5, "B->A": 0.25}]
    summary = {"A->B": {"best": 0.5, "last": 0.5},
               "B->A": {"best": 0.25, "last": 0.25}}
    path = tmp_path / "m.csv"
    trainer.write_metrics_csv(path, history, summary)
    lines = path.read_text().splitlines()
    assert lines[0] == "epoch,direction,mAP"
    assert lines[1] == "1,A->B,0.5"
    assert any(l.startswith("best,") for l in lines)
    assert any(l.startswith("last,") for l in lines)
