import itertools
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from gtct.decode import DecodeConfig, decode
from gtct.numerics import JoinerLattice
from gtct.oracle import lattice_from_scorer, relative_error
from gtct.toymodel import (
    ModelConfig,
    ToyModel,
    TrainConfig,
    TrainingDiverged,
    edit_distance,
    evaluate,
    gen_synthetic,
    train,
)
from gtct.toymodel.model import ModelScorer, forward_joint
from gtct.toymodel.train import learning_rate, transducer_loss


# ---------------------------------------------------------------- metrics

def _lev(a, b):
    if not a:
        return len(b)
    if not b:
        return len(a)
    return min(_lev(a[1:], b) + 1, _lev(a, b[1:]) + 1, _lev(a[1:], b[1:]) + (a[0] != b[0]))


@settings(max_examples=60, deadline=None)
@given(st.lists(st.integers(1, 3), max_size=5), st.lists(st.integers(1, 3), max_size=5))
def test_edit_distance_matches_recursion(ref, hyp):
    e = edit_distance(ref, hyp)
    assert e.total == _lev(tuple(ref), tuple(hyp))
    assert e.ins - e.dele == len(hyp) - len(ref)


def test_edit_distance_examples():
    assert edit_distance([1, 2, 3], [1, 3]).as_dict() == {"sub": 0, "ins": 0, "del": 1, "total": 1}
    assert edit_distance([], [1, 1]).ins == 2
    assert edit_distance([1], [2]).sub == 1


# ---------------------------------------------------------------- data

def test_data_is_deterministic_and_bounded():
    d1 = gen_synthetic(20, 4, 5, noise=0.1, seed=3)
    d2 = gen_synthetic(20, 4, 5, noise=0.1, seed=3)
    for a, b in zip(d1, d2):
        assert a.labels == b.labels and np.array_equal(a.X, b.X)
    for it in d1:
        assert 1 <= len(it.labels) <= min(4, it.X.shape[0] // 2)
        assert all(1 <= k < 4 for k in it.labels)
        assert it.X.shape[1] == 5
        assert list(it.alignment) == sorted(it.alignment)
        assert it.alignment[-1] <= it.X.shape[0]
        assert all(a != b for a, b in zip(it.labels, it.labels[1:]))


def test_noiseless_frames_encode_labels():
    d = gen_synthetic(5, 4, 4, noise=0.0, seed=0)
    for it in d:
        for k, a in zip(it.labels, it.alignment):
            assert it.X[a - 1, k] == 1.0


def test_data_validation():
    with pytest.raises(ValueError):
        gen_synthetic(3, 2, 4)
    with pytest.raises(ValueError):
        gen_synthetic(3, 4, 3)
    with pytest.raises(ValueError):
        gen_synthetic(3, 4, 4, span=(1, 2))


# ---------------------------------------------------------------- model

def test_zero_model_gives_uniform_lattice():
    m = ToyModel.zeros(ModelConfig(K=4, F=4))
    lat = forward_joint(m, np.ones((3, 4)), (1, 2))
    assert lat.shape == (3, 3, 4)
    assert np.allclose(lat.logprobs, -math.log(4))


def test_window_encoder_is_local(rng):
    m = ToyModel.init(ModelConfig(K=3, F=3, encoder="window", context=1), seed=0)
    X = rng.normal(size=(6, 3))
    h1, _ = m.encode(X)
    X2 = X.copy()
    X2[5] += 1.0
    h2, _ = m.encode(X2)
    assert np.allclose(h1[:4], h2[:4]) and not np.allclose(h1[4:], h2[4:])


def test_scorer_matches_forward(rng):
    m = ToyModel.init(ModelConfig(K=4, F=4), seed=1)
    X = rng.normal(size=(4, 4))
    y = (2, 1, 3)
    lat = forward_joint(m, X, y)
    lat2 = lattice_from_scorer(ModelScorer(m, X), 4, y)
    assert np.allclose(lat.logprobs, lat2.logprobs)


@pytest.mark.parametrize("loss,strategy,encoder", [
    ("rnnt", "scratch", "rnn"),
    ("ar_rnnt", "scratch", "rnn"),
    ("ctct", "scratch", "rnn"),
    ("monornnt", "scratch", "window"),
    ("ctct", "joint_ctc", "rnn"),
])
def test_parameter_gradients(loss, strategy, encoder, rng):
    m = ToyModel.init(ModelConfig(K=3, F=3, enc_hidden=4, pred_hidden=3, joint_hidden=4,
                                  encoder=encoder), seed=2)
    d = gen_synthetic(1, 3, 3, label_len=(1, 1), span=(2, 2), gap=(0, 0), noise=0.3, seed=5)
    item = d.items[0]
    cfg = TrainConfig(loss=loss, strategy=strategy, ar_left=1, ar_right=1)
    _, grads = transducer_loss(m, item, cfg)
    eps = 1e-4
    for name, p in m.params.items():
        num = np.zeros_like(p)
        for idx in np.ndindex(p.shape):
            old = p[idx]
            p[idx] = old + eps
            fp, _ = transducer_loss(m, item, cfg)
            p[idx] = old - eps
            fm, _ = transducer_loss(m, item, cfg)
            p[idx] = old
            num[idx] = (fp - fm) / (2 * eps)
        assert relative_error(grads[name], num) < 1e-4, name


def test_checkpoint_roundtrip(tmp_path):
    m = ToyModel.init(ModelConfig(K=4, F=5), seed=7)
    m.save(tmp_path / "ck", seed=7, lineage=["scratch:rnnt:seed7"])
    m2, manifest = ToyModel.load(tmp_path / "ck")
    assert manifest["seed"] == 7 and manifest["lineage"] == ["scratch:rnnt:seed7"]
    for k in m.params:
        assert np.array_equal(m.params[k], m2.params[k])


def test_init_from_shape_mismatch(tmp_path):
    ToyModel.init(ModelConfig(K=4, F=5), seed=0).save(tmp_path / "ck")
    d = gen_synthetic(4, 3, 5, seed=0)
    m = ToyModel.init(ModelConfig(K=3, F=5), seed=0)
    with pytest.raises(ValueError):
        train(m, d, TrainConfig(strategy="init_from", init_from=str(tmp_path / "ck"), epochs=1))


def test_init_from_copies_and_records_lineage(tmp_path):
    d = gen_synthetic(8, 4, 4, seed=0)
    src = ToyModel.init(ModelConfig(K=4, F=4), seed=3)
    src.save(tmp_path / "ck", lineage=["scratch:rnnt:seed3"])
    cfg = TrainConfig(loss="ctct", strategy="init_from", init_from=str(tmp_path / "ck"),
                      init_scope="encoder", epochs=1, base_lr=1e-9, warmup_iters=1)
    m, _ = train(ToyModel.init(ModelConfig(K=4, F=4), seed=9), d, cfg)
    assert np.allclose(m.params["enc_Wx"], src.params["enc_Wx"], atol=1e-6)
    assert not np.allclose(m.params["out_W"], src.params["out_W"])
    assert m.lineage == ["scratch:rnnt:seed3", "init_from:ctct:seed0"]


def test_learning_rate_schedules():
    cfg = TrainConfig(base_lr=1.0, warmup_iters=10)
    assert learning_rate(0, 100, cfg) == pytest.approx(0.1)
    assert learning_rate(9, 100, cfg) == pytest.approx(1.0)
    assert learning_rate(99, 100, cfg) < 0.01
    tri = TrainConfig(base_lr=1.0, warmup_iters=10, schedule="tri-stage")
    assert learning_rate(20, 100, tri) == 1.0
    assert learning_rate(100, 100, tri) == pytest.approx(0.05)


def test_training_is_deterministic():
    d = gen_synthetic(16, 4, 4, noise=0.2, seed=0)
    cfg = TrainConfig(loss="ctct", epochs=1, warmup_iters=2)
    m1, h1 = train(ToyModel.init(ModelConfig(K=4, F=4), seed=0), d, cfg)
    m2, h2 = train(ToyModel.init(ModelConfig(K=4, F=4), seed=0), d, cfg)
    assert h1 == h2
    assert all(np.array_equal(m1.params[k], m2.params[k]) for k in m1.params)


@pytest.mark.parametrize("loss", ["rnnt", "ctct", "monornnt", "ar_rnnt"])
def test_loss_decreases(loss):
    d = gen_synthetic(40, 4, 4, noise=0.0, seed=1)
    cfg = TrainConfig(loss=loss, epochs=3, optimizer="adam", base_lr=0.01, warmup_iters=5)
    _, hist = train(ToyModel.init(ModelConfig(K=4, F=4), seed=0), d, cfg)
    assert hist[-1]["train_loss"] < hist[0]["train_loss"]


@pytest.mark.slow
def test_noiseless_rnnt_learns():
    train_d = gen_synthetic(200, 4, 4, noise=0.0, seed=11)
    dev = gen_synthetic(40, 4, 4, noise=0.0, seed=12)
    cfg = TrainConfig(loss="rnnt", epochs=8, optimizer="adam", base_lr=0.01, warmup_iters=20)
    m, _ = train(ToyModel.init(ModelConfig(K=4, F=4), seed=0), train_d, cfg)
    assert evaluate(m, dev, "rnnt", DecodeConfig(beam_size=4))["token_error"] <= 0.05


def test_nan_parameters_diverge():
    d = gen_synthetic(4, 4, 4, seed=0)
    m = ToyModel.init(ModelConfig(K=4, F=4), seed=0)
    m.params["out_b"][:] = np.nan
    with pytest.raises(TrainingDiverged) as err:
        train(m, d, TrainConfig(epochs=1))
    assert err.value.epoch == 1


def test_config_validation():
    for bad in (dict(loss="x"), dict(strategy="x"), dict(strategy="init_from"),
                dict(ctc_weight=1.5), dict(epochs=0), dict(schedule="x"), dict(init_scope="x")):
        with pytest.raises(ValueError):
            TrainConfig(**bad)
