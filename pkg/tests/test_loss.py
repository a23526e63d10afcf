import itertools
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from conftest import one_hot_lattice
from gtct.numerics import JoinerLattice
from gtct.loss import (
    alignment_band_mask,
    ar_rnnt_loss,
    ctc_loss,
    ctct_loss,
    gtct_backward,
    gtct_forward,
    gtct_loss,
    monornnt_loss,
    rnnt_diagonal_totals,
    rnnt_loss,
)
from gtct.oracle import brute_force_loss, brute_force_rnnt_loss, finite_diff_grad, relative_error
from gtct.topology import build_graph, count_paths

A, B = 1, 2
GRAPH_LOSSES = {"ctct": ctct_loss, "monornnt": monornnt_loss}


@pytest.mark.parametrize("topology", ["ctct", "monornnt"])
@pytest.mark.parametrize("y", [(), (A,), (A, A), (A, B), (B, A, B)])
def test_uniform_lattice_closed_form(topology, y):
    K, T = 3, 4
    g = build_graph(topology, y, 0, K)
    lat = JoinerLattice.uniform(T, len(y), K)
    expected = -(math.log(count_paths(g, T)) - T * math.log(K))
    assert gtct_loss(g, lat).loss == pytest.approx(expected, abs=1e-12)


@pytest.mark.parametrize("U", [0, 1, 2, 3])
def test_uniform_rnnt_closed_form(U):
    K, T = 3, 4
    # T blanks + U labels, final step is always a blank
    count = math.comb(T + U - 1, U)
    expected = -(math.log(count) - (T + U) * math.log(K))
    out = rnnt_loss(JoinerLattice.uniform(T, U, K), [A] * U)
    assert out.loss == pytest.approx(expected, abs=1e-12)


def test_empty_reference_sums_blanks(rng):
    lat = JoinerLattice.random(5, 0, 3, rng)
    blank_sum = -lat.logprobs[:, 0, 0].sum()
    for fn in (ctct_loss, monornnt_loss, rnnt_loss):
        assert fn(lat, ()).loss == pytest.approx(blank_sum, abs=1e-12)


def test_monornnt_unique_path(rng):
    # T == U: every frame must emit the next label
    lat = JoinerLattice.random(2, 2, 3, rng)
    g = build_graph("monornnt", (A, B), 0, 3)
    beta = gtct_backward(g, lat)
    expected = lat.logprobs[0, 0, A] + lat.logprobs[1, 1, B]
    assert beta[0, g.start] == pytest.approx(expected, abs=1e-12)
    assert gtct_forward(g, lat)[2, g.end] == pytest.approx(expected, abs=1e-12)


def test_one_hot_lattice_saturates():
    # frame 1 emits a, frame 2 emits b, everything else blank
    lat = one_hot_lattice(4, 2, 3, {(1, 0): A, (2, 1): B})
    for fn in (monornnt_loss, ctct_loss):
        assert fn(lat, (A, B)).loss < 1e-9
    assert fn(lat, (B, A)).loss > 20


@pytest.mark.parametrize("topology,y,T", [("ctct", (A, A), 2), ("monornnt", (A, B, A), 2),
                                          ("ctct", (A, B), 1)])
def test_infeasible_is_flagged(topology, y, T, rng):
    lat = JoinerLattice.random(T, len(y), 3, rng)
    out = GRAPH_LOSSES[topology](lat, y)
    assert out.loss == math.inf and out.flagged
    assert not out.grad_logits.any()


def test_rnnt_feasible_with_single_frame(rng):
    lat = JoinerLattice.random(1, 3, 3, rng)
    assert math.isfinite(rnnt_loss(lat, (A, B, A)).loss)


@pytest.mark.parametrize("topology", ["ctct", "monornnt"])
def test_posterior_mass_is_one_per_frame(topology, rng):
    lat = JoinerLattice.random(5, 2, 3, rng)
    out = GRAPH_LOSSES[topology](lat, (A, B))
    assert np.allclose(out.posterior_mass.sum(axis=(1, 2)), 1.0)
    assert np.allclose(out.step_logprob, -out.loss, atol=1e-12)


def test_rnnt_posterior_mass_covers_frames(rng):
    lat = JoinerLattice.random(4, 3, 3, rng)
    out = rnnt_loss(lat, (A, B, A))
    per_t = out.posterior_mass.sum(axis=(1, 2))
    assert np.all(per_t >= 1 - 1e-12)
    assert per_t.sum() == pytest.approx(4 + 3)


def test_rnnt_diagonals_constant(rng):
    lat = JoinerLattice.random(4, 3, 4, rng)
    out = rnnt_loss(lat, (A, B, 3))
    assert np.allclose(rnnt_diagonal_totals(lat, (A, B, 3)), -out.loss, atol=1e-12)
    assert np.allclose(out.step_logprob, -out.loss, atol=1e-12)


@settings(max_examples=30, deadline=None)
@given(st.integers(1, 4), st.lists(st.integers(1, 2), max_size=3), st.integers(0, 10**6))
def test_rnnt_matches_enumeration(T, y, seed):
    lat = JoinerLattice.random(T, len(y), 3, np.random.default_rng(seed))
    assert rnnt_loss(lat, y).loss == pytest.approx(brute_force_rnnt_loss(lat, y), abs=1e-10)


@settings(max_examples=30, deadline=None)
@given(st.sampled_from(["ctct", "monornnt"]), st.integers(1, 5),
       st.lists(st.integers(1, 2), max_size=3), st.integers(0, 10**6))
def test_graph_loss_matches_enumeration(topology, T, y, seed):
    lat = JoinerLattice.random(T, len(y), 3, np.random.default_rng(seed))
    g = build_graph(topology, y, 0, 3)
    got = gtct_loss(g, lat).loss
    ref = brute_force_loss(g, lat)
    if math.isinf(ref):
        assert math.isinf(got)
    else:
        assert got == pytest.approx(ref, abs=1e-10)


def _linear_monornnt(lat, y):
    # independent probability-domain recursion over (t, labels emitted)
    p = np.exp(lat.logprobs)
    T, U = lat.T, len(y)
    f = np.zeros((T + 1, U + 1))
    f[0, 0] = 1.0
    for t in range(T):
        for u in range(U + 1):
            f[t + 1, u] += f[t, u] * p[t, u, 0]
            if u < U:
                f[t + 1, u + 1] += f[t, u] * p[t, u, y[u]]
    return -math.log(f[T, U])


def test_monornnt_linear_domain(rng):
    for _ in range(10):
        lat = JoinerLattice.random(6, 3, 4, rng)
        y = tuple(rng.integers(1, 4, size=3))
        assert monornnt_loss(lat, y).loss == pytest.approx(_linear_monornnt(lat, y), abs=1e-10)


@pytest.mark.parametrize("name", ["ctct", "monornnt", "rnnt"])
def test_gradients_match_finite_differences(name, rng):
    y = (A, B)
    fn = {"ctct": ctct_loss, "monornnt": monornnt_loss, "rnnt": rnnt_loss}[name]
    lat = JoinerLattice.random(4, 2, 3, rng)
    num = finite_diff_grad(lambda l: fn(l, y).loss, lat, 1e-5)
    assert relative_error(fn(lat, y).grad_logits, num) < 1e-5


def test_ar_rnnt_wide_band_equals_rnnt(rng):
    lat = JoinerLattice.random(5, 2, 3, rng)
    full = rnnt_loss(lat, (A, B))
    ar = ar_rnnt_loss(lat, (A, B), [2, 4], 5, 5)
    assert ar.loss == pytest.approx(full.loss, abs=1e-12)
    assert np.allclose(ar.grad_logits, full.grad_logits)


def test_ar_rnnt_tight_band(rng):
    lat = JoinerLattice.random(5, 2, 3, rng)
    ar = ar_rnnt_loss(lat, (A, B), [2, 4], 0, 1)
    assert ar.loss >= rnnt_loss(lat, (A, B)).loss
    assert ar.loss == pytest.approx(brute_force_rnnt_loss(lat, (A, B), [2, 4], 0, 1), abs=1e-10)
    num = finite_diff_grad(lambda l: ar_rnnt_loss(l, (A, B), [2, 4], 0, 1).loss, lat, 1e-5)
    assert relative_error(ar.grad_logits, num) < 1e-5


def test_ar_rnnt_point_bands_stay_feasible(rng):
    lat = JoinerLattice.random(4, 2, 3, rng)
    # zero buffers pin each label to one frame; a valid alignment still admits a path
    out = ar_rnnt_loss(lat, (A, B), [4, 4], 0, 0)
    assert math.isfinite(out.loss)
    out = ar_rnnt_loss(lat, (A, B), [1, 1], 0, 0)
    assert math.isfinite(out.loss)
    m = alignment_band_mask(4, [2, 3], 0, 0)
    assert m.sum() == 2 and m[1, 0] and m[2, 1]


def test_ar_rnnt_rejects_bad_alignment(rng):
    lat = JoinerLattice.random(4, 2, 3, rng)
    for bad in ([3, 2], [0, 2], [2, 5], [2]):
        with pytest.raises(ValueError):
            ar_rnnt_loss(lat, (A, B), bad, 1, 1)
    with pytest.raises(ValueError):
        ar_rnnt_loss(lat, (A, B), [1, 2], -1, 1)


def test_ctc_examples():
    # uniform, T=2, y=(a), K=2: 3 of 4 paths collapse to (a)
    loss, grad = ctc_loss(np.zeros((2, 2)), [1])
    assert loss == pytest.approx(-math.log(0.75))
    assert np.allclose(grad.sum(axis=1), 0)
    loss, _ = ctc_loss(np.zeros((1, 3)), [1, 1])
    assert loss == math.inf


def test_ctc_equals_constant_lattice_ctct(rng):
    for _ in range(10):
        enc = rng.normal(size=(5, 3))
        y = tuple(rng.integers(1, 3, size=2))
        lat = JoinerLattice(np.repeat(enc[:, None, :], 3, axis=1))
        loss, grad = ctc_loss(enc, y)
        out = ctct_loss(lat, y)
        assert loss == pytest.approx(out.loss, abs=1e-12)
        assert np.allclose(grad, out.grad_logits.sum(axis=1))


def test_ctc_gradient(rng):
    enc = rng.normal(size=(4, 3))
    _, grad = ctc_loss(enc, (A, A))
    num = finite_diff_grad(lambda l: ctc_loss(l.logits[:, 0, :], (A, A))[0],
                           JoinerLattice(enc[:, None, :]), 1e-5)[:, 0, :]
    assert relative_error(grad, num) < 1e-5


def test_lattice_mismatch_rejected(rng):
    g = build_graph("ctct", (A, B), 0, 3)
    with pytest.raises(ValueError):
        gtct_loss(g, JoinerLattice.random(3, 1, 3, rng))
    with pytest.raises(ValueError):
        gtct_loss(g, JoinerLattice.random(3, 2, 4, rng))
