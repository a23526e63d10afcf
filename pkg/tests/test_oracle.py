import itertools
import math

import numpy as np
import pytest

from gtct.decode import LatticeScorer
from gtct.numerics import JoinerLattice
from gtct.oracle import (
    MAX_T,
    OracleTooLarge,
    brute_force_loss,
    collapse_alignment,
    enumerate_alignments,
    enumerate_rnnt_alignments,
    exhaustive_decode,
    finite_diff_grad,
    relative_error,
    sequence_logprob,
)
from gtct.topology import build_graph

A, B = 1, 2


def test_enumeration_guard():
    g = build_graph("ctct", (A,), 0, 2)
    with pytest.raises(OracleTooLarge):
        enumerate_alignments(g, MAX_T + 1)
    with pytest.raises(OracleTooLarge):
        enumerate_alignments(g, 6, max_paths=3)
    with pytest.raises(OracleTooLarge):
        list(enumerate_rnnt_alignments(MAX_T + 1, 1))


def test_rnnt_alignment_shape():
    moves = list(enumerate_rnnt_alignments(3, 2))
    assert len(moves) == math.comb(4, 2)
    for m in moves:
        assert m[-1] == 0 and m.count(0) == 3 and m.count(1) == 2


@pytest.mark.parametrize("topology", ["ctct", "monornnt"])
def test_every_path_collapses_to_reference(topology):
    for y in [(A,), (A, A), (A, B, A)]:
        g = build_graph(topology, y, 0, 3)
        for p in enumerate_alignments(g, 5):
            assert collapse_alignment(p, g) == y


@pytest.mark.parametrize("topology", ["ctct", "monornnt"])
def test_monotonic_sequences_sum_to_one(topology, rng):
    # each frame picks one symbol, so the per-sequence sums partition probability 1
    T, K = 4, 3
    lat_full = JoinerLattice.random(T, T, K, rng)
    scorer = LatticeScorer(lat_full)
    total = []
    for U in range(T + 1):
        for y in itertools.product([A, B], repeat=U):
            lp = sequence_logprob(scorer, T, y, topology)
            if lp > -math.inf:
                total.append(math.exp(lp))
    assert math.fsum(total) == pytest.approx(1.0, abs=1e-12)


def test_finite_diff_eps_bounds():
    lat = JoinerLattice.uniform(1, 0, 2)
    for eps in (1e-8, 1e-2):
        with pytest.raises(ValueError):
            finite_diff_grad(lambda l: 0.0, lat, eps)


def test_finite_diff_on_known_function():
    lat = JoinerLattice(np.array([[[0.3, -0.2]]]))
    g = finite_diff_grad(lambda l: float(np.sum(l.logits ** 2)), lat, 1e-4)
    assert np.allclose(g, 2 * lat.logits)


def test_relative_error_floor():
    assert relative_error(np.array([1e-9]), np.array([0.0])) == pytest.approx(1e-6)
    assert relative_error(np.array([2.0]), np.array([1.0])) == pytest.approx(0.5)


def test_exhaustive_guards():
    scorer = LatticeScorer(JoinerLattice.uniform(5, 5, 3))
    with pytest.raises(OracleTooLarge):
        exhaustive_decode(scorer, 5, 3, 2)
    with pytest.raises(OracleTooLarge):
        exhaustive_decode(scorer, 3, 3, 4)


def test_exhaustive_tie_prefers_shorter():
    # uniform single frame, K=3: (), (a), (b) all have probability 1/3
    scorer = LatticeScorer(JoinerLattice.uniform(1, 1, 3))
    y, lp = exhaustive_decode(scorer, 1, 3, 1, "monornnt")
    assert y == () and lp == pytest.approx(math.log(1 / 3))


def test_brute_force_infeasible_is_inf(rng):
    g = build_graph("ctct", (A, A), 0, 3)
    assert brute_force_loss(g, JoinerLattice.random(2, 2, 3, rng)) == math.inf
