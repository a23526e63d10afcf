"""Brute-force references used to check the dynamic-programming code.

Nothing here shares code with the forward-backward recursions: full sums
come from explicit path enumeration and gradients from central differences.
All enumerations are guarded and fail loudly instead of truncating.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass
from typing import Callable, Optional, Sequence

import numpy as np

from gtct.numerics import NEG_INF, JoinerLattice, log_sum
from gtct.topology import AlignmentGraph, build_graph

MAX_T = 8
MAX_PATHS = 10**6


class OracleTooLarge(RuntimeError):
    pass


@dataclass(frozen=True)
class AlignmentPath:
    nodes: tuple[int, ...]  # start, T emitting nodes, end
    logprob: float


def enumerate_alignments(g: AlignmentGraph, lat_or_T, max_paths: int = MAX_PATHS) -> list[AlignmentPath]:
    """All start-to-end paths with exactly ``T`` emitting steps.

    Pass a ``JoinerLattice`` to get path log-probabilities, or an int ``T``
    to enumerate structure only (``logprob`` is then 0).
    """
    if isinstance(lat_or_T, JoinerLattice):
        lat, T = lat_or_T, lat_or_T.T
        lp = lat.logprobs
    else:
        lat, T, lp = None, int(lat_or_T), None
    if T > MAX_T:
        raise OracleTooLarge(f"T={T} exceeds enumeration guard {MAX_T}")
    out_edges: dict[int, list] = {}
    for e in g.edges:
        out_edges.setdefault(e.src, []).append(e)
    end = g.end
    paths: list[AlignmentPath] = []

    def walk(node, depth, trail, terms):
        if depth == T:
            if any(e.dst == end for e in out_edges.get(node, ())):
                if len(paths) >= max_paths:
                    raise OracleTooLarge(f"more than {max_paths} alignment paths")
                total = math.fsum(terms) if terms else 0.0
                paths.append(AlignmentPath(tuple(trail) + (end,), total))
            return
        for e in out_edges.get(node, ()):
            if e.dst == end:
                continue
            term = 0.0 if lp is None else float(lp[depth, e.u, g.nodes[e.dst].label])
            trail.append(e.dst)
            terms.append(term)
            walk(e.dst, depth + 1, trail, terms)
            trail.pop()
            terms.pop()

    walk(g.start, 0, [g.start], [])
    return paths


def collapse_alignment(path: AlignmentPath | Sequence[int], g: AlignmentGraph) -> tuple[int, ...]:
    """Label sequence read off a path: non-blank nodes, self-loop revisits dropped."""
    nodes = path.nodes if isinstance(path, AlignmentPath) else tuple(path)
    out = []
    prev = None
    for n in nodes:
        lab = g.nodes[n].label
        if lab is not None and lab != g.blank_id and n != prev:
            out.append(lab)
        prev = n
    return tuple(out)


def brute_force_loss(g: AlignmentGraph, lat: JoinerLattice) -> float:
    """``-ln`` of the summed probability of every enumerated path."""
    paths = enumerate_alignments(g, lat)
    if not paths:
        return math.inf
    return -log_sum([p.logprob for p in paths])


def enumerate_rnnt_alignments(T: int, U: int, max_paths: int = MAX_PATHS):
    """RNN-T alignments as tuples of moves: 0 = blank (advance t), 1 = label.

    Each alignment has T blanks and U labels and ends with a blank.
    """
    if T > MAX_T:
        raise OracleTooLarge(f"T={T} exceeds enumeration guard {MAX_T}")
    if math.comb(T - 1 + U, U) > max_paths:
        raise OracleTooLarge("too many RNN-T alignments")
    n = T - 1 + U
    for label_slots in itertools.combinations(range(n), U):
        moves = [0] * n
        for s in label_slots:
            moves[s] = 1
        yield tuple(moves) + (0,)


def rnnt_path_logprob(lat: JoinerLattice, y: Sequence[int], moves, allowed=None) -> float:
    """Direct product of observations along one RNN-T alignment.

    ``allowed(t, j)`` (0-based frame, 0-based label index) may veto label
    emissions; a vetoed path has probability zero.
    """
    lp = lat.logprobs
    t = u = 0
    terms = []
    for m in moves:
        if m == 0:
            terms.append(lp[t, u, lat.blank_id])
            t += 1
        else:
            if allowed is not None and not allowed(t, u):
                return NEG_INF
            terms.append(lp[t, u, y[u]])
            u += 1
    return math.fsum(terms)


def brute_force_rnnt_loss(lat: JoinerLattice, y: Sequence[int], alignment=None,
                          left_buffer: int = 0, right_buffer: int = 0) -> float:
    """Enumerated RNN-T loss; with ``alignment`` the AR-RNN-T band is enforced."""
    y = tuple(y)
    allowed = None
    if alignment is not None:
        a = list(alignment)

        def allowed(t, j):
            return a[j] - left_buffer <= t + 1 <= a[j] + right_buffer

    logs = [rnnt_path_logprob(lat, y, m, allowed) for m in enumerate_rnnt_alignments(lat.T, len(y))]
    total = log_sum(logs)
    return math.inf if total == NEG_INF else -total


def finite_diff_grad(loss_fn: Callable[[JoinerLattice], float], lat: JoinerLattice,
                     eps: float = 1e-5) -> np.ndarray:
    """Central differences of ``loss_fn`` with respect to every logit."""
    if not 1e-7 <= eps <= 1e-3:
        raise ValueError("eps must lie in [1e-7, 1e-3]")
    base = np.array(lat.logits)
    grad = np.zeros_like(base)
    for idx in np.ndindex(base.shape):
        x = base.copy()
        x[idx] += eps
        fp = loss_fn(lat.with_logits(x))
        x[idx] -= 2 * eps
        fm = loss_fn(lat.with_logits(x))
        grad[idx] = (fp - fm) / (2 * eps)
    return grad


def relative_error(analytic: np.ndarray, numeric: np.ndarray, floor: float = 1e-3) -> float:
    """Max elementwise ``|a - n| / max(|a|, |n|, floor)``."""
    a = np.asarray(analytic)
    n = np.asarray(numeric)
    denom = np.maximum(np.maximum(np.abs(a), np.abs(n)), floor)
    return float(np.max(np.abs(a - n) / denom)) if a.size else 0.0


def lattice_from_scorer(scorer, T: int, y: Sequence[int]) -> JoinerLattice:
    """Query ``scorer(t, prefix)`` for every frame and every prefix of ``y``."""
    rows = np.empty((T, len(y) + 1, scorer.K))
    for u in range(len(y) + 1):
        prefix = tuple(y[:u])
        for t in range(T):
            rows[t, u] = scorer(t, prefix)
    return JoinerLattice(rows, blank_id=scorer.blank_id)


def sequence_logprob(scorer, T: int, y: Sequence[int], topology: str) -> float:
    """Full-sum log-probability of ``y`` under ``topology`` by enumeration."""
    lat = lattice_from_scorer(scorer, T, y)
    if topology == "rnnt":
        return -brute_force_rnnt_loss(lat, y)
    g = build_graph(topology, y, scorer.blank_id, scorer.K)
    return -brute_force_loss(g, lat)


def exhaustive_decode(scorer, T: int, K: int, max_U: int, topology: str = "ctct",
                      max_K: int = 3, max_T: int = 4):
    """Best label sequence of length ``<= max_U`` by exhaustive full-sum scoring.

    Ties go to the shorter sequence, then the lexicographically smaller one.
    Returns ``(labels, logprob)``.
    """
    if K > max_K or T > max_T or max_U > T:
        raise OracleTooLarge(f"exhaustive decode limited to K<={max_K}, T<={max_T}, max_U<=T")
    labels = [k for k in range(K) if k != scorer.blank_id]
    best: Optional[tuple] = None
    for n in range(max_U + 1):
        for y in itertools.product(labels, repeat=n):
            score = sequence_logprob(scorer, T, y, topology)
            key = (-score, len(y), y)
            if best is None or key < best[0]:
                best = (key, y, score)
    return best[1], best[2]
