"""Forward-backward transducer losses with gradients w.r.t. joiner logits.

All losses return ``-ln p`` and the gradient with respect to the
pre-softmax logits. An empty alignment set gives ``loss = +inf``, a zero
gradient and ``flagged = True`` instead of raising, so training loops can
skip the item.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np

from gtct.numerics import NEG_INF, JoinerLattice, log_softmax_rows
from gtct.topology import AlignmentGraph, build_ctct_graph, build_monornnt_graph, check_labels

POS_INF = float("inf")


@dataclass
class LossOutput:
    loss: float
    grad_logits: np.ndarray
    posterior_mass: np.ndarray
    flagged: bool = False
    step_logprob: Optional[np.ndarray] = None  # per-frame log total of transition posteriors

    @property
    def logprob(self) -> float:
        return -self.loss


def _empty(shape) -> LossOutput:
    return LossOutput(POS_INF, np.zeros(shape), np.zeros(shape), flagged=True,
                      step_logprob=np.full(shape[0], NEG_INF))


def _softmax_grad(lat_lp: np.ndarray, gamma: np.ndarray) -> np.ndarray:
    # d(-ln p)/dz_k = p_k * sum_j gamma_j - gamma_k
    return np.exp(lat_lp) * gamma.sum(axis=-1, keepdims=True) - gamma


# ---------------------------------------------------------------- graph loss

def _check_graph_lattice(g: AlignmentGraph, lat: JoinerLattice) -> None:
    if lat.K != g.K:
        raise ValueError(f"lattice K={lat.K} does not match graph K={g.K}")
    if lat.U < g.U:
        raise ValueError(f"lattice has U={lat.U} decoder states, graph needs {g.U}")


def gtct_forward(g: AlignmentGraph, lat: JoinerLattice) -> np.ndarray:
    """Forward table ``alpha[t, n]`` of shape ``[T+1, G+2]`` in the log domain.

    ``alpha[T, end]`` is ``ln p(G|X)``.
    """
    _check_graph_lattice(g, lat)
    T = lat.T
    src, dst, u, lab = g.edge_arrays()
    alpha = np.full((T + 1, len(g.nodes)), NEG_INF)
    alpha[0, g.start] = 0.0
    lp = lat.logprobs
    for t in range(1, T + 1):
        vals = alpha[t - 1, src] + lp[t - 1, u, lab]
        np.logaddexp.at(alpha[t], dst, vals)
    finals = g.final_nodes()
    alpha[T, g.end] = np.logaddexp.reduce(alpha[T, finals]) if finals else NEG_INF
    return alpha


def gtct_backward(g: AlignmentGraph, lat: JoinerLattice) -> np.ndarray:
    """Backward table ``beta[t, n]`` of shape ``[T+1, G+2]``; ``beta[0, start] = ln p(G|X)``.

    ``beta[t, n]`` covers frames ``t+1..T`` after sitting at node ``n`` at
    time ``t``; the observation at ``n`` itself is excluded.
    """
    _check_graph_lattice(g, lat)
    T = lat.T
    src, dst, u, lab = g.edge_arrays()
    beta = np.full((T + 1, len(g.nodes)), NEG_INF)
    beta[T, g.final_nodes()] = 0.0
    beta[T, g.end] = 0.0
    lp = lat.logprobs
    for t in range(T - 1, -1, -1):
        vals = lp[t, u, lab] + beta[t + 1, dst]
        np.logaddexp.at(beta[t], src, vals)
    return beta


def gtct_loss(g: AlignmentGraph, lat: JoinerLattice) -> LossOutput:
    """Full-sum loss over all length-T paths of ``g`` and its logit gradient."""
    alpha = gtct_forward(g, lat)
    beta = gtct_backward(g, lat)
    T = lat.T
    logp = alpha[T, g.end]
    if logp == NEG_INF:
        return _empty(lat.shape)
    src, dst, u, lab = g.edge_arrays()
    lp = lat.logprobs
    gamma = np.zeros(lat.shape)
    step = np.empty(T)
    U1, K = lat.shape[1], lat.shape[2]
    flat = u * K + lab
    for t in range(1, T + 1):
        # log posterior of traversing each edge during frame t
        le = alpha[t - 1, src] + lp[t - 1, u, lab] + beta[t, dst]
        step[t - 1] = np.logaddexp.reduce(le)
        post = np.exp(le - logp)
        np.add.at(gamma[t - 1].reshape(U1 * K), flat, post)
    grad = _softmax_grad(lp, gamma)
    return LossOutput(float(-logp), grad, gamma, step_logprob=step)


# ---------------------------------------------------------------- RNN-T

def _rnnt_tables(blank: np.ndarray, label: np.ndarray):
    """Forward/backward tables for the square RNN-T lattice.

    ``blank[t, u]`` is the blank log-prob at (t, u) with shape ``[T, U+1]``;
    ``label[t, u]`` is the log-prob of emitting ``y_{u+1}`` at (t, u), shape
    ``[T, U]``. Entries may be ``-inf`` to forbid a transition.
    """
    T, U1 = blank.shape
    U = U1 - 1
    alpha = np.full((T, U1), NEG_INF)
    beta = np.full((T, U1), NEG_INF)
    la = np.logaddexp
    for t in range(T):
        for u in range(U1):
            if t == 0 and u == 0:
                alpha[0, 0] = 0.0
                continue
            a = alpha[t - 1, u] + blank[t - 1, u] if t > 0 else NEG_INF
            b = alpha[t, u - 1] + label[t, u - 1] if u > 0 else NEG_INF
            alpha[t, u] = la(a, b)
    for t in range(T - 1, -1, -1):
        for u in range(U, -1, -1):
            if t == T - 1 and u == U:
                beta[t, u] = blank[t, u]
                continue
            a = beta[t + 1, u] + blank[t, u] if t < T - 1 else NEG_INF
            b = beta[t, u + 1] + label[t, u] if u < U else NEG_INF
            beta[t, u] = la(a, b)
    return alpha, beta


def _rnnt_from_parts(lat: JoinerLattice, y: tuple[int, ...], label: np.ndarray) -> LossOutput:
    lp = lat.logprobs
    T = lat.T
    U = len(y)
    blank = lp[:, : U + 1, lat.blank_id]
    alpha, beta = _rnnt_tables(blank, label)
    logp = alpha[T - 1, U] + blank[T - 1, U]
    if logp == NEG_INF or not math.isfinite(logp):
        return _empty(lat.shape)
    gamma = np.zeros(lat.shape)
    # blank transitions (t,u) -> (t+1,u); the final blank leaves (T-1, U)
    nxt = np.full((T, U + 1), NEG_INF)
    nxt[:-1] = beta[1:]
    nxt[T - 1, U] = 0.0
    gamma[:, : U + 1, lat.blank_id] = np.exp(alpha + blank + nxt - logp)
    if U:
        post = np.exp(alpha[:, :U] + label + beta[:, 1:] - logp)
        for j in range(U):
            gamma[:, j, y[j]] += post[:, j]
    grad = _softmax_grad(lp, gamma)
    # every path takes exactly one blank per frame, so this is ln p at each t
    step = np.logaddexp.reduce(alpha + blank + nxt, axis=1)
    return LossOutput(float(-logp), grad, gamma, step_logprob=step)


def _label_scores(lat: JoinerLattice, y: tuple[int, ...]) -> np.ndarray:
    lp = lat.logprobs
    U = len(y)
    if U == 0:
        return np.zeros((lat.T, 0))
    return lp[:, np.arange(U), np.asarray(y)]


def _check_rnnt(lat: JoinerLattice, y) -> tuple[int, ...]:
    y = check_labels(y, lat.blank_id, lat.K)
    if lat.U < len(y):
        raise ValueError(f"lattice has U={lat.U} decoder states, labels need {len(y)}")
    return y


def rnnt_loss(lat: JoinerLattice, y: Sequence[int]) -> LossOutput:
    """Classic RNN-T loss over the square lattice (labels consume no frame)."""
    y = _check_rnnt(lat, y)
    return _rnnt_from_parts(lat, y, _label_scores(lat, y))


def rnnt_tables(lat: JoinerLattice, y: Sequence[int]):
    """``(alpha, beta)`` RNN-T tables, each ``[T, U+1]``, ``alpha[0,0] = 0``."""
    y = _check_rnnt(lat, y)
    blank = lat.logprobs[:, : len(y) + 1, lat.blank_id]
    return _rnnt_tables(blank, _label_scores(lat, y))


def rnnt_diagonal_totals(lat: JoinerLattice, y: Sequence[int]) -> np.ndarray:
    """``log sum alpha*beta`` over each anti-diagonal ``t+u = n``.

    Every RNN-T path crosses each anti-diagonal exactly once, so all entries
    equal ``ln p(Y|X)``.
    """
    alpha, beta = rnnt_tables(lat, y)
    T, U1 = alpha.shape
    ab = alpha + beta
    out = []
    for n in range(T + U1 - 1):
        cells = [ab[t, n - t] for t in range(max(0, n - U1 + 1), min(T, n + 1))]
        out.append(np.logaddexp.reduce(cells))
    return np.array(out)


def alignment_band_mask(T: int, alignment: Sequence[int], left_buffer: int,
                        right_buffer: int) -> np.ndarray:
    """Boolean ``[T, U]`` mask: frame ``t`` (0-based) may emit label ``j`` iff
    ``t+1`` lies in ``[a_j - left, a_j + right]`` (``a_j`` 1-based)."""
    a = np.asarray(alignment, dtype=np.int64)
    frames = np.arange(1, T + 1)[:, None]
    return (frames >= a[None, :] - left_buffer) & (frames <= a[None, :] + right_buffer)


def ar_rnnt_loss(lat: JoinerLattice, y: Sequence[int], alignment: Sequence[int],
                 left_buffer: int, right_buffer: int) -> LossOutput:
    """Alignment-restricted RNN-T: label ``y_j`` may only be emitted within
    ``[a_j - left_buffer, a_j + right_buffer]`` (1-based frames)."""
    y = _check_rnnt(lat, y)
    alignment = [int(a) for a in alignment]
    if len(alignment) != len(y):
        raise ValueError("alignment needs one frame index per label")
    if any(b < a for a, b in zip(alignment, alignment[1:])):
        raise ValueError("alignment must be non-decreasing")
    if any(not 1 <= a <= lat.T for a in alignment):
        raise ValueError(f"alignment frames must lie in [1, {lat.T}]")
    if left_buffer < 0 or right_buffer < 0:
        raise ValueError("buffers must be non-negative")
    label = _label_scores(lat, y).copy()
    if y:
        label[~alignment_band_mask(lat.T, alignment, left_buffer, right_buffer)] = NEG_INF
    return _rnnt_from_parts(lat, y, label)


# ---------------------------------------------------------------- CTC

def ctc_loss(encoder_logits: np.ndarray, y: Sequence[int], blank_id: int = 0):
    """Standard CTC over the blank-interleaved label chain.

    Returns ``(loss, grad)`` with ``grad`` shaped like ``encoder_logits``
    ``[T, K]``; ``loss`` is ``+inf`` (zero gradient) when T is too short.
    """
    x = np.asarray(encoder_logits, dtype=np.float64)
    if x.ndim != 2:
        raise ValueError("encoder_logits must be [T, K]")
    T, K = x.shape
    y = check_labels(y, blank_id, K)
    lp = log_softmax_rows(x)
    ext = [blank_id]
    for v in y:
        ext += [v, blank_id]
    S = len(ext)
    ext_a = np.array(ext)
    # s-2 skip allowed into label positions whose label differs from two back
    skip = np.zeros(S, dtype=bool)
    for s in range(2, S):
        skip[s] = ext[s] != blank_id and ext[s] != ext[s - 2]
    alpha = np.full((T, S), NEG_INF)
    alpha[0, 0] = lp[0, ext[0]]
    if S > 1:
        alpha[0, 1] = lp[0, ext[1]]
    for t in range(1, T):
        prev = alpha[t - 1]
        acc = prev.copy()
        acc[1:] = np.logaddexp(acc[1:], prev[:-1])
        acc[2:] = np.where(skip[2:], np.logaddexp(acc[2:], prev[:-2]), acc[2:])
        alpha[t] = acc + lp[t, ext_a]
    beta = np.full((T, S), NEG_INF)
    beta[T - 1, S - 1] = 0.0
    if S > 1:
        beta[T - 1, S - 2] = 0.0
    for t in range(T - 2, -1, -1):
        nxt = beta[t + 1] + lp[t + 1, ext_a]
        acc = nxt.copy()
        acc[:-1] = np.logaddexp(acc[:-1], nxt[1:])
        acc[:-2] = np.where(skip[2:], np.logaddexp(acc[:-2], nxt[2:]), acc[:-2])
        beta[t] = acc
    logp = alpha[T - 1, S - 1]
    if S > 1:
        logp = np.logaddexp(logp, alpha[T - 1, S - 2])
    if logp == NEG_INF:
        return POS_INF, np.zeros_like(x)
    occ = np.exp(alpha + beta - logp)  # state occupancy, each state emits ext[s]
    gamma = np.zeros((T, K))
    for s in range(S):
        gamma[:, ext[s]] += occ[:, s]
    grad = np.exp(lp) * gamma.sum(axis=1, keepdims=True) - gamma
    return float(-logp), grad


def ctct_loss(lat: JoinerLattice, y: Sequence[int]) -> LossOutput:
    return gtct_loss(build_ctct_graph(y, lat.blank_id, lat.K), lat)


def monornnt_loss(lat: JoinerLattice, y: Sequence[int]) -> LossOutput:
    return gtct_loss(build_monornnt_graph(y, lat.blank_id, lat.K), lat)
