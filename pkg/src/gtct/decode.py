"""Time-synchronous beam search for CTC-T, MonoRNN-T and RNN-T.

Scorers are callables ``scorer(t, prefix) -> log-probs [K]`` exposing
``K``, ``blank_id`` and ``max_len`` (longest prefix the scorer can
condition on, or None for unbounded). The decoder state is ``u = len(prefix)``.
"""

from __future__ import annotations

import math
from collections import Counter
from dataclasses import dataclass, field, replace
from typing import Optional, Sequence

import numpy as np

from gtct.numerics import NEG_INF, JoinerLattice, log_add


@dataclass
class DecodeConfig:
    beam_size: int = 10
    lm_weight: float = 0.3
    max_emits_per_step: Optional[int] = None  # RNN-T only; None = unlimited
    length_reward: float = 0.0

    def __post_init__(self):
        if self.beam_size < 1:
            raise ValueError("beam_size must be >= 1")
        if self.lm_weight < 0:
            raise ValueError("lm_weight must be >= 0")
        if self.max_emits_per_step is not None and self.max_emits_per_step < 0:
            raise ValueError("max_emits_per_step must be >= 0")


@dataclass
class Hypothesis:
    prefix: tuple[int, ...]
    am_score: float
    lm_score: float = 0.0
    last_emit_t: int = -1
    consumed: int = 0  # score vectors consumed along the hypothesis
    # CTC-T split: mass of alignments currently on a blank / on a label node
    blank_score: float = NEG_INF
    label_score: float = NEG_INF

    @property
    def u(self) -> int:
        return len(self.prefix)


@dataclass
class DecodeResult:
    nbest: list[Hypothesis]
    runaway: bool = False
    frames: int = 0

    @property
    def best(self) -> Hypothesis:
        return self.nbest[0]


class LatticeScorer:
    """Serve rows of a fixed joiner lattice; the prefix content is ignored."""

    def __init__(self, lat: JoinerLattice):
        self.lat = lat
        self.K = lat.K
        self.blank_id = lat.blank_id
        self.max_len = lat.U
        self.calls = 0

    def __call__(self, t: int, prefix: Sequence[int]) -> np.ndarray:
        self.calls += 1
        return self.lat.logprobs[t, len(prefix)]


class AdversarialScorer:
    """One label outweighs blank everywhere: ``ln p(label) > ln p(blank)``."""

    def __init__(self, K: int = 3, blank_id: int = 0, label: int = 1, label_prob: float = 0.97):
        if label == blank_id or not 0 <= label < K:
            raise ValueError("label must be a non-blank symbol")
        rest = (1.0 - label_prob) / (K - 1)
        if not label_prob > rest:
            raise ValueError("label_prob must exceed the blank probability")
        row = np.full(K, math.log(rest))
        row[label] = math.log(label_prob)
        self.row = row
        self.K = K
        self.blank_id = blank_id
        self.max_len = None

    def __call__(self, t, prefix):
        return self.row


class NullLM:
    def score(self, prefix, label) -> float:
        return 0.0


def _combined(h: Hypothesis, cfg: DecodeConfig) -> float:
    return h.am_score + cfg.lm_weight * h.lm_score + cfg.length_reward * len(h.prefix)


def _rank_key(h: Hypothesis, cfg: DecodeConfig):
    # higher combined score, then higher am score, then shorter, then lexicographic
    return (-_combined(h, cfg), -h.am_score, len(h.prefix), h.prefix)


def _prune(hyps, cfg: DecodeConfig, n: Optional[int] = None) -> list[Hypothesis]:
    ordered = sorted(hyps, key=lambda h: _rank_key(h, cfg))
    return ordered[: n if n is not None else cfg.beam_size]


def _can_extend(scorer, prefix) -> bool:
    limit = getattr(scorer, "max_len", None)
    return limit is None or len(prefix) < limit


def beam_search_monotonic(scorer, topology: str, T: int, cfg: DecodeConfig | None = None,
                          lm=None) -> DecodeResult:
    """One score vector per frame per hypothesis; at most one new label per frame.

    ``topology`` is ``"ctct"`` (blank/label split with repeat collapse) or
    ``"monornnt"`` (every label frame extends the prefix).
    """
    cfg = cfg or DecodeConfig()
    if topology not in ("ctct", "monornnt"):
        raise ValueError(f"unknown monotonic topology {topology!r}")
    if T < 1:
        raise ValueError("T must be >= 1")
    lm = lm or NullLM()
    lm_w = cfg.lm_weight if not isinstance(lm, NullLM) else 0.0
    cfg_rank = replace(cfg, lm_weight=lm_w)
    blank = scorer.blank_id
    ctct = topology == "ctct"
    start = Hypothesis((), 0.0, blank_score=NEG_INF, label_score=NEG_INF)
    start.blank_score = 0.0  # the start node behaves like a blank for repeat rules
    beam = [start]
    for t in range(T):
        nxt: dict[tuple, Hypothesis] = {}

        def bump(prefix, lm_score, last_t, blank_part, label_part):
            h = nxt.get(prefix)
            if h is None:
                h = Hypothesis(prefix, NEG_INF, lm_score, last_t, t + 1)
                nxt[prefix] = h
            h.blank_score = log_add(h.blank_score, blank_part)
            h.label_score = log_add(h.label_score, label_part)
            h.last_emit_t = max(h.last_emit_t, last_t)

        for h in beam:
            row = scorer(t, h.prefix)
            total = log_add(h.blank_score, h.label_score)
            # blank: stay on the prefix
            bump(h.prefix, h.lm_score, h.last_emit_t, total + row[blank], NEG_INF)
            if ctct and h.prefix:
                # repeat of the last label on its self-loop, only from a label node
                bump(h.prefix, h.lm_score, t, NEG_INF, h.label_score + row[h.prefix[-1]])
            if not _can_extend(scorer, h.prefix):
                continue
            for k in range(scorer.K):
                if k == blank:
                    continue
                if ctct and h.prefix and k == h.prefix[-1]:
                    # a repeated label needs an intervening blank
                    src = h.blank_score
                else:
                    src = total
                if src == NEG_INF:
                    continue
                new = h.prefix + (k,)
                lm_s = h.lm_score + lm.score(h.prefix, k) if lm_w else h.lm_score
                bump(new, lm_s, t, NEG_INF, src + row[k])
        for h in nxt.values():
            h.am_score = log_add(h.blank_score, h.label_score)
        beam = _prune(nxt.values(), cfg_rank)
    return DecodeResult(beam, frames=T)


def greedy_rnnt(scorer, T: int, max_emits_per_step: Optional[int] = None) -> DecodeResult:
    """Best-symbol RNN-T decoding; labels repeat within a frame until blank wins.

    With no per-frame limit, more than ``10*T`` emissions aborts with
    ``runaway=True``.
    """
    cap = 10 * T
    prefix: list[int] = []
    score = 0.0
    consumed = 0
    last_t = -1
    for t in range(T):
        emitted = 0
        while True:
            row = scorer(t, tuple(prefix))
            consumed += 1
            limit_hit = max_emits_per_step is not None and emitted >= max_emits_per_step
            labels = [k for k in range(scorer.K) if k != scorer.blank_id]
            k = max(labels, key=lambda j: row[j])
            if limit_hit or not _can_extend(scorer, prefix) or row[k] <= row[scorer.blank_id]:
                score += row[scorer.blank_id]
                break
            prefix.append(k)
            score += row[k]
            emitted += 1
            last_t = t
            if len(prefix) > cap:
                h = Hypothesis(tuple(prefix), score, last_emit_t=last_t, consumed=consumed)
                return DecodeResult([h], runaway=True, frames=t + 1)
    return DecodeResult([Hypothesis(tuple(prefix), score, last_emit_t=last_t, consumed=consumed)], frames=T)


def beam_search_rnnt(scorer, T: int, cfg: DecodeConfig | None = None, lm=None) -> DecodeResult:
    """Time-synchronous RNN-T search with an inner label-expansion loop per frame.

    Within a frame, hypotheses emit labels (staying on the frame) until a
    blank moves them to the next frame. Expansion stops when no expanded
    hypothesis can enter the blank-terminated beam, after
    ``max_emits_per_step`` rounds, or, when unlimited, once any hypothesis
    exceeds ``10*T`` labels (``runaway=True``).
    """
    cfg = cfg or DecodeConfig()
    if T < 1:
        raise ValueError("T must be >= 1")
    lm = lm or NullLM()
    lm_w = cfg.lm_weight if not isinstance(lm, NullLM) else 0.0
    rank = replace(cfg, lm_weight=lm_w)
    blank = scorer.blank_id
    cap = 10 * T
    beam = [Hypothesis((), 0.0)]
    for t in range(T):
        done: dict[tuple, Hypothesis] = {}
        frontier = beam
        rounds = 0
        while frontier:
            expanded: dict[tuple, Hypothesis] = {}
            for h in frontier:
                row = scorer(t, h.prefix)
                d = done.get(h.prefix)
                am = h.am_score + row[blank]
                if d is None:
                    done[h.prefix] = Hypothesis(h.prefix, am, h.lm_score, h.last_emit_t, h.consumed + 1)
                else:
                    d.am_score = log_add(d.am_score, am)
                    d.consumed = max(d.consumed, h.consumed + 1)
                if cfg.max_emits_per_step is not None and rounds >= cfg.max_emits_per_step:
                    continue
                if not _can_extend(scorer, h.prefix):
                    continue
                for k in range(scorer.K):
                    if k == blank:
                        continue
                    new = h.prefix + (k,)
                    am_k = h.am_score + row[k]
                    e = expanded.get(new)
                    if e is None:
                        lm_s = h.lm_score + lm.score(h.prefix, k) if lm_w else h.lm_score
                        expanded[new] = Hypothesis(new, am_k, lm_s, t, h.consumed + 1)
                    else:
                        e.am_score = log_add(e.am_score, am_k)
            rounds += 1
            if not expanded:
                break
            frontier = _prune(expanded.values(), rank)
            if any(len(h.prefix) > cap for h in frontier):
                return DecodeResult(frontier, runaway=True, frames=t + 1)
            kept = _prune(done.values(), rank)
            if len(kept) >= cfg.beam_size:
                threshold = _combined(kept[-1], rank)
                frontier = [h for h in frontier if _combined(h, rank) > threshold]
        beam = _prune(done.values(), rank)
    return DecodeResult(beam, frames=T)


def decode(scorer, topology: str, T: int, cfg: DecodeConfig | None = None, lm=None) -> DecodeResult:
    if topology in ("rnnt", "ar_rnnt", "ar-rnnt"):
        return beam_search_rnnt(scorer, T, cfg, lm)
    return beam_search_monotonic(scorer, topology, T, cfg, lm)


# ---------------------------------------------------------------- n-gram LM

@dataclass
class NgramLM:
    """Add-one smoothed n-gram over the non-blank labels (order <= 3)."""

    order: int
    vocab: tuple[int, ...]
    counts: dict = field(default_factory=dict)
    context_counts: dict = field(default_factory=dict)

    def prob(self, prefix: Sequence[int], label: int) -> float:
        ctx = self._context(prefix)
        num = self.counts.get(ctx + (label,), 0) + 1
        den = self.context_counts.get(ctx, 0) + len(self.vocab)
        return num / den

    def score(self, prefix: Sequence[int], label: int) -> float:
        return math.log(self.prob(prefix, label))

    def _context(self, prefix):
        n = self.order - 1
        if n == 0:
            return ()
        padded = (BOS,) * n + tuple(prefix)
        return padded[len(padded) - n:]


BOS = -1


def train_ngram_lm(corpus: Sequence[Sequence[int]], order: int, vocab: Sequence[int]) -> NgramLM:
    """Maximum-likelihood counts with add-one smoothing; an empty corpus is uniform."""
    if not 1 <= order <= 3:
        raise ValueError("order must be 1, 2 or 3")
    vocab = tuple(sorted(set(int(v) for v in vocab)))
    if not vocab:
        raise ValueError("vocab must be non-empty")
    counts: Counter = Counter()
    ctx_counts: Counter = Counter()
    n = order - 1
    for sent in corpus:
        padded = (BOS,) * n + tuple(int(v) for v in sent)
        for i in range(n, len(padded)):
            ctx = padded[i - n:i]
            counts[ctx + (padded[i],)] += 1
            ctx_counts[ctx] += 1
    return NgramLM(order, vocab, dict(counts), dict(ctx_counts))


def hallucination_demo(T: int = 8, K: int = 3, beam_size: int = 10) -> dict:
    """Decode an adversarial scorer (label beats blank everywhere) with every topology.

    Uncapped RNN-T decoding keeps emitting within the first frame and hits the
    ``10*T`` safety cap; the monotonic decoders stop after ``T`` frames.
    """
    scorer = AdversarialScorer(K=K)
    out = {"T": T, "K": K, "label_logprob": float(scorer.row[1]),
           "blank_logprob": float(scorer.row[scorer.blank_id])}
    greedy = greedy_rnnt(scorer, T)
    out["rnnt_greedy"] = _demo_entry(greedy)
    out["rnnt_beam"] = _demo_entry(beam_search_rnnt(scorer, T, DecodeConfig(beam_size=beam_size)))
    out["rnnt_capped"] = _demo_entry(greedy_rnnt(scorer, T, max_emits_per_step=1))
    for topo in ("ctct", "monornnt"):
        out[f"{topo}_greedy"] = _demo_entry(beam_search_monotonic(scorer, topo, T, DecodeConfig(beam_size=1)))
        out[f"{topo}_beam"] = _demo_entry(
            beam_search_monotonic(scorer, topo, T, DecodeConfig(beam_size=beam_size)))
    return out


def _demo_entry(res: DecodeResult) -> dict:
    h = res.best
    return {"emissions": len(h.prefix), "runaway": res.runaway, "frames": res.frames,
            "score_vectors": h.consumed}
