"""Acceptance checks shared by ``tests/test_acceptance.py`` and ``gtct report``."""

from __future__ import annotations

import math
import time
from dataclasses import dataclass, field

import numpy as np

from gtct.decode import (
    DecodeConfig,
    LatticeScorer,
    beam_search_monotonic,
    hallucination_demo,
)
from gtct.loss import ar_rnnt_loss, ctc_loss, gtct_forward, gtct_loss, rnnt_loss
from gtct.numerics import JoinerLattice
from gtct.oracle import (
    brute_force_loss,
    brute_force_rnnt_loss,
    exhaustive_decode,
    finite_diff_grad,
    relative_error,
)
from gtct.topology import build_ctct_graph, build_graph, build_monornnt_graph

ORACLE_TOL = 1e-10
GRAD_TOL = 1e-6
GRAD_EPS = 1e-5
CLOSED_FORM_TOL = 1e-12
STEP_TOL = 1e-10
REDUCTION_TOL = 1e-10
AGREEMENT_MIN = 90


@dataclass
class CriterionResult:
    number: int
    name: str
    passed: bool
    detail: dict = field(default_factory=dict)
    seconds: float = 0.0

    def line(self) -> str:
        status = "PASS" if self.passed else "FAIL"
        return f"[{status}] {self.number}. {self.name} ({self.seconds:.1f}s) {self.detail}"


def _timed(number, name, fn, limit=None):
    t0 = time.time()
    passed, detail = fn()
    dt = time.time() - t0
    if limit is not None:
        detail["time_limit_s"] = limit
        passed = passed and dt <= limit
    return CriterionResult(number, name, bool(passed), detail, dt)


def random_instance(rng, max_T=6, max_U=3, max_K=5, feasible_for=None):
    """Random ``(lattice, labels)`` with normal logits; optionally long enough for a topology."""
    while True:
        K = int(rng.integers(2, max_K + 1))
        U = int(rng.integers(0, max_U + 1))
        T = int(rng.integers(1, max_T + 1))
        y = [int(v) for v in rng.integers(1, K, size=U)]
        if feasible_for is not None:
            g = build_graph(feasible_for, y, 0, K)
            if T < g.min_path_len:
                continue
        return JoinerLattice.random(T, U, K, rng), y


def _loss_gap(a, b):
    if math.isinf(a) and math.isinf(b):
        return 0.0
    return abs(a - b)


# ------------------------------------------------------------------ 1

def oracle_equivalence(trials=200, seed=0):
    rng = np.random.default_rng(seed)
    worst = {}
    for topo in ("ctct", "monornnt", "rnnt"):
        w = 0.0
        for _ in range(trials):
            lat, y = random_instance(rng)
            if topo == "rnnt":
                gap = _loss_gap(rnnt_loss(lat, y).loss, brute_force_rnnt_loss(lat, y))
            else:
                g = build_graph(topo, y, 0, lat.K)
                gap = _loss_gap(gtct_loss(g, lat).loss, brute_force_loss(g, lat))
            w = max(w, gap)
        worst[topo] = w
    return all(v <= ORACLE_TOL for v in worst.values()), {"max_abs_gap": worst, "tol": ORACLE_TOL}


# ------------------------------------------------------------------ 2

def _feasible_alignment(rng, T, U):
    a = np.sort(rng.integers(1, T + 1, size=U))
    return [int(v) for v in a], int(rng.integers(0, 3)), int(rng.integers(0, 3))


def gradient_instance(kind, rng):
    """``(analytic_grad, loss_fn, lattice)`` for one random feasible instance."""
    while True:
        lat, y = random_instance(rng, max_T=5, max_U=3, max_K=5)
        if kind == "rnnt":
            out = rnnt_loss(lat, y)
            fn = lambda l, y=y: rnnt_loss(l, y).loss
        elif kind == "ar-rnnt":
            a, left, right = _feasible_alignment(rng, lat.T, len(y))
            out = ar_rnnt_loss(lat, y, a, left, right)
            fn = lambda l, y=y, a=a, le=left, r=right: ar_rnnt_loss(l, y, a, le, r).loss
        elif kind == "ctc":
            x = lat.logits[:, 0, :]
            loss, grad = ctc_loss(x, y)
            if math.isinf(loss):
                continue
            x_lat = JoinerLattice(x[:, None, :])
            fn = lambda l, y=y: ctc_loss(l.logits[:, 0, :], y)[0]
            return grad[:, None, :], fn, x_lat
        else:
            g = build_graph(kind, y, 0, lat.K)
            out = gtct_loss(g, lat)
            end, T = g.end, lat.T
            fn = lambda l, g=g, end=end, T=T: -gtct_forward(g, l)[T, end]
        if out.flagged:
            continue
        return out.grad_logits, fn, lat


def gradient_checks(trials=20, seed=1, eps=GRAD_EPS):
    rng = np.random.default_rng(seed)
    worst = {}
    for kind in ("rnnt", "ctct", "monornnt", "ar-rnnt", "ctc"):
        w = 0.0
        for _ in range(trials):
            grad, fn, lat = gradient_instance(kind, rng)
            w = max(w, relative_error(grad, finite_diff_grad(fn, lat, eps)))
        worst[kind] = w
    return all(v <= GRAD_TOL for v in worst.values()), {"max_rel_err": worst, "tol": GRAD_TOL, "eps": eps}


# ------------------------------------------------------------------ 3

def closed_form_uniform():
    lat = JoinerLattice.uniform(2, 1, 2)
    got = {
        "rnnt": rnnt_loss(lat, [1]).loss,
        "monornnt": gtct_loss(build_monornnt_graph([1], 0, 2), lat).loss,
        "ctct": gtct_loss(build_ctct_graph([1], 0, 2), lat).loss,
    }
    want = {"rnnt": math.log(4), "monornnt": math.log(2), "ctct": math.log(4 / 3)}
    gaps = {k: abs(got[k] - want[k]) for k in want}
    return all(v <= CLOSED_FORM_TOL for v in gaps.values()), {"loss": got, "abs_gap": gaps}


# ------------------------------------------------------------------ 4

def step_consistency(trials=50, seed=2):
    rng = np.random.default_rng(seed)
    worst = 0.0
    n = 0
    for topo in ("ctct", "monornnt"):
        for _ in range(trials):
            lat, y = random_instance(rng, feasible_for=topo)
            out = gtct_loss(build_graph(topo, y, 0, lat.K), lat)
            spread = float(np.max(np.abs(out.step_logprob + out.loss)))
            worst = max(worst, spread)
            n += 1
    return worst <= STEP_TOL, {"max_abs_dev": worst, "instances": n, "tol": STEP_TOL}


# ------------------------------------------------------------------ 5

def ctc_reduction(trials=50, seed=3):
    rng = np.random.default_rng(seed)
    worst = 0.0
    for _ in range(trials):
        lat, y = random_instance(rng, feasible_for="ctct")
        x = lat.logits[:, 0, :]
        flat = JoinerLattice(np.repeat(x[:, None, :], len(y) + 1, axis=1))
        a, _ = ctc_loss(x, y)
        b = gtct_loss(build_ctct_graph(y, 0, lat.K), flat).loss
        worst = max(worst, _loss_gap(a, b))
    return worst <= REDUCTION_TOL, {"max_abs_gap": worst, "tol": REDUCTION_TOL}


# ------------------------------------------------------------------ 6

def decoder_fuzz(trials=1000, seed=4):
    rng = np.random.default_rng(seed)
    violations = 0
    for i in range(trials):
        T = int(rng.integers(1, 9))
        K = int(rng.integers(2, 6))
        U = int(rng.integers(0, T + 1))
        lat = JoinerLattice.random(T, U, K, rng, scale=2.0)
        topo = ("ctct", "monornnt")[i % 2]
        beam = int(rng.integers(1, 11))
        res = beam_search_monotonic(LatticeScorer(lat), topo, T, DecodeConfig(beam_size=beam))
        for h in res.nbest:
            if h.consumed != T or len(h.prefix) > T:
                violations += 1
    return violations == 0, {"instances": trials, "violations": violations}


def beam_vs_exhaustive(trials=100, seed=5, topologies=("ctct", "monornnt")):
    rng = np.random.default_rng(seed)
    agree = {}
    for topo in topologies:
        n = 0
        for _ in range(trials):
            T = int(rng.integers(1, 5))
            K = int(rng.integers(2, 4))
            lat = JoinerLattice.random(T, T, K, rng, scale=2.0)
            scorer = LatticeScorer(lat)
            best, _ = exhaustive_decode(scorer, T, K, T, topo)
            res = beam_search_monotonic(scorer, topo, T, DecodeConfig(beam_size=10))
            n += res.best.prefix == best
        agree[topo] = n
    return all(v >= AGREEMENT_MIN for v in agree.values()), {
        "agreement": agree, "trials": trials, "required": AGREEMENT_MIN}


def decoder_invariants():
    ok1, d1 = decoder_fuzz()
    ok2, d2 = beam_vs_exhaustive()
    return ok1 and ok2, {"fuzz": d1, "beam_vs_exhaustive": d2}


# ------------------------------------------------------------------ 7

def hallucination(T=8):
    a = hallucination_demo(T)
    b = hallucination_demo(T)
    ok = (
        a["rnnt_greedy"]["runaway"]
        and a["rnnt_greedy"]["emissions"] > 10 * T
        and all(not a[k]["runaway"] and a[k]["emissions"] <= T and a[k]["score_vectors"] == T
                for k in ("ctct_greedy", "ctct_beam", "monornnt_greedy", "monornnt_beam"))
        and a == b
    )
    return ok, {"demo": a, "deterministic": a == b}


# ------------------------------------------------------------------ 8, 9

def training_study(seeds=(0, 1, 2)):
    from gtct.toymodel.experiments import strategy_study

    return strategy_study(seeds)


def strategy_ordering(study):
    checks = study["checks"]
    counts = {
        "a_ctct_init_rnnt_le_scratch": sum(c["ctct_init_le_scratch"] for c in checks),
        "b_monornnt_init_rnnt_le_scratch": sum(c["monornnt_init_le_scratch"] for c in checks),
        "d_ctct_joint_ctc_le_scratch": sum(c["ctct_joint_le_scratch"] for c in checks),
    }
    rnnt_delta = [c["rnnt_self_init_delta"] for c in checks]
    errors = [{k: v["dev_token_error"] for k, v in r["runs"].items()} for r in study["results"]]
    seconds = sum(r["seconds"] for r in study["results"])
    ok = all(v >= 2 for v in counts.values()) and seconds <= 600
    return ok, {"seeds_holding": counts, "c_rnnt_self_init_delta": rnnt_delta,
                "dev_token_error": errors, "seconds": round(seconds, 1), "time_limit_s": 600}


def shallow_fusion(study):
    checks = study["checks"]
    no_worse = sum(c["fusion_no_worse"] for c in checks)
    identical = all(c["fusion_zero_identical"] for c in checks)
    fusion = [r["fusion"] for r in study["results"]]
    return identical and no_worse >= 2, {"zero_weight_identical": identical,
                                         "seeds_no_worse": no_worse, "fusion": fusion}


def run_all(include_training=True) -> list[CriterionResult]:
    results = [
        _timed(1, "oracle equivalence", oracle_equivalence, limit=60),
        _timed(2, "gradient checks", gradient_checks, limit=60),
        _timed(3, "closed-form uniform lattice", closed_form_uniform),
        _timed(4, "per-frame posterior totals", step_consistency),
        _timed(5, "CTC reduction", ctc_reduction),
        _timed(6, "decoder invariants", decoder_invariants),
        _timed(7, "hallucination demo", hallucination),
    ]
    if include_training:
        t0 = time.time()
        study = training_study()
        dt = time.time() - t0
        results.append(_timed(8, "training-strategy ordering", lambda: strategy_ordering(study)))
        results[-1].seconds = dt
        results.append(_timed(9, "shallow fusion sanity", lambda: shallow_fusion(study)))
    return results
