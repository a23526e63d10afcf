"""``gtct`` command line: JSON reports on stdout, logs on stderr.

Exit codes: 0 success, 1 validation / input error, 2 numerical check failed.
"""

from __future__ import annotations

import argparse
import hashlib
import json
import logging
import math
import os
import sys
from dataclasses import asdict
from pathlib import Path

import numpy as np

from gtct import __version__
from gtct.decode import (
    DecodeConfig,
    LatticeScorer,
    decode,
    hallucination_demo,
    train_ngram_lm,
)
from gtct.formats import FormatError, graph_to_json, read_graph, read_lattice, write_graph
from gtct.loss import ar_rnnt_loss, ctc_loss, gtct_forward, gtct_loss, rnnt_loss
from gtct.numerics import JoinerLattice, NumericsError
from gtct.oracle import (
    OracleTooLarge,
    brute_force_loss,
    brute_force_rnnt_loss,
    finite_diff_grad,
    relative_error,
)
from gtct.topology import GraphError, build_graph

log = logging.getLogger("gtct")

SEED_ENV = "GTCT_SEED"
GRAD_TOL = 1e-6
ORACLE_TOL = 1e-10


class CheckFailed(Exception):
    def __init__(self, report):
        super().__init__("numerical check failed")
        self.report = report


def parse_labels(text: str | None, blank_id: int = 0) -> list[int]:
    """``"a b"``, ``"a,b"`` or ``"1 2"``; letters map to ``a=1, b=2, ...``."""
    if not text:
        return []
    out = []
    for tok in text.replace(",", " ").split():
        if tok.lstrip("-").isdigit():
            out.append(int(tok))
        elif len(tok) == 1 and tok.isalpha():
            out.append(ord(tok.lower()) - ord("a") + 1)
        else:
            raise ValueError(f"cannot parse label token {tok!r}")
    return out


def _default_seed() -> int:
    return int(os.environ.get(SEED_ENV, "0"))


def _report(args, body: dict) -> dict:
    cfg = {k: v for k, v in vars(args).items() if k != "func"}
    digest = hashlib.sha256(json.dumps(cfg, sort_keys=True, default=str).encode()).hexdigest()[:16]
    return {"version": __version__, "command": args.command, "seed": getattr(args, "seed", None),
            "config_hash": digest, **body}


def _emit(obj) -> None:
    json.dump(obj, sys.stdout, indent=2, default=_json_default)
    sys.stdout.write("\n")


def _json_default(o):
    if isinstance(o, np.ndarray):
        return o.tolist()
    if isinstance(o, (np.floating, np.integer)):
        return o.item()
    if isinstance(o, np.bool_):
        return bool(o)
    if isinstance(o, float) and math.isinf(o):
        return str(o)
    raise TypeError(f"not JSON serializable: {type(o)}")


def _finite(x: float):
    return x if math.isfinite(x) else ("inf" if x > 0 else "-inf")


# ------------------------------------------------------------------ loss

def _load_lattice(args, labels) -> JoinerLattice:
    if args.lattice:
        return read_lattice(args.lattice, blank_id=args.blank_id)
    U = args.U if args.U is not None else len(labels)
    if args.uniform:
        return JoinerLattice.uniform(args.T, U, args.K, blank_id=args.blank_id)
    rng = np.random.default_rng(args.seed)
    return JoinerLattice.random(args.T, U, args.K, rng, blank_id=args.blank_id)


def cmd_loss(args) -> int:
    labels = parse_labels(args.labels, args.blank_id)
    lat = _load_lattice(args, labels)
    kind = args.loss
    graph = None
    if args.graph:
        graph = read_graph(args.graph)
        kind = "graph"
    elif kind in ("ctct", "monornnt"):
        graph = build_graph(kind, labels, lat.blank_id, lat.K)

    if kind == "ctc":
        x = lat.logits[:, 0, :]
        lat = JoinerLattice(x[:, None, :], blank_id=lat.blank_id)
        loss, grad = ctc_loss(x, labels, lat.blank_id)
        grad = grad[:, None, :]
        fn = lambda l: ctc_loss(l.logits[:, 0, :], labels, l.blank_id)[0]
        flagged = math.isinf(loss)
    elif kind == "rnnt":
        out = rnnt_loss(lat, labels)
        loss, grad, flagged = out.loss, out.grad_logits, out.flagged
        fn = lambda l: rnnt_loss(l, labels).loss
    elif kind == "ar-rnnt":
        align = [int(a) for a in (args.alignment or "").replace(",", " ").split()]
        out = ar_rnnt_loss(lat, labels, align, args.left, args.right)
        loss, grad, flagged = out.loss, out.grad_logits, out.flagged
        fn = lambda l: ar_rnnt_loss(l, labels, align, args.left, args.right).loss
    else:
        out = gtct_loss(graph, lat)
        loss, grad, flagged = out.loss, out.grad_logits, out.flagged
        T, end = lat.T, graph.end
        fn = lambda l: -gtct_forward(graph, l)[T, end]

    body = {"loss_type": kind, "T": lat.T, "U": lat.U, "K": lat.K, "labels": labels,
            "loss": _finite(loss), "empty_alignment_set": bool(flagged)}
    if args.grad:
        body["grad_logits"] = grad
    failed = False
    if args.gradcheck:
        num = finite_diff_grad(fn, lat, args.eps)
        err = relative_error(grad, num)
        body["gradcheck"] = {"max_rel_err": err, "eps": args.eps, "tol": GRAD_TOL, "ok": err <= GRAD_TOL}
        failed |= not err <= GRAD_TOL
    if args.oracle_check:
        if kind == "ctc":
            ref = brute_force_loss(build_graph("ctct", labels, lat.blank_id, lat.K),
                                   JoinerLattice(np.repeat(lat.logits, len(labels) + 1, axis=1),
                                                 blank_id=lat.blank_id))
        elif kind == "rnnt":
            ref = brute_force_rnnt_loss(lat, labels)
        elif kind == "ar-rnnt":
            ref = brute_force_rnnt_loss(lat, labels, align, args.left, args.right)
        else:
            ref = brute_force_loss(graph, lat)
        gap = 0.0 if (math.isinf(ref) and math.isinf(loss)) else abs(ref - loss)
        body["oracle_check"] = {"brute_force_loss": _finite(ref), "abs_gap": gap, "tol": ORACLE_TOL,
                                "ok": gap <= ORACLE_TOL}
        failed |= not gap <= ORACLE_TOL
    _emit(_report(args, body))
    return 2 if failed else 0


# ------------------------------------------------------------------ build-graph

def cmd_build_graph(args) -> int:
    labels = parse_labels(args.labels, args.blank_id)
    g = build_graph(args.topology, labels, args.blank_id, args.K)
    if args.out:
        write_graph(args.out, g)
        log.info("wrote %s", args.out)
    _emit(_report(args, {"graph": graph_to_json(g), "min_path_len": g.min_path_len}))
    return 0


# ------------------------------------------------------------------ decode

def _load_lm(args, K, blank_id):
    if not args.lm:
        return None
    corpus = [parse_labels(line, blank_id) for line in Path(args.lm).read_text().splitlines() if line.strip()]
    return train_ngram_lm(corpus, args.lm_order, [k for k in range(K) if k != blank_id])


def _hyp_json(h):
    return {"labels": list(h.prefix), "am_score": h.am_score, "lm_score": h.lm_score,
            "score_vectors": h.consumed}


def cmd_decode(args) -> int:
    cfg = DecodeConfig(beam_size=args.beam, lm_weight=args.lm_weight,
                       max_emits_per_step=args.max_emits)
    utterances = []
    if args.lattice:
        lat = read_lattice(args.lattice, blank_id=args.blank_id)
        lm = _load_lm(args, lat.K, lat.blank_id)
        res = decode(LatticeScorer(lat), args.topology, lat.T, cfg, lm=lm)
        utterances.append({"nbest": [_hyp_json(h) for h in res.nbest[: args.nbest]], "runaway": res.runaway})
    elif args.checkpoint:
        from gtct.toymodel.data import gen_synthetic
        from gtct.toymodel.model import ModelScorer, ToyModel

        m, _ = ToyModel.load(args.checkpoint)
        lm = _load_lm(args, m.cfg.K, m.cfg.blank_id)
        if args.features:
            feats = [np.load(args.features)]
            refs = [None]
        else:
            data = gen_synthetic(args.synthetic, m.cfg.K, m.cfg.F, noise=args.noise, seed=args.seed)
            feats = [it.X for it in data.items]
            refs = [list(it.labels) for it in data.items]
        for X, ref in zip(feats, refs):
            scorer = ModelScorer(m, X)
            res = decode(scorer, args.topology, scorer.T, cfg, lm=lm)
            utterances.append({"reference": ref, "nbest": [_hyp_json(h) for h in res.nbest[: args.nbest]],
                               "runaway": res.runaway})
    else:
        raise ValueError("decode needs --lattice or --checkpoint")
    _emit(_report(args, {"topology": args.topology, "decode_config": asdict(cfg), "utterances": utterances}))
    return 0


# ------------------------------------------------------------------ train

def cmd_train(args) -> int:
    from gtct.toymodel.data import gen_synthetic
    from gtct.toymodel.model import ModelConfig, ToyModel
    from gtct.toymodel.train import TrainConfig, TrainingDiverged, train

    conf = json.loads(Path(args.config).read_text()) if args.config else {}
    data_conf = {"n_train": 200, "n_dev": 50, "K": 5, "F": 6, "noise": 0.4, **conf.get("data", {})}
    seed = conf.get("train", {}).get("seed", args.seed)
    tcfg = TrainConfig(**{"seed": seed, **conf.get("train", {})})
    mcfg = ModelConfig(**{"K": data_conf["K"], "F": data_conf["F"], **conf.get("model", {})})
    tr = gen_synthetic(data_conf["n_train"], mcfg.K, mcfg.F, noise=data_conf["noise"], seed=1000 + seed)
    dv = gen_synthetic(data_conf["n_dev"], mcfg.K, mcfg.F, noise=data_conf["noise"], seed=2000 + seed)
    try:
        m, hist = train(ToyModel.init(mcfg, seed), tr, tcfg, dev=dv)
    except TrainingDiverged as exc:
        _emit(_report(args, {"error": "diverged", "epoch": exc.epoch}))
        return 2
    out = Path(args.out)
    m.save(out, seed=seed, lineage=m.lineage)
    (out / "history.json").write_text(json.dumps(hist, indent=2))
    _emit(_report(args, {"train_config": asdict(tcfg), "model_config": asdict(mcfg), "data": data_conf,
                         "n_params": m.n_params, "history": hist, "checkpoint": str(out)}))
    return 0


# ------------------------------------------------------------------ demo / report

def cmd_demo(args) -> int:
    demo = hallucination_demo(args.T, args.K, args.beam)
    ok = demo["rnnt_greedy"]["runaway"] and all(
        not demo[k]["runaway"] and demo[k]["emissions"] <= args.T
        for k in ("ctct_greedy", "ctct_beam", "monornnt_greedy", "monornnt_beam"))
    _emit(_report(args, {"demo": demo, "ok": ok}))
    return 0 if ok else 2


def cmd_report(args) -> int:
    from gtct.acceptance import run_all

    results = run_all(include_training=not args.skip_training)
    for r in results:
        print(r.line(), file=sys.stderr)
    body = {"criteria": [{"number": r.number, "name": r.name, "passed": r.passed,
                          "seconds": round(r.seconds, 2), "detail": r.detail} for r in results]}
    body["all_passed"] = all(r.passed for r in results)
    _emit(_report(args, body))
    return 0 if body["all_passed"] else 2


# ------------------------------------------------------------------ parser

def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="gtct", description=__doc__.splitlines()[0])
    p.add_argument("--version", action="version", version=__version__)
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp):
        sp.add_argument("--seed", type=int, default=_default_seed())
        sp.add_argument("--blank-id", type=int, default=0)

    sp = sub.add_parser("loss", help="compute a loss (and optionally check it)")
    common(sp)
    sp.add_argument("--loss", choices=["rnnt", "ctct", "monornnt", "ar-rnnt", "ctc"], default="ctct")
    sp.add_argument("--labels", default="")
    sp.add_argument("--lattice", help="lattice file (JLAT)")
    sp.add_argument("--graph", help="graph JSON; overrides --loss with the graph loss")
    sp.add_argument("--uniform", action="store_true", help="all-equal logits")
    sp.add_argument("--T", type=int, default=4)
    sp.add_argument("--U", type=int, default=None)
    sp.add_argument("--K", type=int, default=3)
    sp.add_argument("--alignment", help="AR-RNN-T frame per label (1-based)")
    sp.add_argument("--left", type=int, default=1)
    sp.add_argument("--right", type=int, default=1)
    sp.add_argument("--grad", action="store_true")
    sp.add_argument("--gradcheck", action="store_true")
    sp.add_argument("--oracle-check", action="store_true")
    sp.add_argument("--eps", type=float, default=1e-5)
    sp.set_defaults(func=cmd_loss)

    sp = sub.add_parser("build-graph", help="emit an alignment graph as JSON")
    common(sp)
    sp.add_argument("--topology", choices=["ctct", "monornnt"], default="ctct")
    sp.add_argument("--labels", default="")
    sp.add_argument("--K", type=int, required=True)
    sp.add_argument("-o", "--out")
    sp.set_defaults(func=cmd_build_graph)

    sp = sub.add_parser("decode", help="beam search from a lattice or checkpoint")
    common(sp)
    sp.add_argument("--topology", choices=["ctct", "monornnt", "rnnt"], default="ctct")
    sp.add_argument("--lattice")
    sp.add_argument("--checkpoint")
    sp.add_argument("--features", help=".npy [N, F] features for --checkpoint")
    sp.add_argument("--synthetic", type=int, default=5, help="synthetic utterances for --checkpoint")
    sp.add_argument("--noise", type=float, default=0.4)
    sp.add_argument("--beam", type=int, default=10)
    sp.add_argument("--nbest", type=int, default=5)
    sp.add_argument("--max-emits", type=int, default=None)
    sp.add_argument("--lm", help="text corpus, one label sequence per line")
    sp.add_argument("--lm-order", type=int, default=2)
    sp.add_argument("--lm-weight", type=float, default=0.3)
    sp.set_defaults(func=cmd_decode)

    sp = sub.add_parser("train", help="train the toy transducer from a JSON config")
    common(sp)
    sp.add_argument("--config")
    sp.add_argument("--out", required=True)
    sp.set_defaults(func=cmd_train)

    sp = sub.add_parser("demo-hallucination", help="adversarial scorer across topologies")
    common(sp)
    sp.add_argument("--T", type=int, default=8)
    sp.add_argument("--K", type=int, default=3)
    sp.add_argument("--beam", type=int, default=10)
    sp.set_defaults(func=cmd_demo)

    sp = sub.add_parser("report", help="run the acceptance criteria")
    common(sp)
    sp.add_argument("--skip-training", action="store_true")
    sp.set_defaults(func=cmd_report)
    return p


def run_cli(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        stream=sys.stderr, format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except (FormatError, GraphError, NumericsError, OracleTooLarge, ValueError, OSError) as exc:
        _emit({"version": __version__, "command": args.command, "error": type(exc).__name__,
               "message": str(exc)})
        return 1


def main() -> None:
    sys.exit(run_cli())


if __name__ == "__main__":
    main()
