"""Training-strategy comparison at toy scale.

Per seed: train RNN-T, CTC-T and MonoRNN-T from scratch, CTC-T with an
auxiliary CTC head, then continue training CTC-T, MonoRNN-T and RNN-T from
the RNN-T checkpoint for a few extra epochs.
"""

from __future__ import annotations

import logging
import tempfile
import time
from dataclasses import asdict, dataclass, replace
from pathlib import Path

from gtct.decode import DecodeConfig, train_ngram_lm
from gtct.toymodel.data import gen_synthetic
from gtct.toymodel.model import ModelConfig, ToyModel
from gtct.toymodel.train import TrainConfig, evaluate, train

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class ExperimentConfig:
    K: int = 5
    F: int = 6
    n_train: int = 300
    n_dev: int = 150
    noise: float = 0.4
    epochs: int = 10
    extra_epochs: int = 3
    base_lr: float = 0.01
    extra_lr: float = 0.003
    optimizer: str = "adam"
    warmup_iters: int = 40
    ctc_weight: float = 0.3
    beam_size: int = 10
    lm_weight: float = 0.1


def _final(history, key="dev_token_error"):
    return history[-1][key]


def run_strategies(seed: int, cfg: ExperimentConfig = ExperimentConfig(), workdir=None) -> dict:
    """Train every strategy for one seed; returns final dev error rates per run."""
    t0 = time.time()
    train_set = gen_synthetic(cfg.n_train, cfg.K, cfg.F, noise=cfg.noise, seed=1000 + seed)
    dev_set = gen_synthetic(cfg.n_dev, cfg.K, cfg.F, noise=cfg.noise, seed=2000 + seed)
    init = ToyModel.init(ModelConfig(K=cfg.K, F=cfg.F), seed=seed)
    base = TrainConfig(epochs=cfg.epochs, base_lr=cfg.base_lr, optimizer=cfg.optimizer,
                       warmup_iters=cfg.warmup_iters, schedule="tri-stage", seed=seed,
                       ctc_weight=cfg.ctc_weight, eval_beam=cfg.beam_size)
    tmp = Path(workdir) if workdir else Path(tempfile.mkdtemp(prefix="gtct-strat-"))
    runs: dict[str, dict] = {}
    models: dict[str, ToyModel] = {}

    def run(name, model, tcfg):
        m, hist = train(model, train_set, tcfg, dev=dev_set)
        runs[name] = {"dev_token_error": _final(hist), "dev_seq_error": _final(hist, "dev_seq_error"),
                      "train_loss": hist[-1]["train_loss"], "history": hist, "lineage": m.lineage}
        models[name] = m
        log.info("seed %d %s: dev token error %.4f", seed, name, runs[name]["dev_token_error"])
        return m

    rnnt = run("rnnt", init, replace(base, loss="rnnt"))
    ckpt = rnnt.save(tmp / f"rnnt-seed{seed}", seed=seed, lineage=rnnt.lineage)
    run("ctct", init, replace(base, loss="ctct"))
    run("ctct+joint_ctc", init, replace(base, loss="ctct", strategy="joint_ctc"))
    run("monornnt", init, replace(base, loss="monornnt"))
    extra = replace(base, strategy="init_from", init_from=str(ckpt), epochs=cfg.extra_epochs,
                    base_lr=cfg.extra_lr, schedule="cosine")
    run("ctct+init_rnnt", init, replace(extra, loss="ctct"))
    run("monornnt+init_rnnt", init, replace(extra, loss="monornnt"))
    run("rnnt+init_rnnt", init, replace(extra, loss="rnnt"))

    # shallow fusion on the scratch CTC-T model with a bigram over training references
    lm = train_ngram_lm(train_set.corpus(), 2, [k for k in range(cfg.K) if k != 0])
    dcfg = DecodeConfig(beam_size=cfg.beam_size, lm_weight=cfg.lm_weight)
    no_lm = evaluate(models["ctct"], dev_set, "ctct", dcfg)
    with_lm = evaluate(models["ctct"], dev_set, "ctct", dcfg, lm=lm)
    zero_lm = evaluate(models["ctct"], dev_set, "ctct", replace(dcfg, lm_weight=0.0), lm=lm)
    fusion = {
        "lm_weight": cfg.lm_weight,
        "seq_error_no_lm": no_lm["seq_error"],
        "seq_error_lm": with_lm["seq_error"],
        "token_error_no_lm": no_lm["token_error"],
        "token_error_lm": with_lm["token_error"],
        "zero_weight_identical": zero_lm["hypotheses"] == no_lm["hypotheses"],
    }
    return {"seed": seed, "runs": runs, "fusion": fusion, "seconds": time.time() - t0}


def compare(result: dict) -> dict:
    """The directional checks for one seed."""
    r = {k: v["dev_token_error"] for k, v in result["runs"].items()}
    f = result["fusion"]
    return {
        "ctct_init_le_scratch": r["ctct+init_rnnt"] <= r["ctct"],
        "monornnt_init_le_scratch": r["monornnt+init_rnnt"] <= r["monornnt"],
        "rnnt_self_init_delta": r["rnnt+init_rnnt"] - r["rnnt"],
        "ctct_joint_le_scratch": r["ctct+joint_ctc"] <= r["ctct"],
        "fusion_no_worse": f["seq_error_lm"] <= f["seq_error_no_lm"],
        "fusion_zero_identical": f["zero_weight_identical"],
    }


def strategy_study(seeds=(0, 1, 2), cfg: ExperimentConfig = ExperimentConfig()) -> dict:
    results = [run_strategies(s, cfg) for s in seeds]
    checks = [compare(r) for r in results]
    return {"config": asdict(cfg), "results": results, "checks": checks}
