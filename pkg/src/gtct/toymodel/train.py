"""Training strategies, learning-rate schedules and evaluation for the toy model."""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from gtct.decode import DecodeConfig, decode
from gtct.loss import ar_rnnt_loss, ctc_loss, gtct_loss, rnnt_loss
from gtct.numerics import JoinerLattice, NumericsError
from gtct.topology import build_graph
from gtct.toymodel.data import SyntheticDataset
from gtct.toymodel.metrics import edit_distance
from gtct.toymodel.model import ENCODER_PARAMS, ModelScorer, ToyModel

log = logging.getLogger(__name__)

LOSSES = ("rnnt", "ar_rnnt", "ctct", "monornnt")
STRATEGIES = ("scratch", "init_from", "joint_ctc")


class TrainingDiverged(RuntimeError):
    def __init__(self, epoch: int):
        super().__init__(f"training diverged (NaN loss) in epoch {epoch}")
        self.epoch = epoch


@dataclass
class TrainConfig:
    loss: str = "rnnt"
    strategy: str = "scratch"
    init_from: Optional[str] = None  # checkpoint directory
    init_scope: str = "all"  # "all" or "encoder"
    ctc_weight: float = 0.3
    epochs: int = 3
    base_lr: float = 0.05
    momentum: float = 0.9
    optimizer: str = "sgd"  # "sgd" (momentum) or "adam"
    batch_size: int = 8
    warmup_iters: int = 400
    schedule: str = "cosine"  # "cosine" or "tri-stage"
    grad_clip: float = 5.0
    seed: int = 0
    ar_left: int = 2
    ar_right: int = 2
    eval_beam: int = 10

    def __post_init__(self):
        if self.loss not in LOSSES:
            raise ValueError(f"loss must be one of {LOSSES}")
        if self.strategy not in STRATEGIES:
            raise ValueError(f"strategy must be one of {STRATEGIES}")
        if self.strategy == "init_from" and not self.init_from:
            raise ValueError("strategy init_from needs a checkpoint path")
        if not 0.0 <= self.ctc_weight <= 1.0:
            raise ValueError("ctc_weight must lie in [0, 1]")
        if self.epochs < 1:
            raise ValueError("epochs must be >= 1")
        if self.schedule not in ("cosine", "tri-stage"):
            raise ValueError("schedule must be cosine or tri-stage")
        if self.init_scope not in ("all", "encoder"):
            raise ValueError("init_scope must be all or encoder")

    @property
    def topology(self) -> str:
        return "rnnt" if self.loss in ("rnnt", "ar_rnnt") else self.loss


def learning_rate(step: int, total: int, cfg: TrainConfig) -> float:
    """Linear warmup, then cosine decay or the hold/exponential-decay tri-stage."""
    warm = min(cfg.warmup_iters, max(total // 2, 1))
    if step < warm:
        return cfg.base_lr * (step + 1) / warm
    rest = max(total - warm, 1)
    frac = min((step - warm) / rest, 1.0)
    if cfg.schedule == "cosine":
        return cfg.base_lr * 0.5 * (1.0 + math.cos(math.pi * frac))
    if frac < 0.4:
        return cfg.base_lr
    final_scale = 0.05
    return cfg.base_lr * final_scale ** ((frac - 0.4) / 0.6)


def transducer_loss(m: ToyModel, item, cfg: TrainConfig):
    """Loss value and parameter gradients for one item under ``cfg``."""
    logits, ctc_logits, cache = m.forward(item.X, item.labels)
    lat = JoinerLattice(logits, blank_id=m.cfg.blank_id)
    y = item.labels
    if cfg.loss == "rnnt":
        out = rnnt_loss(lat, y)
    elif cfg.loss == "ar_rnnt":
        out = ar_rnnt_loss(lat, y, item.alignment, cfg.ar_left, cfg.ar_right)
    else:
        out = gtct_loss(build_graph(cfg.loss, y, m.cfg.blank_id, m.cfg.K), lat)
    if out.flagged:
        return math.inf, None
    w = cfg.ctc_weight if cfg.strategy == "joint_ctc" else 0.0
    total = (1.0 - w) * out.loss
    grad_ctc = None
    if w > 0:
        c_loss, c_grad = ctc_loss(ctc_logits, y, m.cfg.blank_id)
        if math.isinf(c_loss):
            return math.inf, None
        total += w * c_loss
        grad_ctc = w * c_grad
    grads = m.backward(cache, (1.0 - w) * out.grad_logits, grad_ctc)
    return total, grads


class _Optimizer:
    def __init__(self, params, cfg: TrainConfig):
        self.cfg = cfg
        self.m = {k: np.zeros_like(v) for k, v in params.items()}
        self.v = {k: np.zeros_like(v) for k, v in params.items()}
        self.t = 0

    def step(self, params, grads, lr):
        self.t += 1
        cfg = self.cfg
        for k, g in grads.items():
            if cfg.optimizer == "adam":
                self.m[k] = 0.9 * self.m[k] + 0.1 * g
                self.v[k] = 0.999 * self.v[k] + 0.001 * g * g
                mh = self.m[k] / (1 - 0.9 ** self.t)
                vh = self.v[k] / (1 - 0.999 ** self.t)
                params[k] -= lr * mh / (np.sqrt(vh) + 1e-8)
            else:
                self.m[k] = cfg.momentum * self.m[k] + g
                params[k] -= lr * self.m[k]


def _apply_init(m: ToyModel, cfg: TrainConfig) -> list[str]:
    src, manifest = ToyModel.load(cfg.init_from)
    names = ENCODER_PARAMS if cfg.init_scope == "encoder" else tuple(m.params)
    for name in names:
        if src.params[name].shape != m.params[name].shape:
            raise ValueError(f"checkpoint layer {name} has shape {src.params[name].shape}, "
                             f"model expects {m.params[name].shape}")
        m.params[name] = src.params[name].copy()
    return list(manifest.get("lineage", []))


def train(m: ToyModel, data: SyntheticDataset, cfg: TrainConfig,
          dev: Optional[SyntheticDataset] = None):
    """Mini-batch gradient descent; returns ``(model, history)``.

    ``history`` has one dict per epoch with the mean training loss and, if
    ``dev`` is given, dev token/sequence error rates.
    """
    m = m.copy()
    lineage: list[str] = []
    if cfg.strategy == "init_from":
        lineage = _apply_init(m, cfg)
    rng = np.random.default_rng(cfg.seed)
    opt = _Optimizer(m.params, cfg)
    n = len(data.items)
    steps_per_epoch = math.ceil(n / cfg.batch_size)
    total_steps = steps_per_epoch * cfg.epochs
    step = 0
    history = []
    for epoch in range(1, cfg.epochs + 1):
        order = rng.permutation(n)
        losses = []
        for b in range(steps_per_epoch):
            batch = order[b * cfg.batch_size: (b + 1) * cfg.batch_size]
            acc = None
            used = 0
            for i in batch:
                try:
                    loss, grads = transducer_loss(m, data.items[i], cfg)
                except NumericsError:
                    raise TrainingDiverged(epoch) from None
                if math.isnan(loss):
                    raise TrainingDiverged(epoch)
                if grads is None:
                    continue
                losses.append(loss)
                used += 1
                if acc is None:
                    acc = grads
                else:
                    for k in acc:
                        acc[k] += grads[k]
            if acc is not None:
                norm = math.sqrt(sum(float((g * g).sum()) for g in acc.values())) / used
                scale = 1.0 / used
                if cfg.grad_clip and norm > cfg.grad_clip:
                    scale *= cfg.grad_clip / norm
                for k in acc:
                    acc[k] *= scale
                opt.step(m.params, acc, learning_rate(step, total_steps, cfg))
            step += 1
        mean_loss = float(np.mean(losses)) if losses else math.inf
        if math.isnan(mean_loss):
            raise TrainingDiverged(epoch)
        rec = {"epoch": epoch, "train_loss": mean_loss,
               "lr": learning_rate(min(step, total_steps - 1), total_steps, cfg)}
        if dev is not None:
            ev = evaluate(m, dev, cfg.topology, DecodeConfig(beam_size=cfg.eval_beam))
            rec["dev_token_error"] = ev["token_error"]
            rec["dev_seq_error"] = ev["seq_error"]
        log.info("epoch %d %s", epoch, rec)
        history.append(rec)
    m.lineage = lineage + [f"{cfg.strategy}:{cfg.loss}:seed{cfg.seed}"]
    return m, history


def evaluate(m: ToyModel, data: SyntheticDataset, topology: str,
             cfg: Optional[DecodeConfig] = None, lm=None) -> dict:
    """Decode every item; token error = edits / reference labels."""
    cfg = cfg or DecodeConfig()
    edits = ref_len = seq_err = 0
    hyps = []
    for item in data.items:
        scorer = ModelScorer(m, item.X)
        res = decode(scorer, topology, scorer.T, cfg, lm=lm)
        hyp = res.best.prefix
        hyps.append(hyp)
        e = edit_distance(item.labels, hyp).total
        edits += e
        ref_len += len(item.labels)
        seq_err += e > 0
    return {
        "token_error": edits / max(ref_len, 1),
        "seq_error": seq_err / max(len(data.items), 1),
        "hypotheses": hyps,
    }
