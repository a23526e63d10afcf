"""Minimal encoder / predictor / joiner transducer with hand-written backprop."""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass
from pathlib import Path
from typing import Optional, Sequence

import numpy as np

from gtct.numerics import JoinerLattice, log_softmax_rows

CHECKPOINT_FORMAT = "gtct-toy-checkpoint"
CHECKPOINT_VERSION = 1


@dataclass(frozen=True)
class ModelConfig:
    K: int
    F: int
    enc_hidden: int = 24
    pred_hidden: int = 16
    joint_hidden: int = 24
    encoder: str = "rnn"  # "rnn" or "window"
    context: int = 1  # half-width of the window encoder
    blank_id: int = 0
    init_scale: float = 1.0


ENCODER_PARAMS = ("enc_Wx", "enc_Wh", "enc_b")


class ToyModel:
    """Parameters live in ``self.params`` (name -> float64 array)."""

    def __init__(self, cfg: ModelConfig, params: dict[str, np.ndarray]):
        self.cfg = cfg
        self.params = params
        self.lineage: list[str] = []

    @classmethod
    def init(cls, cfg: ModelConfig, seed: int = 0) -> "ToyModel":
        if cfg.encoder not in ("rnn", "window"):
            raise ValueError(f"unknown encoder type {cfg.encoder!r}")
        rng = np.random.default_rng(seed)
        He, Hp, J, K, F = cfg.enc_hidden, cfg.pred_hidden, cfg.joint_hidden, cfg.K, cfg.F
        in_dim = F * (2 * cfg.context + 1) if cfg.encoder == "window" else F

        def w(*shape):
            return cfg.init_scale * rng.standard_normal(shape) / np.sqrt(shape[-1])

        p = {
            "enc_Wx": w(He, in_dim),
            "enc_Wh": w(He, He) if cfg.encoder == "rnn" else np.zeros((0, 0)),
            "enc_b": np.zeros(He),
            "pred_E": w(K + 1, Hp),  # row K is the start-of-sentence symbol
            "pred_Wh": w(Hp, Hp),
            "pred_b": np.zeros(Hp),
            "join_A": w(J, He),
            "join_B": w(J, Hp),
            "join_b": np.zeros(J),
            "out_W": w(K, J),
            "out_b": np.zeros(K),
            "ctc_W": w(K, He),
            "ctc_b": np.zeros(K),
        }
        return cls(cfg, p)

    @classmethod
    def zeros(cls, cfg: ModelConfig) -> "ToyModel":
        m = cls.init(cfg)
        return cls(cfg, {k: np.zeros_like(v) for k, v in m.params.items()})

    def copy(self) -> "ToyModel":
        m = ToyModel(self.cfg, {k: v.copy() for k, v in self.params.items()})
        m.lineage = list(self.lineage)
        return m

    @property
    def n_params(self) -> int:
        return int(sum(v.size for v in self.params.values()))

    @property
    def sos(self) -> int:
        return self.cfg.K

    # ------------------------------------------------------------ encoder

    def _window(self, X):
        c = self.cfg.context
        N, F = X.shape
        padded = np.vstack([np.zeros((c, F)), X, np.zeros((c, F))])
        return np.stack([padded[t: t + 2 * c + 1].reshape(-1) for t in range(N)])

    def encode(self, X: np.ndarray):
        p = self.params
        X = np.asarray(X, dtype=np.float64)
        if self.cfg.encoder == "window":
            inp = self._window(X)
            h = np.tanh(inp @ p["enc_Wx"].T + p["enc_b"])
            return h, inp
        N = X.shape[0]
        h = np.zeros((N, self.cfg.enc_hidden))
        prev = np.zeros(self.cfg.enc_hidden)
        pre = X @ p["enc_Wx"].T + p["enc_b"]
        for t in range(N):
            prev = np.tanh(pre[t] + p["enc_Wh"] @ prev)
            h[t] = prev
        return h, X

    def predict_step(self, g_prev: np.ndarray, token: int) -> np.ndarray:
        p = self.params
        return np.tanh(p["pred_E"][token] + p["pred_Wh"] @ g_prev + p["pred_b"])

    def predict(self, y: Sequence[int]) -> tuple[np.ndarray, list[int]]:
        tokens = [self.sos] + list(y)
        g = np.zeros((len(tokens), self.cfg.pred_hidden))
        prev = np.zeros(self.cfg.pred_hidden)
        for u, tok in enumerate(tokens):
            prev = self.predict_step(prev, tok)
            g[u] = prev
        return g, tokens

    # ------------------------------------------------------------ forward / backward

    def forward(self, X: np.ndarray, y: Sequence[int]):
        """Return ``(logits [T, U+1, K], ctc_logits [T, K], cache)``."""
        p = self.params
        h, enc_in = self.encode(X)
        g, tokens = self.predict(y)
        pa = h @ p["join_A"].T
        pb = g @ p["join_B"].T
        z = np.tanh(pa[:, None, :] + pb[None, :, :] + p["join_b"])
        logits = z @ p["out_W"].T + p["out_b"]
        ctc_logits = h @ p["ctc_W"].T + p["ctc_b"]
        cache = {"h": h, "enc_in": enc_in, "g": g, "tokens": tokens, "z": z}
        return logits, ctc_logits, cache

    def backward(self, cache, grad_logits: Optional[np.ndarray] = None,
                 grad_ctc: Optional[np.ndarray] = None) -> dict[str, np.ndarray]:
        p = self.params
        grads = {k: np.zeros_like(v) for k, v in p.items()}
        h, g, z = cache["h"], cache["g"], cache["z"]
        dh = np.zeros_like(h)
        dg = np.zeros_like(g)
        if grad_logits is not None:
            G = grad_logits
            grads["out_W"] = np.einsum("tuk,tuj->kj", G, z)
            grads["out_b"] = G.sum(axis=(0, 1))
            dpre = (G @ p["out_W"]) * (1.0 - z * z)
            grads["join_b"] = dpre.sum(axis=(0, 1))
            dpa = dpre.sum(axis=1)
            dpb = dpre.sum(axis=0)
            grads["join_A"] = dpa.T @ h
            grads["join_B"] = dpb.T @ g
            dh += dpa @ p["join_A"]
            dg += dpb @ p["join_B"]
        if grad_ctc is not None:
            grads["ctc_W"] = grad_ctc.T @ h
            grads["ctc_b"] = grad_ctc.sum(axis=0)
            dh += grad_ctc @ p["ctc_W"]
        self._backward_encoder(cache, dh, grads)
        self._backward_predictor(cache, dg, grads)
        return grads

    def _backward_encoder(self, cache, dh, grads):
        p = self.params
        h, inp = cache["h"], cache["enc_in"]
        if self.cfg.encoder == "window":
            da = dh * (1.0 - h * h)
            grads["enc_Wx"] = da.T @ inp
            grads["enc_b"] = da.sum(axis=0)
            return
        N, He = h.shape
        carry = np.zeros(He)
        for t in range(N - 1, -1, -1):
            da = (dh[t] + carry) * (1.0 - h[t] * h[t])
            grads["enc_Wx"] += np.outer(da, inp[t])
            if t > 0:
                grads["enc_Wh"] += np.outer(da, h[t - 1])
            grads["enc_b"] += da
            carry = p["enc_Wh"].T @ da

    def _backward_predictor(self, cache, dg, grads):
        p = self.params
        g, tokens = cache["g"], cache["tokens"]
        carry = np.zeros(g.shape[1])
        for u in range(len(tokens) - 1, -1, -1):
            da = (dg[u] + carry) * (1.0 - g[u] * g[u])
            grads["pred_E"][tokens[u]] += da
            if u > 0:
                grads["pred_Wh"] += np.outer(da, g[u - 1])
            grads["pred_b"] += da
            carry = p["pred_Wh"].T @ da

    # ------------------------------------------------------------ checkpoints

    def save(self, path, seed: int = 0, lineage: Sequence[str] = ()) -> Path:
        """Write ``manifest.json`` plus one little-endian float64 file per layer."""
        path = Path(path)
        path.mkdir(parents=True, exist_ok=True)
        layers = []
        for name in sorted(self.params):
            arr = np.ascontiguousarray(self.params[name], dtype="<f8")
            fname = f"{name}.f64"
            (path / fname).write_bytes(arr.tobytes())
            layers.append({"name": name, "shape": list(arr.shape), "dtype": "<f8", "file": fname})
        manifest = {
            "format": CHECKPOINT_FORMAT,
            "version": CHECKPOINT_VERSION,
            "model_config": asdict(self.cfg),
            "layers": layers,
            "seed": seed,
            "lineage": list(lineage),
        }
        (path / "manifest.json").write_text(json.dumps(manifest, indent=2))
        return path

    @classmethod
    def load(cls, path) -> tuple["ToyModel", dict]:
        path = Path(path)
        manifest = json.loads((path / "manifest.json").read_text())
        if manifest.get("format") != CHECKPOINT_FORMAT:
            raise ValueError(f"{path} is not a toy-model checkpoint")
        cfg = ModelConfig(**manifest["model_config"])
        params = {}
        for layer in manifest["layers"]:
            raw = (path / layer["file"]).read_bytes()
            arr = np.frombuffer(raw, dtype="<f8").astype(np.float64)
            params[layer["name"]] = arr.reshape(layer["shape"])
        return cls(cfg, params), manifest


def forward_joint(m: ToyModel, X: np.ndarray, y: Sequence[int]) -> JoinerLattice:
    logits, _, _ = m.forward(X, y)
    return JoinerLattice(logits, blank_id=m.cfg.blank_id)


class ModelScorer:
    """Incremental decoding surface: predictor states are cached per prefix."""

    def __init__(self, m: ToyModel, X: np.ndarray):
        self.m = m
        p = m.params
        h, _ = m.encode(X)
        self.pa = h @ p["join_A"].T + p["join_b"]
        self.T = h.shape[0]
        self.K = m.cfg.K
        self.blank_id = m.cfg.blank_id
        self.max_len = None
        self._pred: dict[tuple, np.ndarray] = {}
        self._rows: dict[tuple, np.ndarray] = {}

    def _pb(self, prefix: tuple) -> np.ndarray:
        if prefix not in self._pred:
            if prefix:
                prev = self._g(prefix[:-1])
                tok = prefix[-1]
            else:
                prev, tok = np.zeros(self.m.cfg.pred_hidden), self.m.sos
            g = self.m.predict_step(prev, tok)
            self._pred[prefix] = (g, g @ self.m.params["join_B"].T)
        return self._pred[prefix][1]

    def _g(self, prefix: tuple) -> np.ndarray:
        self._pb(prefix)
        return self._pred[prefix][0]

    def rows(self, prefix: tuple) -> np.ndarray:
        """Log-probs ``[T, K]`` for every frame at this prefix."""
        prefix = tuple(prefix)
        if prefix not in self._rows:
            p = self.m.params
            z = np.tanh(self.pa + self._pb(prefix))
            self._rows[prefix] = log_softmax_rows(z @ p["out_W"].T + p["out_b"])
        return self._rows[prefix]

    def __call__(self, t: int, prefix) -> np.ndarray:
        return self.rows(tuple(prefix))[t]
