"""Log-domain arithmetic and the joiner lattice container."""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

NEG_INF = float("-inf")


class NumericsError(ValueError):
    """Raised for inputs that cannot be represented in the log domain (NaN)."""


def log_add(a: float, b: float) -> float:
    """Return ``ln(exp(a) + exp(b))`` using the max-shift trick.

    ``-inf`` is the identity element, so exact zeros never turn into NaN.
    """
    if math.isnan(a) or math.isnan(b):
        raise NumericsError("log_add received NaN")
    if a == NEG_INF:
        return b
    if b == NEG_INF:
        return a
    if a < b:
        a, b = b, a
    return a + math.log1p(math.exp(b - a))


def log_sum(values) -> float:
    """Log-sum-exp of an iterable of log values; empty input gives ``-inf``."""
    arr = np.asarray(list(values) if not isinstance(values, np.ndarray) else values,
                     dtype=np.float64)
    if arr.size == 0:
        return NEG_INF
    m = arr.max()
    if m == NEG_INF:
        return NEG_INF
    return float(m + np.log(np.exp(arr - m).sum()))


def log_softmax_rows(logits: np.ndarray) -> np.ndarray:
    """Normalize the last axis of ``logits`` to log-probabilities."""
    x = np.asarray(logits, dtype=np.float64)
    if np.isnan(x).any():
        raise NumericsError("logits contain NaN")
    if not np.isfinite(x).all():
        raise NumericsError("logits must be finite")
    m = x.max(axis=-1, keepdims=True)
    shifted = x - m
    return shifted - np.log(np.exp(shifted).sum(axis=-1, keepdims=True))


@dataclass(frozen=True)
class JoinerLattice:
    """Dense ``[T, U+1, K]`` table of joiner logits and their log-softmax.

    ``logprobs[t, u, k]`` is the log observation probability of symbol ``k``
    at frame ``t`` (0-based) given decoder state ``u``.
    """

    logits: np.ndarray
    blank_id: int = 0
    logprobs: np.ndarray = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        logits = np.array(self.logits, dtype=np.float64)
        if logits.ndim != 3:
            raise ValueError(f"logits must be rank 3 [T, U+1, K], got shape {logits.shape}")
        T, U1, K = logits.shape
        if T < 1 or U1 < 1:
            raise ValueError("lattice needs T >= 1 and U+1 >= 1")
        if K < 2:
            raise ValueError("lattice needs K >= 2 (blank plus one label)")
        if not 0 <= self.blank_id < K:
            raise ValueError(f"blank_id {self.blank_id} out of range for K={K}")
        logits.setflags(write=False)
        lp = log_softmax_rows(logits)
        lp.setflags(write=False)
        object.__setattr__(self, "logits", logits)
        object.__setattr__(self, "logprobs", lp)

    @property
    def T(self) -> int:
        return self.logits.shape[0]

    @property
    def U(self) -> int:
        return self.logits.shape[1] - 1

    @property
    def K(self) -> int:
        return self.logits.shape[2]

    @property
    def shape(self) -> tuple[int, int, int]:
        return self.logits.shape

    @classmethod
    def uniform(cls, T: int, U: int, K: int, blank_id: int = 0) -> "JoinerLattice":
        return cls(np.zeros((T, U + 1, K)), blank_id=blank_id)

    @classmethod
    def random(cls, T: int, U: int, K: int, rng: np.random.Generator,
               blank_id: int = 0, scale: float = 1.0) -> "JoinerLattice":
        return cls(scale * rng.standard_normal((T, U + 1, K)), blank_id=blank_id)

    def with_logits(self, logits: np.ndarray) -> "JoinerLattice":
        return JoinerLattice(logits, blank_id=self.blank_id)

    def truncated(self, U: int) -> "JoinerLattice":
        """Lattice restricted to decoder states ``0..U``."""
        if U > self.U:
            raise ValueError(f"cannot truncate U={self.U} lattice to U={U}")
        return JoinerLattice(self.logits[:, : U + 1, :], blank_id=self.blank_id)
