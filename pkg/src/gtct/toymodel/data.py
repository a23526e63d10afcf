"""Synthetic frame-labelled sequences standing in for speech features."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np


@dataclass(frozen=True)
class Item:
    X: np.ndarray  # [N, F]
    labels: tuple[int, ...]
    alignment: tuple[int, ...]  # 1-based last frame of each label's span


@dataclass(frozen=True)
class SyntheticDataset:
    items: tuple[Item, ...]
    K: int
    F: int
    blank_id: int
    transitions: np.ndarray  # [K, K] label bigram used to sample the references

    def __len__(self):
        return len(self.items)

    def __iter__(self):
        return iter(self.items)

    def corpus(self):
        return [it.labels for it in self.items]


def label_transitions(K: int, blank_id: int = 0, task_seed: int = 0,
                      concentration: float = 0.3, repeat_prob: float = 0.0) -> np.ndarray:
    """Peaked label bigram shared by every split generated with ``task_seed``.

    ``repeat_prob`` is the probability of repeating the previous label.
    """
    rng = np.random.default_rng(10_000 + task_seed)
    P = np.zeros((K, K))
    labels = [k for k in range(K) if k != blank_id]
    for k in labels:
        others = [j for j in labels if j != k]
        P[k, others] = (1.0 - repeat_prob) * rng.dirichlet(np.full(len(others), concentration))
        P[k, k] = repeat_prob
    return P


def gen_synthetic(n_items: int, K: int, F: int, label_len=(1, 4), span=(2, 4), gap=(0, 2),
                  noise: float = 0.0, seed: int = 0, blank_id: int = 0,
                  task_seed: int = 0, onset: bool = False,
                  repeat_prob: float = 0.0) -> SyntheticDataset:
    """Random label sequences rendered as one-hot frames plus Gaussian noise.

    Feature dimension ``k`` fires for frames of label ``k``, dimension
    ``blank_id`` for silence; dimensions ``>= K`` carry noise only. Each label
    spans ``span`` frames, separated by ``gap`` silent frames (at least one
    between identical neighbours).
    """
    if K < 3:
        raise ValueError("K must be >= 3 (blank plus two labels)")
    if F < K + (1 if onset else 0):
        raise ValueError("F must be >= K (+1 with an onset channel)")
    for name, (lo, hi) in (("label_len", label_len), ("span", span), ("gap", gap)):
        if lo > hi or lo < 0:
            raise ValueError(f"infeasible {name} range {(lo, hi)}")
    if span[0] < 2:
        raise ValueError("labels must span at least 2 frames")
    if label_len[1] < 1:
        raise ValueError("label_len must allow at least one label")
    rng = np.random.default_rng(seed)
    P = label_transitions(K, blank_id, task_seed, repeat_prob=repeat_prob)
    labels_all = [k for k in range(K) if k != blank_id]
    items = []
    for _ in range(n_items):
        U = int(rng.integers(max(label_len[0], 1), label_len[1] + 1))
        y = [int(rng.choice(labels_all))]
        for _ in range(U - 1):
            y.append(int(rng.choice(K, p=P[y[-1]])))
        frames = [blank_id] * int(rng.integers(gap[0], gap[1] + 1))
        align = []
        for i, lab in enumerate(y):
            if i > 0:
                g = int(rng.integers(gap[0], gap[1] + 1))
                if lab == y[i - 1]:
                    g = max(g, 1)
                frames += [blank_id] * g
            frames += [lab] * int(rng.integers(span[0], span[1] + 1))
            align.append(len(frames))
        frames += [blank_id] * int(rng.integers(gap[0], gap[1] + 1))
        X = np.zeros((len(frames), F))
        X[np.arange(len(frames)), frames] = 1.0
        if onset:
            for a, lab in zip(align, y):
                start = a - 1
                while start > 0 and frames[start - 1] == lab:
                    start -= 1
                X[start, K] = 1.0
        if noise > 0:
            X += noise * rng.standard_normal(X.shape)
        items.append(Item(X, tuple(y), tuple(align)))
    return SyntheticDataset(tuple(items), K, F, blank_id, P)
