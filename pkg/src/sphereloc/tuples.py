"""Training-tuple mining for metric learning.

A tuple is (anchor, positives within d_pos, negatives strictly beyond d_neg,
plus one extra negative that is also beyond d_neg of every chosen negative).
Distances default to 3D Euclidean between pose translations; `planar`
switches to the horizontal plane.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .exceptions import InsufficientCandidates
from .frames import SubmapFrame, translations

_EXTRA_NEGATIVE_RETRIES = 32


@dataclass
class TrainingTuple:
    anchor_id: int
    positive_ids: list[int]
    negative_ids: list[int]
    extra_negative_id: int

    def frame_ids(self) -> list[int]:
        return ([self.anchor_id] + self.positive_ids + self.negative_ids
                + [self.extra_negative_id])


def mine_tuples(frames: list[SubmapFrame], d_pos: float = 8.0,
                d_neg: float = 16.0, n_pos: int = 2, n_neg: int = 6,
                rng: np.random.Generator | int | None = None,
                planar: bool = False) -> TrainingTuple:
    """Uniformly sample one tuple satisfying all distance constraints.

    Deterministic given an integer seed or a Generator.  Raises
    InsufficientCandidates when no anchor admits a full tuple.
    """
    if d_pos >= d_neg:
        raise ValueError("d_pos must be smaller than d_neg")
    if not isinstance(rng, np.random.Generator):
        rng = np.random.default_rng(rng)
    pos = translations(frames)
    if planar:
        pos = pos[:, :2]
    n = len(frames)
    if n < 2 + n_pos + n_neg:
        raise InsufficientCandidates(f"{n} frames cannot form a tuple")
    dist = np.linalg.norm(pos[:, None, :] - pos[None, :, :], axis=-1)
    eligible = []
    for i in range(n):
        n_close = int(((dist[i] <= d_pos) & (np.arange(n) != i)).sum())
        n_far = int((dist[i] > d_neg).sum())
        if n_close >= n_pos and n_far >= n_neg + 1:
            eligible.append(i)
    if not eligible:
        raise InsufficientCandidates(
            f"no anchor has {n_pos} frames within {d_pos} m and "
            f"{n_neg + 1} beyond {d_neg} m")
    order = rng.permutation(len(eligible))
    for idx in order:
        a = eligible[idx]
        close = np.flatnonzero((dist[a] <= d_pos) & (np.arange(n) != a))
        far = np.flatnonzero(dist[a] > d_neg)
        positives = rng.choice(close, size=n_pos, replace=False)
        # the extra negative must be dissimilar to every chosen negative,
        # which can fail for unlucky draws; retry a bounded number of times
        for _ in range(_EXTRA_NEGATIVE_RETRIES):
            negatives = rng.choice(far, size=n_neg, replace=False)
            apart = (dist[np.ix_(far, negatives)] > d_neg).all(axis=1)
            pool = far[apart & ~np.isin(far, negatives)]
            if pool.size:
                extra = int(rng.choice(pool))
                return TrainingTuple(
                    anchor_id=frames[a].frame_id,
                    positive_ids=[frames[j].frame_id for j in positives],
                    negative_ids=[frames[j].frame_id for j in negatives],
                    extra_negative_id=frames[extra].frame_id)
    raise InsufficientCandidates(
        "no extra negative beyond d_neg of every sampled negative")
