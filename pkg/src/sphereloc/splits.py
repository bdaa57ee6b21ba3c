"""Keypose selection and query/database split construction."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .exceptions import EmptyInput, NoRevisitsFound, UnknownRecordingLabel
from .frames import SubmapFrame, translations


@dataclass
class SplitSpec:
    """Retrieval protocol: which frames form the database vs the queries."""

    database_ids: list[int]
    query_ids: list[int]
    success_threshold_m: float

    def validate(self) -> None:
        if not self.database_ids:
            raise ValueError("database is empty")
        overlap = set(self.database_ids) & set(self.query_ids)
        if overlap:
            raise ValueError(f"frames in both sets: {sorted(overlap)[:5]}")


def select_keyposes(frames: list[SubmapFrame], spacing_m: float) -> list[SubmapFrame]:
    """Greedy single-pass thinning: keep the first frame, then every frame at
    least `spacing_m` from the last kept one.  Idempotent, order preserving."""
    if not frames:
        raise EmptyInput("no frames to select keyposes from")
    if spacing_m <= 0:
        raise ValueError("spacing_m must be positive")
    kept = [frames[0]]
    last = frames[0].translation
    for frame in frames[1:]:
        if np.linalg.norm(frame.translation - last) >= spacing_m:
            kept.append(frame)
            last = frame.translation
    return kept


def split_query_database(frames: list[SubmapFrame], strategy: str,
                         **params) -> SplitSpec:
    """Build a SplitSpec under one of three protocols.

    keypose_rest     keyposes (param `spacing_m`) are the database, every
                     other frame is a query.
    revisit          frames within `radius_m` of an earlier frame (at least
                     `min_frame_gap` indices back) are queries; the rest is
                     the database.
    cross_recording  frames whose trajectory_id == `database_recording` are
                     the database, all other recordings are queries.

    `success_threshold_m` (default 5.0) is stored on the returned spec.
    """
    if not frames:
        raise EmptyInput("no frames to split")
    threshold = float(params.pop("success_threshold_m", 5.0))
    if strategy == "keypose_rest":
        spacing = float(params.pop("spacing_m"))
        _reject_extra(params)
        keypose_ids = {f.frame_id for f in select_keyposes(frames, spacing)}
        database = [f.frame_id for f in frames if f.frame_id in keypose_ids]
        queries = [f.frame_id for f in frames if f.frame_id not in keypose_ids]
    elif strategy == "revisit":
        radius = float(params.pop("radius_m"))
        min_gap = int(params.pop("min_frame_gap", 10))
        _reject_extra(params)
        queries_mask = _revisit_mask(frames, radius, min_gap)
        if not queries_mask.any():
            raise NoRevisitsFound(
                f"no frame revisits an earlier one within {radius} m "
                f"(min gap {min_gap} frames)")
        database = [f.frame_id for f, q in zip(frames, queries_mask) if not q]
        queries = [f.frame_id for f, q in zip(frames, queries_mask) if q]
    elif strategy == "cross_recording":
        db_label = params.pop("database_recording")
        _reject_extra(params)
        labels = {f.trajectory_id for f in frames}
        if db_label not in labels:
            raise UnknownRecordingLabel(
                f"recording {db_label!r} not present (have {sorted(labels)})")
        database = [f.frame_id for f in frames if f.trajectory_id == db_label]
        queries = [f.frame_id for f in frames if f.trajectory_id != db_label]
    else:
        raise ValueError(f"unknown strategy {strategy!r}")
    spec = SplitSpec(database, queries, threshold)
    spec.validate()
    return spec


def _reject_extra(params: dict) -> None:
    if params:
        raise TypeError(f"unexpected split parameters: {sorted(params)}")


def _revisit_mask(frames: list[SubmapFrame], radius_m: float, min_gap: int) -> np.ndarray:
    """mask[i] = some frame j with j <= i - min_gap lies within radius_m.

    The index gap keeps a frame from 'revisiting' its immediate
    predecessors along the same pass.
    """
    pos = translations(frames)
    n = len(frames)
    mask = np.zeros(n, dtype=bool)
    for i in range(min_gap, n):
        d = np.linalg.norm(pos[:i - min_gap + 1] - pos[i], axis=1)
        mask[i] = bool((d <= radius_m).any())
    return mask
