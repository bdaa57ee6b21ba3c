"""Retrieval, metrics, diagnostics and runtime benchmarking."""
from __future__ import annotations

import csv
import resource
import struct
import time
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np
import torch

from .exceptions import DimensionMismatch, EmptyDatabase, EmptyInput
from .frames import SubmapFrame
from .geometry import rotate_points, yaw_matrix
from .nn.model import ModelConfig, SphereVladNet
from .projection import project
from .splits import SplitSpec

_INDEX_MAGIC = b"SLIX"
_INDEX_VERSION = 1


# --------------------------------------------------------------------------
# descriptors and the exact-NN index
# --------------------------------------------------------------------------
def compute_descriptors(model: SphereVladNet, frames: list[SubmapFrame],
                        max_range_m: float = 50.0, batch_size: int = 16,
                        point_transform=None) -> np.ndarray:
    """(N, D) descriptors in frame order; `point_transform(frame) -> points`
    lets callers perturb clouds before projection."""
    bandwidth = model.config.encoder.input_bandwidth
    dtype = next(model.parameters()).dtype
    was_training = model.training
    model.eval()
    chunks = []
    with torch.no_grad():
        for start in range(0, len(frames), batch_size):
            batch = frames[start:start + batch_size]
            panos = []
            for frame in batch:
                pts = frame.points if point_transform is None else point_transform(frame)
                panos.append(project(pts, max_range_m, bandwidth).values)
            x = torch.as_tensor(np.stack(panos), dtype=dtype)
            chunks.append(model(x).cpu().numpy())
    model.train(was_training)
    return np.concatenate(chunks) if chunks else np.zeros((0, model.config.descriptor_dim))


@dataclass
class DescriptorIndex:
    """Immutable exact-NN database: unit descriptors + ids + poses."""

    descriptors: np.ndarray   # (M, D) float32
    frame_ids: np.ndarray     # (M,) int64
    positions: np.ndarray     # (M, 3) float64

    @property
    def size(self) -> int:
        return self.descriptors.shape[0]

    @property
    def dim(self) -> int:
        return self.descriptors.shape[1]

    def position_of(self, frame_id: int) -> np.ndarray:
        return self.positions[int(np.flatnonzero(self.frame_ids == frame_id)[0])]


def build_index(descriptors: np.ndarray, frame_ids, positions) -> DescriptorIndex:
    """Stable db ordering by frame id; duplicates descriptors are allowed."""
    descriptors = np.asarray(descriptors, dtype=np.float32)
    if descriptors.ndim != 2 or descriptors.shape[0] == 0:
        raise EmptyDatabase("need a nonempty (M, D) descriptor matrix")
    frame_ids = np.asarray(frame_ids, dtype=np.int64)
    positions = np.asarray(positions, dtype=np.float64).reshape(-1, 3)
    if not (len(frame_ids) == len(positions) == len(descriptors)):
        raise DimensionMismatch("descriptors, ids and positions disagree in length")
    order = np.argsort(frame_ids, kind="stable")
    return DescriptorIndex(descriptors[order], frame_ids[order], positions[order])


def save_index(index: DescriptorIndex, path) -> None:
    with open(path, "wb") as fh:
        fh.write(_INDEX_MAGIC)
        fh.write(struct.pack("<IQQ", _INDEX_VERSION, index.size, index.dim))
        fh.write(index.descriptors.astype("<f4").tobytes())
        fh.write(index.frame_ids.astype("<i8").tobytes())
        fh.write(index.positions.astype("<f8").tobytes())


def load_index(path) -> DescriptorIndex:
    with open(path, "rb") as fh:
        if fh.read(4) != _INDEX_MAGIC:
            raise ValueError(f"{path}: not a descriptor index")
        version, m, d = struct.unpack("<IQQ", fh.read(20))
        if version != _INDEX_VERSION:
            raise ValueError(f"{path}: unsupported index version {version}")
        desc = np.frombuffer(fh.read(4 * m * d), dtype="<f4").reshape(m, d).copy()
        ids = np.frombuffer(fh.read(8 * m), dtype="<i8").copy()
        pos = np.frombuffer(fh.read(8 * m * 3), dtype="<f8").reshape(m, 3).copy()
    return DescriptorIndex(desc, ids, pos)


@dataclass
class RetrievalResult:
    query_id: int
    db_ids: np.ndarray       # ranked, best first
    distances: np.ndarray    # non-decreasing
    success: dict[float, bool] = field(default_factory=dict)  # threshold -> top-1 hit


def query(index: DescriptorIndex, descriptor, top_n: int = 25,
          query_id: int = -1) -> RetrievalResult:
    """Exact top-n by Euclidean descriptor distance; ties break to the
    ascending db frame id."""
    vec = np.asarray(getattr(descriptor, "vector", descriptor), dtype=np.float64).ravel()
    if vec.shape[0] != index.dim:
        raise DimensionMismatch(f"query dim {vec.shape[0]} != index dim {index.dim}")
    dist = np.linalg.norm(index.descriptors.astype(np.float64) - vec[None, :], axis=1)
    order = np.lexsort((index.frame_ids, dist))[:top_n]
    if getattr(descriptor, "frame_id", None) is not None:
        query_id = descriptor.frame_id
    return RetrievalResult(query_id, index.frame_ids[order], dist[order])


def retrieve(index: DescriptorIndex, descriptors: np.ndarray, query_ids,
             top_n: int = 25) -> list[RetrievalResult]:
    return [query(index, d, top_n, query_id=int(q))
            for d, q in zip(descriptors, query_ids)]


# --------------------------------------------------------------------------
# recall metrics
# --------------------------------------------------------------------------
@dataclass
class RecallSummary:
    curve: np.ndarray        # recall at n = 1..len(curve)
    ar1: float
    ar1_percent: float
    one_percent_cutoff: int
    threshold_m: float
    n_queries: int


def one_percent_cutoff(database_size: int) -> int:
    """Top-1% neighborhood size: max(1, round(0.01 * M))."""
    return max(1, round(0.01 * database_size))


def recall_at_n(results: list[RetrievalResult], query_positions: dict[int, np.ndarray],
                index: DescriptorIndex, threshold_m: float,
                max_n: int = 25) -> RecallSummary:
    """recall@n = fraction of queries with a true positive in the top n.

    A retrieved frame is a true positive when its pose lies within
    `threshold_m` of the query pose.  Also marks top-1 success flags on the
    results.
    """
    cutoff = one_percent_cutoff(index.size)
    max_n = min(max_n, index.size)
    pos_by_id = {int(i): p for i, p in zip(index.frame_ids, index.positions)}
    first_hit = []
    for res in results:
        q = np.asarray(query_positions[res.query_id])
        ranked = np.stack([pos_by_id[int(i)] for i in res.db_ids])
        hits = np.linalg.norm(ranked - q[None, :], axis=1) <= threshold_m
        rank = int(np.flatnonzero(hits)[0]) + 1 if hits.any() else None
        first_hit.append(rank)
        res.success[threshold_m] = rank == 1
    ranks = np.array([r if r is not None else np.inf for r in first_hit])
    curve = np.array([(ranks <= n).mean() for n in range(1, max_n + 1)])
    ar1 = float((ranks <= 1).mean())
    ar1pct = float((ranks <= cutoff).mean())
    return RecallSummary(curve, ar1, ar1pct, cutoff, threshold_m, len(results))


def split_frames(frames: list[SubmapFrame], split: SplitSpec
                 ) -> tuple[list[SubmapFrame], list[SubmapFrame]]:
    by_id = {f.frame_id: f for f in frames}
    return ([by_id[i] for i in split.database_ids],
            [by_id[i] for i in split.query_ids])


def evaluate_split(model: SphereVladNet, frames: list[SubmapFrame], split: SplitSpec,
                   max_range_m: float = 50.0, max_n: int = 25,
                   point_transform=None) -> tuple[RecallSummary, list[RetrievalResult]]:
    """Full retrieval pass: database index, queries, recall summary."""
    db_frames, q_frames = split_frames(frames, split)
    if not q_frames:
        raise EmptyInput("split has no query frames to evaluate")
    db_desc = compute_descriptors(model, db_frames, max_range_m)
    index = build_index(db_desc, [f.frame_id for f in db_frames],
                        [f.translation for f in db_frames])
    q_desc = compute_descriptors(model, q_frames, max_range_m,
                                 point_transform=point_transform)
    top_n = min(max(max_n, one_percent_cutoff(index.size)), index.size)
    results = retrieve(index, q_desc, [f.frame_id for f in q_frames], top_n)
    q_pos = {f.frame_id: f.translation for f in q_frames}
    summary = recall_at_n(results, q_pos, index, split.success_threshold_m, max_n)
    return summary, results


# --------------------------------------------------------------------------
# viewpoint experiments
# --------------------------------------------------------------------------
def yaw_sweep_eval(model: SphereVladNet, frames: list[SubmapFrame], split: SplitSpec,
                   yaw_deg_list, translation_noise_m: float = 1.0, seed: int = 0,
                   max_range_m: float = 50.0) -> list[dict]:
    """AR@1 per yaw: every query cloud is rotated by the yaw and shifted by a
    per-query planar offset drawn once (shared across yaw levels, so rows
    differ only in the rotation)."""
    if not len(list(yaw_deg_list)):
        raise ValueError("yaw list is empty")
    rng = np.random.default_rng(seed)
    _, q_frames = split_frames(frames, split)
    offsets = {f.frame_id: np.array([*rng.uniform(-translation_noise_m,
                                                  translation_noise_m, 2), 0.0])
               if translation_noise_m > 0 else np.zeros(3) for f in q_frames}
    rows = []
    for yaw_deg in yaw_deg_list:
        rot = yaw_matrix(np.deg2rad(float(yaw_deg)))

        def perturb(frame, rot=rot):
            return rotate_points(frame.points, rot) + offsets[frame.frame_id]

        summary, results = evaluate_split(model, frames, split, max_range_m,
                                          point_transform=perturb)
        rows.append({"yaw_deg": float(yaw_deg), "ar1": summary.ar1,
                     "ar1_percent": summary.ar1_percent,
                     "results": results})
    return rows


# --------------------------------------------------------------------------
# assignment diagnostics
# --------------------------------------------------------------------------
@dataclass
class SNRReport:
    n_total: int
    n_active: int
    snr: float
    degenerate: bool
    histogram: np.ndarray
    activity_min_fraction: float


def snr_from_counts(counts: np.ndarray, activity_min_fraction: float = 0.01) -> SNRReport:
    """Active-centroid ratio N_active / (N_total - N_active).

    A centroid is active when it holds at least `activity_min_fraction` of
    all argmax assignments.  N_active == N_total has a zero denominator and
    is reported as +inf with the degenerate flag set.
    """
    counts = np.asarray(counts)
    n_total = counts.shape[0]
    total = counts.sum()
    active = (counts >= activity_min_fraction * total) & (counts > 0) if total else \
        np.zeros(n_total, dtype=bool)
    n_active = int(active.sum())
    if n_active == n_total:
        return SNRReport(n_total, n_active, float("inf"), True, counts,
                         activity_min_fraction)
    snr = n_active / (n_total - n_active)
    return SNRReport(n_total, n_active, float(snr), False, counts,
                     activity_min_fraction)


def cluster_assignment_counts(model: SphereVladNet, frames: list[SubmapFrame],
                              max_range_m: float = 50.0,
                              batch_size: int = 16) -> np.ndarray:
    """Histogram of argmax soft assignments over all local descriptors of all
    frames; ties resolve to the lowest cluster index."""
    bandwidth = model.config.encoder.input_bandwidth
    dtype = next(model.parameters()).dtype
    counts = np.zeros(model.config.clusters, dtype=np.int64)
    was_training = model.training
    model.eval()
    with torch.no_grad():
        for start in range(0, len(frames), batch_size):
            batch = frames[start:start + batch_size]
            panos = np.stack([project(f, max_range_m, bandwidth).values for f in batch])
            assign = model.soft_assignment(torch.as_tensor(panos, dtype=dtype))
            winners = np.argmax(assign.cpu().numpy(), axis=-1).ravel()
            counts += np.bincount(winners, minlength=model.config.clusters)
    model.train(was_training)
    return counts


def snr_report(model: SphereVladNet, frames: list[SubmapFrame],
               activity_min_fraction: float = 0.01,
               max_range_m: float = 50.0) -> SNRReport:
    counts = cluster_assignment_counts(model, frames, max_range_m)
    return snr_from_counts(counts, activity_min_fraction)


# --------------------------------------------------------------------------
# ablation driver
# --------------------------------------------------------------------------
def run_ablation(frames: list[SubmapFrame], split: SplitSpec,
                 model_config: ModelConfig, train_fn, max_range_m: float = 50.0
                 ) -> list[dict]:
    """Train the four {batchnorm, attention} variants under one configuration
    and tabulate AR@1 / AR@1%.  `train_fn(model_config) -> model` supplies the
    shared training procedure (and its seed)."""
    rows = []
    for batchnorm in (False, True):
        for attention in (False, True):
            cfg = replace(model_config,
                          encoder=replace(model_config.encoder, batchnorm=batchnorm),
                          attention=attention)
            model = train_fn(cfg)
            summary, _ = evaluate_split(model, frames, split, max_range_m)
            rows.append({"batchnorm": batchnorm, "attention": attention,
                         "ar1": summary.ar1, "ar1_percent": summary.ar1_percent})
    return rows


# --------------------------------------------------------------------------
# runtime benchmark
# --------------------------------------------------------------------------
def benchmark_runtime(model: SphereVladNet, points: np.ndarray,
                      n_runs: int = 500, warmup: int = 10,
                      max_range_m: float = 50.0, backend: str | None = None) -> dict:
    """Mean per-frame projection and inference wall-clock over `n_runs`
    timed runs (after `warmup` discarded runs), plus peak process memory."""
    bandwidth = model.config.encoder.input_bandwidth
    dtype = next(model.parameters()).dtype
    was_training = model.training
    model.eval()
    pre, inf = [], []
    with torch.no_grad():
        for i in range(warmup + n_runs):
            t0 = time.perf_counter()
            pano = project(points, max_range_m, bandwidth, backend=backend)
            t1 = time.perf_counter()
            model(torch.as_tensor(pano.values, dtype=dtype))
            t2 = time.perf_counter()
            if i >= warmup:
                pre.append(t1 - t0)
                inf.append(t2 - t1)
    model.train(was_training)
    peak_mb = resource.getrusage(resource.RUSAGE_SELF).ru_maxrss / 1024.0
    if torch.cuda.is_available():
        peak_mb = torch.cuda.max_memory_allocated() / 2**20
    return {"mean_preprocess_ms": 1e3 * float(np.mean(pre)),
            "mean_inference_ms": 1e3 * float(np.mean(inf)),
            "peak_memory_mb": float(peak_mb),
            "n_runs": n_runs,
            "projection_backend": backend or "auto"}


# --------------------------------------------------------------------------
# table output
# --------------------------------------------------------------------------
def write_csv(rows: list[dict], path, drop: tuple[str, ...] = ("results",)) -> None:
    rows = [{k: v for k, v in row.items() if k not in drop} for row in rows]
    if not rows:
        Path(path).write_text("")
        return
    with open(path, "w", newline="") as fh:
        writer = csv.DictWriter(fh, fieldnames=list(rows[0].keys()))
        writer.writeheader()
        writer.writerows(rows)
