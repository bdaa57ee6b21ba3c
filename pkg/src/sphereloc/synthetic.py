"""Deterministic synthetic worlds for desk-scale experiments.

A world is a planar scene of random boxes, cylinders and wall segments over
a ground plane, plus a loop trajectory traversed one or more times (later
passes revisit the same places, optionally in the reverse direction).  Every
frame carries its exact ground-truth pose; the whole construction is a pure
function of (seed, params).
"""
from __future__ import annotations

import json
import warnings
from dataclasses import asdict, dataclass, field, replace
from pathlib import Path

import numpy as np

from .frames import SubmapFrame
from .geometry import yaw_matrix
from .io import save_submap_npz


@dataclass(frozen=True)
class TrajectorySpec:
    """Circular loop traversals.  `phases[p]` offsets pass p along the track
    (fraction of one frame step); `reverse[p]` flips travel direction and
    heading.  `lateral_noise_m` jitters positions off the nominal circle."""

    radius_m: float = 64.0
    frames_per_pass: int = 200
    passes: int = 2
    phases: tuple[float, ...] = (0.0, 0.5)
    reverse: tuple[bool, ...] = (False, False)
    lateral_noise_m: float = 0.0
    sensor_height_m: float = 1.6


@dataclass(frozen=True)
class WorldParams:
    area_m: float = 160.0
    n_landmarks: int = 60
    trajectory: TrajectorySpec = field(default_factory=TrajectorySpec)
    max_range_m: float = 50.0
    surface_density: float = 2.0   # landmark points per m^2
    ground_density: float = 0.3    # ground points per m^2


def _clamped_params(params: WorldParams) -> WorldParams:
    traj = params.trajectory
    fixes = {}
    if params.n_landmarks < 1:
        warnings.warn("n_landmarks clamped to 1")
        fixes["n_landmarks"] = 1
    if params.area_m < 20.0:
        warnings.warn("area_m clamped to 20")
        fixes["area_m"] = 20.0
    traj_fixes = {}
    if traj.frames_per_pass < 4:
        warnings.warn("frames_per_pass clamped to 4")
        traj_fixes["frames_per_pass"] = 4
    if traj.passes < 1:
        warnings.warn("passes clamped to 1")
        traj_fixes["passes"] = 1
    area = fixes.get("area_m", params.area_m)
    max_radius = 0.45 * area
    if traj.radius_m > max_radius:
        warnings.warn(f"trajectory radius clamped to {max_radius}")
        traj_fixes["radius_m"] = max_radius
    if traj_fixes:
        fixes["trajectory"] = replace(traj, **traj_fixes)
    return replace(params, **fixes) if fixes else params


def _sample_box(rng, center, size, height, yaw, density):
    sx, sy = size
    faces = []
    rot = yaw_matrix(yaw)[:2, :2]
    for sign in (-1.0, 1.0):
        n = max(2, int(sx * height * density))
        u = rng.uniform(-sx / 2, sx / 2, n)
        v = rng.uniform(0, height, n)
        faces.append(np.stack([u, np.full(n, sign * sy / 2), v], 1))
        n = max(2, int(sy * height * density))
        u = rng.uniform(-sy / 2, sy / 2, n)
        v = rng.uniform(0, height, n)
        faces.append(np.stack([np.full(n, sign * sx / 2), u, v], 1))
    n = max(2, int(sx * sy * density))
    u = rng.uniform(-sx / 2, sx / 2, n)
    v = rng.uniform(-sy / 2, sy / 2, n)
    faces.append(np.stack([u, v, np.full(n, height)], 1))
    pts = np.concatenate(faces)
    pts[:, :2] = pts[:, :2] @ rot.T + center
    return pts


def _sample_cylinder(rng, center, radius, height, density):
    n = max(2, int(2 * np.pi * radius * height * density))
    theta = rng.uniform(0, 2 * np.pi, n)
    z = rng.uniform(0, height, n)
    return np.stack([center[0] + radius * np.cos(theta),
                     center[1] + radius * np.sin(theta), z], 1)


def _sample_wall(rng, center, length, height, yaw, density):
    n = max(2, int(length * height * density))
    u = rng.uniform(-length / 2, length / 2, n)
    v = rng.uniform(0, height, n)
    pts = np.stack([u, np.zeros(n), v], 1)
    pts[:, :2] = pts[:, :2] @ yaw_matrix(yaw)[:2, :2].T + center
    return pts


def build_world_points(rng: np.random.Generator, params: WorldParams) -> np.ndarray:
    """World-frame scene points (ground + landmarks)."""
    half = params.area_m / 2
    chunks = []
    n_ground = max(1, int(params.area_m**2 * params.ground_density))
    ground = np.zeros((n_ground, 3))
    ground[:, 0] = rng.uniform(-half, half, n_ground)
    ground[:, 1] = rng.uniform(-half, half, n_ground)
    chunks.append(ground)
    for _ in range(params.n_landmarks):
        kind = rng.choice(["box", "cylinder", "wall"])
        center = rng.uniform(-half, half, 2)
        height = rng.uniform(2.0, 10.0)
        if kind == "box":
            size = rng.uniform(2.0, 8.0, 2)
            chunks.append(_sample_box(rng, center, size, height,
                                      rng.uniform(0, np.pi), params.surface_density))
        elif kind == "cylinder":
            chunks.append(_sample_cylinder(rng, center, rng.uniform(0.8, 3.0),
                                           height, params.surface_density))
        else:
            chunks.append(_sample_wall(rng, center, rng.uniform(4.0, 16.0), height,
                                       rng.uniform(0, np.pi), params.surface_density))
    return np.concatenate(chunks)


def make_synthetic_world(seed: int, params: WorldParams | None = None) -> list[SubmapFrame]:
    """Generate frames with exact poses; identical seed -> identical output.

    Out-of-range parameters are clamped with a warning rather than rejected.
    """
    params = _clamped_params(params or WorldParams())
    traj = params.trajectory
    rng = np.random.default_rng(seed)
    world = build_world_points(rng, params)
    frames = []
    frame_id = 0
    for p in range(traj.passes):
        phase = traj.phases[p] if p < len(traj.phases) else 0.0
        reverse = traj.reverse[p] if p < len(traj.reverse) else False
        # noise drawn per pass in fixed order to keep generation deterministic
        noise = (rng.normal(0.0, traj.lateral_noise_m, (traj.frames_per_pass, 2))
                 if traj.lateral_noise_m > 0 else np.zeros((traj.frames_per_pass, 2)))
        steps = range(traj.frames_per_pass)
        for i in steps:
            u = (i if not reverse else traj.frames_per_pass - 1 - i) + phase
            theta = 2 * np.pi * u / traj.frames_per_pass
            xy = traj.radius_m * np.array([np.cos(theta), np.sin(theta)]) + noise[i]
            heading = theta + np.pi / 2 + (np.pi if reverse else 0.0)
            rotation = yaw_matrix(heading)
            translation = np.array([xy[0], xy[1], traj.sensor_height_m])
            rel = world - translation
            keep = np.einsum("ij,ij->i", rel, rel) <= params.max_range_m**2
            local = rel[keep] @ rotation  # world->sensor: R^T (w - t)
            frames.append(SubmapFrame(frame_id=frame_id, trajectory_id=p,
                                      points=local.astype(np.float32),
                                      rotation=rotation, translation=translation))
            frame_id += 1
    return frames


def save_world(frames: list[SubmapFrame], directory, seed: int,
               params: WorldParams) -> Path:
    """Serialize to per-frame archives plus a JSON manifest."""
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    for frame in frames:
        save_submap_npz(frame, directory / f"frame_{frame.frame_id:06d}.npz")
    manifest = {"seed": seed, "params": asdict(params), "frame_count": len(frames)}
    path = directory / "manifest.json"
    path.write_text(json.dumps(manifest, indent=2))
    return path
