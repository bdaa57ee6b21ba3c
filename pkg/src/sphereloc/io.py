"""Point-cloud and pose file I/O.

Supported point formats:
  kitti_bin  little-endian float32 records (x, y, z, intensity); intensity ignored
  ply        ASCII or binary_little_endian, x/y/z properties required
  pcd        ASCII or binary, x/y/z fields required
  npz        numpy archive with `points` (N, 3) and `pose` (3, 4)

Poses travel in a KITTI-style text sidecar: one frame per line, 12 floats,
the row-major 3x4 [R | t] matrix.  NaN/Inf points are dropped on load and
counted on the returned frame.
"""
from __future__ import annotations

import logging
import re
from pathlib import Path

import numpy as np

from .exceptions import MalformedRecord, MissingPose, UnreadableFile
from .frames import SubmapFrame

log = logging.getLogger(__name__)

FORMATS = ("kitti_bin", "ply", "pcd", "npz")

_PLY_DTYPES = {
    "float": "<f4", "float32": "<f4", "double": "<f8", "float64": "<f8",
    "int": "<i4", "int32": "<i4", "uint": "<u4", "uint32": "<u4",
    "short": "<i2", "int16": "<i2", "ushort": "<u2", "uint16": "<u2",
    "char": "i1", "int8": "i1", "uchar": "u1", "uint8": "u1",
}


def load_submap(path, format: str, pose: np.ndarray | None = None,
                frame_id: int = 0, trajectory_id: int = 0) -> SubmapFrame:
    """Load one submap.  `pose` is a (3, 4) [R | t] matrix; mandatory for all
    formats except npz, which carries its own."""
    path = Path(path)
    if format not in FORMATS:
        raise ValueError(f"unknown format {format!r}; choose from {FORMATS}")
    if not path.exists():
        raise UnreadableFile(f"no such file: {path}")
    if format == "npz":
        points, pose_arr = _read_npz(path)
    else:
        reader = {"kitti_bin": _read_kitti_bin, "ply": _read_ply, "pcd": _read_pcd}[format]
        points = reader(path)
        if pose is None:
            raise MissingPose(f"{path}: format {format!r} needs a sidecar pose")
        pose_arr = np.asarray(pose, dtype=np.float64).reshape(3, 4)
    finite = np.isfinite(points).all(axis=1)
    dropped = int((~finite).sum())
    if dropped:
        log.debug("%s: dropped %d non-finite points", path, dropped)
    return SubmapFrame(frame_id=frame_id, trajectory_id=trajectory_id,
                       points=points[finite], rotation=pose_arr[:, :3],
                       translation=pose_arr[:, 3], dropped_points=dropped)


def _read_kitti_bin(path: Path) -> np.ndarray:
    raw = path.read_bytes()
    if len(raw) % 16:
        raise MalformedRecord(
            f"{path}: {len(raw)} bytes is not a multiple of the 16-byte record")
    pts = np.frombuffer(raw, dtype="<f4").reshape(-1, 4)
    return pts[:, :3].astype(np.float64)


def _read_npz(path: Path) -> tuple[np.ndarray, np.ndarray]:
    try:
        archive = np.load(path)
    except Exception as exc:
        raise UnreadableFile(f"{path}: {exc}") from exc
    if "points" not in archive:
        raise MalformedRecord(f"{path}: archive lacks a 'points' array")
    if "pose" not in archive:
        raise MissingPose(f"{path}: archive lacks a 'pose' array")
    points = np.asarray(archive["points"], dtype=np.float64)
    if points.ndim != 2 or points.shape[1] != 3:
        raise MalformedRecord(f"{path}: points must be (N, 3), got {points.shape}")
    pose = np.asarray(archive["pose"], dtype=np.float64)
    if pose.shape != (3, 4):
        raise MalformedRecord(f"{path}: pose must be (3, 4), got {pose.shape}")
    return points, pose


def save_submap_npz(frame: SubmapFrame, path) -> None:
    np.savez(path, points=frame.points, pose=frame.pose,
             frame_id=frame.frame_id, trajectory_id=frame.trajectory_id)


def _read_ply(path: Path) -> np.ndarray:
    with open(path, "rb") as fh:
        magic = fh.readline().strip()
        if magic != b"ply":
            raise MalformedRecord(f"{path}: missing 'ply' magic")
        fmt = None
        n_vertices = None
        props: list[tuple[str, str]] = []
        in_vertex = False
        while True:
            line = fh.readline()
            if not line:
                raise MalformedRecord(f"{path}: header ended prematurely")
            tokens = line.decode("ascii", "replace").split()
            if not tokens:
                continue
            if tokens[0] == "format":
                fmt = tokens[1]
            elif tokens[0] == "element":
                in_vertex = tokens[1] == "vertex"
                if in_vertex:
                    n_vertices = int(tokens[2])
            elif tokens[0] == "property" and in_vertex:
                if tokens[1] == "list":
                    raise MalformedRecord(f"{path}: list property in vertex element")
                props.append((tokens[2], tokens[1]))
            elif tokens[0] == "end_header":
                break
        if fmt not in ("ascii", "binary_little_endian"):
            raise MalformedRecord(f"{path}: unsupported ply format {fmt!r}")
        if n_vertices is None:
            raise MalformedRecord(f"{path}: no vertex element")
        names = [name for name, _ in props]
        if not {"x", "y", "z"} <= set(names):
            raise MalformedRecord(f"{path}: ply lacks x/y/z vertex properties")
        dtype = np.dtype([(name, _PLY_DTYPES[t]) for name, t in props])
        if fmt == "ascii":
            rows = np.loadtxt(fh, dtype=np.float64, max_rows=n_vertices, ndmin=2)
            if rows.shape != (n_vertices, len(props)):
                raise MalformedRecord(f"{path}: vertex row count/width mismatch")
            data = {name: rows[:, i] for i, (name, _) in enumerate(props)}
        else:
            buf = fh.read(dtype.itemsize * n_vertices)
            if len(buf) != dtype.itemsize * n_vertices:
                raise MalformedRecord(f"{path}: truncated binary vertex data")
            rec = np.frombuffer(buf, dtype=dtype)
            data = {name: rec[name] for name in names}
    return np.stack([data["x"], data["y"], data["z"]], axis=1).astype(np.float64)


def save_ply(points: np.ndarray, path, binary: bool = True) -> None:
    points = np.asarray(points, dtype=np.float32).reshape(-1, 3)
    header = ["ply",
              "format binary_little_endian 1.0" if binary else "format ascii 1.0",
              f"element vertex {len(points)}",
              "property float x", "property float y", "property float z",
              "end_header", ""]
    with open(path, "wb") as fh:
        fh.write("\n".join(header).encode("ascii"))
        if binary:
            fh.write(points.astype("<f4").tobytes())
        else:
            np.savetxt(fh, points, fmt="%.8g")


_PCD_DTYPES = {("F", 4): "<f4", ("F", 8): "<f8", ("I", 4): "<i4",
               ("I", 2): "<i2", ("I", 1): "i1", ("U", 4): "<u4",
               ("U", 2): "<u2", ("U", 1): "u1"}


def _read_pcd(path: Path) -> np.ndarray:
    with open(path, "rb") as fh:
        header: dict[str, list[str]] = {}
        while True:
            line = fh.readline()
            if not line:
                raise MalformedRecord(f"{path}: header ended prematurely")
            text = line.decode("ascii", "replace").strip()
            if not text or text.startswith("#"):
                continue
            key, *vals = text.split()
            header[key.upper()] = vals
            if key.upper() == "DATA":
                break
        try:
            fields = header["FIELDS"]
            sizes = [int(s) for s in header["SIZE"]]
            types = header["TYPE"]
            counts = [int(c) for c in header.get("COUNT", ["1"] * len(fields))]
            n_points = int(header["POINTS"][0])
            mode = header["DATA"][0]
        except (KeyError, IndexError, ValueError) as exc:
            raise MalformedRecord(f"{path}: bad pcd header: {exc}") from exc
        if any(c != 1 for c in counts):
            raise MalformedRecord(f"{path}: multi-count pcd fields unsupported")
        if not {"x", "y", "z"} <= set(fields):
            raise MalformedRecord(f"{path}: pcd lacks x/y/z fields")
        if mode == "ascii":
            rows = np.loadtxt(fh, dtype=np.float64, max_rows=n_points, ndmin=2)
            if rows.shape != (n_points, len(fields)):
                raise MalformedRecord(f"{path}: point row count/width mismatch")
            cols = {name: rows[:, i] for i, name in enumerate(fields)}
        elif mode == "binary":
            dtype = np.dtype([(f, _PCD_DTYPES[(t, s)])
                              for f, t, s in zip(fields, types, sizes)])
            buf = fh.read(dtype.itemsize * n_points)
            if len(buf) != dtype.itemsize * n_points:
                raise MalformedRecord(f"{path}: truncated binary point data")
            rec = np.frombuffer(buf, dtype=dtype)
            cols = {name: rec[name] for name in fields}
        else:
            raise MalformedRecord(f"{path}: unsupported pcd data mode {mode!r}")
    return np.stack([cols["x"], cols["y"], cols["z"]], axis=1).astype(np.float64)


def save_pcd(points: np.ndarray, path, binary: bool = True) -> None:
    points = np.asarray(points, dtype=np.float32).reshape(-1, 3)
    header = ["# .PCD v0.7 - Point Cloud Data file format",
              "VERSION 0.7", "FIELDS x y z", "SIZE 4 4 4", "TYPE F F F",
              "COUNT 1 1 1", f"WIDTH {len(points)}", "HEIGHT 1",
              "VIEWPOINT 0 0 0 1 0 0 0", f"POINTS {len(points)}",
              f"DATA {'binary' if binary else 'ascii'}", ""]
    with open(path, "wb") as fh:
        fh.write("\n".join(header).encode("ascii"))
        if binary:
            fh.write(points.astype("<f4").tobytes())
        else:
            np.savetxt(fh, points, fmt="%.8g")


def load_poses_file(path) -> np.ndarray:
    """KITTI-style poses: one 3x4 row-major transform per line -> (N, 3, 4)."""
    path = Path(path)
    if not path.exists():
        raise UnreadableFile(f"no such file: {path}")
    rows = []
    for i, line in enumerate(path.read_text().splitlines()):
        if not line.strip():
            continue
        vals = line.split()
        if len(vals) != 12:
            raise MalformedRecord(f"{path}:{i + 1}: expected 12 floats, got {len(vals)}")
        rows.append(np.array([float(v) for v in vals]).reshape(3, 4))
    if not rows:
        raise MalformedRecord(f"{path}: empty poses file")
    return np.stack(rows)


def save_poses_file(poses, path) -> None:
    with open(path, "w") as fh:
        for pose in poses:
            fh.write(" ".join(f"{v:.12g}" for v in np.asarray(pose).ravel()) + "\n")


_FRAME_RE = re.compile(r"(\d+)")


def load_dataset(directory, format: str = "npz") -> list[SubmapFrame]:
    """Load every frame file in a directory, ordered by the numeric index in
    each filename.  Non-npz formats read poses from `poses.txt` alongside."""
    directory = Path(directory)
    suffix = {"npz": ".npz", "kitti_bin": ".bin", "ply": ".ply", "pcd": ".pcd"}[format]

    def order(p: Path):
        digits = _FRAME_RE.findall(p.stem)
        return (int(digits[-1]) if digits else -1, p.name)

    paths = sorted(directory.glob(f"*{suffix}"), key=order)
    if not paths:
        return []
    poses = None
    if format != "npz":
        poses_path = directory / "poses.txt"
        if not poses_path.exists():
            raise MissingPose(f"{directory}: poses.txt required for format {format!r}")
        poses = load_poses_file(poses_path)
        if len(poses) < len(paths):
            raise MissingPose(f"{directory}: {len(paths)} frames but only "
                              f"{len(poses)} poses")
    frames = []
    for i, path in enumerate(paths):
        frame = load_submap(path, format, pose=None if poses is None else poses[i],
                            frame_id=i)
        if format == "npz":
            with np.load(path) as archive:
                if "frame_id" in archive:
                    frame.frame_id = int(archive["frame_id"])
                if "trajectory_id" in archive:
                    frame.trajectory_id = int(archive["trajectory_id"])
        frames.append(frame)
    return frames
