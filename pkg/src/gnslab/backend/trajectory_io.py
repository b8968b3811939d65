"""Trajectory files, dataset manifests and header inspection"""

from __future__ import annotations

import json
import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .._errors import DataError, HeaderError
from .dataset import (
    BOUNDARY_MODES,
    DatasetManifest,
    Trajectory,
    scaled_bounds,
    stats_for_trajectory,
)
from .flip import ParticleType
from .stats import NormStats

TRAJ_HEADER_STRUCT = struct.Struct(
    "<4sBIIHHdI"
)  # magic, version, n_frames, n_particles, width, height, dt, meta_len

TRAJ_MAGIC = b"GNST"
TRAJ_VERSION = 1
MANIFEST_NAME = "manifest.json"
MANIFEST_VERSION = 1


def write_trajectory(path: str | Path, traj: Trajectory) -> Path:
    """Write ``traj`` as a little-endian binary trajectory file.

    Layout: header, JSON metadata, ``uint8`` particle types, then
    ``float32`` positions frame by frame.

    Args:
        path: Destination file.
        traj: Trajectory to store.

    Returns:
        Path: The written path.
    """
    path = Path(path)
    meta: bytes = json.dumps(
        obj={"boundary": traj.boundary, "name": traj.name, "scene": traj.scene_meta},
        sort_keys=True,
    ).encode("utf-8")
    header: bytes = TRAJ_HEADER_STRUCT.pack(
        TRAJ_MAGIC,
        TRAJ_VERSION,
        traj.n_frames,
        traj.n_particles,
        traj.domain[0],
        traj.domain[1],
        traj.dt,
        len(meta),
    )
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open(mode="wb") as f:
        f.write(header)
        f.write(meta)
        f.write(traj.types.astype("<u1").tobytes())
        f.write(traj.frames.astype("<f4").tobytes())
    return path


def _unpack_header(data: bytes, path: Path) -> tuple:
    if len(data) < TRAJ_HEADER_STRUCT.size:
        raise HeaderError(f"{path}: file too small to be a trajectory")
    fields = TRAJ_HEADER_STRUCT.unpack(data[: TRAJ_HEADER_STRUCT.size])
    if fields[0] != TRAJ_MAGIC:
        raise HeaderError(f"{path}: invalid magic number")
    if fields[1] != TRAJ_VERSION:
        raise HeaderError(f"{path}: unsupported trajectory version {fields[1]}")
    return fields


def read_trajectory(path: str | Path) -> Trajectory:
    """Read a trajectory written by :func:`write_trajectory`.

    Raises:
        HeaderError: Wrong magic, version or truncated header.
        DataError: Payload size or metadata does not match the header.
    """
    path = Path(path)
    try:
        data: bytes = path.read_bytes()
    except OSError as e:
        raise DataError(f"failed to read {path}: {e}") from e

    _, _, n_frames, n_particles, width, height, dt, meta_len = _unpack_header(data, path)

    offset = TRAJ_HEADER_STRUCT.size
    expected = offset + meta_len + n_particles + 4 * 2 * n_frames * n_particles
    if len(data) != expected:
        raise DataError(f"{path}: expected {expected} bytes, found {len(data)}")

    try:
        meta = json.loads(data[offset : offset + meta_len].decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as e:
        raise DataError(f"{path}: corrupt metadata block: {e}") from e
    offset += meta_len

    types = np.frombuffer(data, dtype="<u1", count=n_particles, offset=offset)
    offset += n_particles
    frames = np.frombuffer(data, dtype="<f4", count=2 * n_frames * n_particles, offset=offset)

    return Trajectory(
        frames=frames.reshape(n_frames, n_particles, 2).astype(np.float64),
        types=types.copy(),
        dt=float(dt),
        domain=(width, height),
        boundary=meta.get("boundary", "distance"),
        scene_meta=meta.get("scene", {}),
        name=meta.get("name", path.stem),
    )


@dataclass
class TrajectoryInspectResult:
    """Holds the result of inspecting a trajectory file

    Attributes:
        path: The inspected path.
        is_trajectory: Whether the file carries the trajectory magic.
        header_ok: Whether the header and payload size are consistent.
        reason: Why the file is unusable, if it is.
        version: Format version.
        n_frames: Number of frames.
        n_particles: Number of particles.
        n_fluid: Number of fluid particles.
        domain: Grid domain (W, H).
        dt: Physical time step.
        boundary: Boundary representation.
        scaled_bounds: Scaled position bounds implied by the domain.
    """

    path: Path
    is_trajectory: bool
    header_ok: bool
    reason: str | None
    version: int | None = None
    n_frames: int | None = None
    n_particles: int | None = None
    n_fluid: int | None = None
    domain: tuple[int, int] | None = None
    dt: float | None = None
    boundary: str | None = None
    scaled_bounds: list[list[float]] | None = None


def inspect_trajectory(path: str | Path) -> TrajectoryInspectResult:
    """Inspect a trajectory file without raising.

    Args:
        path: The file to inspect.

    Returns:
        TrajectoryInspectResult: The header fields, or the failure reason.
    """
    path = Path(path)
    if not path.is_file():
        return TrajectoryInspectResult(path, False, False, reason="Not a file")

    try:
        data: bytes = path.read_bytes()
    except OSError as e:
        return TrajectoryInspectResult(path, False, False, reason=f"Failed to read file: {e}")

    if len(data) < TRAJ_HEADER_STRUCT.size:
        return TrajectoryInspectResult(
            path, False, False, reason="File too small to be a trajectory"
        )

    magic, version, n_frames, n_particles, width, height, dt, meta_len = (
        TRAJ_HEADER_STRUCT.unpack(data[: TRAJ_HEADER_STRUCT.size])
    )
    if magic != TRAJ_MAGIC:
        return TrajectoryInspectResult(path, False, False, reason="Invalid magic number")
    if version != TRAJ_VERSION:
        return TrajectoryInspectResult(
            path, True, False, reason=f"Unsupported trajectory version: {version}"
        )

    expected = TRAJ_HEADER_STRUCT.size + meta_len + n_particles + 8 * n_frames * n_particles
    if len(data) != expected:
        return TrajectoryInspectResult(
            path,
            True,
            False,
            reason=f"Payload size mismatch: expected {expected} bytes, found {len(data)}",
            version=version,
        )

    offset = TRAJ_HEADER_STRUCT.size
    try:
        meta = json.loads(data[offset : offset + meta_len].decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError):
        return TrajectoryInspectResult(
            path, True, False, reason="Corrupt metadata block", version=version
        )
    types = np.frombuffer(data, dtype="<u1", count=n_particles, offset=offset + meta_len)

    return TrajectoryInspectResult(
        path=path,
        is_trajectory=True,
        header_ok=True,
        reason=None,
        version=version,
        n_frames=n_frames,
        n_particles=n_particles,
        n_fluid=int(np.count_nonzero(types == ParticleType.FLUID)),
        domain=(width, height),
        dt=dt,
        boundary=meta.get("boundary"),
        scaled_bounds=scaled_bounds((width, height)).tolist(),
    )


def write_manifest(manifest: DatasetManifest) -> Path:
    """Write ``manifest.json`` into the manifest's root directory."""
    data: dict[str, object] = {
        "version": manifest.version,
        "files": list(manifest.files),
        "stats": manifest.stats.to_dict(),
        "scaling": {
            "domain": list(manifest.domain),
            "bounds": scaled_bounds(manifest.domain).tolist(),
        },
        "boundary": manifest.boundary,
        "seed": manifest.seed,
        "scene_spec": manifest.scene_spec,
    }
    manifest.root.mkdir(parents=True, exist_ok=True)
    path = manifest.root / MANIFEST_NAME
    path.write_text(data=json.dumps(obj=data, indent=4, sort_keys=True), encoding="utf-8")
    return path


def read_manifest(path: str | Path) -> DatasetManifest:
    """Read a manifest from its file or from the dataset directory.

    Raises:
        DataError: Missing file, malformed JSON or missing fields.
    """
    path = Path(path)
    if path.is_dir():
        path = path / MANIFEST_NAME
    if not path.is_file():
        raise DataError(f"no dataset manifest at {path}")

    try:
        data = json.loads(s=path.read_text(encoding="utf-8"))
    except (OSError, json.JSONDecodeError) as e:
        raise DataError(f"failed to read manifest {path}: {e}") from e

    try:
        version = int(data.get("version", 0))
        if version != MANIFEST_VERSION:
            raise DataError(f"unsupported manifest version {version} in {path}")
        boundary = str(data["boundary"])
        if boundary not in BOUNDARY_MODES:
            raise DataError(f"unknown boundary representation {boundary!r} in {path}")
        domain = data["scaling"]["domain"]
        return DatasetManifest(
            root=path.parent,
            files=[str(name) for name in data["files"]],
            stats=NormStats.from_dict(data["stats"]),
            domain=(int(domain[0]), int(domain[1])),
            boundary=boundary,
            seed=int(data.get("seed", 0)),
            scene_spec=dict(data.get("scene_spec", {})),
            version=version,
        )
    except (KeyError, TypeError, ValueError) as e:
        raise DataError(f"malformed manifest {path}: {e}") from e


def load_dataset(manifest: DatasetManifest) -> list[Trajectory]:
    """Read every member trajectory of ``manifest``, in manifest order."""
    trajectories: list[Trajectory] = []
    for path in manifest.paths:
        traj = read_trajectory(path)
        if traj.boundary != manifest.boundary:
            raise DataError(
                f"{path.name} uses boundary {traj.boundary!r}, "
                f"manifest declares {manifest.boundary!r}"
            )
        trajectories.append(traj)
    return trajectories


def rescan_stats(manifest: DatasetManifest) -> NormStats:
    """Recompute statistics from the listed files.

    Members are merged in manifest order exactly as during generation, so the
    result equals ``manifest.stats``.
    """
    total = NormStats()
    for path in manifest.paths:
        total.merge(stats_for_trajectory(read_trajectory(path)))
    return total
