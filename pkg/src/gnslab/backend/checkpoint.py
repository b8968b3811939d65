"""Versioned model checkpoints: parameters, optimizer state and statistics"""

from __future__ import annotations

import hashlib
import json
import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .._errors import DataError, HeaderError
from .gns import GnsConfig, GnsParams, init_gns
from .nn import AdamState
from .stats import NormStats

CKPT_HEADER_STRUCT = struct.Struct("<4sBI")  # magic, version, meta_len
CKPT_MAGIC = b"GNSC"
CKPT_VERSION = 1


@dataclass
class Checkpoint:
    """A training snapshot.

    Attributes:
        params: Model weights.
        stats: Normalization statistics the model was trained with.
        step: Completed optimizer steps.
        variant: Training variant label.
        adam: Optimizer state, if saved.
        loss: Training loss at ``step``.
        path: File the checkpoint was loaded from or saved to.
    """

    params: GnsParams
    stats: NormStats
    step: int = 0
    variant: str = ""
    adam: AdamState | None = None
    loss: float | None = None
    path: Path | None = None

    def digest(self) -> str:
        """sha256 over step, parameters and optimizer moments."""
        h = hashlib.sha256()
        h.update(str(self.step).encode("ascii"))
        for name, tensor in self.params.named_parameters():
            h.update(name.encode("utf-8"))
            h.update(np.ascontiguousarray(tensor.value, dtype="<f8").tobytes())
        if self.adam is not None:
            h.update(str(self.adam.step_count).encode("ascii"))
            for buf in (*self.adam.first_moment, *self.adam.second_moment):
                h.update(np.ascontiguousarray(buf, dtype="<f8").tobytes())
        return h.hexdigest()


def save_checkpoint(path: str | Path, checkpoint: Checkpoint) -> Path:
    """Write ``checkpoint``: header, JSON metadata, then float64 tensors.

    Tensors follow the metadata's ``tensors`` order; when optimizer state is
    present, first moments and then second moments follow in the same order.
    """
    path = Path(path)
    named = checkpoint.params.named_parameters()
    adam = checkpoint.adam
    meta = {
        "config": checkpoint.params.config.to_dict(),
        "tensors": [{"name": n, "shape": list(t.shape)} for n, t in named],
        "step": checkpoint.step,
        "variant": checkpoint.variant,
        "loss": checkpoint.loss,
        "stats": checkpoint.stats.to_dict(),
        "adam": None
        if adam is None
        else {
            "step_count": adam.step_count,
            "beta1": adam.beta1,
            "beta2": adam.beta2,
            "epsilon": adam.epsilon,
        },
    }
    meta_bytes: bytes = json.dumps(obj=meta, sort_keys=True).encode("utf-8")

    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open(mode="wb") as f:
        f.write(CKPT_HEADER_STRUCT.pack(CKPT_MAGIC, CKPT_VERSION, len(meta_bytes)))
        f.write(meta_bytes)
        for _, tensor in named:
            f.write(np.ascontiguousarray(tensor.value, dtype="<f8").tobytes())
        if adam is not None:
            for buf in (*adam.first_moment, *adam.second_moment):
                f.write(np.ascontiguousarray(buf, dtype="<f8").tobytes())
    checkpoint.path = path
    return path


def _read_meta(data: bytes, path: Path) -> tuple[dict, int]:
    if len(data) < CKPT_HEADER_STRUCT.size:
        raise HeaderError(f"{path}: file too small to be a checkpoint")
    magic, version, meta_len = CKPT_HEADER_STRUCT.unpack(data[: CKPT_HEADER_STRUCT.size])
    if magic != CKPT_MAGIC:
        raise HeaderError(f"{path}: invalid magic number")
    if version != CKPT_VERSION:
        raise HeaderError(f"{path}: unsupported checkpoint version {version}")
    start = CKPT_HEADER_STRUCT.size
    try:
        meta = json.loads(data[start : start + meta_len].decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as e:
        raise HeaderError(f"{path}: corrupt metadata block: {e}") from e
    return meta, start + meta_len


def _expected_size(meta: dict, offset: int) -> int:
    values = sum(int(np.prod(t["shape"], dtype=np.int64)) for t in meta["tensors"])
    copies = 3 if meta.get("adam") else 1
    return offset + 8 * values * copies


def load_checkpoint(path: str | Path) -> Checkpoint:
    """Read a checkpoint written by :func:`save_checkpoint`.

    Raises:
        HeaderError: Wrong magic, version or corrupt metadata.
        DataError: Payload size inconsistent with the metadata.
    """
    path = Path(path)
    try:
        data: bytes = path.read_bytes()
    except OSError as e:
        raise DataError(f"failed to read {path}: {e}") from e

    meta, offset = _read_meta(data, path)
    expected = _expected_size(meta, offset)
    if len(data) != expected:
        raise DataError(f"{path}: expected {expected} bytes, found {len(data)}")

    def take(shape: list[int]) -> np.ndarray:
        nonlocal offset
        count = int(np.prod(shape, dtype=np.int64))
        arr = np.frombuffer(data, dtype="<f8", count=count, offset=offset)
        offset += 8 * count
        return arr.reshape(shape).astype(np.float64)

    arrays = {t["name"]: take(t["shape"]) for t in meta["tensors"]}
    params = init_gns(GnsConfig.from_dict(meta["config"]), rng=0)
    params.load_state_dict(arrays)

    adam: AdamState | None = None
    if meta.get("adam"):
        first = [take(t["shape"]) for t in meta["tensors"]]
        second = [take(t["shape"]) for t in meta["tensors"]]
        adam = AdamState(
            first_moment=first,
            second_moment=second,
            step_count=int(meta["adam"]["step_count"]),
            beta1=float(meta["adam"]["beta1"]),
            beta2=float(meta["adam"]["beta2"]),
            epsilon=float(meta["adam"]["epsilon"]),
        )

    return Checkpoint(
        params=params,
        stats=NormStats.from_dict(meta["stats"]),
        step=int(meta["step"]),
        variant=str(meta.get("variant", "")),
        adam=adam,
        loss=meta.get("loss"),
        path=path,
    )


@dataclass
class CheckpointInspectResult:
    """Holds the result of inspecting a checkpoint file

    Attributes:
        path: The inspected path.
        is_checkpoint: Whether the file carries the checkpoint magic.
        header_ok: Whether header, metadata and payload size are consistent.
        reason: Why the file is unusable, if it is.
        version: Format version.
        step: Completed optimizer steps.
        variant: Training variant label.
        loss: Recorded training loss.
        n_tensors: Number of parameter tensors.
        n_values: Number of scalar parameters.
        has_optimizer: Whether Adam state is stored.
        config: Model configuration.
    """

    path: Path
    is_checkpoint: bool
    header_ok: bool
    reason: str | None
    version: int | None = None
    step: int | None = None
    variant: str | None = None
    loss: float | None = None
    n_tensors: int | None = None
    n_values: int | None = None
    has_optimizer: bool = False
    config: dict | None = None


def inspect_checkpoint(path: str | Path) -> CheckpointInspectResult:
    """Inspect a checkpoint without raising.

    Args:
        path: The file to inspect.

    Returns:
        CheckpointInspectResult: The metadata, or the failure reason.
    """
    path = Path(path)
    if not path.is_file():
        return CheckpointInspectResult(path, False, False, reason="Not a file")

    try:
        data: bytes = path.read_bytes()
    except OSError as e:
        return CheckpointInspectResult(path, False, False, reason=f"Failed to read file: {e}")

    if len(data) >= 4 and data[:4] != CKPT_MAGIC:
        return CheckpointInspectResult(path, False, False, reason="Invalid magic number")

    try:
        meta, offset = _read_meta(data, path)
        expected = _expected_size(meta, offset)
    except HeaderError as e:
        return CheckpointInspectResult(path, len(data) >= 4, False, reason=str(e))
    except (KeyError, TypeError, ValueError) as e:
        return CheckpointInspectResult(path, True, False, reason=f"Malformed metadata: {e}")

    if len(data) != expected:
        return CheckpointInspectResult(
            path,
            True,
            False,
            reason=f"Payload size mismatch: expected {expected} bytes, found {len(data)}",
            version=CKPT_VERSION,
        )

    return CheckpointInspectResult(
        path=path,
        is_checkpoint=True,
        header_ok=True,
        reason=None,
        version=CKPT_VERSION,
        step=int(meta["step"]),
        variant=meta.get("variant"),
        loss=meta.get("loss"),
        n_tensors=len(meta["tensors"]),
        n_values=sum(int(np.prod(t["shape"], dtype=np.int64)) for t in meta["tensors"]),
        has_optimizer=bool(meta.get("adam")),
        config=meta.get("config"),
    )
