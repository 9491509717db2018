"""File formats: binary trajectories, CSV tables and plain PGM heatmaps.

Trajectory file layout (all little-endian)::

    magic      4 bytes   b"BKRC"
    version    uint32    1
    nx, ny     uint32
    n_vars     uint32    2
    n_steps    uint64    number of stored frames
    dt         float64
    hash       32 bytes  config hash, ASCII
    payload    float64[n_steps, 2, nx, ny]

Every CSV starts with a ``# config_hash=...`` line followed by the header row.
"""
from __future__ import annotations

import csv
import math
import struct
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Optional, Sequence

import numpy as np

from .barkley import BarkleyParams, FieldPair, iter_simulate

__all__ = [
    "MAGIC",
    "VERSION",
    "HEADER",
    "TrajectoryHeader",
    "TrajectoryFormatError",
    "write_trajectory",
    "read_trajectory",
    "simulate_to_file",
    "format_value",
    "write_csv",
    "read_csv",
    "render_heatmap",
    "read_pgm",
]

MAGIC = b"BKRC"
VERSION = 1
HEADER = struct.Struct("<4sIIIIQd32s")


class TrajectoryFormatError(ValueError):
    pass


@dataclass(frozen=True)
class TrajectoryHeader:
    nx: int
    ny: int
    n_steps: int
    dt: float
    config_hash: str
    n_vars: int = 2
    version: int = VERSION

    @property
    def payload_bytes(self) -> int:
        return self.nx * self.ny * self.n_vars * self.n_steps * 8

    def pack(self) -> bytes:
        h = self.config_hash.encode("ascii")
        if len(h) > 32:
            raise ValueError("config hash longer than 32 characters")
        return HEADER.pack(MAGIC, self.version, self.nx, self.ny, self.n_vars, self.n_steps, self.dt,
                           h.ljust(32, b"\0"))

    @classmethod
    def unpack(cls, raw: bytes) -> "TrajectoryHeader":
        if len(raw) < HEADER.size:
            raise TrajectoryFormatError("file is shorter than the trajectory header")
        magic, version, nx, ny, n_vars, n_steps, dt, h = HEADER.unpack(raw[: HEADER.size])
        if magic != MAGIC:
            raise TrajectoryFormatError(f"bad magic {magic!r}")
        if version != VERSION:
            raise TrajectoryFormatError(f"unsupported version {version}")
        if n_vars != 2:
            raise TrajectoryFormatError(f"expected 2 variables, found {n_vars}")
        return cls(nx, ny, n_steps, dt, h.rstrip(b"\0").decode("ascii"), n_vars, version)


def write_trajectory(path, frames: Iterable[np.ndarray], *, nx: int, ny: int, n_steps: int, dt: float,
                     config_hash: str) -> TrajectoryHeader:
    """Stream ``n_steps`` frames of shape ``(2, nx, ny)`` to ``path``.

    ``frames`` may be an array ``(n_steps, 2, nx, ny)`` or any iterable of
    frames.  A partially written file is removed on error.
    """
    header = TrajectoryHeader(nx, ny, n_steps, float(dt), config_hash)
    path = Path(path)
    count = 0
    try:
        with open(path, "wb") as fh:
            fh.write(header.pack())
            for frame in frames:
                frame = np.asarray(frame, dtype="<f8")
                if frame.shape != (2, nx, ny):
                    raise ValueError(f"frame {count} has shape {frame.shape}, expected {(2, nx, ny)}")
                if count >= n_steps:
                    raise ValueError(f"more than the declared {n_steps} frames supplied")
                fh.write(np.ascontiguousarray(frame).tobytes())
                count += 1
        if count != n_steps:
            raise ValueError(f"declared {n_steps} frames but received {count}")
    except BaseException:
        path.unlink(missing_ok=True)
        raise
    return header


def read_trajectory(path, mmap: bool = True) -> tuple[TrajectoryHeader, np.ndarray]:
    """Read a trajectory file; the payload is memory-mapped read-only by default."""
    path = Path(path)
    with open(path, "rb") as fh:
        header = TrajectoryHeader.unpack(fh.read(HEADER.size))
    size = path.stat().st_size - HEADER.size
    if size != header.payload_bytes:
        raise TrajectoryFormatError(f"payload has {size} bytes, header implies {header.payload_bytes}")
    shape = (header.n_steps, 2, header.nx, header.ny)
    if mmap and header.n_steps > 0:
        data = np.memmap(path, dtype="<f8", mode="r", offset=HEADER.size, shape=shape)
    else:
        with open(path, "rb") as fh:
            fh.seek(HEADER.size)
            data = np.frombuffer(fh.read(), dtype="<f8").reshape(shape).astype(float)
    return header, data


def simulate_to_file(path, params: BarkleyParams, init: FieldPair, n_frames: int,
                     config_hash: str) -> TrajectoryHeader:
    """Integrate ``n_frames - 1`` steps from ``init`` and stream every frame to ``path``."""
    if n_frames < 2:
        raise ValueError("n_frames must be >= 2")
    return write_trajectory(path, iter_simulate(params, init, n_frames - 1), nx=params.nx, ny=params.ny,
                            n_steps=n_frames, dt=params.dt, config_hash=config_hash)


def format_value(x) -> str:
    """Stable text for a CSV cell; floats round-trip exactly."""
    if isinstance(x, (bool, np.bool_)):
        return "true" if x else "false"
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    if isinstance(x, (float, np.floating)):
        x = float(x)
        if math.isnan(x):
            return "nan"
        return repr(x)
    if x is None:
        return ""
    return str(x)


def write_csv(path, columns: Sequence[str], rows: Iterable[Sequence], config_hash: str) -> None:
    path = Path(path)
    with open(path, "w", encoding="utf-8", newline="") as fh:
        fh.write(f"# config_hash={config_hash}\n")
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(columns)
        for row in rows:
            if len(row) != len(columns):
                raise ValueError(f"row has {len(row)} cells, schema has {len(columns)}")
            writer.writerow([format_value(x) for x in row])


def read_csv(path) -> tuple[str, list[str], list[list[str]]]:
    """Return ``(config_hash, header, rows)`` with cells as strings."""
    with open(path, encoding="utf-8", newline="") as fh:
        first = fh.readline()
        if not first.startswith("# config_hash="):
            raise ValueError(f"{path} lacks the config hash line")
        rows = list(csv.reader(fh))
    return first.strip().split("=", 1)[1], rows[0], rows[1:]


def render_heatmap(field: np.ndarray, lo: float, hi: float, path, comment: Optional[str] = None) -> np.ndarray:
    """Write a plain (P2) 8-bit graymap; returns the pixel array.

    ``lo`` maps to 0 and ``hi`` to 255, rounding half up, values outside the
    range are clamped.  Row 0 of the field is the top image row.
    """
    f = np.asarray(field, dtype=float)
    if f.ndim != 2:
        raise ValueError("heatmap field must be 2D")
    if not np.isfinite(f).all():
        raise ValueError("heatmap field contains non-finite values")
    if not hi > lo:
        raise ValueError("range must satisfy lo < hi")
    pix = np.floor((f - lo) / (hi - lo) * 255.0 + 0.5)
    pix = np.clip(pix, 0, 255).astype(np.uint8)
    lines = ["P2"]
    if comment:
        lines.append(f"# {comment}")
    lines.append(f"{f.shape[1]} {f.shape[0]}")
    lines.append("255")
    lines.extend(" ".join(str(int(p)) for p in row) for row in pix)
    Path(path).write_text("\n".join(lines) + "\n", encoding="ascii")
    return pix


def read_pgm(path) -> np.ndarray:
    """Read a plain PGM written by :func:`render_heatmap`."""
    tokens = []
    for line in Path(path).read_text(encoding="ascii").splitlines():
        line = line.split("#", 1)[0]
        tokens.extend(line.split())
    if not tokens or tokens[0] != "P2":
        raise ValueError("not a plain PGM file")
    w, h, _ = int(tokens[1]), int(tokens[2]), int(tokens[3])
    vals = np.array([int(t) for t in tokens[4:]], dtype=np.uint8)
    if vals.size != w * h:
        raise ValueError("pixel count does not match the image size")
    return vals.reshape(h, w)
