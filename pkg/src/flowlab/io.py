"""File formats: v1 state/mask files, binary PGM previews and CSV tables.

v1 layout::

    FLOWLAB v1\n
    d=<int> rows=<int|0> cols=<int|0> time=<repr float>\n
    <d little-endian float64 values>
"""

from __future__ import annotations

import re
from pathlib import Path
from typing import Iterable, Optional, Sequence, Union

import numpy as np

from flowlab.core import GridShape, LatentState, Mask
from flowlab.errors import ConfigError

MAGIC = b"FLOWLAB v1\n"
_HEADER = re.compile(rb"d=(\d+) rows=(\d+) cols=(\d+) time=(\S+)\n")

PathLike = Union[str, Path]


def _header(d: int, shape: Optional[GridShape], time: float) -> bytes:
    rows, cols = (shape.rows, shape.cols) if shape is not None else (0, 0)
    return MAGIC + f"d={d} rows={rows} cols={cols} time={float(time)!r}\n".encode("ascii")


def state_to_bytes(state: LatentState) -> bytes:
    return _header(state.d, state.shape, state.time) + state.values.astype("<f8").tobytes()


def state_from_bytes(blob: bytes) -> LatentState:
    if not blob.startswith(MAGIC):
        raise ConfigError("not a FLOWLAB v1 file")
    rest = blob[len(MAGIC) :]
    m = _HEADER.match(rest)
    if m is None:
        raise ConfigError("malformed FLOWLAB v1 header")
    d, rows, cols = (int(g) for g in m.groups()[:3])
    time = float(m.group(4))
    payload = rest[m.end() :]
    if len(payload) != 8 * d:
        raise ConfigError(f"expected {8 * d} payload bytes, found {len(payload)}")
    values = np.frombuffer(payload, dtype="<f8").astype(np.float64)
    shape = GridShape(rows, cols) if rows and cols else None
    return LatentState(values, time, shape)


def write_state(path: PathLike, state: LatentState) -> None:
    Path(path).write_bytes(state_to_bytes(state))


def read_state(path: PathLike) -> LatentState:
    return state_from_bytes(Path(path).read_bytes())


def write_mask(path: PathLike, mask: Mask) -> None:
    # masks reuse the state layout with time 0
    Path(path).write_bytes(_header(mask.d, mask.shape, 0.0) + mask.values.astype("<f8").tobytes())


def pgm_bytes(grid: np.ndarray) -> bytes:
    """8-bit P5 image, linearly mapping [min, max] to [0, 255]; a flat grid maps to 0."""
    grid = np.asarray(grid, dtype=np.float64)
    lo, hi = float(grid.min()), float(grid.max())
    if hi > lo:
        scaled = np.rint((grid - lo) / (hi - lo) * 255.0)
    else:
        scaled = np.zeros_like(grid)
    rows, cols = grid.shape
    return f"P5\n{cols} {rows}\n255\n".encode("ascii") + scaled.astype(np.uint8).tobytes()


def write_pgm(path: PathLike, state: LatentState) -> None:
    Path(path).write_bytes(pgm_bytes(state.as_grid()))


def _pgm_tokens(blob: bytes):
    pos = 0
    tokens = []
    while len(tokens) < 4:
        while pos < len(blob) and blob[pos : pos + 1].isspace():
            pos += 1
        if blob[pos : pos + 1] == b"#":
            while pos < len(blob) and blob[pos : pos + 1] != b"\n":
                pos += 1
            continue
        start = pos
        while pos < len(blob) and not blob[pos : pos + 1].isspace():
            pos += 1
        tokens.append(blob[start:pos])
    return tokens, pos + 1


def read_pgm(path: PathLike) -> np.ndarray:
    blob = Path(path).read_bytes()
    tokens, offset = _pgm_tokens(blob)
    if tokens[0] != b"P5":
        raise ConfigError("only binary P5 PGM files are supported")
    cols, rows, maxval = (int(t) for t in tokens[1:])
    if maxval > 255:
        raise ConfigError("16-bit PGM files are not supported")
    data = np.frombuffer(blob[offset : offset + rows * cols], dtype=np.uint8)
    if data.size != rows * cols:
        raise ConfigError("truncated PGM payload")
    return data.reshape(rows, cols)


def read_mask(path: PathLike) -> Mask:
    """Load a mask from a v1 file or a P5 PGM (pixels > 127 become 1)."""
    blob = Path(path).read_bytes()
    if blob.startswith(MAGIC):
        st = state_from_bytes(blob)
        return Mask(st.values, st.shape)
    if blob.startswith(b"P5"):
        px = read_pgm(path)
        return Mask((px > 127).astype(np.float64).reshape(-1), GridShape(*px.shape))
    raise ConfigError(f"{path}: unrecognised mask format")


def _fmt(x: float) -> str:
    return repr(float(x))


def csv_text(header: Sequence[str], rows: Iterable[Sequence]) -> str:
    lines = [",".join(header)]
    for row in rows:
        lines.append(",".join(v if isinstance(v, str) else _fmt(v) if isinstance(v, float) else str(v) for v in row))
    return "\n".join(lines) + "\n"


def trajectory_csv(trajectory) -> str:
    d = trajectory.initial.d
    header = ["index", "t"] + [f"x{j}" for j in range(d)]
    rows = (
        [trajectory.start_index + k, s.time, *map(float, s.values)]
        for k, s in enumerate(trajectory.states)
    )
    return csv_text(header, rows)


def velocities_csv(trajectory) -> str:
    d = trajectory.initial.d
    header = ["index", "t"] + [f"v{j}" for j in range(d)]
    rows = (
        [trajectory.start_index + k, trajectory.grid[trajectory.start_index + k], *map(float, v)]
        for k, v in enumerate(trajectory.velocities)
    )
    return csv_text(header, rows)


def inversion_csv(report) -> str:
    d = report.estimated_noise.d
    header = ["index", "t"] + [f"x{j}" for j in range(d)]
    rows = ([i, s.time, *map(float, s.values)] for i, s in enumerate(report.intermediate_states))
    return csv_text(header, rows)


def curve_csv(curve, value_name: str = "value") -> str:
    return csv_text(["t", value_name], ([float(t), float(v)] for t, v in curve))
