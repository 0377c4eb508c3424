"""Read and write 0/1 raster masks (plain text grids or 8-bit binary PGM)."""
from pathlib import Path
from typing import List, Union

import numpy as np

__all__ = ["read_mask", "write_mask"]

PGM_MAGIC = b"P5"


def _pgm_tokens(data: bytes, count: int) -> List[bytes]:
    """Split the first `count` whitespace separated header tokens, skipping comments."""
    tokens: List[bytes] = []
    pos = 0
    while len(tokens) < count:
        while pos < len(data) and data[pos : pos + 1].isspace():
            pos += 1
        if data[pos : pos + 1] == b"#":
            while pos < len(data) and data[pos : pos + 1] not in (b"\n", b"\r"):
                pos += 1
            continue
        start = pos
        while pos < len(data) and not data[pos : pos + 1].isspace():
            pos += 1
        if start == pos:
            raise ValueError("Truncated PGM header")
        tokens.append(data[start:pos])
    # a single whitespace byte separates the header from the pixel data
    tokens.append(data[pos + 1 :])
    return tokens


def _read_pgm(data: bytes) -> np.ndarray:
    magic, width, height, maxval, pixels = _pgm_tokens(data, 4)
    if magic != PGM_MAGIC:
        raise ValueError(f"Unsupported PGM magic number {magic!r}")
    cols, rows, top = int(width), int(height), int(maxval)
    if top > 255:
        raise ValueError("Only 8-bit PGM rasters are supported")
    if len(pixels) < rows * cols:
        raise ValueError("PGM pixel data is shorter than its header declares")
    grid = np.frombuffer(pixels[: rows * cols], dtype=np.uint8).reshape(rows, cols)
    return grid > 0


def _read_text(text: str) -> np.ndarray:
    rows = []
    for line in text.splitlines():
        line = line.strip()
        if not line:
            continue
        cells = line.split() if (" " in line or "\t" in line) else list(line)
        if any(cell not in ("0", "1") for cell in cells):
            raise ValueError(f"Raster rows may only contain 0 and 1, got {line!r}")
        rows.append([cell == "1" for cell in cells])
    if not rows or any(len(row) != len(rows[0]) for row in rows):
        raise ValueError("Raster rows must be non-empty and of equal length")
    return np.array(rows, dtype=bool)


def read_mask(path: Union[str, Path]) -> np.ndarray:
    """Load a boolean mask; row 0 is the top of the domain."""
    path = Path(path)
    try:
        data = path.read_bytes()
    except FileNotFoundError:
        raise FileNotFoundError(f"Raster file not found at: {path}")
    if data[:2] == PGM_MAGIC:
        return _read_pgm(data)
    try:
        return _read_text(data.decode("ascii"))
    except UnicodeDecodeError as err:
        raise ValueError(f"Unreadable raster file: {path}") from err


def write_mask(mask: np.ndarray, path: Union[str, Path]) -> Path:
    """Write a boolean mask; `.pgm` suffix selects binary PGM, anything else plain text."""
    path = Path(path)
    mask = np.asarray(mask, dtype=bool)
    if mask.ndim != 2:
        raise ValueError("Raster masks must be two dimensional")
    if path.suffix.lower() == ".pgm":
        rows, cols = mask.shape
        header = b"P5\n%d %d\n255\n" % (cols, rows)
        path.write_bytes(header + (mask.astype(np.uint8) * 255).tobytes())
    else:
        lines = ["".join("1" if cell else "0" for cell in row) for row in mask]
        path.write_text("\n".join(lines) + "\n")
    return path
