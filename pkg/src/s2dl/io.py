"""Readers and writers for cubes, label maps and renderings.

Formats
-------
raw-bsq
    ASCII header ``"height width bands\\n"`` followed by little-endian
    float32 values in band-sequential order.
csv cube
    Header ``height,width,bands`` then one pixel per line (row-major).
label csv
    One line per image row, comma separated integers. Lines starting with
    ``#`` are comments; writers use them to embed run metadata.
PGM / PPM
    Netpbm P2/P5 grey maps and P6 colour images.
"""
from __future__ import annotations

import colorsys
import os
from pathlib import Path
from typing import Mapping

import numpy as np
from scipy import io as sio

from .cube import GroundTruth, HsiCube


class LoadError(ValueError):
    pass


def _format_for(path, fmt):
    if fmt is not None:
        return fmt
    suffix = Path(path).suffix.lower()
    return {".bsq": "raw-bsq", ".raw": "raw-bsq", ".csv": "csv", ".mat": "mat"}.get(suffix, "raw-bsq")


def load_cube(path, format: str | None = None, key: str | None = None) -> HsiCube:
    fmt = _format_for(path, format)
    if fmt == "raw-bsq":
        return _load_bsq(path)
    if fmt == "csv":
        return _load_csv_cube(path)
    if fmt == "mat":
        return HsiCube(np.asarray(_load_mat_array(path, key), dtype=np.float64))
    raise LoadError(f"unknown cube format {fmt!r}")


def _load_bsq(path) -> HsiCube:
    data = Path(path).read_bytes()
    nl = data.find(b"\n")
    if nl < 0:
        raise LoadError(f"{path}: missing header line")
    try:
        dims = [int(tok) for tok in data[:nl].decode("ascii").split()]
    except (UnicodeDecodeError, ValueError):
        raise LoadError(f"{path}: malformed header {data[:nl][:40]!r}") from None
    if len(dims) != 3 or min(dims) < 1:
        raise LoadError(f"{path}: header must hold three positive integers, got {dims}")
    h, w, b = dims
    payload = data[nl + 1:]
    expected = h * w * b * 4
    if len(payload) != expected:
        raise LoadError(
            f"{path}: header declares {h}x{w}x{b} ({expected} bytes) "
            f"but payload has {len(payload)} bytes"
        )
    flat = np.frombuffer(payload, dtype="<f4")
    bad = np.flatnonzero(~np.isfinite(flat))
    if bad.size:
        raise LoadError(f"{path}: non-finite value at byte offset {nl + 1 + 4 * int(bad[0])}")
    values = flat.reshape(b, h, w).transpose(1, 2, 0).astype(np.float64)
    return HsiCube(values)


def _load_csv_cube(path) -> HsiCube:
    lines = [ln for ln in Path(path).read_text().splitlines() if ln.strip() and not ln.startswith("#")]
    if not lines:
        raise LoadError(f"{path}: empty file")
    try:
        h, w, b = (int(tok) for tok in lines[0].split(","))
    except ValueError:
        raise LoadError(f"{path}: malformed header {lines[0]!r}") from None
    rows = lines[1:]
    if len(rows) != h * w:
        raise LoadError(f"{path}: header declares {h * w} pixels but file has {len(rows)} rows")
    values = np.empty((h * w, b))
    for r, line in enumerate(rows):
        try:
            vals = [float(tok) for tok in line.split(",")]
        except ValueError:
            raise LoadError(f"{path}: unparsable value on data row {r + 1}") from None
        if len(vals) != b:
            raise LoadError(f"{path}: data row {r + 1} has {len(vals)} values, expected {b}")
        if not all(np.isfinite(vals)):
            raise LoadError(f"{path}: non-finite value on data row {r + 1}")
        values[r] = vals
    return HsiCube(values.reshape(h, w, b))


def _load_mat_array(path, key):
    mat = sio.loadmat(path)
    names = [k for k in mat if not k.startswith("__")]
    if key is None:
        if len(names) != 1:
            raise LoadError(f"{path}: holds variables {names}; pass key=")
        key = names[0]
    if key not in mat:
        raise LoadError(f"{path}: no variable {key!r} (has {names})")
    return mat[key]


def cube_bsq_bytes(cube: HsiCube) -> bytes:
    h, w, b = cube.values.shape
    header = f"{h} {w} {b}\n".encode("ascii")
    body = np.ascontiguousarray(cube.values.transpose(2, 0, 1), dtype="<f4").tobytes()
    return header + body


def save_cube(cube: HsiCube, path, format: str | None = None) -> None:
    fmt = _format_for(path, format)
    if fmt == "raw-bsq":
        Path(path).write_bytes(cube_bsq_bytes(cube))
    elif fmt == "csv":
        h, w, b = cube.values.shape
        lines = [f"{h},{w},{b}"]
        lines += [",".join(repr(float(v)) for v in px) for px in cube.pixels()]
        Path(path).write_text("\n".join(lines) + "\n")
    else:
        raise ValueError(f"cannot write cube format {fmt!r}")


# --- label maps -------------------------------------------------------------

def read_label_map(path, key: str | None = None) -> np.ndarray:
    """Read a 2-D integer map from CSV, PGM (P2/P5) or a .mat variable."""
    path = Path(path)
    suffix = path.suffix.lower()
    if suffix == ".mat":
        arr = np.asarray(_load_mat_array(path, key))
        if arr.ndim != 2:
            raise LoadError(f"{path}: expected a 2-D label array, got shape {arr.shape}")
        return arr.astype(np.int64)
    data = path.read_bytes()
    if data[:2] in (b"P2", b"P5"):
        return _read_pgm(data, path)
    return _read_label_csv(data.decode("ascii", errors="replace"), path)


def _read_label_csv(text, path) -> np.ndarray:
    rows = []
    # ';' is accepted as a row separator for one-line maps
    lines = [part for line in text.splitlines() for part in (line.split(";") if not line.startswith("#") else [line])]
    for lineno, line in enumerate(lines, start=1):
        if not line.strip() or line.startswith("#"):
            continue
        try:
            rows.append([int(tok) for tok in line.split(",")])
        except ValueError:
            raise LoadError(f"{path}: non-integer label on line {lineno}") from None
        if rows[-1] and min(rows[-1]) < 0:
            raise LoadError(f"{path}: negative label on line {lineno}")
        if len(rows[-1]) != len(rows[0]):
            raise LoadError(f"{path}: line {lineno} has {len(rows[-1])} columns, expected {len(rows[0])}")
    if not rows:
        raise LoadError(f"{path}: no label rows")
    return np.asarray(rows, dtype=np.int64)


def _pgm_tokens(data: bytes, count: int):
    """Return the first ``count`` header tokens and the offset after them."""
    tokens, pos = [], 0
    while len(tokens) < count:
        while pos < len(data) and data[pos:pos + 1].isspace():
            pos += 1
        if data[pos:pos + 1] == b"#":
            pos = data.find(b"\n", pos)
            if pos < 0:
                break
            continue
        start = pos
        while pos < len(data) and not data[pos:pos + 1].isspace():
            pos += 1
        tokens.append(data[start:pos])
    return tokens, pos


def _read_pgm(data: bytes, path) -> np.ndarray:
    tokens, pos = _pgm_tokens(data, 4)
    if len(tokens) < 4:
        raise LoadError(f"{path}: truncated PGM header")
    magic = tokens[0]
    w, h, maxval = (int(t) for t in tokens[1:])
    if magic == b"P2":
        body = [int(t) for t in _strip_comments(data[pos:]).split()]
        if len(body) != w * h:
            raise LoadError(f"{path}: expected {w * h} samples, found {len(body)}")
        return np.asarray(body, dtype=np.int64).reshape(h, w)
    dtype = ">u2" if maxval > 255 else "u1"
    raw = data[pos + 1:]
    arr = np.frombuffer(raw, dtype=dtype)
    if arr.size != w * h:
        raise LoadError(f"{path}: expected {w * h} samples, found {arr.size}")
    return arr.astype(np.int64).reshape(h, w)


def _strip_comments(body: bytes) -> bytes:
    return b"\n".join(line.split(b"#", 1)[0] for line in body.splitlines())


def load_labels(path, shape: tuple[int, int] | None = None, key: str | None = None) -> GroundTruth:
    arr = read_label_map(path, key=key)
    if arr.min() < 0:
        raise LoadError(f"{path}: negative labels")
    if shape is not None and tuple(arr.shape) != tuple(shape):
        raise LoadError(f"{path}: label map is {arr.shape[0]}x{arr.shape[1]}, cube is {shape[0]}x{shape[1]}")
    try:
        return GroundTruth(arr.reshape(-1), arr.shape)
    except ValueError as exc:
        raise LoadError(f"{path}: {exc}") from None


def _comment_lines(meta: Mapping | None) -> list[str]:
    if not meta:
        return []
    return [f"# {k} = {meta[k]}" for k in meta]


def save_label_csv(labels: np.ndarray, shape, path, meta: Mapping | None = None) -> None:
    grid = np.asarray(labels, dtype=np.int64).reshape(shape)
    lines = _comment_lines(meta) + [",".join(str(int(v)) for v in row) for row in grid]
    Path(path).write_text("\n".join(lines) + "\n")


def save_pgm(labels: np.ndarray, shape, path, meta: Mapping | None = None) -> None:
    """Write an ASCII (P2) grey map of integer ids."""
    grid = np.asarray(labels, dtype=np.int64).reshape(shape)
    h, w = grid.shape
    maxval = max(int(grid.max()), 1)
    if maxval > 65535:
        raise ValueError("PGM ids are limited to 65535")
    lines = ["P2"] + _comment_lines(meta) + [f"{w} {h}", str(maxval)]
    lines += [" ".join(str(int(v)) for v in row) for row in grid]
    Path(path).write_text("\n".join(lines) + "\n")


def palette(n: int) -> np.ndarray:
    """Deterministic ``(n + 1) x 3`` uint8 palette; entry 0 (background) is black."""
    colours = [(0, 0, 0)]
    for k in range(n):
        hue = (k * 0.618033988749895) % 1.0
        sat = 0.65 + 0.35 * ((k // 7) % 2)
        r, g, b = colorsys.hsv_to_rgb(hue, sat, 0.95)
        colours.append((round(r * 255), round(g * 255), round(b * 255)))
    return np.asarray(colours, dtype=np.uint8)


def render_ppm(labels: np.ndarray, shape, path, meta: Mapping | None = None) -> None:
    grid = np.asarray(labels, dtype=np.int64).reshape(shape)
    h, w = grid.shape
    rgb = palette(int(grid.max()))[grid]
    header = "\n".join(["P6"] + _comment_lines(meta) + [f"{w} {h}", "255"]) + "\n"
    Path(path).write_bytes(header.encode("ascii") + rgb.tobytes())


def write_text_atomic(path, text: str) -> None:
    tmp = Path(str(path) + ".tmp")
    tmp.write_text(text)
    os.replace(tmp, path)
