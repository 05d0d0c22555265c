"""File formats: PGM images, the vfield/vmask binary containers, CSV
tables, and JSON run reports.

Everything here round-trips: a file written by this module reads back to
identical arrays, and re-writing produces a byte-identical file.
"""

from __future__ import annotations

import csv
import json
from pathlib import Path

import numpy as np

from .errors import DataFormatError
from .pipelines import VesselField

MASK_MAXVAL = 65535


# -- PGM ---------------------------------------------------------------------


def _tokens(data: bytes):
    """Yield whitespace-separated header tokens, skipping '#' comments."""
    pos = 0
    while pos < len(data):
        c = data[pos:pos + 1]
        if c.isspace():
            pos += 1
        elif c == b"#":
            end = data.find(b"\n", pos)
            pos = len(data) if end < 0 else end + 1
        else:
            end = pos
            while end < len(data) and not data[end:end + 1].isspace():
                end += 1
            yield data[pos:end], end
            pos = end


def read_pgm(path, return_maxval=False):
    """Read a P2/P5 PGM; returns a uint8 or uint16 array of shape (H, W)
    (optionally with the header maxval)."""
    data = Path(path).read_bytes()
    tok = _tokens(data)
    try:
        magic, _ = next(tok)
        if magic not in (b"P2", b"P5"):
            raise DataFormatError(f"{path}: not a PGM (magic {magic!r})")
        (w, _), (h, _), (maxval, end) = next(tok), next(tok), next(tok)
        w, h, maxval = int(w), int(h), int(maxval)
    except (StopIteration, ValueError) as exc:
        raise DataFormatError(f"{path}: malformed PGM header") from exc
    if w <= 0 or h <= 0 or not 0 < maxval < 65536:
        raise DataFormatError(f"{path}: bad PGM dimensions or maxval")
    dtype = np.uint8 if maxval < 256 else np.uint16
    if magic == b"P5":
        raw = data[end + 1:]  # single whitespace byte after maxval
        itemsize = 1 if maxval < 256 else 2
        if len(raw) < w * h * itemsize:
            raise DataFormatError(f"{path}: truncated PGM payload")
        raw = raw[:w * h * itemsize]
        arr = np.frombuffer(raw, dtype=">u2" if itemsize == 2 else np.uint8)
    else:
        values = []
        for t, _ in tok:
            values.append(int(t))
        if len(values) != w * h:
            raise DataFormatError(f"{path}: expected {w * h} samples, "
                                  f"got {len(values)}")
        arr = np.array(values)
    if arr.max(initial=0) > maxval:
        raise DataFormatError(f"{path}: sample exceeds maxval")
    arr = arr.astype(dtype).reshape(h, w)
    return (arr, maxval) if return_maxval else arr


def write_pgm(path, array, maxval=None, binary=True):
    """Write a (H, W) array of non-negative integers as P5 (or P2) PGM."""
    arr = np.asarray(array)
    if arr.ndim != 2:
        raise DataFormatError("PGM output must be 2-D")
    if maxval is None:
        maxval = 255 if arr.max(initial=0) < 256 else MASK_MAXVAL
    if arr.min(initial=0) < 0 or arr.max(initial=0) > maxval:
        raise DataFormatError("PGM samples out of range")
    h, w = arr.shape
    magic = "P5" if binary else "P2"
    header = f"{magic}\n{w} {h}\n{maxval}\n".encode()
    if binary:
        dtype = np.uint8 if maxval < 256 else ">u2"
        payload = arr.astype(dtype).tobytes()
    else:
        payload = "\n".join(" ".join(str(int(v)) for v in row)
                            for row in arr).encode() + b"\n"
    Path(path).write_bytes(header + payload)


def write_mask_pgm(path, q):
    """Probabilities in [0,1] quantized to 16-bit: round(q * 65535)."""
    q = np.asarray(q, dtype=float)
    if q.min(initial=0.0) < 0 or q.max(initial=0.0) > 1:
        raise DataFormatError("mask probabilities must lie in [0, 1]")
    write_pgm(path, np.round(q * MASK_MAXVAL).astype(np.uint16),
              maxval=MASK_MAXVAL)


def read_mask_pgm(path):
    """Inverse of write_mask_pgm: probabilities in [0, 1]."""
    arr = read_pgm(path)
    return arr.astype(float) / MASK_MAXVAL


# -- vfield / vmask containers -------------------------------------------------

VFIELD_FIELDS = ["v", "gx", "gy", "gz", "sigma"]


def _write_container(path, dims, fields, planes, dtype):
    header = {"magic": "vfield", "dims": list(dims), "dtype": dtype,
              "fields": fields}
    blob = json.dumps(header, sort_keys=True).encode() + b"\n"
    np_dtype = "<f4" if dtype == "f32" else np.uint8
    for plane in planes:
        blob += np.ascontiguousarray(plane, dtype=np_dtype).tobytes()
    Path(path).write_bytes(blob)


def _read_container(path, expected_fields, dtype):
    data = Path(path).read_bytes()
    nl = data.find(b"\n")
    if nl < 0:
        raise DataFormatError(f"{path}: missing vfield header")
    try:
        header = json.loads(data[:nl].decode())
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise DataFormatError(f"{path}: bad vfield header") from exc
    if (header.get("magic") != "vfield" or header.get("dtype") != dtype
            or header.get("fields") != expected_fields):
        raise DataFormatError(f"{path}: unexpected vfield header {header}")
    dims = header.get("dims")
    if (not isinstance(dims, list) or len(dims) != 3
            or any(not isinstance(d, int) or d <= 0 for d in dims)):
        raise DataFormatError(f"{path}: bad dims {dims}")
    nx, ny, nz = dims
    np_dtype = np.dtype("<f4") if dtype == "f32" else np.dtype(np.uint8)
    count = nx * ny * nz
    payload = data[nl + 1:]
    if len(payload) != count * np_dtype.itemsize * len(expected_fields):
        raise DataFormatError(f"{path}: payload size does not match dims")
    planes = []
    for i in range(len(expected_fields)):
        start = i * count * np_dtype.itemsize
        raw = payload[start:start + count * np_dtype.itemsize]
        planes.append(np.frombuffer(raw, dtype=np_dtype).reshape(nx, ny, nz))
    return planes


def write_vfield(path, field: VesselField):
    """JSON header line + raw little-endian f32 planes v, gx, gy, gz, sigma.

    Volumes are indexed [x, y, z] and serialized in C order."""
    planes = [field.v, field.direction[..., 0], field.direction[..., 1],
              field.direction[..., 2], field.sigma]
    _write_container(path, field.shape, VFIELD_FIELDS, planes, "f32")


def read_vfield(path) -> VesselField:
    v, gx, gy, gz, sigma = (p.astype(float) for p in
                            _read_container(path, VFIELD_FIELDS, "f32"))
    return VesselField(v, np.stack([gx, gy, gz], axis=-1), sigma)


def write_container(path, dims, fields, planes, dtype="f32"):
    """Generic vfield-style container: JSON header + named raw planes."""
    _write_container(path, dims, list(fields), planes, dtype)


def read_container(path, fields, dtype="f32"):
    planes = _read_container(path, list(fields), dtype)
    return dict(zip(fields, planes))


def write_vmask(path, mask):
    _write_container(path, mask.shape, ["mask"],
                     [np.asarray(mask, dtype=np.uint8)], "u8")


def read_vmask(path):
    (plane,) = _read_container(path, ["mask"], "u8")
    return plane.astype(bool)


# -- CSV tables ---------------------------------------------------------------


def _write_csv(path, header, rows):
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(header)
        for row in rows:
            writer.writerow([repr(float(v)) if isinstance(v, float) else v
                             for v in row])


def write_tangents_csv_2d(path, ids, anchors, points, dirs, q):
    rows = ((int(i), float(a[0]), float(a[1]), float(p[0]), float(p[1]),
             float(d[0]), float(d[1]), float(qv))
            for i, a, p, d, qv in zip(ids, anchors, points, dirs, q))
    _write_csv(path, ["id", "x", "y", "px", "py", "dx", "dy", "q"], rows)


def write_tangents_csv_3d(path, ids, anchors, dirs, q):
    rows = ((int(i), float(a[0]), float(a[1]), float(a[2]),
             float(d[0]), float(d[1]), float(d[2]), float(qv))
            for i, a, d, qv in zip(ids, anchors, dirs, q))
    _write_csv(path, ["id", "x", "y", "z", "dx", "dy", "dz", "q"], rows)


def read_csv_columns(path):
    """Read a numeric CSV (with header row) into a dict of float arrays."""
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise DataFormatError(f"{path}: empty CSV")
        rows = list(reader)
    try:
        data = np.array([[float(v) for v in row] for row in rows])
    except ValueError as exc:
        raise DataFormatError(f"{path}: non-numeric CSV value") from exc
    if rows and data.shape[1] != len(header):
        raise DataFormatError(f"{path}: ragged CSV")
    if not rows:
        data = np.zeros((0, len(header)))
    return {name: data[:, k] for k, name in enumerate(header)}


def write_points_csv(path, points):
    pts = np.asarray(points, dtype=float)
    header = ["x", "y"] if pts.shape[1] == 2 else ["x", "y", "z"]
    _write_csv(path, header, ([float(v) for v in row] for row in pts))


def read_points_csv(path):
    """Points CSV with columns x,y[,z]; a header row is optional."""
    with open(path, newline="") as fh:
        first = fh.readline()
    skip = any(c.isalpha() for c in first)
    try:
        pts = np.loadtxt(path, delimiter=",", skiprows=1 if skip else 0,
                         ndmin=2)
    except ValueError as exc:
        raise DataFormatError(f"{path}: malformed points CSV") from exc
    if pts.shape[0] == 0 or pts.shape[1] not in (2, 3):
        raise DataFormatError(f"{path}: points CSV needs columns x,y[,z]")
    return pts


# -- reports -------------------------------------------------------------------


def write_report(path, report: dict):
    Path(path).write_text(json.dumps(report, indent=2, sort_keys=True) + "\n")


def read_report(path) -> dict:
    return json.loads(Path(path).read_text())
