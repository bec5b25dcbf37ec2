"""Readers and writers for PLY clouds, PGM/PPM images and raw float maps."""
from __future__ import annotations

import struct
from pathlib import Path

import numpy as np

from .geometry import PointCloud

__all__ = [
    "read_ply",
    "write_ply",
    "read_pgm",
    "write_pgm",
    "write_ppm",
    "write_depth_raw",
    "read_depth_raw",
]

_PLY_TYPES = {
    "char": "i1", "int8": "i1", "uchar": "u1", "uint8": "u1",
    "short": "i2", "int16": "i2", "ushort": "u2", "uint16": "u2",
    "int": "i4", "int32": "i4", "uint": "u4", "uint32": "u4",
    "float": "f4", "float32": "f4", "double": "f8", "float64": "f8",
}
_NUMPY_TO_PLY = {"i1": "char", "u1": "uchar", "i2": "short", "u2": "ushort",
                 "i4": "int", "u4": "uint", "f4": "float", "f8": "double"}
_RESERVED = {"x", "y", "z", "intensity", "label"}


def read_ply(path) -> PointCloud:
    """Read an ASCII or binary little-endian PLY vertex element."""
    with open(path, "rb") as fh:
        if fh.readline().strip() != b"ply":
            raise ValueError(f"{path}: not a PLY file")
        fmt, count, props, in_vertex = None, 0, [], False
        while True:
            line = fh.readline()
            if not line:
                raise ValueError(f"{path}: unterminated PLY header")
            tok = line.decode("ascii").split()
            if not tok:
                continue
            if tok[0] == "format":
                fmt = tok[1]
            elif tok[0] == "element":
                in_vertex = tok[1] == "vertex"
                if in_vertex:
                    count = int(tok[2])
            elif tok[0] == "property" and in_vertex:
                if tok[1] == "list":
                    raise ValueError(f"{path}: list properties are not supported on vertices")
                props.append((tok[2], _PLY_TYPES[tok[1]]))
            elif tok[0] == "end_header":
                break
        if fmt == "ascii":
            rows = [fh.readline().split() for _ in range(count)]
            arr = np.array(rows, dtype=np.float64).reshape(count, len(props))
            cols = {name: arr[:, i].astype(t) for i, (name, t) in enumerate(props)}
        elif fmt == "binary_little_endian":
            dtype = np.dtype([(name, "<" + t) for name, t in props])
            rec = np.frombuffer(fh.read(dtype.itemsize * count), dtype=dtype, count=count)
            cols = {name: rec[name] for name, _ in props}
        else:
            raise ValueError(f"{path}: unsupported PLY format {fmt!r}")
    for axis in "xyz":
        if axis not in cols:
            raise ValueError(f"{path}: missing vertex property {axis!r}")
    xyz = np.stack([cols["x"], cols["y"], cols["z"]], axis=1).astype(np.float64)
    attrs = {k: v for k, v in cols.items() if k not in _RESERVED}
    return PointCloud(xyz, cols.get("intensity"), cols.get("label"), attrs)


def write_ply(path, cloud: PointCloud, binary: bool = True) -> None:
    cols = [("x", cloud.xyz[:, 0].astype("<f4")), ("y", cloud.xyz[:, 1].astype("<f4")),
            ("z", cloud.xyz[:, 2].astype("<f4"))]
    if cloud.intensity is not None:
        cols.append(("intensity", cloud.intensity.astype("<f4")))
    if cloud.labels is not None:
        cols.append(("label", cloud.labels.astype("<u1")))
    for key, val in cloud.attrs.items():
        val = np.asarray(val)
        if val.dtype == bool:
            val = val.astype("<u1")
        elif val.dtype.kind == "f":
            val = val.astype("<f4")
        elif val.dtype.kind in "iu":
            val = val.astype("<i4")
        cols.append((key, val))
    n = len(cloud)
    lines = ["ply", f"format {'binary_little_endian' if binary else 'ascii'} 1.0",
             f"element vertex {n}"]
    for name, val in cols:
        lines.append(f"property {_NUMPY_TO_PLY[val.dtype.str.lstrip('<|')]} {name}")
    lines.append("end_header")
    header = ("\n".join(lines) + "\n").encode("ascii")
    with open(path, "wb") as fh:
        fh.write(header)
        if binary:
            rec = np.empty(n, dtype=[(name, val.dtype.str) for name, val in cols])
            for name, val in cols:
                rec[name] = val
            fh.write(rec.tobytes())
        else:
            for i in range(n):
                fh.write((" ".join(repr(val[i].item()) for _, val in cols) + "\n").encode("ascii"))


def write_pgm(path, image: np.ndarray) -> None:
    """Binary PGM; uint16 images are written big-endian as the format requires."""
    img = np.asarray(image)
    if img.ndim != 2:
        raise ValueError("PGM images are 2D")
    if img.dtype == np.uint8:
        maxval, payload = 255, img.tobytes()
    elif img.dtype == np.uint16:
        maxval, payload = 65535, img.astype(">u2").tobytes()
    else:
        raise ValueError(f"unsupported PGM dtype {img.dtype}")
    h, w = img.shape
    with open(path, "wb") as fh:
        fh.write(f"P5\n{w} {h}\n{maxval}\n".encode("ascii"))
        fh.write(payload)


def _pnm_header(data: bytes) -> tuple[list[bytes], int]:
    tokens, pos = [], 0
    while len(tokens) < 4:
        while data[pos:pos + 1].isspace():
            pos += 1
        if data[pos:pos + 1] == b"#":
            pos = data.index(b"\n", pos) + 1
            continue
        start = pos
        while not data[pos:pos + 1].isspace():
            pos += 1
        tokens.append(data[start:pos])
    return tokens, pos + 1


def read_pgm(path) -> np.ndarray:
    data = Path(path).read_bytes()
    (magic, w, h, maxval), off = _pnm_header(data)
    if magic != b"P5":
        raise ValueError(f"{path}: only binary PGM (P5) is supported")
    w, h, maxval = int(w), int(h), int(maxval)
    dtype = np.uint8 if maxval < 256 else np.dtype(">u2")
    img = np.frombuffer(data, dtype=dtype, count=w * h, offset=off).reshape(h, w)
    return img.astype(np.uint16) if maxval >= 256 else img.copy()


def write_ppm(path, rgb: np.ndarray) -> None:
    rgb = np.asarray(rgb, dtype=np.uint8)
    h, w, _ = rgb.shape
    with open(path, "wb") as fh:
        fh.write(f"P6\n{w} {h}\n255\n".encode("ascii"))
        fh.write(rgb.tobytes())


def write_depth_raw(path, depth: np.ndarray) -> None:
    """``DPTH`` + H, W (u32 LE) + row-major f32 metres."""
    depth = np.asarray(depth, dtype="<f4")
    h, w = depth.shape
    with open(path, "wb") as fh:
        fh.write(b"DPTH" + struct.pack("<II", h, w))
        fh.write(depth.tobytes())


def read_depth_raw(path) -> np.ndarray:
    data = Path(path).read_bytes()
    if data[:4] != b"DPTH":
        raise ValueError(f"{path}: not a DPTH file")
    h, w = struct.unpack_from("<II", data, 4)
    return np.frombuffer(data, dtype="<f4", count=h * w, offset=12).reshape(h, w).copy()
