"""Minimal ASCII PLY reader/writer for point clouds with per-vertex attributes.

Floats are written with ``repr`` so a write/read cycle is bit exact.
"""
from __future__ import annotations

import numpy as np

_PLY_TYPES = {
    np.dtype(np.float64): "double",
    np.dtype(np.float32): "float",
    np.dtype(np.int32): "int",
    np.dtype(np.int64): "int64",
    np.dtype(np.uint8): "uchar",
}
_NP_TYPES = {"double": np.float64, "float": np.float32, "int": np.int32, "int64": np.int64,
             "uchar": np.uint8}


def write_ply(path, points: np.ndarray, attributes: dict[str, np.ndarray] | None = None) -> None:
    points = np.asarray(points, dtype=np.float64).reshape(-1, 3)
    attributes = dict(attributes or {})
    cols = [("x", points[:, 0]), ("y", points[:, 1]), ("z", points[:, 2])]
    for name, arr in attributes.items():
        arr = np.asarray(arr)
        if arr.dtype not in _PLY_TYPES:
            arr = arr.astype(np.float64 if arr.dtype.kind == "f" else np.int64)
        cols.append((name, arr.reshape(-1)))
    lines = ["ply", "format ascii 1.0", f"element vertex {points.shape[0]}"]
    lines += [f"property {_PLY_TYPES[a.dtype]} {n}" for n, a in cols]
    lines.append("end_header")
    body = []
    for i in range(points.shape[0]):
        body.append(" ".join(repr(a[i].item()) for _, a in cols))
    with open(path, "w", encoding="ascii") as fh:
        fh.write("\n".join(lines + body) + "\n")


def read_ply(path) -> tuple[np.ndarray, dict[str, np.ndarray]]:
    with open(path, encoding="ascii") as fh:
        if fh.readline().strip() != "ply":
            raise ValueError("not a PLY file")
        props: list[tuple[str, type]] = []
        count = 0
        for line in fh:
            tok = line.split()
            if not tok:
                continue
            if tok[0] == "format" and tok[1] != "ascii":
                raise ValueError("only ASCII PLY is supported")
            if tok[0] == "element" and tok[1] == "vertex":
                count = int(tok[2])
            elif tok[0] == "property":
                props.append((tok[2], _NP_TYPES[tok[1]]))
            elif tok[0] == "end_header":
                break
        rows = [fh.readline().split() for _ in range(count)]
    cols = {}
    for j, (name, typ) in enumerate(props):
        if typ in (np.float64, np.float32):
            cols[name] = np.array([float(r[j]) for r in rows], dtype=typ)
        else:
            cols[name] = np.array([int(r[j]) for r in rows], dtype=typ)
    pts = np.stack([cols.pop("x"), cols.pop("y"), cols.pop("z")], axis=1) if count else np.zeros((0, 3))
    if not count:
        for k in ("x", "y", "z"):
            cols.pop(k, None)
    return pts.astype(np.float64), cols
