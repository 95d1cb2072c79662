"""Binary splat checkpoints and PLY export of splat centers."""
from __future__ import annotations

import struct
from pathlib import Path

import numpy as np

from ..classes import NUM_CLASSES, SemanticClass
from ..plyio import write_ply
from .gaussians import GaussianMap

MAGIC = b"HSGS"
VERSION = 1
HEADER = "<4sIIQ"
RECORD = np.dtype([
    ("mu", "<f4", 3),
    ("radius", "<f4"),
    ("color", "<f4", 3),
    ("opacity", "<f4"),
    ("semantic", "<f4", NUM_CLASSES),
])

CLASS_COLORS = {
    SemanticClass.FRUIT: (230, 30, 30),
    SemanticClass.LEAF: (40, 170, 40),
    SemanticClass.BACKGROUND: (120, 100, 80),
}


def save_checkpoint(gmap: GaussianMap, path) -> int:
    """Write the map; returns the file size in bytes."""
    rec = np.zeros(len(gmap), dtype=RECORD)
    rec["mu"] = gmap.means
    rec["radius"] = gmap.radius
    rec["color"] = gmap.colors
    rec["opacity"] = gmap.opacity
    rec["semantic"] = gmap.semantic
    with open(path, "wb") as fh:
        fh.write(struct.pack(HEADER, MAGIC, VERSION, NUM_CLASSES, len(gmap)))
        fh.write(rec.tobytes())
    return Path(path).stat().st_size


def load_checkpoint(path) -> GaussianMap:
    raw = Path(path).read_bytes()
    magic, version, ncls, count = struct.unpack_from(HEADER, raw)
    if magic != MAGIC or version != VERSION or ncls != NUM_CLASSES:
        raise ValueError("not a compatible splat checkpoint")
    rec = np.frombuffer(raw, dtype=RECORD, count=count, offset=struct.calcsize(HEADER))
    gmap = GaussianMap()
    gmap.append(rec["mu"].astype(float), rec["radius"].astype(float), rec["color"].astype(float),
                rec["opacity"].astype(float), rec["semantic"].astype(float))
    return gmap


def export_ply(gmap: GaussianMap, path) -> None:
    labels = gmap.labels
    rgb = np.array([CLASS_COLORS[SemanticClass(c)] for c in range(NUM_CLASSES)], dtype=np.uint8)[labels]
    write_ply(path, gmap.means, {
        "red": rgb[:, 0], "green": rgb[:, 1], "blue": rgb[:, 2],
        "class_id": labels.astype(np.int32),
    })
