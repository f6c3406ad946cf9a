"""File ingestion and export: PPM images, JSON manifests, CSV writers.

All CSV output is locale-independent: '.' decimal point, LF line endings,
shortest round-trip float formatting.
"""

from __future__ import annotations

import json
from typing import Dict, Iterable, List, Optional, Sequence, Tuple

import numpy as np

from .errors import InputError
from .frequency import BoundingBox, PlanarImage

_WHITESPACE = b" \t\n\r\x0b\x0c"


def read_ppm(path) -> PlanarImage:
    """Read a binary (P6) 8-bit PPM into planar RGB floats.

    Header tolerance is deliberately small: whitespace-separated tokens, no
    comments, maxval 255, exactly one whitespace byte after the maxval.
    """
    with open(path, "rb") as fh:
        blob = fh.read()
    if blob[:2] != b"P6":
        raise InputError(f"{path}: not a binary PPM (missing P6 magic)")
    pos = 2
    tokens = []
    while len(tokens) < 3:
        while pos < len(blob) and blob[pos:pos + 1] in _WHITESPACE:
            pos += 1
        start = pos
        while pos < len(blob) and blob[pos:pos + 1] not in _WHITESPACE:
            pos += 1
        if start == pos:
            raise InputError(f"{path}: truncated PPM header")
        tokens.append(blob[start:pos])
    try:
        width, height, maxval = (int(t) for t in tokens)
    except ValueError:
        raise InputError(f"{path}: non-numeric PPM header fields {tokens}") from None
    if maxval != 255:
        raise InputError(f"{path}: only 8-bit PPM supported, maxval was {maxval}")
    if pos >= len(blob) or blob[pos:pos + 1] not in _WHITESPACE:
        raise InputError(f"{path}: expected one whitespace byte after maxval")
    pos += 1
    need = width * height * 3
    data = blob[pos:pos + need]
    if len(data) != need:
        raise InputError(f"{path}: expected {need} pixel bytes, found {len(data)}")
    arr = np.frombuffer(data, dtype=np.uint8).reshape(height, width, 3)
    return PlanarImage(arr.transpose(2, 0, 1).astype(np.float64), "rgb")


def write_ppm(path, img: PlanarImage) -> None:
    if img.color_space != "rgb":
        raise InputError(f"can only write RGB images as PPM, got {img.color_space!r}")
    px = np.clip(np.rint(img.pixels), 0, 255).astype(np.uint8)
    interleaved = px.transpose(1, 2, 0)
    with open(path, "wb") as fh:
        fh.write(b"P6\n%d %d\n255\n" % (img.width, img.height))
        fh.write(interleaved.tobytes())


# -- manifests ------------------------------------------------------------


def _require_keys(record: dict, required: set, optional: set, where: str) -> None:
    keys = set(record)
    missing = required - keys
    unknown = keys - required - optional
    if missing:
        raise InputError(f"{where}: missing keys {sorted(missing)}")
    if unknown:
        raise InputError(f"{where}: unknown keys {sorted(unknown)}")


def load_bbox_manifest(path) -> Dict[str, BoundingBox]:
    """JSON array of {file, x, y, w, h} records, pixels with top-left origin."""
    with open(path) as fh:
        records = json.load(fh)
    if not isinstance(records, list):
        raise InputError(f"{path}: bounding-box manifest must be a JSON array")
    out: Dict[str, BoundingBox] = {}
    for i, rec in enumerate(records):
        _require_keys(rec, {"file", "x", "y", "w", "h"}, set(), f"{path}[{i}]")
        out[rec["file"]] = BoundingBox(int(rec["x"]), int(rec["y"]), int(rec["w"]), int(rec["h"]))
    return out


def load_dataset_manifest(path) -> List[Tuple[str, int, Optional[BoundingBox]]]:
    """JSON array of {file, label, bbox?} records; bbox is a nested {x,y,w,h}."""
    with open(path) as fh:
        records = json.load(fh)
    if not isinstance(records, list):
        raise InputError(f"{path}: dataset manifest must be a JSON array")
    out = []
    for i, rec in enumerate(records):
        _require_keys(rec, {"file", "label"}, {"bbox"}, f"{path}[{i}]")
        label = rec["label"]
        if label not in (0, 1):
            raise InputError(f"{path}[{i}]: label must be 0 or 1, got {label!r}")
        bbox = None
        if rec.get("bbox") is not None:
            b = rec["bbox"]
            _require_keys(b, {"x", "y", "w", "h"}, set(), f"{path}[{i}].bbox")
            bbox = BoundingBox(int(b["x"]), int(b["y"]), int(b["w"]), int(b["h"]))
        out.append((rec["file"], int(label), bbox))
    return out


def write_dataset_manifest(path, records: Iterable[dict]) -> None:
    with open(path, "w") as fh:
        json.dump(list(records), fh, indent=1)
        fh.write("\n")


# -- CSV ------------------------------------------------------------------


def format_cell(value) -> str:
    if isinstance(value, (int, np.integer)):
        return str(int(value))
    return repr(float(value))


def write_csv(path, header: Sequence[str], rows: Iterable[Sequence]) -> None:
    with open(path, "w", newline="") as fh:
        fh.write(",".join(header) + "\n")
        for row in rows:
            fh.write(",".join(cell if isinstance(cell, str) else format_cell(cell)
                              for cell in row) + "\n")


def descriptor_csv_rows(entries: Iterable[Tuple[str, Optional[int], np.ndarray]],
                        with_labels: bool):
    """Header and rows for a descriptor table: file[,label],d0..d2303."""
    width = None
    rows = []
    for name, label, values in entries:
        if width is None:
            width = values.shape[0]
        row: list = [name]
        if with_labels:
            row.append(int(label))
        row.extend(values.tolist())
        rows.append(row)
    width = width or 0
    header = ["file"] + (["label"] if with_labels else []) + [f"d{i}" for i in range(width)]
    return header, rows
