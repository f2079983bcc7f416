"""On-disk formats: binary PGM frames and the JSON-lines detection log.

Detection log, one JSON object per line::

    {"frame": 3, "x": 10.0, "y": 4.5, "w": 20.0, "h": 30.0, "class": 0, "conf": 0.93, "id": 7}

``id`` is optional. Boxes are clamped to the frame when an image size is supplied.
"""

from __future__ import annotations

import json
import os
import re
from pathlib import Path
from typing import Iterable, Optional, Sequence

import numpy as np

from .core import BoundingBox, Detection, GrayImage, clamp_box

FRAME_NAME = "frame_{:06d}.pgm"
_FRAME_RE = re.compile(r"frame_(\d{6})\.pgm$")


def write_pgm(path, img: GrayImage) -> None:
    header = f"P5\n{img.width} {img.height}\n255\n".encode("ascii")
    with open(path, "wb") as fh:
        fh.write(header)
        fh.write(img.pixels.tobytes())


def _next_token(data: bytes, pos: int) -> tuple[bytes, int]:
    n = len(data)
    while pos < n:
        c = data[pos:pos + 1]
        if c == b"#":
            while pos < n and data[pos:pos + 1] not in (b"\n", b"\r"):
                pos += 1
        elif c.isspace():
            pos += 1
        else:
            break
    start = pos
    while pos < n and not data[pos:pos + 1].isspace() and data[pos:pos + 1] != b"#":
        pos += 1
    if start == pos:
        raise ValueError("truncated PGM header")
    return data[start:pos], pos


def read_pgm(path) -> GrayImage:
    data = Path(path).read_bytes()
    magic, pos = _next_token(data, 0)
    if magic != b"P5":
        raise ValueError(f"{path}: not a binary PGM (magic {magic!r})")
    width, pos = _next_token(data, pos)
    height, pos = _next_token(data, pos)
    maxval, pos = _next_token(data, pos)
    width, height, maxval = int(width), int(height), int(maxval)
    if maxval != 255:
        raise ValueError(f"{path}: only maxval 255 is supported, got {maxval}")
    pos += 1  # single whitespace byte after maxval
    raw = data[pos:pos + width * height]
    if len(raw) != width * height:
        raise ValueError(f"{path}: expected {width * height} pixel bytes, found {len(raw)}")
    return GrayImage(np.frombuffer(raw, dtype=np.uint8).reshape(height, width))


def frame_path(directory, index: int) -> Path:
    return Path(directory) / FRAME_NAME.format(index)


def write_frames(directory, frames: Sequence[GrayImage]) -> list[Path]:
    Path(directory).mkdir(parents=True, exist_ok=True)
    paths = []
    for i, img in enumerate(frames):
        p = frame_path(directory, i)
        write_pgm(p, img)
        paths.append(p)
    return paths


def read_frames(directory, count: Optional[int] = None) -> list[GrayImage]:
    """Load frame_000000.pgm .. in order. With ``count`` every index must exist."""
    directory = Path(directory)
    if count is None:
        idx = sorted(int(m.group(1)) for p in directory.iterdir()
                     if (m := _FRAME_RE.search(p.name)))
        count = idx[-1] + 1 if idx else 0
    frames = []
    for i in range(count):
        p = frame_path(directory, i)
        if not p.exists():
            raise FileNotFoundError(f"missing image for frame {i}: {p}")
        frames.append(read_pgm(p))
    return frames


def detection_to_record(d: Detection) -> dict:
    rec = {"frame": d.frame_index, "x": d.bbox.x, "y": d.bbox.y, "w": d.bbox.w,
           "h": d.bbox.h, "class": d.class_id, "conf": d.confidence}
    if d.track_id is not None:
        rec["id"] = d.track_id
    return rec


def detection_from_record(rec: dict, frame_size: Optional[tuple[int, int]] = None) -> Detection:
    missing = [k for k in ("frame", "x", "y", "w", "h", "class", "conf") if k not in rec]
    if missing:
        raise ValueError(f"detection record missing fields {missing}: {rec}")
    box = BoundingBox(float(rec["x"]), float(rec["y"]), float(rec["w"]), float(rec["h"]))
    if frame_size is not None:
        box = clamp_box(box, *frame_size)
    tid = rec.get("id")
    return Detection(int(rec["frame"]), box, int(rec["class"]), float(rec["conf"]),
                     None if tid is None else int(tid))


def write_jsonl(path, records: Iterable[dict]) -> None:
    tmp = f"{path}.tmp"
    with open(tmp, "w", encoding="utf-8") as fh:
        for rec in records:
            fh.write(json.dumps(rec, sort_keys=True) + "\n")
    os.replace(tmp, path)


def read_jsonl(path) -> list[dict]:
    out = []
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, 1):
            line = line.strip()
            if not line:
                continue
            try:
                out.append(json.loads(line))
            except json.JSONDecodeError as exc:
                raise ValueError(f"{path}:{lineno}: {exc}") from None
    return out


def write_detections(path, detections: Iterable[Detection]) -> None:
    write_jsonl(path, (detection_to_record(d) for d in detections))


def read_detections(path, frame_size: Optional[tuple[int, int]] = None) -> list[Detection]:
    return [detection_from_record(r, frame_size) for r in read_jsonl(path)]


def group_by_frame(detections: Iterable[Detection], frame_count: int) -> list[list[Detection]]:
    frames: list[list[Detection]] = [[] for _ in range(frame_count)]
    for d in detections:
        if d.frame_index >= frame_count:
            raise ValueError(f"detection at frame {d.frame_index} but only {frame_count} frames")
        frames[d.frame_index].append(d)
    return frames
