"""Manifests and on-disk video storage.

A manifest line is ``path<TAB>label<TAB>num_frames<TAB>kind`` with kind
``rgb`` or ``flow``. ``path`` (relative paths resolve against the manifest's
directory) is either one TSR1 file holding a T x C x H x W block, or a
directory of per-frame TSR1 files named ``rgb_00000.tsr`` / ``flow_00000.tsr``.
RGB frames are 3 x H x W; flow frames are real-valued 2 x H x W fields.
"""

from __future__ import annotations

import os
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import tsr

KINDS = ("rgb", "flow")


class ManifestError(ValueError):
    def __init__(self, path, lineno: int, message: str):
        super().__init__(f"{path}:{lineno}: {message}")
        self.lineno = lineno


@dataclass(frozen=True)
class ManifestRecord:
    path: str
    label: int
    num_frames: int
    kind: str

    def to_line(self) -> str:
        return f"{self.path}\t{self.label}\t{self.num_frames}\t{self.kind}"


def parse_manifest_line(line: str, source="<manifest>", lineno: int = 1) -> ManifestRecord:
    parts = line.rstrip("\n").split("\t")
    if len(parts) != 4:
        raise ManifestError(source, lineno, f"expected 4 tab-separated fields, got {len(parts)}")
    path, label, num_frames, kind = parts
    try:
        label_i, frames_i = int(label), int(num_frames)
    except ValueError:
        raise ManifestError(source, lineno, "label and num_frames must be integers") from None
    if label_i < 0:
        raise ManifestError(source, lineno, f"negative label {label_i}")
    if frames_i < 1:
        raise ManifestError(source, lineno, f"num_frames must be positive, got {frames_i}")
    if kind not in KINDS:
        raise ManifestError(source, lineno, f"kind must be rgb or flow, got {kind!r}")
    return ManifestRecord(path, label_i, frames_i, kind)


def read_manifest(path: str | os.PathLike, num_classes: int | None = None) -> list[ManifestRecord]:
    """Parse every line; any malformed line aborts with its line number."""
    records = []
    with open(path) as fh:
        for lineno, line in enumerate(fh, 1):
            if not line.strip():
                continue
            rec = parse_manifest_line(line, path, lineno)
            if num_classes is not None and rec.label >= num_classes:
                raise ManifestError(path, lineno, f"label {rec.label} outside [0, {num_classes})")
            records.append(rec)
    return records


def write_manifest(path: str | os.PathLike, records: list[ManifestRecord]) -> None:
    with open(path, "w") as fh:
        for rec in records:
            fh.write(rec.to_line() + "\n")


def resolve(record: ManifestRecord, base: str | os.PathLike) -> Path:
    p = Path(record.path)
    return p if p.is_absolute() else Path(base) / p


def frame_name(kind: str, index: int) -> str:
    return f"{kind}_{index:05d}.tsr"


def load_frames(record: ManifestRecord, base: str | os.PathLike = ".") -> np.ndarray:
    """All frames of one record as a T x C x H x W array; checks num_frames."""
    p = resolve(record, base)
    if p.is_dir():
        frames = [tsr.load(p / frame_name(record.kind, i)) for i in range(record.num_frames)]
        arr = np.stack(frames)
    else:
        arr = tsr.load(p)
    want_c = 3 if record.kind == "rgb" else 2
    if arr.ndim != 4 or arr.shape[1] != want_c:
        raise ValueError(f"{p}: expected T x {want_c} x H x W frames, got {arr.shape}")
    if arr.shape[0] != record.num_frames:
        raise ValueError(f"{p}: manifest says {record.num_frames} frames, found {arr.shape[0]}")
    return arr


@dataclass
class Video:
    record: ManifestRecord
    frames: np.ndarray  # T x C x H x W

    @property
    def label(self) -> int:
        return self.record.label


def load_dataset(manifest: str | os.PathLike, kind: str | None = None, num_classes: int | None = None) -> list[Video]:
    base = Path(manifest).parent
    records = read_manifest(manifest, num_classes)
    return [Video(r, load_frames(r, base)) for r in records if kind is None or r.kind == kind]
