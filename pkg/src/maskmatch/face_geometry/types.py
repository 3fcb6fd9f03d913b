"""Domain types for detection, landmarks and synthetic masking."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np


@dataclass(frozen=True)
class FaceBox:
    """Axis-aligned face bounding box in pixel coordinates."""

    x: int
    y: int
    width: int
    height: int
    confidence: float = 1.0

    def __post_init__(self):
        if self.width <= 0 or self.height <= 0:
            raise ValueError("face box must have positive width and height")
        if not 0.0 <= self.confidence <= 1.0:
            raise ValueError("confidence must lie in [0, 1]")

    @property
    def area(self) -> int:
        return self.width * self.height

    def clipped(self, image_width: int, image_height: int) -> "FaceBox":
        x0 = max(0, self.x)
        y0 = max(0, self.y)
        x1 = min(image_width, self.x + self.width)
        y1 = min(image_height, self.y + self.height)
        if x1 <= x0 or y1 <= y0:
            raise ValueError("box does not intersect the image")
        return FaceBox(x0, y0, x1 - x0, y1 - y0, self.confidence)

    def iou(self, other: "FaceBox") -> float:
        ix0 = max(self.x, other.x)
        iy0 = max(self.y, other.y)
        ix1 = min(self.x + self.width, other.x + other.width)
        iy1 = min(self.y + self.height, other.y + other.height)
        inter = max(0, ix1 - ix0) * max(0, iy1 - iy0)
        union = self.area + other.area - inter
        return inter / union if union else 0.0


LANDMARK_COUNT = 68


@dataclass(frozen=True)
class LandmarkSet:
    """The standard 68-point frontal annotation: indices 0-16 jaw,
    17-26 brows, 27-35 nose, 36-47 eyes, 48-67 mouth."""

    points: np.ndarray  # (68, 2) float, (x, y) pixel coordinates

    def __post_init__(self):
        pts = np.asarray(self.points, dtype=float)
        if pts.shape != (LANDMARK_COUNT, 2):
            raise ValueError(f"expected ({LANDMARK_COUNT}, 2) points, got {pts.shape}")
        if not np.all(np.isfinite(pts)):
            raise ValueError("landmarks must be finite")
        object.__setattr__(self, "points", pts)

    def __len__(self) -> int:
        return LANDMARK_COUNT

    def select(self, indices) -> np.ndarray:
        idx = np.asarray(indices, dtype=int)
        if idx.size == 0:
            raise ValueError("index set is empty")
        if idx.min() < 0 or idx.max() >= LANDMARK_COUNT:
            raise ValueError("landmark indices must lie in [0, 67]")
        return self.points[idx]


@dataclass(frozen=True)
class MaskPolygon:
    """Convex mask region plus its solid fill color."""

    vertices: np.ndarray  # (V, 2) float, CCW
    fill_color: tuple[int, int, int]

    def __post_init__(self):
        verts = np.asarray(self.vertices, dtype=float)
        if verts.ndim != 2 or verts.shape[1] != 2 or verts.shape[0] < 3:
            raise ValueError("polygon needs at least 3 (x, y) vertices")
        color = tuple(int(c) for c in self.fill_color)
        if len(color) != 3 or any(not 0 <= c <= 255 for c in color):
            raise ValueError("fill_color must be three ints in [0, 255]")
        object.__setattr__(self, "vertices", verts)
        object.__setattr__(self, "fill_color", color)


RECORD_MASKED = "masked"
RECORD_DISCARDED_NO_FACE = "discarded_no_face"
RECORD_DISCARDED_IO = "discarded_io"


@dataclass
class MaskingReport:
    """Per-run accounting: every input is either masked or discarded."""

    input_count: int = 0
    masked_count: int = 0
    discarded_count: int = 0
    discarded_ids: list = field(default_factory=list)
    entries: list = field(default_factory=list)  # (image_id, status, output_path)

    def record(self, image_id: str, status: str, output_path: str = "") -> None:
        self.input_count += 1
        if status == RECORD_MASKED:
            self.masked_count += 1
        else:
            self.discarded_count += 1
            self.discarded_ids.append(image_id)
        self.entries.append((image_id, status, output_path))

    def check(self) -> None:
        assert self.masked_count + self.discarded_count == self.input_count


def write_masking_report(report: MaskingReport, path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("image_id,status,output_path\n")
        for image_id, status, output_path in report.entries:
            fh.write(f"{image_id},{status},{output_path}\n")


def read_masking_report(path) -> MaskingReport:
    report = MaskingReport()
    with open(path, encoding="utf-8") as fh:
        header = fh.readline()
        if header.strip() != "image_id,status,output_path":
            raise ValueError("not a masking report file")
        for line in fh:
            line = line.rstrip("\n")
            if not line:
                continue
            image_id, status, output_path = line.split(",", 2)
            report.record(image_id, status, output_path)
    return report
