"""68-point landmark prediction.

The built-in predictor places a canonical frontal-face template into the
detected box: cheap, deterministic, and accurate enough to anchor a
synthetic mask hull on portrait-style corpora. A dlib adapter is included
for callers with a trained shape-predictor weights file.

Index layout (0-based): 0-16 jaw left-to-right, 17-21 / 22-26 brows,
27-30 nose bridge (30 = tip), 31-35 nostril line, 36-41 / 42-47 eyes,
48-59 outer lip, 60-67 inner lip.
"""

from __future__ import annotations

import numpy as np

from ..errors import ConfigError, LandmarkFailure
from ..raster import as_rgb
from .types import LANDMARK_COUNT, FaceBox, LandmarkSet


def _build_template() -> np.ndarray:
    """Canonical landmark positions in unit-box coordinates (x right, y down)."""
    pts = np.zeros((LANDMARK_COUNT, 2))

    # jaw: elliptical arc from left ear to right ear through the chin
    theta = np.radians(180.0 - 11.25 * np.arange(17))
    pts[0:17, 0] = 0.5 + 0.49 * np.cos(theta)
    pts[0:17, 1] = 0.40 + 0.59 * np.sin(theta)

    # brows: shallow arcs, symmetric pair
    t = np.linspace(0.0, 1.0, 5)
    pts[17:22, 0] = np.linspace(0.16, 0.40, 5)
    pts[17:22, 1] = 0.26 - 0.02 * np.sin(np.pi * t)
    pts[22:27, 0] = np.linspace(0.60, 0.84, 5)
    pts[22:27, 1] = 0.26 - 0.02 * np.sin(np.pi * t)

    # nose bridge and nostril line
    pts[27:31, 0] = 0.5
    pts[27:31, 1] = [0.33, 0.41, 0.49, 0.57]
    pts[31:36, 0] = [0.40, 0.45, 0.50, 0.55, 0.60]
    pts[31:36, 1] = [0.62, 0.635, 0.645, 0.635, 0.62]

    # eyes: six-point hexagons
    pts[36:42] = [
        (0.215, 0.385), (0.255, 0.360), (0.305, 0.360),
        (0.345, 0.385), (0.305, 0.410), (0.255, 0.410),
    ]
    pts[42:48] = [
        (0.655, 0.385), (0.695, 0.360), (0.745, 0.360),
        (0.785, 0.385), (0.745, 0.410), (0.695, 0.410),
    ]

    # lips: outer ellipse (12 points) and inner ellipse (8 points)
    outer = np.radians(180.0 - 30.0 * np.arange(12))
    pts[48:60, 0] = 0.5 + 0.155 * np.cos(outer)
    pts[48:60, 1] = 0.79 - 0.055 * np.sin(outer)
    inner = np.radians(180.0 - 45.0 * np.arange(8))
    pts[60:68, 0] = 0.5 + 0.095 * np.cos(inner)
    pts[60:68, 1] = 0.79 - 0.022 * np.sin(inner)
    return pts


FRONTAL_TEMPLATE = _build_template()

# left/right counterpart of every index under horizontal mirroring
_MIRROR_PAIRS = (
    [(i, 16 - i) for i in range(8)]
    + [(17 + i, 26 - i) for i in range(5)]
    + [(31 + i, 35 - i) for i in range(2)]
    + [(36, 45), (37, 44), (38, 43), (39, 42), (40, 47), (41, 46)]
    + [(48, 54), (49, 53), (50, 52), (55, 59), (56, 58)]
    + [(60, 64), (61, 63), (65, 67)]
)
MIRROR_INDEX = np.arange(LANDMARK_COUNT)
for _a, _b in _MIRROR_PAIRS:
    MIRROR_INDEX[_a], MIRROR_INDEX[_b] = _b, _a


def mirror_landmarks(landmarks: LandmarkSet, image_width: int) -> LandmarkSet:
    """Reflect a landmark set horizontally, re-labelling left/right indices."""
    pts = landmarks.points.copy()
    pts[:, 0] = (image_width - 1) - pts[:, 0]
    return LandmarkSet(pts[MIRROR_INDEX])


class TemplateLandmarkPredictor:
    """Scale the canonical frontal template into a face box."""

    min_box_side = 4  # template is meaningless below this

    def predict(self, image: np.ndarray, box: FaceBox) -> LandmarkSet:
        rgb = as_rgb(image)
        h, w = rgb.shape[:2]
        box = box.clipped(w, h)
        if box.width < self.min_box_side or box.height < self.min_box_side:
            raise LandmarkFailure(f"box {box.width}x{box.height} too small for landmarks")
        pts = FRONTAL_TEMPLATE.copy()
        pts[:, 0] = box.x + pts[:, 0] * (box.width - 1)
        pts[:, 1] = box.y + pts[:, 1] * (box.height - 1)
        pts[:, 0] = np.clip(pts[:, 0], 0, w - 1)
        pts[:, 1] = np.clip(pts[:, 1], 0, h - 1)
        return LandmarkSet(pts)


class DlibLandmarkPredictor:
    """Adapter over a dlib shape predictor (weights file required)."""

    def __init__(self, weights_path: str):
        try:
            import dlib
        except ImportError as exc:
            raise ConfigError("dlib is not installed; install it to use this predictor") from exc
        self._dlib = dlib
        self._predictor = dlib.shape_predictor(str(weights_path))

    def predict(self, image: np.ndarray, box: FaceBox) -> LandmarkSet:
        rgb = as_rgb(image)
        rect = self._dlib.rectangle(box.x, box.y, box.x + box.width, box.y + box.height)
        shape = self._predictor(rgb, rect)
        if shape.num_parts != LANDMARK_COUNT:
            raise LandmarkFailure(f"predictor produced {shape.num_parts} points")
        pts = np.array([(shape.part(i).x, shape.part(i).y) for i in range(LANDMARK_COUNT)], float)
        return LandmarkSet(pts)


def make_landmark_predictor(name: str = "template", weights_path: str | None = None):
    if name == "template":
        return TemplateLandmarkPredictor()
    if name == "dlib":
        if not weights_path:
            raise ConfigError("the dlib landmark predictor needs a weights file path")
        return DlibLandmarkPredictor(weights_path)
    raise ConfigError(f"unknown landmark predictor {name!r}")


def predict_landmarks(image: np.ndarray, box: FaceBox, predictor=None) -> LandmarkSet:
    if predictor is None:
        predictor = TemplateLandmarkPredictor()
    return predictor.predict(image, box)
