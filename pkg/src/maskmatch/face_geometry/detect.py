"""Face detectors.

The default detector is a classical skin-blob analyzer with no learned
weights: it thresholds a skin-chroma rule, labels connected components and
keeps components whose size, aspect and fill ratio look face-like. It is
fully deterministic, mirror-exact, and works on the bundled smoke corpus
as well as ordinary frontal portraits. Because a digital mask is not
skin-colored, a masked face keeps a detectable upper-face blob, which is
what the post-masking validation step relies on.

dlib and OpenCV adapters are provided for callers who want an external
detector; those libraries and any weights files are not shipped.
"""

from __future__ import annotations

import numpy as np
from scipy import ndimage

from ..errors import ConfigError, NoFaceFound
from ..raster import as_rgb
from .types import FaceBox

_EIGHT_CONNECTED = np.ones((3, 3), dtype=int)


def skin_mask(image: np.ndarray) -> np.ndarray:
    """Boolean mask of plausible skin pixels (RGB chroma rule)."""
    rgb = as_rgb(image).astype(np.int16)
    r, g, b = rgb[..., 0], rgb[..., 1], rgb[..., 2]
    spread = rgb.max(axis=-1) - rgb.min(axis=-1)
    return (
        (r > 95) & (g > 40) & (b > 20)
        & (spread > 15)
        & (np.abs(r - g) > 15)
        & (r > g) & (r > b)
    )


class BlobFaceDetector:
    """Skin-blob face detector.

    min_area: absolute pixel floor for a component.
    min_area_fraction: relative floor against the image area.
    aspect_range: accepted height/width ratio of the component bbox. The
        lower bound is deliberately loose so the upper-face band left
        after digital masking still qualifies.
    min_fill: component area over bbox area; a face blob is roughly
        elliptical (~0.78) and stays above this even when the lower half
        is masked away.
    """

    def __init__(
        self,
        min_area: int = 100,
        min_area_fraction: float = 0.002,
        aspect_range: tuple[float, float] = (0.22, 3.2),
        min_fill: float = 0.30,
    ):
        self.min_area = min_area
        self.min_area_fraction = min_area_fraction
        self.aspect_range = aspect_range
        self.min_fill = min_fill

    def detect(self, image: np.ndarray) -> list[FaceBox]:
        rgb = as_rgb(image)
        h, w = rgb.shape[:2]
        mask = skin_mask(rgb)
        if not mask.any():
            return []
        labels, count = ndimage.label(mask, structure=_EIGHT_CONNECTED)
        if count == 0:
            return []
        floor = max(self.min_area, int(self.min_area_fraction * h * w))
        boxes = []
        slices = ndimage.find_objects(labels)
        areas = ndimage.sum_labels(mask, labels, index=np.arange(1, count + 1))
        for idx, sl in enumerate(slices):
            if sl is None:
                continue
            area = float(areas[idx])
            if area < floor:
                continue
            ys, xs = sl
            bw = xs.stop - xs.start
            bh = ys.stop - ys.start
            aspect = bh / bw
            if not self.aspect_range[0] <= aspect <= self.aspect_range[1]:
                continue
            fill = area / (bw * bh)
            if fill < self.min_fill:
                continue
            boxes.append(FaceBox(xs.start, ys.start, bw, bh, confidence=min(1.0, fill)))
        return boxes


class DlibFaceDetector:
    """Adapter over dlib's frontal HOG detector (requires dlib installed)."""

    def __init__(self, weights_path: str | None = None):
        try:
            import dlib
        except ImportError as exc:
            raise ConfigError("dlib is not installed; install it to use this detector") from exc
        if weights_path:
            self._detector = dlib.fhog_object_detector(str(weights_path))
        else:
            self._detector = dlib.get_frontal_face_detector()

    def detect(self, image: np.ndarray) -> list[FaceBox]:
        rgb = as_rgb(image)
        rects = self._detector(rgb, 1)
        boxes = []
        for rect in rects:
            width = rect.right() - rect.left()
            height = rect.bottom() - rect.top()
            if width > 0 and height > 0:
                boxes.append(FaceBox(rect.left(), rect.top(), width, height, 1.0))
        return boxes


class HaarFaceDetector:
    """Adapter over an OpenCV Haar cascade (requires opencv installed)."""

    def __init__(self, weights_path: str | None = None):
        try:
            import cv2
        except ImportError as exc:
            raise ConfigError("opencv is not installed; install it to use this detector") from exc
        if weights_path is None:
            weights_path = cv2.data.haarcascades + "haarcascade_frontalface_default.xml"
        self._cascade = cv2.CascadeClassifier(str(weights_path))
        if self._cascade.empty():
            raise ConfigError(f"could not load cascade file {weights_path!r}")

    def detect(self, image: np.ndarray) -> list[FaceBox]:
        rgb = as_rgb(image)
        gray = np.round(rgb @ np.array([0.299, 0.587, 0.114])).astype(np.uint8)
        rects = self._cascade.detectMultiScale(gray, 1.1, 4)
        return [FaceBox(int(x), int(y), int(w), int(h), 1.0) for x, y, w, h in rects]


_DETECTORS = {
    "blob": BlobFaceDetector,
    "dlib": DlibFaceDetector,
    "haar": HaarFaceDetector,
}


def make_detector(name: str = "blob", weights_path: str | None = None):
    if name not in _DETECTORS:
        raise ConfigError(f"unknown detector {name!r}; choose from {sorted(_DETECTORS)}")
    if name == "blob":
        return BlobFaceDetector()
    return _DETECTORS[name](weights_path)


def detect_primary_face(image: np.ndarray, detector=None) -> FaceBox:
    """Largest-area face in the image.

    Datasets handled here are single-subject portraits, so when several
    boxes come back the biggest one wins; ties break on (x, y) for
    determinism. Raises NoFaceFound when the detector returns nothing.
    """
    rgb = as_rgb(image)
    if detector is None:
        detector = BlobFaceDetector()
    boxes = detector.detect(rgb)
    if not boxes:
        raise NoFaceFound("no face box detected")
    return max(boxes, key=lambda b: (b.area, -b.x, -b.y))
