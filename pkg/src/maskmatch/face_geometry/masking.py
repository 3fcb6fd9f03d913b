"""Synthetic mask drawing and the dataset-level masking pipeline.

A mask is the convex hull of selected landmarks filled with a solid
color. The default index set covers the lower jaw line plus one
nose-bridge point, which yields a nose-to-chin cover on frontal faces;
both the index set and the fill color are configurable.

After drawing, every output is re-validated: images on which the face
detector no longer fires are discarded, so downstream detection-based
workflows keep working on the masked corpus.
"""

from __future__ import annotations

import json
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from ..errors import DegenerateHull, LandmarkFailure, NoFaceFound
from ..raster import as_rgb, load_image, save_image
from .detect import detect_primary_face, make_detector
from .hull import contains_points, convex_hull
from .landmarks import make_landmark_predictor, predict_landmarks
from .types import (
    RECORD_DISCARDED_IO,
    RECORD_DISCARDED_NO_FACE,
    RECORD_MASKED,
    LandmarkSet,
    MaskingReport,
    MaskPolygon,
)

# lower jaw arc (points 2-14) closed by a nose-bridge point
DEFAULT_MASK_LANDMARK_INDICES = tuple(range(2, 15)) + (28,)
DEFAULT_FILL_COLOR = (110, 140, 200)


@dataclass
class MaskConfig:
    """Settings for one masking run; serializable as a flat JSON document."""

    index_set: tuple = DEFAULT_MASK_LANDMARK_INDICES
    fill_color: tuple = DEFAULT_FILL_COLOR
    detector: str = "blob"
    detector_weights: str | None = None
    landmark_predictor: str = "template"
    landmark_weights: str | None = None
    revalidate_landmarks: bool = False

    def __post_init__(self):
        self.index_set = tuple(int(i) for i in self.index_set)
        self.fill_color = tuple(int(c) for c in self.fill_color)

    @classmethod
    def from_json(cls, path) -> "MaskConfig":
        with open(path, encoding="utf-8") as fh:
            data = json.load(fh)
        return cls(**data)

    def to_json(self, path) -> None:
        data = {
            "index_set": list(self.index_set),
            "fill_color": list(self.fill_color),
            "detector": self.detector,
            "detector_weights": self.detector_weights,
            "landmark_predictor": self.landmark_predictor,
            "landmark_weights": self.landmark_weights,
            "revalidate_landmarks": self.revalidate_landmarks,
        }
        with open(path, "w", encoding="utf-8") as fh:
            json.dump(data, fh, indent=2)

    def build_detector(self):
        return make_detector(self.detector, self.detector_weights)

    def build_landmark_predictor(self):
        return make_landmark_predictor(self.landmark_predictor, self.landmark_weights)


def build_mask_polygon(
    landmarks: LandmarkSet,
    index_set=None,
    color=DEFAULT_FILL_COLOR,
) -> MaskPolygon:
    """Convex hull of the selected landmarks as a fillable polygon.

    Raises DegenerateHull when the selected points are collinear.
    """
    if index_set is None:
        index_set = DEFAULT_MASK_LANDMARK_INDICES
    selected = landmarks.select(index_set)
    return MaskPolygon(convex_hull(selected), tuple(color))


def apply_mask(image: np.ndarray, polygon: MaskPolygon) -> np.ndarray:
    """Fill the polygon interior with its color; leave everything else alone.

    A pixel is filled iff its center lies inside or on the polygon, so
    re-applying the same polygon is a no-op and the changed-pixel set is
    exactly the rasterized interior. Parts of the polygon outside the
    image are clipped implicitly.
    """
    rgb = as_rgb(image)
    out = rgb.copy()
    h, w = rgb.shape[:2]
    verts = polygon.vertices
    x0 = max(0, int(np.floor(verts[:, 0].min() - 1)))
    x1 = min(w, int(np.ceil(verts[:, 0].max() + 1)))
    y0 = max(0, int(np.floor(verts[:, 1].min() - 1)))
    y1 = min(h, int(np.ceil(verts[:, 1].max() + 1)))
    if x0 >= x1 or y0 >= y1:
        return out
    cols, rows = np.meshgrid(np.arange(x0, x1), np.arange(y0, y1))
    inside = contains_points(verts, cols + 0.5, rows + 0.5)
    region = out[y0:y1, x0:x1]
    region[inside] = np.array(polygon.fill_color, dtype=np.uint8)
    return out


def verify_maskability(
    masked_image: np.ndarray,
    detector=None,
    landmark_predictor=None,
    require_landmarks: bool = False,
) -> bool:
    """True iff a face box is still detected on the masked image.

    With require_landmarks=True the landmark predictor must also succeed
    on the re-detected box (stricter variant of the validation step).
    """
    try:
        box = detect_primary_face(masked_image, detector)
        if require_landmarks:
            predict_landmarks(masked_image, box, landmark_predictor)
    except (NoFaceFound, LandmarkFailure):
        return False
    return True


def mask_image(image: np.ndarray, config: MaskConfig, detector=None, predictor=None):
    """Run detect -> landmarks -> hull -> fill on a single raster.

    Returns (masked image, polygon). Raises NoFaceFound / LandmarkFailure /
    DegenerateHull on pipeline failures.
    """
    if detector is None:
        detector = config.build_detector()
    if predictor is None:
        predictor = config.build_landmark_predictor()
    box = detect_primary_face(image, detector)
    landmarks = predict_landmarks(image, box, predictor)
    polygon = build_mask_polygon(landmarks, config.index_set, config.fill_color)
    return apply_mask(image, polygon), polygon


def mask_dataset(index, config: MaskConfig | None = None, out_dir: str = "masked",
                 workers: int = 0):
    """Mask every unmasked record of a dataset index.

    Each input ends up exactly once in the report: written as a masked
    PNG, discarded because no face was found (before or after masking),
    or discarded on an I/O failure. Outputs keep the identity structure
    of the inputs; the returned index is rooted at out_dir.

    workers > 0 fans the per-image work over a thread pool; results are
    reduced in input order either way.
    """
    from ..dataset_registry import VARIANT_MASKED, VARIANT_UNMASKED, DatasetIndex, ImageRecord

    if config is None:
        config = MaskConfig()
    os.makedirs(out_dir, exist_ok=True)
    detector = config.build_detector()
    predictor = config.build_landmark_predictor()
    inputs = [r for r in index.records if r.variant == VARIANT_UNMASKED]

    def process(record):
        try:
            image = load_image(index.resolve(record))
        except (OSError, ValueError) as exc:
            return record, RECORD_DISCARDED_IO, "", None, f"{exc}"
        try:
            masked, _ = mask_image(image, config, detector, predictor)
        except (NoFaceFound, LandmarkFailure, DegenerateHull):
            return record, RECORD_DISCARDED_NO_FACE, "", None, None
        if not verify_maskability(
            masked,
            detector,
            predictor,
            require_landmarks=config.revalidate_landmarks,
        ):
            return record, RECORD_DISCARDED_NO_FACE, "", None, None
        filename = f"{record.image_id}_masked.png"
        try:
            save_image(masked, os.path.join(out_dir, filename))
        except OSError as exc:
            return record, RECORD_DISCARDED_IO, "", None, f"{exc}"
        out_record = ImageRecord(
            image_id=f"{record.image_id}_masked",
            identity_id=record.identity_id,
            dataset_id=record.dataset_id,
            variant=VARIANT_MASKED,
            path=filename,
        )
        return record, RECORD_MASKED, filename, out_record, None

    if workers > 0:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(process, inputs))
    else:
        results = [process(record) for record in inputs]

    report = MaskingReport()
    out_records = []
    for record, status, out_path, out_record, _reason in results:
        report.record(record.image_id, status, out_path)
        if out_record is not None:
            out_records.append(out_record)
    report.check()
    masked_index = DatasetIndex(index.dataset_id, out_records, root=out_dir)
    return masked_index, report
