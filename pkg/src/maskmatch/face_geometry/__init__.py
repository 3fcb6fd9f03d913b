from .detect import BlobFaceDetector, DlibFaceDetector, HaarFaceDetector, detect_primary_face, make_detector, skin_mask
from .hull import contains_points, convex_hull, is_convex_ccw, point_location
from .landmarks import (
    FRONTAL_TEMPLATE,
    MIRROR_INDEX,
    DlibLandmarkPredictor,
    TemplateLandmarkPredictor,
    make_landmark_predictor,
    mirror_landmarks,
    predict_landmarks,
)
from .masking import (
    DEFAULT_FILL_COLOR,
    DEFAULT_MASK_LANDMARK_INDICES,
    MaskConfig,
    apply_mask,
    build_mask_polygon,
    mask_dataset,
    mask_image,
    verify_maskability,
)
from .types import (
    LANDMARK_COUNT,
    RECORD_DISCARDED_IO,
    RECORD_DISCARDED_NO_FACE,
    RECORD_MASKED,
    FaceBox,
    LandmarkSet,
    MaskingReport,
    MaskPolygon,
    read_masking_report,
    write_masking_report,
)

__all__ = [
    "BlobFaceDetector",
    "DlibFaceDetector",
    "HaarFaceDetector",
    "TemplateLandmarkPredictor",
    "DlibLandmarkPredictor",
    "FaceBox",
    "LandmarkSet",
    "MaskPolygon",
    "MaskingReport",
    "MaskConfig",
    "LANDMARK_COUNT",
    "FRONTAL_TEMPLATE",
    "MIRROR_INDEX",
    "DEFAULT_FILL_COLOR",
    "DEFAULT_MASK_LANDMARK_INDICES",
    "RECORD_MASKED",
    "RECORD_DISCARDED_NO_FACE",
    "RECORD_DISCARDED_IO",
    "detect_primary_face",
    "make_detector",
    "skin_mask",
    "predict_landmarks",
    "make_landmark_predictor",
    "mirror_landmarks",
    "convex_hull",
    "is_convex_ccw",
    "point_location",
    "contains_points",
    "build_mask_polygon",
    "apply_mask",
    "mask_image",
    "mask_dataset",
    "verify_maskability",
    "read_masking_report",
    "write_masking_report",
]
