"""Procedural frontal-face corpus generator.

Renders schematic portrait images whose identity-determining features
(skin tone, hair color and coverage, eye color/spacing/size, brow
thickness, face proportions, mouth width) are stable across images of the
same identity, while nuisance factors (position, scale, brightness,
background, sensor noise) vary per image. Most identity cues live in the
upper face, so identities remain matchable after the lower face is
covered by a synthetic mask.

The renderer doubles as the smoke corpus for the masking pipeline and as
the toy corpus for desk-scale training runs; everything is deterministic
given a seed.
"""

from __future__ import annotations

import os
from dataclasses import dataclass

import numpy as np

from .dataset_registry import DatasetIndex, ImageRecord, VARIANT_UNMASKED, save_manifest
from .face_geometry.types import FaceBox
from .raster import save_image
from .seeding import spawn_rng

_IRIS_PALETTE = (
    (70, 42, 24),    # brown
    (46, 68, 120),   # blue
    (52, 96, 58),    # green
    (96, 96, 100),   # gray
)

_HAIR_PALETTE = (
    (38, 28, 22),    # near-black
    (88, 58, 32),    # brown
    (168, 136, 60),  # blond
    (120, 120, 124), # gray
    (120, 52, 36),   # auburn
)


@dataclass(frozen=True)
class IdentityParams:
    skin: tuple
    hair: tuple
    iris: tuple
    face_rx: float
    face_ry: float
    eye_dx: float
    eye_y: float
    eye_r: float
    brow_drop: float
    brow_thickness: float
    mouth_w: float
    nose_w: float
    hair_fraction: float


def draw_identity(rng: np.random.Generator) -> IdentityParams:
    # skin stays inside the chroma envelope the face detector keys on
    r = int(rng.integers(180, 240))
    g = r - int(rng.integers(35, 70))
    b = max(32, g - int(rng.integers(15, 50)))
    hair = tuple(
        int(np.clip(c + rng.integers(-12, 13), 0, 255))
        for c in _HAIR_PALETTE[int(rng.integers(len(_HAIR_PALETTE)))]
    )
    iris = tuple(
        int(np.clip(c + rng.integers(-10, 11), 0, 255))
        for c in _IRIS_PALETTE[int(rng.integers(len(_IRIS_PALETTE)))]
    )
    return IdentityParams(
        skin=(r, g, b),
        hair=hair,
        iris=iris,
        face_rx=float(rng.uniform(0.26, 0.34)),
        face_ry=float(rng.uniform(0.34, 0.44)),
        eye_dx=float(rng.uniform(0.105, 0.16)),
        eye_y=float(rng.uniform(-0.10, -0.03)),
        eye_r=float(rng.uniform(0.032, 0.055)),
        brow_drop=float(rng.uniform(1.8, 2.6)),
        brow_thickness=float(rng.uniform(0.012, 0.030)),
        mouth_w=float(rng.uniform(0.10, 0.18)),
        nose_w=float(rng.uniform(0.02, 0.045)),
        hair_fraction=float(rng.uniform(0.08, 0.22)),
    )


def render_face(identity: IdentityParams, rng: np.random.Generator, size: int = 96):
    """One portrait image of an identity; returns (uint8 raster, truth FaceBox)."""
    s = size
    # per-image nuisance parameters
    cx = 0.5 + rng.uniform(-0.04, 0.04)
    cy = 0.5 + rng.uniform(-0.04, 0.04)
    scale = rng.uniform(0.90, 1.08)
    brightness = rng.uniform(0.85, 1.15)
    noise_sigma = rng.uniform(0.0, 5.0)
    # backgrounds are cool/neutral so they never read as skin
    bg_r = int(rng.integers(40, 140))
    bg = np.array([bg_r, bg_r + rng.integers(0, 60), bg_r + rng.integers(5, 80)], float)

    rx = identity.face_rx * scale
    ry = identity.face_ry * scale
    yy, xx = np.mgrid[0:s, 0:s].astype(float)
    xn = (xx + 0.5) / s
    yn = (yy + 0.5) / s

    img = np.empty((s, s, 3), dtype=float)
    img[:] = bg
    img += rng.normal(0, 2.0, size=(s, s, 1))  # faint background texture

    # head
    rr = ((xn - cx) / rx) ** 2 + ((yn - cy) / ry) ** 2
    head = rr <= 1.0
    shade = (1.0 - 0.12 * rr)[..., None]
    skin = np.array(identity.skin, float)
    img[head] = skin[None, :] * shade[head]

    # hair: top cap of the head ellipse
    hair_line = cy - ry * (1.0 - 2.0 * identity.hair_fraction)
    hair = head & (yn < hair_line)
    img[hair] = np.array(identity.hair, float)

    # eyes
    eye_cy = cy + identity.eye_y * scale
    er = identity.eye_r * scale
    for side in (-1.0, 1.0):
        ex = cx + side * identity.eye_dx * scale
        white = (((xn - ex) / (er * 1.5)) ** 2 + ((yn - eye_cy) / er) ** 2) <= 1.0
        img[white & head] = np.array([248.0, 248.0, 246.0])
        iris = ((xn - ex) ** 2 + (yn - eye_cy) ** 2) <= (er * 0.62) ** 2
        img[iris & head] = np.array(identity.iris, float)
        pupil = ((xn - ex) ** 2 + (yn - eye_cy) ** 2) <= (er * 0.26) ** 2
        img[pupil & head] = np.array([18.0, 14.0, 14.0])
        # brow
        brow_top = eye_cy - er * identity.brow_drop
        brow = (
            (np.abs(xn - ex) < er * 1.5)
            & (yn >= brow_top)
            & (yn < brow_top + identity.brow_thickness * scale)
        )
        img[brow & head] = np.array(identity.hair, float) * 0.8

    # nose: slim darker wedge down the midline
    nose_top = cy - 0.02 * scale
    nose_tip = cy + 0.16 * scale
    t = np.clip((yn - nose_top) / max(nose_tip - nose_top, 1e-6), 0.0, 1.0)
    nose = (
        (np.abs(xn - cx) < identity.nose_w * scale * t)
        & (yn >= nose_top)
        & (yn <= nose_tip)
    )
    img[nose & head] = skin * 0.82

    # mouth
    mouth_cy = cy + 0.55 * ry
    mouth = (
        ((xn - cx) / (identity.mouth_w * scale)) ** 2
        + ((yn - mouth_cy) / (0.030 * scale)) ** 2
    ) <= 1.0
    img[mouth & head] = np.array([176.0, 74.0, 84.0])

    img *= brightness
    if noise_sigma > 0:
        img += rng.normal(0.0, noise_sigma, size=img.shape)
    raster = np.clip(np.round(img), 0, 255).astype(np.uint8)

    x0 = max(0, int(np.floor((cx - rx) * s)))
    y0 = max(0, int(np.floor((cy - ry) * s)))
    x1 = min(s, int(np.ceil((cx + rx) * s)))
    y1 = min(s, int(np.ceil((cy + ry) * s)))
    box = FaceBox(x0, y0, x1 - x0, y1 - y0)
    return raster, box


def build_corpus(
    out_dir,
    dataset_id: str,
    n_identities: int,
    images_per_identity: int,
    seed: int = 0,
    size: int = 96,
    manifest_name: str | None = None,
) -> DatasetIndex:
    """Render a corpus to disk and write its manifest; returns the index.

    Layout: out_dir/<identity>/<image>.png with identities named
    id000, id001, ... Every record is the unmasked variant; run the
    masking pipeline to derive masked counterparts.
    """
    os.makedirs(out_dir, exist_ok=True)
    records = []
    for i in range(n_identities):
        identity_id = f"id{i:03d}"
        identity = draw_identity(spawn_rng(seed, dataset_id, "identity", i))
        sub = os.path.join(out_dir, identity_id)
        os.makedirs(sub, exist_ok=True)
        for j in range(images_per_identity):
            image, _ = render_face(
                identity, spawn_rng(seed, dataset_id, "image", i, j), size=size
            )
            name = f"{identity_id}_{j:02d}.png"
            save_image(image, os.path.join(sub, name))
            records.append(
                ImageRecord(
                    image_id=f"{identity_id}_{j:02d}",
                    identity_id=identity_id,
                    dataset_id=dataset_id,
                    variant=VARIANT_UNMASKED,
                    path=os.path.join(identity_id, name),
                )
            )
    index = DatasetIndex(dataset_id, records, root=str(out_dir))
    manifest = manifest_name or f"{dataset_id}_manifest.csv"
    save_manifest(index, os.path.join(out_dir, manifest))
    return index


def smoke_corpus(out_dir, seed: int = 2024, n_identities: int = 12,
                 images_per_identity: int = 4, size: int = 96) -> DatasetIndex:
    """The bundled frontal-face smoke set (>= 40 images by default)."""
    return build_corpus(out_dir, "smoke", n_identities, images_per_identity,
                        seed=seed, size=size)
