"""Shared-weight Siamese verifier and similarity extraction.

One backbone embeds both images of a pair (they are stacked into a single
batch, so "shared weights" is literal). On top of the embeddings sits a
two-layer head: a width-512 fully connected layer with sigmoid activation
consuming the element-wise absolute difference of the embeddings,
followed by a single linear output trained with binary cross-entropy.

Similarity can be read at three points:

    final_output    sigmoid of the linear output (inference-time only;
                    training sees the raw logit)
    fc512           1/(1 + L2) between the two branches' activations
                    after the shared 512-unit sigmoid layer
    bottleneck2048  1/(1 + L2) between the raw embeddings

The distance-based taps are symmetric in the argument order and score
identical inputs exactly 1.0. Ensembles average members' bottleneck
similarities.
"""

from __future__ import annotations

import hashlib
import json
import os
from dataclasses import dataclass

import numpy as np

from .backbones import BackboneSpec, make_backbone
from .errors import ChecksumError, ConfigError, DomainError, ShapeMismatch
from .nn import (
    DTYPE,
    BatchNorm2d,
    Dense,
    assign_parameter_names,
    parameterized_layers,
    sigmoid,
)
from .raster import as_rgb, resize_image

TAP_FINAL = "final_output"
TAP_FC = "fc512"
TAP_BOTTLENECK = "bottleneck2048"
TAPS = (TAP_FINAL, TAP_FC, TAP_BOTTLENECK)

DEFAULT_NORMALIZATION = ((0.5, 0.5, 0.5), (0.5, 0.5, 0.5))


def distance_to_similarity(d) -> float:
    """Map a nonnegative distance to (0, 1] via 1/(1 + d)."""
    d = float(d)
    if d < 0:
        raise DomainError(f"distance must be nonnegative, got {d}")
    return 1.0 / (1.0 + d)


class VerifierModel:
    def __init__(
        self,
        backbone,
        spec: BackboneSpec,
        head_width: int = 512,
        rng: np.random.Generator | None = None,
        normalization=DEFAULT_NORMALIZATION,
        model_id: str = "verifier",
        lineage: dict | None = None,
        fc_tap_point: str = "post_sigmoid",
    ):
        if rng is None:
            rng = np.random.default_rng()
        if fc_tap_point not in ("post_sigmoid", "pre_sigmoid"):
            raise ConfigError("fc_tap_point must be 'post_sigmoid' or 'pre_sigmoid'")
        self.backbone = backbone
        self.spec = spec
        self.head_width = head_width
        self.fc_tap_point = fc_tap_point
        # the 512-unit layer reads the |difference| vector, so its input
        # width equals the embedding width
        self.head_fc = Dense(spec.embedding_dim, head_width, rng=rng,
                             scale=1.0 / np.sqrt(spec.embedding_dim))
        self.head_out = Dense(head_width, 1, rng=rng, scale=1.0 / np.sqrt(head_width))
        self.normalization = (tuple(normalization[0]), tuple(normalization[1]))
        self.model_id = model_id
        self.lineage = dict(lineage or {})
        self.frozen_fraction = 0.0
        self.step = 0
        assign_parameter_names(self.backbone, "backbone")
        assign_parameter_names(self.head_fc, "head.fc")
        assign_parameter_names(self.head_out, "head.out")

    @classmethod
    def from_preset(cls, name: str, seed: int = 0, input_resolution: int | None = None,
                    head_width: int = 512, model_id: str | None = None) -> "VerifierModel":
        rng = np.random.default_rng(seed)
        backbone, spec = make_backbone(name, rng, input_resolution)
        return cls(backbone, spec, head_width=head_width, rng=rng,
                   model_id=model_id or name, lineage={"preset": name})

    # -- preprocessing ------------------------------------------------

    def preprocess(self, image: np.ndarray) -> np.ndarray:
        """uint8 raster -> normalized (3, R, R) float tensor."""
        try:
            rgb = resize_image(as_rgb(image), self.spec.input_resolution)
        except ValueError as exc:
            raise ShapeMismatch(str(exc)) from exc
        mean = np.asarray(self.normalization[0], dtype=DTYPE)
        std = np.asarray(self.normalization[1], dtype=DTYPE)
        x = rgb.astype(DTYPE) / 255.0
        x = (x - mean) / std
        return x.transpose(2, 0, 1)

    def preprocess_batch(self, images) -> np.ndarray:
        return np.stack([self.preprocess(im) for im in images])

    def _check_tensor(self, x: np.ndarray) -> np.ndarray:
        x = np.asarray(x, dtype=DTYPE)
        if x.ndim == 3:
            x = x[None]
        r = self.spec.input_resolution
        if x.ndim != 4 or x.shape[1] != 3 or x.shape[2] != r or x.shape[3] != r:
            raise ShapeMismatch(f"expected (N, 3, {r}, {r}) input, got {x.shape}")
        return x

    # -- inference ----------------------------------------------------

    def embed(self, image) -> np.ndarray:
        """Embedding vector(s) for one raster or a list of rasters."""
        if isinstance(image, np.ndarray) and image.ndim == 3 and image.dtype == np.uint8:
            x = self.preprocess(image)[None]
            single = True
        elif isinstance(image, (list, tuple)):
            x = self.preprocess_batch(image)
            single = False
        else:
            x = self._check_tensor(image)
            single = x.shape[0] == 1 and np.asarray(image).ndim == 3
        emb = self.backbone.forward(x, train=False)
        if emb.shape[1] != self.spec.embedding_dim:
            raise ShapeMismatch(
                f"backbone produced {emb.shape[1]}-dim embeddings, "
                f"expected {self.spec.embedding_dim}"
            )
        return emb[0] if single else emb

    def branch_fc_activation(self, embedding: np.ndarray) -> np.ndarray:
        """Per-branch 512-level activation, post-sigmoid by default.

        fc_tap_point='pre_sigmoid' taps the raw linear response instead.
        """
        w, b = self.head_fc.weight.value, self.head_fc.bias.value
        pre = embedding @ w + b
        return pre if self.fc_tap_point == "pre_sigmoid" else sigmoid(pre)

    def pair_logit_from_embeddings(self, e_ref: np.ndarray, e_probe: np.ndarray):
        diff = np.abs(e_ref - e_probe)
        w1, b1 = self.head_fc.weight.value, self.head_fc.bias.value
        w2, b2 = self.head_out.weight.value, self.head_out.bias.value
        hidden = sigmoid(diff @ w1 + b1)
        return hidden @ w2 + b2

    def similarity_from_embeddings(self, e_ref, e_probe, tap: str = TAP_BOTTLENECK) -> float:
        e_ref = np.asarray(e_ref, dtype=DTYPE).ravel()
        e_probe = np.asarray(e_probe, dtype=DTYPE).ravel()
        if tap == TAP_BOTTLENECK:
            return distance_to_similarity(np.linalg.norm(e_ref - e_probe))
        if tap == TAP_FC:
            h_ref = self.branch_fc_activation(e_ref)
            h_probe = self.branch_fc_activation(e_probe)
            return distance_to_similarity(np.linalg.norm(h_ref - h_probe))
        if tap == TAP_FINAL:
            logit = self.pair_logit_from_embeddings(e_ref, e_probe)
            return float(sigmoid(np.asarray(logit)).ravel()[0])
        raise ConfigError(f"unknown similarity tap {tap!r}; choose from {TAPS}")

    def similarity(self, reference, probe, tap: str = TAP_BOTTLENECK) -> float:
        emb = self.embed([reference, probe])
        return self.similarity_from_embeddings(emb[0], emb[1], tap)

    # -- state --------------------------------------------------------

    def head_layers(self):
        return [self.head_fc, self.head_out]

    def all_parameters(self):
        return self.backbone.parameters() + [
            p for layer in self.head_layers() for p in layer.parameters()
        ]

    def state_dict(self) -> dict[str, np.ndarray]:
        state = {}
        for layer in list(parameterized_layers(self.backbone)) + self.head_layers():
            for p in layer.parameters():
                state[p.name] = p.value
            if isinstance(layer, BatchNorm2d):
                base = layer.parameters()[0].name.rsplit(".", 1)[0]
                state[f"{base}.running_mean"] = layer.running_mean
                state[f"{base}.running_var"] = layer.running_var
        return state

    def load_state_dict(self, state: dict[str, np.ndarray]) -> None:
        for layer in list(parameterized_layers(self.backbone)) + self.head_layers():
            for p in layer.parameters():
                p.value = np.asarray(state[p.name], dtype=DTYPE).copy()
            if isinstance(layer, BatchNorm2d):
                base = layer.parameters()[0].name.rsplit(".", 1)[0]
                layer.running_mean = np.asarray(state[f"{base}.running_mean"], dtype=DTYPE).copy()
                layer.running_var = np.asarray(state[f"{base}.running_var"], dtype=DTYPE).copy()


@dataclass
class EnsembleModel:
    """Average of several verifiers' bottleneck similarities."""

    members: list
    tap: str = TAP_BOTTLENECK

    def __post_init__(self):
        if not self.members:
            raise ValueError("an ensemble needs at least one member")

    def similarity(self, reference, probe) -> float:
        return ensemble_similarity(self, reference, probe)


def ensemble_similarity(ensemble: EnsembleModel, reference, probe) -> float:
    values = [m.similarity(reference, probe, ensemble.tap) for m in ensemble.members]
    return float(np.mean(values))


# ---------------------------------------------------------------------------
# checkpoints: one archive of named tensors plus a JSON manifest


def _state_checksum(state: dict[str, np.ndarray]) -> str:
    digest = hashlib.sha256()
    for key in sorted(state):
        digest.update(key.encode())
        digest.update(np.ascontiguousarray(state[key]).tobytes())
    return digest.hexdigest()


def save_checkpoint(model: VerifierModel, path, step: int | None = None,
                    lineage: dict | None = None) -> str:
    state = model.state_dict()
    manifest = {
        "kind": "verifier",
        "architecture_name": model.spec.architecture_name,
        "embedding_dim": model.spec.embedding_dim,
        "input_resolution": model.spec.input_resolution,
        "head_width": model.head_width,
        "fc_tap_point": model.fc_tap_point,
        "normalization": [list(model.normalization[0]), list(model.normalization[1])],
        "model_id": model.model_id,
        "lineage": {**model.lineage, **(lineage or {})},
        "step": int(model.step if step is None else step),
        "checksum": _state_checksum(state),
    }
    path = str(path)
    if not path.endswith(".npz"):
        path += ".npz"
    np.savez(path, manifest=np.array(json.dumps(manifest)), **state)
    return path


def save_backbone_checkpoint(backbone, spec: BackboneSpec, path,
                             normalization=DEFAULT_NORMALIZATION,
                             lineage: dict | None = None, step: int = 0) -> str:
    assign_parameter_names(backbone, "backbone")
    state = {}
    for layer in parameterized_layers(backbone):
        for p in layer.parameters():
            state[p.name] = p.value
        if isinstance(layer, BatchNorm2d):
            base = layer.parameters()[0].name.rsplit(".", 1)[0]
            state[f"{base}.running_mean"] = layer.running_mean
            state[f"{base}.running_var"] = layer.running_var
    manifest = {
        "kind": "backbone",
        "architecture_name": spec.architecture_name,
        "embedding_dim": spec.embedding_dim,
        "input_resolution": spec.input_resolution,
        "normalization": [list(normalization[0]), list(normalization[1])],
        "lineage": dict(lineage or {}),
        "step": int(step),
        "checksum": _state_checksum(state),
    }
    path = str(path)
    if not path.endswith(".npz"):
        path += ".npz"
    np.savez(path, manifest=np.array(json.dumps(manifest)), **state)
    return path


def read_manifest(path) -> dict:
    with np.load(path, allow_pickle=False) as archive:
        return json.loads(str(archive["manifest"]))


def _load_state(path):
    with np.load(path, allow_pickle=False) as archive:
        manifest = json.loads(str(archive["manifest"]))
        state = {key: archive[key] for key in archive.files if key != "manifest"}
    if _state_checksum(state) != manifest.get("checksum"):
        raise ChecksumError(f"checkpoint {path!r} failed checksum verification")
    return manifest, state


def load_checkpoint(path, seed: int = 0) -> VerifierModel:
    """Rebuild a verifier from an archive; verifies the state checksum."""
    manifest, state = _load_state(path)
    if manifest["kind"] != "verifier":
        raise ConfigError(f"{path!r} is a {manifest['kind']} checkpoint, not a verifier")
    model = VerifierModel.from_preset(
        manifest["architecture_name"],
        seed=seed,
        input_resolution=manifest["input_resolution"],
        head_width=manifest["head_width"],
        model_id=manifest.get("model_id", "verifier"),
    )
    model.fc_tap_point = manifest.get("fc_tap_point", "post_sigmoid")
    model.normalization = (
        tuple(manifest["normalization"][0]),
        tuple(manifest["normalization"][1]),
    )
    model.lineage = dict(manifest.get("lineage", {}))
    model.step = int(manifest.get("step", 0))
    model.load_state_dict(state)
    return model


def load_backbone_weights(model: VerifierModel, path) -> VerifierModel:
    """Initialize a verifier's backbone from a backbone checkpoint."""
    manifest, state = _load_state(path)
    if manifest["architecture_name"] != model.spec.architecture_name:
        raise ConfigError(
            f"backbone checkpoint is {manifest['architecture_name']!r}, "
            f"model is {model.spec.architecture_name!r}"
        )
    for layer in parameterized_layers(model.backbone):
        for p in layer.parameters():
            p.value = np.asarray(state[p.name], dtype=DTYPE).copy()
        if isinstance(layer, BatchNorm2d):
            base = layer.parameters()[0].name.rsplit(".", 1)[0]
            layer.running_mean = np.asarray(state[f"{base}.running_mean"], dtype=DTYPE).copy()
            layer.running_var = np.asarray(state[f"{base}.running_var"], dtype=DTYPE).copy()
    model.normalization = (
        tuple(manifest["normalization"][0]),
        tuple(manifest["normalization"][1]),
    )
    model.lineage["base_checkpoint"] = os.path.basename(str(path))
    return model
