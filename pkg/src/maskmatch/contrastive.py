"""Momentum-contrast pretraining on instance discrimination.

Two augmented views are made of every image: the online encoder embeds
one, a momentum-averaged copy of it embeds the other, and the training
signal is a softmax cross-entropy that must pick the matching key out of
a FIFO queue of past keys (one positive vs queue_size negatives, logits
scaled by 1/temperature). Both encoders carry a small projection head
whose output is L2-normalized; the head is dropped from the emitted
backbone checkpoint.

Masked and unmasked images both belong in the input pool: the verifier
later sees both kinds, so the representation should discriminate
instances of either.
"""

from __future__ import annotations

import os
from dataclasses import dataclass, field

import numpy as np

from .augment import get_recipe
from .backbones import make_backbone
from .errors import ConfigError
from .nn import (
    DTYPE,
    Dense,
    ReLU,
    SGD,
    Sequential,
    copy_parameters,
    l2_normalize,
    momentum_update,
    softmax_cross_entropy_first,
)
from .seeding import spawn_rng
from .verifier import DEFAULT_NORMALIZATION, save_backbone_checkpoint


@dataclass
class PretrainConfig:
    learning_rate: float = 0.015
    batch_size: int = 128
    temperature: float = 0.2
    queue_size: int = 4096
    momentum_coefficient: float = 0.999
    epochs: int = 1
    steps: int | None = None  # overrides epochs when set
    augmentation_recipe: str = "contrastive_default"
    projection_head: bool = True
    projection_dim: int = 64
    backbone: str = "tiny_cnn"
    input_resolution: int | None = None
    sgd_momentum: float = 0.9
    weight_decay: float = 0.0
    seed: int = 0

    def __post_init__(self):
        if self.temperature <= 0:
            raise ConfigError("temperature must be positive")
        if self.queue_size < self.batch_size:
            raise ConfigError("queue_size must be at least batch_size")
        if not 0.0 < self.momentum_coefficient < 1.0:
            raise ConfigError("momentum_coefficient must lie in (0, 1)")
        if self.batch_size < 1:
            raise ConfigError("batch_size must be positive")


class KeyQueue:
    """Fixed-capacity FIFO of key vectors; oldest entries evicted first."""

    def __init__(self, capacity: int, dim: int):
        self.capacity = capacity
        self._store = np.zeros((capacity, dim), dtype=DTYPE)
        self._ptr = 0
        self._count = 0

    @property
    def size(self) -> int:
        return min(self._count, self.capacity)

    def keys(self) -> np.ndarray:
        """Current contents, oldest first."""
        if self._count <= self.capacity:
            return self._store[: self._count]
        p = self._ptr
        return np.concatenate([self._store[p:], self._store[:p]], axis=0)

    def enqueue(self, batch: np.ndarray) -> None:
        batch = np.asarray(batch, dtype=DTYPE)
        for row in batch:
            self._store[self._ptr] = row
            self._ptr = (self._ptr + 1) % self.capacity
            self._count += 1


def contrastive_loss(positive_logits, negative_logits, temperature: float):
    """InfoNCE: cross-entropy of [positive | negatives] / temperature.

    Returns (loss, d_positive, d_negatives). With all logits equal the
    softmax is uniform over queue_size+1 entries, so the loss equals
    ln(queue_size + 1) regardless of temperature.
    """
    pos = np.asarray(positive_logits, dtype=DTYPE).reshape(-1, 1)
    negs = np.asarray(negative_logits, dtype=DTYPE)
    if negs.ndim == 1:
        negs = negs.reshape(pos.shape[0], -1)
    logits = np.concatenate([pos, negs], axis=1) / temperature
    loss, dlogits = softmax_cross_entropy_first(logits)
    dlogits = dlogits / temperature
    return loss, dlogits[:, 0], dlogits[:, 1:]


@dataclass
class PretrainResult:
    checkpoint_path: str | None
    loss_trace: list = field(default_factory=list)
    backbone: object = None
    spec: object = None


def _build_projection_head(embedding_dim: int, out_dim: int, rng) -> Sequential:
    return Sequential(
        Dense(embedding_dim, embedding_dim, rng=rng),
        ReLU(),
        Dense(embedding_dim, out_dim, rng=rng),
    )


def pretrain_contrastive(config: PretrainConfig, images, out_dir=None) -> PretrainResult:
    """Train a backbone on instance discrimination over raw rasters.

    `images` is a sequence of uint8 RGB arrays (mix masked and unmasked
    freely). Emits a backbone checkpoint (projection head stripped) into
    out_dir when given. Deterministic for a fixed config seed.
    """
    if len(images) == 0:
        raise ConfigError("image pool is empty")
    rng = spawn_rng(config.seed, "pretrain")
    online, spec = make_backbone(config.backbone, rng, config.input_resolution)
    key_encoder, _ = make_backbone(config.backbone, np.random.default_rng(0),
                                   config.input_resolution)
    copy_parameters(online, key_encoder)

    if config.projection_head:
        online_head = _build_projection_head(spec.embedding_dim, config.projection_dim, rng)
        key_head = _build_projection_head(spec.embedding_dim, config.projection_dim,
                                          np.random.default_rng(0))
        copy_parameters(online_head, key_head)
        key_dim = config.projection_dim
    else:
        online_head = key_head = None
        key_dim = spec.embedding_dim

    recipe = get_recipe(config.augmentation_recipe)
    queue = KeyQueue(config.queue_size, key_dim)
    mean = np.asarray(DEFAULT_NORMALIZATION[0], dtype=DTYPE)
    std = np.asarray(DEFAULT_NORMALIZATION[1], dtype=DTYPE)

    def to_tensor(batch_views):
        x = np.stack([v.astype(DTYPE) / 255.0 for v in batch_views])
        x = (x - mean) / std
        return x.transpose(0, 3, 1, 2)

    def encode_keys(batch_idx):
        views = [recipe.apply(images[int(i)], rng, spec.input_resolution) for i in batch_idx]
        feats = key_encoder.forward(to_tensor(views), train=False)
        proj = key_head.forward(feats, train=False) if key_head else feats
        k, _ = l2_normalize(proj)
        return k

    n = len(images)
    # warm-up: fill the queue with real keys so the first training step
    # already faces the full-strength discrimination task
    while queue.size < config.queue_size:
        fill = min(config.batch_size, config.queue_size - queue.size)
        queue.enqueue(encode_keys(rng.integers(0, n, size=fill)))

    params = online.parameters() + (online_head.parameters() if online_head else [])
    optimizer = SGD(params, lr=config.learning_rate, momentum=config.sgd_momentum,
                    weight_decay=config.weight_decay)

    steps = config.steps
    if steps is None:
        steps = config.epochs * max(1, int(np.ceil(n / config.batch_size)))

    trace = []
    for step in range(steps):
        batch_idx = rng.integers(0, n, size=config.batch_size)
        views_q = [recipe.apply(images[int(i)], rng, spec.input_resolution) for i in batch_idx]
        xq = to_tensor(views_q)

        feats = online.forward(xq, train=True)
        proj = online_head.forward(feats, train=True) if online_head else feats
        q, q_vjp = l2_normalize(proj)
        k = encode_keys(batch_idx)

        pos = (q * k).sum(axis=1)
        negatives = queue.keys()
        negs = q @ negatives.T
        loss, dpos, dnegs = contrastive_loss(pos, negs, config.temperature)
        trace.append((step, loss))

        dq = dpos[:, None] * k + dnegs @ negatives
        dproj = q_vjp(dq)
        optimizer.zero_grad()
        dfeats = online_head.backward(dproj) if online_head else dproj
        online.backward(dfeats)
        optimizer.step()

        momentum_update(online, key_encoder, config.momentum_coefficient)
        if online_head:
            momentum_update(online_head, key_head, config.momentum_coefficient)
        queue.enqueue(k)

    checkpoint_path = None
    if out_dir is not None:
        os.makedirs(out_dir, exist_ok=True)
        checkpoint_path = save_backbone_checkpoint(
            online,
            spec,
            os.path.join(out_dir, "pretrained_backbone.npz"),
            lineage={"method": "momentum_contrast", "steps": steps},
            step=steps,
        )
    return PretrainResult(checkpoint_path, trace, online, spec)
