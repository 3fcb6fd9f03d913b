#!/usr/bin/env python3
"""Contrastive instance-discrimination pretraining, then reuse.

Pretrains a tiny backbone with the momentum-encoder/queue recipe on a
mixed pool of masked and unmasked renders, shows the loss trend, and
loads the emitted backbone checkpoint into a fresh verifier to confirm
the lineage plumbing works.
"""

import os

import numpy as np

from maskmatch.contrastive import PretrainConfig, pretrain_contrastive
from maskmatch.face_geometry import MaskConfig, mask_dataset
from maskmatch.raster import load_image
from maskmatch.synthetic import build_corpus
from maskmatch.verifier import VerifierModel, load_backbone_weights

OUT = "demo_output/pretrain"

if __name__ == "__main__":
    os.makedirs(OUT, exist_ok=True)
    index = build_corpus(os.path.join(OUT, "corpus"), "pre", 10, 4, seed=3, size=64)
    masked_index, _ = mask_dataset(index, MaskConfig(), os.path.join(OUT, "masked"))
    pool = [load_image(index.resolve(r)) for r in index.records]
    pool += [load_image(masked_index.resolve(r)) for r in masked_index.records]
    print(f"image pool: {len(pool)} rasters (masked + unmasked together)")

    config = PretrainConfig(
        backbone="tiny_cnn", input_resolution=32, batch_size=8, queue_size=64,
        steps=250, learning_rate=0.02, sgd_momentum=0.0, momentum_coefficient=0.9,
        temperature=0.2, projection_dim=32, augmentation_recipe="light", seed=11,
    )
    print(f"pretraining {config.steps} steps, queue {config.queue_size}, "
          f"temperature {config.temperature}...")
    result = pretrain_contrastive(config, pool, out_dir=OUT)

    losses = np.array([l for _, l in result.loss_trace])
    for lo, hi in ((0, 25), (100, 125), (225, 250)):
        print(f"  steps {lo:3d}-{hi:3d}: mean contrastive loss {losses[lo:hi].mean():.3f}")
    print(f"uniform-logit ceiling would be ln({config.queue_size}+1) = "
          f"{np.log(config.queue_size + 1):.3f}")

    model = VerifierModel.from_preset("tiny_cnn", seed=0, input_resolution=32,
                                      head_width=64)
    load_backbone_weights(model, result.checkpoint_path)
    print(f"\nloaded {os.path.basename(result.checkpoint_path)} into a fresh verifier")
    print(f"lineage: {model.lineage}")
    print("this checkpoint can seed FinetuneConfig.base_checkpoint for supervised runs")
