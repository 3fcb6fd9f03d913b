#!/usr/bin/env python3
"""Train a small Siamese verifier end to end on a toy masked corpus.

Renders a 12-identity corpus, masks it, splits identities, finetunes a
tiny backbone with binary cross-entropy on (unmasked reference, masked
probe) pairs, and reports ranking validation precision during training
plus holdout EER before and after. Takes roughly a minute on a laptop
CPU.
"""

import os

from maskmatch.dataset_registry import ImageStore, split_identities
from maskmatch.evaluation import eer, score_pairs
from maskmatch.face_geometry import MaskConfig, mask_dataset
from maskmatch.pair_protocol import PairSource, generate_benchmark_pairs
from maskmatch.synthetic import build_corpus
from maskmatch.training import FinetuneConfig, finetune_supervised
from maskmatch.verifier import VerifierModel

OUT = "demo_output/training"

if __name__ == "__main__":
    os.makedirs(OUT, exist_ok=True)
    print("rendering + masking corpora...")
    train_idx = build_corpus(os.path.join(OUT, "train"), "train", 12, 8, seed=1, size=64)
    masked_idx, _ = mask_dataset(train_idx, MaskConfig(), os.path.join(OUT, "train_masked"))
    merged = train_idx.merged_with(masked_idx)
    hold_idx = build_corpus(os.path.join(OUT, "hold"), "hold", 6, 6, seed=2, size=64)
    hold_masked, _ = mask_dataset(hold_idx, MaskConfig(), os.path.join(OUT, "hold_masked"))
    hold_merged = hold_idx.merged_with(hold_masked)

    train, val, _ = split_identities(merged, (0.75, 0.25), seed=3)
    store = ImageStore({"train": merged})
    train_src = PairSource({"train": merged}, {"train": train.identity_ids})
    val_src = PairSource({"train": merged}, {"train": val.identity_ids})
    pair_list = generate_benchmark_pairs(hold_merged, 120, seed=4)
    hold_store = ImageStore({"hold": hold_merged})

    model = VerifierModel.from_preset("tiny_cnn", seed=5, input_resolution=32,
                                      head_width=64, model_id="demo")
    before = eer(score_pairs(model, pair_list, hold_store, "bottleneck2048"))
    print(f"holdout EER before training: {before:.3f} (random weights)")

    config = FinetuneConfig(
        name="demo", iterations=1500, batch_size=16, learning_rate=0.2,
        frozen_fraction=0.0, validation_interval=500, validation_steps=150,
        retention_threshold=0.3, seed=6, backbone="tiny_cnn",
        input_resolution=32, head_width=64,
    )
    print(f"finetuning {config.iterations} steps "
          f"(validation every {config.validation_interval})...")
    run = finetune_supervised(model, config, train_src, store, val_src,
                              run_dir=os.path.join(OUT, "run"))
    for step, precision in run.precision_trace:
        print(f"  step {step:5d}: ranking precision {precision:.3f}")

    after = eer(score_pairs(model, pair_list, hold_store, "bottleneck2048"))
    print(f"holdout EER after training:  {after:.3f}")
    print(f"retained checkpoints: {[c['step'] for c in run.checkpoints]}")
    print(f"run artifacts in {OUT}/run/")
