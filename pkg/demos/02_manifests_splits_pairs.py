#!/usr/bin/env python3
"""Manifests, identity-disjoint splits, and frozen benchmark pair lists.

Builds a corpus + masked variants, shows the per-variant inventory,
splits identities 80/10/10, and freezes a balanced verification pair list
to a file that round-trips exactly.
"""

import os

from maskmatch.dataset_registry import split_identities, stats, write_split
from maskmatch.face_geometry import MaskConfig, mask_dataset
from maskmatch.pair_protocol import export_pair_list, generate_benchmark_pairs, import_pair_list
from maskmatch.synthetic import build_corpus

OUT = "demo_output/registry"

if __name__ == "__main__":
    os.makedirs(OUT, exist_ok=True)
    index = build_corpus(os.path.join(OUT, "corpus"), "demo", 10, 4, seed=5, size=80)
    masked_index, _ = mask_dataset(index, MaskConfig(), os.path.join(OUT, "masked"))
    merged = index.merged_with(masked_index)

    print("per-variant inventory (identities, images):")
    for variant, counts in stats(merged).items():
        print(f"  {variant:9s} {counts}")

    train, val, hold = split_identities(merged, (0.8, 0.1), seed=42)
    print(f"\nsplit sizes: train={len(train.identity_ids)} "
          f"validation={len(val.identity_ids)} holdout={len(hold.identity_ids)}")
    print(f"disjoint: {not (train.identity_ids & val.identity_ids)}")
    write_split((train, val, hold), os.path.join(OUT, "split.csv"),
                seed=42, fractions=(0.8, 0.1))

    pair_list = generate_benchmark_pairs(merged, 40, seed=9)
    n_auth, n_imp = pair_list.counts()
    print(f"\nbenchmark list: {n_auth} authentic + {n_imp} imposter pairs")
    path = os.path.join(OUT, "benchmark_pairs.csv")
    export_pair_list(pair_list, path)
    reloaded = import_pair_list(path, merged)
    print(f"round-trip equal: {reloaded == pair_list}")
    print(f"first pair: {pair_list.pairs[0]}")
