"""Supervised Siamese finetuning with freezing and hard-imposter mining.

Training draws labeled (unmasked reference, masked probe) pairs, runs
both images through the shared backbone in one stacked batch, and
optimizes binary cross-entropy on the head's linear output. A fraction of
the backbone's parameterized layers (counted in forward order) can be
frozen; the head always trains. When a hard sample size is configured,
imposter pairs are replaced by the hardest-of-N candidate under the
current model, mined inside the data-drawing step.

Validation uses the ranking precision protocol at a fixed step cadence;
checkpoints are persisted only when precision reaches the retention
threshold (default 0.90).

The named experiment presets (CP1, CP2, FT1, FT2, FT3) capture the
multi-dataset training grid: two high-learning-rate exploration runs and
three low-learning-rate hard-mined refinements built on top of them.
"""

from __future__ import annotations

import json
import math
import os
from dataclasses import asdict, dataclass, field, replace

import numpy as np

from .dataset_registry import ImageStore
from .errors import DomainError
from .evaluation import model_scorer, validation_precision
from .nn import SGD, bce_with_logits, parameterized_layers, sigmoid
from .pair_protocol import (
    LABEL_AUTHENTIC,
    PairSource,
    choose_dataset,
    draw_training_pair,
    mine_hard_imposter,
)
from .seeding import spawn_rng
from .verifier import TAP_FINAL, VerifierModel, load_backbone_weights, save_checkpoint


@dataclass
class FinetuneConfig:
    name: str = "finetune"
    base_checkpoint: str | None = None  # backbone checkpoint path or preset lineage tag
    iterations: int = 1000
    batch_size: int = 32
    learning_rate: float = 0.001
    frozen_fraction: float = 0.5
    hard_sample_size: int | None = None
    draw_strategy: str = "uniform"
    authentic_probability: float = 0.5
    validation_interval: int = 2500
    validation_steps: int = 400
    validation_imposters: int = 19
    retention_threshold: float = 0.90
    backbone: str = "resnet50"
    head_width: int = 512
    input_resolution: int | None = None
    seed: int = 0


# multi-dataset experiment grid: exploration (CP*) and refinement (FT*) rows
EXPERIMENT_PRESETS = {
    "CP1": FinetuneConfig(name="CP1", base_checkpoint=None, iterations=695000,
                          batch_size=128, learning_rate=1.0, frozen_fraction=0.50,
                          hard_sample_size=None, draw_strategy="uniform"),
    "CP2": FinetuneConfig(name="CP2", base_checkpoint=None, iterations=885000,
                          batch_size=128, learning_rate=1.0, frozen_fraction=0.50,
                          hard_sample_size=None, draw_strategy="uniform"),
    "FT1": FinetuneConfig(name="FT1", base_checkpoint="CP1", iterations=11001,
                          batch_size=32, learning_rate=0.001, frozen_fraction=0.90,
                          hard_sample_size=16, draw_strategy="stratified"),
    "FT2": FinetuneConfig(name="FT2", base_checkpoint="CP1", iterations=11251,
                          batch_size=32, learning_rate=0.01, frozen_fraction=0.80,
                          hard_sample_size=32, draw_strategy="stratified"),
    "FT3": FinetuneConfig(name="FT3", base_checkpoint="CP2", iterations=14501,
                          batch_size=32, learning_rate=0.01, frozen_fraction=0.50,
                          hard_sample_size=10, draw_strategy="stratified"),
}


def finetune_preset(name: str, **overrides) -> FinetuneConfig:
    return replace(EXPERIMENT_PRESETS[name], **overrides)


@dataclass
class TrainingRun:
    config: FinetuneConfig
    loss_trace: list = field(default_factory=list)        # (step, loss)
    precision_trace: list = field(default_factory=list)   # (step, precision)
    checkpoints: list = field(default_factory=list)       # {step, path, precision}
    pair_counts: dict = field(default_factory=dict)       # dataset_id -> pairs drawn

    def best_checkpoint(self):
        if not self.checkpoints:
            return None
        return max(self.checkpoints, key=lambda c: (c["precision"], c["step"]))


def freeze_fraction(model: VerifierModel, p: float) -> VerifierModel:
    """Freeze the first floor(p * L) of the backbone's L parameterized layers.

    The head never counts toward L and always stays trainable. p=0 leaves
    everything trainable; p=1 trains only the head.
    """
    if not 0.0 <= p <= 1.0:
        raise DomainError(f"frozen fraction must lie in [0, 1], got {p}")
    layers = parameterized_layers(model.backbone)
    cutoff = math.floor(p * len(layers))
    for i, layer in enumerate(layers):
        layer.set_frozen(i < cutoff)
    for layer in model.head_layers():
        layer.set_frozen(False)
    model.frozen_fraction = p
    return model


def _train_step(model: VerifierModel, refs, probes, labels, optimizer):
    """One BCE step over a stacked (references + probes) batch."""
    x = np.concatenate([model.preprocess_batch(refs), model.preprocess_batch(probes)])
    n = len(refs)
    emb = model.backbone.forward(x, train=True)
    e_ref, e_probe = emb[:n], emb[n:]
    sign = np.sign(e_ref - e_probe)
    diff = np.abs(e_ref - e_probe)
    hidden = sigmoid(model.head_fc.forward(diff))
    logits = model.head_out.forward(hidden).ravel()
    loss, dlogits = bce_with_logits(logits, labels)

    optimizer.zero_grad()
    dhidden = model.head_out.backward(dlogits[:, None])
    dhidden_pre = dhidden * hidden * (1.0 - hidden)
    ddiff = model.head_fc.backward(dhidden_pre)
    demb = np.concatenate([ddiff * sign, -ddiff * sign])
    model.backbone.backward(demb)
    optimizer.step()
    return loss


def finetune_supervised(
    model: VerifierModel,
    config: FinetuneConfig,
    train_source: PairSource,
    store: ImageStore,
    val_source: PairSource | None = None,
    run_dir: str | None = None,
) -> TrainingRun:
    """Run the supervised pair-training loop; returns the run record.

    When run_dir is given it receives a frozen config snapshot, a
    line-delimited step/loss/precision log and every retained checkpoint,
    named by step.
    """
    if config.base_checkpoint and os.path.exists(str(config.base_checkpoint)):
        load_backbone_weights(model, config.base_checkpoint)
    freeze_fraction(model, config.frozen_fraction)
    optimizer = SGD(model.all_parameters(), lr=config.learning_rate)
    strategy = train_source.strategy(config.draw_strategy)
    draw_rng = spawn_rng(config.seed, "finetune", config.name, "draw")
    run = TrainingRun(config=config)
    run.pair_counts = {d: 0 for d in train_source.dataset_ids}

    log_fh = None
    if run_dir is not None:
        os.makedirs(run_dir, exist_ok=True)
        with open(os.path.join(run_dir, "config.json"), "w", encoding="utf-8") as fh:
            json.dump(asdict(config), fh, indent=2)
        log_fh = open(os.path.join(run_dir, "train_log.csv"), "w", encoding="utf-8")
        log_fh.write("step,loss,precision\n")

    def mining_scorer():
        def score(dataset_id, ref_image_id, probe_image_id):
            ref = store.load(dataset_id, ref_image_id)
            probe = store.load(dataset_id, probe_image_id)
            return model.similarity(ref, probe, TAP_FINAL)

        return score

    try:
        for step in range(1, config.iterations + 1):
            refs, probes, labels = [], [], []
            for _ in range(config.batch_size):
                if config.hard_sample_size and draw_rng.random() >= config.authentic_probability:
                    dataset_id = choose_dataset(strategy, draw_rng)
                    identity = _pick_identity(train_source, dataset_id, draw_rng)
                    pair = mine_hard_imposter(
                        identity,
                        config.hard_sample_size,
                        mining_scorer(),
                        train_source,
                        draw_rng,
                        dataset_id=dataset_id,
                    )
                else:
                    pair = draw_training_pair(
                        train_source, strategy, config.authentic_probability, draw_rng
                    )
                refs.append(store.load(pair.dataset_id, pair.reference))
                probes.append(store.load(pair.dataset_id, pair.probe))
                labels.append(1.0 if pair.label == LABEL_AUTHENTIC else 0.0)
                run.pair_counts[pair.dataset_id] += 1
            loss = _train_step(model, refs, probes, np.array(labels), optimizer)
            run.loss_trace.append((step, loss))
            model.step = step

            at_cadence = step % config.validation_interval == 0 or step == config.iterations
            precision_text = ""
            if val_source is not None and at_cadence:
                scorer = model_scorer(model, TAP_FINAL, store)
                result = validation_precision(
                    scorer,
                    val_source,
                    steps=config.validation_steps,
                    imposters_per_step=config.validation_imposters,
                    rng=spawn_rng(config.seed, "finetune", config.name, "val", step),
                )
                run.precision_trace.append((step, result.precision))
                precision_text = f"{result.precision:.4f}"
                if result.precision >= config.retention_threshold and run_dir is not None:
                    path = save_checkpoint(
                        model,
                        os.path.join(run_dir, f"checkpoint_step{step}.npz"),
                        step=step,
                        lineage={"run": config.name,
                                 "base": str(config.base_checkpoint or "-")},
                    )
                    run.checkpoints.append(
                        {"step": step, "path": path, "precision": result.precision}
                    )
            if log_fh is not None:
                log_fh.write(f"{step},{loss:.6f},{precision_text}\n")
    finally:
        if log_fh is not None:
            log_fh.close()
    return run


def _pick_identity(source: PairSource, dataset_id: str, rng) -> str:
    from .errors import ExhaustedDataset

    identities = source.identities_with_unmasked(dataset_id)
    if not identities:
        raise ExhaustedDataset(f"no reference identities in {dataset_id!r}")
    return identities[int(rng.integers(len(identities)))]


def multi_dataset_finetune(
    model: VerifierModel,
    config: FinetuneConfig,
    indexes: dict,
    store: ImageStore,
    train_identities: dict | None = None,
    val_identities: dict | None = None,
    run_dir: str | None = None,
) -> TrainingRun:
    """Finetune across several datasets at once.

    Dataset choice per drawn pair follows config.draw_strategy; with a
    single dataset this degenerates to plain finetune_supervised.
    """
    train_source = PairSource(indexes, train_identities)
    val_source = PairSource(indexes, val_identities) if val_identities is not None else None
    return finetune_supervised(model, config, train_source, store, val_source, run_dir)
