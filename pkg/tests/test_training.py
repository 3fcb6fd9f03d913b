import os

import numpy as np
import pytest
from oracles import central_difference_gradients

from conftest import make_toy_index
from maskmatch.dataset_registry import ImageStore
from maskmatch.errors import DomainError
from maskmatch.nn import SGD, bce_with_logits, parameterized_layers, sigmoid
from maskmatch.pair_protocol import PairSource
from maskmatch.training import (
    EXPERIMENT_PRESETS,
    FinetuneConfig,
    _train_step,
    finetune_preset,
    finetune_supervised,
    freeze_fraction,
    multi_dataset_finetune,
)
from maskmatch.verifier import VerifierModel


def random_images(rng, count, size=16):
    return [rng.integers(0, 256, size=(size, size, 3), dtype=np.uint8) for _ in range(count)]


def tiny_verifier(seed=0):
    return VerifierModel.from_preset("tiny_cnn", seed=seed, input_resolution=16, head_width=8)


class FakeStore:
    """ImageStore stand-in that renders deterministic per-image noise."""

    def __init__(self, indexes, size=16):
        self.indexes = dict(indexes)
        self.size = size

    def load(self, dataset_id, image_id):
        seed = abs(hash((dataset_id, image_id))) % (2**32)
        gen = np.random.default_rng(seed)
        return gen.integers(0, 256, size=(self.size, self.size, 3), dtype=np.uint8)

    def record(self, dataset_id, image_id):
        return self.indexes[dataset_id].record(image_id)


class TestFreezeFraction:
    def test_domain(self):
        model = tiny_verifier()
        with pytest.raises(DomainError):
            freeze_fraction(model, -0.1)
        with pytest.raises(DomainError):
            freeze_fraction(model, 1.2)

    def test_zero_all_trainable(self):
        model = freeze_fraction(tiny_verifier(), 0.0)
        assert all(not p.frozen for p in model.all_parameters())

    def test_one_only_head_trainable(self):
        model = freeze_fraction(tiny_verifier(), 1.0)
        assert all(p.frozen for p in model.backbone.parameters())
        for layer in model.head_layers():
            assert all(not p.frozen for p in layer.parameters())

    def test_half_split_and_bit_identical_after_steps(self, rng):
        model = freeze_fraction(tiny_verifier(), 0.5)
        layers = parameterized_layers(model.backbone)
        cutoff = len(layers) // 2
        frozen_bytes = [
            [p.value.tobytes() for p in layer.parameters()] for layer in layers[:cutoff]
        ]
        later_before = [
            [p.value.copy() for p in layer.parameters()] for layer in layers[cutoff:]
        ]
        optimizer = SGD(model.all_parameters(), lr=0.05)
        for _ in range(10):
            refs = random_images(rng, 4)
            probes = random_images(rng, 4)
            labels = np.array([1.0, 0.0, 1.0, 0.0])
            _train_step(model, refs, probes, labels, optimizer)
        for layer, before in zip(layers[:cutoff], frozen_bytes):
            for p, b in zip(layer.parameters(), before):
                assert p.value.tobytes() == b
        changed = any(
            not np.array_equal(p.value, b)
            for layer, befores in zip(layers[cutoff:], later_before)
            for p, b in zip(layer.parameters(), befores)
        )
        assert changed


class TestGradientCorrectness:
    def test_bce_gradients_match_finite_differences(self):
        # 20-parameter verifier: Dense(12->1) backbone + Dense(1->2) + Dense(2->1)
        model = VerifierModel.from_preset("toy", seed=6, input_resolution=2, head_width=2)
        params = model.all_parameters()
        assert sum(p.value.size for p in params) == 20

        gen = np.random.default_rng(11)
        refs = random_images(gen, 3, size=2)
        probes = random_images(gen, 3, size=2)
        labels = np.array([1.0, 0.0, 1.0])

        def loss_only():
            x = np.concatenate(
                [model.preprocess_batch(refs), model.preprocess_batch(probes)]
            )
            emb = model.backbone.forward(x, train=True)
            e_ref, e_probe = emb[:3], emb[3:]
            diff = np.abs(e_ref - e_probe)
            hidden = sigmoid(model.head_fc.forward(diff))
            logits = model.head_out.forward(hidden).ravel()
            return bce_with_logits(logits, labels)[0]

        # |difference| must be safely nonzero so the subgradient is stable
        x = np.concatenate([model.preprocess_batch(refs), model.preprocess_batch(probes)])
        emb = model.backbone.forward(x, train=True)
        assert np.abs(emb[:3] - emb[3:]).min() > 1e-4

        optimizer = SGD(params, lr=0.0)
        _train_step(model, refs, probes, labels, optimizer)
        numeric = central_difference_gradients(loss_only, params)
        for p, num in zip(params, numeric):
            scale = max(np.abs(num).max(), 1e-8)
            assert np.abs(p.grad - num).max() / scale < 1e-4, p.name


class TestFinetune:
    def _setup(self, n_identities=8, datasets=("tr",)):
        indexes = {
            ds: make_toy_index(dataset_id=ds, n_identities=n_identities,
                               unmasked_per_identity=3, masked_per_identity=3)
            for ds in datasets
        }
        store = FakeStore(indexes)
        return indexes, store

    def test_zero_learning_rate_keeps_parameters(self):
        indexes, store = self._setup()
        model = tiny_verifier()
        before = [p.value.copy() for p in model.all_parameters()]
        config = FinetuneConfig(name="t", iterations=5, batch_size=4, learning_rate=0.0,
                                frozen_fraction=0.0, validation_interval=100, seed=1,
                                backbone="tiny_cnn", input_resolution=16, head_width=8)
        finetune_supervised(model, config, PairSource(indexes), store)
        for p, b in zip(model.all_parameters(), before):
            assert np.array_equal(p.value, b)

    def test_run_directory_artifacts(self, tmp_path):
        indexes, store = self._setup()
        model = tiny_verifier()
        config = FinetuneConfig(name="t", iterations=6, batch_size=4, learning_rate=0.05,
                                frozen_fraction=0.0, validation_interval=3,
                                validation_steps=10, retention_threshold=0.0, seed=1,
                                backbone="tiny_cnn", input_resolution=16, head_width=8)
        run = finetune_supervised(model, config, PairSource(indexes), store,
                                  PairSource(indexes), run_dir=str(tmp_path))
        assert (tmp_path / "config.json").exists()
        log = (tmp_path / "train_log.csv").read_text().strip().splitlines()
        assert log[0] == "step,loss,precision"
        assert len(log) == 7
        assert run.checkpoints, "threshold 0 must retain validation checkpoints"
        assert all(c["precision"] >= 0.0 for c in run.checkpoints)
        assert os.path.exists(run.checkpoints[0]["path"])

    def test_retention_threshold_filters(self, tmp_path):
        indexes, store = self._setup()
        model = tiny_verifier()
        config = FinetuneConfig(name="t", iterations=4, batch_size=4, learning_rate=0.05,
                                frozen_fraction=0.0, validation_interval=2,
                                validation_steps=10, retention_threshold=1.01, seed=1,
                                backbone="tiny_cnn", input_resolution=16, head_width=8)
        run = finetune_supervised(model, config, PairSource(indexes), store,
                                  PairSource(indexes), run_dir=str(tmp_path))
        assert run.checkpoints == []
        assert run.precision_trace  # measured but never retained

    def test_loss_trace_and_checkpoint_steps_increase(self, tmp_path):
        indexes, store = self._setup()
        model = tiny_verifier()
        config = FinetuneConfig(name="t", iterations=6, batch_size=4, learning_rate=0.05,
                                frozen_fraction=0.5, validation_interval=2,
                                validation_steps=5, retention_threshold=0.0, seed=2,
                                backbone="tiny_cnn", input_resolution=16, head_width=8)
        run = finetune_supervised(model, config, PairSource(indexes), store,
                                  PairSource(indexes), run_dir=str(tmp_path))
        steps = [c["step"] for c in run.checkpoints]
        assert steps == sorted(steps) and len(set(steps)) == len(steps)
        assert [s for s, _ in run.loss_trace] == list(range(1, 7))

    def test_multi_dataset_stratified_counts(self):
        indexes, store = self._setup(datasets=("a", "b", "c", "d"))
        model = tiny_verifier()
        config = FinetuneConfig(name="t", iterations=40, batch_size=16, learning_rate=0.0,
                                frozen_fraction=0.0, draw_strategy="stratified",
                                validation_interval=10_000, seed=3,
                                backbone="tiny_cnn", input_resolution=16, head_width=8)
        run = multi_dataset_finetune(model, config, indexes, store)
        counts = np.array([run.pair_counts[d] for d in sorted(run.pair_counts)])
        total = counts.sum()
        assert total == 40 * 16
        expected = total / 4
        sigma = np.sqrt(total * 0.25 * 0.75)
        assert np.all(np.abs(counts - expected) <= 3 * sigma)

    def test_multi_dataset_uniform_counts_proportional(self):
        indexes = {
            "small": make_toy_index(dataset_id="small", n_identities=5,
                                    unmasked_per_identity=2, masked_per_identity=2),
            "large": make_toy_index(dataset_id="large", n_identities=15,
                                    unmasked_per_identity=2, masked_per_identity=2),
        }
        store = FakeStore(indexes)
        model = tiny_verifier()
        config = FinetuneConfig(name="t", iterations=40, batch_size=16, learning_rate=0.0,
                                frozen_fraction=0.0, draw_strategy="uniform",
                                validation_interval=10_000, seed=5,
                                backbone="tiny_cnn", input_resolution=16, head_width=8)
        run = multi_dataset_finetune(model, config, indexes, store)
        total = 40 * 16
        p_small = 0.25  # 20 of 80 view images
        sigma = np.sqrt(total * p_small * (1 - p_small))
        assert abs(run.pair_counts["small"] - total * p_small) <= 3 * sigma

    def test_small_corpus_beats_random_baseline(self, tmp_path):
        # 4-identity rendered corpus, 200 steps: ranking precision must end
        # strictly above the 1-in-20 random baseline
        from maskmatch.evaluation import model_scorer, validation_precision
        from maskmatch.face_geometry import MaskConfig, mask_dataset
        from maskmatch.synthetic import build_corpus

        index = build_corpus(tmp_path / "c", "quad", 4, 6, seed=19, size=64)
        masked, _ = mask_dataset(index, MaskConfig(), str(tmp_path / "m"))
        merged = index.merged_with(masked)
        source = PairSource({"quad": merged})
        store = ImageStore({"quad": merged})
        model = VerifierModel.from_preset("tiny_cnn", seed=3, input_resolution=32,
                                          head_width=32)
        config = FinetuneConfig(name="quad", iterations=200, batch_size=8,
                                learning_rate=0.2, frozen_fraction=0.0,
                                validation_interval=10_000, seed=21,
                                backbone="tiny_cnn", input_resolution=32, head_width=32)
        finetune_supervised(model, config, source, store)
        result = validation_precision(
            model_scorer(model, "final_output", store), source, steps=100,
            rng=np.random.default_rng(2),
        )
        assert result.precision > 0.05

    def test_hard_mining_path_runs(self):
        indexes, store = self._setup()
        model = tiny_verifier()
        config = FinetuneConfig(name="t", iterations=3, batch_size=4, learning_rate=0.01,
                                frozen_fraction=0.0, hard_sample_size=3,
                                validation_interval=10_000, seed=4,
                                backbone="tiny_cnn", input_resolution=16, head_width=8)
        run = finetune_supervised(model, config, PairSource(indexes), store)
        assert len(run.loss_trace) == 3


class TestPresets:
    def test_exploration_rows(self):
        cp1, cp2 = EXPERIMENT_PRESETS["CP1"], EXPERIMENT_PRESETS["CP2"]
        assert (cp1.iterations, cp1.batch_size, cp1.learning_rate) == (695000, 128, 1.0)
        assert (cp2.iterations, cp2.batch_size, cp2.learning_rate) == (885000, 128, 1.0)
        for cp in (cp1, cp2):
            assert cp.frozen_fraction == 0.50
            assert cp.hard_sample_size is None
            assert cp.draw_strategy == "uniform"
            assert cp.base_checkpoint is None

    def test_refinement_rows(self):
        ft1 = EXPERIMENT_PRESETS["FT1"]
        assert (ft1.base_checkpoint, ft1.iterations, ft1.batch_size) == ("CP1", 11001, 32)
        assert (ft1.learning_rate, ft1.frozen_fraction) == (0.001, 0.90)
        assert ft1.hard_sample_size == 16 and ft1.draw_strategy == "stratified"
        ft2 = EXPERIMENT_PRESETS["FT2"]
        assert (ft2.base_checkpoint, ft2.iterations, ft2.learning_rate) == ("CP1", 11251, 0.01)
        assert ft2.frozen_fraction == 0.80 and ft2.hard_sample_size == 32
        ft3 = EXPERIMENT_PRESETS["FT3"]
        assert (ft3.base_checkpoint, ft3.iterations, ft3.learning_rate) == ("CP2", 14501, 0.01)
        assert ft3.frozen_fraction == 0.50 and ft3.hard_sample_size == 10

    def test_preset_override(self):
        config = finetune_preset("FT1", iterations=10, backbone="tiny_cnn")
        assert config.iterations == 10
        assert config.hard_sample_size == 16

    def test_retention_default(self):
        assert FinetuneConfig().retention_threshold == 0.90
        assert FinetuneConfig().validation_interval == 2500
        assert FinetuneConfig().validation_steps == 400
        assert FinetuneConfig().validation_imposters == 19
