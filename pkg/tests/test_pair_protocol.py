import itertools

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.stats import chisquare

from conftest import make_toy_index
from maskmatch.dataset_registry import VARIANT_MASKED, VARIANT_UNMASKED
from maskmatch.errors import ExhaustedDataset, InsufficientPairs, PairListFormatError
from maskmatch.pair_protocol import (
    LABEL_AUTHENTIC,
    LABEL_IMPOSTER,
    BenchmarkPairList,
    DrawStrategy,
    PairSource,
    PairSpec,
    choose_dataset,
    draw_training_pair,
    export_pair_list,
    generate_benchmark_pairs,
    import_pair_list,
    mine_hard_imposter,
)


def two_dataset_source(sizes=(4, 8)):
    indexes = {}
    for k, n in enumerate(sizes):
        index = make_toy_index(dataset_id=f"ds{k}", n_identities=n)
        indexes[f"ds{k}"] = index
    return PairSource(indexes)


class TestChooseDataset:
    def test_single_dataset_certain(self, rng):
        strategy = DrawStrategy.from_sizes("uniform", {"only": 10})
        assert all(choose_dataset(strategy, rng) == "only" for _ in range(20))

    def test_stratified_equal_weights(self):
        strategy = DrawStrategy.from_sizes("stratified", {"a": 1, "b": 100, "c": 5, "d": 9})
        assert strategy.weights == (0.25, 0.25, 0.25, 0.25)

    def test_uniform_proportional_chi_square(self, rng):
        strategy = DrawStrategy.from_sizes("uniform", {"a": 100, "b": 300})
        draws = [choose_dataset(strategy, rng) for _ in range(10_000)]
        observed = [draws.count("a"), draws.count("b")]
        result = chisquare(observed, f_exp=[2500, 7500])
        assert result.pvalue > 0.001

    def test_stratified_chi_square(self, rng):
        strategy = DrawStrategy.from_sizes("stratified", {"a": 10, "b": 1000, "c": 77, "d": 3})
        draws = [choose_dataset(strategy, rng) for _ in range(10_000)]
        observed = [draws.count(k) for k in strategy.dataset_ids]
        result = chisquare(observed, f_exp=[2500.0] * 4)
        assert result.pvalue > 0.001


class TestDrawTrainingPair:
    def test_always_authentic(self, rng):
        source = two_dataset_source()
        strategy = source.strategy("uniform")
        for _ in range(50):
            pair = draw_training_pair(source, strategy, 1.0, rng)
            assert pair.label == LABEL_AUTHENTIC
            index = source.index(pair.dataset_id)
            assert index.record(pair.reference).identity_id == index.record(pair.probe).identity_id

    def test_always_imposter_and_intra_dataset(self, rng):
        source = two_dataset_source()
        strategy = source.strategy("stratified")
        for _ in range(50):
            pair = draw_training_pair(source, strategy, 0.0, rng)
            assert pair.label == LABEL_IMPOSTER
            index = source.index(pair.dataset_id)
            ref, probe = index.record(pair.reference), index.record(pair.probe)
            assert ref.identity_id != probe.identity_id
            assert ref.dataset_id == probe.dataset_id == pair.dataset_id
            assert ref.variant == VARIANT_UNMASKED and probe.variant == VARIANT_MASKED

    def test_label_frequencies_within_three_sigma(self, rng):
        source = PairSource({"one": make_toy_index(dataset_id="one", n_identities=10)})
        strategy = source.strategy("uniform")
        n = 10_000
        authentic = sum(
            draw_training_pair(source, strategy, 0.5, rng).label == LABEL_AUTHENTIC
            for _ in range(n)
        )
        sigma = np.sqrt(n * 0.25)
        assert abs(authentic - n / 2) <= 3 * sigma

    def test_exhausted_single_identity(self, rng):
        source = PairSource({"solo": make_toy_index(dataset_id="solo", n_identities=1)})
        with pytest.raises(ExhaustedDataset):
            draw_training_pair(source, source.strategy("uniform"), 0.0, rng)


class TestMining:
    def test_single_candidate(self, rng):
        source = two_dataset_source()
        scorer = lambda ds, a, b: 0.42
        pair = mine_hard_imposter("p00", 1, scorer, source, rng, dataset_id="ds0")
        assert pair.label == LABEL_IMPOSTER

    def test_argmax_candidate_wins(self, rng):
        source = two_dataset_source()
        seen = []

        def scorer(ds, ref, probe):
            seen.append(probe)
            return {0: 0.1, 1: 0.9, 2: 0.4}[len(seen) - 1]

        pair = mine_hard_imposter("p00", 3, scorer, source, rng, dataset_id="ds0")
        assert pair.probe == seen[1]

    def test_all_equal_takes_first(self, rng):
        source = two_dataset_source()
        seen = []

        def scorer(ds, ref, probe):
            seen.append(probe)
            return 0.5

        pair = mine_hard_imposter("p01", 5, scorer, source, rng, dataset_id="ds0")
        assert pair.probe == seen[0]

    def test_randomized_argmax_trials(self):
        source = two_dataset_source(sizes=(6, 6))
        gen = np.random.default_rng(123)
        for trial in range(100):
            seen = []
            values = {}

            def scorer(ds, ref, probe, values=values, seen=seen):
                seen.append(probe)
                values[len(seen) - 1] = float(gen.integers(0, 5)) / 4.0
                return values[len(seen) - 1]

            count = int(gen.integers(1, 9))
            pair = mine_hard_imposter(
                "p02", count, scorer, source, np.random.default_rng(trial),
                dataset_id="ds1",
            )
            best = max(values.values())
            first_best = min(i for i, v in values.items() if v == best)
            assert pair.probe == seen[first_best]


class TestBenchmarkPairs:
    def test_balance(self):
        index = make_toy_index(n_identities=10)
        pair_list = generate_benchmark_pairs(index, 100, seed=1)
        n_auth, n_imp = pair_list.counts()
        assert n_auth == n_imp == 50

    def test_no_duplicate_tuples(self, toy_index):
        pair_list = generate_benchmark_pairs(toy_index, 60, seed=2)
        tuples = [(p.reference, p.probe) for p in pair_list.pairs]
        assert len(set(tuples)) == len(tuples)

    def test_deterministic_files(self, toy_index, tmp_path):
        for name in ("a.csv", "b.csv"):
            pl = generate_benchmark_pairs(toy_index, 40, seed=7)
            export_pair_list(pl, tmp_path / name)
        assert (tmp_path / "a.csv").read_bytes() == (tmp_path / "b.csv").read_bytes()

    def test_small_universe_exhaustive_validity(self):
        index = make_toy_index(n_identities=2, unmasked_per_identity=2, masked_per_identity=2)
        pair_list = generate_benchmark_pairs(index, 4, seed=3)
        for pair in pair_list.pairs:
            ref = index.record(pair.reference)
            probe = index.record(pair.probe)
            assert ref.variant == VARIANT_UNMASKED
            assert probe.variant == VARIANT_MASKED
            same = ref.identity_id == probe.identity_id
            assert same == (pair.label == LABEL_AUTHENTIC)

    def test_insufficient(self):
        index = make_toy_index(n_identities=2, unmasked_per_identity=1, masked_per_identity=1)
        # authentic universe is 2, imposter universe is 2; 10 pairs impossible
        with pytest.raises(InsufficientPairs):
            generate_benchmark_pairs(index, 10, seed=0)

    def test_odd_count_rejected(self, toy_index):
        with pytest.raises(ValueError):
            generate_benchmark_pairs(toy_index, 7, seed=0)


class TestPairListFiles:
    def test_round_trip(self, toy_index, tmp_path):
        pl = generate_benchmark_pairs(toy_index, 20, seed=5)
        path = tmp_path / "pairs.csv"
        export_pair_list(pl, path)
        assert import_pair_list(path, toy_index) == pl

    def test_empty_list_round_trip(self, tmp_path):
        empty = BenchmarkPairList((), seed=1, dataset_id="toy")
        path = tmp_path / "pairs.csv"
        export_pair_list(empty, path)
        loaded = import_pair_list(path)
        assert loaded.pairs == ()
        assert loaded.seed == 1

    def test_imposter_sharing_identity_rejected(self, toy_index, tmp_path):
        path = tmp_path / "pairs.csv"
        path.write_text(
            "# seed=1 generator=test\n"
            "reference_image_id,probe_image_id,label,dataset_id\n"
            "p00_u0,p00_m0,0,toy\n"
        )
        with pytest.raises(PairListFormatError) as err:
            import_pair_list(path, toy_index)
        assert err.value.line == 3

    def test_bad_label_rejected(self, tmp_path):
        path = tmp_path / "pairs.csv"
        path.write_text(
            "reference_image_id,probe_image_id,label,dataset_id\n"
            "a,b,maybe,toy\n"
        )
        with pytest.raises(PairListFormatError) as err:
            import_pair_list(path)
        assert err.value.line == 2

    def test_unknown_image_rejected(self, toy_index, tmp_path):
        path = tmp_path / "pairs.csv"
        path.write_text(
            "reference_image_id,probe_image_id,label,dataset_id\n"
            "nope,p01_m0,0,toy\n"
        )
        with pytest.raises(PairListFormatError):
            import_pair_list(path, toy_index)


class TestImposterUniverse:
    @settings(max_examples=28, deadline=None)
    @given(n=st.integers(2, 30))
    def test_quadratic_identity_pairs(self, n):
        index = make_toy_index(
            n_identities=n, unmasked_per_identity=1, masked_per_identity=1
        )
        source = PairSource.for_index(index)
        identities = source.identities(index.dataset_id)
        unordered = {
            frozenset((a, b))
            for a, b in itertools.product(identities, identities)
            if a != b
        }
        assert len(unordered) == n * (n - 1) // 2


class TestPairSpecInvariants:
    def test_bad_label(self):
        with pytest.raises(ValueError):
            PairSpec("a", "b", "friend", "ds")
