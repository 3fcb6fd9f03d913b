import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from oracles import brute_force_curve, brute_force_eer, brute_force_frr100, pairwise_auc

from conftest import make_toy_index
from maskmatch.errors import EmptyPartition, InsufficientIdentities
from maskmatch.evaluation import (
    ScoreSet,
    compute_metrics,
    eer,
    eer_with_bracket,
    far_frr_curve,
    frr100,
    frr100_with_flag,
    read_metrics,
    roc_auc,
    validation_precision,
    write_metrics,
)
from maskmatch.pair_protocol import PairSource

AUTH4 = [0.9, 0.8, 0.7, 0.4]
IMP4 = [0.6, 0.5, 0.3, 0.2]


def scores(a, i):
    return ScoreSet(np.asarray(a, float), np.asarray(i, float))


class TestCurve:
    def test_separable_point(self):
        # the grid row at 0.9 plays the role of "threshold 0.5": no errors
        curve = far_frr_curve(scores([0.9], [0.1]))
        t09 = curve[curve[:, 0] == 0.9][0]
        assert t09[1] == 0.0 and t09[2] == 0.0

    def test_sentinels(self):
        curve = far_frr_curve(scores(AUTH4, IMP4))
        assert curve[0, 1] == 1.0 and curve[0, 2] == 0.0
        assert curve[-1, 1] == 0.0 and curve[-1, 2] == 1.0

    def test_matches_brute_force_fixture(self):
        curve = far_frr_curve(scores(AUTH4, IMP4))
        oracle = brute_force_curve(AUTH4, IMP4)
        assert np.allclose(curve, oracle, atol=1e-12)

    def test_monotonicity(self, rng):
        s = scores(rng.random(40), rng.random(37))
        curve = far_frr_curve(s)
        assert np.all(np.diff(curve[:, 1]) <= 0)
        assert np.all(np.diff(curve[:, 2]) >= 0)

    def test_empty_partition(self):
        with pytest.raises(EmptyPartition):
            far_frr_curve(ScoreSet(np.array([]), np.array([0.1])))


class TestEer:
    def test_perfectly_separated(self):
        assert eer(scores([0.9, 0.8], [0.2, 0.1])) == 0.0

    def test_hand_fixture(self):
        assert eer(scores(AUTH4, IMP4)) == pytest.approx(0.25, abs=1e-12)

    def test_bracket_reported(self):
        value, (lo, hi) = eer_with_bracket(scores(AUTH4, IMP4))
        assert value == pytest.approx(0.25)
        assert lo[0] <= hi[0]

    def test_same_distribution_monte_carlo(self):
        gen = np.random.default_rng(99)
        s = scores(gen.random(10_000), gen.random(10_000))
        assert eer(s) == pytest.approx(0.5, abs=0.02)
        assert roc_auc(s) == pytest.approx(0.5, abs=0.02)


class TestFrr100:
    def test_perfectly_separated(self):
        assert frr100(scores([0.9, 0.8], [0.2, 0.1])) == 0.0

    def test_half_rejection_fixture(self):
        gen = np.random.default_rng(5)
        imp = gen.uniform(0.0, 0.5, size=100)
        value = frr100(scores([0.9, 0.2], imp))
        assert value == pytest.approx(0.5)
        assert value == pytest.approx(brute_force_frr100([0.9, 0.2], imp))

    def test_infeasible_returns_one_with_flag(self):
        value, feasible = frr100_with_flag(scores([0.7], [0.7] * 50))
        assert value == 1.0 and feasible is False


class TestAuc:
    def test_separated(self):
        assert roc_auc(scores([0.9, 0.8], [0.2, 0.1])) == 1.0

    def test_identical_multisets(self):
        assert roc_auc(scores([0.3, 0.7, 0.5], [0.3, 0.7, 0.5])) == 0.5

    def test_pairwise_oracle_fixture(self, rng):
        a, i = rng.random(120), rng.random(80)
        assert roc_auc(scores(a, i)) == pytest.approx(pairwise_auc(a, i), abs=1e-9)


@st.composite
def score_sets(draw):
    a = draw(st.lists(st.integers(0, 1000), min_size=1, max_size=60))
    i = draw(st.lists(st.integers(0, 1000), min_size=1, max_size=60))
    # integer grids force plenty of ties across partitions
    return np.array(a) / 1000.0, np.array(i) / 1000.0


@settings(max_examples=60, deadline=None)
@given(score_sets())
def test_metrics_agree_with_brute_force(data):
    a, i = data
    s = scores(a, i)
    assert np.allclose(far_frr_curve(s), brute_force_curve(a, i), atol=1e-9)
    assert eer(s) == pytest.approx(brute_force_eer(a, i), abs=1e-9)
    assert frr100(s) == pytest.approx(brute_force_frr100(a, i), abs=1e-9)
    assert roc_auc(s) == pytest.approx(pairwise_auc(a, i), abs=1e-9)


@settings(max_examples=30, deadline=None)
@given(score_sets())
def test_scale_free_ranking(data):
    a, i = data
    before_auc = roc_auc(scores(a, i))
    # strictly increasing transforms preserve ranks exactly
    for transform in (lambda x: x**2, np.sqrt, lambda x: (x + 1.0) / 3.0):
        after_auc = roc_auc(scores(transform(a), transform(i)))
        assert after_auc == pytest.approx(before_auc, abs=1e-12)


class TestValidationPrecision:
    def _view(self):
        return PairSource.for_index(make_toy_index(n_identities=8))

    def test_oracle_model(self):
        scorer = lambda ref, probe: 1.0 if ref.identity_id == probe.identity_id else 0.0
        result = validation_precision(scorer, self._view(), steps=50,
                                      rng=np.random.default_rng(0))
        assert result.precision == 1.0

    def test_constant_model_fails_on_ties(self):
        scorer = lambda ref, probe: 0.5
        result = validation_precision(scorer, self._view(), steps=50,
                                      rng=np.random.default_rng(0))
        assert result.precision == 0.0

    def test_random_model_near_five_percent(self):
        gen = np.random.default_rng(7)
        scorer = lambda ref, probe: gen.random()
        result = validation_precision(scorer, self._view(), steps=400,
                                      rng=np.random.default_rng(1))
        assert 0.015 <= result.precision <= 0.085

    def test_deterministic_for_fixed_seed(self):
        def scorer(ref, probe):
            return (hash((ref.image_id, probe.image_id)) % 997) / 997.0

        a = validation_precision(scorer, self._view(), steps=100,
                                 rng=np.random.default_rng(42))
        b = validation_precision(scorer, self._view(), steps=100,
                                 rng=np.random.default_rng(42))
        assert a == b

    def test_insufficient_identities(self):
        view = PairSource.for_index(make_toy_index(n_identities=1))
        with pytest.raises(InsufficientIdentities):
            validation_precision(lambda r, p: 1.0, view, steps=5,
                                 rng=np.random.default_rng(0))

    def test_rank_invariance_under_transform(self):
        def scorer(ref, probe):
            return (hash((ref.image_id, probe.image_id)) % 997) / 997.0

        def squashed(ref, probe):
            return scorer(ref, probe) ** 3

        a = validation_precision(scorer, self._view(), steps=120,
                                 rng=np.random.default_rng(9))
        b = validation_precision(squashed, self._view(), steps=120,
                                 rng=np.random.default_rng(9))
        assert a.precision == b.precision


class TestScorePairs:
    class ArrayStore:
        def __init__(self, table):
            self.table = table

        def load(self, dataset_id, image_id):
            return self.table[image_id]

    def _model(self):
        from maskmatch.verifier import VerifierModel

        return VerifierModel.from_preset("tiny_cnn", seed=1, input_resolution=16,
                                         head_width=8)

    def _pair_list(self, pairs):
        from maskmatch.pair_protocol import BenchmarkPairList, PairSpec

        return BenchmarkPairList(
            tuple(PairSpec(*p) for p in pairs), seed=0, dataset_id="toy"
        )

    def test_empty_list_gives_empty_scores(self):
        from maskmatch.evaluation import score_pairs

        scores = score_pairs(self._model(), self._pair_list([]), self.ArrayStore({}))
        assert scores.authentic.size == 0 and scores.imposter.size == 0
        with pytest.raises(EmptyPartition):
            far_frr_curve(scores)

    def test_identical_images_score_one_at_bottleneck(self):
        from maskmatch.evaluation import score_pairs

        image = np.random.default_rng(0).integers(0, 256, (16, 16, 3), dtype=np.uint8)
        store = self.ArrayStore({"ref": image, "probe": image})
        pair_list = self._pair_list([("ref", "probe", "authentic", "toy")])
        scores = score_pairs(self._model(), pair_list, store, "bottleneck2048")
        assert scores.authentic.tolist() == [1.0]

    def test_rescoring_is_identical(self):
        from maskmatch.evaluation import score_pairs

        gen = np.random.default_rng(5)
        table = {k: gen.integers(0, 256, (16, 16, 3), dtype=np.uint8)
                 for k in ("a", "b", "c", "d")}
        store = self.ArrayStore(table)
        pair_list = self._pair_list([
            ("a", "b", "authentic", "toy"), ("c", "d", "imposter", "toy"),
        ])
        model = self._model()
        first = score_pairs(model, pair_list, store, "fc512")
        second = score_pairs(model, pair_list, store, "fc512")
        assert np.array_equal(first.authentic, second.authentic)
        assert np.array_equal(first.imposter, second.imposter)

    def test_missing_image_reports_pair_index(self):
        from maskmatch.errors import MissingImage
        from maskmatch.evaluation import score_pairs

        image = np.zeros((16, 16, 3), dtype=np.uint8)
        store = self.ArrayStore({"a": image})
        pair_list = self._pair_list([
            ("a", "a", "authentic", "toy"), ("a", "ghost", "imposter", "toy"),
        ])
        with pytest.raises(MissingImage) as err:
            score_pairs(self._model(), pair_list, store, "bottleneck2048")
        assert err.value.pair_index == 1


class TestReports:
    def test_metrics_file_round_trip(self, tmp_path):
        report = compute_metrics(scores(AUTH4, IMP4),
                                 {"dataset_id": "toy", "model_id": "m", "tap": "t",
                                  "seed": 3})
        path = tmp_path / "metrics.txt"
        write_metrics([report], path)
        [parsed] = read_metrics(path)
        assert parsed["eer"] == pytest.approx(report.eer)
        assert parsed["frr100"] == pytest.approx(report.frr100)
        assert parsed["auc"] == pytest.approx(report.auc)
        assert parsed["dataset_id"] == "toy"

    def test_emit_report_writes_plots(self, tmp_path):
        from maskmatch.evaluation import emit_report

        report = compute_metrics(scores(AUTH4, IMP4), {"dataset_id": "toy"})
        paths = emit_report(report, tmp_path)
        for p in paths.values():
            assert (tmp_path / p.split("/")[-1]).exists()
