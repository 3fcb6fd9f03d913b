import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from conftest import make_toy_index
from maskmatch.dataset_registry import (
    VARIANT_MASKED,
    VARIANT_UNMASKED,
    DatasetIndex,
    ImageRecord,
    ImageStore,
    load_manifest,
    read_split,
    save_manifest,
    split_identities,
    split_lookup,
    stats,
    write_split,
)
from maskmatch.errors import DuplicateImageId, InsufficientIdentities, ManifestParseError


class TestManifest:
    def test_empty_file_is_error(self, tmp_path):
        path = tmp_path / "m.csv"
        path.write_text("")
        with pytest.raises(ManifestParseError):
            load_manifest(path)

    def test_header_only_gives_empty_index(self, tmp_path):
        path = tmp_path / "m.csv"
        path.write_text("image_id,identity_id,dataset_id,variant,path\n")
        index = load_manifest(path)
        assert len(index) == 0

    def test_duplicate_image_id(self, tmp_path):
        path = tmp_path / "m.csv"
        path.write_text(
            "image_id,identity_id,dataset_id,variant,path\n"
            "a,p,ds,unmasked,a.png\n"
            "a,q,ds,unmasked,b.png\n"
        )
        with pytest.raises(DuplicateImageId):
            load_manifest(path)

    def test_bad_row_reports_line_number(self, tmp_path):
        path = tmp_path / "m.csv"
        path.write_text(
            "image_id,identity_id,dataset_id,variant,path\n"
            "a,p,ds,unmasked,a.png\n"
            "b,p,ds,unmasked\n"
        )
        with pytest.raises(ManifestParseError) as err:
            load_manifest(path)
        assert err.value.line == 3

    def test_bad_variant_reports_line_number(self, tmp_path):
        path = tmp_path / "m.csv"
        path.write_text(
            "image_id,identity_id,dataset_id,variant,path\n"
            "a,p,ds,covered,a.png\n"
        )
        with pytest.raises(ManifestParseError) as err:
            load_manifest(path)
        assert err.value.line == 2

    def test_round_trip(self, tmp_path, toy_index):
        path = tmp_path / "m.csv"
        save_manifest(toy_index, path)
        reloaded = load_manifest(path)
        assert reloaded.records == toy_index.records

    def test_portrait_corpus_manifest_shape(self, tmp_path):
        # 50 identities x 15 images, single dataset
        rows = ["image_id,identity_id,dataset_id,variant,path"]
        for i in range(50):
            for j in range(15):
                rows.append(f"s{i:02d}_{j:02d},s{i:02d},gt,unmasked,s{i:02d}/{j:02d}.jpg")
        path = tmp_path / "gt.csv"
        path.write_text("\n".join(rows) + "\n")
        index = load_manifest(path)
        assert len(index) == 750
        assert len(index.identity_map) == 50
        assert all(
            len(slots[VARIANT_UNMASKED]) == 15 for slots in index.identity_map.values()
        )


class TestStats:
    def test_empty(self):
        empty = DatasetIndex("e", [])
        assert stats(empty) == {VARIANT_UNMASKED: (0, 0), VARIANT_MASKED: (0, 0)}

    def test_matches_full_scan(self, toy_index):
        result = stats(toy_index)
        for variant in (VARIANT_UNMASKED, VARIANT_MASKED):
            idents = {r.identity_id for r in toy_index.records if r.variant == variant}
            images = sum(1 for r in toy_index.records if r.variant == variant)
            assert result[variant] == (len(idents), images)

    def test_benchmark_inventory_counts(self):
        # identity attrition between variants, as masking discards produce
        records = []
        for i in range(5749):
            records.append(ImageRecord(f"u{i}", f"p{i}", "webfaces", VARIANT_UNMASKED, "u.png"))
        extra = 13167 - 5749
        for i in range(extra):
            records.append(
                ImageRecord(f"ux{i}", f"p{i % 5749}", "webfaces", VARIANT_UNMASKED, "u.png")
            )
        for i in range(5718):
            records.append(ImageRecord(f"m{i}", f"p{i}", "webfaces", VARIANT_MASKED, "m.png"))
        extra_m = 13138 - 5718
        for i in range(extra_m):
            records.append(
                ImageRecord(f"mx{i}", f"p{i % 5718}", "webfaces", VARIANT_MASKED, "m.png")
            )
        index = DatasetIndex("webfaces", records)
        assert stats(index) == {
            VARIANT_UNMASKED: (5749, 13167),
            VARIANT_MASKED: (5718, 13138),
        }


class TestSplits:
    def test_all_train(self, toy_index):
        train, val, hold = split_identities(toy_index, (1.0, 0.0), seed=1)
        assert train.identity_ids == frozenset(toy_index.identities())
        assert not val.identity_ids and not hold.identity_ids

    def test_deterministic(self, toy_index):
        a = split_identities(toy_index, (0.5, 0.25), seed=9)
        b = split_identities(toy_index, (0.5, 0.25), seed=9)
        assert a == b

    def test_eighty_twenty(self):
        index = make_toy_index(n_identities=100)
        train, val, hold = split_identities(index, (0.8, 0.2), seed=7)
        assert len(train.identity_ids) == 80
        assert len(val.identity_ids) == 20
        assert not train.identity_ids & val.identity_ids
        assert not hold.identity_ids

    def test_insufficient(self):
        index = make_toy_index(n_identities=3)
        with pytest.raises(InsufficientIdentities):
            split_identities(index, (0.9, 0.05), seed=0)

    @settings(max_examples=50, deadline=None)
    @given(
        n=st.integers(3, 60),
        tr=st.integers(1, 8),
        va=st.integers(0, 4),
        seed=st.integers(0, 10_000),
    )
    def test_disjoint_cover_property(self, n, tr, va, seed):
        index = make_toy_index(n_identities=n)
        total = tr + va + 2
        fractions = (tr / total, va / total)
        try:
            parts = split_identities(index, fractions, seed=seed)
        except InsufficientIdentities:
            return
        sets = [p.identity_ids for p in parts]
        assert sets[0] | sets[1] | sets[2] == frozenset(index.identities())
        assert not sets[0] & sets[1] and not sets[0] & sets[2] and not sets[1] & sets[2]

    def test_split_file_round_trip(self, tmp_path, toy_index):
        parts = split_identities(toy_index, (0.5, 0.25), seed=3)
        path = tmp_path / "split.csv"
        write_split(parts, path, seed=3, fractions=(0.5, 0.25))
        loaded, seed, fractions = read_split(path)
        assert loaded == parts
        assert seed == 3 and fractions == (0.5, 0.25)

    def test_serialized_split_bytes_deterministic(self, tmp_path, toy_index):
        for name in ("a.csv", "b.csv"):
            parts = split_identities(toy_index, (0.5, 0.25), seed=11)
            write_split(parts, tmp_path / name, seed=11, fractions=(0.5, 0.25))
        assert (tmp_path / "a.csv").read_bytes() == (tmp_path / "b.csv").read_bytes()

    def test_lookup(self, toy_index):
        parts = split_identities(toy_index, (0.5, 0.25), seed=3)
        table = split_lookup(parts)
        assert set(table) == set(toy_index.identities())


class TestVariantPairing:
    def test_both_variant_lists_disjoint_by_image_id(self, toy_index):
        for identity in toy_index.identities_with_both():
            unmasked = {r.image_id for r in toy_index.records_for(identity, VARIANT_UNMASKED)}
            masked = {r.image_id for r in toy_index.records_for(identity, VARIANT_MASKED)}
            assert unmasked and masked
            assert not unmasked & masked


class TestImageStore:
    def test_load_and_cache(self, smoke):
        store = ImageStore({"smoke": smoke["index"]})
        record = smoke["index"].records[0]
        a = store.load("smoke", record.image_id)
        b = store.load("smoke", record.image_id)
        assert a is b  # cached object
        assert a.dtype == np.uint8
