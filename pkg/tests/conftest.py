import numpy as np
import pytest

from maskmatch.dataset_registry import (
    VARIANT_MASKED,
    VARIANT_UNMASKED,
    DatasetIndex,
    ImageRecord,
)
from maskmatch.face_geometry import MaskConfig, mask_dataset
from maskmatch.synthetic import smoke_corpus

ACCEPTANCE_RESULTS = []


def record_acceptance(number, description, passed, detail=""):
    ACCEPTANCE_RESULTS.append((number, description, passed, detail))


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE_RESULTS:
        return
    terminalreporter.write_sep("=", "acceptance criteria")
    for number, description, passed, detail in sorted(ACCEPTANCE_RESULTS):
        status = "PASS" if passed else "FAIL"
        suffix = f"  ({detail})" if detail else ""
        terminalreporter.write_line(f"{status}  criterion {number:2d}: {description}{suffix}")


@pytest.fixture(scope="session")
def smoke(tmp_path_factory):
    """Bundled smoke set: rendered corpus, masked outputs, merged index."""
    root = tmp_path_factory.mktemp("smoke")
    index = smoke_corpus(root / "images", seed=2024)
    masked_index, report = mask_dataset(index, MaskConfig(), str(root / "masked"))
    return {
        "root": root,
        "index": index,
        "masked_index": masked_index,
        "report": report,
        "merged": index.merged_with(masked_index),
    }


def make_toy_index(
    dataset_id="toy",
    n_identities=6,
    unmasked_per_identity=3,
    masked_per_identity=2,
):
    """In-memory index with both variants; paths are never opened."""
    records = []
    for i in range(n_identities):
        ident = f"p{i:02d}"
        for j in range(unmasked_per_identity):
            records.append(
                ImageRecord(f"{ident}_u{j}", ident, dataset_id, VARIANT_UNMASKED,
                            f"{ident}/u{j}.png")
            )
        for j in range(masked_per_identity):
            records.append(
                ImageRecord(f"{ident}_m{j}", ident, dataset_id, VARIANT_MASKED,
                            f"{ident}/m{j}.png")
            )
    return DatasetIndex(dataset_id, records)


@pytest.fixture
def toy_index():
    return make_toy_index()


@pytest.fixture
def rng():
    return np.random.default_rng(1234)
