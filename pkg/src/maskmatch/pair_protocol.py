"""Verification-pair sampling, hard-imposter mining and benchmark lists.

Every trial pairs an unmasked reference with a masked probe. Authentic
pairs share an identity; imposter pairs cross identities but never
datasets (cross-dataset imposters would let a model key on background
statistics instead of faces).

Two dataset-draw strategies are supported when sampling across several
corpora: `uniform` picks a dataset with probability proportional to its
size, `stratified` gives every dataset equal probability.

Benchmark lists are generated once with equal authentic/imposter counts,
then frozen to a file so evaluations stay one-to-one comparable.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Mapping

import numpy as np

from .dataset_registry import VARIANT_MASKED, VARIANT_UNMASKED, DatasetIndex
from .errors import ExhaustedDataset, InsufficientPairs, PairListFormatError
from .seeding import spawn_rng

LABEL_AUTHENTIC = "authentic"
LABEL_IMPOSTER = "imposter"

GENERATOR_TAG = "maskmatch-0.1.0"


@dataclass(frozen=True)
class PairSpec:
    reference: str  # unmasked image_id
    probe: str      # masked image_id
    label: str
    dataset_id: str

    def __post_init__(self):
        if self.label not in (LABEL_AUTHENTIC, LABEL_IMPOSTER):
            raise ValueError(f"bad label {self.label!r}")


@dataclass(frozen=True)
class DrawStrategy:
    mode: str
    dataset_ids: tuple
    weights: tuple

    @classmethod
    def from_sizes(cls, mode: str, sizes: Mapping[str, int]) -> "DrawStrategy":
        if mode not in ("uniform", "stratified"):
            raise ValueError("mode must be 'uniform' or 'stratified'")
        ids = tuple(sorted(sizes))
        if not ids:
            raise ValueError("need at least one dataset")
        if mode == "stratified":
            weights = np.full(len(ids), 1.0 / len(ids))
        else:
            totals = np.array([sizes[d] for d in ids], dtype=float)
            if totals.sum() <= 0:
                raise ValueError("dataset sizes must be positive for uniform draws")
            weights = totals / totals.sum()
        return cls(mode, ids, tuple(weights))


@dataclass(frozen=True)
class BenchmarkPairList:
    pairs: tuple
    seed: int
    dataset_id: str

    def __post_init__(self):
        object.__setattr__(self, "pairs", tuple(self.pairs))

    def counts(self) -> tuple[int, int]:
        n_auth = sum(1 for p in self.pairs if p.label == LABEL_AUTHENTIC)
        return n_auth, len(self.pairs) - n_auth


class PairSource:
    """Sampling view over one or more dataset indexes.

    Restricts each dataset to a set of role identities (e.g. the train
    split) and precomputes, per identity, the unmasked and masked record
    lists in a deterministic sorted order.
    """

    def __init__(self, indexes: Mapping[str, DatasetIndex],
                 role_identities: Mapping[str, set] | None = None):
        self._indexes = dict(indexes)
        self._views: dict[str, dict[str, dict[str, list]]] = {}
        for dataset_id, index in self._indexes.items():
            allowed = None
            if role_identities is not None:
                allowed = set(role_identities.get(dataset_id, ()))
            view = {}
            for identity in index.identities():
                if allowed is not None and identity not in allowed:
                    continue
                view[identity] = {
                    VARIANT_UNMASKED: index.records_for(identity, VARIANT_UNMASKED),
                    VARIANT_MASKED: index.records_for(identity, VARIANT_MASKED),
                }
            self._views[dataset_id] = view
        self.dataset_ids = tuple(sorted(self._views))

    @classmethod
    def for_index(cls, index: DatasetIndex, identities=None) -> "PairSource":
        role = None if identities is None else {index.dataset_id: set(identities)}
        return cls({index.dataset_id: index}, role)

    # -- introspection ------------------------------------------------

    def index(self, dataset_id: str) -> DatasetIndex:
        return self._indexes[dataset_id]

    def identities(self, dataset_id: str) -> list[str]:
        return sorted(self._views[dataset_id])

    def identities_with(self, dataset_id: str, variant: str) -> list[str]:
        view = self._views[dataset_id]
        return sorted(i for i, slots in view.items() if slots[variant])

    def identities_with_unmasked(self, dataset_id: str) -> list[str]:
        return self.identities_with(dataset_id, VARIANT_UNMASKED)

    def identities_with_masked(self, dataset_id: str) -> list[str]:
        return self.identities_with(dataset_id, VARIANT_MASKED)

    def identities_with_both(self, dataset_id: str) -> list[str]:
        view = self._views[dataset_id]
        return sorted(
            i for i, slots in view.items()
            if slots[VARIANT_UNMASKED] and slots[VARIANT_MASKED]
        )

    def unmasked_records(self, dataset_id: str, identity: str) -> list:
        return self._views[dataset_id][identity][VARIANT_UNMASKED]

    def masked_records(self, dataset_id: str, identity: str) -> list:
        return self._views[dataset_id][identity][VARIANT_MASKED]

    def sizes(self) -> dict[str, int]:
        """Image count per dataset within the view (drives uniform draws)."""
        out = {}
        for dataset_id, view in self._views.items():
            out[dataset_id] = sum(
                len(slots[VARIANT_UNMASKED]) + len(slots[VARIANT_MASKED])
                for slots in view.values()
            )
        return out

    def strategy(self, mode: str) -> DrawStrategy:
        return DrawStrategy.from_sizes(mode, self.sizes())

    def locate_identity(self, identity: str) -> str:
        hits = [d for d, view in self._views.items() if identity in view]
        if not hits:
            raise KeyError(f"identity {identity!r} not in any dataset view")
        if len(hits) > 1:
            raise KeyError(f"identity {identity!r} is ambiguous across {hits}")
        return hits[0]


def choose_dataset(strategy: DrawStrategy, rng: np.random.Generator) -> str:
    """One categorical draw over the strategy's dataset weights."""
    i = rng.choice(len(strategy.dataset_ids), p=np.asarray(strategy.weights))
    return strategy.dataset_ids[int(i)]


def _pick(rng: np.random.Generator, items):
    return items[int(rng.integers(len(items)))]


def draw_training_pair(
    source: PairSource,
    strategy: DrawStrategy,
    authentic_probability: float = 0.5,
    rng: np.random.Generator | None = None,
) -> PairSpec:
    """One labeled training pair.

    The dataset comes from the draw strategy, the label from a Bernoulli
    with the given authentic probability, and identities/images are
    uniform within the chosen dataset. Raises ExhaustedDataset when the
    chosen dataset cannot produce a pair with the drawn label.
    """
    if rng is None:
        rng = np.random.default_rng()
    dataset_id = choose_dataset(strategy, rng)
    authentic = bool(rng.random() < authentic_probability)
    if authentic:
        candidates = source.identities_with_both(dataset_id)
        if not candidates:
            raise ExhaustedDataset(f"no identity in {dataset_id!r} has both variants")
        identity = _pick(rng, candidates)
        reference = _pick(rng, source.unmasked_records(dataset_id, identity))
        probe = _pick(rng, source.masked_records(dataset_id, identity))
        return PairSpec(reference.image_id, probe.image_id, LABEL_AUTHENTIC, dataset_id)
    ref_candidates = source.identities_with_unmasked(dataset_id)
    if not ref_candidates:
        raise ExhaustedDataset(f"no identity in {dataset_id!r} has unmasked images")
    ref_identity = _pick(rng, ref_candidates)
    probe_candidates = [
        i for i in source.identities_with_masked(dataset_id) if i != ref_identity
    ]
    if not probe_candidates:
        raise ExhaustedDataset(
            f"{dataset_id!r} has no second identity with masked images"
        )
    probe_identity = _pick(rng, probe_candidates)
    reference = _pick(rng, source.unmasked_records(dataset_id, ref_identity))
    probe = _pick(rng, source.masked_records(dataset_id, probe_identity))
    return PairSpec(reference.image_id, probe.image_id, LABEL_IMPOSTER, dataset_id)


def mine_hard_imposter(
    reference_identity: str,
    candidate_count: int,
    scorer: Callable[[str, str, str], float],
    source: PairSource,
    rng: np.random.Generator,
    dataset_id: str | None = None,
) -> PairSpec:
    """Hardest-of-N imposter pair for a reference identity.

    Draws `candidate_count` masked probes from other identities of the
    same dataset, scores each (reference, probe) with the model and keeps
    the one the model finds most similar, i.e. the pair it is currently
    most likely to misclassify as authentic. Ties break toward the
    earliest-drawn candidate. `scorer(dataset_id, ref_image_id,
    probe_image_id) -> similarity` should run on a read-only model
    snapshot; this happens inside data loading and is the slow part of
    hard-mined training.
    """
    if candidate_count < 1:
        raise ValueError("candidate_count must be >= 1")
    if dataset_id is None:
        dataset_id = source.locate_identity(reference_identity)
    ref_records = source.unmasked_records(dataset_id, reference_identity)
    if not ref_records:
        raise ExhaustedDataset(f"{reference_identity!r} has no unmasked reference image")
    reference = _pick(rng, ref_records)
    others = [
        i for i in source.identities_with_masked(dataset_id) if i != reference_identity
    ]
    if not others:
        raise ExhaustedDataset(f"{dataset_id!r} has no imposter identity with masked images")
    best_probe = None
    best_score = -np.inf
    for _ in range(candidate_count):
        identity = _pick(rng, others)
        probe = _pick(rng, source.masked_records(dataset_id, identity))
        score = scorer(dataset_id, reference.image_id, probe.image_id)
        if score > best_score:  # strict: first draw wins ties
            best_score = score
            best_probe = probe
    return PairSpec(reference.image_id, best_probe.image_id, LABEL_IMPOSTER, dataset_id)


# ---------------------------------------------------------------------------
# benchmark lists


def _pair_universe(source: PairSource, dataset_id: str, label: str):
    """All distinct (reference, probe) tuples for a label, sorted."""
    pairs = []
    if label == LABEL_AUTHENTIC:
        for identity in source.identities_with_both(dataset_id):
            for ref in source.unmasked_records(dataset_id, identity):
                for probe in source.masked_records(dataset_id, identity):
                    pairs.append((ref.image_id, probe.image_id))
    else:
        masked_ids = source.identities_with_masked(dataset_id)
        for ref_identity in source.identities_with_unmasked(dataset_id):
            for probe_identity in masked_ids:
                if probe_identity == ref_identity:
                    continue
                for ref in source.unmasked_records(dataset_id, ref_identity):
                    for probe in source.masked_records(dataset_id, probe_identity):
                        pairs.append((ref.image_id, probe.image_id))
    return sorted(pairs)


def generate_benchmark_pairs(index: DatasetIndex, pair_count: int, seed: int,
                             identities=None) -> BenchmarkPairList:
    """A fixed, balanced evaluation list: pair_count/2 authentic and
    pair_count/2 imposter pairs, no duplicate (reference, probe) tuples,
    byte-reproducible from the seed.
    """
    if pair_count % 2 != 0 or pair_count <= 0:
        raise ValueError("pair_count must be a positive even integer")
    source = PairSource.for_index(index, identities)
    dataset_id = index.dataset_id
    half = pair_count // 2
    rng = spawn_rng(seed, "benchmark_pairs", dataset_id, pair_count)
    chosen = []
    for label in (LABEL_AUTHENTIC, LABEL_IMPOSTER):
        universe = _pair_universe(source, dataset_id, label)
        if len(universe) < half:
            raise InsufficientPairs(
                f"{dataset_id!r} supports only {len(universe)} distinct "
                f"{label} pairs, need {half}"
            )
        picks = rng.choice(len(universe), size=half, replace=False)
        chosen.extend(
            PairSpec(universe[int(i)][0], universe[int(i)][1], label, dataset_id)
            for i in picks
        )
    return BenchmarkPairList(tuple(chosen), seed=seed, dataset_id=dataset_id)


def export_pair_list(pair_list: BenchmarkPairList, path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(f"# seed={pair_list.seed} generator={GENERATOR_TAG}\n")
        fh.write("reference_image_id,probe_image_id,label,dataset_id\n")
        for pair in pair_list.pairs:
            label = 1 if pair.label == LABEL_AUTHENTIC else 0
            fh.write(f"{pair.reference},{pair.probe},{label},{pair.dataset_id}\n")


def import_pair_list(path, index: DatasetIndex | None = None) -> BenchmarkPairList:
    """Read a pair-list file; with an index, also validate pair semantics.

    Validation checks that both images exist with the right variants and
    that the label matches the identity relation; violations raise
    PairListFormatError with the offending line number.
    """
    pairs = []
    seed = 0
    dataset_id = None
    with open(path, encoding="utf-8") as fh:
        for line_no, line in enumerate(fh, start=1):
            line = line.rstrip("\n")
            if not line.strip():
                continue
            if line.startswith("#"):
                for token in line[1:].split():
                    key, _, value = token.partition("=")
                    if key == "seed":
                        try:
                            seed = int(value)
                        except ValueError:
                            raise PairListFormatError("bad seed in preamble", line=line_no)
                continue
            if line == "reference_image_id,probe_image_id,label,dataset_id":
                continue
            cells = line.split(",")
            if len(cells) != 4:
                raise PairListFormatError(f"expected 4 fields, got {len(cells)}", line=line_no)
            reference, probe, label_cell, ds = [c.strip() for c in cells]
            if label_cell not in ("0", "1"):
                raise PairListFormatError(f"label must be 0 or 1, got {label_cell!r}", line=line_no)
            label = LABEL_AUTHENTIC if label_cell == "1" else LABEL_IMPOSTER
            if dataset_id is None:
                dataset_id = ds
            elif ds != dataset_id:
                raise PairListFormatError("pair list mixes dataset_ids", line=line_no)
            if index is not None:
                _validate_pair(index, reference, probe, label, ds, line_no)
            pairs.append(PairSpec(reference, probe, label, ds))
    return BenchmarkPairList(tuple(pairs), seed=seed, dataset_id=dataset_id or "empty")


def _validate_pair(index, reference, probe, label, dataset_id, line_no):
    if dataset_id != index.dataset_id:
        raise PairListFormatError(
            f"dataset_id {dataset_id!r} does not match index {index.dataset_id!r}",
            line=line_no,
        )
    try:
        ref_record = index.record(reference)
        probe_record = index.record(probe)
    except KeyError as exc:
        raise PairListFormatError(f"unknown image_id {exc}", line=line_no) from None
    if ref_record.variant != VARIANT_UNMASKED:
        raise PairListFormatError(f"reference {reference!r} is not unmasked", line=line_no)
    if probe_record.variant != VARIANT_MASKED:
        raise PairListFormatError(f"probe {probe!r} is not masked", line=line_no)
    same = ref_record.identity_id == probe_record.identity_id
    if label == LABEL_AUTHENTIC and not same:
        raise PairListFormatError("authentic pair crosses identities", line=line_no)
    if label == LABEL_IMPOSTER and same:
        raise PairListFormatError("imposter pair shares an identity", line=line_no)
