"""Identity-indexed image manifests and identity-disjoint splits.

A manifest is the single ingestion path: a UTF-8 CSV with a header row
`image_id,identity_id,dataset_id,variant,path` and paths relative to a
declared root. Directory scanning is offered only as a convenience that
emits a manifest first, so every run is reproducible from fixed
artifacts.
"""

from __future__ import annotations

import csv
import os
from dataclasses import dataclass, field
from functools import lru_cache

import numpy as np

from .errors import DuplicateImageId, InsufficientIdentities, ManifestParseError
from .raster import load_image
from .seeding import spawn_rng

VARIANT_UNMASKED = "unmasked"
VARIANT_MASKED = "masked"
VARIANTS = (VARIANT_UNMASKED, VARIANT_MASKED)

ROLE_TRAIN = "train"
ROLE_VALIDATION = "validation"
ROLE_HOLDOUT = "holdout"
ROLES = (ROLE_TRAIN, ROLE_VALIDATION, ROLE_HOLDOUT)

MANIFEST_FIELDS = ("image_id", "identity_id", "dataset_id", "variant", "path")


@dataclass(frozen=True)
class ImageRecord:
    image_id: str
    identity_id: str
    dataset_id: str
    variant: str
    path: str

    def __post_init__(self):
        if self.variant not in VARIANTS:
            raise ValueError(f"variant must be one of {VARIANTS}, got {self.variant!r}")
        if not self.path:
            raise ValueError("record path must be non-empty")


class DatasetIndex:
    """Immutable identity->records view over one dataset's manifest."""

    def __init__(self, dataset_id: str, records, root: str = "."):
        self.dataset_id = dataset_id
        self.root = root
        self.records = tuple(records)
        by_id = {}
        identity_map: dict[str, dict[str, list[str]]] = {}
        for record in self.records:
            if record.image_id in by_id:
                raise DuplicateImageId(f"duplicate image_id {record.image_id!r}")
            if record.dataset_id != dataset_id:
                raise ValueError(
                    f"record {record.image_id!r} belongs to {record.dataset_id!r}, "
                    f"not {dataset_id!r}"
                )
            by_id[record.image_id] = record
            slot = identity_map.setdefault(
                record.identity_id, {VARIANT_UNMASKED: [], VARIANT_MASKED: []}
            )
            slot[record.variant].append(record.image_id)
        self._by_id = by_id
        self.identity_map = identity_map

    def __len__(self) -> int:
        return len(self.records)

    def identities(self) -> list[str]:
        return sorted(self.identity_map)

    def record(self, image_id: str) -> ImageRecord:
        return self._by_id[image_id]

    def records_for(self, identity_id: str, variant: str) -> list[ImageRecord]:
        ids = self.identity_map.get(identity_id, {}).get(variant, [])
        return [self._by_id[i] for i in ids]

    def identities_with(self, variant: str) -> list[str]:
        return sorted(
            ident for ident, slots in self.identity_map.items() if slots[variant]
        )

    def identities_with_both(self) -> list[str]:
        return sorted(
            ident
            for ident, slots in self.identity_map.items()
            if slots[VARIANT_UNMASKED] and slots[VARIANT_MASKED]
        )

    def resolve(self, record: ImageRecord) -> str:
        return os.path.join(self.root, record.path)

    def merged_with(self, other: "DatasetIndex") -> "DatasetIndex":
        """Combine two indexes of the same dataset (e.g. unmasked + masked).

        Both sides keep their own root by re-rooting paths relative to cwd.
        """
        if other.dataset_id != self.dataset_id:
            raise ValueError("can only merge indexes of the same dataset")

        def rerooted(index):
            return [
                ImageRecord(r.image_id, r.identity_id, r.dataset_id, r.variant,
                            os.path.normpath(os.path.join(index.root, r.path)))
                for r in index.records
            ]

        return DatasetIndex(self.dataset_id, rerooted(self) + rerooted(other), root=".")


def load_manifest(path, root: str | None = None) -> DatasetIndex:
    """Parse a manifest CSV into a DatasetIndex.

    The header row is required; rows must agree on dataset_id; duplicate
    image ids are rejected. `root` defaults to the manifest's directory.
    """
    if root is None:
        root = os.path.dirname(os.path.abspath(path))
    records = []
    with open(path, encoding="utf-8", newline="") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise ManifestParseError("empty file: missing header row", line=1) from None
        if tuple(h.strip() for h in header) != MANIFEST_FIELDS:
            raise ManifestParseError(
                f"bad header {header!r}, expected {','.join(MANIFEST_FIELDS)}", line=1
            )
        for line_no, row in enumerate(reader, start=2):
            if not row or (len(row) == 1 and not row[0].strip()):
                continue
            if len(row) != len(MANIFEST_FIELDS):
                raise ManifestParseError(
                    f"expected {len(MANIFEST_FIELDS)} fields, got {len(row)}", line=line_no
                )
            try:
                records.append(ImageRecord(*[cell.strip() for cell in row]))
            except ValueError as exc:
                raise ManifestParseError(str(exc), line=line_no) from exc
    if not records:
        return DatasetIndex(dataset_id="empty", records=[], root=root)
    dataset_ids = {r.dataset_id for r in records}
    if len(dataset_ids) > 1:
        raise ManifestParseError(
            f"manifest mixes datasets {sorted(dataset_ids)}; one dataset per manifest"
        )
    return DatasetIndex(records[0].dataset_id, records, root=root)


def save_manifest(index: DatasetIndex, path) -> None:
    with open(path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(MANIFEST_FIELDS)
        for r in index.records:
            writer.writerow([r.image_id, r.identity_id, r.dataset_id, r.variant, r.path])


def index_from_directory(directory, dataset_id: str, variant: str = VARIANT_UNMASKED,
                         manifest_path=None) -> DatasetIndex:
    """Scan `directory/<identity>/<image>` into a manifest-backed index.

    The manifest is written next to the data (or to manifest_path) before
    the index is returned, keeping ingestion reproducible.
    """
    records = []
    for identity in sorted(os.listdir(directory)):
        sub = os.path.join(directory, identity)
        if not os.path.isdir(sub):
            continue
        for name in sorted(os.listdir(sub)):
            if not name.lower().endswith((".png", ".jpg", ".jpeg")):
                continue
            stem = os.path.splitext(name)[0]
            records.append(
                ImageRecord(
                    image_id=f"{identity}_{stem}",
                    identity_id=identity,
                    dataset_id=dataset_id,
                    variant=variant,
                    path=os.path.join(identity, name),
                )
            )
    index = DatasetIndex(dataset_id, records, root=str(directory))
    if manifest_path is None:
        manifest_path = os.path.join(directory, f"{dataset_id}_manifest.csv")
    save_manifest(index, manifest_path)
    return index


# ---------------------------------------------------------------------------
# splits


@dataclass(frozen=True)
class SplitAssignment:
    role: str
    identity_ids: frozenset

    def __post_init__(self):
        if self.role not in ROLES:
            raise ValueError(f"role must be one of {ROLES}")
        object.__setattr__(self, "identity_ids", frozenset(self.identity_ids))


def split_identities(index: DatasetIndex, fractions=(0.8, 0.1), seed: int = 0):
    """Identity-disjoint train/validation/holdout assignment.

    fractions = (train, validation); whatever remains becomes holdout.
    Quotas use the largest-remainder method so requested fractions round
    fairly; a role with a positive fraction that still ends up empty
    raises InsufficientIdentities. Deterministic in (identities, fractions,
    seed) and independent of per-identity image counts.
    """
    f_train, f_val = float(fractions[0]), float(fractions[1])
    if f_train < 0 or f_val < 0 or f_train + f_val > 1.0 + 1e-12:
        raise ValueError("fractions must be nonnegative and sum to at most 1")
    f_hold = 1.0 - f_train - f_val
    if f_hold < 1e-9:  # guard float residue from fractions that sum to 1
        f_hold = 0.0
    identities = index.identities()
    n = len(identities)
    quotas = np.array([f_train * n, f_val * n, f_hold * n])
    counts = np.floor(quotas + 1e-9).astype(int)
    remainder_order = np.argsort(-(quotas - counts), kind="stable")
    for i in range(n - counts.sum()):
        counts[remainder_order[i % 3]] += 1
    for frac, count, role in zip((f_train, f_val, f_hold), counts, ROLES):
        if frac > 0 and count == 0:
            raise InsufficientIdentities(
                f"role {role!r} requested fraction {frac} but would receive 0 of {n} identities"
            )
    rng = spawn_rng(seed, "split", index.dataset_id)
    order = rng.permutation(n)
    shuffled = [identities[i] for i in order]
    edges = np.cumsum(counts)
    groups = (shuffled[: edges[0]], shuffled[edges[0]: edges[1]], shuffled[edges[1]:])
    return tuple(
        SplitAssignment(role, ids) for role, ids in zip(ROLES, groups)
    )


def split_lookup(assignments) -> dict[str, str]:
    table = {}
    for assignment in assignments:
        for identity in assignment.identity_ids:
            table[identity] = assignment.role
    return table


def write_split(assignments, path, seed: int, fractions) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(f"# seed={seed} fractions={fractions[0]},{fractions[1]}\n")
        fh.write("identity_id,role\n")
        for assignment in assignments:
            for identity in sorted(assignment.identity_ids):
                fh.write(f"{identity},{assignment.role}\n")


def read_split(path):
    """Returns (assignments tuple, seed, fractions)."""
    by_role = {role: set() for role in ROLES}
    seed, fractions = None, None
    with open(path, encoding="utf-8") as fh:
        for line in fh:
            line = line.strip()
            if not line:
                continue
            if line.startswith("#"):
                for token in line[1:].split():
                    key, _, value = token.partition("=")
                    if key == "seed":
                        seed = int(value)
                    elif key == "fractions":
                        fractions = tuple(float(v) for v in value.split(","))
                continue
            if line == "identity_id,role":
                continue
            identity, _, role = line.partition(",")
            by_role[role].add(identity)
    assignments = tuple(SplitAssignment(role, by_role[role]) for role in ROLES)
    return assignments, seed, fractions


def stats(index: DatasetIndex) -> dict[str, tuple[int, int]]:
    """Per-variant (identity count, image count)."""
    out = {}
    for variant in VARIANTS:
        idents = 0
        images = 0
        for slots in index.identity_map.values():
            k = len(slots[variant])
            if k:
                idents += 1
                images += k
        out[variant] = (idents, images)
    return out


class ImageStore:
    """Cached image loading across several dataset indexes."""

    def __init__(self, indexes: dict[str, DatasetIndex], cache_size: int = 4096):
        self._indexes = dict(indexes)

        @lru_cache(maxsize=cache_size)
        def _load(dataset_id: str, image_id: str):
            index = self._indexes[dataset_id]
            record = index.record(image_id)
            return load_image(index.resolve(record))

        self._load = _load

    @classmethod
    def for_index(cls, index: DatasetIndex, **kwargs) -> "ImageStore":
        return cls({index.dataset_id: index}, **kwargs)

    def load(self, dataset_id: str, image_id: str) -> np.ndarray:
        return self._load(dataset_id, image_id)

    def record(self, dataset_id: str, image_id: str) -> ImageRecord:
        return self._indexes[dataset_id].record(image_id)
