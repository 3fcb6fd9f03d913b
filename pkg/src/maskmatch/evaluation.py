"""Biometric error metrics and the ranking validation protocol.

A verifier reduces every (reference, probe) trial to a similarity in
[0, 1]. The acceptance rule is `similarity >= threshold`, so sweeping the
threshold trades false accepts against false rejects:

    FAR(t) = fraction of imposter scores >= t
    FRR(t) = fraction of authentic scores <  t

The threshold grid is the sorted distinct scores plus one sentinel below
the minimum (accept everything) and one above the maximum (reject
everything). All summary numbers derive from that sweep:

    eer     error value where FAR and FRR cross (linear interpolation
            between the two bracketing grid points when no exact tie)
    frr100  lowest FRR over thresholds with FAR < 1%, excluding the
            all-reject sentinel; 1.0 (flagged infeasible) when none exists
    auc     trapezoidal area under the (FPR, TPR) polyline; equal to the
            Mann-Whitney statistic with ties counted 1/2

Validation during training uses a ranking precision instead: one authentic
pair against 19 imposter pairs per step, success iff the authentic pair
scores strictly highest, repeated for 400 steps.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np
from scipy.stats import rankdata

from .errors import EmptyPartition, InsufficientIdentities, MissingImage


@dataclass
class ScoreSet:
    """Labeled similarity scores from one evaluation run."""

    authentic: np.ndarray
    imposter: np.ndarray
    provenance: dict = field(default_factory=dict)

    def __post_init__(self):
        self.authentic = np.asarray(self.authentic, dtype=float).ravel()
        self.imposter = np.asarray(self.imposter, dtype=float).ravel()
        if self.authentic.size and not np.all(np.isfinite(self.authentic)):
            raise ValueError("authentic scores must be finite")
        if self.imposter.size and not np.all(np.isfinite(self.imposter)):
            raise ValueError("imposter scores must be finite")

    def require_both(self):
        if self.authentic.size == 0 or self.imposter.size == 0:
            raise EmptyPartition("metrics need at least one authentic and one imposter score")


@dataclass
class PrecisionResult:
    precision: float
    steps: int
    imposters_per_step: int
    successes: int


@dataclass
class MetricReport:
    eer: float
    frr100: float
    frr100_feasible: bool
    auc: float
    curve: np.ndarray  # rows of (threshold, far, frr)
    provenance: dict = field(default_factory=dict)


def threshold_grid(scores: ScoreSet) -> np.ndarray:
    """Sorted distinct scores bracketed by accept-all / reject-all sentinels."""
    scores.require_both()
    values = np.unique(np.concatenate([scores.authentic, scores.imposter]))
    return np.concatenate([[values[0] - 1.0], values, [values[-1] + 1.0]])


def far_frr_curve(scores: ScoreSet) -> np.ndarray:
    """(threshold, far, frr) for every grid threshold.

    FAR is non-increasing and FRR non-decreasing along the grid; the first
    row is always (far=1, frr=0) and the last (far=0, frr=1).
    """
    grid = threshold_grid(scores)
    auth = np.sort(scores.authentic)
    imp = np.sort(scores.imposter)
    # count of imposter scores >= t via position of t in the sorted array
    far = (imp.size - np.searchsorted(imp, grid, side="left")) / imp.size
    frr = np.searchsorted(auth, grid, side="left") / auth.size
    return np.column_stack([grid, far, frr])


def eer(scores: ScoreSet) -> float:
    value, _ = eer_with_bracket(scores)
    return value


def eer_with_bracket(scores: ScoreSet):
    """EER plus the discrete grid rows bracketing the FAR/FRR crossing.

    When some grid threshold gives FAR == FRR exactly, that value is the
    EER and both bracket rows are that grid row. Otherwise the EER is the
    common value of the two linearly interpolated lines at their crossing.
    """
    curve = far_frr_curve(scores)
    diff = curve[:, 1] - curve[:, 2]
    # diff starts at +1 (accept all) and ends at -1 (reject all)
    exact = np.nonzero(diff == 0.0)[0]
    if exact.size:
        i = int(exact[0])
        return float(curve[i, 1]), (curve[i], curve[i])
    i = int(np.nonzero(diff < 0.0)[0][0])
    lo, hi = curve[i - 1], curve[i]
    d0, d1 = diff[i - 1], diff[i]
    alpha = d0 / (d0 - d1)
    value = (1.0 - alpha) * lo[1] + alpha * hi[1]
    return float(value), (lo, hi)


def frr100(scores: ScoreSet, far_limit: float = 0.01) -> float:
    value, _ = frr100_with_flag(scores, far_limit)
    return value


def frr100_with_flag(scores: ScoreSet, far_limit: float = 0.01):
    """(lowest FRR subject to FAR < far_limit, feasible flag).

    The all-reject sentinel is excluded from the search; when no real
    threshold drives FAR under the limit the result is 1.0 with
    feasible=False rather than an error.
    """
    curve = far_frr_curve(scores)
    usable = curve[:-1]  # drop the reject-everything sentinel
    ok = usable[:, 1] < far_limit
    if not np.any(ok):
        return 1.0, False
    return float(np.min(usable[ok, 2])), True


def roc_auc(scores: ScoreSet) -> float:
    """Area under the ROC curve, ties between partitions counted 1/2."""
    scores.require_both()
    n_a, n_i = scores.authentic.size, scores.imposter.size
    ranks = rankdata(np.concatenate([scores.authentic, scores.imposter]))
    r_auth = ranks[:n_a].sum()
    u = r_auth - n_a * (n_a + 1) / 2.0
    return float(u / (n_a * n_i))


def roc_points(scores: ScoreSet) -> np.ndarray:
    """(fpr, tpr) polyline ordered from (0,0) to (1,1) for plotting."""
    curve = far_frr_curve(scores)
    fpr = curve[:, 1][::-1]
    tpr = (1.0 - curve[:, 2])[::-1]
    return np.column_stack([fpr, tpr])


def compute_metrics(scores: ScoreSet, provenance: dict | None = None) -> MetricReport:
    scores.require_both()
    eer_value = eer(scores)
    frr_value, feasible = frr100_with_flag(scores)
    prov = dict(scores.provenance)
    if provenance:
        prov.update(provenance)
    prov.setdefault("n_authentic", int(scores.authentic.size))
    prov.setdefault("n_imposter", int(scores.imposter.size))
    return MetricReport(
        eer=eer_value,
        frr100=frr_value,
        frr100_feasible=feasible,
        auc=roc_auc(scores),
        curve=far_frr_curve(scores),
        provenance=prov,
    )


# ---------------------------------------------------------------------------
# scoring pair lists


def score_pairs(scorer, pair_list, store, tap: str | None = None) -> ScoreSet:
    """Score every pair of a benchmark list, partitioned by label.

    `scorer` is a VerifierModel / EnsembleModel or any object exposing
    `similarity(ref_image, probe_image)`; `store` resolves image ids to
    rasters. Order is preserved within each partition so reruns are
    comparable index by index.
    """
    from .pair_protocol import LABEL_AUTHENTIC
    from .verifier import EnsembleModel, VerifierModel, ensemble_similarity

    authentic, imposter = [], []
    for i, pair in enumerate(pair_list.pairs):
        try:
            ref = store.load(pair.dataset_id, pair.reference)
            probe = store.load(pair.dataset_id, pair.probe)
        except (OSError, KeyError) as exc:
            raise MissingImage(f"pair {i}: {exc}", pair_index=i) from exc
        if isinstance(scorer, EnsembleModel):
            value = ensemble_similarity(scorer, ref, probe)
        elif isinstance(scorer, VerifierModel):
            value = scorer.similarity(ref, probe, tap or "bottleneck2048")
        else:
            value = scorer.similarity(ref, probe)
        (authentic if pair.label == LABEL_AUTHENTIC else imposter).append(value)
    provenance = {"pair_list_seed": pair_list.seed, "dataset_id": pair_list.dataset_id}
    if tap:
        provenance["tap"] = tap
    return ScoreSet(np.array(authentic, float), np.array(imposter, float), provenance)


# ---------------------------------------------------------------------------
# ranking validation protocol


def validation_precision(
    scorer: Callable,
    view,
    steps: int = 400,
    imposters_per_step: int = 19,
    rng: np.random.Generator | None = None,
) -> PrecisionResult:
    """1-authentic-vs-N-imposters ranking precision.

    Per step: draw a reference identity with both variants, an unmasked
    reference image and a masked authentic probe; draw
    `imposters_per_step` identities uniformly with replacement (excluding
    the reference, within the reference's dataset) and one masked image
    each. The step succeeds iff the authentic pair's similarity is
    strictly greater than every imposter similarity; ties count as
    failure.

    `scorer` maps (reference ImageRecord, probe ImageRecord) -> float.
    `view` is a pair_protocol.PairSource over the validation identities.
    """
    if rng is None:
        rng = np.random.default_rng()
    candidates = [
        (dataset_id, identity)
        for dataset_id in view.dataset_ids
        for identity in view.identities_with_both(dataset_id)
    ]
    successes = 0
    for _ in range(steps):
        if not candidates:
            raise InsufficientIdentities("validation view has no identity with both variants")
        dataset_id, identity = candidates[rng.integers(len(candidates))]
        imposter_pool = [
            other for other in view.identities_with_masked(dataset_id) if other != identity
        ]
        if not imposter_pool:
            raise InsufficientIdentities(
                f"dataset {dataset_id!r} has no imposter identity with masked images"
            )
        ref = _draw(view.unmasked_records(dataset_id, identity), rng)
        probe = _draw(view.masked_records(dataset_id, identity), rng)
        authentic_score = scorer(ref, probe)
        best_imposter = -np.inf
        for _ in range(imposters_per_step):
            other = imposter_pool[rng.integers(len(imposter_pool))]
            imposter_probe = _draw(view.masked_records(dataset_id, other), rng)
            value = scorer(ref, imposter_probe)
            if value > best_imposter:
                best_imposter = value
        if authentic_score > best_imposter:
            successes += 1
    return PrecisionResult(
        precision=successes / steps,
        steps=steps,
        imposters_per_step=imposters_per_step,
        successes=successes,
    )


def _draw(records: Sequence, rng: np.random.Generator):
    return records[rng.integers(len(records))]


def model_scorer(model, tap: str = "final_output", store=None) -> Callable:
    """Wrap a verifier as a record scorer with an embedding cache.

    The cache is keyed by image_id and lives for the scorer's lifetime, so
    build a fresh scorer after every parameter update.
    """
    cache: dict[str, np.ndarray] = {}

    def embed_record(record):
        key = record.image_id
        if key not in cache:
            image = store.load(record.dataset_id, record.image_id)
            cache[key] = model.embed(image)
        return cache[key]

    def score(ref_record, probe_record) -> float:
        e_ref = embed_record(ref_record)
        e_probe = embed_record(probe_record)
        return model.similarity_from_embeddings(e_ref, e_probe, tap)

    return score


# ---------------------------------------------------------------------------
# report emission


def write_metrics(reports, path) -> None:
    """Line-oriented key=value records, one report per line."""
    keys = ("dataset_id", "model_id", "tap", "seed")
    with open(path, "w", encoding="utf-8") as fh:
        for report in reports:
            prov = report.provenance
            tokens = [f"{k}={prov.get(k, '-')}" for k in keys]
            tokens += [
                f"eer={report.eer:.9f}",
                f"frr100={report.frr100:.9f}",
                f"frr100_feasible={int(report.frr100_feasible)}",
                f"auc={report.auc:.9f}",
                f"n_authentic={prov.get('n_authentic', '-')}",
                f"n_imposter={prov.get('n_imposter', '-')}",
            ]
            fh.write(" ".join(tokens) + "\n")


def read_metrics(path) -> list[dict]:
    records = []
    with open(path, encoding="utf-8") as fh:
        for line in fh:
            line = line.strip()
            if not line:
                continue
            rec = {}
            for token in line.split():
                key, _, value = token.partition("=")
                rec[key] = value
            for key in ("eer", "frr100", "auc"):
                if key in rec:
                    rec[key] = float(rec[key])
            records.append(rec)
    return records


def plot_far_frr(report: MetricReport, path) -> None:
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    curve = report.curve
    fig, ax = plt.subplots(figsize=(6, 4))
    ax.plot(curve[:, 0], curve[:, 1], label="FAR", drawstyle="steps-post")
    ax.plot(curve[:, 0], curve[:, 2], label="FRR", drawstyle="steps-post")
    ax.axhline(report.eer, color="gray", linestyle=":", linewidth=1,
               label=f"EER={report.eer:.3f}")
    ax.set_xlabel("threshold")
    ax.set_ylabel("error rate")
    ax.set_title(_plot_title(report))
    ax.legend()
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)


def plot_roc(scores_or_report, path) -> None:
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    if isinstance(scores_or_report, MetricReport):
        curve = scores_or_report.curve
        fpr = curve[:, 1][::-1]
        tpr = (1.0 - curve[:, 2])[::-1]
        auc = scores_or_report.auc
        title = _plot_title(scores_or_report)
    else:
        pts = roc_points(scores_or_report)
        fpr, tpr = pts[:, 0], pts[:, 1]
        auc = roc_auc(scores_or_report)
        title = ""
    fig, ax = plt.subplots(figsize=(5, 5))
    ax.plot(fpr, tpr, label=f"AUC={auc:.3f}")
    ax.plot([0, 1], [0, 1], color="gray", linestyle=":", linewidth=1)
    ax.set_xlabel("false positive rate")
    ax.set_ylabel("true positive rate")
    ax.set_title(title)
    ax.legend(loc="lower right")
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)


def emit_report(report: MetricReport, out_dir, stem: str | None = None) -> dict:
    """Write the metrics record plus FAR/FRR and ROC plots; returns paths."""
    import os

    os.makedirs(out_dir, exist_ok=True)
    if stem is None:
        prov = report.provenance
        stem = "_".join(
            str(prov.get(k, "na")) for k in ("dataset_id", "model_id", "tap")
        )
    metrics_path = os.path.join(out_dir, f"{stem}_metrics.txt")
    farfrr_path = os.path.join(out_dir, f"{stem}_far_frr.png")
    roc_path = os.path.join(out_dir, f"{stem}_roc.png")
    write_metrics([report], metrics_path)
    plot_far_frr(report, farfrr_path)
    plot_roc(report, roc_path)
    return {"metrics": metrics_path, "far_frr": farfrr_path, "roc": roc_path}


def _plot_title(report: MetricReport) -> str:
    prov = report.provenance
    bits = [str(prov[k]) for k in ("dataset_id", "model_id", "tap") if k in prov]
    return " / ".join(bits)
