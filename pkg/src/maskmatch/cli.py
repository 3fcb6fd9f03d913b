"""`maskmatch` command line: reproducible masking/training/evaluation runs.

Subcommands: mask, split, pairs, pretrain, finetune, benchmark1,
benchmark2, evaluate. Every command that owns a run directory freezes its
resolved config there and takes a lock file, and all randomness flows
from the single --seed / config seed, so reruns are byte-reproducible.

Exit codes: 0 success, 1 usage, 2 data error, 3 training/eval failure.
MASKMATCH_DATA_ROOT overrides the root against which manifest paths
resolve.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
from contextlib import contextmanager

from . import evaluation, pair_protocol, synthetic
from .contrastive import PretrainConfig, pretrain_contrastive
from .dataset_registry import (
    ImageStore,
    load_manifest,
    save_manifest,
    split_identities,
    split_lookup,
    write_split,
)
from .errors import (
    ChecksumError,
    ConfigError,
    DuplicateImageId,
    InsufficientIdentities,
    InsufficientPairs,
    ManifestParseError,
    MaskmatchError,
    MissingImage,
    PairListFormatError,
)
from .face_geometry import MaskConfig, mask_dataset, write_masking_report
from .raster import load_image
from .training import (
    EXPERIMENT_PRESETS,
    FinetuneConfig,
    finetune_supervised,
    multi_dataset_finetune,
)
from .verifier import (
    TAP_BOTTLENECK,
    TAP_FC,
    TAP_FINAL,
    EnsembleModel,
    VerifierModel,
    load_checkpoint,
    save_checkpoint,
)

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_DATA = 2
EXIT_RUN = 3

_DATA_ERRORS = (
    ManifestParseError,
    DuplicateImageId,
    PairListFormatError,
    ChecksumError,
    MissingImage,
    InsufficientPairs,
    InsufficientIdentities,
    ConfigError,
    FileNotFoundError,
    json.JSONDecodeError,
)

_TAP_FLAGS = {"final": TAP_FINAL, "fc512": TAP_FC, "bottleneck": TAP_BOTTLENECK}


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        print(f"error: {message}", file=sys.stderr)
        raise SystemExit(EXIT_USAGE)


def _data_root() -> str | None:
    return os.environ.get("MASKMATCH_DATA_ROOT") or None


def _load_group(manifest_paths):
    """Merge one dataset's manifests (e.g. unmasked + masked) into an index."""
    root = _data_root()
    indexes = [load_manifest(p, root=root) for p in manifest_paths]
    merged = indexes[0]
    for other in indexes[1:]:
        merged = merged.merged_with(other)
    return merged


@contextmanager
def _run_directory(out_dir, resolved_config: dict):
    """Own a run directory: exclusive lock + frozen config snapshot."""
    os.makedirs(out_dir, exist_ok=True)
    config_path = os.path.join(out_dir, "config.json")
    frozen = json.dumps(resolved_config, indent=2, sort_keys=True)
    if os.path.exists(config_path):
        with open(config_path, encoding="utf-8") as fh:
            if fh.read() != frozen:
                raise ConfigError(
                    f"{config_path} already exists with a different config; "
                    "refusing to mutate a started run"
                )
    else:
        with open(config_path, "w", encoding="utf-8") as fh:
            fh.write(frozen)
    lock_path = os.path.join(out_dir, "run.lock")
    try:
        fd = os.open(lock_path, os.O_CREAT | os.O_EXCL | os.O_WRONLY)
    except FileExistsError:
        raise ConfigError(f"run directory {out_dir} is locked by another process") from None
    try:
        os.write(fd, str(os.getpid()).encode())
        os.close(fd)
        yield out_dir
    finally:
        if os.path.exists(lock_path):
            os.remove(lock_path)


def _read_json(path) -> dict:
    with open(path, encoding="utf-8") as fh:
        return json.load(fh)


# ---------------------------------------------------------------------------
# commands


def cmd_mask(args) -> int:
    index = _load_group(args.manifest)
    config = MaskConfig.from_json(args.config) if args.config else MaskConfig()
    masked_index, report = mask_dataset(index, config, args.out, workers=args.workers)
    save_manifest(masked_index, os.path.join(args.out, "masked_manifest.csv"))
    write_masking_report(report, os.path.join(args.out, "masking_report.csv"))
    io_failures = sum(1 for _, status, _ in report.entries if status == "discarded_io")
    print(
        f"masked {report.masked_count}/{report.input_count} "
        f"(no_face {report.discarded_count - io_failures}, io {io_failures}) -> {args.out}"
    )
    return EXIT_OK if io_failures == 0 else EXIT_DATA


def cmd_split(args) -> int:
    index = _load_group(args.manifest)
    fractions = tuple(float(x) for x in args.fractions.split(","))
    assignments = split_identities(index, fractions, seed=args.seed)
    write_split(assignments, args.out, seed=args.seed, fractions=fractions)
    sizes = {a.role: len(a.identity_ids) for a in assignments}
    print(f"split {index.dataset_id}: {sizes} -> {args.out}")
    return EXIT_OK


def cmd_pairs(args) -> int:
    index = _load_group(args.manifest)
    pair_list = pair_protocol.generate_benchmark_pairs(index, args.count, args.seed)
    pair_protocol.export_pair_list(pair_list, args.out)
    n_auth, n_imp = pair_list.counts()
    print(f"pairs {index.dataset_id}: {n_auth} authentic + {n_imp} imposter -> {args.out}")
    return EXIT_OK


def cmd_pretrain(args) -> int:
    raw = _read_json(args.config)
    seed = args.seed if args.seed is not None else raw.get("seed", 0)
    manifests = raw.pop("manifests")
    known = {f.name for f in PretrainConfig.__dataclass_fields__.values()}
    fields = {k: v for k, v in raw.items() if k in known}
    fields["seed"] = seed
    config = PretrainConfig(**fields)
    indexes = [load_manifest(p, root=_data_root()) for p in manifests]
    images = [load_image(ix.resolve(r)) for ix in indexes for r in ix.records]
    with _run_directory(args.out, {"command": "pretrain", "seed": config.seed, **raw,
                                   "manifests": manifests}):
        try:
            result = pretrain_contrastive(config, images, out_dir=args.out)
        except MaskmatchError:
            raise
        except Exception as exc:  # training blew up: report, fail with run error
            print(f"pretraining failed: {exc}", file=sys.stderr)
            return EXIT_RUN
        with open(os.path.join(args.out, "loss_log.csv"), "w", encoding="utf-8") as fh:
            fh.write("step,loss\n")
            for step, loss in result.loss_trace:
                fh.write(f"{step},{loss:.6f}\n")
    print(f"pretrained {config.backbone} for {len(result.loss_trace)} steps "
          f"-> {result.checkpoint_path}")
    return EXIT_OK


def _build_sources(dataset_groups, fractions, seed):
    """(indexes, train identity map, validation identity map, store)."""
    indexes, train_ids, val_ids = {}, {}, {}
    for group in dataset_groups:
        index = _load_group(group["manifests"])
        indexes[index.dataset_id] = index
        assignments = split_identities(index, fractions, seed=seed)
        lookup = split_lookup(assignments)
        train_ids[index.dataset_id] = {i for i, r in lookup.items() if r == "train"}
        val_ids[index.dataset_id] = {i for i, r in lookup.items() if r == "validation"}
    return indexes, train_ids, val_ids, ImageStore(indexes)


def _finetune_config_from(raw: dict, seed: int) -> FinetuneConfig:
    preset = raw.get("preset")
    known = {f.name for f in FinetuneConfig.__dataclass_fields__.values()}
    fields = {k: v for k, v in raw.items() if k in known}
    fields["seed"] = seed
    if preset:
        base = EXPERIMENT_PRESETS[preset]
        merged = {**base.__dict__, **fields, "name": raw.get("name", preset)}
        return FinetuneConfig(**merged)
    return FinetuneConfig(**fields)


def cmd_finetune(args) -> int:
    raw = _read_json(args.config)
    seed = args.seed if args.seed is not None else raw.get("seed", 0)
    config = _finetune_config_from(raw, seed)
    fractions = tuple(raw.get("train_fractions", (0.8, 0.1)))
    indexes, train_ids, val_ids, store = _build_sources(raw["datasets"], fractions, seed)
    model = VerifierModel.from_preset(
        config.backbone, seed=seed,
        input_resolution=config.input_resolution,
        head_width=config.head_width, model_id=config.name,
    )
    with _run_directory(args.out, {"command": "finetune", "seed": seed, **raw}):
        try:
            run = multi_dataset_finetune(model, config, indexes, store,
                                         train_ids, val_ids, run_dir=args.out)
            final = save_checkpoint(model, os.path.join(args.out, "final.npz"))
        except MaskmatchError:
            raise
        except Exception as exc:
            print(f"finetuning failed: {exc}", file=sys.stderr)
            return EXIT_RUN
    retained = len(run.checkpoints)
    print(f"finetuned {config.name}: {config.iterations} steps, "
          f"{retained} retained checkpoints, final -> {final}")
    return EXIT_OK


def _holdout_pairs(holdout_groups, pair_count, seed):
    out = []
    for group in holdout_groups:
        index = _load_group(group["manifests"])
        pair_list = pair_protocol.generate_benchmark_pairs(index, pair_count, seed)
        out.append((index, pair_list))
    return out


def _evaluate_on_holdouts(scorer, holdouts, tap, model_id, seed):
    reports = []
    for index, pair_list in holdouts:
        store = ImageStore.for_index(index)
        scores = evaluation.score_pairs(scorer, pair_list, store, tap)
        report = evaluation.compute_metrics(
            scores, {"dataset_id": index.dataset_id, "model_id": model_id,
                     "tap": tap, "seed": seed},
        )
        reports.append(report)
    return reports


def _write_table(reports, path):
    """Matrix view: datasets down, model columns across, EER cells."""
    datasets = sorted({r.provenance["dataset_id"] for r in reports})
    models = list(dict.fromkeys(r.provenance["model_id"] for r in reports))
    cell = {(r.provenance["dataset_id"], r.provenance["model_id"]): r.eer for r in reports}
    widths = max([len(m) for m in models] + [8])
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("dataset".ljust(20) + "".join(m.rjust(widths + 2) for m in models) + "\n")
        for ds in datasets:
            row = ds.ljust(20)
            for m in models:
                value = cell.get((ds, m))
                row += (f"{value:.3f}" if value is not None else "-").rjust(widths + 2)
            fh.write(row + "\n")


def cmd_benchmark1(args) -> int:
    raw = _read_json(args.config)
    seed = args.seed if args.seed is not None else raw.get("seed", 0)
    fractions = tuple(raw.get("train_fractions", (0.8, 0.1)))
    tap = _TAP_FLAGS.get(args.tap, args.tap) if args.tap else raw.get("tap", TAP_BOTTLENECK)
    indexes, train_ids, val_ids, store = _build_sources([raw["train"]], fractions, seed)
    holdouts = _holdout_pairs(raw["holdouts"], raw.get("pair_count", 100), seed)
    reports = []
    with _run_directory(args.out, {"command": "benchmark1", "seed": seed, **raw}):
        for backbone in raw["backbones"]:
            config = _finetune_config_from(
                {**raw, "backbone": backbone, "name": backbone}, seed)
            model = VerifierModel.from_preset(
                backbone, seed=seed, input_resolution=config.input_resolution,
                head_width=config.head_width, model_id=backbone)
            run_dir = os.path.join(args.out, "runs", backbone)
            try:
                multi_dataset_finetune(model, config, indexes, store,
                                       train_ids, val_ids, run_dir=run_dir)
                save_checkpoint(model, os.path.join(run_dir, "final.npz"))
                reports.extend(
                    _evaluate_on_holdouts(model, holdouts, tap, backbone, seed))
            except MaskmatchError:
                raise
            except Exception as exc:
                print(f"benchmark1 run {backbone} failed: {exc}", file=sys.stderr)
                return EXIT_RUN
        evaluation.write_metrics(reports, os.path.join(args.out, "metrics.txt"))
        _write_table(reports, os.path.join(args.out, "eer_table.txt"))
    print(f"benchmark1: {len(raw['backbones'])} models x {len(holdouts)} holdouts "
          f"-> {args.out}/metrics.txt")
    return EXIT_OK


def cmd_benchmark2(args) -> int:
    raw = _read_json(args.config)
    seed = args.seed if args.seed is not None else raw.get("seed", 0)
    fractions = tuple(raw.get("train_fractions", (0.8, 0.1)))
    tap = _TAP_FLAGS.get(args.tap, args.tap) if args.tap else raw.get("tap", TAP_BOTTLENECK)
    if len(raw["datasets"]) < 2:
        raise ConfigError("benchmark2 needs at least 2 training datasets")
    indexes, train_ids, val_ids, store = _build_sources(raw["datasets"], fractions, seed)
    holdouts = _holdout_pairs(raw["holdouts"], raw.get("pair_count", 100), seed)
    overrides = raw.get("preset_overrides", {})
    preset_names = raw.get("presets", ["CP1", "CP2", "FT1", "FT2", "FT3"])
    backbone = raw.get("backbone", "tiny_cnn")
    common = {k: raw[k] for k in (
        "input_resolution", "head_width", "validation_interval", "validation_steps",
        "validation_imposters", "retention_threshold", "authentic_probability",
    ) if k in raw}

    models: dict[str, VerifierModel] = {}
    runs = {}
    candidates = []
    reports = []
    with _run_directory(args.out, {"command": "benchmark2", "seed": seed, **raw}):
        try:
            for name in preset_names:
                spec = {
                    "preset": name, "name": name, "backbone": backbone,
                    **common, **overrides.get(name, {}),
                }
                config = _finetune_config_from(spec, seed)
                base_ref = EXPERIMENT_PRESETS[name].base_checkpoint
                if base_ref and base_ref in runs:
                    best = runs[base_ref].best_checkpoint()
                    base_path = best["path"] if best else os.path.join(
                        args.out, "runs", base_ref, "final.npz")
                    config = _finetune_config_from(
                        {**spec, "base_checkpoint": base_path}, seed)
                elif raw.get("base_checkpoint"):
                    config = _finetune_config_from(
                        {**spec, "base_checkpoint": raw["base_checkpoint"]}, seed)
                model = VerifierModel.from_preset(
                    backbone, seed=seed, input_resolution=config.input_resolution,
                    head_width=config.head_width, model_id=name)
                run_dir = os.path.join(args.out, "runs", name)
                run = multi_dataset_finetune(model, config, indexes, store,
                                             train_ids, val_ids, run_dir=run_dir)
                save_checkpoint(model, os.path.join(run_dir, "final.npz"))
                models[name] = model
                runs[name] = run
                candidates.extend(
                    {"run": name, **ck} for ck in run.checkpoints)
                reports.extend(_evaluate_on_holdouts(model, holdouts, tap, name, seed))

            ft_members = [models[n] for n in preset_names if n.startswith("FT")]
            if ft_members:
                ensemble = EnsembleModel(ft_members)
                reports.extend(
                    _evaluate_on_holdouts(ensemble, holdouts, TAP_BOTTLENECK,
                                          "Ensemble", seed))
        except MaskmatchError:
            raise
        except Exception as exc:
            print(f"benchmark2 failed: {exc}", file=sys.stderr)
            return EXIT_RUN

        evaluation.write_metrics(reports, os.path.join(args.out, "metrics.txt"))
        _write_table(reports, os.path.join(args.out, "eer_table.txt"))
        with open(os.path.join(args.out, "candidates.csv"), "w", encoding="utf-8") as fh:
            fh.write("run,step,precision,path\n")
            for c in candidates:
                fh.write(f"{c['run']},{c['step']},{c['precision']:.4f},{c['path']}\n")
    print(f"benchmark2: {len(models)} models (+ensemble) x {len(holdouts)} holdouts "
          f"-> {args.out}/metrics.txt")
    return EXIT_OK


def cmd_evaluate(args) -> int:
    index = _load_group(args.manifest)
    pair_list = pair_protocol.import_pair_list(args.pairs, index)
    store = ImageStore.for_index(index)
    tap = _TAP_FLAGS.get(args.tap, args.tap) if args.tap else TAP_BOTTLENECK
    models = [load_checkpoint(p) for p in args.checkpoint]
    if args.ensemble or len(models) > 1:
        scorer = EnsembleModel(models)
        model_id = "ensemble[" + "+".join(m.model_id for m in models) + "]"
        tap = TAP_BOTTLENECK
    else:
        scorer = models[0]
        model_id = models[0].model_id
    os.makedirs(args.out, exist_ok=True)
    try:
        scores = evaluation.score_pairs(scorer, pair_list, store, tap)
        report = evaluation.compute_metrics(
            scores, {"dataset_id": index.dataset_id, "model_id": model_id,
                     "tap": tap, "seed": pair_list.seed})
        paths = evaluation.emit_report(report, args.out)
    except MissingImage:
        raise
    except MaskmatchError:
        raise
    except Exception as exc:
        print(f"evaluation failed: {exc}", file=sys.stderr)
        return EXIT_RUN
    print(f"eer={report.eer:.4f} frr100={report.frr100:.4f} auc={report.auc:.4f} "
          f"-> {paths['metrics']}")
    return EXIT_OK


def cmd_smoke_corpus(args) -> int:
    index = synthetic.build_corpus(
        args.out, args.dataset_id, args.identities, args.images, seed=args.seed,
        size=args.size)
    print(f"rendered {len(index)} images over {len(index.identities())} identities "
          f"-> {args.out}")
    return EXIT_OK


# ---------------------------------------------------------------------------


def build_parser() -> _Parser:
    parser = _Parser(prog="maskmatch", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)

    def add(name, fn, help_text):
        p = sub.add_parser(name, help=help_text)
        p.set_defaults(fn=fn)
        return p

    p = add("mask", cmd_mask, "draw synthetic masks over a manifest's images")
    p.add_argument("--manifest", action="append", required=True)
    p.add_argument("--config", help="mask config JSON")
    p.add_argument("--out", required=True)
    p.add_argument("--workers", type=int, default=0)

    p = add("split", cmd_split, "identity-disjoint train/validation/holdout split")
    p.add_argument("--manifest", action="append", required=True)
    p.add_argument("--fractions", default="0.8,0.1")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True)

    p = add("pairs", cmd_pairs, "generate a frozen balanced benchmark pair list")
    p.add_argument("--manifest", action="append", required=True)
    p.add_argument("--count", type=int, required=True)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True)

    p = add("pretrain", cmd_pretrain, "contrastive representation pretraining")
    p.add_argument("--config", required=True)
    p.add_argument("--seed", type=int)
    p.add_argument("--out", required=True)

    p = add("finetune", cmd_finetune, "supervised Siamese finetuning")
    p.add_argument("--config", required=True)
    p.add_argument("--seed", type=int)
    p.add_argument("--out", required=True)

    p = add("benchmark1", cmd_benchmark1,
            "single-dataset training, multi-holdout EER comparison")
    p.add_argument("--config", required=True)
    p.add_argument("--seed", type=int)
    p.add_argument("--tap", choices=sorted(_TAP_FLAGS))
    p.add_argument("--out", required=True)

    p = add("benchmark2", cmd_benchmark2,
            "multi-dataset preset grid, checkpoint filter and FT ensemble")
    p.add_argument("--config", required=True)
    p.add_argument("--seed", type=int)
    p.add_argument("--tap", choices=sorted(_TAP_FLAGS))
    p.add_argument("--out", required=True)

    p = add("evaluate", cmd_evaluate, "score a frozen pair list with checkpoint(s)")
    p.add_argument("--checkpoint", action="append", required=True)
    p.add_argument("--ensemble", action="store_true")
    p.add_argument("--pairs", required=True)
    p.add_argument("--manifest", action="append", required=True)
    p.add_argument("--tap", choices=sorted(_TAP_FLAGS))
    p.add_argument("--out", required=True)

    p = add("smoke-corpus", cmd_smoke_corpus, "render a synthetic portrait corpus")
    p.add_argument("--out", required=True)
    p.add_argument("--dataset-id", default="smoke")
    p.add_argument("--identities", type=int, default=12)
    p.add_argument("--images", type=int, default=4)
    p.add_argument("--size", type=int, default=96)
    p.add_argument("--seed", type=int, default=2024)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    try:
        return args.fn(args)
    except _DATA_ERRORS as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except MaskmatchError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_RUN


if __name__ == "__main__":
    sys.exit(main())
