"""maskmatch: masked-probe vs unmasked-reference face verification toolkit.

Capabilities, one subpackage/module each:

    face_geometry     synthetic mask drawing with post-mask re-validation
    dataset_registry  manifests, identity-disjoint splits, image stores
    pair_protocol     pair sampling, hard-imposter mining, benchmark lists
    backbones/nn      numpy backbone presets and the training kernel
    verifier          shared-weight Siamese verifier, taps, ensembles
    contrastive       momentum-contrast instance-discrimination pretraining
    training          supervised finetuning with freezing and mining
    evaluation        FAR/FRR sweeps, EER, FRR100, ROC AUC, validation
    synthetic         procedural face corpora for smoke tests and demos
    cli               `maskmatch` command-line entry point
"""

from . import (
    augment,
    backbones,
    contrastive,
    dataset_registry,
    errors,
    evaluation,
    face_geometry,
    nn,
    pair_protocol,
    raster,
    seeding,
    synthetic,
    training,
    verifier,
)
from .backbones import BackboneSpec, make_backbone
from .contrastive import KeyQueue, PretrainConfig, contrastive_loss, pretrain_contrastive
from .dataset_registry import (
    DatasetIndex,
    ImageRecord,
    ImageStore,
    SplitAssignment,
    load_manifest,
    save_manifest,
    split_identities,
    stats,
)
from .evaluation import (
    MetricReport,
    PrecisionResult,
    ScoreSet,
    compute_metrics,
    eer,
    emit_report,
    far_frr_curve,
    frr100,
    model_scorer,
    roc_auc,
    score_pairs,
    validation_precision,
)
from .face_geometry import (
    FaceBox,
    LandmarkSet,
    MaskConfig,
    MaskingReport,
    MaskPolygon,
    apply_mask,
    build_mask_polygon,
    detect_primary_face,
    mask_dataset,
    predict_landmarks,
    verify_maskability,
)
from .pair_protocol import (
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
from .training import (
    EXPERIMENT_PRESETS,
    FinetuneConfig,
    TrainingRun,
    finetune_preset,
    finetune_supervised,
    freeze_fraction,
    multi_dataset_finetune,
)
from .verifier import (
    EnsembleModel,
    VerifierModel,
    distance_to_similarity,
    ensemble_similarity,
    load_checkpoint,
    save_checkpoint,
)

__version__ = "0.1.0"
