"""Desk-scale text-based speech editing over acoustic feature sequences."""

from .corpus import (
    FEATURE_DIM,
    FeatureSequence,
    SyntheticCorpusSpec,
    Utterance,
    generate_synthetic,
    load_corpus,
    read_features,
    save_corpus,
    write_features,
)
from .editing import (
    DurationModel,
    EditPlan,
    EditResult,
    duration_predict,
    edit_one_step,
    edit_word_level_ar,
    fit_duration_model,
    plan_delete,
    plan_insert,
    plan_replace,
    run_edit,
)
from .errors import (
    AdaptError,
    CampNetError,
    EditError,
    FormatError,
    IngestError,
    IoError,
    MaskError,
    MetricError,
    ModelError,
    TrainError,
)
from .masking import MaskedFeatures, MaskSpan, apply_mask, paste_region, sample_mask_span
from .metrics import (
    DtwPath,
    MetricsReport,
    dtw,
    evaluate_edit,
    f0_corr,
    f0_rmse,
    mcd,
    vuv_error,
)
from .model import (
    CampNet,
    DecoderOutputs,
    ModelConfig,
    build_model,
    encode,
    extract_alignment,
    fine_decode,
    forward,
    load_checkpoint,
    prenet,
    save_checkpoint,
)
from .training import (
    LossReport,
    TrainConfig,
    adapt_few_shot,
    adapt_one_shot,
    build_target,
    loss,
    mask_ratio_sweep,
    train,
)
from .transcript import EditScript, PhonemeSequence, WordSpan, apply_edit_to_text

__version__ = "0.1.0"
