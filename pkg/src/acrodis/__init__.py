"""acrodis — acronym disambiguation as (expansion, sentence) pair classification.

A small numpy library for ranking candidate acronym expansions with a binary
classifier over two-segment inputs, plus the training strategies that make it
work: dynamic negative sample selection, task-adaptive masked-token
pretraining, adversarial perturbation of the embedding table, and
pseudo-labeling of unlabeled data.

Everything runs at desk scale on a single CPU core and is deterministic under
a seed.  The trainable encoder is a deliberately small self-attention stack;
any encoder exposing the same ``embed``/``encode`` surface can be slotted in
instead.
"""

from acrodis.core_types import (
    ExpansionDictionary,
    MetricsReport,
    PairInstance,
    Sample,
    ScoredPrediction,
    TrainConfig,
    normalize_expansion,
    validate_sample,
)
from acrodis.data_ingest import (
    CorpusStats,
    compute_stats,
    load_dataset,
    load_dictionary,
    save_dataset,
    save_dictionary,
    split,
)
from acrodis.pair_builder import (
    FormattedInput,
    Tokenizer,
    build_pairs,
    build_vocab,
    format_input,
)
from acrodis.model import (
    BinaryHead,
    DeskEncoder,
    DeskEncoderConfig,
    PairClassifier,
    extract_representation,
    head_forward,
    load_checkpoint,
    save_checkpoint,
    score_pair,
)
from acrodis.train_engine import (
    BatchPlan,
    TrainingStrategies,
    TrainState,
    adversarial_step,
    binary_loss,
    lr_schedule_update,
    plan_batches,
    train,
)
from acrodis.tapt_pretrain import MaskingPlan, make_masking_plan, tapt_train
from acrodis.pseudo_label import PseudoSample, harvest, merge_and_retrain
from acrodis.eval_report import (
    ErrorRecord,
    error_report,
    evaluate,
    mf_baseline,
    predict,
    predict_all,
)

__version__ = "0.1.0"
