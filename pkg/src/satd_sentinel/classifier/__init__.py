from .detector import (
    DEFAULT_ONHOLD_PATTERNS,
    EXAMPLE_ONHOLD_PATTERN,
    PatternResult,
    SatdFinding,
    Source,
    classify_comment,
    compile_onhold_patterns,
    pattern_detect,
    pattern_scorer,
)
from .features import FeatureVector, Vocabulary, featurize, ngrams, tokenize
from .metrics import (
    EvalReport,
    auc_rank_sum,
    evaluate,
    fixed_scorer,
    majority_fitter,
    model_fitter,
    stratified_folds,
)
from .model import (
    Hyper,
    Label,
    LabeledCorpus,
    Model,
    load_bundled_model,
    load_desk_corpus,
    loss_and_grad,
    sigmoid,
    train,
)

__all__ = [
    "DEFAULT_ONHOLD_PATTERNS",
    "EXAMPLE_ONHOLD_PATTERN",
    "EvalReport",
    "FeatureVector",
    "Hyper",
    "Label",
    "LabeledCorpus",
    "Model",
    "PatternResult",
    "SatdFinding",
    "Source",
    "Vocabulary",
    "auc_rank_sum",
    "classify_comment",
    "compile_onhold_patterns",
    "evaluate",
    "featurize",
    "fixed_scorer",
    "load_bundled_model",
    "load_desk_corpus",
    "loss_and_grad",
    "majority_fitter",
    "model_fitter",
    "ngrams",
    "pattern_detect",
    "pattern_scorer",
    "sigmoid",
    "stratified_folds",
    "tokenize",
    "train",
]
