"""Nested named entity recognition as latent lexicalized constituency parsing."""
from .chart import build_mask, inside_cyk, inside_eisner_satta, masked_log_numerator
from .config import TrainConfig, load_config
from .data import CorpusRecord, dump_jsonl, load_jsonl
from .decode import LexTree, Prediction, decode_sentence, label_entities, predict, viterbi_lexicalized
from .errors import (
    AnnotationError, EmptyInputError, IntegrityError, InvalidScoreError, LexCRFError,
    ParameterError, ParseError, UsageError, ValidationError, VersionError, WrongSemiringError,
)
from .evaluate import EvalReport, head_metrics, metrics_f1
from .io import load_model, save_model
from .losses import loss_label, loss_reg, loss_tree, multilabel_term
from .marginals import backward_marginals, expected_penalty_count, kl_closed_form, kl_constrained
from .synth import generate_synthetic_corpus, synthetic_splits
from .training import Checkpoint, adam_step, lr_schedule, train
from .types import Entity, EntitySet, MaskPlan, ScoreSet, Sentence

__version__ = "0.1.0"
