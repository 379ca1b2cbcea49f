"""Visual question answering with word-matched object attention, in numpy."""

from .ablation import AblationReport, run_ablation
from .attention import SelectionTrace, explain_trace, match_objects, select
from .checkpoint import Checkpoint, load_checkpoint, save_checkpoint
from .estimator import FDAClassifier
from .fusion import AnswerVocabulary
from .lexicon import Vocabulary, WordVectors, build_vocabulary, tokenize
from .model import VARIANTS, FDAModel, ModelDims, predict_multiple_choice, predict_open_ended
from .sceneworld import Dataset, SceneConfig, generate_dataset, generate_splits, world_word_vectors
from .training import MetricsTable, TrainConfig, evaluate, train

__version__ = "0.1.0"

__all__ = [
    "AblationReport", "AnswerVocabulary", "Checkpoint", "Dataset", "FDAClassifier", "FDAModel",
    "MetricsTable", "ModelDims", "SceneConfig", "SelectionTrace", "TrainConfig", "VARIANTS",
    "Vocabulary", "WordVectors", "build_vocabulary", "evaluate", "explain_trace",
    "generate_dataset", "generate_splits", "load_checkpoint", "match_objects",
    "predict_multiple_choice", "predict_open_ended", "run_ablation", "save_checkpoint", "select",
    "tokenize", "train", "world_word_vectors",
]
