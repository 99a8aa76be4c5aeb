"""Character-level grid tagging with syntax fusion for aspect-opinion pair extraction."""

from .corpus import (ALL_CHAR, FIRST_CHAR, LABELS, CharGraph, LabelGrid, Sentence, Vocabs,
                     build_vocabs, char_relation_matrix, encode_gold_grid,
                     generate_synthetic_corpus, parse_corpus, read_corpus, write_corpus)
from .decode import (ExtractionResult, Metrics, decode_grid, decode_grid_bruteforce,
                     evaluate_model, gold_result, score)
from .model import GCGTS, PRESETS, ModelConfig, PredictionGrid, compute_loss
from .train import RunConfig, train

__version__ = "0.1.0"
