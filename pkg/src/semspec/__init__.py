"""Semantic specialization of multilingual sentence embeddings.

A small adapter on top of frozen sentence embeddings is fine-tuned with an
L2-constrained softmax plus center loss, while per-language discriminators
push the adapter to hide which language a sentence came from.
"""

from .config import HyperParams, VariantSpec, variant
from .dataset import Corpus, SyntheticSpec, generate_synthetic, load_corpus, write_corpus
from .evaluator import eval_pair_matrix, loo_intent_acc
from .trainer import SpecializationModel, train_run

__version__ = "0.1.0"

__all__ = [
    "Corpus", "HyperParams", "SpecializationModel", "SyntheticSpec", "VariantSpec",
    "eval_pair_matrix", "generate_synthetic", "load_corpus", "loo_intent_acc",
    "train_run", "variant", "write_corpus",
]
