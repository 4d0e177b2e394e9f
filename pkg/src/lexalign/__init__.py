"""Unsupervised bilingual word-embedding alignment toolkit.

Aligns two independently trained monolingual embedding spaces without
supervision: adversarial initialization with a cycle-consistency loss,
whitening-based symmetric re-weighting over induced seed dictionaries,
Coherent Point Drift registration, and CSLS dictionary generation.
"""

from lexalign.adversarial import AlignConfig, train_align
from lexalign.embeddings import EmbeddingSpace, load_vec, normalize, save_vec, synth_pair
from lexalign.metrics import CslsParams, SeedDictionary, induce_dictionary, selection_criterion
from lexalign.pipeline import PipelineConfig, generate_output, run_pipeline
from lexalign.registration import CpdConfig, SimilarityTransform, run_cpd

__version__ = "0.1.0"

__all__ = [
    "AlignConfig",
    "CpdConfig",
    "CslsParams",
    "EmbeddingSpace",
    "PipelineConfig",
    "SeedDictionary",
    "SimilarityTransform",
    "__version__",
    "generate_output",
    "induce_dictionary",
    "load_vec",
    "normalize",
    "run_cpd",
    "run_pipeline",
    "save_vec",
    "selection_criterion",
    "synth_pair",
    "train_align",
]
