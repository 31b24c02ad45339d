"""NCAM: an auto-encoder over a manifold of neural cellular automata.

Images are encoded to continuous vectors (optionally re-encoded as
DNA-like categorical genes), mapped by a parameter predictor to the
weights of a per-image cellular-automaton update rule, and regrown from a
single-pixel seed.  Includes the gene-splicing workflow over learned
codes, a training harness, a CLI, and an HTTP inference service.
"""

from .autodiff import Tensor, no_grad
from .checkpoint import Checkpoint
from .datasets import Dataset, gen_glyphs, load_cifar10, load_png_dir
from .dna import DnaEncoding, discretize, from_letters, mutate, to_letters
from .genelab import MeanEncoding, grow_from_dna, mean_encoding, splice
from .model import ModelConfig, NcamModel
from .nca import CellGrid, NcaConfig, NcaParams, grow, perceive, seed_grid, step
from .training import EvalReport, TrainConfig, evaluate, train

__version__ = "0.1.0"

__all__ = [
    "Tensor", "no_grad", "Checkpoint", "Dataset", "gen_glyphs", "load_cifar10",
    "load_png_dir", "DnaEncoding", "discretize", "from_letters", "mutate",
    "to_letters", "MeanEncoding", "grow_from_dna", "mean_encoding", "splice",
    "ModelConfig", "NcamModel", "CellGrid", "NcaConfig", "NcaParams", "grow",
    "perceive", "seed_grid", "step", "EvalReport", "TrainConfig", "evaluate",
    "train",
]
