"""All-pairs similarity search: sequential engines and parallel decompositions."""

from .core import (
    Dataset,
    InvertedIndex,
    MatchSet,
    SparseVector,
    brute_force_all_pairs,
    build_inverted_index,
    dot,
    matchsets_equivalent,
    normalize,
)
from .datasets import auto_threshold, gen_synthetic, load_dataset, save_dataset, threshold_advisor
from .msgfabric import Communicator, spawn_world
from .par1d import VerticalOpts, run_horizontal, run_vertical
from .par2d import run_mesh
from .seqengine import VARIANTS, run_variant

__all__ = [
    "Communicator",
    "Dataset",
    "InvertedIndex",
    "MatchSet",
    "SparseVector",
    "VARIANTS",
    "VerticalOpts",
    "auto_threshold",
    "brute_force_all_pairs",
    "build_inverted_index",
    "dot",
    "gen_synthetic",
    "load_dataset",
    "matchsets_equivalent",
    "normalize",
    "run_horizontal",
    "run_mesh",
    "run_variant",
    "run_vertical",
    "save_dataset",
    "spawn_world",
    "threshold_advisor",
]
