from ._grasp import (
    Cache,
    Checkpoint,
    GraspError,
    butterfly,
    butterfly_pairs,
    cayley,
    cost,
    diagnose,
    full_drift,
    gradcheck,
    load_cache,
    load_checkpoint,
    permutation_energy,
    prefix_score,
    random_orthogonal,
    ratio_contract,
    synthesize,
    train,
)

__version__ = "0.3.0"

__all__ = [
    "Cache",
    "Checkpoint",
    "GraspError",
    "butterfly",
    "butterfly_pairs",
    "cayley",
    "cost",
    "diagnose",
    "full_drift",
    "gradcheck",
    "load_cache",
    "load_checkpoint",
    "permutation_energy",
    "prefix_score",
    "random_orthogonal",
    "ratio_contract",
    "synthesize",
    "train",
]
