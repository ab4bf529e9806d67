"""Birth/mass-death Markov chain: transition law, equilibrium, bounds,
simulation, conditional prediction of unseen counts and estimation of
``theta = lam / mu`` from negative-jump magnitudes."""

__version__ = "0.1.0"

from .chain import ChainParams, StateDistribution, equilibrium, tail_R, transition, transition_matrix
from .sim import NegJumpRecord, SamplePath, extract_negjumps, sample_path
from .specfun import eval_L

__all__ = [
    "__version__",
    "ChainParams",
    "StateDistribution",
    "NegJumpRecord",
    "SamplePath",
    "equilibrium",
    "eval_L",
    "extract_negjumps",
    "sample_path",
    "tail_R",
    "transition",
    "transition_matrix",
]
