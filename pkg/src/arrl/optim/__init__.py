"""Ask/tell black-box optimizers over box-bounded parameter vectors."""

from arrl.optim.base import AskTellOptimizer, Candidate, OptBounds, denormalize, normalize
from arrl.optim.bo import BayesOpt, GPModel, expected_improvement
from arrl.optim.cmaes import CMAES
from arrl.optim.tbpsa import TBPSA

OPTIMIZERS = {"CMAES": CMAES, "TBPSA": TBPSA, "BO": BayesOpt}


def make_optimizer(kind: str, bounds: OptBounds, seed: int = 0, maximize: bool = False, **kwargs):
    try:
        cls = OPTIMIZERS[kind]
    except KeyError:
        raise ValueError(f"unknown optimizer {kind!r}; expected one of {sorted(OPTIMIZERS)}") from None
    return cls(bounds, seed=seed, maximize=maximize, **kwargs)


__all__ = [
    "AskTellOptimizer", "BayesOpt", "CMAES", "Candidate", "GPModel", "OPTIMIZERS", "OptBounds",
    "TBPSA", "denormalize", "expected_improvement", "make_optimizer", "normalize",
]
