"""Shared ask/tell machinery: bounds, unit-box mapping, best-so-far bookkeeping."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from arrl.errors import AskPending, FitnessCountMismatch, TellBeforeAsk


@dataclass(frozen=True)
class OptBounds:
    lo: np.ndarray
    hi: np.ndarray

    def __post_init__(self):
        lo = np.asarray(self.lo, dtype=float).copy()
        hi = np.asarray(self.hi, dtype=float).copy()
        if lo.shape != hi.shape or lo.ndim != 1:
            raise ValueError("bounds must be two 1-D arrays of equal length")
        if not np.all(lo < hi):
            raise ValueError("every dimension needs lo < hi")
        object.__setattr__(self, "lo", lo)
        object.__setattr__(self, "hi", hi)

    @classmethod
    def unit(cls, dim: int) -> "OptBounds":
        return cls(np.zeros(dim), np.ones(dim))

    @property
    def dim(self) -> int:
        return len(self.lo)

    def clip(self, x: np.ndarray) -> np.ndarray:
        return np.clip(x, self.lo, self.hi)

    def contains(self, x: np.ndarray) -> bool:
        x = np.asarray(x)
        return bool(np.all(x >= self.lo) and np.all(x <= self.hi))


@dataclass
class Candidate:
    theta_prime: np.ndarray
    id: int
    fitness: float | None = None

    def set_fitness(self, value: float) -> None:
        if self.fitness is not None:
            raise ValueError(f"candidate {self.id} already has a fitness")
        self.fitness = float(value)


def normalize(x, bounds: OptBounds) -> np.ndarray:
    return (np.asarray(x, dtype=float) - bounds.lo) / (bounds.hi - bounds.lo)


def denormalize(u, bounds: OptBounds) -> np.ndarray:
    return bounds.lo + np.asarray(u, dtype=float) * (bounds.hi - bounds.lo)


def rng_state(rng: np.random.Generator) -> dict:
    return rng.bit_generator.state


def rng_from_state(state: dict) -> np.random.Generator:
    rng = np.random.default_rng()
    rng.bit_generator.state = state
    return rng


class AskTellOptimizer:
    """Ask/tell protocol around a minimiser.

    ``ask`` returns a ``(n, d)`` array of in-bounds candidates; ``tell`` takes
    their fitness in the same order.  With ``maximize=True`` fitness values are
    negated on the way in, so callers can speak in returns.
    """

    name = "base"

    def __init__(self, bounds: OptBounds, seed: int = 0, maximize: bool = False):
        self.bounds = bounds
        self.dim = bounds.dim
        self.maximize = maximize
        self.rng = np.random.default_rng(seed)
        self.seed = seed
        self.n_evals = 0
        self.n_asked = 0
        self.best_x: np.ndarray | None = None
        self._best_loss = np.inf
        self.best_history: list[float] = []
        self._pending: list[Candidate] | None = None

    # subclasses implement these two
    def _ask(self) -> np.ndarray:
        raise NotImplementedError

    def _tell(self, x: np.ndarray, loss: np.ndarray) -> None:
        raise NotImplementedError

    @property
    def best_fitness(self) -> float:
        """Best observed fitness in the caller's sign convention."""
        return -self._best_loss if self.maximize else self._best_loss

    @property
    def pending(self) -> list[Candidate] | None:
        return self._pending

    def ask(self) -> np.ndarray:
        if self._pending is not None:
            raise AskPending("tell the previous population before asking again")
        x = self.bounds.clip(np.atleast_2d(self._ask()))
        self._pending = [Candidate(xi.copy(), self.n_asked + i) for i, xi in enumerate(x)]
        self.n_asked += len(x)
        return x.copy()

    def tell(self, fitness) -> None:
        if self._pending is None:
            raise TellBeforeAsk("tell called without a pending ask")
        f = np.atleast_1d(np.asarray(fitness, dtype=float))
        if len(f) != len(self._pending):
            raise FitnessCountMismatch(f"expected {len(self._pending)} fitness values, got {len(f)}")
        for c, fi in zip(self._pending, f):
            c.set_fitness(fi)
        x = np.stack([c.theta_prime for c in self._pending])
        loss = -f if self.maximize else f
        self._pending = None
        for xi, li in zip(x, loss):
            self.n_evals += 1
            if li < self._best_loss:
                self._best_loss = float(li)
                self.best_x = xi.copy()
            self.best_history.append(self.best_fitness)
        self._tell(x, loss)

    @property
    def recommendation(self) -> np.ndarray:
        """Point the optimizer currently believes best (the search mean for ES)."""
        return self.best_x

    # -- snapshots

    def state_dict(self) -> dict:
        return {
            "name": self.name,
            "seed": self.seed,
            "maximize": self.maximize,
            "n_evals": self.n_evals,
            "n_asked": self.n_asked,
            "best_x": None if self.best_x is None else self.best_x.tolist(),
            "best_loss": self._best_loss,
            "best_history": list(self.best_history),
            "rng": rng_state(self.rng),
            "pending": None if self._pending is None else [c.theta_prime.tolist() for c in self._pending],
            "bounds": [self.bounds.lo.tolist(), self.bounds.hi.tolist()],
        }

    def load_state_dict(self, d: dict) -> None:
        self.n_evals, self.n_asked = d["n_evals"], d["n_asked"]
        self.best_x = None if d["best_x"] is None else np.asarray(d["best_x"])
        self._best_loss = d["best_loss"]
        self.best_history = list(d["best_history"])
        self.rng = rng_from_state(d["rng"])
        if d["pending"] is None:
            self._pending = None
        else:
            start = self.n_asked - len(d["pending"])
            self._pending = [Candidate(np.asarray(x), start + i) for i, x in enumerate(d["pending"])]
