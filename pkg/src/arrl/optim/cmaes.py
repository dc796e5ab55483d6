"""Covariance matrix adaptation evolution strategy (full covariance, rank-one + rank-mu)."""

from __future__ import annotations

import math

import numpy as np

from arrl.optim.base import AskTellOptimizer, OptBounds

EIG_FLOOR = 1e-20


class CMAES(AskTellOptimizer):
    """(mu/mu_w, lambda)-CMA-ES with the default strategy parameters.

    Candidates are clipped into the bounds before they are handed out; the
    update uses the clipped points, so the mean never leaves the box.
    """

    name = "CMAES"

    def __init__(self, bounds: OptBounds, x0=None, sigma0: float = 0.3, popsize: int | None = None,
                 seed: int = 0, maximize: bool = False):
        super().__init__(bounds, seed, maximize)
        n = self.dim
        self.mean = 0.5 * (bounds.lo + bounds.hi) if x0 is None else np.asarray(x0, dtype=float).copy()
        self.sigma = float(sigma0)
        self.lam = popsize or 4 + int(3 * math.log(n))
        if self.lam < 2:
            raise ValueError("population size must be at least 2")
        self.mu = self.lam // 2
        w = math.log(self.mu + 0.5) - np.log(np.arange(1, self.mu + 1))
        self.weights = w / w.sum()
        self.mueff = 1.0 / float(np.sum(self.weights ** 2))
        self.cc = (4 + self.mueff / n) / (n + 4 + 2 * self.mueff / n)
        self.cs = (self.mueff + 2) / (n + self.mueff + 5)
        self.c1 = 2 / ((n + 1.3) ** 2 + self.mueff)
        self.cmu = min(1 - self.c1, 2 * (self.mueff - 2 + 1 / self.mueff) / ((n + 2) ** 2 + self.mueff))
        self.damps = 1 + 2 * max(0.0, math.sqrt((self.mueff - 1) / (n + 1)) - 1) + self.cs
        self.chi_n = math.sqrt(n) * (1 - 1 / (4 * n) + 1 / (21 * n * n))
        self.pc = np.zeros(n)
        self.ps = np.zeros(n)
        self.C = np.eye(n)
        self.B = np.eye(n)
        self.D = np.ones(n)
        self.generation = 0
        self.min_eigenvalue_history: list[float] = []

    def _ask(self) -> np.ndarray:
        z = self.rng.standard_normal((self.lam, self.dim))
        return self.mean + self.sigma * (z * self.D) @ self.B.T

    def _tell(self, x: np.ndarray, loss: np.ndarray) -> None:
        n = self.dim
        if np.ptp(loss) == 0.0:
            # a flat population carries no ranking information: keep the state
            self.generation += 1
            return
        order = np.argsort(loss, kind="stable")[: self.mu]
        old = self.mean
        y = (x[order] - old) / self.sigma
        yw = self.weights @ y
        self.mean = old + self.sigma * yw
        c_inv_sqrt = self.B @ np.diag(1.0 / self.D) @ self.B.T
        self.ps = (1 - self.cs) * self.ps + math.sqrt(self.cs * (2 - self.cs) * self.mueff) * (c_inv_sqrt @ yw)
        self.generation += 1
        ps_norm = float(np.linalg.norm(self.ps))
        hsig = ps_norm / math.sqrt(1 - (1 - self.cs) ** (2 * self.generation)) / self.chi_n < 1.4 + 2 / (n + 1)
        self.pc = (1 - self.cc) * self.pc + hsig * math.sqrt(self.cc * (2 - self.cc) * self.mueff) * yw
        rank_mu = (y.T * self.weights) @ y
        c1a = self.c1 * (1 - (1 - hsig) * self.cc * (2 - self.cc))
        self.C = (1 - c1a - self.cmu) * self.C + self.c1 * np.outer(self.pc, self.pc) + self.cmu * rank_mu
        self.sigma *= math.exp(min(1.0, (self.cs / self.damps) * (ps_norm / self.chi_n - 1)))
        self._decompose()

    def _decompose(self) -> None:
        self.C = 0.5 * (self.C + self.C.T)
        evals, evecs = np.linalg.eigh(self.C)
        self.min_eigenvalue_history.append(float(evals.min()))
        if evals.min() <= EIG_FLOOR:
            # restore positive definiteness by lifting the spectrum
            evals = np.maximum(evals, EIG_FLOOR)
            self.C = (evecs * evals) @ evecs.T
        self.D = np.sqrt(evals)
        self.B = evecs

    @property
    def recommendation(self) -> np.ndarray:
        return self.bounds.clip(self.mean)

    def state_dict(self) -> dict:
        d = super().state_dict()
        d.update(mean=self.mean.tolist(), sigma=self.sigma, lam=self.lam, pc=self.pc.tolist(),
                 ps=self.ps.tolist(), C=self.C.tolist(), generation=self.generation)
        return d

    def load_state_dict(self, d: dict) -> None:
        super().load_state_dict(d)
        self.mean, self.sigma = np.asarray(d["mean"]), d["sigma"]
        self.pc, self.ps, self.C = np.asarray(d["pc"]), np.asarray(d["ps"]), np.asarray(d["C"])
        self.generation = d["generation"]
        self._decompose()
