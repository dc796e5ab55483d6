"""Test-based population-size adaptation ES for noisy objectives.

An isotropic ES: offspring are drawn around the mean with one global step
size, the best quarter is recombined, and the mean moves only part of the way
toward that recombined point (an exponentially recency-weighted average of
recombined points).  The step size follows cumulative path-length control.
Every ``window`` generations the fitness of the first and last generation in
the window are compared with a z-test; without significant progress the
population doubles (more averaging against noise), otherwise it shrinks by a
constant factor.  This approximates the population-control idea behind
pcCMSA-ES rather than reimplementing it.
"""

from __future__ import annotations

import math

import numpy as np

from arrl.optim.base import AskTellOptimizer, OptBounds


class TBPSA(AskTellOptimizer):
    name = "TBPSA"

    def __init__(self, bounds: OptBounds, x0=None, sigma0: float = 0.3, popsize: int | None = None,
                 mean_rate: float = 0.5, z_threshold: float = 2.0, window: int = 4,
                 seed: int = 0, maximize: bool = False):
        super().__init__(bounds, seed, maximize)
        self.mean = 0.5 * (bounds.lo + bounds.hi) if x0 is None else np.asarray(x0, dtype=float).copy()
        self.sigma = float(sigma0)
        self.min_lam = popsize or 4 * self.dim
        if self.min_lam < 4:
            raise ValueError("population size must be at least 4")
        self.lam = self.min_lam
        self.mean_rate = mean_rate
        self.z_threshold = z_threshold
        self.window = window
        self.ps = np.zeros(self.dim)
        n = self.dim
        self.chi_n = math.sqrt(n) * (1 - 1 / (4 * n) + 1 / (21 * n * n))
        self._z: np.ndarray | None = None
        self._record: list[np.ndarray] = []
        self.lambda_history: list[int] = [self.lam]
        self.last_z: float | None = None

    @property
    def mu(self) -> int:
        return max(1, self.lam // 4)

    def _ask(self) -> np.ndarray:
        self._z = self.rng.standard_normal((self.lam, self.dim))
        return self.mean + self.sigma * self._z

    def _tell(self, x: np.ndarray, loss: np.ndarray) -> None:
        mu, n = self.mu, self.dim
        if np.ptp(loss) == 0.0:
            return
        best = np.argsort(loss, kind="stable")[:mu]
        # steps measured on the clipped points actually evaluated
        z = (x[best] - self.mean) / self.sigma
        zw = z.mean(axis=0)
        self.mean = self.mean + self.mean_rate * self.sigma * zw
        cs = (mu + 2) / (n + mu + 5)
        damps = 1 + cs + 2 * max(0.0, math.sqrt((mu - 1) / (n + 1)) - 1)
        self.ps = (1 - cs) * self.ps + math.sqrt(cs * (2 - cs) * mu) * zw
        self.sigma *= math.exp(min(1.0, cs / damps * (np.linalg.norm(self.ps) / self.chi_n - 1)))
        self._record.append(np.asarray(loss, dtype=float))
        if len(self._record) >= self.window:
            self._adapt_population()

    def _adapt_population(self) -> None:
        first, last = self._record[0], self._record[-1]
        se = math.sqrt(np.var(first) / (len(first) - 1) + np.var(last) / (len(last) - 1))
        diff = float(np.mean(first) - np.mean(last))
        z = diff / se if se > 0 else (math.inf if diff > 0 else 0.0)
        self.last_z = z
        if z < self.z_threshold:
            self.lam *= 2
        else:
            self.lam = max(self.min_lam, int(self.lam * 0.84))
        self.lambda_history.append(self.lam)
        self._record = []

    @property
    def recommendation(self) -> np.ndarray:
        return self.bounds.clip(self.mean)

    def state_dict(self) -> dict:
        d = super().state_dict()
        d.update(mean=self.mean.tolist(), sigma=self.sigma, lam=self.lam, ps=self.ps.tolist(),
                 record=[r.tolist() for r in self._record], lambda_history=list(self.lambda_history))
        return d

    def load_state_dict(self, d: dict) -> None:
        super().load_state_dict(d)
        self.mean, self.sigma, self.lam = np.asarray(d["mean"]), d["sigma"], d["lam"]
        self.ps = np.asarray(d["ps"])
        self._record = [np.asarray(r) for r in d["record"]]
        self.lambda_history = list(d["lambda_history"])
