"""Gaussian-process Bayesian optimisation with expected improvement."""

from __future__ import annotations

import math
import warnings

import numpy as np
from scipy import linalg, optimize
from scipy.special import erfc
from scipy.stats import qmc

from arrl.errors import IllConditionedKernel
from arrl.optim.base import AskTellOptimizer, OptBounds, denormalize, normalize

JITTER_LADDER = (0.0, 1e-10, 1e-8, 1e-6, 1e-4)
_SQRT2 = math.sqrt(2.0)
_INV_SQRT_2PI = 1.0 / math.sqrt(2.0 * math.pi)


class GPModel:
    """Zero-mean GP with an ARD squared-exponential kernel.

    Targets are standardised internally; ``predict`` returns the mean and
    variance in the original units.
    """

    def __init__(self, dim: int, signal_var: float = 1.0, lengthscales=None, noise_var: float = 1e-6):
        self.dim = dim
        self.signal_var = float(signal_var)
        self.lengthscales = np.full(dim, 0.3) if lengthscales is None else np.asarray(lengthscales, dtype=float)
        self.noise_var = float(noise_var)
        self.jitter = 0.0
        self.x = np.zeros((0, dim))
        self.y = np.zeros(0)

    def kernel(self, a: np.ndarray, b: np.ndarray, lengthscales=None, signal_var=None) -> np.ndarray:
        ls = self.lengthscales if lengthscales is None else lengthscales
        sv = self.signal_var if signal_var is None else signal_var
        d = (a[:, None, :] - b[None, :, :]) / ls
        return sv * np.exp(-0.5 * np.sum(d * d, axis=-1))

    def _factor(self, k: np.ndarray):
        """Cholesky of ``k`` with escalating jitter on failure."""
        scale = max(float(np.mean(np.diag(k))), 1e-300)
        for j in JITTER_LADDER:
            try:
                return linalg.cholesky(k + j * scale * np.eye(len(k)), lower=True), j * scale
            except linalg.LinAlgError:
                continue
        raise IllConditionedKernel("kernel matrix is singular even with jitter; duplicate points?")

    def fit(self, x: np.ndarray, y: np.ndarray) -> "GPModel":
        self.x = np.atleast_2d(np.asarray(x, dtype=float))
        y = np.asarray(y, dtype=float)
        self.y_mean = float(np.mean(y))
        self.y_std = float(np.std(y)) or 1.0
        self.y = y
        z = (y - self.y_mean) / self.y_std
        k = self.kernel(self.x, self.x) + self.noise_var * np.eye(len(z))
        self.L, self.jitter = self._factor(k)
        self.alpha = linalg.cho_solve((self.L, True), z)
        return self

    def predict(self, xq: np.ndarray):
        xq = np.atleast_2d(xq)
        ks = self.kernel(xq, self.x)
        mu = ks @ self.alpha
        v = linalg.solve_triangular(self.L, ks.T, lower=True)
        var = self.signal_var - np.sum(v * v, axis=0)
        return self.y_mean + self.y_std * mu, (self.y_std ** 2) * var

    def neg_log_marginal_likelihood(self, log_params: np.ndarray) -> float:
        ls = np.exp(log_params[: self.dim])
        sv, nv = np.exp(log_params[self.dim]), np.exp(log_params[self.dim + 1])
        z = (self.y - self.y_mean) / self.y_std
        k = self.kernel(self.x, self.x, ls, sv) + (nv + 1e-10) * np.eye(len(z))
        try:
            lk = linalg.cholesky(k, lower=True)
        except linalg.LinAlgError:
            return 1e25
        a = linalg.cho_solve((lk, True), z)
        return float(0.5 * z @ a + np.sum(np.log(np.diag(lk))) + 0.5 * len(z) * math.log(2 * math.pi))

    def refit_hyperparameters(self, rng: np.random.Generator, restarts: int = 3, max_points: int = 150) -> None:
        """Maximise the log marginal likelihood over log-hyperparameters.

        Only the most recent ``max_points`` observations enter the likelihood,
        which bounds the cost of late refits.
        """
        x_all, y_all = self.x, self.y
        self.x, self.y = x_all[-max_points:], y_all[-max_points:]
        self.y_mean = float(np.mean(self.y))
        self.y_std = float(np.std(self.y)) or 1.0
        lo = np.r_[np.full(self.dim, math.log(0.02)), math.log(0.05), math.log(1e-8)]
        hi = np.r_[np.full(self.dim, math.log(5.0)), math.log(20.0), math.log(0.5)]
        starts = [np.r_[np.log(self.lengthscales), math.log(self.signal_var), math.log(self.noise_var)]]
        starts += [rng.uniform(lo, hi) for _ in range(restarts)]
        best = None
        for s0 in starts:
            with warnings.catch_warnings():
                warnings.simplefilter("ignore")
                res = optimize.minimize(self.neg_log_marginal_likelihood, np.clip(s0, lo, hi),
                                        method="L-BFGS-B", bounds=list(zip(lo, hi)))
            if best is None or res.fun < best.fun:
                best = res
        p = best.x
        self.lengthscales = np.exp(p[: self.dim])
        self.signal_var, self.noise_var = float(np.exp(p[self.dim])), float(np.exp(p[self.dim + 1]))
        self.fit(x_all, y_all)


def expected_improvement(mu, var, best: float, xi: float = 0.0) -> np.ndarray:
    """EI for minimisation: ``E[max(best - xi - f, 0)]``."""
    mu = np.asarray(mu, dtype=float)
    sd = np.sqrt(np.maximum(var, 0.0))
    imp = best - xi - mu
    with np.errstate(divide="ignore", invalid="ignore"):
        z = np.where(sd > 0, imp / np.where(sd > 0, sd, 1.0), 0.0)
    cdf = 0.5 * erfc(-z / _SQRT2)
    pdf = _INV_SQRT_2PI * np.exp(-0.5 * z * z)
    return np.where(sd > 0, imp * cdf + sd * pdf, np.maximum(imp, 0.0))


class BayesOpt(AskTellOptimizer):
    """One candidate per ask; the GP lives on the unit-box-normalised domain."""

    name = "BO"

    def __init__(self, bounds: OptBounds, n_init: int | None = None, refit_every: int = 5,
                 n_restarts: int = 10, xi: float = 0.0, seed: int = 0, maximize: bool = False):
        super().__init__(bounds, seed, maximize)
        self.n_init = max(n_init or 0, self.dim + 1)
        self.refit_every = refit_every
        self.n_restarts = n_restarts
        self.xi = xi
        sobol = qmc.Sobol(self.dim, scramble=True, seed=seed)
        self._init_points = sobol.random_base2(math.ceil(math.log2(self.n_init)))[: self.n_init]
        self.gp = GPModel(self.dim)
        self.xs: list[np.ndarray] = []
        self.ys: list[float] = []
        self._tells_since_refit = 0

    def _acquisition(self, u: np.ndarray) -> np.ndarray:
        mu, var = self.gp.predict(u)
        return expected_improvement(mu, var, min(self.ys), self.xi)

    def _ask(self) -> np.ndarray:
        if len(self.ys) < self.n_init:
            return denormalize(self._init_points[len(self.ys)], self.bounds)
        unit = [(0.0, 1.0)] * self.dim
        y_scale = self.gp.y_std

        def neg_ei(u):
            return -float(self._acquisition(u[None])[0]) / y_scale

        cands = list(self.rng.uniform(size=(256, self.dim)))
        scores = self._acquisition(np.array(cands))
        order = np.argsort(-scores)
        starts = [np.asarray(self.xs)[int(np.argmin(self.ys))]] + [cands[i] for i in order[: self.n_restarts - 1]]
        best_u, best_v = cands[order[0]], -scores[order[0]] / y_scale
        for s in starts:
            res = optimize.minimize(neg_ei, s, method="L-BFGS-B", bounds=unit)
            if res.fun < best_v:
                best_u, best_v = res.x, res.fun
        return denormalize(np.clip(best_u, 0.0, 1.0), self.bounds)

    def _tell(self, x: np.ndarray, loss: np.ndarray) -> None:
        for xi, li in zip(x, loss):
            self.xs.append(normalize(xi, self.bounds))
            self.ys.append(float(li))
        self._tells_since_refit += len(loss)
        self.gp.fit(np.asarray(self.xs), np.asarray(self.ys))
        if len(self.ys) >= self.n_init and self._tells_since_refit >= self.refit_every:
            self.gp.refit_hyperparameters(self.rng)
            self._tells_since_refit = 0

    def state_dict(self) -> dict:
        d = super().state_dict()
        d.update(xs=[x.tolist() for x in self.xs], ys=list(self.ys), tells_since_refit=self._tells_since_refit,
                 n_init=self.n_init, init_points=self._init_points.tolist(),
                 gp=dict(signal_var=self.gp.signal_var, lengthscales=self.gp.lengthscales.tolist(),
                         noise_var=self.gp.noise_var))
        return d

    def load_state_dict(self, d: dict) -> None:
        super().load_state_dict(d)
        self.xs = [np.asarray(x) for x in d["xs"]]
        self.ys = list(d["ys"])
        self._tells_since_refit = d["tells_since_refit"]
        self.n_init = d["n_init"]
        self._init_points = np.asarray(d["init_points"])
        g = d["gp"]
        self.gp = GPModel(self.dim, g["signal_var"], g["lengthscales"], g["noise_var"])
        if self.ys:
            self.gp.fit(np.asarray(self.xs), np.asarray(self.ys))
