"""The 7 tunable base-controller parameters and their search box."""

from __future__ import annotations

from dataclasses import asdict, dataclass, fields

import numpy as np

PARAM_NAMES = ("A_over_omega", "omega", "Kpp", "Kdp", "Kpy", "Kdy", "delta_x")

OMEGA_BOUNDS = (2.0, 10.0)
GAIN_BOUNDS = (0.0, 0.1)
DELTA_X_BOUNDS = (0.0, 0.05)
AMPLITUDE_BOUNDS = {"Triangle": (8.0, 11.0)}
DEFAULT_AMPLITUDE_BOUNDS = (0.0, 3.0)


@dataclass(frozen=True)
class ResidualParams:
    A_over_omega: float
    omega: float
    Kpp: float
    Kdp: float
    Kpy: float
    Kdy: float
    delta_x: float

    def to_array(self) -> np.ndarray:
        return np.array([getattr(self, n) for n in PARAM_NAMES], dtype=float)

    @classmethod
    def from_array(cls, x) -> "ResidualParams":
        x = np.asarray(x, dtype=float).reshape(-1)
        if x.size != len(PARAM_NAMES):
            raise ValueError(f"expected {len(PARAM_NAMES)} values, got {x.size}")
        return cls(*(float(v) for v in x))

    def to_dict(self) -> dict[str, float]:
        return asdict(self)

    @classmethod
    def from_dict(cls, d: dict) -> "ResidualParams":
        return cls(**{f.name: float(d[f.name]) for f in fields(cls)})

    def replace(self, **kw) -> "ResidualParams":
        d = self.to_dict()
        d.update(kw)
        return ResidualParams(**d)


def param_bounds(gait_kind: str, omega_bounds: tuple[float, float] = OMEGA_BOUNDS) -> tuple[np.ndarray, np.ndarray]:
    """Box bounds ``(lo, hi)`` for the given gait kind."""
    amp = AMPLITUDE_BOUNDS.get(gait_kind, DEFAULT_AMPLITUDE_BOUNDS)
    pairs = [amp, omega_bounds, GAIN_BOUNDS, GAIN_BOUNDS, GAIN_BOUNDS, GAIN_BOUNDS, DELTA_X_BOUNDS]
    arr = np.array(pairs, dtype=float)
    return arr[:, 0].copy(), arr[:, 1].copy()


def clip_params(theta, gait_kind: str, omega_bounds=OMEGA_BOUNDS) -> ResidualParams:
    lo, hi = param_bounds(gait_kind, omega_bounds)
    arr = theta.to_array() if isinstance(theta, ResidualParams) else np.asarray(theta, dtype=float)
    return ResidualParams.from_array(np.clip(arr, lo, hi))


def in_bounds(theta: ResidualParams, gait_kind: str, omega_bounds=OMEGA_BOUNDS, tol: float = 0.0) -> bool:
    lo, hi = param_bounds(gait_kind, omega_bounds)
    x = theta.to_array()
    return bool(np.all(x >= lo - tol) and np.all(x <= hi + tol))


def sample_params(rng: np.random.Generator, gait_kind: str, omega_bounds=OMEGA_BOUNDS) -> ResidualParams:
    """Uniform draw over the box (the random initialisation of the base controller)."""
    lo, hi = param_bounds(gait_kind, omega_bounds)
    return ResidualParams.from_array(rng.uniform(lo, hi))
