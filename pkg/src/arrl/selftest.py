"""Fast built-in property checks, runnable without the test suite."""

from __future__ import annotations

import math
from typing import Callable

import numpy as np

from arrl.env import BipedEnv
from arrl.gaits import GaitKind, GaitSpec, gait_foot_target
from arrl.kinematics import FootTarget, LegGeometry, leg_fk, leg_ik
from arrl.nn import MLP, grad_check
from arrl.optim import CMAES, OptBounds, denormalize, normalize
from arrl.params import ResidualParams
from arrl.transfer import TransferSchedule, schedule_weight


def _ik_roundtrip() -> float:
    g = LegGeometry()
    rng = np.random.default_rng(0)
    r = rng.uniform(abs(g.thigh_len_b - g.shank_len_c) + 1e-3, g.thigh_len_b + g.shank_len_c - 1e-3, 1000)
    phi = rng.uniform(-math.pi, math.pi, 1000)
    worst = 0.0
    for ri, pi in zip(r, phi):
        t = FootTarget(ri * math.cos(pi), ri * math.sin(pi))
        f = leg_fk(leg_ik(t, g), g)
        worst = max(worst, math.hypot(f.x - t.x, f.y - t.y))
    return worst


def _gait_closure() -> float:
    g = LegGeometry()
    p = ResidualParams(1.5, 5.0, 0.05, 0.01, 0.0, 0.0, 0.03)
    worst = 0.0
    for kind in GaitKind:
        spec = GaitSpec.from_stance(kind, g)
        q = p.replace(A_over_omega=9.5) if kind is GaitKind.TRIANGLE else p
        T = 2 * math.pi / q.omega
        for t in np.linspace(0, T, 50):
            a, b = gait_foot_target(spec, q, t), gait_foot_target(spec, q, t + T)
            worst = max(worst, abs(a.x - b.x), abs(a.y - b.y))
    return worst


def _grad() -> float:
    net = MLP((6, 16, 16, 3), "tanh", rng=np.random.default_rng(1))
    return grad_check(net, np.random.default_rng(2).normal(size=(4, 6)))


def _replay() -> float:
    a = BipedEnv()
    b = BipedEnv()
    a.reset(3)
    b.reset(3)
    rng = np.random.default_rng(0)
    worst = 0.0
    for _ in range(50):
        act = rng.uniform(-1, 1, 8)
        ra, rb = a.step(act), b.step(act)
        worst = max(worst, float(np.max(np.abs(ra.next_state.as_array() - rb.next_state.as_array()))))
        if ra.done:
            break
    return worst


def _cmaes() -> float:
    opt = CMAES(OptBounds(-np.ones(3) * 5, np.ones(3) * 5), sigma0=2.0, seed=0)
    target = np.array([1.0, -2.0, 0.5])
    while opt.n_evals < 2000 and opt.best_fitness > 1e-10:
        x = opt.ask()
        opt.tell(np.sum((x - target) ** 2, axis=1))
    return opt.best_fitness


def _roundtrip() -> float:
    b = OptBounds(np.array([-1.0, 2.0]), np.array([3.0, 10.0]))
    x = np.random.default_rng(0).uniform(b.lo, b.hi, (1000, 2))
    return float(np.max(np.abs(denormalize(normalize(x, b), b) - x)))


def _schedule() -> float:
    s = TransferSchedule(k1=1.0, k2=0.5, A_set=1.0)
    w = 0.0
    trace = []
    for i, errs in enumerate([(0, 0), (0.2, 0), (0, 0), (0, 0), (0, 0)]):
        w = schedule_weight(i * 1.0, errs, s, w)
        trace.append(w)
    return float(np.max(np.abs(np.array(trace) - [0.0, 0.0, 1.0, 1.0, 1.0])))


CHECKS: list[tuple[str, Callable[[], float], float]] = [
    ("ik round trip (m)", _ik_roundtrip, 1e-9),
    ("gait periodic closure (m)", _gait_closure, 1e-9),
    ("grad check rel err", _grad, 1e-4),
    ("deterministic replay", _replay, 0.0),
    ("cmaes 3-d sphere", _cmaes, 1e-10),
    ("normalize round trip", _roundtrip, 1e-12),
    ("weight schedule trace", _schedule, 0.0),
]


def run_selftest(verbose: bool = False) -> bool:
    ok = True
    for name, fn, tol in CHECKS:
        value = fn()
        passed = value <= tol
        ok &= passed
        if verbose:
            print(f"{'PASS' if passed else 'FAIL'}  {name}: {value:.3g} (tol {tol:g})")
    return ok
