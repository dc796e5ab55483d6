"""Feed-forward networks with hand-written reverse-mode differentiation.

``forward`` returns the output together with a tape (the cached layer
activations); ``backward`` replays that tape in reverse.  Keeping the tape
outside the network lets one network be differentiated along several
independent forward passes, e.g. a critic evaluated on both buffer and
policy actions within one update.
"""

from __future__ import annotations

import numpy as np

_ACT = {
    "relu": (lambda z: np.maximum(z, 0.0), lambda z, y: (z > 0.0).astype(z.dtype)),
    "tanh": (np.tanh, lambda z, y: 1.0 - y * y),
    "linear": (lambda z: z, lambda z, y: np.ones_like(z)),
}


class MLP:
    """Fully connected network ``sizes[0] -> ... -> sizes[-1]``."""

    def __init__(self, sizes, activation: str = "relu", out_activation: str = "linear",
                 rng: np.random.Generator | None = None, dtype=np.float64):
        if len(sizes) < 2:
            raise ValueError("need at least input and output sizes")
        rng = rng or np.random.default_rng(0)
        self.sizes = tuple(int(s) for s in sizes)
        self.activation = activation
        self.out_activation = out_activation
        self.params: list[np.ndarray] = []
        for fan_in, fan_out in zip(self.sizes[:-1], self.sizes[1:]):
            bound = 1.0 / np.sqrt(fan_in)
            self.params.append(rng.uniform(-bound, bound, size=(fan_in, fan_out)).astype(dtype))
            self.params.append(rng.uniform(-bound, bound, size=fan_out).astype(dtype))

    @property
    def n_layers(self) -> int:
        return len(self.sizes) - 1

    def _act(self, i: int) -> str:
        return self.out_activation if i == self.n_layers - 1 else self.activation

    def forward(self, x: np.ndarray):
        h = np.asarray(x, dtype=self.params[0].dtype)
        tape = [h]
        for i in range(self.n_layers):
            z = h @ self.params[2 * i] + self.params[2 * i + 1]
            h = _ACT[self._act(i)][0](z)
            tape.append((z, h))
        return h, tape

    def __call__(self, x: np.ndarray) -> np.ndarray:
        return self.forward(x)[0]

    def backward(self, tape, grad_out: np.ndarray):
        """Gradients of ``sum(grad_out * output)`` w.r.t. parameters and input."""
        grads = [None] * len(self.params)
        g = grad_out
        for i in reversed(range(self.n_layers)):
            z, y = tape[i + 1]
            g = g * _ACT[self._act(i)][1](z, y)
            h_in = tape[i][1] if i > 0 else tape[0]
            grads[2 * i] = h_in.T @ g
            grads[2 * i + 1] = g.sum(axis=0)
            g = g @ self.params[2 * i].T
        return grads, g

    # -- parameter utilities

    def copy(self) -> "MLP":
        other = MLP.__new__(MLP)
        other.sizes, other.activation, other.out_activation = self.sizes, self.activation, self.out_activation
        other.params = [p.copy() for p in self.params]
        return other

    def load_params(self, params) -> None:
        for dst, src in zip(self.params, params):
            dst[...] = src

    def soft_update(self, source: "MLP", tau: float) -> None:
        """Polyak averaging ``self <- tau*source + (1-tau)*self``."""
        if tau == 1.0:
            self.load_params(source.params)
            return
        for dst, src in zip(self.params, source.params):
            dst *= 1.0 - tau
            dst += tau * src

    def named_tensors(self, prefix: str) -> dict[str, np.ndarray]:
        out = {}
        for i in range(self.n_layers):
            out[f"{prefix}.l{i}.weight"] = self.params[2 * i]
            out[f"{prefix}.l{i}.bias"] = self.params[2 * i + 1]
        return out

    def spec(self) -> dict:
        return {"sizes": list(self.sizes), "activation": self.activation, "out_activation": self.out_activation}


class Adam:
    def __init__(self, params, lr: float = 3e-4, betas=(0.9, 0.999), eps: float = 1e-8):
        self.params = params
        self.lr = lr
        self.b1, self.b2 = betas
        self.eps = eps
        self.t = 0
        self.m = [np.zeros_like(p) for p in params]
        self.v = [np.zeros_like(p) for p in params]

    def step(self, grads) -> None:
        if self.lr == 0.0:
            return
        self.t += 1
        c1 = 1.0 - self.b1 ** self.t
        c2 = 1.0 - self.b2 ** self.t
        for p, g, m, v in zip(self.params, grads, self.m, self.v):
            m *= self.b1
            m += (1.0 - self.b1) * g
            v *= self.b2
            v += (1.0 - self.b2) * g * g
            p -= self.lr * (m / c1) / (np.sqrt(v / c2) + self.eps)

    def state_dict(self) -> dict:
        return {"t": self.t, "m": [m.copy() for m in self.m], "v": [v.copy() for v in self.v]}


def _rel_err(a: np.ndarray, b: np.ndarray, floor: float = 1e-7) -> float:
    a, b = np.ravel(a), np.ravel(b)
    return float(np.max(np.abs(a - b) / np.maximum(np.maximum(np.abs(a), np.abs(b)), floor)))


def _relu_pattern(net: MLP, x: np.ndarray) -> tuple[float, np.ndarray | None]:
    y, tape = net.forward(x)
    hidden = [z > 0.0 for i, (z, _) in enumerate(tape[1:]) if net._act(i) == "relu"]
    return y, (np.concatenate([m.ravel() for m in hidden]) if hidden else None)


def grad_check(net: MLP, x: np.ndarray, h: float = 1e-5, weights: np.ndarray | None = None,
               rng: np.random.Generator | None = None, return_skipped: bool = False):
    """Max relative error of reverse-mode gradients against central differences.

    The scalar probed is ``sum(weights * net(x))`` with random ``weights``
    unless given, so every output unit contributes.  Gradient entries below
    ``1e-7`` in magnitude are compared on an absolute scale.  Entries whose
    ``+-h`` probes flip any ReLU on or off straddle a kink, where the central
    difference does not estimate the derivative; they are left out.

    Returns:
        The error, or ``(error, n_skipped, n_checked)`` with ``return_skipped``.
    """
    x = np.atleast_2d(np.asarray(x, dtype=np.float64))
    if weights is None:
        rng = rng or np.random.default_rng(0)
        weights = rng.standard_normal((x.shape[0], net.sizes[-1]))
    y, tape = net.forward(x)
    grads, gx = net.backward(tape, weights)
    _, base = _relu_pattern(net, x)
    skipped = checked = 0

    def diff(set_value, old) -> float:
        nonlocal skipped
        set_value(old + h)
        yp, mp = _relu_pattern(net, x)
        set_value(old - h)
        ym, mm = _relu_pattern(net, x)
        set_value(old)
        if base is not None and not (np.array_equal(mp, base) and np.array_equal(mm, base)):
            skipped += 1
            return np.nan
        return (float(np.sum(weights * yp)) - float(np.sum(weights * ym))) / (2 * h)

    worst = 0.0
    pairs = [(p, g) for p, g in zip(net.params, grads)] + [(x, gx)]
    for p, g in pairs:
        num = np.empty_like(p)
        flat, nflat = p.reshape(-1), num.reshape(-1)
        for j in range(flat.size):
            nflat[j] = diff(lambda v: flat.__setitem__(j, v), flat[j])
        ok = ~np.isnan(num)
        checked += int(ok.sum())
        if ok.any():
            worst = max(worst, _rel_err(g[ok], num[ok]))
    return (worst, skipped, checked) if return_skipped else worst
