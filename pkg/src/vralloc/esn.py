"""Echo state network with an online (LMS) linear readout."""

from __future__ import annotations

import numpy as np


class EchoStateNetwork:
    """Fixed random reservoir plus a trainable linear readout.

    The reservoir follows ``state <- tanh(W @ state + W_in @ x)`` and the
    readout is ``y = W_out @ state``.  Training is the LMS step
    ``W_out <- W_out + lr * (target - y) state^T`` on the rows being trained.

    Attributes:
        w_in: (n_units, input_dim) input weights.
        w: (n_units, n_units) recurrent weights, scaled to ``spectral_radius``.
        w_out: (output_dim, n_units) readout weights, zero at start.
        state: (n_units,) current reservoir state.
        lr: readout learning rate.
    """

    def __init__(self, n_units: int, input_dim: int, output_dim: int = 1, seed=None,
                 spectral_radius: float = 0.9, input_scaling: float = 1.0,
                 learning_rate: float = 0.03):
        if n_units < 1:
            raise ValueError("need at least one reservoir unit")
        rng = np.random.default_rng(seed)
        self.w_in = input_scaling * rng.uniform(-1.0, 1.0, (n_units, input_dim))
        w = rng.uniform(-1.0, 1.0, (n_units, n_units))
        radius = np.max(np.abs(np.linalg.eigvals(w)))
        self.w = w * (spectral_radius / radius) if radius > 0 else w
        self.w_out = np.zeros((output_dim, n_units))
        self.state = np.zeros(n_units)
        self.lr = learning_rate

    @property
    def n_units(self) -> int:
        return self.w.shape[0]

    @property
    def input_dim(self) -> int:
        return self.w_in.shape[1]

    def _check_input(self, x) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        if x.shape != (self.input_dim,):
            raise ValueError(f"input has shape {x.shape}, expected ({self.input_dim},)")
        return x

    def update(self, x) -> np.ndarray:
        self.state = np.tanh(self.w @ self.state + self.w_in @ self._check_input(x))
        return self.state

    def predict(self) -> np.ndarray:
        return self.w_out @ self.state

    def train(self, target, rows=None) -> None:
        """One LMS step on the current state towards ``target``.

        ``rows`` restricts training to some readout rows; ``target`` then has
        one entry per listed row.
        """
        rows = slice(None) if rows is None else rows
        err = np.asarray(target, dtype=float) - self.w_out[rows] @ self.state
        self.w_out[rows] += self.lr * np.multiply.outer(err, self.state)

    def lookahead(self, inputs: np.ndarray) -> np.ndarray:
        """Readout after a hypothetical update with each row of ``inputs``.

        The state is left unchanged.  Returns (n_inputs, output_dim).
        """
        inputs = np.asarray(inputs, dtype=float)
        pre = (self.w @ self.state)[:, None] + self.w_in @ inputs.T
        return (self.w_out @ np.tanh(pre)).T

    def reset_readout(self) -> None:
        self.w_out[:] = 0.0


def calibrate_input_scaling(net: EchoStateNetwork, probe: np.ndarray, target_step: float,
                            iterations: int = 20, washout: int = 20, rtol: float = 0.01) -> float:
    """Rescale ``net.w_in`` so that ``lr * mean ||state||^2`` over ``probe`` is ``target_step``.

    The LMS readout is stable when ``lr * ||state||^2 < 2``; holding the mean
    step at a fixed value makes that independent of reservoir size and input
    width.  ``probe`` is a (steps, input_dim) input sequence.  The state is
    reset to zero afterwards.  Returns the overall factor applied.
    Saturating reservoirs need a few fixed-point rounds, hence the loop.
    """
    probe = np.asarray(probe, dtype=float)
    total = 1.0
    for _ in range(iterations):
        net.state = np.zeros(net.n_units)
        norms = []
        for k, x in enumerate(probe):
            s = net.update(x)
            if k >= washout:
                norms.append(s @ s)
        step = net.lr * float(np.mean(norms))
        if step <= 0 or abs(step / target_step - 1.0) <= rtol:
            break
        factor = np.sqrt(target_step / step)
        net.w_in *= factor
        total *= factor
    net.state = np.zeros(net.n_units)
    return total
