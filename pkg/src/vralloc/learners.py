"""Per-SBS learners: ESN-based RL with optional utility transfer, and Q-learning.

All agents share one slot protocol so the simulator can drive them in lock
step:

1. ``propose()`` picks this slot's mixed strategy and returns its codebook
   index (normalized to [0, 1]) for broadcast;
2. ``act(indices)`` receives every SBS's index and samples an action;
3. ``learn(utility)`` consumes the realized SBS utility.

The strategy codebook has one entry for the uniform strategy (index 0) and one
epsilon-greedy strategy per action (index ``a + 1``), so an index identifies
which action an SBS currently favours.
"""

from __future__ import annotations

from typing import Optional, Sequence

import numpy as np

from .config import LearnerParams, as_seed_sequence
from .esn import EchoStateNetwork, calibrate_input_scaling
from .game import GameSpec

PROBE_STEPS = 200


def epsilon_at(t: int, params: LearnerParams) -> float:
    return max(params.epsilon_floor, params.epsilon_start * params.epsilon_decay ** t)


def epsilon_greedy(values: np.ndarray, eps: float) -> np.ndarray:
    """``1 - eps`` on the first argmax plus ``eps`` spread over all actions."""
    n = len(values)
    probs = np.full(n, eps / n)
    probs[int(np.argmax(values))] += 1.0 - eps
    return probs


class _Agent:
    kind = "agent"

    def __init__(self, n_actions: int, params: LearnerParams, seed):
        if n_actions < 1:
            raise ValueError("agent needs at least one action")
        self.n_actions = n_actions
        self.params = params
        self.t = 0
        self.strategy = np.full(n_actions, 1.0 / n_actions)
        self.strategy_index = 0
        self.last_action = -1
        self.rng = np.random.default_rng(seed)

    def values(self) -> np.ndarray:
        raise NotImplementedError

    def propose(self) -> float:
        self.t += 1
        if self.t == 1:
            self.strategy = np.full(self.n_actions, 1.0 / self.n_actions)
            self.strategy_index = 0
        else:
            values = self.values()
            self.strategy = epsilon_greedy(values, epsilon_at(self.t, self.params))
            self.strategy_index = int(np.argmax(values)) + 1
        return self.strategy_index / self.n_actions

    def act(self, indices: Sequence[float]) -> int:
        self.last_action = int(self.rng.choice(self.n_actions, p=self.strategy))
        return self.last_action

    def learn(self, utility: float) -> None:
        raise NotImplementedError

    def on_change(self, n_actions: Optional[int] = None) -> None:
        raise NotImplementedError

    def _check_actions(self, n_actions: Optional[int]) -> None:
        if n_actions is not None and n_actions != self.n_actions:
            raise ValueError("action set changed size; utility transfer needs a fixed action set")


class QAgent(_Agent):
    """Stateless (bandit) epsilon-greedy Q-learning.

    Correlation awareness is a property of the utilities the agent is fed,
    not of the update; the flag is kept for reporting.
    """

    kind = "q"

    def __init__(self, n_actions: int, params: LearnerParams, seed, correlation_aware: bool = True):
        super().__init__(n_actions, params, seed)
        self.q = np.zeros(n_actions)
        self.step_size = params.q_step_size
        self.correlation_aware = correlation_aware

    def values(self) -> np.ndarray:
        return self.q

    def learn(self, utility: float) -> None:
        a = self.last_action
        self.q[a] += self.step_size * (utility - self.q[a])

    def on_change(self, n_actions: Optional[int] = None) -> None:
        # a table learner restarts from scratch
        self._check_actions(n_actions)
        self.q[:] = 0.0
        self.t = 0


class EsnAgent(_Agent):
    """ESN utility estimator, optionally with an ESN utility-deviation estimator.

    The base network sees every SBS's strategy index (plus a bias input) and
    outputs one utility estimate per action; only the row of the played action
    is trained.  With ``transfer`` on, an environment change keeps the learned
    estimates as a reference and a second network learns how utilities
    deviate from them after the change.  Its input is the strategy indices
    plus the played action; its predictions fill in post-change targets for
    the actions not yet played since the change.  Without ``transfer`` a change resets
    the readout and the exploration schedule.
    """

    kind = "esn"

    def __init__(self, n_actions: int, n_players: int, params: LearnerParams, seed,
                 transfer: bool = True):
        super().__init__(n_actions, params, seed)
        base_ss, transfer_ss, action_ss, probe_ss = as_seed_sequence(seed).spawn(4)
        self.rng = np.random.default_rng(action_ss)
        # probe inputs: random strategy indices, then the bias or an action code
        probe = np.random.default_rng(probe_ss).uniform(0.0, 1.0, (PROBE_STEPS, n_players + 1))
        self.base = EchoStateNetwork(
            params.reservoir_size, n_players + 1, n_actions, seed=base_ss,
            spectral_radius=params.spectral_radius, learning_rate=params.learning_rate)
        calibrate_input_scaling(self.base, np.column_stack([probe[:, :-1], np.ones(PROBE_STEPS)]),
                                params.lms_step)
        self.transfer = transfer
        self.tnet: Optional[EchoStateNetwork] = None
        if transfer:
            self.tnet = EchoStateNetwork(
                params.reservoir_size, n_players + 1, 1, seed=transfer_ss,
                spectral_radius=params.spectral_radius,
                learning_rate=params.transfer_learning_rate)
            calibrate_input_scaling(self.tnet, probe, params.lms_step)
        self.updates = 0
        self.stored: Optional[np.ndarray] = None
        self.seen = np.zeros(n_actions, dtype=bool)
        self._indices = np.zeros(n_players)
        self._tnet_prev_state: Optional[np.ndarray] = None

    def values(self) -> np.ndarray:
        return self.base.predict()

    @property
    def transferring(self) -> bool:
        return self.stored is not None

    def _action_code(self, action) -> np.ndarray:
        return np.asarray(action, dtype=float) / max(self.n_actions - 1, 1)

    def _transfer_inputs(self, indices: np.ndarray) -> np.ndarray:
        """Transfer-net input for every candidate action, (n_actions, n_players + 1)."""
        codes = self._action_code(np.arange(self.n_actions))
        return np.column_stack([np.broadcast_to(indices, (self.n_actions, len(indices))), codes])

    def act(self, indices: Sequence[float]) -> int:
        indices = np.asarray(indices, dtype=float)
        self._indices = indices
        self.base.update(np.append(indices, 1.0))
        a = super().act(indices)
        if self.tnet is not None:
            self._tnet_prev_state = self.tnet.state.copy()
            self.tnet.update(np.append(indices, self._action_code(a)))
        self.updates += 1
        return a

    def predicted_deviation(self) -> np.ndarray:
        """Transfer-net deviation estimate for every action at the current step."""
        if self.tnet is None:
            return np.zeros(self.n_actions)
        state = self.tnet.state
        if self._tnet_prev_state is not None:
            self.tnet.state = self._tnet_prev_state
        try:
            return self.tnet.lookahead(self._transfer_inputs(self._indices))[:, 0]
        finally:
            self.tnet.state = state

    def learn(self, utility: float) -> None:
        if self.updates <= self.params.washout:
            return
        a = self.last_action
        if self.transferring:
            self.tnet.train([utility - self.stored[a]])
            self.seen[a] = True
            # actions not yet tried since the change borrow the transferred estimate
            rows = np.flatnonzero(~self.seen)
            targets = (self.stored + self.predicted_deviation())[rows]
            self.base.train(np.append(targets, utility), rows=np.append(rows, a))
        else:
            self.base.train([utility], rows=[a])

    def transfer_bootstrap(self, changed: bool = True, n_actions: Optional[int] = None
                           ) -> np.ndarray:
        """Post-change utility estimates: stored estimates plus predicted deviation.

        Without a change the current estimates are returned untouched.
        """
        self._check_actions(n_actions)
        current = self.base.predict()
        if not changed:
            return current
        if self.tnet is None:
            raise ValueError("agent was built without a transfer network")
        self.stored = current.copy()
        self.seen[:] = False
        self._tnet_prev_state = None
        deviation = self.tnet.lookahead(self._transfer_inputs(self._indices))[:, 0]
        return self.stored + deviation

    def on_change(self, n_actions: Optional[int] = None) -> None:
        self._check_actions(n_actions)
        if not self.transfer:
            self.base.reset_readout()
            self.t = 0
            return
        # warm estimates: keep the exploration clock running instead of restarting
        self.transfer_bootstrap(True)


def make_agent(learner: str, n_actions: int, n_players: int, params: LearnerParams, seed):
    if learner == "esn-transfer":
        return EsnAgent(n_actions, n_players, params, seed, transfer=True)
    if learner == "esn-plain":
        return EsnAgent(n_actions, n_players, params, seed, transfer=False)
    if learner == "q-corr":
        return QAgent(n_actions, params, seed, correlation_aware=True)
    if learner == "q-nocorr":
        return QAgent(n_actions, params, seed, correlation_aware=False)
    raise ValueError(f"unknown learner {learner!r}")


def self_play(spec: GameSpec, learner: str, params: LearnerParams, steps: int, seed: int,
              window: int = 500) -> tuple[list[np.ndarray], np.ndarray]:
    """Run one agent per player on a tabulated game.

    Returns the empirical action frequencies over the last ``window`` steps
    and the per-step utilities (steps, players).
    """
    payoffs = spec.payoff_tensor()
    seeds = as_seed_sequence(seed).spawn(spec.num_players)
    agents = [make_agent(learner, c, spec.num_players, params, s)
              for c, s in zip(spec.action_counts, seeds)]
    counts = [np.zeros(c) for c in spec.action_counts]
    trace = np.empty((steps, spec.num_players))
    for step in range(steps):
        indices = [agent.propose() for agent in agents]
        joint = tuple(agent.act(indices) for agent in agents)
        u = payoffs[joint]
        trace[step] = u
        for agent, value in zip(agents, u):
            agent.learn(float(value))
        if step >= steps - window:
            for c, a in zip(counts, joint):
                c[a] += 1
    return [c / c.sum() for c in counts], trace
