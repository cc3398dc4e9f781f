import numpy as np
import pytest
from hypothesis import given, strategies as st

from vralloc.config import LearnerParams
from vralloc.game import GameSpec, is_epsilon_ne
from vralloc.learners import (EsnAgent, QAgent, epsilon_at, epsilon_greedy, make_agent,
                              self_play)

SMALL = LearnerParams(reservoir_size=50)


def test_epsilon_schedule():
    p = LearnerParams()
    assert epsilon_at(0, p) == 0.5
    assert epsilon_at(100, p) == pytest.approx(0.5 * 0.995 ** 100)
    assert epsilon_at(10_000, p) == 0.01


@given(st.lists(st.floats(-10, 10), min_size=1, max_size=20), st.floats(0, 1))
def test_epsilon_greedy_vector(values, eps):
    probs = epsilon_greedy(np.array(values), eps)
    assert probs.sum() == pytest.approx(1.0)
    best = int(np.argmax(values))
    others = np.delete(probs, best)
    assert np.all(others >= eps / len(values) - 1e-15)
    assert probs[best] == pytest.approx(1 - eps + eps / len(values))


def test_epsilon_greedy_frequency():
    rng = np.random.default_rng(0)
    probs = epsilon_greedy(np.array([0.1, 0.9, 0.3, 0.2]), 0.1)
    picks = rng.choice(4, size=10_000, p=probs)
    assert np.mean(picks == 1) == pytest.approx(0.925, abs=0.01)


def test_epsilon_zero_is_argmax():
    probs = epsilon_greedy(np.array([0.1, 0.9, 0.3]), 0.0)
    np.testing.assert_array_equal(probs, [0, 1, 0])


@pytest.mark.parametrize("learner", ["esn-transfer", "esn-plain", "q-corr", "q-nocorr"])
def test_first_strategy_uniform(learner):
    agent = make_agent(learner, 5, 2, SMALL, 0)
    assert agent.propose() == 0.0
    np.testing.assert_array_equal(agent.strategy, np.full(5, 0.2))


def test_q_update_rules():
    agent = QAgent(3, LearnerParams(q_step_size=1.0), 0)
    agent.propose()
    a = agent.act([0.0])
    agent.learn(0.7)
    assert agent.q[a] == 0.7
    agent = QAgent(1, LearnerParams(q_step_size=0.25), 0)
    errs = []
    for _ in range(10):
        agent.propose()
        agent.act([0.0])
        agent.learn(2.0)
        errs.append(2.0 - agent.q[0])
    np.testing.assert_allclose(errs, 2.0 * 0.75 ** np.arange(1, 11))


def test_transfer_identity_when_deviation_net_zero():
    agent = EsnAgent(4, 2, SMALL, 0, transfer=True)
    for _ in range(30):
        agent.propose()
        agent.act([0.3, 0.6])
        agent.learn(1.0)
    before = agent.base.predict().copy()
    np.testing.assert_allclose(agent.transfer_bootstrap(changed=True), before)
    np.testing.assert_allclose(agent.transfer_bootstrap(changed=False), before)


def test_transfer_requires_same_action_set():
    agent = EsnAgent(4, 2, SMALL, 0, transfer=True)
    with pytest.raises(ValueError):
        agent.transfer_bootstrap(True, n_actions=5)


def test_deviation_net_learns_constant_shift():
    agent = EsnAgent(3, 2, SMALL, 1, transfer=True)
    rng = np.random.default_rng(0)
    stored = np.array([0.8, 0.5, 0.2])
    agent.stored = stored
    delta = -0.3
    for _ in range(200):
        agent.propose()
        a = agent.act(rng.uniform(0, 1, 2))
        agent.tnet.train([(stored[a] + delta) - stored[a]])
    pred = agent.predicted_deviation()
    np.testing.assert_allclose(pred, delta, rtol=0.1)


def test_plain_agent_restarts_on_change():
    agent = EsnAgent(3, 1, SMALL, 2, transfer=False)
    for _ in range(40):
        agent.propose()
        agent.act([0.5])
        agent.learn(1.0)
    agent.on_change()
    assert np.all(agent.base.w_out == 0) and agent.t == 0


def test_dominant_action_self_play():
    # action 2 strictly dominant for both players
    a = np.array([[0.2, 0.1, 0.0], [0.3, 0.2, 0.1], [0.9, 0.8, 0.7]])
    spec = GameSpec.bimatrix(a, a.T)
    for learner in ("esn-transfer", "q-corr"):
        freqs, _ = self_play(spec, learner, SMALL, 2000, seed=3, window=500)
        assert freqs[0][2] >= 0.95 and freqs[1][2] >= 0.95
        assert is_epsilon_ne(freqs, spec, 0.05)[0]
