import numpy as np
import pytest

from osiris_ope.environments import canonical_dilly_dallying, canonical_express, three_state_mdp
from osiris_ope.mdp import MdpSpec, PolicySpec

# lines reported by the acceptance suite, printed in the terminal summary
ACCEPTANCE_LINES = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)


def chain_mdp(rewards, gamma=1.0):
    """Single-action deterministic chain 0 -> 1 -> ... -> n (terminal)."""
    n = len(rewards)
    P = np.zeros((n + 1, 1, n + 1))
    for s in range(n):
        P[s, 0, s + 1] = 1.0
    P[n, 0, n] = 1.0
    R = np.zeros((n + 1, 1))
    R[:n, 0] = rewards
    d0 = np.zeros(n + 1)
    d0[0] = 1.0
    return MdpSpec(P, R, d0, frozenset({n}), gamma, 50), PolicySpec(np.ones((n + 1, 1)))


def bandit_mdp(rewards):
    """One decision state whose actions end the episode with the given rewards."""
    A = len(rewards)
    P = np.zeros((2, A, 2))
    P[:, :, 1] = 1.0
    R = np.zeros((2, A))
    R[0] = rewards
    return MdpSpec(P, R, np.array([1.0, 0.0]), frozenset({1}), 1.0, 10)


def constant_q_mdp():
    """State 0 is irrelevant by construction: every action there has Q = 0.

    Both actions of state 0 lead to state 1, which moves to state 2 or 3 with
    equal probability independently of the action; those pay +1 and -1 on
    the way into terminal 4. The policies differ only at state 0.
    """
    P = np.zeros((5, 2, 5))
    R = np.zeros((5, 2))
    P[0, :, 1] = 1.0
    P[1, :, 2] = 0.5
    P[1, :, 3] = 0.5
    P[2, :, 4] = 1.0
    R[2, :] = 1.0
    P[3, :, 4] = 1.0
    R[3, :] = -1.0
    P[4, :, 4] = 1.0
    mdp = MdpSpec(P, R, np.array([1.0, 0, 0, 0, 0]), frozenset({4}), 1.0, 10)
    pe = np.full((5, 2), 0.5)
    pe[0] = [0.8, 0.2]
    pb = np.full((5, 2), 0.5)
    return mdp, PolicySpec(pe), PolicySpec(pb)


def relevant_state_mdp():
    """State 0 decides the outcome: action 0 pays 2, action 1 pays 0 (Q gap 2)."""
    mdp = bandit_mdp([2.0, 0.0])
    return mdp, PolicySpec(np.array([[0.8, 0.2], [0.5, 0.5]])), \
        PolicySpec(np.array([[0.5, 0.5], [0.5, 0.5]]))


@pytest.fixture(scope="session")
def dilly():
    return canonical_dilly_dallying()


@pytest.fixture(scope="session")
def express():
    return canonical_express()


@pytest.fixture(scope="session")
def three_state():
    return three_state_mdp()
