"""Finite tabular MDPs, trajectory simulation and exact dynamic programming.

Everything here is immutable after construction. Trajectory sampling draws
inverse-CDF uniforms from a per-trajectory ``numpy.random.Generator``; the
generator for trajectory ``i`` of a batch is derived from ``(seed, i)`` so a
batch is reproducible no matter how its trajectories are split across
workers.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field
from typing import Iterator, Sequence

import numpy as np

PROB_TOL = 1e-12


class ValidationError(ValueError):
    """Malformed MDP, policy, trajectory or configuration."""


def _readonly(arr, dtype=float) -> np.ndarray:
    out = np.array(arr, dtype=dtype, copy=True)
    out.setflags(write=False)
    return out


def _check_prob_rows(probs: np.ndarray, name: str) -> None:
    if np.any(~np.isfinite(probs)):
        idx = tuple(int(i) for i in np.argwhere(~np.isfinite(probs))[0])
        raise ValidationError(f"{name}{list(idx)} is not finite")
    if np.any(probs < 0):
        idx = tuple(int(i) for i in np.argwhere(probs < 0)[0])
        raise ValidationError(f"{name}{list(idx)} is negative")
    sums = probs.sum(axis=-1)
    bad = np.argwhere(np.abs(sums - 1.0) > PROB_TOL)
    if len(bad):
        idx = tuple(int(i) for i in bad[0])
        raise ValidationError(
            f"{name}{list(idx)} sums to {sums[idx]!r}, expected 1")


@dataclass(frozen=True, eq=False)
class MdpSpec:
    """A finite episodic MDP.

    ``transition`` has shape ``(S, A, S)``, ``reward`` shape ``(S, A)``.
    Terminal states are absorbing: simulation stops on entering one, and
    rewards accrue on the transition into it.
    """

    transition: np.ndarray
    reward: np.ndarray
    initial_dist: np.ndarray
    terminal: frozenset = frozenset()
    gamma: float = 1.0
    t_max: int = 1000

    def __post_init__(self):
        P = _readonly(self.transition)
        R = _readonly(self.reward)
        d0 = _readonly(self.initial_dist)
        if P.ndim != 3 or P.shape[0] != P.shape[2]:
            raise ValidationError(f"transition must have shape (S, A, S), got {P.shape}")
        S, A, _ = P.shape
        if S < 1 or A < 1:
            raise ValidationError("MDP needs at least one state and one action")
        if R.shape != (S, A):
            raise ValidationError(f"reward must have shape {(S, A)}, got {R.shape}")
        if d0.shape != (S,):
            raise ValidationError(f"initial_dist must have shape {(S,)}, got {d0.shape}")
        _check_prob_rows(P, "transition")
        _check_prob_rows(d0, "initial_dist")
        if not np.all(np.isfinite(R)):
            raise ValidationError("reward contains non-finite entries")
        term = frozenset(int(s) for s in self.terminal)
        for s in term:
            if not 0 <= s < S:
                raise ValidationError(f"terminal state {s} out of range [0, {S})")
            if d0[s] > 0:
                raise ValidationError(f"initial_dist[{s}] puts mass on a terminal state")
        if not 0.0 <= float(self.gamma) <= 1.0:
            raise ValidationError(f"gamma must lie in [0, 1], got {self.gamma}")
        if int(self.t_max) < 1:
            raise ValidationError(f"t_max must be positive, got {self.t_max}")
        object.__setattr__(self, "transition", P)
        object.__setattr__(self, "reward", R)
        object.__setattr__(self, "initial_dist", d0)
        object.__setattr__(self, "terminal", term)
        object.__setattr__(self, "gamma", float(self.gamma))
        object.__setattr__(self, "t_max", int(self.t_max))

    @property
    def n_states(self) -> int:
        return self.transition.shape[0]

    @property
    def n_actions(self) -> int:
        return self.transition.shape[1]

    @property
    def terminal_mask(self) -> np.ndarray:
        mask = np.zeros(self.n_states, dtype=bool)
        mask[list(self.terminal)] = True
        return mask

    def __eq__(self, other):
        if not isinstance(other, MdpSpec):
            return NotImplemented
        return (np.array_equal(self.transition, other.transition)
                and np.array_equal(self.reward, other.reward)
                and np.array_equal(self.initial_dist, other.initial_dist)
                and self.terminal == other.terminal
                and self.gamma == other.gamma
                and self.t_max == other.t_max)

    __hash__ = None


@dataclass(frozen=True, eq=False)
class PolicySpec:
    """Per-state categorical action distribution, shape ``(S, A)``."""

    probs: np.ndarray

    def __post_init__(self):
        p = _readonly(self.probs)
        if p.ndim != 2:
            raise ValidationError(f"policy probs must be 2-D, got shape {p.shape}")
        _check_prob_rows(p, "policy")
        object.__setattr__(self, "probs", p)

    @property
    def n_states(self) -> int:
        return self.probs.shape[0]

    @property
    def n_actions(self) -> int:
        return self.probs.shape[1]

    @classmethod
    def epsilon_greedy(cls, greedy: Sequence, n_actions: int, eps) -> "PolicySpec":
        """Greedy action w.p. ``1 - eps``, uniform over all actions otherwise.

        ``greedy[s]`` may be ``None`` (e.g. terminal states), giving a uniform
        row. ``eps`` is a scalar or a per-state sequence.
        """
        n_states = len(greedy)
        eps = np.broadcast_to(np.asarray(eps, dtype=float), (n_states,))
        probs = np.empty((n_states, n_actions))
        for s, a in enumerate(greedy):
            if a is None:
                probs[s] = 1.0 / n_actions
                continue
            e = eps[s]
            if not 0.0 <= e <= 1.0:
                raise ValidationError(f"epsilon for state {s} outside [0, 1]: {e}")
            probs[s] = e / n_actions
            probs[s, a] = 1.0 - e + e / n_actions
        return cls(probs)

    def __eq__(self, other):
        if not isinstance(other, PolicySpec):
            return NotImplemented
        return np.array_equal(self.probs, other.probs)

    __hash__ = None


@dataclass(frozen=True, eq=False)
class RelevanceMapping:
    """Binary relevance bit per state; 1 keeps the state's likelihood ratio."""

    bits: np.ndarray

    def __post_init__(self):
        b = np.asarray(self.bits)
        if b.ndim != 1:
            raise ValidationError("relevance bits must be 1-D")
        if not np.all((b == 0) | (b == 1)):
            raise ValidationError("relevance bits must be 0 or 1")
        object.__setattr__(self, "bits", _readonly(b, dtype=np.int8))

    @classmethod
    def constant(cls, n_states: int, bit: int) -> "RelevanceMapping":
        return cls(np.full(n_states, bit, dtype=np.int8))

    @property
    def n_states(self) -> int:
        return len(self.bits)

    def __getitem__(self, s) -> int:
        return int(self.bits[s])

    def __eq__(self, other):
        if not isinstance(other, RelevanceMapping):
            return NotImplemented
        return np.array_equal(self.bits, other.bits)

    __hash__ = None


@dataclass(frozen=True, eq=False)
class TimedRelevanceMapping:
    """Relevance of a state to the reward ``dt`` steps away.

    ``bits[s, k]`` stores the bit for ``dt = k`` with ``0 <= k <= window``.
    Offsets beyond the window use ``default_future``; negative offsets use
    ``default_past``.
    """

    bits: np.ndarray
    default_future: int = 1
    default_past: int = 0

    def __post_init__(self):
        b = np.asarray(self.bits)
        if b.ndim != 2 or b.shape[1] < 1:
            raise ValidationError("timed relevance bits must have shape (S, window + 1)")
        if not np.all((b == 0) | (b == 1)):
            raise ValidationError("timed relevance bits must be 0 or 1")
        if self.default_future not in (0, 1) or self.default_past not in (0, 1):
            raise ValidationError("default bits must be 0 or 1")
        object.__setattr__(self, "bits", _readonly(b, dtype=np.int8))

    @property
    def window(self) -> int:
        return self.bits.shape[1] - 1

    @property
    def n_states(self) -> int:
        return self.bits.shape[0]

    @classmethod
    def constant(cls, n_states: int, bit: int) -> "TimedRelevanceMapping":
        return cls(np.full((n_states, 1), bit), default_future=bit, default_past=bit)

    @classmethod
    def pdis(cls, n_states: int) -> "TimedRelevanceMapping":
        """``1{dt >= 0}``: reduces step-wise OSIRIS to per-decision IS."""
        return cls(np.ones((n_states, 1)), default_future=1, default_past=0)

    def lookup(self, states, dts) -> np.ndarray:
        """Vectorised bit lookup; ``states`` and ``dts`` broadcast together."""
        states, dts = np.broadcast_arrays(np.asarray(states), np.asarray(dts))
        inside = self.bits[states, np.clip(dts, 0, self.window)]
        out = np.where(dts > self.window, self.default_future, inside)
        return np.where(dts < 0, self.default_past, out).astype(bool)


@dataclass(frozen=True, eq=False)
class Trajectory:
    """States ``s_1..s_{T+1}``, actions and rewards ``1..T``."""

    states: np.ndarray
    actions: np.ndarray
    rewards: np.ndarray
    truncated: bool = False

    def __post_init__(self):
        s = _readonly(self.states, dtype=np.int64)
        a = _readonly(self.actions, dtype=np.int64)
        r = _readonly(self.rewards)
        if len(s) != len(a) + 1 or len(a) != len(r):
            raise ValidationError(
                f"inconsistent trajectory lengths: {len(s)} states, "
                f"{len(a)} actions, {len(r)} rewards")
        object.__setattr__(self, "states", s)
        object.__setattr__(self, "actions", a)
        object.__setattr__(self, "rewards", r)

    @property
    def length(self) -> int:
        return len(self.actions)

    def __eq__(self, other):
        if not isinstance(other, Trajectory):
            return NotImplemented
        return (np.array_equal(self.states, other.states)
                and np.array_equal(self.actions, other.actions)
                and np.array_equal(self.rewards, other.rewards)
                and self.truncated == other.truncated)

    __hash__ = None


@dataclass(frozen=True, eq=False)
class TrajectoryBatch:
    """Trajectories stored as flat arrays.

    ``states`` concatenates every trajectory's ``T + 1`` states; ``actions``
    and ``rewards`` concatenate the ``T`` steps. Step ``j`` of the flat step
    arrays belongs to trajectory ``step_traj[j]`` and was taken in state
    ``step_states[j]``.
    """

    states: np.ndarray
    actions: np.ndarray
    rewards: np.ndarray
    lengths: np.ndarray
    truncated: np.ndarray
    seed: int | None = None
    source_policy_id: str = ""
    _cache: dict = field(default_factory=dict, repr=False, compare=False)

    def __post_init__(self):
        lengths = _readonly(self.lengths, dtype=np.int64)
        object.__setattr__(self, "lengths", lengths)
        object.__setattr__(self, "states", _readonly(self.states, dtype=np.int64))
        object.__setattr__(self, "actions", _readonly(self.actions, dtype=np.int64))
        object.__setattr__(self, "rewards", _readonly(self.rewards))
        object.__setattr__(self, "truncated", _readonly(self.truncated, dtype=bool))
        n_steps = int(lengths.sum())
        if (len(self.actions) != n_steps or len(self.rewards) != n_steps
                or len(self.states) != n_steps + len(lengths)
                or len(self.truncated) != len(lengths)):
            raise ValidationError("flat trajectory arrays do not match lengths")

    @classmethod
    def from_trajectories(cls, trajectories: Sequence[Trajectory], seed=None,
                          source_policy_id: str = "") -> "TrajectoryBatch":
        trajectories = list(trajectories)

        def cat(parts, dtype):
            return np.concatenate(parts).astype(dtype) if parts else np.zeros(0, dtype)

        return cls(
            states=cat([t.states for t in trajectories], np.int64),
            actions=cat([t.actions for t in trajectories], np.int64),
            rewards=cat([t.rewards for t in trajectories], float),
            lengths=np.array([t.length for t in trajectories], dtype=np.int64),
            truncated=np.array([t.truncated for t in trajectories], dtype=bool),
            seed=seed, source_policy_id=source_policy_id)

    def __len__(self) -> int:
        return len(self.lengths)

    @property
    def n(self) -> int:
        return len(self.lengths)

    @property
    def step_offsets(self) -> np.ndarray:
        """Start of each trajectory in the flat step arrays (length ``n + 1``)."""
        if "step_offsets" not in self._cache:
            off = np.zeros(self.n + 1, dtype=np.int64)
            np.cumsum(self.lengths, out=off[1:])
            self._cache["step_offsets"] = off
        return self._cache["step_offsets"]

    @property
    def step_traj(self) -> np.ndarray:
        if "step_traj" not in self._cache:
            self._cache["step_traj"] = np.repeat(np.arange(self.n), self.lengths)
        return self._cache["step_traj"]

    @property
    def step_time(self) -> np.ndarray:
        """Zero-based time index of each step within its trajectory."""
        if "step_time" not in self._cache:
            self._cache["step_time"] = (np.arange(len(self.actions))
                                        - self.step_offsets[:-1][self.step_traj])
        return self._cache["step_time"]

    @property
    def step_states(self) -> np.ndarray:
        if "step_states" not in self._cache:
            # state array index of step j is j + (trajectory index of j)
            self._cache["step_states"] = self.states[np.arange(len(self.actions))
                                                     + self.step_traj]
        return self._cache["step_states"]

    @property
    def final_states(self) -> np.ndarray:
        return self.states[self.step_offsets[1:] + np.arange(self.n)]

    def __getitem__(self, i: int) -> Trajectory:
        if not -self.n <= i < self.n:
            raise IndexError(i)
        i %= self.n
        lo, hi = self.step_offsets[i], self.step_offsets[i + 1]
        return Trajectory(self.states[lo + i:hi + i + 1], self.actions[lo:hi],
                          self.rewards[lo:hi], bool(self.truncated[i]))

    def __iter__(self) -> Iterator[Trajectory]:
        for i in range(self.n):
            yield self[i]

    @property
    def trajectories(self) -> tuple:
        return tuple(self)

    def __eq__(self, other):
        if not isinstance(other, TrajectoryBatch):
            return NotImplemented
        return (np.array_equal(self.states, other.states)
                and np.array_equal(self.actions, other.actions)
                and np.array_equal(self.rewards, other.rewards)
                and np.array_equal(self.lengths, other.lengths)
                and np.array_equal(self.truncated, other.truncated))

    __hash__ = None


# --------------------------------------------------------------------------
# simulation

def trajectory_stream(seed: int, index: int) -> np.random.Generator:
    """Independent random stream for trajectory ``index`` of batch ``seed``."""
    return np.random.Generator(
        np.random.PCG64(np.random.SeedSequence(int(seed), spawn_key=(int(index),))))


def _icdf_table(probs: np.ndarray) -> np.ndarray:
    """Cumulative table whose searches never land on a zero-probability entry."""
    cum = np.cumsum(probs, axis=-1)
    flat = cum.reshape(-1, probs.shape[-1])
    last_pos = probs.shape[-1] - 1 - np.argmax(
        probs.reshape(-1, probs.shape[-1])[:, ::-1] > 0, axis=1)
    cols = np.arange(probs.shape[-1])
    flat[cols[None, :] >= last_pos[:, None]] = 1.0
    return flat.reshape(cum.shape)


def _check_compatible(mdp: MdpSpec, policy: PolicySpec) -> None:
    if policy.probs.shape != (mdp.n_states, mdp.n_actions):
        raise ValidationError(
            f"policy shape {policy.probs.shape} does not match MDP "
            f"({mdp.n_states}, {mdp.n_actions})")


def _draw(cum_row: np.ndarray, u: float) -> int:
    return int(np.count_nonzero(cum_row <= u))


def sample_trajectory(mdp: MdpSpec, policy: PolicySpec,
                      rng: np.random.Generator) -> Trajectory:
    """Roll out one episode, stopping at a terminal state or after ``t_max`` steps.

    Uniform draws are consumed in a fixed order (initial state, then action
    and successor for every step) so ``sample_batch`` can vectorise the same
    stream.
    """
    _check_compatible(mdp, policy)
    cum_pi = _icdf_table(policy.probs)
    cum_P = _icdf_table(mdp.transition)
    cum_d0 = _icdf_table(mdp.initial_dist[None, :])[0]
    term = mdp.terminal_mask
    s = _draw(cum_d0, rng.random())
    states, actions, rewards = [s], [], []
    while not term[s] and len(actions) < mdp.t_max:
        a = _draw(cum_pi[s], rng.random())
        s_next = _draw(cum_P[s, a], rng.random())
        actions.append(a)
        rewards.append(mdp.reward[s, a])
        states.append(s_next)
        s = s_next
    return Trajectory(states, actions, rewards, truncated=not term[s])


_BLOCK = 4096


def sample_batch(mdp: MdpSpec, policy: PolicySpec, n: int, seed: int,
                 source_policy_id: str = "", start_index: int = 0) -> TrajectoryBatch:
    """Sample ``n`` i.i.d. trajectories.

    Trajectory ``i`` uses ``trajectory_stream(seed, start_index + i)`` and is
    bit-identical to ``sample_trajectory`` on that stream. Trajectories are
    advanced together one step at a time, in blocks of ``_BLOCK`` to bound
    memory.
    """
    if n < 1:
        raise ValidationError(f"batch size must be positive, got {n}")
    _check_compatible(mdp, policy)
    tables = (_icdf_table(policy.probs), _icdf_table(mdp.transition),
              _icdf_table(mdp.initial_dist[None, :])[0])
    parts = [_sample_block(mdp, tables, seed, start_index + lo, min(_BLOCK, n - lo))
             for lo in range(0, n, _BLOCK)]
    states, actions, rewards, lengths = (np.concatenate(x) for x in zip(*parts))
    final = states[np.cumsum(lengths + 1) - 1]
    return TrajectoryBatch(
        states=states, actions=actions, rewards=rewards, lengths=lengths,
        truncated=~mdp.terminal_mask[final], seed=int(seed),
        source_policy_id=source_policy_id)


def _sample_block(mdp: MdpSpec, tables, seed: int, first: int, n: int):
    cum_pi, cum_P, cum_d0 = tables
    term = mdp.terminal_mask
    t_max = mdp.t_max
    streams = [trajectory_stream(seed, first + i) for i in range(n)]
    chunk = min(t_max, 32)
    U = np.stack([g.random(1 + 2 * chunk) for g in streams])
    drawn = chunk  # steps covered by uniforms in U

    cap = chunk
    S_hist = np.zeros((n, cap + 1), dtype=np.int64)
    A_hist = np.zeros((n, cap), dtype=np.int64)
    R_hist = np.zeros((n, cap))
    S_hist[:, 0] = np.count_nonzero(cum_d0[None, :] <= U[:, :1], axis=1)
    lengths = np.zeros(n, dtype=np.int64)
    active = np.flatnonzero(~term[S_hist[:, 0]])
    t = 0
    while active.size and t < t_max:
        if t >= drawn:
            extra = min(t_max - drawn, max(chunk, drawn))
            more = np.zeros((n, 2 * extra))
            for i in active:
                more[i] = streams[i].random(2 * extra)
            U = np.concatenate([U, more], axis=1)
            drawn += extra
        if t >= cap:
            grow = max(cap, 1)
            S_hist = np.pad(S_hist, ((0, 0), (0, grow)))
            A_hist = np.pad(A_hist, ((0, 0), (0, grow)))
            R_hist = np.pad(R_hist, ((0, 0), (0, grow)))
            cap += grow
        s = S_hist[active, t]
        ua = U[active, 1 + 2 * t]
        a = np.count_nonzero(cum_pi[s] <= ua[:, None], axis=1)
        us = U[active, 2 + 2 * t]
        s_next = np.count_nonzero(cum_P[s, a] <= us[:, None], axis=1)
        A_hist[active, t] = a
        R_hist[active, t] = mdp.reward[s, a]
        S_hist[active, t + 1] = s_next
        lengths[active] = t + 1
        t += 1
        active = active[~term[s_next]]

    step_mask = np.arange(cap)[None, :] < lengths[:, None]
    state_mask = np.arange(cap + 1)[None, :] <= lengths[:, None]
    return S_hist[state_mask], A_hist[step_mask], R_hist[step_mask], lengths


def return_between(traj: Trajectory, t1: int, t2: int, gamma: float) -> float:
    """Discounted reward sum from step ``t1`` to ``t2`` (1-based, inclusive)."""
    if t1 < 1 or t1 > traj.length:
        raise ValidationError(f"t1={t1} outside [1, T={traj.length}]")
    if t2 > traj.length:
        raise ValidationError(f"t2={t2} exceeds T={traj.length}")
    if t2 < t1:
        return 0.0
    r = traj.rewards[t1 - 1:t2]
    return float(np.sum(gamma ** np.arange(len(r)) * r))


def trajectory_returns(batch: TrajectoryBatch, gamma: float) -> np.ndarray:
    """Full discounted return ``g(tau)`` of every trajectory in the batch."""
    disc = batch.rewards * gamma ** batch.step_time
    return segment_sum(disc, batch.lengths)


def segment_sum(values: np.ndarray, lengths: np.ndarray) -> np.ndarray:
    out = np.zeros(len(lengths))
    nz = lengths > 0
    if nz.any():
        starts = np.concatenate([[0], np.cumsum(lengths)[:-1]])
        out[nz] = np.add.reduceat(values, starts[nz])
    return out


def segment_prod(values: np.ndarray, lengths: np.ndarray) -> np.ndarray:
    """Per-segment products; empty segments give 1."""
    out = np.ones(len(lengths))
    nz = lengths > 0
    if nz.any():
        starts = np.concatenate([[0], np.cumsum(lengths)[:-1]])
        out[nz] = np.multiply.reduceat(values, starts[nz])
    return out


# --------------------------------------------------------------------------
# exact dynamic programming

def _backward_induction(mdp: MdpSpec, policy: PolicySpec):
    _check_compatible(mdp, policy)
    term = mdp.terminal_mask
    V = np.zeros(mdp.n_states)
    Q = np.zeros((mdp.n_states, mdp.n_actions))
    for _ in range(mdp.t_max):
        Q = mdp.reward + mdp.gamma * (mdp.transition @ V)
        Q[term] = 0.0
        V_new = np.einsum("sa,sa->s", policy.probs, Q)
        if np.array_equal(V_new, V):
            break
        V = V_new
    return V, Q


def unabsorbed_mass(mdp: MdpSpec, policy: PolicySpec) -> float:
    """Probability that an episode is still running after ``t_max`` steps."""
    _check_compatible(mdp, policy)
    live = ~mdp.terminal_mask
    P_pi = np.einsum("sa,sat->st", policy.probs, mdp.transition)
    p = mdp.initial_dist.copy()
    for _ in range(mdp.t_max):
        p = (p * live) @ P_pi
        if not p[live].any():
            break
    return float(p[live].sum())


def state_values(mdp: MdpSpec, policy: PolicySpec) -> np.ndarray:
    """``V^pi(s)`` by backward induction over ``t_max`` steps."""
    return _backward_induction(mdp, policy)[0]


def exact_policy_value(mdp: MdpSpec, policy: PolicySpec) -> float:
    """Expected return of ``policy`` from the initial distribution.

    Warns when more than 1e-9 of the probability mass has not terminated
    after ``t_max`` steps, since the value is then a truncated one.
    """
    V = state_values(mdp, policy)
    leftover = unabsorbed_mass(mdp, policy)
    if leftover > 1e-9:
        warnings.warn(f"{leftover:.3g} of episodes do not terminate within "
                      f"t_max={mdp.t_max}; value is truncated", RuntimeWarning)
    return float(mdp.initial_dist @ V)


def exact_q(mdp: MdpSpec, policy: PolicySpec) -> np.ndarray:
    """``Q^pi(s, a)``; rows of terminal states are zero."""
    return _backward_induction(mdp, policy)[1]


def composite_policy(pi_e: PolicySpec, pi_b: PolicySpec,
                     theta: RelevanceMapping) -> PolicySpec:
    """Follow ``pi_e`` where ``theta`` is 1 and ``pi_b`` where it is 0."""
    if pi_e.probs.shape != pi_b.probs.shape:
        raise ValidationError("evaluation and behavior policies differ in shape")
    if theta.n_states != pi_e.n_states:
        raise ValidationError("relevance mapping does not cover every state")
    keep = theta.bits.astype(bool)[:, None]
    return PolicySpec(np.where(keep, pi_e.probs, pi_b.probs))


def _action_support(pi_e: PolicySpec, pi_b: PolicySpec | None) -> np.ndarray:
    if pi_b is None:
        return np.ones_like(pi_e.probs, dtype=bool)
    return (pi_e.probs > 0) | (pi_b.probs > 0)


def true_relevance(mdp: MdpSpec, pi_e: PolicySpec, tol: float = 1e-9,
                   pi_b: PolicySpec | None = None) -> RelevanceMapping:
    """A state is relevant when its evaluation-policy Q-values differ across actions.

    The Q-range is taken over actions either policy can take (every action when
    ``pi_b`` is omitted); terminal states are irrelevant.
    """
    if tol <= 0:
        raise ValidationError("tol must be positive")
    Q = exact_q(mdp, pi_e)
    support = _action_support(pi_e, pi_b)
    hi = np.where(support, Q, -np.inf).max(axis=1)
    lo = np.where(support, Q, np.inf).min(axis=1)
    bits = (hi - lo > tol).astype(np.int8)
    bits[mdp.terminal_mask] = 0
    return RelevanceMapping(bits)


def expected_rewards_ahead(mdp: MdpSpec, pi_e: PolicySpec, window: int) -> np.ndarray:
    """``m[k, s, a] = E[r_{t+k} | s_t = s, a_t = a]`` under ``pi_e`` for ``k <= window``.

    Rewards after termination count as zero.
    """
    term = mdp.terminal_mask
    m = np.zeros((window + 1, mdp.n_states, mdp.n_actions))
    m[0] = np.where(term[:, None], 0.0, mdp.reward)
    for k in range(1, window + 1):
        per_state = np.einsum("sa,sa->s", pi_e.probs, m[k - 1])
        per_state[term] = 0.0
        m[k] = mdp.transition @ per_state
        m[k][term] = 0.0
    return m


def true_timed_relevance(mdp: MdpSpec, pi_e: PolicySpec, window: int,
                         tol: float = 1e-9, pi_b: PolicySpec | None = None,
                         default_future: int = 1) -> TimedRelevanceMapping:
    """Relevance of each state to the reward ``dt`` steps ahead, ``0 <= dt <= window``.

    Negative offsets are irrelevant (the action at ``t`` cannot change earlier
    rewards). Offsets past the window fall back to ``default_future``; keeping
    ratios (1) never introduces bias.
    """
    m = expected_rewards_ahead(mdp, pi_e, window)
    support = _action_support(pi_e, pi_b)[None]
    hi = np.where(support, m, -np.inf).max(axis=2)
    lo = np.where(support, m, np.inf).min(axis=2)
    bits = (hi - lo > tol).astype(np.int8).T
    bits[mdp.terminal_mask] = 0
    return TimedRelevanceMapping(bits, default_future=default_future, default_past=0)
