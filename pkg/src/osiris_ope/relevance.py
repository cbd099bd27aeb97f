"""Estimating which states are relevant to the return from logged data.

For each visit to a state the weighted return-to-go ``g_{t:T} * rho_{t:T}`` is
put in one of two samples according to a binary action partition, and a
two-sample test decides whether the samples differ. States stay irrelevant
unless the test rejects.

The weight-to-go ``rho_{t:T}`` includes the ratio of the action taken at the
tested state, so its expectation given ``(s, a)`` is ``rho_t(a) * Q(s, a)``.
A state whose Q-values are all equal but nonzero can therefore still be
flagged. Setting ``include_current_ratio=False`` uses ``rho_{t+1:T}`` instead,
whose expectation is ``Q(s, a)`` itself.
"""

from __future__ import annotations

from dataclasses import asdict, dataclass, fields, replace

import numpy as np

from .estimators import WeightConfig, _raise_first, step_ratios
from .mdp import RelevanceMapping, TrajectoryBatch, ValidationError, trajectory_returns
from .stats import TestResult, smirnov_test, welch_t_test

TEST_KINDS = ("welch", "smirnov")
PARTITION_KINDS = ("ratio_binary", "return_binary")
# metadata tag recorded with every run: repeat visits all enter the test
VISIT_POLICY = "all_visits"


@dataclass(frozen=True)
class RelevanceConfig:
    alpha: float = 0.05
    test_kind: str = "welch"
    partition_kind: str = "ratio_binary"
    min_samples_per_side: int = 2
    include_current_ratio: bool = True

    def __post_init__(self):
        if not 0.0 <= self.alpha <= 1.0:
            raise ValidationError(f"alpha must lie in [0, 1], got {self.alpha}")
        if self.test_kind not in TEST_KINDS:
            raise ValidationError(f"unknown test_kind {self.test_kind!r}; expected one of {TEST_KINDS}")
        if self.partition_kind not in PARTITION_KINDS:
            raise ValidationError(
                f"unknown partition_kind {self.partition_kind!r}; expected one of {PARTITION_KINDS}")
        if self.min_samples_per_side < 1:
            raise ValidationError("min_samples_per_side must be positive")

    def with_alpha(self, alpha: float) -> "RelevanceConfig":
        return replace(self, alpha=alpha)

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, d: dict) -> "RelevanceConfig":
        unknown = set(d) - {f.name for f in fields(cls)}
        if unknown:
            raise ValidationError(f"unknown relevance fields: {sorted(unknown)}")
        return cls(**d)


@dataclass(frozen=True, eq=False)
class SampleSplit:
    g_plus: np.ndarray
    g_minus: np.ndarray


@dataclass(frozen=True, eq=False)
class VisitTable:
    """One row per step of the batch: state, partition side and weighted return-to-go."""

    state: np.ndarray
    positive: np.ndarray
    value: np.ndarray


def visit_table(batch: TrajectoryBatch, cfg: WeightConfig, gamma: float,
                partition_kind: str = "ratio_binary",
                include_current_ratio: bool = True) -> VisitTable:
    """Weighted returns-to-go for every visit in the batch."""
    if partition_kind not in PARTITION_KINDS:
        raise ValidationError(f"unknown partition_kind {partition_kind!r}")
    n_steps = len(batch.actions)
    if n_steps == 0:
        empty = np.zeros(0)
        return VisitTable(np.zeros(0, dtype=np.int64), empty.astype(bool), empty)
    ratio, status = step_ratios(batch, cfg)
    _raise_first(batch, status, np.ones(n_steps, dtype=bool))
    off = batch.step_offsets
    value = np.empty(n_steps)
    for i in range(batch.n):
        lo, hi = off[i], off[i + 1]
        if lo == hi:
            continue
        r = batch.rewards[lo:hi]
        g = np.empty(hi - lo)
        acc = 0.0
        for k in range(hi - lo - 1, -1, -1):
            acc = r[k] + gamma * acc
            g[k] = acc
        w = np.cumprod(ratio[lo:hi][::-1])[::-1]
        if not include_current_ratio:
            w = np.append(w[1:], 1.0)
        value[lo:hi] = g * w
    if partition_kind == "ratio_binary":
        positive = ratio > 1.0
    else:
        returns = trajectory_returns(batch, gamma)
        positive = (returns > returns.mean())[batch.step_traj]
    return VisitTable(batch.step_states.copy(), positive, value)


def collect_split(batch: TrajectoryBatch, s: int, cfg: WeightConfig, gamma: float,
                  partition_kind: str = "ratio_binary",
                  include_current_ratio: bool = True) -> SampleSplit:
    """Weighted returns-to-go from every visit to ``s``, split by action class.

    Ties (ratio exactly 1, or return equal to the batch mean) go to ``g_minus``.
    """
    table = visit_table(batch, cfg, gamma, partition_kind, include_current_ratio)
    return _split(table, s)


def _split(table: VisitTable, s: int) -> SampleSplit:
    at = table.state == s
    return SampleSplit(table.value[at & table.positive], table.value[at & ~table.positive])


def run_test(split: SampleSplit, rcfg: RelevanceConfig) -> TestResult:
    test = welch_t_test if rcfg.test_kind == "welch" else smirnov_test
    return test(split.g_plus, split.g_minus, rcfg.alpha)


def _decide(split: SampleSplit, rcfg: RelevanceConfig) -> int:
    visited = len(split.g_plus) + len(split.g_minus) > 0
    if rcfg.alpha == 0.0:
        return 0
    if rcfg.alpha == 1.0:
        return int(visited)
    k = rcfg.min_samples_per_side
    if len(split.g_plus) < k or len(split.g_minus) < k:
        return 0
    return int(run_test(split, rcfg).reject)


def estimate_relevance(batch: TrajectoryBatch, s: int, wcfg: WeightConfig,
                       rcfg: RelevanceConfig, gamma: float = 1.0) -> int:
    """1 when the test finds the action class at ``s`` changes the return."""
    return _decide(collect_split(batch, s, wcfg, gamma, rcfg.partition_kind,
                                 rcfg.include_current_ratio), rcfg)


def estimate_relevance_map(batch: TrajectoryBatch, wcfg: WeightConfig,
                           rcfg: RelevanceConfig, gamma: float = 1.0) -> RelevanceMapping:
    bits = np.zeros(wcfg.n_states, dtype=np.int8)
    if len(batch) == 0 or rcfg.alpha == 0.0:
        return RelevanceMapping(bits)
    table = visit_table(batch, wcfg, gamma, rcfg.partition_kind, rcfg.include_current_ratio)
    for s in np.unique(table.state):
        bits[s] = _decide(_split(table, s), rcfg)
    return RelevanceMapping(bits)


def discretize(points, bins_per_dim: int):
    """Assign points to cells of a grid with linearly spaced bins per dimension.

    Bins span each dimension's observed range; the maximum lands in the top
    bin. A constant dimension gets a single bin. Returns the cell index of
    each point (row-major over dimensions) and the bin edges per dimension.
    """
    if bins_per_dim < 1:
        raise ValidationError("bins_per_dim must be positive")
    X = np.asarray(points, dtype=float)
    if X.ndim == 1:
        X = X[:, None]
    if X.ndim != 2 or len(X) == 0:
        raise ValidationError("points must be a non-empty sequence of equal-length vectors")
    idx = np.zeros(X.shape, dtype=np.int64)
    radix, edges = [], []
    for d in range(X.shape[1]):
        lo, hi = X[:, d].min(), X[:, d].max()
        if hi == lo:
            edges.append(np.array([lo, hi]))
            radix.append(1)
            continue
        e = np.linspace(lo, hi, bins_per_dim + 1)
        idx[:, d] = np.clip(np.searchsorted(e, X[:, d], side="right") - 1, 0, bins_per_dim - 1)
        edges.append(e)
        radix.append(bins_per_dim)
    cells = np.ravel_multi_index(tuple(idx.T), tuple(radix))
    return cells, edges
