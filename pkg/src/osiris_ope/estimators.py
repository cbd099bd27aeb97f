"""Importance-sampling estimators and their OSIRIS variants.

OSIRIS keeps the likelihood ratio of a step only when the relevance mapping
marks its state as relevant; every omitted ratio is replaced by 1. The
omitted product is carried along as a diagnostic since
``kept * omitted == ordinary IS weight``.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .mdp import (PolicySpec, RelevanceMapping, TimedRelevanceMapping,
                  TrajectoryBatch, ValidationError, segment_prod, segment_sum,
                  trajectory_returns)

_OK, _UNSUPPORTED, _IMPOSSIBLE = 0, 1, 2


class SupportError(ValueError):
    """A kept step has zero behavior probability."""

    def __init__(self, state: int, action: int, impossible: bool = False):
        self.state, self.action = int(state), int(action)
        why = ("has zero probability under both policies" if impossible
               else "has zero behavior probability but positive evaluation probability")
        super().__init__(f"(state={self.state}, action={self.action}) {why}")


class EstimationError(ValueError):
    """The estimate is undefined for this batch (e.g. empty, or zero total weight)."""


@dataclass(frozen=True)
class WeightConfig:
    pi_e: PolicySpec
    pi_b: PolicySpec
    theta: RelevanceMapping | None = None

    def __post_init__(self):
        if self.pi_e.probs.shape != self.pi_b.probs.shape:
            raise ValidationError("evaluation and behavior policies differ in shape")
        if self.theta is not None and self.theta.n_states != self.pi_e.n_states:
            raise ValidationError("relevance mapping does not cover every state")

    @property
    def n_states(self) -> int:
        return self.pi_e.n_states

    @property
    def theta_bits(self) -> np.ndarray:
        if self.theta is None:
            return np.ones(self.n_states, dtype=np.int8)
        return self.theta.bits

    def with_theta(self, theta: RelevanceMapping | None) -> "WeightConfig":
        return WeightConfig(self.pi_e, self.pi_b, theta)

    def ratio_table(self):
        """``(ratios, status)`` arrays of shape ``(S, A)``; invalid ratios are NaN."""
        pe, pb = self.pi_e.probs, self.pi_b.probs
        with np.errstate(divide="ignore", invalid="ignore"):
            ratios = np.where(pb > 0, pe / pb, np.nan)
        status = np.where(pb > 0, _OK, np.where(pe > 0, _UNSUPPORTED, _IMPOSSIBLE))
        return ratios, status


@dataclass(frozen=True, eq=False)
class EstimatorReport:
    estimate: float
    per_traj_weight: np.ndarray
    per_traj_return: np.ndarray
    per_traj_omitted_weight: np.ndarray
    effective_length: np.ndarray
    estimator_id: str
    n: int

    def to_dict(self) -> dict:
        return {
            "estimator_id": self.estimator_id,
            "estimate": self.estimate,
            "n": self.n,
            "per_traj_weight": self.per_traj_weight.tolist(),
            "per_traj_return": self.per_traj_return.tolist(),
            "per_traj_omitted_weight": self.per_traj_omitted_weight.tolist(),
            "effective_length": self.effective_length.tolist(),
        }


def likelihood_ratio(cfg: WeightConfig, s: int, a: int) -> float:
    pe, pb = cfg.pi_e.probs[s, a], cfg.pi_b.probs[s, a]
    if pb <= 0:
        raise SupportError(s, a, impossible=pe <= 0)
    return float(pe / pb)


def step_ratios(batch: TrajectoryBatch, cfg: WeightConfig):
    """Per-step likelihood ratios and validity status for a batch."""
    ratios, status = cfg.ratio_table()
    s, a = batch.step_states, batch.actions
    return ratios[s, a], status[s, a]


def _raise_first(batch: TrajectoryBatch, status: np.ndarray, mask: np.ndarray):
    bad = np.flatnonzero(mask & (status != _OK))
    if bad.size:
        j = bad[0]
        raise SupportError(batch.step_states[j], batch.actions[j],
                           impossible=status[j] == _IMPOSSIBLE)


def osiris_weights(batch: TrajectoryBatch, cfg: WeightConfig):
    """Kept and omitted weight products plus effective lengths for every trajectory.

    Omitted products that would need an unsupported ratio are NaN; only a
    kept unsupported ratio raises.
    """
    ratio, status = step_ratios(batch, cfg)
    keep = cfg.theta_bits[batch.step_states].astype(bool)
    _raise_first(batch, status, keep)
    kept = segment_prod(np.where(keep, ratio, 1.0), batch.lengths)
    omitted = segment_prod(np.where(keep, 1.0, ratio), batch.lengths)
    eff = segment_sum(keep.astype(float), batch.lengths).astype(np.int64)
    return kept, omitted, eff


def osiris_weight(traj, cfg: WeightConfig):
    """``(kept, omitted)`` products for one trajectory."""
    batch = TrajectoryBatch.from_trajectories([traj])
    kept, omitted, _ = osiris_weights(batch, cfg)
    return float(kept[0]), float(omitted[0])


def _require(batch: TrajectoryBatch):
    if len(batch) == 0:
        raise EstimationError("cannot estimate from an empty batch")


def _report(estimate, weight, returns, omitted, eff, eid, n):
    return EstimatorReport(float(estimate), weight, returns, omitted, eff, eid, n)


def mc_estimate(batch: TrajectoryBatch, gamma: float = 1.0) -> EstimatorReport:
    """On-policy Monte Carlo: the mean return."""
    _require(batch)
    g = trajectory_returns(batch, gamma)
    ones = np.ones(batch.n)
    return _report(g.mean(), ones, g, ones.copy(), batch.lengths.copy(), "mc", batch.n)


def osiris_estimate(batch: TrajectoryBatch, cfg: WeightConfig,
                    gamma: float = 1.0, estimator_id: str = "osiris") -> EstimatorReport:
    """Mean of ``g(tau) * rho_theta(tau)``."""
    _require(batch)
    g = trajectory_returns(batch, gamma)
    kept, omitted, eff = osiris_weights(batch, cfg)
    return _report(np.mean(g * kept), kept, g, omitted, eff, estimator_id, batch.n)


def is_estimate(batch: TrajectoryBatch, cfg: WeightConfig,
                gamma: float = 1.0) -> EstimatorReport:
    """Ordinary importance sampling; any relevance mapping in ``cfg`` is ignored."""
    return osiris_estimate(batch, cfg.with_theta(None), gamma, estimator_id="is")


def _self_normalised(g, w):
    total = w.sum()
    if not total > 0:
        raise EstimationError("total importance weight is zero; estimate undefined")
    est = np.dot(g, w) / total
    # convex combination of returns; clip away rounding
    return min(max(est, g.min()), g.max())


def osirwis_estimate(batch: TrajectoryBatch, cfg: WeightConfig,
                     gamma: float = 1.0, estimator_id: str = "osirwis") -> EstimatorReport:
    """Self-normalised OSIRIS: ``sum(g * rho_theta) / sum(rho_theta)``."""
    _require(batch)
    g = trajectory_returns(batch, gamma)
    kept, omitted, eff = osiris_weights(batch, cfg)
    return _report(_self_normalised(g, kept), kept, g, omitted, eff, estimator_id, batch.n)


def wis_estimate(batch: TrajectoryBatch, cfg: WeightConfig,
                 gamma: float = 1.0) -> EstimatorReport:
    return osirwis_estimate(batch, cfg.with_theta(None), gamma, estimator_id="wis")


def pdis_estimate(batch: TrajectoryBatch, cfg: WeightConfig,
                  gamma: float = 1.0) -> EstimatorReport:
    """Per-decision IS: each reward weighted by the ratio product up to its step."""
    _require(batch)
    ratio, status = step_ratios(batch, cfg)
    _raise_first(batch, status, np.ones(len(ratio), dtype=bool))
    off = batch.step_offsets
    cum = np.empty_like(ratio)
    for i in range(batch.n):
        np.cumprod(ratio[off[i]:off[i + 1]], out=cum[off[i]:off[i + 1]])
    disc_r = batch.rewards * gamma ** batch.step_time
    per_traj = segment_sum(disc_r * cum, batch.lengths)
    g = trajectory_returns(batch, gamma)
    full = segment_prod(ratio, batch.lengths)
    return _report(per_traj.mean(), full, g, np.ones(batch.n),
                   batch.lengths.copy(), "pdis", batch.n)


def stepwise_osiris_estimate(batch: TrajectoryBatch, cfg: WeightConfig,
                             theta_t: TimedRelevanceMapping,
                             gamma: float = 1.0) -> EstimatorReport:
    """Step-wise OSIRIS.

    The reward at step ``t'`` is weighted by ``prod_t rho_t ** theta_{t'-t}(s_t)``
    over the whole trajectory. ``per_traj_weight`` reports the weight applied to
    each trajectory's final reward.
    """
    _require(batch)
    if theta_t.n_states != cfg.n_states:
        raise ValidationError("timed relevance mapping does not cover every state")
    ratio, status = step_ratios(batch, cfg)
    off = batch.step_offsets
    disc_r = batch.rewards * gamma ** batch.step_time
    per_traj = np.zeros(batch.n)
    last_w = np.ones(batch.n)
    eff = np.zeros(batch.n, dtype=np.int64)
    for i in range(batch.n):
        lo, hi = off[i], off[i + 1]
        T = hi - lo
        if T == 0:
            continue
        steps = np.arange(T)
        # rows index the rewarded step t', columns the ratio step t
        keep = theta_t.lookup(batch.step_states[lo:hi][None, :],
                              steps[:, None] - steps[None, :])
        needed = keep.any(axis=0)
        if np.any(needed & (status[lo:hi] != _OK)):
            j = lo + np.flatnonzero(needed & (status[lo:hi] != _OK))[0]
            raise SupportError(batch.step_states[j], batch.actions[j],
                               impossible=status[j] == _IMPOSSIBLE)
        w = np.prod(np.where(keep, ratio[lo:hi][None, :], 1.0), axis=1)
        per_traj[i] = np.dot(disc_r[lo:hi], w)
        last_w[i] = w[-1]
        eff[i] = int(keep[-1].sum())
    g = trajectory_returns(batch, gamma)
    return _report(per_traj.mean(), last_w, g, np.full(batch.n, np.nan), eff,
                   "stepwise_osiris", batch.n)
