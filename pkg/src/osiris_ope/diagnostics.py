"""Monte Carlo checks of the moment identities behind OSIRIS, and the
weight-versus-length analysis.

Every check draws behavior trajectories once and evaluates both sides of an
identity on those shared draws. Standard errors come from batch means (the
draws are split into ``N_BLOCKS`` contiguous blocks), which handles ratio and
product statistics without a delta-method derivation. A check passes when
``|lhs - rhs| <= max(rel_tol * |rhs|, k * sqrt(lhs_se**2 + rhs_se**2))``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .estimators import SupportError, WeightConfig, osiris_weights, step_ratios
from .mdp import (MdpSpec, PolicySpec, RelevanceMapping, TrajectoryBatch,
                  ValidationError, exact_policy_value, sample_batch,
                  trajectory_returns)
from .relevance import RelevanceConfig, estimate_relevance_map

N_BLOCKS = 100
K_SE = 4.0
REL_TOL = 0.05


@dataclass(frozen=True)
class IdentityCheckReport:
    name: str
    lhs: float
    rhs: float
    lhs_se: float
    rhs_se: float
    n_draws: int
    passed: bool
    term_breakdown: dict = field(default_factory=dict)
    rel_tol: float = REL_TOL
    k: float = K_SE
    # set when the check demonstrates a bias rather than its absence
    expected_bias: bool = False

    def to_dict(self) -> dict:
        return {
            "name": self.name, "lhs": self.lhs, "rhs": self.rhs,
            "lhs_se": self.lhs_se, "rhs_se": self.rhs_se, "n_draws": self.n_draws,
            "pass": self.passed, "term_breakdown": dict(self.term_breakdown),
            "rel_tol": self.rel_tol, "k": self.k, "expected_bias": self.expected_bias,
        }


@dataclass(frozen=True)
class CorrelationReport:
    pearson_r: float
    points: tuple
    weight_variance_by_alpha: dict
    degenerate: bool = False
    n_zero_weights: int = 0

    def to_dict(self) -> dict:
        return {
            "pearson_r": self.pearson_r,
            "points": [list(p) for p in self.points],
            "weight_variance_by_alpha": {str(a): v for a, v in self.weight_variance_by_alpha.items()},
            "degenerate": self.degenerate,
            "n_zero_weights": self.n_zero_weights,
        }


def tolerance_pass(lhs, rhs, lhs_se, rhs_se, rel_tol=REL_TOL, k=K_SE) -> bool:
    bound = max(rel_tol * abs(rhs), k * math.hypot(lhs_se, rhs_se))
    return bool(abs(lhs - rhs) <= bound)


def _blocks(n: int) -> list:
    edges = np.linspace(0, n, min(N_BLOCKS, n) + 1).astype(int)
    return [slice(a, b) for a, b in zip(edges[:-1], edges[1:]) if b > a]


def _block_se(stat, *arrays) -> float:
    """Batch-means standard error of ``stat`` applied to the full arrays."""
    n = len(arrays[0])
    parts = _blocks(n)
    if len(parts) < 2:
        return float("nan")
    vals = np.array([stat(*(x[s] for x in arrays)) for s in parts])
    return float(vals.std(ddof=1) / math.sqrt(len(vals)))


def _draws(mdp: MdpSpec, pi_e: PolicySpec, pi_b: PolicySpec,
           theta: RelevanceMapping, n: int, seed: int):
    """Returns, kept weights and omitted weights for ``n`` behavior draws."""
    if n < 2:
        raise ValidationError("identity checks need at least two draws")
    batch = sample_batch(mdp, pi_b, n, seed)
    cfg = WeightConfig(pi_e, pi_b, theta)
    kept, omitted, _ = osiris_weights(batch, cfg)
    if np.isnan(omitted).any():
        _, status = step_ratios(batch, cfg)
        j = int(np.flatnonzero(status != 0)[0])
        raise SupportError(batch.step_states[j], batch.actions[j])
    g = trajectory_returns(batch, mdp.gamma)
    return g, kept, omitted


def check_omitted_mean(mdp, pi_e, pi_b, theta, n_draws: int, seed: int) -> IdentityCheckReport:
    """The omitted weight product has mean one under the behavior policy."""
    _, _, om = _draws(mdp, pi_e, pi_b, theta, n_draws, seed)
    lhs = float(om.mean())
    se = float(om.std(ddof=1) / math.sqrt(len(om)))
    return IdentityCheckReport("omitted_mean", lhs, 1.0, se, 0.0, n_draws,
                               tolerance_pass(lhs, 1.0, se, 0.0, 0.0),
                               {"mean_omitted": lhs}, rel_tol=0.0)


def _variance_terms(g, kept, om):
    os_ = g * kept
    is_ = os_ * om
    e_os2 = np.mean(os_ ** 2)
    terms = {
        "var_is": float(np.var(is_)),
        "center_is_sq": float(np.mean(is_) ** 2),
        "center_osiris_sq": float(-np.mean(os_) ** 2),
        "omitted_variance": float(-e_os2 * np.var(om)),
        "covariance": float(-np.mean((os_ ** 2 - e_os2) * (om ** 2 - np.mean(om ** 2)))),
    }
    return float(np.var(os_)), terms


def _variance_rhs(g, kept, om):
    return math.fsum(_variance_terms(g, kept, om)[1].values())


def check_variance_identity(mdp, pi_e, pi_b, theta, n_outer: int, seed: int,
                            rel_tol: float = REL_TOL) -> IdentityCheckReport:
    """Single-trajectory OSIRIS variance against its decomposition around IS.

    ``term_breakdown`` lists the IS variance, the two squared-mean terms, the
    omitted-variance term and the covariance term; they sum to ``rhs``.
    """
    g, kept, om = _draws(mdp, pi_e, pi_b, theta, n_outer, seed)
    lhs, terms = _variance_terms(g, kept, om)
    rhs = math.fsum(terms.values())
    lhs_se = _block_se(lambda a, b: np.var(a * b), g, kept)
    rhs_se = _block_se(_variance_rhs, g, kept, om)
    return IdentityCheckReport("variance_identity", lhs, rhs, lhs_se, rhs_se, n_outer,
                               tolerance_pass(lhs, rhs, lhs_se, rhs_se, rel_tol),
                               terms, rel_tol=rel_tol)


def _bias_lhs(g, kept, om):
    os_ = g * kept
    return float(np.mean(os_) + np.mean((os_ - os_.mean()) * (om - om.mean())))


def check_bias_identity(mdp, pi_e, pi_b, theta, n_outer: int, seed: int,
                        rel_tol: float = REL_TOL, expected_bias: bool = False
                        ) -> IdentityCheckReport:
    """OSIRIS mean plus its covariance with the omitted weight equals the true value.

    The breakdown also reports the OSIRIS mean, its standard error and the
    covariance term, so a nonzero bias can be read off the same draws.
    """
    g, kept, om = _draws(mdp, pi_e, pi_b, theta, n_outer, seed)
    os_ = g * kept
    lhs = _bias_lhs(g, kept, om)
    rhs = exact_policy_value(mdp, pi_e)
    lhs_se = _block_se(_bias_lhs, g, kept, om)
    cov = lhs - float(os_.mean())
    terms = {
        "osiris_mean": float(os_.mean()),
        "osiris_mean_se": float(os_.std(ddof=1) / math.sqrt(len(os_))),
        "covariance": cov,
        "covariance_se": _block_se(lambda a, b, c: _bias_lhs(a, b, c) - np.mean(a * b), g, kept, om),
        "bias": float(os_.mean()) - rhs,
    }
    return IdentityCheckReport("bias_identity", lhs, rhs, lhs_se, 0.0, n_outer,
                               tolerance_pass(lhs, rhs, lhs_se, 0.0, rel_tol),
                               terms, rel_tol=rel_tol, expected_bias=expected_bias)


def check_osiris_mean(mdp, pi_e, pi_b, theta, n_draws: int, seed: int,
                      expected_bias: bool = False) -> IdentityCheckReport:
    """Single-trajectory OSIRIS mean against the DP value.

    With ``expected_bias`` the check passes when the mean is more than
    ``K_SE`` standard errors away, i.e. the bias is demonstrated.
    """
    g, kept, om = _draws(mdp, pi_e, pi_b, theta, n_draws, seed)
    os_ = g * kept
    lhs = float(os_.mean())
    se = float(os_.std(ddof=1) / math.sqrt(len(os_)))
    rhs = exact_policy_value(mdp, pi_e)
    close = tolerance_pass(lhs, rhs, se, 0.0, 0.0)
    terms = {"bias": lhs - rhs, "bias_in_se": (lhs - rhs) / se if se > 0 else 0.0}
    return IdentityCheckReport("osiris_mean", lhs, rhs, se, 0.0, n_draws,
                               (not close) if expected_bias else close,
                               terms, rel_tol=0.0, expected_bias=expected_bias)


def adversarial_theta(theta: RelevanceMapping, states) -> RelevanceMapping:
    """Copy of ``theta`` with the given (relevant) states marked irrelevant."""
    bits = theta.bits.copy()
    bits[list(states)] = 0
    return RelevanceMapping(bits)


def check_length_propositions(mdp, pi_b, pi_e, state_sequence, nested_subsets,
                              n_draws: int, seed: int, k: float = K_SE
                              ) -> IdentityCheckReport:
    """Variance and log-mean of ratio products over nested step subsets.

    Actions at each position of ``state_sequence`` are drawn independently
    from ``pi_b``. Along the nested subsets the product's variance must rise
    and its mean log must fall, with ``k``-SE intervals of neighbours not
    overlapping. ``lhs``/``rhs`` hold the variances of the largest and
    smallest subset; the full chains are in ``term_breakdown``.
    """
    if np.array_equal(pi_e.probs, pi_b.probs):
        raise ValidationError("the length propositions need differing evaluation and behavior policies")
    seq = np.asarray(state_sequence, dtype=np.int64)
    if seq.size and (seq.min() < 0 or seq.max() >= mdp.n_states):
        raise ValidationError("state_sequence contains an unknown state")
    subsets = [np.asarray(sorted(s), dtype=np.int64) for s in nested_subsets]
    for a, b in zip(subsets[:-1], subsets[1:]):
        if not set(a.tolist()) < set(b.tolist()):
            raise ValidationError("subsets must be strictly nested")
    if subsets and subsets[-1].size and subsets[-1].max() >= len(seq):
        raise ValidationError("subset index beyond the state sequence")
    cfg = WeightConfig(pi_e, pi_b)
    ratios, status = cfg.ratio_table()
    rng = np.random.Generator(np.random.PCG64(np.random.SeedSequence(seed)))
    u = rng.random((n_draws, len(seq)))
    cum = np.cumsum(pi_b.probs[seq], axis=1)
    cum[:, -1] = 1.0
    actions = (u[:, :, None] >= cum[None, :, :]).sum(axis=2)
    rho = ratios[seq[None, :], actions]
    if (status[seq[None, :], actions] != 0).any():
        i, t = np.argwhere(status[seq[None, :], actions] != 0)[0]
        raise SupportError(seq[t], actions[i, t])
    terms, var, var_se, lm, lm_se = {}, [], [], [], []
    n = n_draws
    for i, sub in enumerate(subsets):
        w = np.prod(rho[:, sub], axis=1)
        with np.errstate(divide="ignore"):
            lw = np.log(w)
        v = float(np.var(w))
        m4 = float(np.mean((w - w.mean()) ** 4))
        var.append(v)
        var_se.append(math.sqrt(max(m4 - v * v, 0.0) / n))
        lm.append(float(lw.mean()))
        lm_se.append(float(lw.std(ddof=1) / math.sqrt(n)) if n > 1 else float("nan"))
        terms.update({f"var_{i}": var[-1], f"var_se_{i}": var_se[-1],
                      f"log_mean_{i}": lm[-1], f"log_mean_se_{i}": lm_se[-1],
                      f"size_{i}": float(sub.size)})
    var_ok = all(var[i] + k * var_se[i] < var[i + 1] - k * var_se[i + 1]
                 for i in range(len(var) - 1))
    lm_ok = all(lm[i] - k * lm_se[i] > lm[i + 1] + k * lm_se[i + 1]
                for i in range(len(lm) - 1))
    terms["variance_increasing"] = float(var_ok)
    terms["log_mean_decreasing"] = float(lm_ok)
    return IdentityCheckReport("length_propositions", var[-1], var[0], var_se[-1], var_se[0],
                               n_draws, var_ok and lm_ok, terms, rel_tol=0.0, k=k)


def correlation_report(lengths, weights, weight_variance_by_alpha) -> CorrelationReport:
    """Pearson r between effective length and log weight; zero weights are dropped."""
    lengths = np.asarray(lengths, dtype=float)
    weights = np.asarray(weights, dtype=float)
    pos = weights > 0
    x, y = lengths[pos], np.log(weights[pos])
    degenerate = len(x) < 2 or x.std() == 0 or y.std() == 0
    r = 0.0 if degenerate else float(np.corrcoef(x, y)[0, 1])
    points = tuple((float(a), float(b)) for a, b in zip(x, y))
    return CorrelationReport(r, points, dict(weight_variance_by_alpha), bool(degenerate),
                             int((~pos).sum()))


def weight_length_analysis(batch: TrajectoryBatch, wcfg: WeightConfig,
                           theta_hat: RelevanceMapping, alphas=(),
                           rcfg: RelevanceConfig | None = None,
                           gamma: float = 1.0) -> CorrelationReport:
    """Effective length against log OSIRIS weight under ``theta_hat``.

    For each alpha in ``alphas`` relevance is re-estimated on the same batch
    and the variance of the resulting OSIRIS weights is recorded.
    """
    rcfg = rcfg or RelevanceConfig()
    kept, _, eff = osiris_weights(batch, wcfg.with_theta(theta_hat))
    variances = {}
    for a in alphas:
        th = estimate_relevance_map(batch, wcfg, rcfg.with_alpha(a), gamma)
        w, _, _ = osiris_weights(batch, wcfg.with_theta(th))
        variances[float(a)] = float(np.var(w))
    return correlation_report(eff, kept, variances)
