import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from osiris_ope.environments import random_mdp
from osiris_ope.estimators import (EstimationError, SupportError, WeightConfig, is_estimate,
                                   likelihood_ratio, mc_estimate, osiris_estimate, osiris_weight,
                                   osiris_weights, osirwis_estimate, pdis_estimate,
                                   stepwise_osiris_estimate, wis_estimate)
from osiris_ope.mdp import (MdpSpec, PolicySpec, RelevanceMapping, TimedRelevanceMapping,
                            Trajectory, TrajectoryBatch, ValidationError, composite_policy,
                            exact_policy_value, sample_batch, trajectory_returns)

from conftest import bandit_mdp


def layered_mdp(seed, n_layers=3, width=2, n_actions=2):
    """Random acyclic MDP: each layer moves only to the next one, then terminates."""
    rng = np.random.default_rng(seed)
    S = n_layers * width + 1
    term = S - 1
    P = np.zeros((S, n_actions, S))
    R = rng.normal(size=(S, n_actions))
    R[term] = 0.0
    for layer in range(n_layers):
        for k in range(width):
            s = layer * width + k
            if layer == n_layers - 1:
                P[s, :, term] = 1.0
            else:
                nxt = slice((layer + 1) * width, (layer + 2) * width)
                P[s, :, nxt] = rng.dirichlet(np.ones(width), size=n_actions)
    P[term, :, term] = 1.0
    d0 = np.zeros(S)
    d0[:width] = rng.dirichlet(np.ones(width))
    mdp = MdpSpec(P, R, d0, frozenset({term}))
    pe = PolicySpec(rng.dirichlet(np.ones(n_actions), size=S))
    pb = PolicySpec(0.5 * rng.dirichlet(np.ones(n_actions), size=S) + 0.5 / n_actions)
    return mdp, pe, pb


def enumerate_trajectories(mdp, policy):
    """Every trajectory of an acyclic MDP with its probability under ``policy``."""
    out = []

    def walk(states, actions, rewards, prob):
        s = states[-1]
        if s in mdp.terminal:
            out.append((Trajectory(states, actions, rewards), prob))
            return
        for a in range(mdp.n_actions):
            pa = policy.probs[s, a]
            for s2 in np.flatnonzero(mdp.transition[s, a]):
                walk(states + [int(s2)], actions + [a], rewards + [mdp.reward[s, a]],
                     prob * pa * mdp.transition[s, a, s2])

    for s0 in np.flatnonzero(mdp.initial_dist):
        walk([int(s0)], [], [], mdp.initial_dist[s0])
    return out


class TestWeights:
    def test_likelihood_ratio(self):
        cfg = WeightConfig(PolicySpec(np.array([[0.9, 0.1]])), PolicySpec(np.array([[0.6, 0.4]])))
        assert likelihood_ratio(cfg, 0, 0) == pytest.approx(1.5)
        assert likelihood_ratio(cfg, 0, 1) == pytest.approx(0.25)

    def test_kept_and_omitted_factorise(self):
        pe = PolicySpec(np.array([[0.8, 0.2], [0.3, 0.7], [0.5, 0.5]]))
        pb = PolicySpec(np.array([[0.5, 0.5], [0.6, 0.4], [0.5, 0.5]]))
        traj = Trajectory([0, 1, 0, 2], [0, 1, 1], [0.0, 0.0, 1.0])
        cfg = WeightConfig(pe, pb, RelevanceMapping(np.array([0, 1, 0])))
        kept, omitted = osiris_weight(traj, cfg)
        assert kept == pytest.approx(0.7 / 0.4)
        assert omitted == pytest.approx(1.6 * 0.4)

    def test_unsupported_kept_step_raises(self):
        pe = PolicySpec(np.array([[0.5, 0.5], [0.5, 0.5]]))
        pb = PolicySpec(np.array([[1.0, 0.0], [0.5, 0.5]]))
        traj = Trajectory([0, 1], [1], [1.0])
        with pytest.raises(SupportError, match="state=0, action=1"):
            osiris_weight(traj, WeightConfig(pe, pb))

    def test_unsupported_omitted_step_is_nan(self):
        pe = PolicySpec(np.array([[0.5, 0.5], [0.5, 0.5]]))
        pb = PolicySpec(np.array([[1.0, 0.0], [0.5, 0.5]]))
        traj = Trajectory([0, 1], [1], [1.0])
        kept, omitted = osiris_weight(traj, WeightConfig(pe, pb, RelevanceMapping(np.array([0, 0]))))
        assert kept == 1.0 and np.isnan(omitted)

    def test_shape_mismatch(self):
        with pytest.raises(ValidationError):
            WeightConfig(PolicySpec(np.ones((2, 1))), PolicySpec(np.ones((3, 1))))

    def test_effective_length_counts_kept_steps(self, three_state):
        mdp, pi_e, pi_b = three_state
        batch = sample_batch(mdp, pi_b, 100, 0)
        theta = RelevanceMapping(np.array([0, 1, 1, 0]))
        _, _, eff = osiris_weights(batch, WeightConfig(pi_e, pi_b, theta))
        relevant = np.isin(batch.step_states, [1, 2])
        np.testing.assert_array_equal(
            eff, [relevant[batch.step_traj == i].sum() for i in range(batch.n)])


class TestEstimators:
    def test_empty_batch(self, three_state):
        _, pi_e, pi_b = three_state
        empty = TrajectoryBatch.from_trajectories([])
        with pytest.raises(EstimationError):
            is_estimate(empty, WeightConfig(pi_e, pi_b))

    def test_wis_zero_total_weight(self):
        pe = PolicySpec(np.array([[1.0, 0.0], [0.5, 0.5]]))
        pb = PolicySpec(np.array([[0.5, 0.5], [0.5, 0.5]]))
        batch = TrajectoryBatch.from_trajectories([Trajectory([0, 1], [1], [1.0])])
        with pytest.raises(EstimationError, match="zero"):
            wis_estimate(batch, WeightConfig(pe, pb))

    def test_mc_is_mean_return(self, three_state):
        mdp, pi_e, _ = three_state
        batch = sample_batch(mdp, pi_e, 50, 1)
        rep = mc_estimate(batch)
        assert rep.estimate == pytest.approx(trajectory_returns(batch, 1.0).mean())
        assert rep.estimator_id == "mc" and rep.n == 50

    def test_pdis_by_hand(self):
        pe = PolicySpec(np.array([[0.8, 0.2], [0.5, 0.5], [0.5, 0.5]]))
        pb = PolicySpec(np.array([[0.5, 0.5], [0.25, 0.75], [0.5, 0.5]]))
        traj = Trajectory([0, 1, 2], [0, 0], [1.0, 2.0])
        batch = TrajectoryBatch.from_trajectories([traj])
        rep = pdis_estimate(batch, WeightConfig(pe, pb), gamma=0.5)
        assert rep.estimate == pytest.approx(1.6 * 1.0 + 0.5 * 1.6 * 2.0 * 2.0)

    def test_report_to_dict(self, three_state):
        mdp, pi_e, pi_b = three_state
        rep = is_estimate(sample_batch(mdp, pi_b, 5, 0), WeightConfig(pi_e, pi_b))
        d = rep.to_dict()
        assert d["estimator_id"] == "is" and len(d["per_traj_weight"]) == 5

    @pytest.mark.parametrize("seed", range(4))
    def test_reductions_per_trajectory(self, seed):
        mdp, pi_e, pi_b, _ = random_mdp(seed)
        batch = sample_batch(mdp, pi_b, 40, seed)
        cfg = WeightConfig(pi_e, pi_b)
        n = mdp.n_states
        one = osiris_estimate(batch, cfg.with_theta(RelevanceMapping.constant(n, 1)))
        ref = is_estimate(batch, cfg)
        np.testing.assert_allclose(one.per_traj_weight * one.per_traj_return,
                                   ref.per_traj_weight * ref.per_traj_return, rtol=0, atol=1e-12)
        zero = osiris_estimate(batch, cfg.with_theta(RelevanceMapping.constant(n, 0)))
        np.testing.assert_array_equal(zero.per_traj_weight, 1.0)
        assert zero.estimate == pytest.approx(mc_estimate(batch).estimate, abs=1e-12)
        assert osirwis_estimate(batch, cfg.with_theta(RelevanceMapping.constant(n, 1))).estimate \
            == pytest.approx(wis_estimate(batch, cfg).estimate, abs=1e-12)
        step = stepwise_osiris_estimate(batch, cfg, TimedRelevanceMapping.pdis(n))
        assert step.estimate == pytest.approx(pdis_estimate(batch, cfg).estimate, abs=1e-12)
        full = stepwise_osiris_estimate(batch, cfg, TimedRelevanceMapping.constant(n, 1))
        assert full.estimate == pytest.approx(ref.estimate, abs=1e-12)


class TestExactExpectations:
    """Expectations over every trajectory of small acyclic MDPs."""

    @pytest.mark.parametrize("seed", range(4))
    def test_is_unbiased(self, seed):
        mdp, pe, pb = layered_mdp(seed)
        cfg = WeightConfig(pe, pb)
        trajs = enumerate_trajectories(mdp, pb)
        assert sum(p for _, p in trajs) == pytest.approx(1.0)
        batch = TrajectoryBatch.from_trajectories([t for t, _ in trajs])
        rep = is_estimate(batch, cfg)
        probs = np.array([p for _, p in trajs])
        expected = np.dot(probs, rep.per_traj_weight * rep.per_traj_return)
        assert expected == pytest.approx(exact_policy_value(mdp, pe), abs=1e-10)
        # PDIS per-trajectory terms also average to the value
        per = [pdis_estimate(TrajectoryBatch.from_trajectories([t]), cfg).estimate for t, _ in trajs]
        assert np.dot(probs, per) == pytest.approx(exact_policy_value(mdp, pe), abs=1e-10)

    @pytest.mark.parametrize("seed", range(4))
    @pytest.mark.parametrize("bits", [(1, 0, 1, 0, 1, 1, 0), (0, 1, 0, 1, 0, 0, 0)])
    def test_osiris_expectation_is_composite_value(self, seed, bits):
        mdp, pe, pb = layered_mdp(seed)
        theta = RelevanceMapping(np.array(bits))
        trajs = enumerate_trajectories(mdp, pb)
        batch = TrajectoryBatch.from_trajectories([t for t, _ in trajs])
        rep = osiris_estimate(batch, WeightConfig(pe, pb, theta))
        probs = np.array([p for _, p in trajs])
        expected = np.dot(probs, rep.per_traj_weight * rep.per_traj_return)
        v_comp = exact_policy_value(mdp, composite_policy(pe, pb, theta))
        assert expected == pytest.approx(v_comp, abs=1e-10)
        # omitted weight has mean one
        assert np.dot(probs, rep.per_traj_omitted_weight) == pytest.approx(1.0, abs=1e-12)

    def test_bandit_is_expectation(self):
        mdp = bandit_mdp([2.0, -1.0, 0.5])
        pe = PolicySpec(np.array([[0.6, 0.3, 0.1], [1 / 3] * 3]))
        pb = PolicySpec(np.array([[0.2, 0.3, 0.5], [1 / 3] * 3]))
        trajs = [Trajectory([0, 1], [a], [mdp.reward[0, a]]) for a in range(3)]
        rep = is_estimate(TrajectoryBatch.from_trajectories(trajs), WeightConfig(pe, pb))
        assert np.dot(pb.probs[0], rep.per_traj_weight * rep.per_traj_return) \
            == pytest.approx(0.6 * 2 - 0.3 + 0.05)


@settings(max_examples=60, deadline=None)
@given(data=st.data())
def test_wis_within_return_range(data):
    seed = data.draw(st.integers(0, 500))
    n = data.draw(st.integers(1, 40))
    mdp, pi_e, pi_b, _ = random_mdp(seed % 11)
    batch = sample_batch(mdp, pi_b, n, seed)
    g = trajectory_returns(batch, 1.0)
    bits = np.array(data.draw(st.lists(st.integers(0, 1), min_size=mdp.n_states,
                                       max_size=mdp.n_states)))
    est = osirwis_estimate(batch, WeightConfig(pi_e, pi_b, RelevanceMapping(bits))).estimate
    assert g.min() <= est <= g.max()


@settings(max_examples=60, deadline=None)
@given(seed=st.integers(0, 500), bits=st.lists(st.integers(0, 1), min_size=6, max_size=6))
def test_kept_times_omitted_is_full_weight(seed, bits):
    mdp, pi_e, pi_b, _ = random_mdp(seed % 13)
    batch = sample_batch(mdp, pi_b, 20, seed)
    cfg = WeightConfig(pi_e, pi_b, RelevanceMapping(np.array(bits)))
    kept, omitted, _ = osiris_weights(batch, cfg)
    full, _, _ = osiris_weights(batch, cfg.with_theta(None))
    np.testing.assert_allclose(kept * omitted, full, rtol=1e-12)
