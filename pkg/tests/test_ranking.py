import math

import numpy as np
import pytest
from scipy.special import log_ndtr
from scipy.stats import norm, spearmanr

from madstudy.errors import DegenerateInput, DisconnectedComparisonGraph
from madstudy.ranking import (
    FitOptions,
    average_ranks,
    fit,
    inverse_mills,
    log_likelihood,
    log_normal_cdf,
    normal_cdf,
    ordinal_ranks,
    simulate_votes,
    srcc,
    stability_curve,
)
from madstudy.study import format_vote_line, tally

from oracles import grid_fit_3
from synth import spaced_scores, synthetic_study


class TestStableNormalFunctions:
    def test_log_cdf_matches_scipy_deep_into_tail(self):
        x = np.linspace(-40.0, 0.0, 2001)
        rel = np.abs(log_normal_cdf(x) - log_ndtr(x)) / np.abs(log_ndtr(x))
        assert rel.max() < 1e-10

    def test_log_cdf_positive_side(self):
        x = np.linspace(0.0, 10.0, 501)
        assert np.abs(log_normal_cdf(x) - log_ndtr(x)).max() < 1e-14

    def test_inverse_mills_matches_scipy(self):
        x = np.concatenate([np.linspace(-40.0, 10.0, 2001), [-8.0, -7.9999, -8.0001]])
        reference = np.exp(norm.logpdf(x) - log_ndtr(x))
        rel = np.abs(inverse_mills(x) - reference) / reference
        assert rel.max() < 1e-9

    def test_finite_for_extreme_arguments(self):
        assert math.isfinite(log_normal_cdf(-500.0))
        assert math.isfinite(inverse_mills(-500.0))
        assert normal_cdf(0.0) == 0.5


class TestLogLikelihood:
    def test_zero_scores_give_log_half_per_vote(self):
        c = np.array([[0, 3, 1], [2, 0, 4], [5, 1, 0]])
        expected = c.sum() * math.log(0.5)
        assert log_likelihood(np.zeros(3), c) == pytest.approx(expected, abs=1e-12)

    def test_empty_counts_zero(self):
        assert log_likelihood(np.zeros(3), np.zeros((3, 3))) == 0.0

    def test_two_method_frozen_value(self):
        # 3*log Phi(1) + log Phi(-1), computed with scipy's log_ndtr
        c = np.array([[0, 3], [1, 0]])
        assert log_likelihood(np.array([0.5, -0.5]), c) == pytest.approx(
            -2.3592829820796135, abs=1e-9
        )

    def test_rejects_bad_counts(self):
        with pytest.raises(ValueError):
            log_likelihood(np.zeros(2), np.array([[1, 0], [0, 0]]))  # diagonal
        with pytest.raises(ValueError):
            log_likelihood(np.zeros(2), np.array([[0, -1], [0, 0]]))  # negative


class TestFit:
    def test_symmetric_two_methods(self):
        scores = fit(np.array([[0, 10], [10, 0]]))
        np.testing.assert_allclose(scores.mu, [0.0, 0.0], atol=1e-6)
        assert scores.converged

    def test_matches_grid_search_oracle(self, rng):
        for _ in range(10):
            c = rng.integers(1, 11, size=(3, 3)).astype(float)
            np.fill_diagonal(c, 0)
            ours = fit(c, FitOptions(smoothing_epsilon=0.0)).mu
            reference = grid_fit_3(c)
            np.testing.assert_allclose(ours, reference, atol=2e-3)

    def test_scale_invariance_spec_example(self):
        c = np.array([[0, 8, 9], [2, 0, 7], [1, 3, 0]], dtype=float)
        base = fit(c, FitOptions(smoothing_epsilon=0.0)).mu
        scaled = fit(4 * c, FitOptions(smoothing_epsilon=0.0)).mu
        np.testing.assert_allclose(scaled, base, atol=1e-6)

    def test_zero_sum_constraint(self, rng):
        for _ in range(5):
            c = rng.integers(0, 20, size=(4, 4)).astype(float)
            np.fill_diagonal(c, 0)
            c[0, 1] += 1  # keep the graph connected via smoothing-free check
            c[1, 2] += 1
            c[2, 3] += 1
            scores = fit(c)
            assert abs(float(scores.mu.sum())) < 1e-9

    def test_relabeling_equivariance(self, rng):
        c = rng.integers(1, 15, size=(5, 5)).astype(float)
        np.fill_diagonal(c, 0)
        base = fit(c).mu
        for _ in range(5):
            perm = rng.permutation(5)
            permuted = fit(c[np.ix_(perm, perm)]).mu
            np.testing.assert_allclose(permuted, base[perm], atol=1e-8)

    def test_ascent_from_origin(self, rng):
        c = rng.integers(1, 10, size=(4, 4)).astype(float)
        np.fill_diagonal(c, 0)
        opts = FitOptions(smoothing_epsilon=0.0)
        scores = fit(c, opts)
        assert scores.final_log_likelihood >= log_likelihood(np.zeros(4), c)
        assert scores.final_log_likelihood == pytest.approx(
            log_likelihood(scores.mu, c), abs=1e-9
        )

    def test_disconnected_graph_rejected(self):
        with pytest.raises(DisconnectedComparisonGraph):
            fit(np.zeros((3, 3)))
        islands = np.zeros((4, 4))
        islands[0, 1] = islands[1, 0] = 5
        islands[2, 3] = islands[3, 2] = 5
        with pytest.raises(DisconnectedComparisonGraph):
            fit(islands)

    def test_unanimous_cell_needs_smoothing(self):
        """Without smoothing the unanimous-cell MLE runs off toward infinity."""
        c = np.array([[0, 10], [0, 0]], dtype=float)
        smoothed = fit(c)  # default half pseudo-vote
        assert np.all(np.isfinite(smoothed.mu))
        assert np.abs(smoothed.mu).max() < 2.0
        unsmoothed = fit(c, FitOptions(smoothing_epsilon=0.0))
        assert np.abs(unsmoothed.mu).max() > 2.5  # chasing the boundary

    def test_not_converged_flag(self):
        c = np.array([[0, 8, 9], [2, 0, 7], [1, 3, 0]], dtype=float)
        scores = fit(c, FitOptions(max_iterations=1))
        assert not scores.converged
        assert scores.iterations == 1


class TestSrcc:
    def test_identical_orderings(self):
        assert srcc([1, 2, 3, 4], [10, 20, 30, 40]) == pytest.approx(1.0)

    def test_reversed(self):
        assert srcc([1, 2, 3], [3, 2, 1]) == pytest.approx(-1.0)

    def test_textbook_example(self):
        assert srcc([1, 2, 3, 4], [1, 3, 2, 4]) == pytest.approx(0.8)

    def test_ties_use_average_ranks(self):
        np.testing.assert_allclose(average_ranks([2.0, 1.0, 2.0]), [2.5, 1.0, 2.5])
        assert srcc([1, 2, 2, 3], [1, 2, 2, 3]) == pytest.approx(1.0)

    def test_degenerate_input(self):
        with pytest.raises(DegenerateInput):
            srcc([1.0, 1.0, 1.0], [1, 2, 3])

    def test_matches_scipy_on_random_vectors(self, rng):
        for _ in range(25):
            a = rng.random(8)
            b = rng.random(8)
            assert srcc(a, b) == pytest.approx(spearmanr(a, b).statistic, abs=1e-12)

    def test_ordinal_ranks_report_ties(self):
        ranks = ordinal_ranks([0.5, 0.5 + 1e-9, -0.2])
        np.testing.assert_allclose(ranks, [1.5, 1.5, 3.0])


class TestSimulateVotes:
    def test_fair_coin_within_four_sigma(self, tmp_path):
        _, _, schedule = synthetic_study(tmp_path, n_methods=8, k=12, n_candidates=40)
        votes = simulate_votes(np.zeros(8), schedule, 25, seed=3)
        counts = tally(votes, schedule)
        per_pair = counts + counts.T
        for i in range(8):
            for j in range(i + 1, 8):
                n = per_pair[i, j]
                sigma = math.sqrt(n * 0.25)
                assert abs(counts[i, j] - n / 2) <= 4 * sigma

    def test_strong_gap_wins_almost_always(self, tmp_path):
        _, _, schedule = synthetic_study(tmp_path, n_methods=2, k=12, n_candidates=30)
        votes = simulate_votes(np.array([3.0, -3.0]), schedule, 50, seed=4)
        counts = tally(votes, schedule)
        assert counts[0, 1] / (counts[0, 1] + counts[1, 0]) >= 0.99

    def test_fixed_seed_identical_bytes(self, tmp_path):
        _, _, schedule = synthetic_study(tmp_path, n_methods=3, k=4, n_candidates=20)
        mu = spaced_scores(3)
        lines_a = [format_vote_line(v) for v in simulate_votes(mu, schedule, 5, seed=9)]
        lines_b = [format_vote_line(v) for v in simulate_votes(mu, schedule, 5, seed=9)]
        assert lines_a == lines_b

    def test_rejects_nonzero_sum(self, tmp_path):
        _, _, schedule = synthetic_study(tmp_path, n_methods=2, k=2, n_candidates=10)
        with pytest.raises(ValueError):
            simulate_votes(np.array([1.0, 0.5]), schedule, 1, seed=0)


class TestStabilityCurve:
    def test_sanity_row_is_one(self, tmp_path):
        _, selections, schedule = synthetic_study(tmp_path, n_methods=4, k=5, n_candidates=30)
        votes = simulate_votes(spaced_scores(4, 0.5), schedule, 10, seed=5)
        curve = stability_curve(votes, schedule, selections, k_max=5)
        assert curve[-1] == (5, pytest.approx(1.0))
        assert all(-1.0 <= value <= 1.0 for _, value in curve)

    def test_only_first_pick_votes_single_row(self, tmp_path):
        _, selections, schedule = synthetic_study(tmp_path, n_methods=3, k=4, n_candidates=20)
        first_picks = {
            (sel.pair, sel.picks[0].candidate_id) for sel in selections
        }
        votes = [
            v
            for v in simulate_votes(spaced_scores(3, 0.5), schedule, 8, seed=6)
            if (schedule.trial_index[v.trial_id].pair,
                schedule.trial_index[v.trial_id].candidate_id) in first_picks
        ]
        curve = stability_curve(votes, schedule, selections, k_max=4)
        assert curve == [(1, pytest.approx(1.0))]

    def test_simulated_study_converges_to_one(self, tmp_path):
        _, selections, schedule = synthetic_study(tmp_path, n_methods=8, k=12, n_candidates=40)
        votes = simulate_votes(spaced_scores(8), schedule, 25, seed=7)
        curve = stability_curve(votes, schedule, selections, k_max=12)
        assert len(curve) == 12
        assert curve[-1][1] == pytest.approx(1.0)
        assert curve[-2][1] >= 0.97  # K=11 vs K=12


class TestRecovery:
    def test_recovers_ground_truth_ranking(self, tmp_path):
        _, _, schedule = synthetic_study(tmp_path, n_methods=8, k=12, n_candidates=40)
        mu_star = spaced_scores(8)
        votes = simulate_votes(mu_star, schedule, 25, seed=11)
        scores = fit(tally(votes, schedule))
        assert scores.converged
        assert srcc(scores.mu, mu_star) >= 0.95
        assert float(np.abs(scores.mu - mu_star).mean()) <= 0.1
