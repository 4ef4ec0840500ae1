import numpy as np
import pytest
from scipy import stats

from coreelements.baselines import RowSample, blev, iboss, prereduce, slev, unif
from coreelements.errors import InsufficientRows
from coreelements.estimators import leverage_scores, row_subsample_ols


def chi2_pvalue(rows, probs):
    counts = np.bincount(rows, minlength=len(probs))
    return stats.chisquare(counts, probs * len(rows)).pvalue


@pytest.fixture
def design(rng):
    x = rng.standard_normal((60, 3))
    x[5] *= 8.0  # one high-leverage row
    return x


class TestUnif:
    def test_single_row(self, rng):
        assert np.all(unif(1, 7, rng).rows == 0)

    def test_seeded_reproducible(self):
        a = unif(100, 20, np.random.default_rng(5)).rows
        b = unif(100, 20, np.random.default_rng(5)).rows
        np.testing.assert_array_equal(a, b)

    def test_frequencies_uniform(self, rng):
        s = unif(50, 100_000, rng)
        counts = np.bincount(s.rows, minlength=50)
        sigma = np.sqrt(100_000 * (1 / 50) * (49 / 50))
        assert np.all(np.abs(counts - 2000) < 4 * sigma)
        assert chi2_pvalue(s.rows, s.probabilities) > 1e-3

    def test_weights(self, rng):
        s = unif(10, 4, rng)
        np.testing.assert_allclose(s.weights(), np.full(4, 10 / 4))


class TestLeverageSampling:
    def test_blev_probabilities(self, design, rng):
        s = blev(design, 100_000, rng)
        np.testing.assert_allclose(s.probabilities, leverage_scores(design) / 3, rtol=1e-10)
        assert s.probabilities.sum() == pytest.approx(1.0, abs=1e-10)
        assert chi2_pvalue(s.rows, s.probabilities) > 1e-3
        freq = np.mean(s.rows == 5)
        pi = s.probabilities[5]
        assert abs(freq - pi) < 3 * np.sqrt(pi * (1 - pi) / 100_000)

    def test_equal_leverage_is_uniform(self, rng):
        q = np.kron(np.ones((4, 1)), np.eye(3)) / 2.0  # every row has leverage 1/4
        s = blev(q, 10, rng)
        np.testing.assert_allclose(s.probabilities, np.full(12, 1 / 12), rtol=1e-12)

    def test_slev_formula(self, design, rng):
        h = leverage_scores(design)
        s = slev(design, 100_000, rng, 0.9)
        np.testing.assert_allclose(s.probabilities, 0.9 * h / 3 + 0.1 / 60, rtol=1e-12)
        assert chi2_pvalue(s.rows, s.probabilities) > 1e-3

    def test_slev_limits(self, design):
        b = blev(design, 5, np.random.default_rng(0))
        s1 = slev(design, 5, np.random.default_rng(0), 1.0)
        np.testing.assert_allclose(s1.probabilities, b.probabilities)
        np.testing.assert_array_equal(s1.rows, b.rows)
        s0 = slev(design, 5, np.random.default_rng(0), 1e-12)
        np.testing.assert_allclose(s0.probabilities, 1 / 60, rtol=1e-9)
        with pytest.raises(ValueError):
            slev(design, 5, np.random.default_rng(0), 0.0)

    def test_reweighted_fit(self, design, rng):
        y = design @ np.ones(3) + rng.standard_normal(60)
        s = blev(design, 30, rng)
        ref = row_subsample_ols(design, y, s.rows, 1.0 / (30 * s.probabilities[s.rows]))
        np.testing.assert_array_equal(s.fit(design, y).beta, ref.beta)
        assert s.fit(design, y).method == "Blev"


class TestIboss:
    def test_sort_oracle(self):
        x = np.array([[5.0], [1.0], [9.0], [2.0], [7.0], [3.0]])
        s = iboss(x, 4)
        assert set(s.rows) == {2, 4, 1, 3}
        assert s.probabilities is None and s.weights() is None

    def test_full(self):
        x = np.arange(12.0).reshape(6, 2)
        np.testing.assert_array_equal(iboss(x, 6).rows, np.arange(6))

    def test_deterministic_and_distinct(self, rng):
        x = rng.standard_normal((200, 4))
        a, b = iboss(x, 40), iboss(x, 40)
        np.testing.assert_array_equal(a.rows, b.rows)
        assert len(np.unique(a.rows)) == 40

    def test_remainder_to_earliest_sides(self):
        x = np.array([[5.0, 0.0], [1.0, 4.0], [9.0, -3.0], [2.0, 8.0], [7.0, 6.0], [3.0, -9.0], [4.0, 0.5]])
        # r = 6 with 2p = 4: one slot per side, the two leftovers go to column 0
        # col 0 largest {2, 4}, smallest {1, 3}; then among rows 0, 5, 6 col 1 gives 6 (max) and 5 (min)
        s = iboss(x, 6)
        assert set(s.rows) == {2, 4, 1, 3, 6, 5}

    def test_ties_smaller_index(self):
        x = np.array([[1.0], [3.0], [3.0], [0.0], [0.0]])
        assert set(iboss(x, 2).rows) == {1, 3}

    def test_too_many_rows(self, rng):
        with pytest.raises(InsufficientRows):
            iboss(rng.standard_normal((5, 2)), 6)

    @pytest.mark.parametrize("r", [7, 13, 40])
    def test_count(self, rng, r):
        assert iboss(rng.standard_normal((100, 3)), r).r == r


def test_prereduce(rng):
    keep = prereduce(1000, 20, 5, rng)
    assert len(keep) == 100 and len(np.unique(keep)) == 100 and np.all(np.diff(keep) > 0)
    np.testing.assert_array_equal(prereduce(50, 20, 5, rng), np.arange(50))


def test_rowsample_r():
    assert RowSample(np.array([1, 1, 2]), "Unif", np.full(3, 1 / 3)).r == 3
