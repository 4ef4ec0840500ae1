import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from scipy import stats

from coreelements.datagen import (
    ExperimentConfig,
    ar_covariance,
    gen_design,
    gen_misspecified,
    gen_response,
    generate_dataset,
    inject_outliers,
    misspec_term,
    outlier_counts,
    replication_rng,
    sparsify,
    train_test_split,
)
from coreelements.errors import DegenerateMisspec, DegenerateSignal, DimensionTooSmall
from coreelements.matrix import DesignMatrix


def cfg(**kw):
    base = dict(n=200, p=5)
    base.update(kw)
    return ExperimentConfig(**base)


class TestConfig:
    @pytest.mark.parametrize(
        "kw", [dict(alpha=0.0), dict(alpha=1.5), dict(snr=0.0), dict(n=5, p=5), dict(distribution="D9"), dict(misspec="H7")]
    )
    def test_invalid(self, kw):
        with pytest.raises(ValueError):
            cfg(**kw)

    def test_default_beta(self):
        assert np.array_equal(cfg().beta, np.ones(5))

    def test_dict_round_trip(self):
        c = cfg(distribution="D2", alpha=0.4, n_outliers=3, seed=9)
        assert ExperimentConfig.from_dict(c.to_dict()) == c
        with pytest.raises(ValueError):
            ExperimentConfig.from_dict({"n": 10, "p": 2, "bogus": 1})


class TestDesign:
    def test_ar_covariance(self):
        s = ar_covariance(4)
        assert s[0, 3] == pytest.approx(0.6**3)
        assert np.allclose(np.diag(s), 1.0)

    def test_single_column_is_standard_normal(self):
        x = gen_design(ExperimentConfig(n=10_000, p=1), np.random.default_rng(3))
        assert stats.kstest(x.values[:, 0], "norm").pvalue > 0.001

    def test_adjacent_correlation(self):
        x = gen_design(ExperimentConfig(n=10_000, p=4), np.random.default_rng(4)).values
        for j in range(3):
            assert abs(np.corrcoef(x[:, j], x[:, j + 1])[0, 1] - 0.6) < 0.05

    @pytest.mark.parametrize("dist", ["D1", "D2", "D3"])
    def test_centered(self, dist):
        x = gen_design(cfg(distribution=dist), np.random.default_rng(5))
        assert x.centered
        assert np.allclose(x.values.mean(axis=0), 0.0, atol=1e-12)

    def test_d2_positive_before_centering(self):
        x = gen_design(cfg(distribution="D2", n=2000), np.random.default_rng(6)).values
        # exponentiated columns are right-skewed
        assert np.all(stats.skew(x, axis=0) > 1.0)

    def test_d3_heavier_tails(self):
        g = np.random.default_rng(7)
        d1 = gen_design(ExperimentConfig(n=10_000, p=2, distribution="D1"), g).values[:, 0]
        d3 = gen_design(ExperimentConfig(n=10_000, p=2, distribution="D3"), g).values[:, 0]
        assert stats.kurtosis(d3) > 1.0
        assert stats.kurtosis(d3) > stats.kurtosis(d1)


class TestSparsify:
    def test_identity(self, rng):
        x = DesignMatrix(rng.standard_normal((30, 4)))
        assert sparsify(x, 1.0, 1e-2, rng) is x

    def test_counts_and_scale(self):
        g = np.random.default_rng(8)
        x = DesignMatrix(g.standard_normal((10_000, 100)))
        out, mask = sparsify(x, 0.2, 1e-2, g, return_mask=True)
        assert mask.sum() == 800_000
        assert 0.009 <= out.values[mask].std() <= 0.011
        assert np.array_equal(out.values[~mask], x.values[~mask])

    @given(st.integers(0, 2**32 - 1), st.floats(0.05, 1.0))
    def test_preserves_unselected(self, seed, alpha):
        g = np.random.default_rng(seed)
        x = DesignMatrix(g.standard_normal((20, 3)))
        out, mask = sparsify(x, alpha, 1e-2, g, return_mask=True)
        assert mask.sum() == int(np.floor((1 - alpha) * 60 + 1e-9))
        assert np.array_equal(out.values[~mask], x.values[~mask])

    def test_not_recentered(self):
        c = cfg(alpha=0.2, n=500)
        d = generate_dataset(c, replication_rng(0, 0))
        assert not d.x.centered


class TestResponse:
    def test_zero_beta(self, rng):
        with pytest.raises(DegenerateSignal):
            gen_response(rng.standard_normal((10, 2)), np.zeros(2), 4.0, rng)

    def test_infinite_snr(self, rng):
        x = rng.standard_normal((10, 2))
        y, s2 = gen_response(x, np.ones(2), float("inf"), rng)
        assert s2 == 0.0
        assert np.array_equal(y, x @ np.ones(2))

    def test_sigma_formula(self, rng):
        x = rng.standard_normal((50, 3))
        _, s2 = gen_response(x, np.ones(3), 4.0, rng)
        assert s2 == pytest.approx(np.var(x @ np.ones(3), ddof=1) / 4.0, rel=1e-14)

    def test_realized_snr(self):
        g = np.random.default_rng(9)
        x = gen_design(ExperimentConfig(n=5000, p=10), g)
        y, _ = gen_response(x, np.ones(10), 4.0, g)
        signal = x.values @ np.ones(10)
        assert 3.5 <= np.var(signal, ddof=1) / np.var(y - signal, ddof=1) <= 4.5


class TestOutliers:
    def test_counts(self):
        assert outlier_counts(19) == [5, 5, 5, 4]
        assert outlier_counts(4) == [1, 1, 1, 1]
        assert outlier_counts(0) == [0, 0, 0, 0]
        assert sum(outlier_counts(3)) == 3

    def test_none(self, rng):
        x = rng.standard_normal((20, 2))
        y = rng.standard_normal(20)
        d = inject_outliers(x, y, 0, rng)
        assert d.outlier_index_set.size == 0
        assert np.array_equal(d.y, y) and np.array_equal(d.x.values, x)

    def test_groups(self):
        g = np.random.default_rng(10)
        x = g.standard_normal((400, 6))
        y = g.standard_normal(400)
        d = inject_outliers(x, y, 19, g)
        assert [len(s) for s in d.outlier_groups] == [5, 5, 5, 4]
        o1, o2, o3, o4 = d.outlier_groups
        assert np.all(np.abs(d.y[o1] - 1000) <= 60)
        assert np.all(np.abs(d.y[o2] + 500) <= 60)
        assert np.all(np.abs(d.x.values[o1] + 10) < 6)
        assert np.all((d.x.values[o3] >= 0) & (d.x.values[o3] <= 1))
        assert set(d.y[o3]) <= {0.0, 1.0}
        untouched = d.informative_index_set
        assert np.array_equal(d.y[untouched], y[untouched])
        assert np.array_equal(np.sort(np.concatenate(d.outlier_groups)), d.outlier_index_set)

    @given(st.integers(0, 2**32 - 1), st.integers(0, 29))
    def test_partition(self, seed, n_o):
        g = np.random.default_rng(seed)
        d = inject_outliers(g.standard_normal((30, 2)), g.standard_normal(30), n_o, g)
        both = np.concatenate([d.outlier_index_set, d.informative_index_set])
        assert np.array_equal(np.sort(both), np.arange(30))
        assert len(d.outlier_index_set) == n_o

    def test_positions_uniform(self):
        # each row should be hit about n_o/n of the time
        hits = np.zeros(20)
        g = np.random.default_rng(11)
        for _ in range(2000):
            d = inject_outliers(np.ones((20, 1)) + g.standard_normal((20, 1)), np.zeros(20), 5, g)
            hits[d.outlier_index_set] += 1
        assert stats.chisquare(hits).pvalue > 0.001


class TestMisspec:
    @pytest.mark.parametrize("h", ["H1", "H2", "H3"])
    def test_amplitude(self, rng, h):
        x = rng.standard_normal((100, 8))
        assert np.max(np.abs(misspec_term(x, h))) == pytest.approx(10.0, abs=1e-9)

    def test_h1_odd(self, rng):
        x = rng.standard_normal((50, 8))
        raw = x[:, 2] * x[:, 7]
        x2 = x.copy()
        x2[:, 7] *= -1
        assert np.allclose(misspec_term(x2, "H1"), -misspec_term(x, "H1"))
        assert np.allclose(misspec_term(x, "H1"), raw * 10 / np.max(np.abs(raw)))

    def test_degenerate(self, rng):
        x = rng.standard_normal((20, 4))
        x[:, 2] = 0
        with pytest.raises(DegenerateMisspec):
            misspec_term(x, "H3")

    def test_too_small(self, rng):
        with pytest.raises(DimensionTooSmall):
            misspec_term(rng.standard_normal((20, 7)), "H1")
        with pytest.raises(DimensionTooSmall):
            misspec_term(rng.standard_normal((20, 2)), "H3")

    def test_response(self, rng):
        x = rng.standard_normal((100, 8))
        y, s2 = gen_misspecified(x, np.ones(8), float("inf"), "H2", rng)
        assert s2 == 0.0
        assert np.allclose(y, x @ np.ones(8) + misspec_term(x, "H2"))


class TestSplit:
    def test_sizes(self, rng):
        d = generate_dataset(ExperimentConfig(n=10, p=2), rng)
        tr, te = train_test_split(d, 0.7, rng)
        assert (tr.n, te.n) == (7, 3)
        assert np.array_equal(np.sort(np.concatenate([tr.rows, te.rows])), np.arange(10))

    def test_outliers_train_only(self):
        d = generate_dataset(ExperimentConfig(n=200, p=3, n_outliers=11), replication_rng(1, 0))
        tr, te = train_test_split(d, 0.7, np.random.default_rng(0))
        assert te.n == 200 - 11 - int(0.7 * 189)
        assert not set(te.rows) & set(d.outlier_index_set)
        assert set(d.outlier_index_set) <= set(tr.rows)
        assert len(tr.outlier_index_set) == 11
        assert np.array_equal(tr.rows[tr.outlier_index_set], d.outlier_index_set)

    def test_bad_ratio(self, rng):
        d = generate_dataset(ExperimentConfig(n=10, p=2), rng)
        with pytest.raises(ValueError):
            train_test_split(d, 1.0, rng)

    def test_reproducible(self):
        d = generate_dataset(ExperimentConfig(n=50, p=2), replication_rng(3, 0))
        a = train_test_split(d, 0.7, np.random.default_rng(5))
        b = train_test_split(d, 0.7, np.random.default_rng(5))
        assert np.array_equal(a[0].rows, b[0].rows)


@pytest.mark.parametrize("kw", [dict(), dict(distribution="D3", alpha=0.2), dict(n_outliers=7, misspec="H3")])
def test_generation_deterministic(kw):
    c = ExperimentConfig(n=300, p=8, seed=42, **kw)
    a = generate_dataset(c, replication_rng(c.seed, 2))
    b = generate_dataset(c, replication_rng(c.seed, 2))
    assert a.x.values.tobytes() == b.x.values.tobytes()
    assert a.y.tobytes() == b.y.tobytes()
    assert np.array_equal(a.outlier_index_set, b.outlier_index_set)
    c2 = generate_dataset(c, replication_rng(c.seed, 3))
    assert not np.array_equal(a.y, c2.y)
