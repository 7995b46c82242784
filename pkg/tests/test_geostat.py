import io
import math

import numpy as np
import pytest

from hybriduq import geostat
from hybriduq.errors import DataError, ExperimentError, ParseError
from hybriduq.grf import Grid, HyperParams, se_nugget_cov

TRUTH = HyperParams(1.0, 1.0, 0.02, 0.1)


@pytest.fixture(scope="module")
def full():
    return geostat.synthetic_dataset(TRUTH, 100, seed=3)


def dense_nll(data, params):
    cov = se_nugget_cov(data.locations, params)
    r = data.log_values - params.mu
    n = len(data)
    return 0.5 * (np.log(np.linalg.det(cov)) + r @ np.linalg.inv(cov) @ r + n * np.log(2 * np.pi))


class TestIngest:
    def test_logperm(self, tmp_path):
        path = tmp_path / "d.csv"
        path.write_text("# slice\nx,logperm\n0,0.1\n1,0.2\n2,0.3\n3,0.4\n")
        d = geostat.ingest_csv(path)
        assert len(d) == 4
        np.testing.assert_array_equal(d.log_values, [0.1, 0.2, 0.3, 0.4])

    def test_perm_is_logged(self):
        d = geostat.ingest_csv(io.StringIO("x,perm\n0,1.0\n1,2.0\n2,3.0\n3,4.0\n"))
        assert d.log_values[0] == 0.0
        assert d.log_values[1] == pytest.approx(math.log(2.0))

    def test_bytes(self):
        d = geostat.ingest_csv(b"x,perm\n0,1\n1,1\n2,1\n3,1\n")
        assert len(d) == 4

    def test_duplicate_location(self):
        with pytest.raises(DataError):
            geostat.ingest_csv(io.StringIO("x,logperm\n0,1\n1,1\n1,2\n3,1\n"))

    def test_bad_row_line_number(self):
        with pytest.raises(ParseError) as info:
            geostat.ingest_csv(io.StringIO("x,logperm\n0,1\n# note\n1,abc\n"))
        assert info.value.line == 4

    def test_bad_header(self):
        with pytest.raises(ParseError):
            geostat.ingest_csv(io.StringIO("pos,k\n0,1\n"))

    def test_write_round_trip(self, tmp_path, full):
        path = tmp_path / "out.csv"
        geostat.write_csv(full, path)
        back = geostat.ingest_csv(path)
        np.testing.assert_array_equal(back.log_values, full.log_values)
        np.testing.assert_array_equal(back.locations, full.locations)


class TestLikelihood:
    def test_dense_oracle(self):
        d = geostat.synthetic_dataset(TRUTH, 10, seed=1)
        p = HyperParams(0.7, 0.8, 0.15, 0.2)
        assert geostat.neg_log_likelihood(d, p) == pytest.approx(dense_nll(d, p), abs=1e-8)

    def test_translation_invariance(self, full):
        p = HyperParams(0.5, 1.0, 0.03, 0.2)
        shifted = geostat.DataSet(full.locations, full.log_values + 7.5)
        a = geostat.neg_log_likelihood(full, p)
        b = geostat.neg_log_likelihood(shifted, HyperParams(8.0, 1.0, 0.03, 0.2))
        assert a == pytest.approx(b, abs=1e-9)

    def test_pure_nugget_stationary_point(self, full):
        y = full.log_values
        mu, t = y.mean(), y.var()

        def f(mu_, t_):
            return geostat.neg_log_likelihood(full, HyperParams(mu_, 0.0, 0.1, t_))

        h = 1e-6
        assert abs((f(mu + h, t) - f(mu - h, t)) / (2 * h)) <= 1e-4
        assert abs((f(mu, t + h) - f(mu, t - h)) / (2 * h)) <= 1e-4


class TestFit:
    def test_recovers_truth(self):
        d = geostat.synthetic_dataset(TRUTH, 200, seed=2)
        fit = geostat.fit_mle(d)
        total = fit.params.sigma2 + fit.params.tau2
        assert abs(total - 1.1) <= 0.3 * 1.1
        assert 0.5 * TRUTH.ell <= fit.params.ell <= 2 * TRUTH.ell

    def test_objective_consistent(self, full):
        fit = geostat.fit_mle(full)
        assert fit.neg_log_likelihood == pytest.approx(
            geostat.neg_log_likelihood(full, fit.params), abs=1e-10
        )

    def test_refit_fixed_point(self, full):
        fit = geostat.fit_mle(full)
        again = geostat.fit_mle(full, init=fit.params)
        assert again.neg_log_likelihood <= fit.neg_log_likelihood + 1e-6
        assert fit.neg_log_likelihood - again.neg_log_likelihood <= 1e-6

    def test_constant_data(self):
        d = geostat.DataSet(np.arange(4.0), np.full(4, 2.0))
        fit = geostat.fit_mle(d)
        assert fit.converged
        assert fit.params.tau2 < 1e-6
        assert fit.params.mu == pytest.approx(2.0, abs=1e-4)


class TestSubsets:
    def test_full_fraction(self, full):
        assert geostat.subsample(full, 1.0, 0) is full

    def test_half(self, full):
        half = geostat.subsample(full, 0.5, 4)
        assert len(half) == 50
        assert set(half.locations) <= set(full.locations)
        assert np.all(np.diff(half.locations) > 0)

    def test_deterministic(self, full):
        a, b = geostat.subsample(full, 0.3, 8), geostat.subsample(full, 0.3, 8)
        np.testing.assert_array_equal(a.locations, b.locations)

    def test_too_small(self, full):
        with pytest.raises(DataError):
            geostat.subsample(full, 0.02, 0)

    def test_enlarge_set_algebra(self, full):
        base = geostat.subsample(full, 0.5, 1)
        grown = geostat.enlarge(base, full, 0.1, 2)
        added = set(grown.locations) - set(base.locations)
        assert set(base.locations) <= set(grown.locations)
        assert len(added) == 10
        assert len(grown) == len(base) + 10
        assert not added & set(base.locations)

    def test_enlarge_to_full(self, full):
        base = geostat.subsample(full, 0.7, 1)
        grown = geostat.enlarge(base, full, 0.3, 5)
        np.testing.assert_array_equal(grown.locations, full.locations)

    def test_enlarge_infeasible(self, full):
        base = geostat.subsample(full, 0.9, 1)
        with pytest.raises(DataError):
            geostat.enlarge(base, full, 0.2, 0)

    def test_shrink(self, full):
        base = geostat.subsample(full, 0.5, 1)
        thin = geostat.shrink(base, full, 0.1, 3)
        assert len(thin) == 40
        assert set(thin.locations) <= set(base.locations)


class TestREDistribution:
    def test_identity_enlargement(self, full):
        base = geostat.subsample(full, 0.6, 0)
        nominal = geostat.fit_mle(base)
        dist = geostat.re_distribution(nominal, full, base, 1, Grid(32), seed=0, fraction_step=0.0)
        assert dist.values[0] == pytest.approx(0.0, abs=1e-6)
        assert set(dist.selections.values()) == {0}

    def test_values_and_selections(self, full):
        base = geostat.subsample(full, 0.7, 0)
        nominal = geostat.fit_mle(base)
        dist = geostat.re_distribution(nominal, full, base, 5, Grid(32), seed=1)
        v = dist.values
        assert v.size + dist.failures == 5
        assert np.all(v >= -1e-10) and np.all(np.isfinite(v))
        assert v[dist.selections["max"]] == v.max()
        assert v[dist.selections["min"]] == v.min()
        counts, _ = dist.histogram()
        assert counts.sum() == v.size

    def test_count_validated(self, full):
        base = geostat.subsample(full, 0.7, 0)
        with pytest.raises(ExperimentError):
            geostat.re_distribution(geostat.fit_mle(base), full, base, 0, Grid(8), seed=0)
