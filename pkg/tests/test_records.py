import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from scipy import integrate

from truncevt.errors import ParameterDomainError
from truncevt.records import (
    ForecastBand,
    RecordForecast,
    default_grid,
    forecast_band,
    outlier_probability,
    record_cdf,
    record_cdf_poisson,
    record_exceedance,
    record_pdf,
    record_pdf_poisson,
    write_band_csv,
)

IDENTITY_FORECAST = RecordForecast(1.34, 2974, (1.22, 1.46), (2334, 3615))
LOG_FORECAST = RecordForecast(1.34, 18717, (1.22, 1.46), (7429, 46962))


class TestRecordCdf:
    def test_below_119(self):
        # "the estimate 3% for the probability that the record age is lower than 119"
        assert round(record_cdf(1.34, 2974, 9), 2) == 0.03
        # "the upper bound estimate 23%"
        assert round(record_cdf(1.22, 2334, 9), 2) == 0.23

    def test_single_lifetime(self):
        x = np.linspace(0, 10, 11)
        np.testing.assert_allclose(record_cdf(1.7, 1, x), -np.expm1(-x / 1.7), rtol=1e-14)

    def test_monotone(self):
        x = np.linspace(0.1, 20, 50)
        assert np.all(np.diff(record_cdf(1.34, 500, x)) > 0)
        assert record_cdf(1.34, 1000, 9.0) < record_cdf(1.34, 500, 9.0)
        assert record_cdf(1.5, 500, 9.0) < record_cdf(1.2, 500, 9.0)

    def test_closed_form(self):
        for x in (1.0, 5.0, 9.0, 14.0):
            assert record_cdf(1.34, 2974, x) == pytest.approx((1 - math.exp(-x / 1.34)) ** 2974, rel=1e-12)

    def test_domain(self):
        for args in [(0.0, 10, 1.0), (1.0, 0.5, 1.0), (1.0, 10, -1.0), (1.0, math.nan, 1.0)]:
            with pytest.raises(ParameterDomainError):
                record_cdf(*args)

    def test_tiny_exceedance_against_mpmath(self):
        mpmath = pytest.importorskip("mpmath")
        mpmath.mp.dps = 50
        sigma, n = 1.34, 2974
        for x in (50.0, 60.0, 80.0):
            q = math.exp(-x / sigma)
            assert n * q < 1e-12
            exact = 1 - (1 - mpmath.exp(-mpmath.mpf(x) / sigma)) ** n
            got = record_exceedance(sigma, n, x)
            assert got == pytest.approx(float(exact), rel=1e-13)
            # first-order approximation n q, good to relative order n q
            assert abs(got / (n * q) - 1) <= n * q + 1e-14


class TestRecordPdf:
    def test_single_is_exponential(self):
        x = np.linspace(0, 8, 17)
        np.testing.assert_allclose(record_pdf(1.3, 1, x), np.exp(-x / 1.3) / 1.3, rtol=1e-14)

    def test_mode(self):
        x = np.linspace(5, 15, 100_001)
        mode = x[np.argmax(record_pdf(1.34, 2974, x))]
        assert mode == pytest.approx(1.34 * math.log(2974), abs=1e-3)
        assert 120 < 110 + mode < 121

    @pytest.mark.parametrize("n", [1, 2, 566, 2974])
    def test_normalized(self, n):
        sigma = 1.34
        val, _ = integrate.quad(lambda x: record_pdf(sigma, n, x), 0, 40 * sigma, limit=400, points=[sigma * math.log(n)])
        assert val == pytest.approx(1.0, abs=1e-6)

    def test_derivative_of_cdf(self):
        sigma, n = 1.34, 2974
        h = 1e-5
        x = np.linspace(0.5, 24, 300)
        fd = (record_cdf(sigma, n, x + h) - record_cdf(sigma, n, x - h)) / (2 * h)
        assert np.max(np.abs(fd - record_pdf(sigma, n, x))) < 1e-6


class TestExceedance:
    def test_above_128(self):
        # "the estimate 3% for the probability that the record age exceeds 128 years"
        assert round(record_exceedance(1.34, 18717, 18), 2) == 0.03
        # "the upper bound 19%"
        assert round(record_exceedance(1.46, 46962, 18), 2) == 0.19

    def test_at_zero(self):
        assert record_exceedance(1.34, 100, 0.0) == 1.0

    @given(s=st.floats(0.3, 5), n=st.floats(1, 1e5), x=st.floats(0, 60))
    def test_complement(self, s, n, x):
        assert record_exceedance(s, n, x) + record_cdf(s, n, x) == pytest.approx(1.0, abs=1e-15)


class TestOutlier:
    def test_reference_value(self):
        # largest of 566 exponentials with mean 1.34 beyond an excess of 12.45
        assert round(outlier_probability(1.34, 566, 12.45), 2) == 0.05

    def test_identity(self):
        # same quantity; the complement is formed without cancellation, so allow rounding only
        assert outlier_probability(1.34, 566, 12.45) == pytest.approx(1 - record_cdf(1.34, 566, 12.45), rel=1e-14)
        assert outlier_probability(1.34, 566, 12.45) == record_exceedance(1.34, 566, 12.45)

    def test_at_zero(self):
        assert outlier_probability(1.34, 566, 0.0) == 1.0


class TestPoisson:
    @pytest.mark.parametrize("n", [2974, 18717])
    def test_close_to_fixed_count(self, n):
        x = np.round(np.arange(0, 1801) * 0.01, 2)
        diff = np.abs(record_cdf_poisson(1.34, n, x) - record_cdf(1.34, n, x))
        assert diff.max() < 0.01

    def test_limits(self):
        assert record_cdf_poisson(1.34, 100, 1e4) == 1.0
        assert record_cdf_poisson(1.34, 1e-14, 0.0) == pytest.approx(1.0, abs=1e-13)
        np.testing.assert_allclose(record_cdf_poisson(1.34, 1e-12, np.linspace(0, 5, 6)), 1.0, atol=1e-11)

    def test_needs_positive_mean(self):
        with pytest.raises(ParameterDomainError):
            record_cdf_poisson(1.34, 0.0, 1.0)

    def test_pdf_is_derivative(self):
        h = 1e-5
        x = np.linspace(0.5, 20, 200)
        fd = (record_cdf_poisson(1.34, 2974, x + h) - record_cdf_poisson(1.34, 2974, x - h)) / (2 * h)
        assert np.max(np.abs(fd - record_pdf_poisson(1.34, 2974, x))) < 1e-6

    def test_poisson_mixture_by_simulation(self):
        rng = np.random.default_rng(3)
        counts = rng.poisson(50, size=200_000)
        # the maximum of N exponentials is below x with prob (1 - e^{-x/s})^N
        p = np.mean((1 - math.exp(-6.0 / 1.34)) ** counts)
        assert p == pytest.approx(record_cdf_poisson(1.34, 50, 6.0), abs=3e-3)


class TestForecast:
    def test_bracket_validation(self):
        with pytest.raises(ParameterDomainError):
            RecordForecast(1.34, 100, (1.4, 1.5), (90, 110))
        with pytest.raises(ParameterDomainError):
            RecordForecast(1.34, 0.0)

    def test_joint_confidence(self):
        assert RecordForecast.joint_confidence() == pytest.approx(0.9025)
        assert round(RecordForecast.joint_confidence(), 1) == 0.9

    def test_forecast_queries(self):
        below = IDENTITY_FORECAST.prob_below(9.0)
        above = LOG_FORECAST.prob_above(18.0)
        assert round(below["estimate"], 2) == 0.03 and round(below["upper_bound"], 2) == 0.23
        assert round(above["estimate"], 2) == 0.03 and round(above["upper_bound"], 2) == 0.19

    def test_no_intervals(self):
        f = RecordForecast(1.34, 2974)
        assert "upper_bound" not in f.prob_below(9.0)
        with pytest.raises(ParameterDomainError):
            forecast_band(f)

    def test_degenerate_intervals_identical_curves(self):
        f = RecordForecast(1.34, 2974, (1.34, 1.34), (2974, 2974))
        band = forecast_band(f)
        np.testing.assert_array_equal(band.point, band.lower)
        np.testing.assert_array_equal(band.point, band.upper)

    def test_upper_dominates_lower(self):
        x = default_grid()
        (s_lo, n_lo), (s_hi, n_hi) = IDENTITY_FORECAST.lower, IDENTITY_FORECAST.upper
        assert np.all(record_cdf(s_hi, n_hi, x) <= record_cdf(s_lo, n_lo, x))

    def test_identity_link_mass_in_115_130(self):
        for s, n in [(1.34, 2974), IDENTITY_FORECAST.lower, IDENTITY_FORECAST.upper]:
            mass = record_cdf(s, n, 20.0) - record_cdf(s, n, 5.0)
            assert mass > 0.99

    def test_default_grid(self):
        g = default_grid()
        assert g[0] == 0.0 and g[-1] == pytest.approx(25.0) and g.size == 501

    def test_band_csv(self, tmp_path):
        band = forecast_band(IDENTITY_FORECAST, np.array([0.0, 9.0, 10.5]))
        path = tmp_path / "band.csv"
        write_band_csv(path, band)
        lines = path.read_text().splitlines()
        assert lines[0] == "age,density_point,density_lower,density_upper"
        assert lines[2].startswith("119.0,")
        assert float(lines[3].split(",")[1]) == band.point[2]
        assert isinstance(band, ForecastBand)
