"""Truncation-aware extreme value analysis of threshold-exceedance lifespans."""

from truncevt.evd import (
    GpParams,
    gp_cdf,
    gp_hazard,
    gp_pdf,
    gp_quantile,
    gp_sample,
    mean_max_exponential,
)
from truncevt.fit import FitResult, fit_gp, observed_information, survival_one_year, yearly_survival
from truncevt.hypotest import TestReport, lr_test_exponential, lr_test_groups, wald_test_halves
from truncevt.records import (
    RecordForecast,
    forecast_band,
    outlier_probability,
    record_cdf,
    record_cdf_poisson,
    record_exceedance,
    record_pdf,
    record_pdf_poisson,
)
from truncevt.trend import CountEstimate, TrendModel, YearlyCounts, fit_trend, forecast_count, scale_count
from truncevt.trunclik import SamplingWindow, TruncatedObservation, TruncatedSample, log_contribution, total_loglik

__version__ = "0.1.0"

__all__ = [
    "CountEstimate",
    "FitResult",
    "GpParams",
    "RecordForecast",
    "SamplingWindow",
    "TestReport",
    "TrendModel",
    "TruncatedObservation",
    "TruncatedSample",
    "YearlyCounts",
    "fit_gp",
    "fit_trend",
    "forecast_band",
    "forecast_count",
    "gp_cdf",
    "gp_hazard",
    "gp_pdf",
    "gp_quantile",
    "gp_sample",
    "log_contribution",
    "lr_test_exponential",
    "lr_test_groups",
    "mean_max_exponential",
    "observed_information",
    "outlier_probability",
    "record_cdf",
    "record_cdf_poisson",
    "record_exceedance",
    "record_pdf",
    "record_pdf_poisson",
    "scale_count",
    "survival_one_year",
    "total_loglik",
    "wald_test_halves",
    "yearly_survival",
]
