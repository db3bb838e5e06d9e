"""Likelihood-ratio and Wald tests built on truncated maximum likelihood fits.

Group comparisons are run under either of two strategies: the GP model
(``model="gp"``, two free parameters per group) or the exponential model
(``model="exponential"``, one free parameter per group).
"""

from __future__ import annotations

import json
import math
import warnings
from dataclasses import dataclass, field
from typing import Mapping, Sequence

from scipy import stats

from truncevt.errors import ConvergenceError, GroupFitError, ParameterDomainError, UnusableFitError
from truncevt.fit import FitResult, fit_gp
from truncevt.trunclik import TruncatedSample, as_sample

PARAMS_PER_MODEL = {"gp": 2, "exponential": 1}
STRATEGY = {"gp": "gp", "exponential": "exp"}
LR_TOLERANCE = 1e-6


@dataclass(frozen=True)
class TestReport:
    """Result of one test.

    ``statistic`` is the LR statistic (clipped at 0) or, for the Wald test,
    the signed z value.  ``df`` is ``None`` for the Wald test.  ``details``
    carries test-specific numbers such as group log-likelihoods or estimates.
    """

    __test__ = False  # not a pytest class

    test: str
    statistic: float
    df: int | None
    p_value: float
    strategy: str
    groups: tuple[str, ...]
    details: dict = field(default_factory=dict, compare=False)

    def to_dict(self) -> dict:
        return {
            "test": self.test,
            "statistic": float(self.statistic),
            "df": self.df,
            "p_value": float(self.p_value),
            "strategy": self.strategy,
            "groups": list(self.groups),
            "details": self.details,
        }

    def to_json(self, **kwargs) -> str:
        return json.dumps(self.to_dict(), allow_nan=False, **kwargs)


def lr_statistic(loglik_null: float, loglik_alt: float) -> float:
    """``2 (alt - null)`` clipped at 0; warns if it is negative beyond tolerance."""
    stat = 2.0 * (loglik_alt - loglik_null)
    if stat < -LR_TOLERANCE:
        warnings.warn(f"negative LR statistic {stat:.3g}; optimizer may not have converged", RuntimeWarning)
    return max(stat, 0.0)


def _labeled(samples) -> list[tuple[str, TruncatedSample]]:
    items = samples.items() if isinstance(samples, Mapping) else samples
    out = [(str(label), as_sample(s)) for label, s in items]
    if len(out) < 2:
        raise ParameterDomainError("need at least two groups")
    for label, s in out:
        if len(s) == 0:
            raise ParameterDomainError(f"group {label!r} is empty")
    return out


def _fit_group(label, sample, model) -> FitResult:
    try:
        return fit_gp(sample, model)
    except (ConvergenceError, ParameterDomainError) as exc:
        raise GroupFitError(label, exc) from exc


def lr_test_groups(samples, model: str = "exponential") -> TestReport:
    """LR test that all groups share one law.

    ``samples`` maps labels to samples (or is a sequence of ``(label,
    sample)`` pairs).  The statistic compares separate fits per group with one
    pooled fit and is referred to chi-square with ``(G - 1) k`` degrees of
    freedom, ``k`` being 2 for the GP model and 1 for the exponential one.
    The result does not depend on group order.
    """
    if model not in PARAMS_PER_MODEL:
        raise ParameterDomainError(f"unknown model {model!r}")
    groups = _labeled(samples)
    fits = {label: _fit_group(label, s, model) for label, s in groups}
    pooled = groups[0][1]
    for _, s in groups[1:]:
        pooled = pooled.concat(s)
    pooled_fit = _fit_group("pooled", pooled, model)
    separate = math.fsum(f.loglik for f in fits.values())
    stat = lr_statistic(pooled_fit.loglik, separate)
    df = (len(groups) - 1) * PARAMS_PER_MODEL[model]
    p = float(stats.chi2.sf(stat, df)) if stat > 0 else 1.0
    details = {
        "loglik_pooled": pooled_fit.loglik,
        "loglik_groups": {label: f.loglik for label, f in fits.items()},
        "n_groups": {label: f.n for label, f in fits.items()},
        "params_groups": {label: [f.gamma, f.sigma] for label, f in fits.items()},
        "params_pooled": [pooled_fit.gamma, pooled_fit.sigma],
    }
    return TestReport("lr_groups", stat, df, p, STRATEGY[model], tuple(label for label, _ in groups), details)


def lr_test_exponential(sample, label: str = "") -> TestReport:
    """LR test of ``gamma = 0`` (exponential) against the GP model, one degree of freedom."""
    s = as_sample(sample)
    if len(s) == 0:
        raise ParameterDomainError("empty sample")
    exp_fit = fit_gp(s, "exponential")
    gp_fit = fit_gp(s, "gp")
    if gp_fit.loglik < exp_fit.loglik:
        # the exponential optimum is a feasible GP point; restart from it
        gp_fit = fit_gp(s, "gp", start=exp_fit.params)
    stat = lr_statistic(exp_fit.loglik, gp_fit.loglik)
    p = float(stats.chi2.sf(stat, 1)) if stat > 0 else 1.0
    details = {
        "loglik_gp": gp_fit.loglik,
        "loglik_exponential": exp_fit.loglik,
        "gamma": gp_fit.gamma,
        "ci_gamma": None if gp_fit.ci_gamma is None else list(gp_fit.ci_gamma),
        "sigma_exponential": exp_fit.sigma,
    }
    return TestReport("lr_exponential", stat, 1, p, "gp", (label,) if label else (), details)


def wald_z(est1: float, se1: float, est2: float, se2: float) -> float:
    denom = math.sqrt(se1 * se1 + se2 * se2)
    if denom == 0:
        return 0.0 if est1 == est2 else math.copysign(math.inf, est1 - est2)
    return (est1 - est2) / denom


def wald_test_halves(first: FitResult, second: FitResult, labels: Sequence[str] = ("first", "second")) -> TestReport:
    """Two-sided Wald test that two exponential fits share the same ``sigma``.

    Uses ``z = (s1 - s2) / sqrt(se1^2 + se2^2)`` on the ``sigma`` scale with a
    standard normal reference.
    """
    for fr in (first, second):
        if fr.model != "exponential":
            raise UnusableFitError("Wald halves test expects exponential fits")
        if fr.se_sigma is None:
            raise UnusableFitError("fit has no standard error (unstable information)")
    z = wald_z(first.sigma, first.se_sigma, second.sigma, second.se_sigma)
    p = float(2.0 * stats.norm.sf(abs(z)))
    details = {
        "sigma": [first.sigma, second.sigma],
        "se": [first.se_sigma, second.se_sigma],
        "n": [first.n, second.n],
    }
    return TestReport("wald_halves", z, None, min(p, 1.0), "exp", tuple(labels), details)
