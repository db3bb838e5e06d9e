"""Maximum likelihood fits of GP and exponential laws to truncated samples.

The search runs a Nelder-Mead simplex over ``(gamma, log sigma)``, which keeps
``sigma`` positive without constraints.  Standard errors come from the inverse
observed information, computed by central differences on the ``(gamma,
sigma)`` scale, and intervals are Wald intervals ``estimate +/- 1.96 se``.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass
from typing import Callable, NamedTuple

import numpy as np
from scipy.optimize import minimize

from truncevt.errors import ConvergenceError, ParameterDomainError
from truncevt.evd import GpParams
from truncevt.trunclik import TruncatedSample, _sum_loglik, as_sample

MODELS = ("gp", "exponential")
Z95 = 1.96
GAMMA_BOX = (-5.0, 5.0)
MAX_EVALS = 10_000
XATOL = 1e-8
FATOL = 1e-10
HESSIAN_REL_STEP = 1e-4
#: Information matrices with eigenvalue ratio below this are treated as singular.
EIG_RATIO_MIN = 1e-10


@dataclass(frozen=True)
class FitResult:
    """Outcome of :func:`fit_gp`.

    ``covariance`` is 2x2 in ``(gamma, sigma)`` order for the GP model and 1x1
    (``sigma``) for the exponential one; it and the intervals are ``None``
    when the observed information could not be inverted reliably.
    """

    model: str
    params: GpParams
    loglik: float
    n: int
    covariance: np.ndarray | None
    ci_gamma: tuple[float, float] | None
    ci_sigma: tuple[float, float] | None
    converged: bool
    hessian_unstable: bool
    nfev: int = 0

    @property
    def gamma(self) -> float:
        return self.params.gamma

    @property
    def sigma(self) -> float:
        return self.params.sigma

    @property
    def se_sigma(self) -> float | None:
        if self.covariance is None:
            return None
        return math.sqrt(self.covariance[-1, -1])

    @property
    def se_gamma(self) -> float | None:
        if self.covariance is None or self.model != "gp":
            return None
        return math.sqrt(self.covariance[0, 0])

    def to_dict(self) -> dict:
        cov = None if self.covariance is None else [[float(v) for v in row] for row in self.covariance]
        return {
            "model": self.model,
            "gamma": float(self.params.gamma),
            "sigma": float(self.params.sigma),
            "loglik": float(self.loglik),
            "n": int(self.n),
            "covariance": cov,
            "ci_gamma": None if self.ci_gamma is None else [float(v) for v in self.ci_gamma],
            "ci_sigma": None if self.ci_sigma is None else [float(v) for v in self.ci_sigma],
            "se_gamma": self.se_gamma,
            "se_sigma": self.se_sigma,
            "converged": bool(self.converged),
            "hessian_unstable": bool(self.hessian_unstable),
            "nfev": int(self.nfev),
        }

    def to_json(self, **kwargs) -> str:
        return json.dumps(self.to_dict(), allow_nan=False, **kwargs)

    @classmethod
    def from_dict(cls, d: dict) -> "FitResult":
        cov = None if d.get("covariance") is None else np.array(d["covariance"], dtype=float)
        return cls(
            model=d["model"],
            params=GpParams(d["gamma"], d["sigma"]),
            loglik=d["loglik"],
            n=d["n"],
            covariance=cov,
            ci_gamma=None if d.get("ci_gamma") is None else tuple(d["ci_gamma"]),
            ci_sigma=None if d.get("ci_sigma") is None else tuple(d["ci_sigma"]),
            converged=d["converged"],
            hessian_unstable=d["hessian_unstable"],
            nfev=d.get("nfev", 0),
        )


def _objective(s: TruncatedSample, model: str) -> Callable[[np.ndarray], float]:
    lo, hi = GAMMA_BOX
    if model == "exponential":
        def negll(theta):
            return -_sum_loglik(s, 0.0, math.exp(theta[0]))
    else:
        def negll(theta):
            gamma, log_sigma = theta
            if not lo <= gamma <= hi:
                return math.inf
            return -_sum_loglik(s, gamma, math.exp(log_sigma))
    return negll


def _simplex(theta0: np.ndarray, step: float) -> np.ndarray:
    k = theta0.size
    sim = np.tile(theta0, (k + 1, 1))
    for i in range(k):
        sim[i + 1, i] += step
    return sim


def _run_simplex(negll, theta0, step, budget):
    res = minimize(
        negll,
        theta0,
        method="Nelder-Mead",
        options={
            "initial_simplex": _simplex(theta0, step),
            "xatol": XATOL,
            "fatol": FATOL,
            "maxfev": budget,
            "maxiter": budget,
        },
    )
    return res


def _to_params(theta, model) -> GpParams:
    if model == "exponential":
        return GpParams(0.0, math.exp(theta[0]))
    return GpParams(float(theta[0]), math.exp(theta[1]))


def fit_gp(sample, model: str = "gp", start: GpParams | None = None) -> FitResult:
    """Fit a GP (``model="gp"``) or exponential law by truncated maximum likelihood.

    Parameters
    ----------
    sample : sequence of TruncatedObservation or TruncatedSample
    model : {"gp", "exponential"}
        The exponential model fixes ``gamma = 0``.
    start : GpParams, optional
        Starting point; defaults to ``gamma = 0`` and ``sigma`` equal to the
        mean excess.

    Raises
    ------
    ConvergenceError
        If the simplex search does not converge within 10,000 evaluations.
    """
    if model not in MODELS:
        raise ParameterDomainError(f"model must be one of {MODELS}, got {model!r}")
    s = as_sample(sample)
    n = len(s)
    if n == 0:
        raise ParameterDomainError("cannot fit an empty sample")
    if start is None:
        mean = float(np.mean(s.excess))
        start = GpParams(0.0, mean if mean > 0 else 1.0)
    if model == "exponential":
        theta = np.array([math.log(start.sigma)])
    else:
        theta = np.array([start.gamma, math.log(start.sigma)])

    negll = _objective(s, model)
    if not math.isfinite(negll(theta)):
        raise ConvergenceError(f"starting point {start} is infeasible for the sample", best=start)

    nfev = 0
    best_f = math.inf
    converged = False
    # One restart from the optimum guards against a prematurely collapsed simplex.
    for step in (0.1, 0.02):
        res = _run_simplex(negll, theta, step, MAX_EVALS - nfev)
        nfev += res.nfev
        improved = res.fun < best_f
        if improved:
            gain = best_f - res.fun
            theta, best_f = res.x, res.fun
        converged = bool(res.success)
        if not converged or nfev >= MAX_EVALS:
            break
        if improved and gain <= FATOL:
            break
    params = _to_params(theta, model)
    if not converged:
        raise ConvergenceError(
            f"simplex search did not converge in {nfev} evaluations", best=params, loglik=-best_f
        )

    loglik = _sum_loglik(s, params.gamma, params.sigma)
    info = observed_information(s, params, model)
    cov, unstable = _invert_information(info)
    ci_gamma = ci_sigma = None
    if cov is not None:
        se_sigma = math.sqrt(cov[-1, -1])
        lo_sigma = params.sigma - Z95 * se_sigma
        if lo_sigma > 0:
            ci_sigma = (lo_sigma, params.sigma + Z95 * se_sigma)
        if model == "gp":
            se_gamma = math.sqrt(cov[0, 0])
            ci_gamma = (params.gamma - Z95 * se_gamma, params.gamma + Z95 * se_gamma)
    return FitResult(
        model=model,
        params=params,
        loglik=loglik,
        n=n,
        covariance=cov,
        ci_gamma=ci_gamma,
        ci_sigma=ci_sigma,
        converged=converged,
        hessian_unstable=unstable,
        nfev=nfev,
    )


def numerical_hessian(f: Callable[[np.ndarray], float], x, steps) -> np.ndarray:
    """Central-difference Hessian of ``f`` at ``x``, symmetrized.

    Exact up to rounding for quadratic ``f``.
    """
    x = np.asarray(x, dtype=float)
    h = np.asarray(steps, dtype=float)
    k = x.size
    H = np.empty((k, k))
    f0 = f(x)
    for i in range(k):
        ei = np.zeros(k)
        ei[i] = h[i]
        H[i, i] = (f(x + ei) - 2.0 * f0 + f(x - ei)) / h[i] ** 2
        for j in range(i):
            ej = np.zeros(k)
            ej[j] = h[j]
            H[i, j] = (f(x + ei + ej) - f(x + ei - ej) - f(x - ei + ej) + f(x - ei - ej)) / (4.0 * h[i] * h[j])
            H[j, i] = H[i, j]
    return 0.5 * (H + H.T)


def observed_information(sample, p: GpParams, model: str = "gp") -> np.ndarray:
    """Negative Hessian of the log-likelihood at ``p`` on the ``(gamma, sigma)`` scale.

    Returns a 2x2 matrix for ``model="gp"`` and 1x1 for ``"exponential"``.
    Entries are ``nan`` or ``inf`` when a perturbed point is infeasible.
    """
    s = as_sample(sample)
    if model == "exponential":
        def ll(theta):
            return _sum_loglik(s, 0.0, theta[0]) if theta[0] > 0 else -math.inf
        x, steps = [p.sigma], [HESSIAN_REL_STEP * p.sigma]
    else:
        def ll(theta):
            return _sum_loglik(s, theta[0], theta[1]) if theta[1] > 0 else -math.inf
        x = [p.gamma, p.sigma]
        steps = [HESSIAN_REL_STEP * max(abs(p.gamma), 1.0), HESSIAN_REL_STEP * p.sigma]
    with np.errstate(invalid="ignore"):
        return -numerical_hessian(ll, x, steps)


def _invert_information(info: np.ndarray):
    """Covariance and instability flag from an information matrix."""
    if not np.all(np.isfinite(info)):
        return None, True
    eig = np.linalg.eigvalsh(info)
    if eig[-1] <= 0 or eig[0] < EIG_RATIO_MIN * eig[-1]:
        return None, True
    cov = np.linalg.inv(info)
    return 0.5 * (cov + cov.T), False


class SurvivalEstimate(NamedTuple):
    estimate: float
    interval: tuple[float, float] | None


def yearly_survival(sigma: float, interval: tuple[float, float] | None = None) -> SurvivalEstimate:
    """Probability ``exp(-1/sigma)`` of surviving one more year under constant hazard.

    The interval maps the endpoints of a ``sigma`` interval through the same
    increasing transform.
    """
    if not sigma > 0:
        raise ParameterDomainError("sigma must be > 0")
    est = math.exp(-1.0 / sigma)
    if interval is None:
        return SurvivalEstimate(est, None)
    lo, hi = interval
    return SurvivalEstimate(est, (math.exp(-1.0 / lo), math.exp(-1.0 / hi)))


def survival_one_year(fr: FitResult) -> SurvivalEstimate:
    if fr.model != "exponential":
        raise ParameterDomainError("one-year survival requires an exponential fit")
    return yearly_survival(fr.sigma, fr.ci_sigma)
