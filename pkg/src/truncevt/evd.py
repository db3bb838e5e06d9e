"""Generalized Pareto and exponential distribution primitives.

All functions take excesses over the threshold (years) and a :class:`GpParams`.
Inputs may be scalars or array-likes; scalar input gives a ``float`` back.

The shape ``gamma`` selects the tail regime: ``gamma < 0`` has the finite upper
endpoint ``-sigma / gamma``, ``gamma == 0`` is the exponential law with constant
hazard ``1 / sigma``, and ``gamma > 0`` has a decreasing hazard.

Sampling uses numpy's PCG64 bit generator (``numpy.random.default_rng``) with
inverse-cdf transformation of ``Generator.random`` draws, so a fixed integer
seed reproduces samples bit for bit on a given numpy release.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from truncevt.errors import EndpointError, ParameterDomainError

#: Below this ``|gamma|`` the exponential closed forms are used.
GAMMA_EPS = 1e-8


@dataclass(frozen=True)
class GpParams:
    """Shape ``gamma`` (extreme value index) and scale ``sigma`` (years)."""

    gamma: float
    sigma: float

    def __post_init__(self):
        if not math.isfinite(self.gamma):
            raise ParameterDomainError(f"gamma must be finite, got {self.gamma!r}")
        if not (math.isfinite(self.sigma) and self.sigma > 0):
            raise ParameterDomainError(f"sigma must be finite and > 0, got {self.sigma!r}")

    @classmethod
    def exponential(cls, sigma: float) -> "GpParams":
        return cls(0.0, sigma)

    @property
    def is_exponential(self) -> bool:
        return abs(self.gamma) <= GAMMA_EPS

    @property
    def endpoint(self) -> float:
        """Upper end of the support (``inf`` unless ``gamma < 0``)."""
        if self.gamma < 0 and not self.is_exponential:
            return -self.sigma / self.gamma
        return math.inf


def _as_array(x, name="x"):
    arr = np.asarray(x, dtype=float)
    if np.any(np.isnan(arr)):
        raise ParameterDomainError(f"{name} contains NaN")
    return arr


def _out(arr, scalar):
    return float(arr) if scalar else arr


def _check_x(x):
    scalar = np.ndim(x) == 0
    arr = _as_array(x)
    if not np.all(np.isfinite(arr)):
        raise ParameterDomainError("x must be finite")
    if np.any(arr < 0):
        raise ParameterDomainError("x must be >= 0")
    return arr, scalar


# --- vectorized kernels -------------------------------------------------------
# These accept +inf and negative x and never raise; they back the public
# functions and the likelihood code.


def _logsf(gamma: float, sigma: float, x: np.ndarray) -> np.ndarray:
    """log(1 - G(x)) with ``log S = 0`` for x <= 0 and ``-inf`` past the endpoint."""
    x = np.maximum(x, 0.0)
    if abs(gamma) <= GAMMA_EPS:
        return -x / sigma
    z = gamma * x / sigma
    with np.errstate(divide="ignore", invalid="ignore"):
        out = -np.log1p(z) / gamma
    if gamma < 0:
        out = np.where(z <= -1.0, -np.inf, out)
    return out


def _logpdf(gamma: float, sigma: float, x: np.ndarray) -> np.ndarray:
    """log g(x), ``-inf`` outside the support (including the endpoint itself)."""
    inside = x >= 0
    xs = np.where(inside, x, 0.0)
    if abs(gamma) <= GAMMA_EPS:
        out = -xs / sigma - math.log(sigma)
    else:
        z = gamma * xs / sigma
        if gamma < 0:
            inside = inside & (z > -1.0)
            z = np.where(inside, z, 0.0)
        out = -(1.0 / gamma + 1.0) * np.log1p(z) - math.log(sigma)
    out = np.where(inside, out, -np.inf)
    return np.where(np.isposinf(x), -np.inf, out)


# --- public API -------------------------------------------------------------


def gp_cdf(p: GpParams, x):
    """Distribution function ``G(x) = 1 - (1 + gamma x / sigma)_+^(-1/gamma)``.

    Evaluated as ``-expm1(log S(x))`` so that small probabilities keep full
    relative precision; for ``|gamma| <= 1e-8`` this is ``1 - exp(-x / sigma)``.
    Points beyond a finite endpoint return 1.
    """
    arr, scalar = _check_x(x)
    return _out(-np.expm1(_logsf(p.gamma, p.sigma, arr)), scalar)


def gp_sf(p: GpParams, x):
    """Survival function ``1 - G(x)``."""
    arr, scalar = _check_x(x)
    return _out(np.exp(_logsf(p.gamma, p.sigma, arr)), scalar)


def gp_pdf(p: GpParams, x):
    """Density ``(1/sigma) (1 + gamma x / sigma)_+^(-1/gamma - 1)``.

    Returns 0 rather than raising for points outside the support, so that
    likelihoods of boundary observations become ``-inf`` instead of failing.
    """
    scalar = np.ndim(x) == 0
    arr = _as_array(x)
    return _out(np.exp(_logpdf(p.gamma, p.sigma, arr)), scalar)


def gp_logpdf(p: GpParams, x):
    scalar = np.ndim(x) == 0
    arr = _as_array(x)
    return _out(_logpdf(p.gamma, p.sigma, arr), scalar)


def gp_hazard(p: GpParams, x):
    """Force of mortality ``1 / (sigma (1 + gamma x / sigma))``.

    Raises
    ------
    EndpointError
        If any ``x`` is at or beyond the finite endpoint (``gamma < 0``).
    """
    arr, scalar = _check_x(x)
    if np.any(arr >= p.endpoint):
        raise EndpointError(f"hazard undefined at or beyond endpoint {p.endpoint}")
    if p.is_exponential:
        out = np.full_like(arr, 1.0 / p.sigma)
    else:
        out = 1.0 / (p.sigma + p.gamma * arr)
    return _out(out, scalar)


def gp_quantile(p: GpParams, q):
    """Inverse of :func:`gp_cdf` for ``0 <= q < 1``."""
    scalar = np.ndim(q) == 0
    arr = _as_array(q, "q")
    if np.any((arr < 0) | (arr >= 1)):
        raise ParameterDomainError("q must lie in [0, 1)")
    log_sf = np.log1p(-arr)
    if p.is_exponential:
        out = -p.sigma * log_sf
    else:
        out = p.sigma / p.gamma * np.expm1(-p.gamma * log_sf)
    return _out(out, scalar)


def gp_sample(p: GpParams, count: int, seed=None) -> np.ndarray:
    """Draw ``count`` excesses by inverse-cdf sampling.

    ``seed`` is an integer, a ``numpy.random.SeedSequence`` or an existing
    ``numpy.random.Generator`` (which is advanced in place).
    """
    if count < 0:
        raise ParameterDomainError("count must be >= 0")
    rng = seed if isinstance(seed, np.random.Generator) else np.random.default_rng(seed)
    return np.asarray(gp_quantile(p, rng.random(int(count))), dtype=float)


def harmonic_number(n: int) -> float:
    return math.fsum(1.0 / k for k in range(1, n + 1))


def mean_max_exponential(sigma: float, n: int) -> float:
    """Expected maximum of ``n`` iid exponential lifetimes with mean ``sigma``.

    Equals ``sigma * H_n`` with ``H_n`` the n-th harmonic number.
    """
    if int(n) != n or n < 1:
        raise ParameterDomainError(f"n must be a positive integer, got {n!r}")
    if not (math.isfinite(sigma) and sigma > 0):
        raise ParameterDomainError(f"sigma must be > 0, got {sigma!r}")
    return sigma * harmonic_number(int(n))
