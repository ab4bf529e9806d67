r"""Distance-to-equilibrium bounds and the exact distances they control.

All three bounds share the factor

.. math::

    \kappa(t) = \exp\{-\mu t - \theta(e^{-\mu t} + \mu t - 1)\}

(:func:`unseen.chain.decay_factor`), applied to a distance between the
initial law ``tau`` and the equilibrium law:

* Kolmogorov: ``sup |F_t - Pi*| <= kappa(t) sup |T - Pi*|``;
* moments: ``|E X(t)^m - E_pi* X^m| <= m K_{h_m}(tau, pi*) kappa(t)``;
* Gini: ``int |F_t - Pi*| <= kappa(t) int |T - Pi*|``.

Exact distances are computed from the closed-form tails. The cdfs are step
functions, so every integral reduces to a sum over unit intervals.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from numpy.polynomial import Polynomial
from scipy import special

from .chain import (ChainParams, StateDistribution, decay_factor, equilibrium_tail,
                    tail_vector, truncation_level)
from .specfun import stirling2

__all__ = [
    "BoundReport",
    "kolmogorov_bound",
    "h_weight",
    "h_weight_direct",
    "kr_functional",
    "moment_bound",
    "gini_bound",
]

_TAIL_EPS = 1e-17


@dataclass(frozen=True)
class BoundReport:
    """Exact distance at time ``t`` and the bound it must not exceed."""

    kind: str  # "kolmogorov", "moment" or "gini"
    t: float
    exact: float
    bound: float
    m: int | None = None

    @property
    def ratio(self) -> float:
        return self.exact / self.bound if self.bound > 0 else (0.0 if self.exact == 0 else math.inf)

    @property
    def holds(self) -> bool:
        return self.exact <= self.bound + 1e-10


def _tails(params: ChainParams, initial: StateDistribution, t: float):
    """Tails ``R_t(tau, n)`` and ``I(n)`` out to where both are negligible."""
    n_max = initial.N + truncation_level(params.theta, 1e-16) + 10
    while True:
        R = tail_vector(params, initial, t, n_max + 1)
        I = equilibrium_tail(params.theta, n_max + 1)
        if R[-1] < _TAIL_EPS and I[-1] < _TAIL_EPS:
            return R, I
        n_max *= 2


def kolmogorov_bound(params: ChainParams, initial: StateDistribution, t: float) -> BoundReport:
    R, I = _tails(params, initial, t)
    exact = max(np.abs(R[1:-1] - I[1:-1]).max(initial=0.0), R[-1] + I[-1])
    delta = initial.survival(R.size - 1) - I
    bound = np.abs(delta[1:]).max(initial=0.0) * decay_factor(params, t)
    return BoundReport("kolmogorov", t, float(exact), float(bound))


def _touchard(j: int, theta: float) -> float:
    """``E[rho^j]`` for ``rho ~ Poisson(theta)``."""
    return math.fsum(stirling2(j, k) * theta**k for k in range(j + 1))


def _h_poly(theta: float, m: int) -> Polynomial:
    coef = np.zeros(m)
    for j in range(m):
        coef[m - 1 - j] = special.comb(m - 1, j, exact=True) * _touchard(j, theta)
    return Polynomial(coef)


def h_weight(params: ChainParams, m: int, x):
    """``h_m(x) = E[(x + rho)^(m-1)]`` with ``rho ~ Poisson(theta)``, via Stirling numbers."""
    if m < 1:
        raise ValueError("m must be >= 1")
    out = _h_poly(params.theta, m)(np.asarray(x, dtype=float))
    return float(out) if np.ndim(out) == 0 else out


def h_weight_direct(params: ChainParams, m: int, x: float, terms: int | None = None) -> float:
    """``h_m(x)`` by summing the Poisson mixture directly."""
    theta = params.theta
    if terms is None:
        terms = int(theta + 40 * math.sqrt(theta + 1) + 60)
    rho = np.arange(terms, dtype=float)
    logp = -theta + rho * math.log(theta) - special.gammaln(rho + 1)
    return math.fsum(np.exp(logp) * (x + rho) ** (m - 1))


def kr_functional(params: ChainParams, initial: StateDistribution, m: int) -> float:
    """``K_{h_m}(tau, pi*) = int_0^inf h_m(x) |T(x) - Pi*(x)| dx``, exactly per unit interval."""
    if m < 1:
        raise ValueError("m must be >= 1")
    N = max(initial.N, truncation_level(params.theta, 1e-18)) + 5
    I = equilibrium_tail(params.theta, N + 1)
    diff = np.abs(initial.cdf(N) - (1.0 - I[1:]))
    H = _h_poly(params.theta, m).integ()
    edges = H(np.arange(N + 2, dtype=float))
    return math.fsum(diff * np.diff(edges))


def moment_bound(params: ChainParams, initial: StateDistribution, m: int, t: float) -> BoundReport:
    if m < 1:
        raise ValueError("m must be >= 1")
    R, I = _tails(params, initial, t)
    k = np.arange(R.size - 1, dtype=float)
    exact = abs(math.fsum(((k + 1) ** m - k**m) * (R[1:] - I[1:])))
    exact += (R.size ** m) * (R[-1] + I[-1])
    bound = m * kr_functional(params, initial, m) * decay_factor(params, t)
    return BoundReport("moment", t, float(exact), float(bound), m)


def gini_bound(params: ChainParams, initial: StateDistribution, t: float) -> BoundReport:
    R, I = _tails(params, initial, t)
    exact = math.fsum(np.abs(R[1:] - I[1:])) + R[-1] + I[-1]
    delta = initial.survival(R.size - 1) - I
    bound = decay_factor(params, t) * math.fsum(np.abs(delta[1:]))
    return BoundReport("gini", t, float(exact), float(bound))
