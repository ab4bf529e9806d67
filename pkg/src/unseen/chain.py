r"""Rates, transition function and equilibrium of the birth/mass-death chain.

The chain lives on ``{0, 1, 2, ...}``. From state ``i`` it moves up to
``i + 1`` at rate ``lam`` and down to each of ``0, ..., i - 1`` at rate
``mu``. With ``theta = lam / mu`` and ``I(n) = theta^n / (theta + 1)_n`` the
tail function of ``X(t)`` started from a law ``tau`` is

.. math::

    R_t(\tau, n) = I(n) + e^{-\theta\mu t} \sum_{\rho=0}^{n}
        \frac{g^\rho}{\rho!}\, e^{-(n-\rho)\mu t}\, \Delta(n - \rho),
    \qquad g = \theta (1 - e^{-\mu t}),

where ``Delta(j) = tau([j, inf)) - I(j)``. This is the closed form with the
factor ``e^{-n mu t}`` distributed over the sum so that nothing overflows
for large ``mu t``.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy import special

from .specfun import d_series, log_pochhammer

__all__ = [
    "TRUNCATION_TOL",
    "ConditioningError",
    "ChainParams",
    "StateDistribution",
    "EquilibriumLaw",
    "ReturnTimeReport",
    "equilibrium_tail",
    "truncation_level",
    "rate",
    "jump_prob",
    "tail_R",
    "tail_vector",
    "tail_matrix",
    "transition",
    "transition_matrix",
    "equilibrium",
    "equilibrium_moment",
    "equilibrium_moment_direct",
    "return_time_mean",
    "negjump_event_rate",
    "decay_factor",
]

TRUNCATION_TOL = 1e-12
MAX_CONDITION = 1e10


class ConditioningError(ArithmeticError):
    """Cancellation in the tail formula would swamp the result.

    Raised for small tails at short times from far-away starting states.
    ``limit`` carries the equilibrium tail ``I(n)`` the caller may fall back
    to when ``t`` is large.
    """

    def __init__(self, msg, condition, limit):
        super().__init__(msg)
        self.condition = condition
        self.limit = limit


@dataclass(frozen=True)
class ChainParams:
    """Up-jump intensity ``lam`` and per-target down-jump intensity ``mu``."""

    lam: float
    mu: float

    def __post_init__(self):
        if not (self.lam > 0 and self.mu > 0) or not math.isfinite(self.lam * self.mu):
            raise ValueError(f"lam and mu must be positive and finite, got {self.lam!r}, {self.mu!r}")

    @classmethod
    def from_theta(cls, theta: float, mu: float = 1.0) -> "ChainParams":
        return cls(theta * mu, mu)

    @property
    def theta(self) -> float:
        return self.lam / self.mu

    def exit_rate(self, i: int) -> float:
        """``c(i) = lam + i mu``."""
        return self.lam + i * self.mu


@dataclass(frozen=True, eq=False)
class StateDistribution:
    """Probability vector on states ``0..N`` plus unlocated tail mass."""

    weights: np.ndarray
    tail_mass: float = 0.0

    def __post_init__(self):
        w = np.asarray(self.weights, dtype=float)
        if w.ndim != 1 or w.size == 0:
            raise ValueError("weights must be a non-empty 1-d sequence")
        if np.any(w < 0) or self.tail_mass < 0:
            raise ValueError("weights and tail_mass must be non-negative")
        if abs(math.fsum(w) + self.tail_mass - 1.0) > 1e-12:
            raise ValueError(f"weights + tail_mass must sum to 1, got {math.fsum(w) + self.tail_mass!r}")
        w.setflags(write=False)
        object.__setattr__(self, "weights", w)

    @property
    def N(self) -> int:
        return self.weights.size - 1

    @classmethod
    def point(cls, x: int) -> "StateDistribution":
        w = np.zeros(int(x) + 1)
        w[-1] = 1.0
        return cls(w)

    @classmethod
    def from_weights(cls, weights, normalize: bool = False) -> "StateDistribution":
        w = np.asarray(weights, dtype=float)
        if normalize:
            w = w / math.fsum(w)
        return cls(w)

    @classmethod
    def geometric(cls, p: float, N: int) -> "StateDistribution":
        """``P(x) = p (1-p)^x`` on ``0..N`` renormalised."""
        w = p * (1 - p) ** np.arange(N + 1)
        return cls(w / math.fsum(w))

    @classmethod
    def equilibrium(cls, params: ChainParams, tol: float = TRUNCATION_TOL) -> "StateDistribution":
        law = equilibrium(params)
        N = law.truncation(tol)
        w = law.pmf(np.arange(N + 1))
        return cls(w, tail_mass=max(0.0, 1.0 - math.fsum(w)))

    def survival(self, n_max: int) -> np.ndarray:
        """``tau([n, inf))`` for ``n = 0..n_max`` (tail mass excluded)."""
        w = np.zeros(max(n_max, self.N) + 2)
        w[: self.N + 1] = self.weights
        s = np.cumsum(w[::-1])[::-1]
        return s[: n_max + 1]

    def cdf(self, n_max: int) -> np.ndarray:
        """``T(n)`` for ``n = 0..n_max``."""
        w = np.zeros(max(n_max, self.N) + 1)
        w[: self.N + 1] = self.weights
        return np.cumsum(w)[: n_max + 1]

    def mean(self) -> float:
        return float(np.dot(np.arange(self.N + 1), self.weights))


def equilibrium_tail(theta: float, n_max: int) -> np.ndarray:
    """``I(n) = theta^n / (theta+1)_n`` for ``n = 0..n_max``."""
    k = np.arange(1, n_max + 1, dtype=float)
    out = np.empty(n_max + 1)
    out[0] = 1.0
    out[1:] = np.cumprod(theta / (theta + k))
    return out


def truncation_level(theta: float, tol: float = TRUNCATION_TOL) -> int:
    """Smallest ``N`` with equilibrium mass beyond ``N``, ``I(N+1)``, below ``tol``."""
    n = 0
    log_i = 0.0
    log_tol = math.log(tol)
    while True:
        log_i += math.log(theta) - math.log(theta + n + 1)
        if log_i < log_tol:
            return n
        n += 1


def decay_factor(params: ChainParams, t: float) -> float:
    """``exp{-mu t - theta (e^{-mu t} + mu t - 1)}``, the approach-to-equilibrium rate."""
    mt = params.mu * t
    return math.exp(-mt - params.theta * (math.expm1(-mt) + mt))


def rate(params: ChainParams, i: int, j: int) -> float:
    """Infinitesimal rate ``q(i, j)``."""
    if i < 0 or j < 0:
        raise ValueError("states are non-negative")
    if j == i + 1:
        return params.lam
    if j == i:
        return -params.exit_rate(i)
    if j < i:
        return params.mu
    return 0.0


def jump_prob(params: ChainParams, i: int, j: int) -> float:
    """Embedded jump-chain probability ``q(i, j) / c(i)`` (zero on the diagonal)."""
    if i < 0 or j < 0:
        raise ValueError("states are non-negative")
    if j == i:
        return 0.0
    c = params.exit_rate(i)
    if j == i + 1:
        return params.lam / c
    if j < i:
        return params.mu / c
    return 0.0


def _log_poisson_weights(g: float, n_max: int) -> np.ndarray:
    rho = np.arange(n_max + 1, dtype=float)
    if g == 0:
        out = np.full(n_max + 1, -np.inf)
        out[0] = 0.0
        return out
    return rho * math.log(g) - special.gammaln(rho + 1)


def tail_R(params: ChainParams, start: StateDistribution | int, n: int, t: float,
           max_condition: float | None = MAX_CONDITION) -> float:
    """``P(X(t) >= n)`` from ``start`` (a distribution or a state).

    Summed with :func:`math.fsum`. Raises :class:`ConditioningError` when
    the ratio of the summed magnitudes to the result exceeds
    ``max_condition`` (pass ``None`` to disable the check).
    """
    if t < 0:
        raise ValueError(f"t must be non-negative, got {t!r}")
    if n < 0:
        raise ValueError("n must be non-negative")
    if not isinstance(start, StateDistribution):
        start = StateDistribution.point(start)
    if n == 0:
        return 1.0
    theta, mt = params.theta, params.mu * t
    I = equilibrium_tail(theta, n)
    surv = start.survival(n)
    delta = surv - I
    g = -theta * math.expm1(-mt)
    logw = _log_poisson_weights(g, n)
    rho = np.arange(n + 1)
    mag = np.exp(logw - theta * mt - (n - rho) * mt)
    terms = mag * delta[n - rho]
    value = math.fsum([I[n], *terms])
    scale = I[n] + math.fsum(np.abs(terms))
    if max_condition is not None and scale > 0:
        cond = scale / abs(value) if value != 0 else math.inf
        if cond > max_condition and scale > 1e-300:
            raise ConditioningError(
                f"tail at n={n}, t={t} loses precision (condition {cond:.3g}); "
                f"equilibrium limit is {I[n]:.6g}", cond, float(I[n]))
    return min(1.0, max(0.0, value))


def tail_vector(params: ChainParams, start: StateDistribution, t: float, n_max: int) -> np.ndarray:
    """``R_t(tau, n)`` for ``n = 0..n_max`` by one vectorised convolution."""
    theta, mt = params.theta, params.mu * t
    I = equilibrium_tail(theta, n_max)
    delta = start.survival(n_max) - I
    g = -theta * math.expm1(-mt)
    w = np.exp(_log_poisson_weights(g, n_max))
    u = np.exp(-np.arange(n_max + 1) * mt) * delta
    conv = np.convolve(w, u)[: n_max + 1]
    out = I + math.exp(-theta * mt) * conv
    out[0] = 1.0
    return np.clip(out, 0.0, 1.0)


def tail_matrix(params: ChainParams, t: float, x_max: int, n_max: int) -> np.ndarray:
    """``R_t(delta_x, n)`` for ``x = 0..x_max`` and ``n = 0..n_max``.

    Splits ``Delta`` into the indicator part, a cumulative sum over the
    starting state, and the equilibrium part shared by all rows.
    """
    if t < 0:
        raise ValueError(f"t must be non-negative, got {t!r}")
    theta, mt = params.theta, params.mu * t
    I = equilibrium_tail(theta, n_max)
    logw = _log_poisson_weights(-theta * math.expm1(-mt), n_max)
    n = np.arange(n_max + 1)
    j = np.arange(n_max + 1)
    lag = n[:, None] - j[None, :]
    with np.errstate(invalid="ignore"):
        M = np.where(lag >= 0, np.exp(logw[np.clip(lag, 0, None)] - j[None, :] * mt), 0.0)
    A = M @ I  # sum_j w_{n-j} e^{-j mu t} I(j)
    C = np.cumsum(M, axis=1)  # C[n, k] = sum_{j<=k} w_{n-j} e^{-j mu t}
    x = np.arange(x_max + 1)
    B = C[n[None, :], np.minimum(n[None, :], x[:, None])]
    R = I[None, :] + math.exp(-theta * mt) * (B - A[None, :])
    R[:, 0] = 1.0
    return np.clip(R, 0.0, 1.0)


def transition(params: ChainParams, x: int, y: int, t: float,
               max_condition: float | None = MAX_CONDITION) -> float:
    """``p_t(x, y) = R_t(delta_x, y) - R_t(delta_x, y + 1)``."""
    if t == 0:
        return float(x == y)
    start = StateDistribution.point(x)
    hi = tail_R(params, start, y, t, max_condition)
    lo = tail_R(params, start, y + 1, t, max_condition)
    return max(0.0, hi - lo)


def transition_matrix(params: ChainParams, t: float, x_max: int, y_max: int | None = None,
                      tol: float = TRUNCATION_TOL):
    """Rows ``p_t(x, 0..y_max)`` for ``x = 0..x_max`` and the remainder column.

    Returns ``(P, remainder)`` where ``remainder[x] = R_t(delta_x, y_max+1)``.
    With ``y_max=None`` the column range grows until every remainder is
    below ``tol``.
    """
    if y_max is None:
        y_max = x_max + truncation_level(params.theta, tol) + 8
        while True:
            R = tail_matrix(params, t, x_max, y_max + 1)
            if R[:, -1].max() < tol:
                break
            y_max *= 2
    else:
        R = tail_matrix(params, t, x_max, y_max + 1)
    P = np.clip(R[:, :-1] - R[:, 1:], 0.0, None)
    return P, R[:, -1].copy()


@dataclass(frozen=True)
class EquilibriumLaw:
    r"""Equilibrium law ``pi*(n) = theta^n (n+1) / (theta+1)_{n+1}``."""

    params: ChainParams

    @property
    def theta(self) -> float:
        return self.params.theta

    def tail(self, n):
        """``I(n) = pi*([n, inf))``."""
        n = np.asarray(n)
        out = np.exp(self._log_tail(n))
        return float(out) if out.ndim == 0 else out

    def _log_tail(self, n):
        n = np.asarray(n, dtype=float)
        th = self.theta
        return n * math.log(th) - (special.gammaln(th + 1 + n) - special.gammaln(th + 1))

    def pmf(self, n):
        n = np.asarray(n)
        th = self.theta
        logp = self._log_tail(n) + np.log(n + 1.0) - np.log(th + 1.0 + n)
        out = np.where(n >= 0, np.exp(logp), 0.0)
        return float(out) if out.ndim == 0 else out

    def cdf(self, x):
        """Right-continuous step function ``Pi*(x) = 1 - I(floor(x) + 1)``."""
        x = np.asarray(x, dtype=float)
        fl = np.floor(x)
        out = np.where(fl >= 0, -np.expm1(self._log_tail(np.maximum(fl, -1) + 1)), 0.0)
        return float(out) if out.ndim == 0 else out

    def truncation(self, tol: float = TRUNCATION_TOL) -> int:
        return truncation_level(self.theta, tol)

    def mean(self) -> float:
        """``sum_{n>=1} I(n) = l(theta) - 1 = theta D(theta)``."""
        return self.theta * d_series(self.theta)[0]


def equilibrium(params: ChainParams) -> EquilibriumLaw:
    return EquilibriumLaw(params)


def equilibrium_moment(params: ChainParams, rho: float, tol: float = 1e-16) -> float:
    """``sum n^rho pi*(n)`` through ``sum_{n>=1} I(n) (n^rho - (n-1)^rho)``.

    Stops once the dominating term ``n^rho theta^n / n!`` is below ``tol``
    times the running sum.
    """
    if rho <= 0:
        raise ValueError("rho must be positive")
    theta = params.theta
    terms = []
    log_i = 0.0
    n = 0
    while True:
        n += 1
        log_i += math.log(theta) - math.log(theta + n)
        terms.append(math.exp(log_i) * (n**rho - (n - 1) ** rho))
        dom = rho * math.log(n) + n * math.log(theta) - math.lgamma(n + 1)
        if n > theta and math.exp(dom) < tol * max(math.fsum(terms), 1e-300):
            return math.fsum(terms)


def equilibrium_moment_direct(params: ChainParams, rho: float, tol: float = TRUNCATION_TOL) -> float:
    """``sum n^rho pi*(n)`` summed term by term (cross-check route)."""
    law = equilibrium(params)
    N = law.truncation(tol * 1e-6) + 20
    n = np.arange(1, N + 1)
    return math.fsum(n.astype(float) ** rho * law.pmf(n))


@dataclass(frozen=True)
class ReturnTimeReport:
    """Mean return time to ``x`` by two routes.

    ``derived`` is the stationary-cycle identity ``1 / (c(x) pi*(x))``;
    ``printed`` is ``(theta+1)_x / (mu (theta+x) (1+x) theta^x)``. They
    differ by the factor ``theta + x + 1``.
    """

    x: int
    derived: float
    printed: float
    discrepancy_factor: float = field(init=False)

    def __post_init__(self):
        object.__setattr__(self, "discrepancy_factor", self.derived / self.printed)


def return_time_mean(params: ChainParams, x: int) -> ReturnTimeReport:
    if x < 0:
        raise ValueError("x must be non-negative")
    theta, mu = params.theta, params.mu
    derived = 1.0 / (params.exit_rate(x) * equilibrium(params).pmf(x))
    log_printed = log_pochhammer(theta + 1, x) - math.log(mu * (theta + x) * (1 + x)) - x * math.log(theta)
    return ReturnTimeReport(x, float(derived), math.exp(log_printed))


def negjump_event_rate(params: ChainParams) -> float:
    """Long-run number of negative jumps per unit time, ``mu E[X] = lam / L(theta)``."""
    return params.mu * equilibrium(params).mean()
