r"""Inference for ``theta`` from the magnitudes of negative jumps.

At stationarity a negative jump has magnitude ``d >= 1`` with probability

.. math::

    \varphi_\theta(d) = \frac{I(d)}{\Phi(1, \theta+1, \theta) - 1},
    \qquad I(d) = \frac{\theta^d}{(\theta+1)_d},

whose mean is the link function ``L(theta)`` and whose variance is
``v^2(theta) = theta + L(theta)(1 - L(theta))``. Treating observed
magnitudes as i.i.d. draws from ``phi_theta`` gives the moment estimator
``theta_hat = L^{-1}(dbar)``, with a maximal-inequality bound on its
uniform closeness to ``theta`` and a Gaussian limit with standard error
``v / (L' sqrt(n))``.

``phi_0`` is the point mass at 1, matching ``L(0) = 1``.
"""
from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass, field

import numpy as np
from scipy import special

from .chain import ChainParams
from .sim import NegJumpRecord, make_rng
from .specfun import d_series, eval_L, kummer, log_pochhammer, stirling2

__all__ = [
    "ROOT_TOL",
    "MagnitudeSample",
    "EstimateReport",
    "DiscretePrior",
    "BayesBound",
    "phi_pmf",
    "phi_table",
    "phi_moments",
    "variance",
    "sample_magnitudes",
    "estimate_theta",
    "invert_link",
    "consistency_bound",
    "asymptotic_se",
    "estimate_mu",
    "mu_from_event_rate",
    "rescale_record",
    "w_function",
    "bayes_bound",
    "replicate_estimates",
    "consistency_frequency",
]

ROOT_TOL = 1e-10
_PHI_TAIL = 1e-16


@dataclass(frozen=True, eq=False)
class MagnitudeSample:
    values: np.ndarray

    def __post_init__(self):
        v = np.asarray(self.values, dtype=np.int64).ravel()
        if v.size == 0:
            raise ValueError("sample must be non-empty")
        if np.any(v < 1):
            raise ValueError("magnitudes must be >= 1")
        v.setflags(write=False)
        object.__setattr__(self, "values", v)

    @property
    def n(self) -> int:
        return int(self.values.size)

    @property
    def dbar(self) -> float:
        return math.fsum(self.values.astype(float)) / self.n

    @classmethod
    def from_record(cls, record: NegJumpRecord) -> "MagnitudeSample":
        return cls(record.magnitudes)


@dataclass(frozen=True)
class EstimateReport:
    theta_hat: float
    n: int
    dbar: float
    se_asymptotic: float | None
    mu_hat: float | None = None
    iterations: int = 0

    def consistency_bound(self, m: int, eps: float) -> float:
        """Lower bound on ``P(|theta_hat_k - theta| < eps for all k >= m)`` at ``theta = theta_hat``."""
        if self.theta_hat == 0:
            raise ValueError("the bound needs theta > 0")
        return consistency_bound(self.theta_hat, m, eps)

    def to_dict(self) -> dict:
        return asdict(self)

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2)


def _log_phi_norm(theta: float) -> float:
    # Phi(1, theta+1, theta) - 1 = theta D(theta)
    return math.log(theta) + math.log(d_series(theta)[0])


def phi_pmf(theta: float, d):
    """Magnitude law ``phi_theta(d)``; vectorised over ``d``."""
    theta = float(theta)
    if theta < 0:
        raise ValueError("theta must be non-negative")
    d = np.asarray(d)
    if np.any(d < 1):
        raise ValueError("d must be >= 1")
    if theta == 0:
        out = (d == 1).astype(float)
    else:
        df = d.astype(float)
        logp = (df * math.log(theta) + special.gammaln(theta + 1) - special.gammaln(theta + 1 + df)
                - _log_phi_norm(theta))
        out = np.exp(logp)
    return float(out) if out.ndim == 0 else out


def phi_table(theta: float, tail: float = _PHI_TAIL) -> np.ndarray:
    """``phi_theta(1..D)`` with ``D`` chosen so the omitted mass is below ``tail``."""
    if theta == 0:
        return np.array([1.0])
    D = int(2 * theta + 12 * math.sqrt(theta) + 40)
    while True:
        p = phi_pmf(theta, np.arange(1, D + 1))
        # successive ratios theta / (theta + 1 + d) < 1/2 beyond 2 theta, so
        # the omitted mass is below the last kept term
        if p[-1] < tail:
            return p
        D *= 2


def phi_moments(theta: float, m: int) -> float:
    r"""Raw moment ``E d^m`` under ``phi_theta``.

    .. math::

        E d^m = \frac{\sum_{k=1}^m S(m,k)\, k!\, \theta^k\, \Phi(1+k, \theta+1+k, \theta)/(\theta+1)_k}
                     {\Phi(1, \theta+1, \theta) - 1}
    """
    if m < 1:
        raise ValueError("m must be >= 1")
    if theta <= 0:
        raise ValueError("theta must be positive")
    terms = []
    for k in range(1, m + 1):
        log_c = k * math.log(theta) + special.gammaln(k + 1) - log_pochhammer(theta + 1, k)
        terms.append(stirling2(m, k) * math.exp(log_c - _log_phi_norm(theta))
                     * kummer(1 + k, theta + 1 + k, theta))
    return math.fsum(terms)


def variance(theta: float) -> float:
    """``v^2(theta) = theta + L(1 - L)``, the variance of ``phi_theta``."""
    L = eval_L(theta).value
    return theta + L * (1.0 - L)


def sample_magnitudes(theta: float, n: int, seed: int | None = None, replicate: int | None = None,
                      rng: np.random.Generator | None = None) -> np.ndarray:
    """``n`` i.i.d. draws from ``phi_theta`` by inversion of the tabulated cdf."""
    if rng is None:
        if seed is None:
            raise ValueError("pass either seed or rng")
        rng = make_rng(seed, replicate)
    if theta == 0:
        return np.ones(n, dtype=np.int64)
    cdf = np.cumsum(phi_table(theta))
    cdf /= cdf[-1]
    return np.searchsorted(cdf, rng.random(n), side="right").astype(np.int64) + 1


def invert_link(dbar: float, tol: float = ROOT_TOL, max_iter: int = 200) -> tuple[float, int]:
    """Solve ``L(theta) = dbar`` by bracketing and safeguarded Newton.

    Returns ``(theta, iterations)``. ``dbar = 1`` gives ``theta = 0``.
    """
    if not dbar >= 1.0:
        raise ValueError(f"dbar must be >= 1, got {dbar!r}")
    if dbar == 1.0:
        return 0.0, 0
    lo, hi = 0.0, 1.0
    while eval_L(hi).value < dbar:
        lo, hi = hi, 2 * hi
    # L ~ sqrt(2 theta / pi) is a good start once theta is large
    x = min(max(math.pi * dbar**2 / 2, lo), hi) if dbar > 4 else 0.5 * (lo + hi)
    scale = tol * max(1.0, dbar)
    for it in range(1, max_iter + 1):
        ev = eval_L(x)
        r = ev.value - dbar
        if abs(r) < scale:
            return x, it
        if r < 0:
            lo = x
        else:
            hi = x
        step = x - r / ev.d1 if ev.d1 > 0 else math.nan
        x = step if lo < step < hi else 0.5 * (lo + hi)
        if hi - lo <= 4 * np.finfo(float).eps * hi:
            return x, it
    raise ArithmeticError(f"root finding did not converge for dbar={dbar!r}")


def estimate_theta(sample, horizon: float | None = None, record: NegJumpRecord | None = None,
                   tol: float = ROOT_TOL) -> EstimateReport:
    """Moment estimate of ``theta`` from a magnitude sample.

    Parameters
    ----------
    sample : MagnitudeSample or array_like of int
    horizon, record : optional
        When both are given, the report also carries ``mu_hat``.
    """
    if not isinstance(sample, MagnitudeSample):
        sample = MagnitudeSample(sample)
    theta, its = invert_link(sample.dbar, tol)
    se = asymptotic_se(theta, sample.n) if theta > 0 else None
    mu_hat = estimate_mu(record, horizon) if record is not None and horizon is not None else None
    return EstimateReport(theta, sample.n, sample.dbar, se, mu_hat, its)


def _hr_tail(m: int) -> float:
    # 1/m + sum_{k > m} 1/k^2, the tail sum as a trigamma value
    return 1.0 / m + float(special.polygamma(1, m + 1))


def consistency_bound(theta0: float, m: int, eps: float) -> float:
    """Lower bound on ``P(|theta_hat_k - theta0| < eps for every k >= m)``."""
    if eps <= 0 or m < 1 or theta0 <= 0:
        raise ValueError("need theta0 > 0, m >= 1 and eps > 0")
    gap = eval_L(theta0 + eps).value - eval_L(theta0).value
    return max(0.0, 1.0 - variance(theta0) / gap**2 * _hr_tail(m))


def asymptotic_se(theta0: float, n: int) -> float:
    """``v(theta0) / (L'(theta0) sqrt(n))``."""
    if n < 1:
        raise ValueError("n must be >= 1")
    return math.sqrt(variance(theta0)) / (eval_L(theta0).d1 * math.sqrt(n))


def estimate_mu(record: NegJumpRecord, horizon: float) -> float:
    """Negative jumps per unit time over ``[0, horizon]``.

    At stationarity this estimates ``mu E[X] = lam / L(theta)``, the rate
    of negative jumps, rather than ``mu`` itself; see
    :func:`mu_from_event_rate`.
    """
    if not horizon > 0:
        raise ValueError("horizon must be positive")
    if len(record) == 0:
        raise ValueError("no negative jumps: rate estimate undefined")
    return len(record) / horizon


def mu_from_event_rate(rate: float, theta: float) -> float:
    """Convert a negative-jump rate into ``mu`` given ``theta``."""
    if theta == 0:
        raise ValueError("no negative jumps occur at theta = 0")
    return rate * eval_L(theta).value / theta


def rescale_record(record: NegJumpRecord, mu_hat: float) -> NegJumpRecord:
    """Express times in units of ``1 / mu_hat``. Magnitudes are unchanged."""
    post = record.post_states
    return NegJumpRecord(record.times * mu_hat, record.magnitudes, post)


def w_function(theta, eps: float):
    """``W(theta) = (v(theta) / (L(theta + eps) - L(theta)))^2``; vectorised."""
    th = np.atleast_1d(np.asarray(theta, dtype=float))
    out = np.array([variance(t) / (eval_L(t + eps).value - eval_L(t).value) ** 2 for t in th])
    return float(out[0]) if np.ndim(theta) == 0 else out


@dataclass(frozen=True, eq=False)
class DiscretePrior:
    atoms: np.ndarray
    probs: np.ndarray

    def __post_init__(self):
        a = np.asarray(self.atoms, dtype=float)
        p = np.asarray(self.probs, dtype=float)
        if a.shape != p.shape or a.ndim != 1 or a.size == 0:
            raise ValueError("atoms and probs must be matching 1-d arrays")
        if np.any(a < 0) or np.any(p < 0) or abs(p.sum() - 1) > 1e-12:
            raise ValueError("atoms must be >= 0 and probs a probability vector")
        object.__setattr__(self, "atoms", a)
        object.__setattr__(self, "probs", p)

    @classmethod
    def point(cls, theta: float) -> "DiscretePrior":
        return cls([theta], [1.0])

    @classmethod
    def two_point(cls, mean: float, second: float, spread: float | None = None) -> "DiscretePrior":
        """Symmetric two-point prior with the given first two moments."""
        var = second - mean**2
        if var < 0:
            raise ValueError("second moment below mean^2")
        s = math.sqrt(var) if spread is None else spread
        return cls([mean - s, mean + s], [0.5, 0.5])

    def moment(self, k: int) -> float:
        return math.fsum(self.probs * self.atoms**k)


@dataclass(frozen=True)
class BayesBound:
    """Prior-averaged consistency bound; an interval under the asymptotic policy."""

    lower: float
    upper: float
    expected_w: tuple[float, float]
    policy: str

    @property
    def vacuous(self) -> bool:
        return self.upper <= 0.0


def bayes_bound(eps: float, m: int, prior: DiscretePrior | None = None, *,
                prior_mean: float | None = None, prior_second_moment: float | None = None,
                policy: str = "exact") -> BayesBound:
    """Lower bound on the prior-averaged probability of uniform ``eps``-closeness from ``m`` on.

    ``policy="exact"`` integrates ``W`` against a discrete prior.
    ``policy="asymptotic"`` uses only the first two prior moments through
    the large-``theta`` form ``W ~ 2(pi-2)(theta^2 + c eps theta)/eps^2``
    with ``c`` in ``(0, 1)``, and returns the resulting interval.
    Values below zero are reported as they are (see ``vacuous``).
    """
    if eps <= 0 or m < 1:
        raise ValueError("need eps > 0 and m >= 1")
    tail = _hr_tail(m)
    if policy == "exact":
        if prior is None:
            raise ValueError("the exact policy needs a discrete prior")
        if np.any(prior.atoms <= 0):
            raise ValueError("prior atoms must be positive")
        ew = math.fsum(prior.probs * w_function(prior.atoms, eps))
        b = 1.0 - tail * ew
        return BayesBound(b, b, (ew, ew), policy)
    if policy == "asymptotic":
        if prior is not None:
            prior_mean, prior_second_moment = prior.moment(1), prior.moment(2)
        if prior_mean is None or prior_second_moment is None:
            raise ValueError("the asymptotic policy needs the prior mean and second moment")
        if not (math.isfinite(prior_mean) and math.isfinite(prior_second_moment)):
            raise ValueError("prior moments must be finite")
        if prior_second_moment < prior_mean**2 or prior_mean <= 0:
            raise ValueError("inconsistent prior moments")
        k = 2 * (math.pi - 2) / eps**2
        ew = (k * prior_second_moment, k * (prior_second_moment + eps * prior_mean))
        return BayesBound(1.0 - tail * ew[1], 1.0 - tail * ew[0], ew, policy)
    raise ValueError(f"unknown policy {policy!r}")


def replicate_estimates(theta0: float, n: int, n_reps: int, seed: int) -> np.ndarray:
    """``theta_hat`` from ``n_reps`` independent samples of size ``n``; replicate ``r`` uses stream ``r``."""
    cdf = np.cumsum(phi_table(theta0))
    cdf /= cdf[-1]
    out = np.empty(n_reps)
    for r in range(n_reps):
        rng = make_rng(seed, r)
        d = np.searchsorted(cdf, rng.random(n), side="right") + 1
        out[r] = invert_link(float(d.mean()))[0]
    return out


def consistency_frequency(theta0: float, m: int, eps: float, n_reps: int, k_max: int,
                          seed: int) -> tuple[float, int]:
    """Share of replicate sequences with ``|theta_hat_k - theta0| < eps`` for ``m <= k <= k_max``.

    Since ``L`` is increasing the event is ``L(theta0-eps) < dbar_k < L(theta0+eps)``
    (lower end ``1`` when ``eps >= theta0``). Returns ``(frequency, hits)``.
    """
    lo = eval_L(theta0 - eps).value if eps < theta0 else 1.0
    hi = eval_L(theta0 + eps).value
    cdf = np.cumsum(phi_table(theta0))
    cdf /= cdf[-1]
    k = np.arange(1, k_max + 1, dtype=float)
    hits = 0
    for r in range(n_reps):
        rng = make_rng(seed, r)
        d = np.searchsorted(cdf, rng.random(k_max), side="right") + 1
        dbar = np.cumsum(d) / k
        run = dbar[m - 1:]
        # dbar = 1 maps to theta_hat = 0, inside the window only when eps > theta0
        ok = (run < hi) & ((run > lo) if eps < theta0 else (run >= 1.0))
        hits += bool(ok.all())
    return hits / n_reps, hits
