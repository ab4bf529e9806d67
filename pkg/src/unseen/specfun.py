r"""Special functions behind the birth/mass-death chain.

Everything here works on real, non-negative arguments only. The central
object is the link function

.. math::

    L(\theta) = \frac{\theta}{\Phi(1, \theta + 1, \theta) - 1} = \frac{1}{D(\theta)},
    \qquad D(\theta) = \sum_{n \ge 0} \frac{\theta^n}{(\theta + 1)_{n+1}},

with :math:`L(0) = 1`. ``L`` is evaluated from the ``D`` series for moderate
``theta`` and from its large-``theta`` expansion above :data:`SWITCHOVER`.
"""
from __future__ import annotations

import enum
import functools
import math
from dataclasses import dataclass

import numpy as np
from scipy import special

__all__ = [
    "SERIES_TOL",
    "MAX_TERMS",
    "SWITCHOVER",
    "ConvergenceError",
    "LinkEval",
    "AsymCoeffs",
    "Regime",
    "pochhammer",
    "log_pochhammer",
    "kummer_1b",
    "kummer",
    "d_series",
    "d_incomplete_gamma",
    "d_alternating",
    "eval_l",
    "eval_L",
    "eval_L_series",
    "eval_L_asymptotic",
    "asym_coeffs",
    "trunc_exp",
    "stirling2",
    "reg_lower_gamma",
]

SERIES_TOL = 1e-15
MAX_TERMS = 100_000
SWITCHOVER = 40.0
LINK_TOL = 1e-6
# direct products are exact enough below this length; above it use gammaln
_LOG_SPACE_N = 30
_CHUNK = 256


class ConvergenceError(ArithmeticError):
    """A series failed to reach its tolerance within the term cap."""


class Regime(str, enum.Enum):
    SERIES = "series"
    ASYMPTOTIC = "asymptotic"


@dataclass(frozen=True)
class LinkEval:
    """Value and first two derivatives of ``L`` at ``theta``."""

    theta: float
    value: float
    d1: float
    d2: float
    regime: Regime
    est_rel_err: float


@dataclass(frozen=True)
class AsymCoeffs:
    """Coefficients of the large-``theta`` expansions.

    ``f`` expands ``sqrt(theta) D(theta)``, ``k`` its reciprocal (so that
    ``L ~ sqrt(theta) sum k_s theta^(-s/2)``), ``alpha`` the variance
    ``theta + L(1 - L)`` beyond its leading term and ``b`` the square of
    ``L'``. ``alpha[0]`` and ``b[0]``, ``b[1]`` are unused placeholders so
    that indices match the usual subscripts.
    """

    f: tuple[float, ...]
    k: tuple[float, ...]
    alpha: tuple[float, ...]
    b: tuple[float, ...]
    max_order: int


def pochhammer(a: float, n: int) -> float:
    """Rising factorial ``a (a + 1) ... (a + n - 1)``.

    Computed as a direct product for ``n <= 30`` and through ``gammaln``
    otherwise; the result may be ``inf`` for very long products.
    """
    n = _check_count(n)
    if n == 0:
        return 1.0
    if a <= 0:
        raise ValueError(f"pochhammer needs a > 0 when n >= 1, got a={a!r}")
    if n <= _LOG_SPACE_N:
        out = 1.0
        for j in range(n):
            out *= a + j
        return out
    return math.exp(log_pochhammer(a, n))


def log_pochhammer(a: float, n: int) -> float:
    """Natural log of :func:`pochhammer`."""
    n = _check_count(n)
    if n == 0:
        return 0.0
    if a <= 0:
        raise ValueError(f"pochhammer needs a > 0 when n >= 1, got a={a!r}")
    if n <= _LOG_SPACE_N:
        return math.fsum(math.log(a + j) for j in range(n))
    return float(special.gammaln(a + n) - special.gammaln(a))


def _check_count(n) -> int:
    if int(n) != n or n < 0:
        raise ValueError(f"expected a non-negative integer, got {n!r}")
    return int(n)


def _ratio_series(ratio, tol=SERIES_TOL, max_terms=MAX_TERMS):
    """Sum ``1 + t1 + t2 + ...`` with ``t_{n+1} = t_n * ratio(n)``.

    ``ratio`` takes an integer array ``n`` and returns the term ratios.
    Terms are generated in vectorised chunks. Summation stops once the
    ratio has dropped below one and the latest term is below ``tol`` times
    the running sum.
    """
    total = 1.0
    last = 1.0
    n0 = 0
    while n0 < max_terms:
        n = np.arange(n0, n0 + _CHUNK)
        r = ratio(n)
        terms = last * np.cumprod(r)
        total += math.fsum(terms)
        last = float(terms[-1])
        n0 += _CHUNK
        if r[-1] < 1.0 and last <= tol * total:
            return total
    raise ConvergenceError(f"series not converged after {max_terms} terms")


def kummer_1b(b: float, z: float, tol: float = SERIES_TOL, max_terms: int = MAX_TERMS) -> float:
    r"""Kummer function :math:`\Phi(1, b, z) = \sum_n z^n / (b)_n` for real ``b > 0``, ``z >= 0``."""
    if b <= 0:
        raise ValueError(f"b must be positive, got {b!r}")
    if z < 0:
        raise ValueError(f"z must be non-negative, got {z!r}")
    if z == 0:
        return 1.0
    return _ratio_series(lambda n: z / (b + n), tol, max_terms)


def kummer(a: float, b: float, z: float, tol: float = SERIES_TOL, max_terms: int = MAX_TERMS) -> float:
    r"""Kummer function :math:`\Phi(a, b, z)` for ``a, b > 0`` and ``z >= 0``.

    Only used with ``a = 1 + k`` for small integers ``k`` (moments of the
    magnitude law).
    """
    if a <= 0 or b <= 0:
        raise ValueError("kummer needs a > 0 and b > 0")
    if z < 0:
        raise ValueError(f"z must be non-negative, got {z!r}")
    if z == 0:
        return 1.0
    return _ratio_series(lambda n: (a + n) * z / ((b + n) * (n + 1)), tol, max_terms)


def _d_terms(theta: float):
    """Terms of the ``D`` series and of its first two derivatives.

    Returns arrays ``(a, a1, a2)`` over ``n = 0..N`` where ``a_n =
    theta^n / (theta+1)_{n+1}``; ``N`` grows until the last term is
    negligible. Works at ``theta = 0`` (``0**0 == 1``).
    """
    size = 64 + int(10 * math.sqrt(theta))
    while True:
        if size > MAX_TERMS:
            raise ConvergenceError(f"D series not converged after {MAX_TERMS} terms")
        n = np.arange(size, dtype=float)
        k = n + 1.0
        inv = 1.0 / (theta + k)
        log_poch = np.cumsum(np.log(theta + k))  # log (theta+1)_{n+1}
        harm = np.cumsum(inv)
        harm2 = np.cumsum(inv * inv)
        with np.errstate(divide="ignore"):
            log_theta = math.log(theta) if theta > 0 else -np.inf
        # theta^(n-j) / (theta+1)_{n+1}, zero where n < j
        def pw(j):
            e = n - j
            out = np.zeros_like(n)
            ok = e >= 0
            if theta > 0:
                out[ok] = np.exp(e[ok] * log_theta - log_poch[ok])
            else:
                out[ok & (e == 0)] = np.exp(-log_poch[ok & (e == 0)])
            return out

        p0, p1, p2 = pw(0), pw(1), pw(2)
        a = p0
        a1 = n * p1 - a * harm
        a2 = n * (n - 1) * p2 - 2 * n * harm * p1 + a * (harm * harm + harm2)
        total = a.sum()
        if a[-1] <= 1e-3 * SERIES_TOL * total:
            return a, a1, a2
        size *= 2


def d_series(theta: float) -> tuple[float, float, float]:
    """``D(theta)`` with its first and second derivatives, by direct series."""
    if theta < 0:
        raise ValueError(f"theta must be non-negative, got {theta!r}")
    a, a1, a2 = _d_terms(float(theta))
    return math.fsum(a), math.fsum(a1), math.fsum(a2)


def d_incomplete_gamma(theta: float) -> float:
    """``D(theta) = e^theta Gamma(theta+1) theta^-(theta+1) P(theta+1, theta)``.

    Independent of :func:`d_series`; used as a cross-check route.
    """
    if theta <= 0:
        raise ValueError("the incomplete-gamma route needs theta > 0")
    log_pref = theta + special.gammaln(theta + 1) - (theta + 1) * math.log(theta)
    return math.exp(log_pref) * reg_lower_gamma(theta + 1, theta)


def d_alternating(theta: float, max_terms: int = 2000) -> float:
    """``D(theta) = e^theta sum_k (-theta)^k / (k! (theta + 1 + k))``.

    Follows from the standard series of the lower incomplete gamma function.
    Cancellation grows like ``e^(2 theta)``, so only use for ``theta`` up to
    about 10.
    """
    if theta < 0:
        raise ValueError(f"theta must be non-negative, got {theta!r}")
    terms = []
    c = 1.0  # (-theta)^k / k!
    for k in range(max_terms):
        terms.append(c / (theta + 1 + k))
        c *= -theta / (k + 1)
        if abs(c) < 1e-18 and k > theta:
            break
    return math.exp(theta) * math.fsum(terms)


def eval_l(theta: float) -> tuple[float, float, float]:
    r"""``l(theta) = Phi(1, theta+1, theta)`` and its derivatives, term by term.

    .. math::

        l'(\theta) = \sum_{n\ge1} T_n \theta^{-1} \sum_{k=1}^n \frac{k}{\theta+k},
        \qquad
        l''(\theta) = \sum_{n\ge1} T_n \Big[\big(\sum_k \tfrac{k}{\theta(\theta+k)}\big)^2
                       - \sum_k \tfrac{k^2 + 2\theta k}{(\theta(\theta+k))^2}\Big]

    with :math:`T_n = \theta^n / (\theta+1)_n`. Requires ``theta > 0``.
    """
    if theta <= 0:
        raise ValueError("eval_l needs theta > 0")
    size = 64 + int(10 * math.sqrt(theta))
    while True:
        n = np.arange(1, size + 1, dtype=float)
        log_t = n * math.log(theta) - np.cumsum(np.log(theta + n))
        t = np.exp(log_t)
        u = np.cumsum(n / (theta * (theta + n)))
        w = np.cumsum((n * n + 2 * theta * n) / (theta * (theta + n)) ** 2)
        if t[-1] <= 1e-3 * SERIES_TOL * (1 + t.sum()) or size > MAX_TERMS:
            break
        size *= 2
    l0 = 1.0 + math.fsum(t)
    l1 = math.fsum(t * u)
    l2 = math.fsum(t * (u * u - w))
    return l0, l1, l2


def eval_L_series(theta: float) -> LinkEval:
    """``L`` and derivatives from the ``D`` series (any ``theta >= 0``)."""
    d0, d1, d2 = d_series(theta)
    value = 1.0 / d0
    first = -d1 / d0**2
    second = (2 * d1 * d1 - d0 * d2) / d0**3
    return LinkEval(float(theta), value, first, second, Regime.SERIES, 64 * float(np.finfo(float).eps))


def eval_L_asymptotic(theta: float, max_order: int = 5) -> LinkEval:
    """``L`` and derivatives from the large-``theta`` expansion truncated at ``max_order``."""
    if theta <= 0:
        raise ValueError("the asymptotic expansion needs theta > 0")
    k = asym_coeffs(max_order).k
    s = np.arange(len(k), dtype=float)
    kk = np.asarray(k)
    p = (1 - s) / 2
    terms0 = kk * theta**p
    terms1 = kk * p * theta ** (p - 1)
    terms2 = kk * p * (p - 1) * theta ** (p - 2)
    value = math.fsum(terms0)
    # first omitted term is of the order of the last kept one over sqrt(theta)
    err = abs(terms0[-1]) / math.sqrt(theta) / value
    return LinkEval(float(theta), value, math.fsum(terms1), math.fsum(terms2), Regime.ASYMPTOTIC, float(err))


def eval_L(theta: float, switchover: float = SWITCHOVER) -> LinkEval:
    """Link function ``L(theta)`` with ``L'`` and ``L''``.

    Uses the ``D`` series below ``switchover`` and the order-5 asymptotic
    expansion above it. ``L(0) = 1``, ``L'(0) = 1/2``, ``L''(0) = -1/3``.
    """
    theta = float(theta)
    if not theta >= 0:
        raise ValueError(f"theta must be non-negative, got {theta!r}")
    if theta < switchover:
        return eval_L_series(theta)
    return eval_L_asymptotic(theta)


# Table 2 of the standard uniform expansion at x = 0, orders 0..5.
_A = (1.0, 0.0, 1.0 / 12, 0.0, 1.0 / 288, 0.0)
_B = (0.0, 1.0 / 3, 0.0, 4.0 / 135, 0.0, -8.0 / 2835)


@functools.lru_cache(maxsize=None)
def asym_coeffs(max_order: int = 5) -> AsymCoeffs:
    """Large-``theta`` coefficients up to ``max_order`` (at most 5).

    ``f_0 = sqrt(pi/2)``, ``f_1 = -2/3`` and ``f_s = sqrt(pi/2) A_s + B_s``
    for ``s >= 2``; ``k_0 = 1/f_0``, ``k_s = -sqrt(2/pi) sum_{i=1..s} f_i
    k_{s-i}``; ``alpha_n = k_{n-1} - sum_{j=0..n} k_j k_{n-j}``; ``b_n =
    sum_{j=1..n-1} l_j l_{n-j}`` with ``l_j = (1 - j/2) k_{j-1}``.
    """
    if int(max_order) != max_order or not 0 <= max_order <= 5:
        raise ValueError(f"max_order must be an integer in 0..5, got {max_order!r}")
    max_order = int(max_order)
    r = math.sqrt(math.pi / 2)
    f = [r, -2.0 / 3] + [r * _A[s] + _B[s] for s in range(2, 6)]
    f = f[: max_order + 1]
    k = [1.0 / f[0]]
    for s in range(1, max_order + 1):
        k.append(-math.sqrt(2 / math.pi) * math.fsum(f[i] * k[s - i] for i in range(1, s + 1)))
    alpha = [0.0]
    for n in range(1, max_order + 1):
        alpha.append(k[n - 1] - math.fsum(k[j] * k[n - j] for j in range(n + 1)))
    ell = [0.0] + [(1 - j / 2) * k[j - 1] for j in range(1, max_order + 2)]
    b = [0.0, 0.0]
    for n in range(2, max_order + 2):
        b.append(math.fsum(ell[j] * ell[n - j] for j in range(1, n)))
    return AsymCoeffs(tuple(f), tuple(k), tuple(alpha), tuple(b), max_order)


def trunc_exp(nu: int, x: float) -> float:
    """Truncated exponential ``sum_{k=0..nu} x^k / k!``."""
    nu = _check_count(nu)
    if x < 0:
        raise ValueError(f"x must be non-negative, got {x!r}")
    terms = [1.0]
    for k in range(1, nu + 1):
        terms.append(terms[-1] * x / k)
    return math.fsum(terms)


@functools.lru_cache(maxsize=None)
def _stirling_row(n: int) -> tuple[int, ...]:
    if n == 0:
        return (1,)
    prev = _stirling_row(n - 1) + (0,)
    return (0,) + tuple(k * prev[k] + prev[k - 1] for k in range(1, n + 1))


def stirling2(n: int, k: int) -> int:
    """Stirling number of the second kind ``S(n, k)``."""
    n, k = _check_count(n), _check_count(k)
    if k > n:
        raise ValueError(f"stirling2 needs k <= n, got n={n}, k={k}")
    return _stirling_row(n)[k]


def reg_lower_gamma(a: float, x: float) -> float:
    """Regularised lower incomplete gamma ``P(a, x)``."""
    if a <= 0:
        raise ValueError(f"a must be positive, got {a!r}")
    if x < 0:
        raise ValueError(f"x must be non-negative, got {x!r}")
    return float(special.gammainc(a, x))
