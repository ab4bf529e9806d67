"""Conditional laws given an observed record of negative jumps.

A record is a list of times ``t_1 < ... < t_n`` with magnitudes ``d_k``.
Writing ``p_s(x, y)`` for the transition function, the basic quantity is

    D_n(t, d) = sum_x tau(x) sum_{x_1..x_n} p_{dt_1}(x, x_1 + d_1) ... p_{dt_n}(x_{n-1}, x_n + d_n)

where ``x_k`` is the state right after the k-th jump. Every nested sum is
evaluated by pushing a weight vector forward one observation at a time, at
cost ``O(n N^2)`` on ``N`` truncated states. The vector is rescaled at each
step and the scale kept in log space, so long records do not underflow.

The last step is never materialised: summing ``x_n`` out of
``p(x_{n-1}, x_n + d_n)`` leaves the tail ``R_{dt_n}(x_{n-1}, d_n)``.
"""
from __future__ import annotations

import json
import math
from dataclasses import dataclass
from functools import cached_property

import numpy as np

from .chain import ChainParams, StateDistribution, tail_matrix, truncation_level
from .sim import NegJumpRecord
from .specfun import ConvergenceError

__all__ = [
    "UnderflowError",
    "PredictionQuery",
    "WeightVector",
    "Forward",
    "forward",
    "normalizer",
    "log_normalizer",
    "magnitude_law",
    "state_law",
    "joint_law",
    "weights",
    "tail_unseen",
    "expected_unseen",
    "query_from_dict",
    "answer_query",
]

LEVEL_TOL = 1e-12
MAX_STATES = 20_000
_LOG_TINY = math.log(np.finfo(float).tiny)


class UnderflowError(ArithmeticError):
    """The normaliser is below the smallest positive double; use the log variant."""


@dataclass(frozen=True)
class PredictionQuery:
    params: ChainParams
    initial: StateDistribution
    record: NegJumpRecord
    xi: int = 0

    def __post_init__(self):
        if len(self.record) == 0:
            raise ValueError("record must be non-empty")
        if self.xi < 0:
            raise ValueError("xi must be non-negative")


@dataclass(frozen=True, eq=False)
class WeightVector:
    """Posterior law of the state right after the second-to-last observation."""

    weights: np.ndarray
    tail: float = 0.0

    def __post_init__(self):
        w = np.asarray(self.weights, dtype=float)
        w.setflags(write=False)
        object.__setattr__(self, "weights", w)

    def summary(self) -> dict:
        s = np.arange(self.weights.size)
        return {
            "size": int(self.weights.size),
            "mean": float(np.dot(s, self.weights)),
            "mode": int(np.argmax(self.weights)),
            "tail": float(self.tail),
        }


def _gaps(times) -> np.ndarray:
    t = np.asarray(times, dtype=float)
    return np.diff(np.concatenate(([0.0], t)))


@dataclass(frozen=True, eq=False)
class Forward:
    """Result of propagating ``tau`` through all but the last observation.

    ``v`` is proportional to the unnormalised weight of each state after
    observation ``n-1`` (or ``tau`` when ``n = 1``); the true vector is
    ``exp(log_scale) * v``. ``R_last[s, k]`` is ``R_{dt_n}(s, k)``.
    """

    params: ChainParams
    v: np.ndarray
    log_scale: float
    R_last: np.ndarray
    d_last: int
    dt_last: float
    rel_loss: float

    @property
    def N(self) -> int:
        return self.v.size - 1

    @cached_property
    def log_D(self) -> float:
        z = float(np.dot(self.v, self.R_last[:, self.d_last]))
        if z <= 0.0:
            return -math.inf
        return self.log_scale + math.log(z)

    def tail_columns(self, k_max: int) -> np.ndarray:
        """``R_{dt_n}(s, k)`` for ``k = 0..k_max``, extending the table if needed."""
        if k_max < self.R_last.shape[1]:
            return self.R_last[:, : k_max + 1]
        return tail_matrix(self.params, self.dt_last, self.N, k_max)


def _propagate(params, initial, gaps, mags, N, shift):
    """One pass with ``N`` states. ``shift(d)`` picks the column offset of step ``k``."""
    v = np.zeros(N + 1)
    v[: initial.N + 1] = initial.weights
    log_scale, lost = 0.0, 0.0
    cache = {}
    for dt, d in zip(gaps[:-1], mags[:-1]):
        key = (float(dt), shift(d))
        if key not in cache:
            cache[key] = tail_matrix(params, dt, N, N + shift(d) + 1)
        R = cache[key]
        # columns x + shift(d) for x = 0..N; anything past N is lost
        lo = R[:, shift(d): shift(d) + N + 1]
        hi = R[:, shift(d) + 1: shift(d) + N + 2]
        P = np.clip(lo - hi, 0.0, None) if d > 0 else lo
        new = v @ P
        out = float(np.dot(v, R[:, N + shift(d) + 1]))
        total = float(new.sum())
        if total <= 0.0:
            raise UnderflowError("record has zero probability on the truncated state space")
        lost += out / (total + out)
        v = new / total
        log_scale += math.log(total)
    R_last = tail_matrix(params, gaps[-1], N, N + mags[-1] + 1)
    return v, log_scale, R_last, lost


def forward(params: ChainParams, initial: StateDistribution, record: NegJumpRecord,
            *, summed: bool = False, tol: float = LEVEL_TOL) -> Forward:
    """Forward weights for ``record``, with the state range chosen adaptively.

    With ``summed=True`` every intermediate step sums over all magnitudes
    ``d >= 1`` (transition matrix ``R(x, y + 1)``), which gives the
    normaliser of the magnitude law.
    """
    if len(record) == 0:
        raise ValueError("record must be non-empty")
    gaps = _gaps(record.times)
    mags = [int(d) for d in record.magnitudes]
    N = initial.N + max(mags) + truncation_level(params.theta, 1e-14) + 10
    while True:
        if summed:
            v, ls, R_last, lost = _propagate(params, initial, gaps, [0] * (len(mags) - 1) + [mags[-1]],
                                             N, lambda d: 1)
        else:
            v, ls, R_last, lost = _propagate(params, initial, gaps, mags, N, lambda d: d)
        # mass of the last step that would start beyond N is bounded by the
        # weight on the top state, which must itself be negligible
        edge = float(v[-1]) if v.size > 1 and len(mags) > 1 else 0.0
        if lost + edge < tol:
            break
        if N > MAX_STATES:
            raise ConvergenceError(f"state truncation exceeded {MAX_STATES} states")
        N *= 2
    return Forward(params, v, ls, R_last, mags[-1], float(gaps[-1]), lost + edge)


def log_normalizer(params: ChainParams, initial: StateDistribution, record: NegJumpRecord) -> float:
    """``log D_n(t, d)``; safe for long records."""
    return forward(params, initial, record).log_D


def normalizer(params: ChainParams, initial: StateDistribution, record: NegJumpRecord) -> float:
    """``D_n(t, d)``. Raises :class:`UnderflowError` below the smallest positive double."""
    logd = log_normalizer(params, initial, record)
    if logd < _LOG_TINY:
        raise UnderflowError(f"normaliser underflows (log D = {logd:.6g}); use log_normalizer")
    return math.exp(logd)


def _log_magnitude_total(params, initial, times) -> float:
    """``log sum_{d_1..d_n >= 1} D_n(t, d)``."""
    rec = NegJumpRecord(times, np.ones(len(times), dtype=np.int64))
    fw = forward(params, initial, rec, summed=True)
    # last step: sum_{d>=1} R(s, d) = E_s X(dt_n)
    k_max = fw.N + 1
    while True:
        cols = fw.tail_columns(k_max)
        if cols[:, -1].max() < 1e-17:
            break
        k_max *= 2
    z = float(np.dot(fw.v, cols[:, 1:].sum(axis=1)))
    return fw.log_scale + math.log(z)


def magnitude_law(params: ChainParams, initial: StateDistribution, times, d) -> float:
    """Probability of magnitudes ``d`` given negative jumps at ``times``."""
    times = np.asarray(times, dtype=float)
    rec = NegJumpRecord(times, d)
    return math.exp(log_normalizer(params, initial, rec) - _log_magnitude_total(params, initial, times))


def _path_log_weight(params, initial, record, x):
    """``log sum_x tau(x) prod_k p_{dt_k}(x_{k-1}, x_k + d_k)`` for one state path."""
    x = [int(v) for v in x]
    if len(x) != len(record):
        raise ValueError("state vector must match the record length")
    if min(x) < 0:
        return -math.inf
    out = 0.0
    prev = None
    for dt, d, xk in zip(_gaps(record.times), record.magnitudes, x):
        y = xk + int(d)
        rows = initial.N if prev is None else prev
        R = tail_matrix(params, dt, rows, y + 1)
        col = np.clip(R[:, y] - R[:, y + 1], 0.0, None)
        p = float(np.dot(initial.weights, col)) if prev is None else float(col[prev])
        if p <= 0.0:
            return -math.inf
        out += math.log(p)
        prev = xk
    return out


def joint_law(params: ChainParams, initial: StateDistribution, record: NegJumpRecord, x) -> float:
    """Joint probability of magnitudes and post-jump states given the jump times."""
    lw = _path_log_weight(params, initial, record, x)
    return math.exp(lw - _log_magnitude_total(params, initial, record.times))


def state_law(params: ChainParams, initial: StateDistribution, record: NegJumpRecord, x) -> float:
    """Probability of post-jump states ``x`` given jump times and magnitudes."""
    lw = _path_log_weight(params, initial, record, x)
    return math.exp(lw - log_normalizer(params, initial, record))


def weights(params: ChainParams, initial: StateDistribution, record: NegJumpRecord) -> WeightVector:
    """Posterior weights ``m_{n-1}(s)`` of the state before the last gap."""
    fw = forward(params, initial, record)
    m = fw.v * fw.R_last[:, fw.d_last]
    m = m / math.fsum(m)
    return WeightVector(m, tail=fw.rel_loss)


def _query_forward(query: PredictionQuery) -> Forward:
    return forward(query.params, query.initial, query.record)


def _unseen_tail(fw: Forward, xi: int) -> float:
    d = fw.d_last
    cols = fw.tail_columns(d + xi)
    num = float(np.dot(fw.v, cols[:, d + xi]))
    den = float(np.dot(fw.v, cols[:, d]))
    return min(1.0, num / den)


def tail_unseen(query: PredictionQuery) -> float:
    """``P(X(t_n) >= xi | record)``: at least ``xi`` elements left unseen after the last jump."""
    if query.xi == 0:
        return 1.0
    return _unseen_tail(_query_forward(query), query.xi)


def _expected(fw: Forward) -> tuple[float, float]:
    d = fw.d_last
    k_max = max(fw.R_last.shape[1] - 1, d + 1)
    while True:
        cols = fw.tail_columns(k_max)
        if cols[:, -1].max() < 1e-17:
            break
        k_max *= 2
    den = fw.v * cols[:, d]
    keep = den > 0
    # sum_{k>=1} R(s, max(k, d)) = (d-1) R(s, d) + sum_{k>=d} R(s, k)
    inner = (d - 1) * cols[keep, d] + cols[keep, d:].sum(axis=1)
    m = den[keep] / den.sum()
    value = math.fsum(m * inner / cols[keep, d]) - d
    return max(0.0, value), float(cols[:, -1].max() * k_max)


def expected_unseen(query: PredictionQuery) -> float:
    """``E[X(t_n) | record]``, the expected number of unseen elements after the last jump."""
    return _expected(_query_forward(query))[0]


def _initial_from_dict(spec, params: ChainParams) -> StateDistribution:
    if isinstance(spec, list):
        return StateDistribution.from_weights(spec, normalize=True)
    family = spec.get("family")
    if family is None and "weights" in spec:
        return StateDistribution.from_weights(spec["weights"], normalize=True)
    if family == "point":
        return StateDistribution.point(int(spec["x"]))
    if family == "geometric":
        return StateDistribution.geometric(float(spec["p"]), int(spec["N"]))
    if family == "equilibrium":
        return StateDistribution.equilibrium(params)
    raise ValueError(f"unknown initial law {spec!r}")


def query_from_dict(obj: dict) -> PredictionQuery:
    """Build a query from ``{lambda, mu, tau, record: {times, magnitudes}, xi}``."""
    try:
        params = ChainParams(float(obj["lambda"]), float(obj["mu"]))
        initial = _initial_from_dict(obj.get("tau", {"family": "point", "x": 0}), params)
        rec = obj["record"]
        record = NegJumpRecord(rec["times"], rec["magnitudes"])
    except KeyError as exc:
        raise ValueError(f"query is missing field {exc.args[0]!r}") from None
    return PredictionQuery(params, initial, record, int(obj.get("xi", 0)))


def answer_query(query: PredictionQuery) -> dict:
    """Response document: tail probability, expectation, error budget and weight summary."""
    fw = _query_forward(query)
    prob = 1.0 if query.xi == 0 else _unseen_tail(fw, query.xi)
    expect, k_err = _expected(fw)
    m = fw.v * fw.R_last[:, fw.d_last]
    wv = WeightVector(m / math.fsum(m), tail=fw.rel_loss)
    return {
        "xi": query.xi,
        "probability": prob,
        "expectation": expect,
        "truncation_error": fw.rel_loss + k_err,
        "weights_summary": wv.summary(),
    }


def answer_json(text: str) -> str:
    return json.dumps(answer_query(query_from_dict(json.loads(text))), indent=2)
