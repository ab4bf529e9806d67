"""Event-driven simulation and negative-jump observables.

Paths are generated from the jump-chain/holding-time description: hold in
state ``y`` for an ``Exponential(lam + mu y)`` time, then step up with
probability ``lam / (lam + mu y)`` or land uniformly on ``{0, ..., y-1}``.
A single uniform decides both the direction and the landing state.

Random streams come from :func:`make_rng`, a Philox (counter-based)
generator keyed by ``(seed, replicate)``, so replicate ``k`` of a study is
reproducible no matter how replicates are scheduled.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Iterator

import numpy as np
from scipy import special

from .chain import ChainParams, StateDistribution

__all__ = [
    "make_rng",
    "SamplePath",
    "NegJumpRecord",
    "EventBatch",
    "sample_path",
    "extract_negjumps",
    "batch_events",
    "states_at",
    "return_times",
    "windowed_post_states",
    "first_negjump_density",
    "first_negjump_mass",
    "negjump_joint_density",
]

_BLOCK = 1024


def make_rng(seed: int, replicate: int | None = None) -> np.random.Generator:
    """Philox generator for ``seed`` (and optionally a replicate index)."""
    key = () if replicate is None else (int(replicate),)
    ss = np.random.SeedSequence(int(seed), spawn_key=key)
    return np.random.Generator(np.random.Philox(ss))


@dataclass(frozen=True, eq=False)
class SamplePath:
    """Jump skeleton of one trajectory on ``[0, horizon]``.

    ``states[0]`` is the initial state and ``states[k]`` the state entered
    at ``jump_times[k-1]``.
    """

    jump_times: np.ndarray
    states: np.ndarray
    horizon: float
    seed: int | None = None

    def __post_init__(self):
        jt = np.asarray(self.jump_times, dtype=float)
        st = np.asarray(self.states, dtype=np.int64)
        if st.size != jt.size + 1:
            raise ValueError("need exactly one more state than jump times")
        if jt.size and (np.any(np.diff(jt) <= 0) or jt[0] <= 0 or jt[-1] > self.horizon):
            raise ValueError("jump times must be increasing within (0, horizon]")
        steps = np.diff(st)
        if np.any(steps == 0) or np.any(steps > 1) or np.any(st[1:] < 0):
            raise ValueError("every jump is +1 or a drop to a lower non-negative state")
        object.__setattr__(self, "jump_times", jt)
        object.__setattr__(self, "states", st)

    def state_at(self, t):
        """``X(t)`` by step lookup (right-continuous)."""
        idx = np.searchsorted(self.jump_times, t, side="right")
        return self.states[idx]

    def time_average(self, f) -> float:
        """``(1/horizon) * integral_0^horizon f(X(s)) ds``."""
        edges = np.concatenate([[0.0], self.jump_times, [self.horizon]])
        vals = np.asarray(f(self.states), dtype=float)
        return float(np.dot(np.diff(edges), vals) / self.horizon)


@dataclass(frozen=True, eq=False)
class NegJumpRecord:
    """Times and magnitudes of negative jumps, optionally with post-jump states."""

    times: np.ndarray
    magnitudes: np.ndarray
    post_states: np.ndarray | None = None

    def __post_init__(self):
        t = np.asarray(self.times, dtype=float)
        d = np.asarray(self.magnitudes, dtype=np.int64)
        if t.shape != d.shape or t.ndim != 1:
            raise ValueError("times and magnitudes must be 1-d and of equal length")
        if t.size and (np.any(np.diff(t) <= 0) or t[0] <= 0):
            raise ValueError("times must be positive and strictly increasing")
        if np.any(d < 1):
            raise ValueError("magnitudes must be >= 1")
        object.__setattr__(self, "times", t)
        object.__setattr__(self, "magnitudes", d)
        if self.post_states is not None:
            x = np.asarray(self.post_states, dtype=np.int64)
            if x.shape != t.shape or np.any(x < 0):
                raise ValueError("post_states must be non-negative and match times")
            object.__setattr__(self, "post_states", x)

    def __len__(self):
        return self.times.size

    def hidden(self) -> "NegJumpRecord":
        """Copy with the post-jump states dropped."""
        return NegJumpRecord(self.times, self.magnitudes)


def _draw_initial(initial, rng) -> int:
    if isinstance(initial, StateDistribution):
        w = initial.weights / initial.weights.sum()
        return int(rng.choice(w.size, p=w))
    return int(initial)


def sample_path(params: ChainParams, initial: StateDistribution | int, horizon: float,
                seed: int, replicate: int | None = None) -> SamplePath:
    """Simulate one path on ``[0, horizon]``."""
    if not horizon > 0:
        raise ValueError(f"horizon must be positive, got {horizon!r}")
    rng = make_rng(seed, replicate)
    y = _draw_initial(initial, rng)
    lam, mu = params.lam, params.mu
    times, states = [], [y]
    t = 0.0
    while True:
        exps = rng.standard_exponential(_BLOCK)
        us = rng.random(_BLOCK)
        for e, u in zip(exps, us):
            c = lam + mu * y
            t += e / c
            if t > horizon:
                return SamplePath(np.array(times), np.array(states), horizon, seed)
            v = u * c
            if v < lam:
                y += 1
            else:
                y = min(int((v - lam) / mu), y - 1)
            times.append(t)
            states.append(y)


def extract_negjumps(path: SamplePath) -> NegJumpRecord:
    st = path.states
    down = np.nonzero(st[1:] < st[:-1])[0]
    return NegJumpRecord(path.jump_times[down], st[down] - st[down + 1], st[down + 1])


@dataclass(frozen=True, eq=False)
class EventBatch:
    """One lockstep round of :func:`batch_events`: a jump on each listed path."""

    paths: np.ndarray
    times: np.ndarray
    before: np.ndarray
    after: np.ndarray


def batch_events(params: ChainParams, initial: StateDistribution | int, horizon: float,
                 n_paths: int, seed: int, replicate: int | None = None) -> Iterator[EventBatch]:
    """Simulate ``n_paths`` independent paths in lockstep, yielding jumps.

    Each round advances every still-active path by one jump; paths drop out
    once they pass ``horizon``. Initial states are available as the
    ``before`` field of the first round for paths that jump at all; call
    with a point start when they are needed explicitly.
    """
    rng = make_rng(seed, replicate)
    if isinstance(initial, StateDistribution):
        w = initial.weights / initial.weights.sum()
        y = rng.choice(w.size, size=n_paths, p=w).astype(np.int64)
    else:
        y = np.full(n_paths, int(initial), dtype=np.int64)
    t = np.zeros(n_paths)
    idx = np.arange(n_paths)
    lam, mu = params.lam, params.mu
    while idx.size:
        c = lam + mu * y
        t = t + rng.standard_exponential(idx.size) / c
        alive = t <= horizon
        idx, t, y, c = idx[alive], t[alive], y[alive], c[alive]
        if not idx.size:
            return
        v = rng.random(idx.size) * c
        up = v < lam
        new = np.where(up, y + 1, np.minimum(((v - lam) / mu).astype(np.int64), y - 1))
        yield EventBatch(idx, t, y, new)
        y = new


def states_at(params: ChainParams, initial: StateDistribution | int, t: float,
              n_paths: int, seed: int, replicate: int | None = None) -> np.ndarray:
    """Draws of ``X(t)`` from ``n_paths`` independent paths."""
    rng = make_rng(seed, replicate)
    if isinstance(initial, StateDistribution):
        w = initial.weights / initial.weights.sum()
        y = rng.choice(w.size, size=n_paths, p=w).astype(np.int64)
    else:
        y = np.full(n_paths, int(initial), dtype=np.int64)
    return _advance(params, y, t, rng)


def _advance(params, y, horizon, rng):
    y = y.copy()
    t = np.zeros(y.size)
    idx = np.arange(y.size)
    lam, mu = params.lam, params.mu
    while idx.size:
        cur = y[idx]
        c = lam + mu * cur
        t[idx] += rng.standard_exponential(idx.size) / c
        alive = t[idx] <= horizon
        idx, cur, c = idx[alive], cur[alive], c[alive]
        v = rng.random(idx.size) * c
        y[idx] = np.where(v < lam, cur + 1, np.minimum(((v - lam) / mu).astype(np.int64), cur - 1))
    return y


def windowed_post_states(params: ChainParams, initial: StateDistribution | int, windows,
                         magnitudes, n_paths: int, seed: int,
                         replicate: int | None = None) -> tuple[np.ndarray, int]:
    """Post-jump states on paths matching a record up to time windows.

    A path is kept when, for each ``k``, it has a negative jump of magnitude
    ``magnitudes[k]`` inside ``windows[k] = (lo, hi)``; the first such jump
    in each window counts. Other negative jumps are unrestricted. Returns
    the states right after the matched jump in the last window, and the
    number of paths simulated.
    """
    win = np.asarray(windows, dtype=float).reshape(-1, 2)
    mags = np.asarray(magnitudes, dtype=np.int64)
    if win.shape[0] != mags.size or np.any(win[:, 0] >= win[:, 1]) or np.any(win[1:, 0] < win[:-1, 1]):
        raise ValueError("windows must be ordered, disjoint and match the magnitudes")
    progress = np.zeros(n_paths, dtype=np.int64)
    post = np.full(n_paths, -1, dtype=np.int64)
    n = mags.size
    for ev in batch_events(params, initial, float(win[-1, 1]), n_paths, seed, replicate):
        k = progress[ev.paths]
        open_ = k < n
        kk = np.minimum(k, n - 1)
        hit = (open_ & (ev.before - ev.after == mags[kk])
               & (ev.times >= win[kk, 0]) & (ev.times <= win[kk, 1]))
        p = ev.paths[hit]
        progress[p] += 1
        post[p] = ev.after[hit]
    return post[progress == n], n_paths


def return_times(params: ChainParams, x: int, n_cycles: int, seed: int,
                 replicate: int | None = None) -> np.ndarray:
    """Independent draws of the return time to ``x`` (first visit after leaving)."""
    rng = make_rng(seed, replicate)
    lam, mu = params.lam, params.mu
    y = np.full(n_cycles, int(x), dtype=np.int64)
    t = np.zeros(n_cycles)
    out = np.empty(n_cycles)
    idx = np.arange(n_cycles)
    while idx.size:
        c = lam + mu * y
        t = t + rng.standard_exponential(idx.size) / c
        v = rng.random(idx.size) * c
        y = np.where(v < lam, y + 1, np.minimum(((v - lam) / mu).astype(np.int64), y - 1))
        back = y == x
        out[idx[back]] = t[back]
        keep = ~back
        idx, t, y = idx[keep], t[keep], y[keep]
    return out


def first_negjump_density(params: ChainParams, x: int, t, x1, d):
    r"""Joint density of the first negative jump time, post-jump state and magnitude.

    .. math::

        f(x; t, x_1, d) = \mu \frac{\theta^\nu}{\nu!} e^{-(\theta+x)\mu t}(1-e^{-\mu t})^\nu,
        \qquad \nu = x_1 + d - x \ge 0,

    and zero when ``nu < 0``. Density in ``t``, mass in ``(x1, d)``.
    Broadcasts over array arguments.
    """
    t, x1, d = np.broadcast_arrays(np.asarray(t, float), np.asarray(x1), np.asarray(d))
    theta, mu = params.theta, params.mu
    nu = x1 + d - x
    ok = (nu >= 0) & (d >= 1) & (x1 >= 0) & (t > 0)
    nu_s = np.where(ok, nu, 0).astype(float)
    t_s = np.where(ok, t, 1.0)
    with np.errstate(divide="ignore"):
        logf = (math.log(mu) + nu_s * math.log(theta) - special.gammaln(nu_s + 1)
                - (theta + x) * mu * t_s + nu_s * np.log(-np.expm1(-mu * t_s)))
    out = np.where(ok, np.exp(logf), 0.0)
    return float(out) if out.ndim == 0 else out


def first_negjump_mass(params: ChainParams, x: int, x1, d, t_lo: float = 0.0, t_hi: float = math.inf):
    r"""Integral of :func:`first_negjump_density` over ``t`` in ``[t_lo, t_hi]``.

    Closed form through the regularised incomplete beta function: with
    ``u = e^{-mu t}`` the time integral is ``B(theta+x, nu+1)`` restricted
    to ``u`` in ``[e^{-mu t_hi}, e^{-mu t_lo}]``.
    """
    x1, d = np.broadcast_arrays(np.asarray(x1), np.asarray(d))
    theta, mu = params.theta, params.mu
    nu = x1 + d - x
    ok = (nu >= 0) & (d >= 1) & (x1 >= 0)
    nu_s = np.where(ok, nu, 0).astype(float)
    a, b = theta + x, nu_s + 1
    u_hi, u_lo = math.exp(-mu * t_lo), math.exp(-mu * t_hi)
    frac = special.betainc(a, b, u_hi) - special.betainc(a, b, u_lo)
    # theta^nu / nu! * B(a, b)
    logc = nu_s * math.log(theta) - special.gammaln(nu_s + 1) + special.betaln(a, b)
    out = np.where(ok, np.exp(logc) * frac, 0.0)
    return float(out) if out.ndim == 0 else out


def negjump_joint_density(params: ChainParams, x0: int, record: NegJumpRecord) -> float:
    """Density of the first ``n`` negative jumps (times, post-states, magnitudes).

    Product of one-jump densities over the gaps between successive jump
    times; zero as soon as any ``x_k + d_k < x_{k-1}``.
    """
    if len(record) == 0:
        raise ValueError("record must be non-empty")
    if record.post_states is None:
        raise ValueError("record must carry post-jump states")
    prev_t, prev_x = 0.0, int(x0)
    out = 1.0
    for t, d, x in zip(record.times, record.magnitudes, record.post_states):
        out *= first_negjump_density(params, prev_x, t - prev_t, int(x), int(d))
        if out == 0.0:
            return 0.0
        prev_t, prev_x = t, int(x)
    return out
