"""Exact (direct-method) stochastic simulation of the two-pathogen process."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import _kernels as K
from .model import COMPARTMENTS, ModelParams


@dataclass(frozen=True)
class Event:
    name: str
    source: str | None
    target: str | None
    propensity: str


def _name(idx):
    return None if idx < 0 else COMPARTMENTS[idx]


_FORMULAS = (["mu*N"] + [f"mu*x_{c}" for c in COMPARTMENTS]
             + ["beta1*lam1*x_ss", "beta2*lam2*x_ss", "a*lam1*x_is", "b*lam1*x_rs",
                "c*lam2*x_si", "d*lam2*x_sr",
                "nu1*x_si", "nu1*x_ii", "nu1*x_ri", "nu2*x_is", "nu2*x_ii", "nu2*x_ir"])
_NAMES = (["birth"] + [f"death_{c}" for c in COMPARTMENTS]
          + ["infect1_ss", "infect2_ss", "infect1_is", "infect1_rs", "infect2_si",
             "infect2_sr", "recover1_si", "recover1_ii", "recover1_ri",
             "recover2_is", "recover2_ii", "recover2_ir"])

EVENT_TABLE: tuple[Event, ...] = tuple(
    Event(n, _name(int(s)), _name(int(d)), f)
    for n, s, d, f in zip(_NAMES, K.CHAN_SRC, K.CHAN_DST, _FORMULAS))
INFECTION_CHANNELS = tuple(int(k) for k in K.INFECTION_CHANNELS)


def stoichiometry() -> np.ndarray:
    """(channels x 9) state-change matrix."""
    S = np.zeros((K.NCHAN, 9), dtype=int)
    for k in range(K.NCHAN):
        if K.CHAN_SRC[k] >= 0:
            S[k, K.CHAN_SRC[k]] -= 1
        if K.CHAN_DST[k] >= 0:
            S[k, K.CHAN_DST[k]] += 1
    return S


def propensities(state, params: ModelParams) -> np.ndarray:
    out = np.empty(K.NCHAN)
    K.propensities(np.asarray(state, dtype=float), params.as_array(), out)
    return out


@dataclass(frozen=True)
class EventTrajectory:
    """Every event of one run.

    ``states[0]`` is the initial state and ``states[k]`` the state right after
    the event at ``times[k]``; ``channels[k - 1]`` indexes ``EVENT_TABLE``.
    """

    times: np.ndarray
    states: np.ndarray
    channels: np.ndarray
    t_end: float
    truncated: bool = False

    @property
    def n_events(self) -> int:
        return len(self.channels)

    def counters(self) -> np.ndarray:
        """Cumulative per-channel event counts after each event, shape (n+1, 22)."""
        c = np.zeros((self.n_events + 1, K.NCHAN), dtype=np.int64)
        if self.n_events:
            c[np.arange(1, self.n_events + 1), self.channels.astype(np.int64)] = 1
        return np.cumsum(c, axis=0)

    def final_counters(self) -> np.ndarray:
        return np.bincount(self.channels.astype(np.int64), minlength=K.NCHAN)

    def state_at(self, t) -> np.ndarray:
        """Piecewise-constant state at the given time(s)."""
        idx = np.searchsorted(self.times, np.asarray(t, dtype=float), side="right") - 1
        return self.states[np.clip(idx, 0, None)]


def _check_initial(initial):
    x0 = np.asarray(initial)
    if x0.shape != (9,):
        raise ValueError("initial state must have 9 compartments")
    if np.any(x0 < 0) or np.any(np.asarray(x0, dtype=float) != np.round(x0)):
        raise ValueError("initial state must be non-negative integers")
    return x0.astype(np.int64)


def gillespie_run(initial, params: ModelParams, t_end: float, seed: int,
                  max_events: int = 50_000_000) -> EventTrajectory:
    """One exact sample path up to ``t_end`` days, reproducible from ``seed``."""
    if not t_end > 0:
        raise ValueError("t_end must be positive")
    x0 = _check_initial(initial)
    times, states, chans, truncated = K.gillespie_full(
        x0, params.as_array(), float(t_end), int(seed) % 2**32, int(max_events))
    return EventTrajectory(times, states, chans, float(t_end), bool(truncated))


def gillespie_on_grid(initial, params: ModelParams, grid, seed: int):
    """One sample path observed on ``grid`` (days, increasing, starting at 0).

    Returns ``(states, infections)``: the state at each grid time and the
    number of infection events in each grid interval.
    """
    x0 = _check_initial(initial)
    grid = np.asarray(grid, dtype=float)
    if np.any(np.diff(grid) <= 0) or grid[0] < 0:
        raise ValueError("grid must be increasing and non-negative")
    return K.gillespie_grid(x0, params.as_array(), grid, int(seed) % 2**32)


def run_seeds(seed: int, n_runs: int) -> list[int]:
    """Independent per-run seeds derived from (seed, run index)."""
    ss = np.random.SeedSequence(seed)
    return [int(s.generate_state(1)[0]) for s in ss.spawn(n_runs)]


@dataclass(frozen=True)
class Ensemble:
    grid: np.ndarray
    states: np.ndarray          # (runs, grid, 9)
    infections: np.ndarray      # (runs, grid - 1)
    survived: np.ndarray        # (runs,) bool

    def mean(self, conditional: bool = True) -> np.ndarray:
        s = self.states[self.survived] if conditional else self.states
        return s.mean(axis=0)

    def standard_error(self, conditional: bool = True) -> np.ndarray:
        s = self.states[self.survived] if conditional else self.states
        return s.std(axis=0, ddof=1) / np.sqrt(len(s))


def ensemble(initial, params: ModelParams, grid, n_runs: int, seed: int,
             survival_time: float | None = None) -> Ensemble:
    """Independent runs on a common grid.

    A run counts as surviving when some pathogen still has infectives at
    ``survival_time`` (default: the last grid time).
    """
    grid = np.asarray(grid, dtype=float)
    seeds = run_seeds(seed, n_runs)
    states = np.empty((n_runs, len(grid), 9), dtype=np.int64)
    infections = np.empty((n_runs, len(grid) - 1), dtype=np.int64)
    for r, s in enumerate(seeds):
        states[r], infections[r] = gillespie_on_grid(initial, params, grid, s)
    t_surv = grid[-1] if survival_time is None else survival_time
    g = min(np.searchsorted(grid, t_surv, side="right") - 1, len(grid) - 1)
    infected = states[:, g, [1, 3, 4, 5, 7]].sum(axis=1)
    return Ensemble(grid, states, infections, infected > 0)


def weekly_incidence_counts(traj: EventTrajectory, week_grid) -> np.ndarray:
    """Number of infection events (all six channels) in each week interval
    ``[week_grid[i], week_grid[i + 1])``."""
    edges = np.asarray(week_grid, dtype=float)
    if np.any(np.diff(edges) <= 0):
        raise ValueError("week boundaries must increase")
    if edges[0] < traj.times[0] or edges[-1] > traj.t_end:
        raise ValueError("week boundaries outside the trajectory span")
    is_inf = np.isin(traj.channels, INFECTION_CHANNELS)
    t_inf = traj.times[1:][is_inf]
    counts, _ = np.histogram(t_inf, bins=edges)
    # np.histogram closes the last bin on the right and the others on the left;
    # event times are continuous so ties have probability zero.
    return counts.astype(np.int64)
