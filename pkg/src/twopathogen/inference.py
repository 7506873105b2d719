"""Posterior exploration with the t-walk and summaries of the resulting draws.

The t-walk keeps two points ``x`` and ``xp`` in the parameter space and moves
one of them at a time with one of four scale-free kernels built from the
difference ``xp - x``:

* walk     - ``y = x + (x - xp) * z`` on a random subset of coordinates
* traverse - ``y = xp + beta * (xp - x)``
* blow     - ``y = xp + sigma * N(0, 1)`` with ``sigma = max|xp - x|``
* hop      - ``y = x + sigma / 3 * N(0, 1)``

Each move is accepted with the Metropolis-Hastings ratio on the product space,
so each point is marginally distributed according to the target.
"""

from __future__ import annotations

import math
import warnings
from collections import Counter
from dataclasses import dataclass, field
from typing import Callable

import numpy as np
from scipy import optimize

from .errors import InitInfeasible, NonConvergenceWarning
from .model import (DEFAULT_REGIME_TOL, DEFAULT_TOL, ModelParams, Regime, classify_regime,
                    crossover_times, integrate, replacement_numbers)
from .observation import (THETA_NAMES, THETA_SWAP, LogPosterior, ObservationWindow,
                          PriorSpec, ThetaVector, expected_weekly_incidence, initial_state)

KERNELS = ("walk", "traverse", "blow", "hop", "swap")
QUANTILES = (0.025, 0.25, 0.5, 0.75, 0.975)


@dataclass(frozen=True)
class SamplerConfig:
    iterations: int = 2_000_000
    burn_in: int = 500_000
    thinning: int = 100
    seed: int = 0
    # walk, traverse, blow, hop
    move_weights: tuple = (0.4918, 0.4918, 0.0082, 0.0082)
    # probability of proposing the label-exchange move instead of a t-walk move
    swap_weight: float = 0.01
    n1phi: float = 4.0
    aw: float = 1.5
    at: float = 6.0
    kernel: str = "twalk"
    # "likelihood": start from the best of several local likelihood maxima;
    # "prior": start from a prior draw
    init: str = "likelihood"
    n_starts: int = 8
    # walk on log(theta) with the Jacobian added; reaches the far lower tail
    # of Gamma priors with shape below one
    log_scale: bool = True

    def __post_init__(self):
        if not self.iterations > self.burn_in >= 0:
            raise ValueError("need iterations > burn_in >= 0")
        if self.thinning < 1:
            raise ValueError("thinning must be >= 1")
        if len(self.move_weights) != 4 or min(self.move_weights) < 0:
            raise ValueError("four non-negative move weights required")
        if not math.isclose(sum(self.move_weights), 1.0, abs_tol=1e-9):
            raise ValueError("move weights must sum to 1")
        if not 0 <= self.swap_weight < 1:
            raise ValueError("swap_weight must lie in [0, 1)")
        if self.kernel not in ("twalk", "arwm"):
            raise ValueError(f"unknown kernel {self.kernel!r}")
        if self.init not in ("likelihood", "prior"):
            raise ValueError(f"unknown init {self.init!r}")
        if self.n_starts < 1:
            raise ValueError("n_starts must be >= 1")

    @property
    def n_retained(self) -> int:
        return len(range(self.burn_in, self.iterations, self.thinning))


@dataclass
class PosteriorSample:
    draws: np.ndarray
    log_post: np.ndarray
    acceptance: dict = field(default_factory=dict)
    iat: np.ndarray | None = None
    chain: np.ndarray | None = None
    names: tuple = THETA_NAMES

    def __post_init__(self):
        self.draws = np.asarray(self.draws, dtype=float)
        self.log_post = np.asarray(self.log_post, dtype=float)
        if self.chain is None:
            self.chain = np.zeros(len(self.draws), dtype=int)
        if self.iat is None and len(self.draws) > 3:
            self.iat = iat_by_chain(self.draws, self.chain)

    def __len__(self):
        return len(self.draws)

    @property
    def overall_acceptance(self) -> float:
        return self.acceptance.get("overall", float("nan"))


# ---------------------------------------------------------------------------
# t-walk


def _beta(rng, at):
    if rng.random() < (at - 1.0) / (2.0 * at):
        return rng.random() ** (1.0 / (at + 1.0))
    return rng.random() ** (1.0 / (1.0 - at))


def _pick_subset(rng, dim, pphi):
    while True:
        phi = rng.random(dim) < pphi
        if phi.any():
            return phi


def _gauss_nlog(h, center, sigma, nphi, phi, scale):
    # -log density of N(center, (sigma/scale)^2) on the coordinates in phi
    s = sigma / scale
    return (0.5 * nphi * math.log(2 * math.pi) + nphi * math.log(s)
            + 0.5 * float(np.sum((h[phi] - center[phi]) ** 2)) / s**2)


class _Tally:
    def __init__(self):
        self.proposed = Counter()
        self.accepted = Counter()

    def as_dict(self, iterations):
        out = {k: (self.accepted[k] / self.proposed[k] if self.proposed[k] else 0.0)
               for k in KERNELS}
        out["overall"] = sum(self.accepted.values()) / max(iterations, 1)
        return out


def twalk(logpost: Callable[[np.ndarray], float], x0, xp0, cfg: SamplerConfig,
          involution: np.ndarray | None = None) -> PosteriorSample:
    """Run the t-walk from the pair ``(x0, xp0)``.

    ``logpost`` returns ``-inf`` outside the support (the positive orthant).
    ``involution`` is an optional coordinate permutation that leaves the model
    invariant; with ``cfg.swap_weight > 0`` it is proposed for one randomly
    chosen point. With ``cfg.log_scale`` the walk moves ``u = log(theta)``
    under ``logpost(exp(u)) + sum(u)``; draws and their log-posterior values
    are reported on the original scale either way.

    If ``logpost`` has an ``upper_bound`` method (a cheap bound on its value),
    proposals whose bound already fails the acceptance test are rejected
    without the full evaluation; the chain is the same as without it.
    """
    bound = getattr(logpost, "upper_bound", None)
    if cfg.log_scale:
        def target(u, floor=-math.inf):
            if np.any(u > 700.0):
                return -math.inf, -math.inf
            th, jac = np.exp(u), float(np.sum(u))
            if bound is not None and bound(th) + jac <= floor:
                return -math.inf, -math.inf
            lp = logpost(th)
            return lp + jac, lp
        to_theta = np.exp
        x0, xp0 = np.asarray(x0, dtype=float), np.asarray(xp0, dtype=float)
        if np.any(x0 <= 0) or np.any(xp0 <= 0):
            raise InitInfeasible("initial point outside the positive orthant")
        x0, xp0 = np.log(x0), np.log(xp0)
    else:
        def target(y, floor=-math.inf):
            if np.any(y <= 0):
                return -math.inf, -math.inf
            if bound is not None and bound(y) <= floor:
                return -math.inf, -math.inf
            lp = logpost(y)
            return lp, lp
        to_theta = np.asarray

    rng = np.random.Generator(np.random.PCG64(cfg.seed))
    x = np.array(x0, dtype=float)
    xp = np.array(xp0, dtype=float)
    dim = len(x)
    if np.all(x == xp):
        raise InitInfeasible("the two initial points must differ")
    (lx, px), (lxp, pxp) = target(x), target(xp)
    if not (np.isfinite(lx) and np.isfinite(lxp)):
        raise InitInfeasible("initial point has zero posterior density")
    pphi = min(dim, cfg.n1phi) / dim
    cum = np.cumsum(cfg.move_weights)
    n_keep = cfg.n_retained
    draws = np.empty((n_keep, dim))
    lps = np.empty(n_keep)
    tally = _Tally()
    k = 0
    for it in range(cfg.iterations):
        if involution is not None and cfg.swap_weight > 0 and rng.random() < cfg.swap_weight:
            kernel = "swap"
            tally.proposed[kernel] += 1
            # one point at a time: exchanging both at once never separates
            # them, which squares the odds between unequal mirror modes
            if rng.random() < 0.5:
                floor = lx + math.log(rng.random())
                y = x[involution]
                ly, py = target(y, floor)
                if np.isfinite(ly) and ly > floor:
                    x, lx, px = y, ly, py
                    tally.accepted[kernel] += 1
            else:
                floor = lxp + math.log(rng.random())
                yp = xp[involution]
                lyp, pyp = target(yp, floor)
                if np.isfinite(lyp) and lyp > floor:
                    xp, lxp, pxp = yp, lyp, pyp
                    tally.accepted[kernel] += 1
        else:
            move_x = rng.random() < 0.5
            cur, oth, lcur = (x, xp, lx) if move_x else (xp, x, lxp)
            kernel = KERNELS[min(int(np.searchsorted(cum, rng.random(), side="right")), 3)]
            phi = _pick_subset(rng, dim, pphi)
            nphi = int(phi.sum())
            y = cur.copy()
            log_h = 0.0
            valid = True
            if kernel == "walk":
                uu = rng.random(nphi)
                z = (cfg.aw / (1.0 + cfg.aw)) * (cfg.aw * uu**2 + 2.0 * uu - 1.0)
                y[phi] = cur[phi] + (cur[phi] - oth[phi]) * z
            elif kernel == "traverse":
                beta = _beta(rng, cfg.at)
                y[phi] = oth[phi] + beta * (oth[phi] - cur[phi])
                log_h = (nphi - 2) * math.log(beta)
            else:
                sigma = float(np.max(np.abs(oth[phi] - cur[phi])))
                if sigma <= 0:
                    valid = False
                elif kernel == "blow":
                    y[phi] = oth[phi] + sigma * rng.standard_normal(nphi)
                    sigma_back = float(np.max(np.abs(oth[phi] - y[phi])))
                    log_h = (_gauss_nlog(y, oth, sigma, nphi, phi, 1.0)
                             - _gauss_nlog(cur, oth, sigma_back, nphi, phi, 1.0))
                else:
                    y[phi] = cur[phi] + (sigma / 3.0) * rng.standard_normal(nphi)
                    sigma_back = float(np.max(np.abs(oth[phi] - y[phi])))
                    log_h = (_gauss_nlog(y, cur, sigma, nphi, phi, 3.0)
                             - _gauss_nlog(cur, y, sigma_back, nphi, phi, 3.0))
            tally.proposed[kernel] += 1
            if valid and np.any(y != oth):
                # accept when ly - lcur + log_h > log(u)
                floor = lcur - log_h + math.log(rng.random())
                ly, py = target(y, floor)
                if np.isfinite(ly) and ly > floor:
                    tally.accepted[kernel] += 1
                    if move_x:
                        x, lx, px = y, ly, py
                    else:
                        xp, lxp, pxp = y, ly, py
        if it >= cfg.burn_in and (it - cfg.burn_in) % cfg.thinning == 0:
            draws[k] = to_theta(x)
            lps[k] = px
            k += 1
    acc = tally.as_dict(cfg.iterations)
    _warn_acceptance(acc["overall"])
    return PosteriorSample(draws[:k], lps[:k], acc)


def arwm(logpost: Callable[[np.ndarray], float], x0, cfg: SamplerConfig) -> PosteriorSample:
    """Random-walk Metropolis with a diagonal proposal adapted during burn-in.

    Meant as an independent cross-check of the t-walk.
    """
    rng = np.random.Generator(np.random.PCG64(cfg.seed))
    x = np.array(x0, dtype=float)
    dim = len(x)
    lx = logpost(x)
    if not np.isfinite(lx):
        raise InitInfeasible("initial point has zero posterior density")
    scale = 0.1 * np.abs(x) + 1e-12
    mean = x.copy()
    m2 = np.zeros(dim)
    n_seen = 0
    draws = np.empty((cfg.n_retained, dim))
    lps = np.empty(cfg.n_retained)
    accepted = 0
    k = 0
    for it in range(cfg.iterations):
        y = x + scale * rng.standard_normal(dim)
        if np.all(y > 0):
            ly = logpost(y)
            if np.isfinite(ly) and math.log(rng.random()) < ly - lx:
                x, lx = y, ly
                accepted += 1
        if it < cfg.burn_in:
            n_seen += 1
            delta = x - mean
            mean += delta / n_seen
            m2 += delta * (x - mean)
            if n_seen > 100 and n_seen % 100 == 0:
                scale = (2.38 / math.sqrt(dim)) * np.sqrt(m2 / (n_seen - 1)) + 1e-12
        elif (it - cfg.burn_in) % cfg.thinning == 0:
            draws[k] = x
            lps[k] = lx
            k += 1
    acc = {"overall": accepted / cfg.iterations}
    _warn_acceptance(acc["overall"])
    return PosteriorSample(draws[:k], lps[:k], acc)


def _warn_acceptance(rate):
    if not 0.05 <= rate <= 0.6:
        warnings.warn(f"acceptance rate {rate:.3f} outside [0.05, 0.6]", NonConvergenceWarning,
                      stacklevel=3)


def initial_pair(priors: PriorSpec, logpost, rng: np.random.Generator, max_tries: int = 1000):
    """A prior draw and a copy with every coordinate scaled by U(0.5, 2)."""
    for _ in range(max_tries):
        x0 = priors.sample(rng)
        xp0 = x0 * rng.uniform(0.5, 2.0, size=len(x0))
        if np.isfinite(logpost(x0)) and np.isfinite(logpost(xp0)):
            return x0, xp0
    raise InitInfeasible(f"no feasible starting pair in {max_tries} prior draws")


def likelihood_start(logpost: LogPosterior, rng: np.random.Generator, n_starts: int = 8,
                     max_evals: int = 3000) -> np.ndarray:
    """Best of ``n_starts`` Nelder-Mead maximisations of the log-likelihood,
    each started from a prior draw and run in log coordinates.

    The likelihood rather than the posterior is maximised because Gamma
    priors with shape below one have unbounded density at zero.
    """
    def neg(u):
        v = logpost.log_likelihood(np.exp(u)) if np.all(np.abs(u) < 700) else -math.inf
        return -v if np.isfinite(v) else 1e300

    best, best_val = None, math.inf
    for _ in range(n_starts):
        x0 = logpost.priors.sample(rng)
        if not np.isfinite(neg(np.log(x0))):
            continue
        res = optimize.minimize(neg, np.log(x0), method="Nelder-Mead",
                                options={"maxfev": max_evals, "xatol": 1e-4, "fatol": 1e-3})
        if res.fun < best_val:
            best, best_val = np.exp(res.x), res.fun
    if best is None or best_val >= 1e300:
        raise InitInfeasible(f"no feasible likelihood start in {n_starts} prior draws")
    return best


def sample_posterior(logpost, init1, init2, cfg: SamplerConfig,
                     involution: np.ndarray | None = None) -> PosteriorSample:
    if cfg.kernel == "arwm":
        return arwm(logpost, init1, cfg)
    return twalk(logpost, init1, init2, cfg, involution=involution)


def chain_seeds(seed: int, n_chains: int) -> list[int]:
    return [int(s.generate_state(1)[0]) for s in np.random.SeedSequence(seed).spawn(n_chains)]


def run_chains(logpost: LogPosterior, cfg: SamplerConfig, n_chains: int = 1,
               involution: np.ndarray | None = THETA_SWAP) -> PosteriorSample:
    """Independent chains, merged after burn-in.

    With ``cfg.init == "likelihood"`` the first point of each chain is a local
    likelihood maximum and the second a randomly rescaled copy of it;
    otherwise both come from :func:`initial_pair`.
    """
    samples = []
    for c, s in enumerate(chain_seeds(cfg.seed, n_chains)):
        rng = np.random.Generator(np.random.PCG64(s))
        if cfg.init == "likelihood":
            init1 = likelihood_start(logpost, rng, cfg.n_starts)
            init2 = init1 * rng.uniform(0.5, 2.0, size=len(init1))
        else:
            init1, init2 = initial_pair(logpost.priors, logpost, rng)
        ccfg = SamplerConfig(**{**cfg.__dict__, "seed": s})
        samples.append(sample_posterior(logpost, init1, init2, ccfg, involution))
    return merge_chains(samples)


def merge_chains(samples: list[PosteriorSample]) -> PosteriorSample:
    draws = np.concatenate([s.draws for s in samples])
    lps = np.concatenate([s.log_post for s in samples])
    chain = np.concatenate([np.full(len(s), i) for i, s in enumerate(samples)])
    acc = {}
    for key in samples[0].acceptance:
        acc[key] = float(np.mean([s.acceptance[key] for s in samples]))
    return PosteriorSample(draws, lps, acc, chain=chain)


# ---------------------------------------------------------------------------
# diagnostics


def autocorrelation(x: np.ndarray) -> np.ndarray:
    x = np.asarray(x, dtype=float)
    n = len(x)
    x = x - x.mean()
    size = 1 << (2 * n - 1).bit_length()
    f = np.fft.rfft(x, size)
    acf = np.fft.irfft(f * np.conjugate(f), size)[:n]
    if acf[0] <= 0:
        return np.ones(1)
    return acf / acf[0]


def integrated_autocorrelation_time(x: np.ndarray) -> float:
    """Geyer's initial positive sequence estimator."""
    rho = autocorrelation(x)
    if len(rho) < 2:
        return 1.0
    tau = -1.0
    for m in range(0, len(rho) - 1, 2):
        pair = rho[m] + rho[m + 1]
        if pair <= 0:
            break
        tau += 2.0 * pair
    return max(tau, 1.0)


def iat_by_chain(draws: np.ndarray, chain: np.ndarray) -> np.ndarray:
    draws = np.asarray(draws)
    out = np.zeros(draws.shape[1])
    ids = np.unique(chain)
    for j in range(draws.shape[1]):
        out[j] = np.mean([integrated_autocorrelation_time(draws[chain == c, j]) for c in ids])
    return out


def quantile_standard_error(x: np.ndarray, p: float, q: float | None = None) -> float:
    """Monte Carlo standard error of the empirical ``p``-quantile expressed in
    probability units: sqrt(p (1-p) tau / n), with ``tau`` the IAT of the
    indicator ``x <= q``."""
    x = np.asarray(x)
    q = np.quantile(x, p) if q is None else q
    tau = integrated_autocorrelation_time((x <= q).astype(float))
    return math.sqrt(p * (1 - p) * tau / len(x))


MAX_BINS = 1000


def fd_bins(values: np.ndarray) -> int:
    """Freedman-Diaconis bin count, capped at ``MAX_BINS``.

    Log-scale draws can have tails many orders of magnitude beyond the
    interquartile range, where the uncapped rule asks for billions of bins.
    """
    n = len(values)
    iqr = np.subtract(*np.quantile(values, [0.75, 0.25]))
    span = np.ptp(values)
    if iqr <= 0 or span == 0:
        return max(1, int(math.ceil(math.log2(n) + 1)))
    width = 2.0 * iqr / n ** (1.0 / 3.0)
    return int(min(MAX_BINS, max(1, math.ceil(span / width))))


def is_bimodal(values: np.ndarray, valley_ratio: float = 0.5, min_peak: float = 0.1) -> bool:
    """Two histogram peaks (Freedman-Diaconis bins) separated by a valley lower
    than ``valley_ratio`` times the smaller peak.

    Peaks below ``min_peak`` times the tallest bin are ignored.
    """
    values = np.asarray(values, dtype=float)
    if len(values) < 10 or np.ptp(values) == 0:
        return False
    counts, _ = np.histogram(values, bins=fd_bins(values))
    if len(counts) < 3:
        return False
    floor = min_peak * counts.max()
    padded = np.concatenate([[-1], counts, [-1]])
    peaks = [i for i in range(len(counts))
             if counts[i] >= floor and padded[i + 1] > padded[i] and padded[i + 1] >= padded[i + 2]]
    for i, lo in enumerate(peaks):
        for hi in peaks[i + 1:]:
            valley = counts[lo:hi + 1].min()
            if valley < valley_ratio * min(counts[lo], counts[hi]):
                return True
    return False


def regime_labels(draws: np.ndarray, rel_tol: float = DEFAULT_REGIME_TOL) -> list[Regime]:
    return [classify_regime(ThetaVector.from_array(d), rel_tol) for d in np.asarray(draws)]


def histogram_table(values: np.ndarray) -> list[dict]:
    values = np.asarray(values, dtype=float)
    counts, edges = np.histogram(values, bins=fd_bins(values))
    return [{"lo": float(edges[i]), "hi": float(edges[i + 1]), "count": int(counts[i])}
            for i in range(len(counts))]


# ---------------------------------------------------------------------------
# MAP and report


def _golden_max(f, lo, hi, iters):
    g = (math.sqrt(5) - 1) / 2
    c = hi - g * (hi - lo)
    d = lo + g * (hi - lo)
    fc, fd = f(c), f(d)
    for _ in range(iters):
        if fc >= fd:
            hi, d, fd = d, c, fc
            c = hi - g * (hi - lo)
            fc = f(c)
        else:
            lo, c, fc = c, d, fd
            d = lo + g * (hi - lo)
            fd = f(d)
    return (c, fc) if fc >= fd else (d, fd)


def polish_map(logpost, theta: np.ndarray, passes: int = 3, iters: int = 30) -> tuple[np.ndarray, float]:
    """Coordinate-wise golden-section refinement in log-coordinates.

    A coordinate is only updated when the log-posterior strictly improves, so
    the result never decreases the starting value.
    """
    best = np.array(theta, dtype=float)
    best_lp = logpost(best)
    for p in range(passes):
        width = math.log(2.0) / (2 ** p)
        for j in range(len(best)):
            base = best.copy()

            def f(u, j=j, base=base):
                y = base.copy()
                y[j] = math.exp(u)
                v = logpost(y)
                return v if np.isfinite(v) else -math.inf

            u0 = math.log(best[j])
            u, val = _golden_max(f, u0 - width, u0 + width, iters)
            if val > best_lp:
                best[j] = math.exp(u)
                best_lp = val
    return best, best_lp


def map_estimate(sample: PosteriorSample, polish: bool = False,
                 logpost=None) -> tuple[ThetaVector, float]:
    if len(sample) == 0:
        raise ValueError("empty sample")
    i = int(np.argmax(sample.log_post))
    theta, lp = sample.draws[i].copy(), float(sample.log_post[i])
    if polish:
        if logpost is None:
            raise ValueError("polishing needs the log-posterior")
        theta, lp = polish_map(logpost, theta)
    return ThetaVector.from_array(theta), lp


def count_local_maxima(series) -> int:
    s = np.asarray(series, dtype=float)
    n = 0
    for i in range(len(s)):
        left = s[i - 1] if i > 0 else -np.inf
        right = s[i + 1] if i < len(s) - 1 else -np.inf
        if s[i] > left and s[i] >= right and s[i] > 0:
            n += 1
    return n


@dataclass
class FitReport:
    map_theta: ThetaVector
    map_log_post: float
    quantiles: dict
    regime_distribution: dict
    regime_mode: str
    multimodal: dict
    iat: dict
    n_draws: int
    times: list
    map_states: list
    r1: list
    r2: list
    crossover_times: list
    week_edges: list
    observed: list
    map_expected: list

    @property
    def leading_pathogen(self) -> int:
        return 1 if self.r1[0] > self.r2[0] else 2

    @property
    def incidence_peaks(self) -> int:
        return count_local_maxima(self.map_expected)

    def to_dict(self) -> dict:
        return {
            "map": {"theta": self.map_theta.to_dict(), "log_post": self.map_log_post},
            "quantile_levels": list(QUANTILES),
            "quantiles": self.quantiles,
            "regime_distribution": self.regime_distribution,
            "regime_mode": self.regime_mode,
            "multimodal": self.multimodal,
            "iat": self.iat,
            "n_draws": self.n_draws,
            "map_trajectory": {"t_days": self.times, "compartments": list(_COMPARTMENT_KEYS),
                               "states": self.map_states},
            "replacement_numbers": {"t_days": self.times, "r1": self.r1, "r2": self.r2,
                                    "crossover_times": self.crossover_times,
                                    "leading_pathogen": self.leading_pathogen},
            "incidence": {"week_edges_days": self.week_edges, "observed": self.observed,
                          "map_expected": self.map_expected,
                          "map_expected_peaks": self.incidence_peaks},
        }


_COMPARTMENT_KEYS = ("x_ss", "x_si", "x_sr", "x_is", "x_ii", "x_ir", "x_rs", "x_ri", "x_rr")


def fit_report(sample: PosteriorSample, window: ObservationWindow, fixed: ModelParams,
               logpost=None, polish: bool = True, rel_tol: float = DEFAULT_REGIME_TOL,
               tol: float = DEFAULT_TOL) -> FitReport:
    """Summaries of a posterior sample plus MAP-based model outputs."""
    theta, lp = map_estimate(sample, polish=polish and logpost is not None, logpost=logpost)
    qs = np.quantile(sample.draws, QUANTILES, axis=0)
    quantiles = {n: [float(v) for v in qs[:, j]] for j, n in enumerate(THETA_NAMES)}
    labels = regime_labels(sample.draws, rel_tol)
    counts = Counter(r.value for r in labels)
    dist = {r.value: counts.get(r.value, 0) / len(labels) for r in Regime}
    mode = max(Regime, key=lambda r: (counts.get(r.value, 0), -list(Regime).index(r))).value
    multimodal = {n: bool(is_bimodal(sample.draws[:, j])) for j, n in enumerate(THETA_NAMES)}
    iat = iat_by_chain(sample.draws, sample.chain)

    params = theta.model_params(fixed)
    t0, t1 = float(window.edges[0]), float(window.edges[-1])
    traj = integrate(initial_state(theta, fixed.n_pop), params, (t0, t1), tol)
    times = np.arange(t0, t1 + 1e-9, 1.0)
    states = traj(times)
    r1, r2 = replacement_numbers(states, params)
    expected = expected_weekly_incidence(theta, window, fixed, tol)
    return FitReport(
        map_theta=theta, map_log_post=float(lp), quantiles=quantiles,
        regime_distribution=dist, regime_mode=mode, multimodal=multimodal,
        iat={n: float(v) for n, v in zip(THETA_NAMES, iat)}, n_draws=len(sample),
        times=times.tolist(), map_states=states.tolist(), r1=r1.tolist(), r2=r2.tolist(),
        crossover_times=crossover_times(times, r1, r2),
        week_edges=window.edges.tolist(), observed=window.counts.tolist(),
        map_expected=expected.tolist())
