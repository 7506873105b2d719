"""Observation model: expected weekly counts, Poisson likelihood, Gamma priors."""

from __future__ import annotations

import logging
import math
from dataclasses import astuple, dataclass, fields

import numpy as np
from scipy import optimize, special
from scipy.special import gammaln

from . import _kernels as K
from .errors import InfeasibleInitial
from .model import DEFAULT_REGIME_TOL, DEFAULT_TOL, ModelParams, raise_for_status

log = logging.getLogger(__name__)

THETA_NAMES = ("beta1", "beta2", "a", "b", "c", "d", "x_is0", "x_si0", "k_scale")
# position of each coordinate after exchanging the two pathogens
THETA_SWAP = np.array([1, 0, 4, 5, 2, 3, 7, 6, 8])
GL_NODES, GL_WEIGHTS = np.polynomial.legendre.leggauss(8)


@dataclass(frozen=True)
class ThetaVector:
    beta1: float
    beta2: float
    a: float
    b: float
    c: float
    d: float
    x_is0: float
    x_si0: float
    k_scale: float

    def as_array(self) -> np.ndarray:
        return np.array(astuple(self), dtype=float)

    @classmethod
    def from_array(cls, values) -> "ThetaVector":
        values = [float(v) for v in values]
        if len(values) != 9:
            raise ValueError("theta has 9 components")
        return cls(*values)

    @classmethod
    def from_mapping(cls, mapping) -> "ThetaVector":
        missing = [n for n in THETA_NAMES if n not in mapping]
        if missing:
            raise KeyError(f"theta is missing {missing}")
        return cls(*(float(mapping[n]) for n in THETA_NAMES))

    def to_dict(self) -> dict:
        return {f.name: getattr(self, f.name) for f in fields(self)}

    def swapped(self) -> "ThetaVector":
        return ThetaVector.from_array(self.as_array()[THETA_SWAP])

    def model_params(self, fixed: ModelParams) -> ModelParams:
        return ModelParams(self.beta1, self.beta2, self.a, self.b, self.c, self.d,
                           fixed.nu1, fixed.nu2, fixed.mu, fixed.n_pop)


def gamma_from_mean_cv(mean: float, cv: float) -> tuple[float, float]:
    """(shape, rate) of the Gamma law with the given mean and coefficient of
    variation: shape = 1/cv**2, rate = shape/mean."""
    if not (mean > 0 and cv > 0):
        raise ValueError("mean and cv must be positive")
    shape = 1.0 / cv**2
    return shape, shape / mean


def shape_for_median_ratio(ratio: float) -> float:
    """Gamma shape whose median equals ``ratio`` times its mean."""
    if not 0 < ratio < 1:
        raise ValueError("ratio must lie in (0, 1)")
    return optimize.brentq(lambda k: special.gammaincinv(k, 0.5) / k - ratio, 1e-4, 1e3,
                           xtol=1e-14)


# cross-infection rates get half their prior mass below the regime threshold
CROSS_CV = 1.0 / math.sqrt(shape_for_median_ratio(DEFAULT_REGIME_TOL))


@dataclass(frozen=True)
class PriorSpec:
    """Independent Gamma(shape, rate) priors, one per theta coordinate."""

    shapes: tuple
    rates: tuple

    def __post_init__(self):
        if len(self.shapes) != 9 or len(self.rates) != 9:
            raise ValueError("need 9 shapes and 9 rates")
        if min(self.shapes) <= 0 or min(self.rates) <= 0:
            raise ValueError("Gamma shapes and rates must be positive")

    @classmethod
    def from_means(cls, means, cvs) -> "PriorSpec":
        pairs = [gamma_from_mean_cv(m, c) for m, c in zip(means, cvs)]
        return cls(tuple(p[0] for p in pairs), tuple(p[1] for p in pairs))

    @classmethod
    def default(cls, fixed: ModelParams | None = None, *, r0_1: float = 1.5,
                r0_2: float = 1.5, cv_rate: float = 0.5, cross_r0: float | None = None,
                cv_cross: float = CROSS_CV, x0_mean: float = 0.1, cv_x0: float = 1.0,
                k_mean: float = 0.05, cv_k: float = 0.5) -> "PriorSpec":
        """Priors whose contact-rate means correspond to target R0 values.

        ``beta_k`` has mean ``r0_k * (nu_k + mu)``. The cross-infection rates
        ``a, b`` (acquisition of pathogen 1) and ``c, d`` (pathogen 2) use
        ``cross_r0`` (default: the same target as the pathogen they transmit)
        with their own coefficient of variation ``cv_cross``. Its default puts
        the prior median at 5% of the mean, so a priori each interaction is as
        likely to be negligible (below the regime threshold) as not.
        """
        fixed = fixed or ModelParams(0.0, 0.0)
        g1 = fixed.nu1 + fixed.mu
        g2 = fixed.nu2 + fixed.mu
        x1 = (cross_r0 if cross_r0 is not None else r0_1) * g1
        x2 = (cross_r0 if cross_r0 is not None else r0_2) * g2
        means = (r0_1 * g1, r0_2 * g2, x1, x1, x2, x2, x0_mean, x0_mean, k_mean)
        cvs = (cv_rate, cv_rate, cv_cross, cv_cross, cv_cross, cv_cross, cv_x0, cv_x0, cv_k)
        return cls.from_means(means, cvs)

    @property
    def means(self) -> np.ndarray:
        return np.asarray(self.shapes) / np.asarray(self.rates)

    def swapped(self) -> "PriorSpec":
        return PriorSpec(tuple(np.asarray(self.shapes)[THETA_SWAP].tolist()),
                         tuple(np.asarray(self.rates)[THETA_SWAP].tolist()))

    @property
    def is_symmetric(self) -> bool:
        return self == self.swapped()

    def sample(self, rng: np.random.Generator) -> np.ndarray:
        return rng.gamma(np.asarray(self.shapes), 1.0 / np.asarray(self.rates))

    def to_dict(self) -> dict:
        return {n: {"shape": s, "rate": r}
                for n, s, r in zip(THETA_NAMES, self.shapes, self.rates)}

    @classmethod
    def from_dict(cls, mapping) -> "PriorSpec":
        return cls(tuple(float(mapping[n]["shape"]) for n in THETA_NAMES),
                   tuple(float(mapping[n]["rate"]) for n in THETA_NAMES))


@dataclass(frozen=True)
class ObservationWindow:
    """Week boundaries ``edges`` (days, n+1 values) and observed counts (n)."""

    edges: np.ndarray
    counts: np.ndarray

    def __post_init__(self):
        edges = np.asarray(self.edges, dtype=float)
        counts = np.asarray(self.counts)
        if counts.ndim != 1 or len(counts) < 4:
            raise ValueError("an observation window needs at least 4 weeks")
        if edges.shape != (len(counts) + 1,) or np.any(np.diff(edges) <= 0):
            raise ValueError("edges must be n+1 increasing times")
        if np.any(counts < 0) or np.any(counts != np.round(counts)):
            raise ValueError("counts must be non-negative integers")
        object.__setattr__(self, "edges", edges)
        object.__setattr__(self, "counts", counts.astype(np.int64))

    @classmethod
    def weekly(cls, counts, start: float = 0.0) -> "ObservationWindow":
        counts = np.asarray(counts)
        return cls(start + 7.0 * np.arange(len(counts) + 1), counts)

    @property
    def n_weeks(self) -> int:
        return len(self.counts)


def initial_state(theta: ThetaVector, n_pop: float) -> np.ndarray:
    """Seed ``x_si0`` pathogen-1 and ``x_is0`` pathogen-2 infectives into an
    otherwise fully susceptible population."""
    if theta.x_is0 + theta.x_si0 >= n_pop:
        raise InfeasibleInitial("initial infectives exceed the population")
    x = np.zeros(9)
    x[K.SI] = theta.x_si0
    x[K.IS] = theta.x_is0
    x[K.SS] = n_pop - theta.x_si0 - theta.x_is0
    return x


def _solve(theta_arr: np.ndarray, fixed: ModelParams, edges: np.ndarray, tol: float):
    n = fixed.n_pop
    p = np.array([theta_arr[0], theta_arr[1], theta_arr[2], theta_arr[3], theta_arr[4],
                  theta_arr[5], fixed.nu1, fixed.nu2, fixed.mu, n])
    x0 = np.zeros(9)
    x0[K.SI] = theta_arr[7]
    x0[K.IS] = theta_arr[6]
    x0[K.SS] = n - theta_arr[6] - theta_arr[7]
    return K.solve_incidence(x0, p, edges, tol, tol * n, tol * n, 200_000,
                             GL_NODES, GL_WEIGHTS)


def expected_weekly_incidence(theta: ThetaVector, window: ObservationWindow | np.ndarray,
                              fixed: ModelParams, tol: float = DEFAULT_TOL) -> np.ndarray:
    """``K * I_i``: scaled integral of all new-infection flows over each week.

    ``window`` may be an :class:`ObservationWindow` or the array of edges.
    """
    edges = window.edges if isinstance(window, ObservationWindow) else np.asarray(window, float)
    initial_state(theta, fixed.n_pop)
    status, inc = _solve(theta.as_array(), fixed, edges, tol)
    raise_for_status(status, "expected_weekly_incidence")
    return theta.k_scale * inc


def _stirlerr(n):
    """log(n!) minus its Stirling approximation, for integer-valued n >= 1."""
    n = np.asarray(n, dtype=float)
    small = n <= 15
    ns = np.where(small, 1.0, n)
    inv2 = 1.0 / (ns * ns)
    series = (1.0 / 12 - inv2 * (1.0 / 360 - inv2 * (1.0 / 1260 - inv2 * (
        1.0 / 1680 - inv2 / 1188)))) / ns
    nn = np.where(small, n, 1.0)
    direct = gammaln(nn + 1.0) - (nn + 0.5) * np.log(nn) + nn - 0.5 * math.log(2 * math.pi)
    return np.where(small, direct, series)


def _count_constant(z):
    """Part of the saddle-point log-pmf that depends on the counts only."""
    z = np.asarray(z, dtype=float)
    pos = z > 0
    zz = np.where(pos, z, 1.0)
    return np.where(pos, -_stirlerr(zz) - 0.5 * np.log(2 * math.pi * zz), 0.0)


def _poisson_terms(z, m, const):
    # Loader's deviance form avoids the cancellation of z*log(m) - m - log z!
    # at large means; z = 0 reduces to -m
    zz = np.where(z > 0, z, m)
    bd0 = zz * np.log1p((zz - m) / m) - (zz - m)
    return np.where(z > 0, const - bd0, -m)


def poisson_loglik(counts, means) -> float:
    """Sum of Poisson log-pmfs; zero means give 0 for zero counts and -inf otherwise."""
    z = np.asarray(counts, dtype=float)
    m = np.asarray(means, dtype=float)
    zero = m <= 0
    if np.any(zero & (z > 0)):
        return -math.inf
    mm = np.where(zero, 1.0, m)
    terms = np.where(zero, 0.0, _poisson_terms(z, mm, _count_constant(z)))
    return float(terms.sum())


def log_likelihood(theta: ThetaVector, window: ObservationWindow, fixed: ModelParams,
                   tol: float = DEFAULT_TOL) -> float:
    return poisson_loglik(window.counts, expected_weekly_incidence(theta, window, fixed, tol))


def gamma_logpdf(x: float, shape: float, rate: float) -> float:
    if x <= 0:
        return -math.inf
    return (shape * math.log(rate) - math.lgamma(shape) + (shape - 1.0) * math.log(x)
            - rate * x)


def log_prior(theta, priors: PriorSpec) -> float:
    """Sum of independent Gamma log-densities; -inf off the positive orthant."""
    values = theta.as_array() if isinstance(theta, ThetaVector) else theta
    total = 0.0
    for v, s, r in zip(values, priors.shapes, priors.rates):
        if not v > 0:
            return -math.inf
        total += s * math.log(r) - math.lgamma(s) + (s - 1.0) * math.log(v) - r * v
    return total


class LogPosterior:
    """Unnormalised log-posterior over theta arrays.

    Off-support points return -inf without solving the model; integrator
    failures are logged and also return -inf.
    """

    def __init__(self, window: ObservationWindow, priors: PriorSpec,
                 fixed: ModelParams, tol: float = DEFAULT_TOL):
        self.window = window
        self.priors = priors
        self.fixed = fixed
        self.tol = tol
        self.n_solves = 0
        self.n_failures = 0
        self._counts = window.counts.astype(float)
        self._zconst = _count_constant(self._counts)
        # the log-likelihood with every mean equal to its count bounds it from above
        self.max_log_likelihood = float(np.sum(self._zconst))

    def log_prior(self, theta) -> float:
        return log_prior(theta, self.priors)

    def upper_bound(self, theta) -> float:
        """Upper bound on the log-posterior that needs no model solve."""
        return self.log_prior(theta) + self.max_log_likelihood

    def log_likelihood(self, theta) -> float:
        th = theta.as_array() if isinstance(theta, ThetaVector) else np.asarray(theta, float)
        if th[6] + th[7] >= self.fixed.n_pop:
            return -math.inf
        self.n_solves += 1
        status, inc = _solve(th, self.fixed, self.window.edges, self.tol)
        if status != K.OK:
            self.n_failures += 1
            log.debug("integrator status %d at theta=%s", status, th.tolist())
            return -math.inf
        m = th[8] * inc
        z = self._counts
        zero = m <= 0
        if zero.any():
            if np.any(z[zero] > 0):
                return -math.inf
            m = np.where(zero, 1.0, m)
            return float(np.sum(np.where(zero, 0.0, _poisson_terms(z, m, self._zconst))))
        return float(np.sum(_poisson_terms(z, m, self._zconst)))

    def __call__(self, theta) -> float:
        lp = self.log_prior(theta)
        if lp == -math.inf:
            return lp
        return self.log_likelihood(theta) + lp

    def expected(self, theta) -> np.ndarray:
        th = theta if isinstance(theta, ThetaVector) else ThetaVector.from_array(theta)
        return expected_weekly_incidence(th, self.window, self.fixed, self.tol)


def log_posterior(theta: ThetaVector, window: ObservationWindow, priors: PriorSpec,
                  fixed: ModelParams, tol: float = DEFAULT_TOL) -> float:
    return LogPosterior(window, priors, fixed, tol)(theta)
