"""Deterministic two-pathogen SIR model.

Compartments are stored as length-9 float arrays in the order given by
``COMPARTMENTS``. In ``X_ij`` the second letter is the status with respect to
pathogen 1 and the first letter the status with respect to pathogen 2, so the
pathogen-1 force of infection is ``(x_si + x_ii + x_ri) / N``.

Cross-infection flows:

* ``a``: IS -> II at rate ``a * lam1`` (pathogen-2 infectives catch pathogen 1)
* ``b``: RS -> RI at rate ``b * lam1`` (pathogen-2 recovered catch pathogen 1)
* ``c``: SI -> II at rate ``c * lam2``
* ``d``: SR -> IR at rate ``d * lam2``

This is the flow graph implied by the replacement numbers; the right-hand side
as usually printed for this model routes ``a`` and ``b`` inconsistently and
does not conserve population.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass, field, replace

import numpy as np

from . import _kernels as K
from .errors import MarginalCase, NonFiniteState, StepFailure

COMPARTMENTS = ("ss", "si", "sr", "is", "ii", "ir", "rs", "ri", "rr")
SS, SI, SR, IS, II, IR, RS, RI, RR = range(9)

# permutation exchanging the roles of the two pathogens
SWAP_INDEX = np.array([SS, IS, RS, SI, II, RI, SR, IR, RR])

DAYS_PER_YEAR = 365.0
DEFAULT_NU = 1.0 / 7.0
DEFAULT_MU = 1.0 / (75.0 * DAYS_PER_YEAR)
DEFAULT_N = 1_000_000.0
DEFAULT_TOL = 1e-8
DEFAULT_REGIME_TOL = 0.05


@dataclass(frozen=True)
class ModelParams:
    """Rates per day; ``n_pop`` in head-count."""

    beta1: float
    beta2: float
    a: float = 0.0
    b: float = 0.0
    c: float = 0.0
    d: float = 0.0
    nu1: float = DEFAULT_NU
    nu2: float = DEFAULT_NU
    mu: float = DEFAULT_MU
    n_pop: float = DEFAULT_N

    def __post_init__(self):
        for name in ("beta1", "beta2", "a", "b", "c", "d", "nu1", "nu2", "mu"):
            v = getattr(self, name)
            if not np.isfinite(v) or v < 0:
                raise ValueError(f"{name} must be a finite non-negative rate, got {v}")
        if not self.n_pop > 0:
            raise ValueError("n_pop must be positive")

    def as_array(self) -> np.ndarray:
        return np.array([self.beta1, self.beta2, self.a, self.b, self.c, self.d,
                         self.nu1, self.nu2, self.mu, self.n_pop], dtype=float)

    def swapped(self) -> "ModelParams":
        """Exchange the labels of the two pathogens."""
        return replace(self, beta1=self.beta2, beta2=self.beta1, a=self.c, c=self.a,
                       b=self.d, d=self.b, nu1=self.nu2, nu2=self.nu1)


def state_vector(n_pop: float = DEFAULT_N, **counts) -> np.ndarray:
    """Build a state from keyword counts; ``x_ss`` defaults to the remainder."""
    x = np.zeros(9)
    for key, value in counts.items():
        name = key[2:] if key.startswith("x_") else key
        if name not in COMPARTMENTS:
            raise KeyError(f"unknown compartment {key!r}")
        x[COMPARTMENTS.index(name)] = value
    if "x_ss" not in counts and "ss" not in counts:
        x[SS] = n_pop - x.sum()
    return x


def swap_state(x: np.ndarray) -> np.ndarray:
    return np.asarray(x)[..., SWAP_INDEX]


def forces_of_infection(x: np.ndarray, n_pop: float) -> tuple[np.ndarray, np.ndarray]:
    x = np.asarray(x)
    lam1 = (x[..., SI] + x[..., II] + x[..., RI]) / n_pop
    lam2 = (x[..., IS] + x[..., II] + x[..., IR]) / n_pop
    return lam1, lam2


def rhs(state: np.ndarray, params: ModelParams) -> np.ndarray:
    out = np.empty(9)
    K.rhs_into(np.asarray(state, dtype=float), params.as_array(), out)
    return out


def jacobian(state: np.ndarray, params: ModelParams) -> np.ndarray:
    """Analytic Jacobian of :func:`rhs`."""
    x = np.asarray(state, dtype=float)
    p = params
    n = p.n_pop
    lam1, lam2 = forces_of_infection(x, n)
    J = np.zeros((9, 9))
    inf1 = (SI, II, RI)
    inf2 = (IS, II, IR)

    def add_flow(src, dst, rate, lam, infectives):
        # flow = rate * lam * x[src]
        for row, sign in ((src, -1.0), (dst, 1.0)):
            J[row, src] += sign * rate * lam
            for k in infectives:
                J[row, k] += sign * rate * x[src] / n

    add_flow(SS, SI, p.beta1, lam1, inf1)
    add_flow(SS, IS, p.beta2, lam2, inf2)
    add_flow(IS, II, p.a, lam1, inf1)
    add_flow(RS, RI, p.b, lam1, inf1)
    add_flow(SI, II, p.c, lam2, inf2)
    add_flow(SR, IR, p.d, lam2, inf2)
    for src, dst in ((SI, SR), (II, IR), (RI, RR)):
        J[src, src] -= p.nu1
        J[dst, src] += p.nu1
    for src, dst in ((IS, RS), (II, RI), (IR, RR)):
        J[src, src] -= p.nu2
        J[dst, src] += p.nu2
    J[np.arange(9), np.arange(9)] -= p.mu
    return J


def numerical_jacobian(state: np.ndarray, params: ModelParams, step: float = 1.0) -> np.ndarray:
    """Central-difference Jacobian of :func:`rhs` (exact for the quadratic rhs
    up to rounding)."""
    x = np.asarray(state, dtype=float)
    J = np.empty((9, 9))
    for j in range(9):
        e = np.zeros(9)
        e[j] = step
        J[:, j] = (rhs(x + e, params) - rhs(x - e, params)) / (2 * step)
    return J


@dataclass(frozen=True)
class Trajectory:
    """Adaptive-step solution with dense output.

    ``times``/``states`` are the accepted step points; calling the trajectory
    evaluates the order-4 continuous extension at arbitrary times in the span.
    """

    times: np.ndarray
    states: np.ndarray
    params: ModelParams
    _conts: np.ndarray = field(repr=False)

    def __call__(self, t) -> np.ndarray:
        tq = np.atleast_1d(np.asarray(t, dtype=float))
        if tq.size and (tq.min() < self.times[0] - 1e-9 or tq.max() > self.times[-1] + 1e-9):
            raise ValueError("evaluation time outside the integration span")
        out = K.dense_eval(self.times, self.states, self._conts, tq)
        np.maximum(out, 0.0, out=out)
        return out[0] if np.ndim(t) == 0 else out

    @property
    def t_span(self) -> tuple[float, float]:
        return float(self.times[0]), float(self.times[-1])

    def sample(self, step: float = 1.0) -> tuple[np.ndarray, np.ndarray]:
        t0, t1 = self.t_span
        grid = np.arange(t0, t1 + 1e-9, step)
        return grid, self(grid)


_STATUS_ERRORS = {
    K.STEP_TOO_SMALL: (StepFailure, "step size underflow"),
    K.TOO_MANY_STEPS: (StepFailure, "maximum number of steps exceeded"),
    K.NEGATIVE_STATE: (StepFailure, "compartment undershoot below -tol*N"),
    K.NON_FINITE: (NonFiniteState, "non-finite state"),
}


def raise_for_status(status: int, where: str = "integrate"):
    if status != K.OK:
        cls, msg = _STATUS_ERRORS[status]
        raise cls(f"{where}: {msg}")


def integrate(initial: np.ndarray, params: ModelParams, t_span=(0.0, 210.0),
              tol: float = DEFAULT_TOL, max_steps: int = 200_000) -> Trajectory:
    """Integrate the model over ``t_span`` (days).

    Uses a Dormand-Prince 5(4) pair with relative tolerance ``tol`` and
    absolute tolerance ``tol * N``. Negative undershoots smaller than
    ``tol * N`` are clamped to zero; larger ones raise :class:`StepFailure`.
    """
    t0, t1 = map(float, t_span)
    if not t1 > t0:
        raise ValueError("t_span must be non-degenerate")
    if not tol > 0:
        raise ValueError("tol must be positive")
    y0 = np.asarray(initial, dtype=float)
    if y0.shape != (9,) or not np.all(np.isfinite(y0)):
        raise ValueError("initial state must be 9 finite numbers")
    n = params.n_pop
    status, times, states, conts = K.dopri5(y0.copy(), params.as_array(), t0, t1,
                                            tol, tol * n, tol * n, max_steps)
    raise_for_status(status)
    return Trajectory(times, states, params, conts)


def r0(params: ModelParams) -> tuple[float, float, float]:
    r01 = params.beta1 / (params.nu1 + params.mu)
    r02 = params.beta2 / (params.nu2 + params.mu)
    return r01, r02, max(r01, r02)


def equilibria(params: ModelParams) -> list[tuple[str, np.ndarray]]:
    """Disease-free equilibrium plus the semi-endemic equilibria that exist."""
    n = params.n_pop
    r01, r02, _ = r0(params)
    out = [("DFE", state_vector(n, x_ss=n))]
    if r01 > 1:
        x = np.zeros(9)
        x[SS] = n / r01
        x[SI] = params.mu / params.beta1 * (r01 - 1) * n
        x[SR] = params.nu1 / params.beta1 * (r01 - 1) * n
        out.append(("EE1", x))
    if r02 > 1:
        x = np.zeros(9)
        x[SS] = n / r02
        x[IS] = params.mu / params.beta2 * (r02 - 1) * n
        x[RS] = params.nu2 / params.beta2 * (r02 - 1) * n
        out.append(("EE2", x))
    return out


class Stability(enum.Enum):
    STABLE = "Stable"
    UNSTABLE = "Unstable"


def dfe_eigenvalues(params: ModelParams) -> np.ndarray:
    dfe = state_vector(params.n_pop, x_ss=params.n_pop)
    return np.linalg.eigvals(numerical_jacobian(dfe, params))


def dfe_stability(params: ModelParams, margin: float = 1e-9) -> Stability:
    """Local stability of the DFE, decided by R0 and checked against the
    finite-difference Jacobian spectrum."""
    _, _, rmax = r0(params)
    if abs(rmax - 1.0) < margin:
        raise MarginalCase(f"R0 = {rmax!r} is within {margin} of 1")
    by_r0 = Stability.STABLE if rmax < 1 else Stability.UNSTABLE
    by_jac = (Stability.STABLE if np.max(dfe_eigenvalues(params).real) < 0
              else Stability.UNSTABLE)
    if by_r0 is not by_jac:
        raise RuntimeError(f"R0 ({by_r0.value}) and Jacobian ({by_jac.value}) disagree")
    return by_r0


def replacement_numbers(states: np.ndarray, params: ModelParams) -> tuple[np.ndarray, np.ndarray]:
    """Replacement numbers ``(r1, r2)`` for each row of ``states``."""
    x = np.asarray(states, dtype=float)
    p = params
    r1 = (p.beta1 * x[..., SS] + p.a * x[..., IS] + p.b * x[..., RS]) / (p.n_pop * (p.nu1 + p.mu))
    r2 = (p.beta2 * x[..., SS] + p.c * x[..., SI] + p.d * x[..., SR]) / (p.n_pop * (p.nu2 + p.mu))
    return r1, r2


def crossover_times(times: np.ndarray, r1: np.ndarray, r2: np.ndarray) -> list[float]:
    """Times where ``r1 - r2`` changes sign, located by linear interpolation."""
    diff = np.asarray(r1) - np.asarray(r2)
    t = np.asarray(times, dtype=float)
    out = []
    sign = np.sign(diff)
    last = None
    for i in range(len(diff)):
        if sign[i] == 0:
            continue
        if last is not None and sign[i] != sign[last]:
            d0, d1 = diff[last], diff[i]
            frac = d0 / (d0 - d1)
            out.append(float(t[last] + frac * (t[i] - t[last])))
        last = i
    return out


class Regime(enum.Enum):
    COMPETITIVE_EXCLUSION = "CompetitiveExclusion"
    SUPERINFECTION_BY_1 = "SuperinfectionBy1"
    SUPERINFECTION_BY_2 = "SuperinfectionBy2"
    COCIRCULATION = "Cocirculation"
    GENERAL = "General"


def classify_regime(params, rel_tol: float = DEFAULT_REGIME_TOL) -> Regime:
    """Ecological regime implied by the cross-infection rates.

    A rate counts as zero when below ``rel_tol * max(beta1, beta2)``.
    ``params`` may be anything with ``beta1, beta2, a, b, c, d`` attributes.
    """
    if not 0 < rel_tol < 1:
        raise ValueError("rel_tol must lie in (0, 1)")
    eps = rel_tol * max(params.beta1, params.beta2)
    za, zb, zc, zd = (params.a < eps, params.b < eps, params.c < eps, params.d < eps)
    if za and zb and zc and zd:
        return Regime.COMPETITIVE_EXCLUSION
    if zc and zd and not za and not zb:
        return Regime.SUPERINFECTION_BY_1
    if za and zb and not zc and not zd:
        return Regime.SUPERINFECTION_BY_2
    if za and zc and not zb and not zd:
        return Regime.COCIRCULATION
    return Regime.GENERAL
