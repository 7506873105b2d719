"""JIT-compiled numerical kernels.

State layout (index order used everywhere)::

    0 SS  1 SI  2 SR  3 IS  4 II  5 IR  6 RS  7 RI  8 RR

The second letter is the status with respect to pathogen 1, the first letter
the status with respect to pathogen 2, so pathogen-1 infectives are SI, II, RI.

Parameter layout::

    0 beta1  1 beta2  2 a  3 b  4 c  5 d  6 nu1  7 nu2  8 mu  9 n_pop
"""

import numpy as np
from numba import njit

SS, SI, SR, IS, II, IR, RS, RI, RR = range(9)
NSTATE = 9

OK = 0
STEP_TOO_SMALL = 1
TOO_MANY_STEPS = 2
NON_FINITE = 3
NEGATIVE_STATE = 4

# Dormand-Prince 5(4) tableau
C2, C3, C4, C5 = 1.0 / 5.0, 3.0 / 10.0, 4.0 / 5.0, 8.0 / 9.0
A21 = 1.0 / 5.0
A31, A32 = 3.0 / 40.0, 9.0 / 40.0
A41, A42, A43 = 44.0 / 45.0, -56.0 / 15.0, 32.0 / 9.0
A51, A52, A53, A54 = 19372.0 / 6561.0, -25360.0 / 2187.0, 64448.0 / 6561.0, -212.0 / 729.0
A61, A62, A63, A64, A65 = (9017.0 / 3168.0, -355.0 / 33.0, 46732.0 / 5247.0,
                           49.0 / 176.0, -5103.0 / 18656.0)
A71, A73, A74, A75, A76 = (35.0 / 384.0, 500.0 / 1113.0, 125.0 / 192.0,
                           -2187.0 / 6784.0, 11.0 / 84.0)
E1, E3, E4, E5, E6, E7 = (71.0 / 57600.0, -71.0 / 16695.0, 71.0 / 1920.0,
                          -17253.0 / 339200.0, 22.0 / 525.0, -1.0 / 40.0)
# continuous extension (Hairer & Wanner, dense output of order 4)
D1 = -12715105075.0 / 11282082432.0
D3 = 87487479700.0 / 32700410799.0
D4 = -10690763975.0 / 1880347072.0
D5 = 701980252875.0 / 199316789632.0
D6 = -1453857185.0 / 822651844.0
D7 = 69997945.0 / 29380423.0


@njit(cache=True)
def rhs_into(y, p, out):
    beta1, beta2, a, b, c, d, nu1, nu2, mu, n = (p[0], p[1], p[2], p[3], p[4],
                                                 p[5], p[6], p[7], p[8], p[9])
    lam1 = (y[SI] + y[II] + y[RI]) / n
    lam2 = (y[IS] + y[II] + y[IR]) / n
    inf_ss1 = beta1 * lam1 * y[SS]
    inf_ss2 = beta2 * lam2 * y[SS]
    inf_is = a * lam1 * y[IS]
    inf_rs = b * lam1 * y[RS]
    inf_si = c * lam2 * y[SI]
    inf_sr = d * lam2 * y[SR]
    out[SS] = mu * n - inf_ss1 - inf_ss2 - mu * y[SS]
    out[SI] = inf_ss1 - inf_si - (nu1 + mu) * y[SI]
    out[SR] = nu1 * y[SI] - inf_sr - mu * y[SR]
    out[IS] = inf_ss2 - inf_is - (nu2 + mu) * y[IS]
    out[II] = inf_si + inf_is - (nu1 + nu2 + mu) * y[II]
    out[IR] = inf_sr + nu1 * y[II] - (nu2 + mu) * y[IR]
    out[RS] = nu2 * y[IS] - inf_rs - mu * y[RS]
    out[RI] = inf_rs + nu2 * y[II] - (nu1 + mu) * y[RI]
    out[RR] = nu1 * y[RI] + nu2 * y[IR] - mu * y[RR]


@njit(cache=True)
def incidence_flow(y, p):
    """Total rate of new infections (all six infection channels)."""
    n = p[9]
    lam1 = (max(y[SI], 0.0) + max(y[II], 0.0) + max(y[RI], 0.0)) / n
    lam2 = (max(y[IS], 0.0) + max(y[II], 0.0) + max(y[IR], 0.0)) / n
    return (lam1 * (p[0] * max(y[SS], 0.0) + p[2] * max(y[IS], 0.0)
                    + p[3] * max(y[RS], 0.0))
            + lam2 * (p[1] * max(y[SS], 0.0) + p[4] * max(y[SI], 0.0)
                      + p[5] * max(y[SR], 0.0)))


@njit(cache=True)
def _err_norm(y0, y1, err, rtol, atol):
    acc = 0.0
    for i in range(NSTATE):
        sc = atol + rtol * max(abs(y0[i]), abs(y1[i]))
        acc += (err[i] / sc) ** 2
    return np.sqrt(acc / NSTATE)


@njit(cache=True)
def _initial_step(y0, f0, p, t0, t1, rtol, atol):
    d0 = 0.0
    d1 = 0.0
    for i in range(NSTATE):
        sc = atol + rtol * abs(y0[i])
        d0 += (y0[i] / sc) ** 2
        d1 += (f0[i] / sc) ** 2
    d0 = np.sqrt(d0 / NSTATE)
    d1 = np.sqrt(d1 / NSTATE)
    if d0 < 1e-5 or d1 < 1e-5 or not np.isfinite(d1):
        h0 = 1e-6
    else:
        h0 = 0.01 * d0 / d1
    h0 = min(h0, t1 - t0)
    y1 = y0 + h0 * f0
    f1 = np.empty(NSTATE)
    rhs_into(y1, p, f1)
    d2 = 0.0
    for i in range(NSTATE):
        sc = atol + rtol * abs(y0[i])
        d2 += ((f1[i] - f0[i]) / sc) ** 2
    d2 = np.sqrt(d2 / NSTATE) / h0
    if max(d1, d2) <= 1e-15 or not np.isfinite(max(d1, d2)):
        h1 = max(1e-6, h0 * 1e-3)
    else:
        h1 = (0.01 / max(d1, d2)) ** 0.2
    return min(100.0 * h0, h1, t1 - t0)


@njit(cache=True)
def dopri5(y0, p, t0, t1, rtol, atol, clamp, max_steps):
    """Adaptive Dormand-Prince integration from t0 to t1.

    Returns (status, times, states, conts) where ``conts[k]`` holds the five
    dense-output coefficient vectors of step k (times[k] -> times[k+1]).
    Components in (-clamp, 0) after an accepted step are set to zero. A trial
    step that lands below -clamp is rejected and retried with half the step;
    NEGATIVE_STATE is returned only once the step cannot shrink further.
    """
    cap = 256
    times = np.empty(cap)
    states = np.empty((cap, NSTATE))
    conts = np.empty((cap, 5, NSTATE))
    times[0] = t0
    y = y0.copy()
    states[0] = y
    nacc = 0

    k1 = np.empty(NSTATE)
    k2 = np.empty(NSTATE)
    k3 = np.empty(NSTATE)
    k4 = np.empty(NSTATE)
    k5 = np.empty(NSTATE)
    k6 = np.empty(NSTATE)
    k7 = np.empty(NSTATE)
    yt = np.empty(NSTATE)
    ynew = np.empty(NSTATE)
    err = np.empty(NSTATE)

    rhs_into(y, p, k1)
    t = t0
    if t1 <= t0:
        return OK, times[:1].copy(), states[:1].copy(), conts[:0].copy()
    h = _initial_step(y, k1, p, t0, t1, rtol, atol)
    facmax = 10.0
    hmin = 1e-12 * max(1.0, abs(t1))
    nsteps = 0
    while t < t1:
        if nsteps >= max_steps:
            return TOO_MANY_STEPS, times[:nacc + 1].copy(), states[:nacc + 1].copy(), conts[:nacc].copy()
        nsteps += 1
        if t + 1.01 * h >= t1:
            h = t1 - t
        for i in range(NSTATE):
            yt[i] = y[i] + h * A21 * k1[i]
        rhs_into(yt, p, k2)
        for i in range(NSTATE):
            yt[i] = y[i] + h * (A31 * k1[i] + A32 * k2[i])
        rhs_into(yt, p, k3)
        for i in range(NSTATE):
            yt[i] = y[i] + h * (A41 * k1[i] + A42 * k2[i] + A43 * k3[i])
        rhs_into(yt, p, k4)
        for i in range(NSTATE):
            yt[i] = y[i] + h * (A51 * k1[i] + A52 * k2[i] + A53 * k3[i] + A54 * k4[i])
        rhs_into(yt, p, k5)
        for i in range(NSTATE):
            yt[i] = y[i] + h * (A61 * k1[i] + A62 * k2[i] + A63 * k3[i]
                                + A64 * k4[i] + A65 * k5[i])
        rhs_into(yt, p, k6)
        for i in range(NSTATE):
            ynew[i] = y[i] + h * (A71 * k1[i] + A73 * k3[i] + A74 * k4[i]
                                  + A75 * k5[i] + A76 * k6[i])
        rhs_into(ynew, p, k7)
        finite = True
        for i in range(NSTATE):
            err[i] = h * (E1 * k1[i] + E3 * k3[i] + E4 * k4[i] + E5 * k5[i]
                          + E6 * k6[i] + E7 * k7[i])
            if not np.isfinite(ynew[i]) or not np.isfinite(err[i]):
                finite = False
        if not finite:
            if h > hmin:
                h *= 0.25
                facmax = 1.0
                continue
            return NON_FINITE, times[:nacc + 1].copy(), states[:nacc + 1].copy(), conts[:nacc].copy()
        en = _err_norm(y, ynew, err, rtol, atol)
        if en <= 1.0:
            undershoot = False
            for i in range(NSTATE):
                if ynew[i] < -clamp:
                    undershoot = True
            if undershoot:
                if h > hmin:
                    h *= 0.5
                    facmax = 1.0
                    continue
                times[nacc + 1] = t + h
                states[nacc + 1] = ynew
                return NEGATIVE_STATE, times[:nacc + 2].copy(), states[:nacc + 2].copy(), conts[:nacc + 1].copy()
            if nacc + 1 >= cap:
                cap *= 2
                nt = np.empty(cap)
                ns = np.empty((cap, NSTATE))
                nc = np.empty((cap, 5, NSTATE))
                nt[:nacc + 1] = times[:nacc + 1]
                ns[:nacc + 1] = states[:nacc + 1]
                nc[:nacc] = conts[:nacc]
                times, states, conts = nt, ns, nc
            for i in range(NSTATE):
                ydiff = ynew[i] - y[i]
                bspl = h * k1[i] - ydiff
                conts[nacc, 0, i] = y[i]
                conts[nacc, 1, i] = ydiff
                conts[nacc, 2, i] = bspl
                conts[nacc, 3, i] = ydiff - h * k7[i] - bspl
                conts[nacc, 4, i] = h * (D1 * k1[i] + D3 * k3[i] + D4 * k4[i]
                                         + D5 * k5[i] + D6 * k6[i] + D7 * k7[i])
            clamped = False
            for i in range(NSTATE):
                if ynew[i] < 0.0:
                    ynew[i] = 0.0
                    clamped = True
            t = t + h if t + h < t1 else t1
            nacc += 1
            times[nacc] = t
            for i in range(NSTATE):
                y[i] = ynew[i]
                states[nacc, i] = ynew[i]
            if clamped:
                rhs_into(y, p, k1)
            else:
                for i in range(NSTATE):
                    k1[i] = k7[i]
            fac = 0.9 * en ** -0.2 if en > 0.0 else facmax
            h = h * min(facmax, max(0.2, fac))
            facmax = 10.0
        else:
            h = h * max(0.2, 0.9 * en ** -0.2)
            facmax = 1.0
        if h < hmin and t < t1:
            return STEP_TOO_SMALL, times[:nacc + 1].copy(), states[:nacc + 1].copy(), conts[:nacc].copy()
    return OK, times[:nacc + 1].copy(), states[:nacc + 1].copy(), conts[:nacc].copy()


@njit(cache=True)
def _dense_one(times, conts, t, out):
    nseg = conts.shape[0]
    k = np.searchsorted(times, t, side="right") - 1
    if k < 0:
        k = 0
    if k > nseg - 1:
        k = nseg - 1
    h = times[k + 1] - times[k]
    th = (t - times[k]) / h
    th1 = 1.0 - th
    for i in range(NSTATE):
        out[i] = conts[k, 0, i] + th * (conts[k, 1, i] + th1 * (
            conts[k, 2, i] + th * (conts[k, 3, i] + th1 * conts[k, 4, i])))


@njit(cache=True)
def dense_eval(times, states, conts, tq):
    out = np.empty((tq.shape[0], NSTATE))
    buf = np.empty(NSTATE)
    for j in range(tq.shape[0]):
        t = tq[j]
        if conts.shape[0] == 0:
            out[j] = states[0]
            continue
        _dense_one(times, conts, t, buf)
        out[j] = buf
    return out


@njit(cache=True)
def weekly_incidence(times, conts, p, edges, nodes, weights):
    """Gauss-Legendre quadrature of the total infection flow on each interval."""
    nw = edges.shape[0] - 1
    res = np.zeros(nw)
    buf = np.empty(NSTATE)
    for w in range(nw):
        lo = edges[w]
        hi = edges[w + 1]
        half = 0.5 * (hi - lo)
        mid = 0.5 * (hi + lo)
        acc = 0.0
        for q in range(nodes.shape[0]):
            _dense_one(times, conts, mid + half * nodes[q], buf)
            acc += weights[q] * incidence_flow(buf, p)
        res[w] = half * acc
    return res


@njit(cache=True)
def solve_incidence(y0, p, edges, rtol, atol, clamp, max_steps, nodes, weights):
    status, times, states, conts = dopri5(y0, p, edges[0], edges[-1], rtol, atol,
                                          clamp, max_steps)
    if status != OK:
        return status, np.zeros(edges.shape[0] - 1)
    return status, weekly_incidence(times, conts, p, edges, nodes, weights)


# ---------------------------------------------------------------------------
# exact stochastic simulation

NCHAN = 22
# channel -> (source compartment or -1, target compartment or -1)
CHAN_SRC = np.array([-1, 0, 1, 2, 3, 4, 5, 6, 7, 8,
                     SS, SS, IS, RS, SI, SR,
                     SI, II, RI, IS, II, IR], dtype=np.int64)
CHAN_DST = np.array([SS, -1, -1, -1, -1, -1, -1, -1, -1, -1,
                     SI, IS, II, RI, II, IR,
                     SR, IR, RR, RS, RI, RR], dtype=np.int64)
INFECTION_CHANNELS = np.arange(10, 16)


@njit(cache=True)
def propensities(x, p, out):
    beta1, beta2, a, b, c, d, nu1, nu2, mu, n = (p[0], p[1], p[2], p[3], p[4],
                                                 p[5], p[6], p[7], p[8], p[9])
    lam1 = (x[SI] + x[II] + x[RI]) / n
    lam2 = (x[IS] + x[II] + x[IR]) / n
    out[0] = mu * n
    for k in range(NSTATE):
        out[1 + k] = mu * x[k]
    out[10] = beta1 * lam1 * x[SS]
    out[11] = beta2 * lam2 * x[SS]
    out[12] = a * lam1 * x[IS]
    out[13] = b * lam1 * x[RS]
    out[14] = c * lam2 * x[SI]
    out[15] = d * lam2 * x[SR]
    out[16] = nu1 * x[SI]
    out[17] = nu1 * x[II]
    out[18] = nu1 * x[RI]
    out[19] = nu2 * x[IS]
    out[20] = nu2 * x[II]
    out[21] = nu2 * x[IR]


@njit(cache=True)
def _seed(seed):
    np.random.seed(seed)


@njit(cache=True)
def _pick(prop, total, u):
    target = u * total
    acc = 0.0
    for k in range(NCHAN):
        acc += prop[k]
        if target < acc and prop[k] > 0.0:
            return k
    for k in range(NCHAN - 1, -1, -1):
        if prop[k] > 0.0:
            return k
    return -1


@njit(cache=True)
def _apply(x, k):
    s = CHAN_SRC[k]
    d = CHAN_DST[k]
    if s >= 0:
        x[s] -= 1
    if d >= 0:
        x[d] += 1


@njit(cache=True)
def gillespie_full(x0, p, t_end, seed, max_events):
    """Direct-method run recording every event.

    Returns (times, states, channels, truncated) with ``states[0] = x0`` and
    ``channels[k]`` the channel fired at ``times[k + 1]``.
    """
    _seed(seed)
    cap = 1024
    times = np.empty(cap)
    states = np.empty((cap, NSTATE), dtype=np.int64)
    chans = np.empty(cap, dtype=np.int8)
    x = x0.copy()
    times[0] = 0.0
    states[0] = x
    prop = np.empty(NCHAN)
    t = 0.0
    n = 0
    truncated = False
    while True:
        propensities(x, p, prop)
        total = prop.sum()
        if total <= 0.0:
            break
        t += -np.log(1.0 - np.random.random()) / total
        if t > t_end:
            break
        if n >= max_events:
            truncated = True
            break
        k = _pick(prop, total, np.random.random())
        _apply(x, k)
        n += 1
        if n >= cap:
            cap *= 2
            nt = np.empty(cap)
            ns = np.empty((cap, NSTATE), dtype=np.int64)
            nc = np.empty(cap, dtype=np.int8)
            nt[:n] = times[:n]
            ns[:n] = states[:n]
            nc[:n - 1] = chans[:n - 1]
            times, states, chans = nt, ns, nc
        times[n] = t
        states[n] = x
        chans[n - 1] = k
    return times[:n + 1].copy(), states[:n + 1].copy(), chans[:n].copy(), truncated


@njit(cache=True)
def gillespie_grid(x0, p, grid, seed):
    """Direct-method run recording only the state at each grid time and the
    number of infection events between consecutive grid times."""
    _seed(seed)
    ng = grid.shape[0]
    out = np.empty((ng, NSTATE), dtype=np.int64)
    inf = np.zeros(max(ng - 1, 0), dtype=np.int64)
    x = x0.copy()
    prop = np.empty(NCHAN)
    t = 0.0
    g = 0
    while g < ng and grid[g] <= t:
        out[g] = x
        g += 1
    while g < ng:
        propensities(x, p, prop)
        total = prop.sum()
        if total <= 0.0:
            t_next = np.inf
        else:
            t_next = t - np.log(1.0 - np.random.random()) / total
        while g < ng and grid[g] < t_next:
            out[g] = x
            g += 1
        if g >= ng:
            break
        k = _pick(prop, total, np.random.random())
        _apply(x, k)
        if 10 <= k <= 15 and g >= 1:
            inf[g - 1] += 1
        t = t_next
    return out, inf
