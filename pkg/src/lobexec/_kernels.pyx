# cython: boundscheck=False, wraparound=False, cdivision=True
"""Compiled kernels for the replay-engine hot loop.

Every formula here has a twin in ``_kernels_py.py``. The two backends must
stay bit-identical: same operations, same order, same branch structure.
Change one only together with the other.
"""

from libc.math cimport pow
from libc.stdint cimport int64_t

BACKEND = "cython"

# Degeneracy flag bits, mirrored in _kernels_py.py and indicators.py.
cdef enum:
    F_MICRO = 1
    F_IMB_TOP = 2
    F_IMB_MULTI = 4
    F_VAMP_BID = 8
    F_VAMP_ASK = 16
    F_OFI = 32
    F_BPI_CLAMP = 64
    F_FIRST = 128

cdef double LIQUIDITY_EPS = 1e-9
cdef double BPI_LO = 1e-6
cdef double BPI_HI = 1e6

# Python-visible mirrors of the C-level constants above.
globals().update(
    F_MICRO=F_MICRO, F_IMB_TOP=F_IMB_TOP, F_IMB_MULTI=F_IMB_MULTI,
    F_VAMP_BID=F_VAMP_BID, F_VAMP_ASK=F_VAMP_ASK, F_OFI=F_OFI,
    F_BPI_CLAMP=F_BPI_CLAMP, F_FIRST=F_FIRST,
    LIQUIDITY_EPS=LIQUIDITY_EPS, BPI_LO=BPI_LO, BPI_HI=BPI_HI,
)


def decay_displacement(double displacement, double dt_s, double half_life_s):
    """Exponential resilience: halve the displacement every half_life_s."""
    if dt_s <= 0.0:
        return displacement
    return displacement * pow(2.0, -(dt_s / half_life_s))


cdef int _walk(const double* px, const double* sz, Py_ssize_t n, double qty,
               double displacement, double* out_filled, double* out_proceeds) noexcept nogil:
    cdef double remaining = qty
    cdef double proceeds = 0.0
    cdef double eff, take, s
    cdef int levels = 0
    cdef Py_ssize_t i
    if qty > 0.0:
        for i in range(n):
            s = sz[i]
            if s <= 0.0:
                continue
            eff = px[i] + displacement
            if eff <= 0.0:
                break
            take = s if s < remaining else remaining
            proceeds += take * eff
            levels += 1
            remaining -= take
            if remaining <= 0.0:
                break
    else:
        remaining = 0.0
    out_filled[0] = qty - remaining if qty > 0.0 else 0.0
    out_proceeds[0] = proceeds
    return levels


def sell_walk(double[::1] bid_px, double[::1] bid_sz, double qty, double displacement):
    """Walk the displaced bid ladder best-first; partial fill at the margin.

    Returns (filled_qty, proceeds, levels_consumed). Levels whose effective
    price (price + displacement) is non-positive stop the walk.
    """
    cdef double filled = 0.0, proceeds = 0.0
    cdef int levels = _walk(&bid_px[0], &bid_sz[0], bid_px.shape[0], qty,
                            displacement, &filled, &proceeds)
    return filled, proceeds, levels


cdef double _side_total(const double* sz, Py_ssize_t n) noexcept nogil:
    cdef double tot = 0.0
    cdef Py_ssize_t i
    for i in range(n):
        tot += sz[i]
    return tot


def side_total(double[::1] sz):
    """Sum of displayed sizes over the ladder (plain forward accumulation)."""
    return _side_total(&sz[0], sz.shape[0])


cdef int _indicator_row(const double* bpx, const double* bsz,
                        const double* apx, const double* asz,
                        Py_ssize_t n, Py_ssize_t n_multi,
                        bint has_prev, double prev_bid_tot, double prev_ask_tot,
                        double prev_mid, double prev_vamp,
                        double* out, double* state) noexcept nogil:
    cdef int flags = 0
    cdef Py_ssize_t i
    cdef double q, p, d
    cdef double bid_top_q = bsz[0], ask_top_q = asz[0]
    cdef double bid_top_p = bpx[0], ask_top_p = apx[0]
    cdef double mid = (bid_top_p + ask_top_p) * 0.5

    cdef double bid_tot = 0.0, bid_notional = 0.0, bid_press = 0.0
    for i in range(n):
        q = bsz[i]
        p = bpx[i]
        bid_tot += q
        bid_notional += q * p
        d = mid - p
        if q > 0.0 and d > 0.0:
            bid_press += q / d

    cdef double ask_tot = 0.0, ask_notional = 0.0, ask_press = 0.0
    for i in range(n):
        q = asz[i]
        p = apx[i]
        ask_tot += q
        ask_notional += q * p
        d = p - mid
        if q > 0.0 and d > 0.0:
            ask_press += q / d

    cdef double denom = bid_top_q + ask_top_q
    cdef double micro, imb_top
    if denom > 0.0:
        micro = (ask_top_p * bid_top_q + bid_top_p * ask_top_q) / denom
        imb_top = (bid_top_q - ask_top_q) / denom
    else:
        micro = mid
        imb_top = 0.0
        flags |= F_MICRO
        flags |= F_IMB_TOP

    cdef double mb = 0.0, ma = 0.0, imb_multi
    for i in range(n_multi):
        mb += bsz[i]
        ma += asz[i]
    denom = mb + ma
    if denom > 0.0:
        imb_multi = (mb - ma) / denom
    else:
        imb_multi = 0.0
        flags |= F_IMB_MULTI

    cdef double spread_norm = (ask_top_p - bid_top_p) / mid * 100.0

    cdef double bid_mean, ask_mean
    if bid_tot > 0.0:
        bid_mean = bid_notional / bid_tot
    else:
        bid_mean = bid_top_p
        flags |= F_VAMP_BID
    if ask_tot > 0.0:
        ask_mean = ask_notional / ask_tot
    else:
        ask_mean = ask_top_p
        flags |= F_VAMP_ASK
    cdef double vamp = (ask_mean + bid_mean) * 0.5

    cdef double ofi = 0.0, dqb, dqa
    if has_prev:
        dqb = bid_tot - prev_bid_tot
        dqa = ask_tot - prev_ask_tot
        denom = dqb + dqa
        if denom != 0.0:
            ofi = (dqb - dqa) / denom
            if ofi > 1.0:
                ofi = 1.0
                flags |= F_OFI
            elif ofi < -1.0:
                ofi = -1.0
                flags |= F_OFI
        else:
            ofi = 0.0
            if dqb != 0.0 or dqa != 0.0:
                flags |= F_OFI
    else:
        flags |= F_FIRST

    cdef double bpi
    if ask_press > 0.0:
        bpi = bid_press / ask_press
    elif bid_press > 0.0:
        bpi = BPI_HI
        flags |= F_BPI_CLAMP
    else:
        bpi = 1.0
        flags |= F_BPI_CLAMP
    if bpi < BPI_LO:
        bpi = BPI_LO
        flags |= F_BPI_CLAMP
    elif bpi > BPI_HI:
        bpi = BPI_HI
        flags |= F_BPI_CLAMP

    cdef double delta_mid = 0.0, delta_vamp = 0.0
    if has_prev:
        delta_mid = mid - prev_mid
        delta_vamp = vamp - prev_vamp

    out[0] = micro
    out[1] = imb_top
    out[2] = imb_multi
    out[3] = spread_norm
    out[4] = bid_notional
    out[5] = ask_notional
    out[6] = vamp
    out[7] = ofi
    out[8] = bpi
    out[9] = delta_mid
    out[10] = delta_vamp

    state[0] = bid_tot
    state[1] = ask_tot
    state[2] = mid
    state[3] = vamp
    return flags


def indicator_row(double[::1] bpx, double[::1] bsz, double[::1] apx, double[::1] asz,
                  Py_ssize_t n_multi, bint has_prev,
                  double prev_bid_tot, double prev_ask_tot,
                  double prev_mid, double prev_vamp,
                  double[::1] out):
    """Fill ``out[0:11]`` with the indicator vector for one snapshot.

    Returns (flags, bid_total, ask_total, mid, vamp); the last four feed the
    next call as prev_* so OFI and the deltas can difference consecutive rows.
    """
    cdef double state[4]
    cdef int flags = _indicator_row(&bpx[0], &bsz[0], &apx[0], &asz[0],
                                    bpx.shape[0], n_multi, has_prev,
                                    prev_bid_tot, prev_ask_tot, prev_mid, prev_vamp,
                                    &out[0], state)
    return flags, state[0], state[1], state[2], state[3]


def fill_observation(double[::1] out, double[::1] bpx, double[::1] bsz,
                     double[::1] apx, double[::1] asz, double mid,
                     double[::1] ind, double time_to_go, double inv_frac):
    """Assemble the 93-entry observation: px/mid, sizes, indicators, fractions."""
    cdef Py_ssize_t n = bpx.shape[0]
    cdef Py_ssize_t i
    for i in range(n):
        out[i] = bpx[i] / mid
        out[n + i] = bsz[i]
        out[2 * n + i] = apx[i] / mid
        out[3 * n + i] = asz[i]
    for i in range(ind.shape[0]):
        out[4 * n + i] = ind[i]
    out[4 * n + ind.shape[0]] = time_to_go
    out[4 * n + ind.shape[0] + 1] = inv_frac


def run_episode_core(int64_t[::1] ts,
                     double[:, ::1] bpx, double[:, ::1] bsz,
                     double[:, ::1] apx, double[:, ::1] asz,
                     Py_ssize_t start, Py_ssize_t length,
                     double initial_btc, double target_fraction, double trade_fraction,
                     double impact_k, double size_exponent, double half_life_s,
                     double taker_fee, double inventory_penalty,
                     int mode, double[::1] plan,
                     double boost_up, double boost_down, double threshold):
    """Run one full episode without per-step Python overhead.

    mode 0: plan holds absolute child quantities (schedule runs).
    mode 1: plan holds raw actions, clipped to [0, trade_fraction].
    mode 2: built-in threshold rule (plan unused): pace the remaining
            inventory over the remaining steps, scaled by boost_up when the
            decision-snapshot mid just ticked up and boost_down otherwise.

    Mirrors EpisodeEnv.step()/_settle() exactly; see episode_env.py.
    """
    cdef Py_ssize_t n_levels = bpx.shape[1]
    cdef Py_ssize_t steps = length - 1
    cdef Py_ssize_t j, idx
    cdef double cash = 0.0
    cdef double inventory = initial_btc
    cdef double displacement = 0.0
    cdef int64_t last_ts = ts[start]
    cdef double arrival_mid = (bpx[start, 0] + apx[start, 0]) * 0.5
    cdef double notional0 = initial_btc * arrival_mid
    cdef double cum_reward = 0.0
    cdef long fills = 0
    cdef double prev_dec_mid = arrival_mid
    cdef double dec_mid, delta_mid, qty, action, pace, remaining_steps
    cdef double dt_s, mid, dref, filled, proceeds, fee, reward, lim, target_btc
    cdef double final_mid = arrival_mid

    target_btc = target_fraction * initial_btc

    for j in range(steps):
        # decision made while observing snapshot start+j ...
        if mode == 0:
            qty = plan[j]
            if qty > inventory:
                qty = inventory
            if qty < 0.0:
                qty = 0.0
        else:
            if mode == 1:
                action = plan[j]
            else:
                dec_mid = (bpx[start + j, 0] + apx[start + j, 0]) * 0.5
                delta_mid = dec_mid - prev_dec_mid
                prev_dec_mid = dec_mid
                remaining_steps = <double>(steps - j)
                pace = inventory - target_btc
                if pace < 0.0:
                    pace = 0.0
                pace /= remaining_steps
                if delta_mid > threshold:
                    pace *= boost_up
                else:
                    pace *= boost_down
                if inventory > 0.0:
                    action = pace / inventory
                else:
                    action = 0.0
            if action < 0.0:
                action = 0.0
            elif action > trade_fraction:
                action = trade_fraction
            qty = action * inventory

        # ... settles one tick later against snapshot start+j+1
        idx = start + j + 1
        dt_s = (<double>(ts[idx] - last_ts)) / 1e9
        if dt_s > 0.0:
            displacement = displacement * pow(2.0, -(dt_s / half_life_s))
        last_ts = ts[idx]

        filled = 0.0
        proceeds = 0.0
        _walk(&bpx[idx, 0], &bsz[idx, 0], n_levels, qty, displacement,
              &filled, &proceeds)
        fee = taker_fee * proceeds
        cash += proceeds - fee
        inventory -= filled
        if filled > 0.0:
            fills += 1

        mid = (bpx[idx, 0] + apx[idx, 0]) * 0.5
        if filled > 0.0:
            dref = _side_total(&bsz[idx, 0], n_levels)
            if dref < LIQUIDITY_EPS:
                dref = LIQUIDITY_EPS
            displacement = displacement - impact_k * pow(filled / dref, size_exponent) * mid
        lim = 0.5 * mid
        if displacement < -lim:
            displacement = -lim
        elif displacement > lim:
            displacement = lim

        reward = ((proceeds - fee) - filled * arrival_mid) / notional0
        if j == steps - 1:
            final_mid = mid
            reward += (inventory * final_mid - inventory * arrival_mid) / notional0
            pace = inventory / initial_btc - target_fraction
            if pace > 0.0:
                reward -= inventory_penalty * pace
        cum_reward += reward

    return cash, inventory, fills, cum_reward, arrival_mid, final_mid
