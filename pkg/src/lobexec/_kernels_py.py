"""Pure-Python fallback for the replay-engine kernels.

Twin of ``_kernels.pyx``: same operations, same order, same branch
structure, so both backends produce bit-identical floats. Change one only
together with the other. This path is roughly two orders of magnitude
slower; it exists so the package works where the extension cannot build.
"""

import math

BACKEND = "python"

F_MICRO = 1
F_IMB_TOP = 2
F_IMB_MULTI = 4
F_VAMP_BID = 8
F_VAMP_ASK = 16
F_OFI = 32
F_BPI_CLAMP = 64
F_FIRST = 128

LIQUIDITY_EPS = 1e-9
BPI_LO = 1e-6
BPI_HI = 1e6


def decay_displacement(displacement, dt_s, half_life_s):
    """Exponential resilience: halve the displacement every half_life_s."""
    if dt_s <= 0.0:
        return displacement
    return displacement * math.pow(2.0, -(dt_s / half_life_s))


def _walk(px, sz, n, qty, displacement):
    remaining = qty
    proceeds = 0.0
    levels = 0
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
    filled = qty - remaining if qty > 0.0 else 0.0
    return filled, proceeds, levels


def sell_walk(bid_px, bid_sz, qty, displacement):
    """Walk the displaced bid ladder best-first; partial fill at the margin.

    Returns (filled_qty, proceeds, levels_consumed). Levels whose effective
    price (price + displacement) is non-positive stop the walk.
    """
    filled, proceeds, levels = _walk(bid_px, bid_sz, len(bid_px), qty, displacement)
    return float(filled), float(proceeds), levels


def side_total(sz):
    """Sum of displayed sizes over the ladder (plain forward accumulation)."""
    return float(_side_total(sz, len(sz)))


def _side_total(sz, n):
    tot = 0.0
    for i in range(n):
        tot += sz[i]
    return tot


def _indicator_row(bpx, bsz, apx, asz, n, n_multi, has_prev,
                   prev_bid_tot, prev_ask_tot, prev_mid, prev_vamp, out):
    flags = 0
    bid_top_q = bsz[0]
    ask_top_q = asz[0]
    bid_top_p = bpx[0]
    ask_top_p = apx[0]
    mid = (bid_top_p + ask_top_p) * 0.5

    bid_tot = 0.0
    bid_notional = 0.0
    bid_press = 0.0
    for i in range(n):
        q = bsz[i]
        p = bpx[i]
        bid_tot += q
        bid_notional += q * p
        d = mid - p
        if q > 0.0 and d > 0.0:
            bid_press += q / d

    ask_tot = 0.0
    ask_notional = 0.0
    ask_press = 0.0
    for i in range(n):
        q = asz[i]
        p = apx[i]
        ask_tot += q
        ask_notional += q * p
        d = p - mid
        if q > 0.0 and d > 0.0:
            ask_press += q / d

    denom = bid_top_q + ask_top_q
    if denom > 0.0:
        micro = (ask_top_p * bid_top_q + bid_top_p * ask_top_q) / denom
        imb_top = (bid_top_q - ask_top_q) / denom
    else:
        micro = mid
        imb_top = 0.0
        flags |= F_MICRO
        flags |= F_IMB_TOP

    mb = 0.0
    ma = 0.0
    for i in range(n_multi):
        mb += bsz[i]
        ma += asz[i]
    denom = mb + ma
    if denom > 0.0:
        imb_multi = (mb - ma) / denom
    else:
        imb_multi = 0.0
        flags |= F_IMB_MULTI

    spread_norm = (ask_top_p - bid_top_p) / mid * 100.0

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
    vamp = (ask_mean + bid_mean) * 0.5

    ofi = 0.0
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

    delta_mid = 0.0
    delta_vamp = 0.0
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
    return flags, bid_tot, ask_tot, mid, vamp


def indicator_row(bpx, bsz, apx, asz, n_multi, has_prev,
                  prev_bid_tot, prev_ask_tot, prev_mid, prev_vamp, out):
    """Fill ``out[0:11]`` with the indicator vector for one snapshot.

    Returns (flags, bid_total, ask_total, mid, vamp); the last four feed the
    next call as prev_* so OFI and the deltas can difference consecutive rows.
    """
    flags, bid_tot, ask_tot, mid, vamp = _indicator_row(
        bpx, bsz, apx, asz, len(bpx), n_multi, has_prev,
        prev_bid_tot, prev_ask_tot, prev_mid, prev_vamp, out)
    return flags, float(bid_tot), float(ask_tot), float(mid), float(vamp)


def fill_observation(out, bpx, bsz, apx, asz, mid, ind, time_to_go, inv_frac):
    """Assemble the 93-entry observation: px/mid, sizes, indicators, fractions."""
    n = len(bpx)
    for i in range(n):
        out[i] = bpx[i] / mid
        out[n + i] = bsz[i]
        out[2 * n + i] = apx[i] / mid
        out[3 * n + i] = asz[i]
    for i in range(len(ind)):
        out[4 * n + i] = ind[i]
    out[4 * n + len(ind)] = time_to_go
    out[4 * n + len(ind) + 1] = inv_frac


def run_episode_core(ts, bpx, bsz, apx, asz, start, length,
                     initial_btc, target_fraction, trade_fraction,
                     impact_k, size_exponent, half_life_s,
                     taker_fee, inventory_penalty,
                     mode, plan, boost_up, boost_down, threshold):
    """Run one full episode without per-step observation assembly.

    mode 0: plan holds absolute child quantities (schedule runs).
    mode 1: plan holds raw actions, clipped to [0, trade_fraction].
    mode 2: built-in threshold rule (plan unused): pace the remaining
            inventory over the remaining steps, scaled by boost_up when the
            decision-snapshot mid just ticked up and boost_down otherwise.

    Mirrors EpisodeEnv.step()/_settle() exactly; see episode_env.py.
    """
    n_levels = bpx.shape[1]
    steps = length - 1
    cash = 0.0
    inventory = initial_btc
    displacement = 0.0
    last_ts = ts[start]
    arrival_mid = (bpx[start, 0] + apx[start, 0]) * 0.5
    notional0 = initial_btc * arrival_mid
    cum_reward = 0.0
    fills = 0
    prev_dec_mid = arrival_mid
    final_mid = arrival_mid

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
                remaining_steps = float(steps - j)
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
        dt_s = float(ts[idx] - last_ts) / 1e9
        if dt_s > 0.0:
            displacement = displacement * math.pow(2.0, -(dt_s / half_life_s))
        last_ts = ts[idx]

        filled, proceeds, _levels = _walk(bpx[idx], bsz[idx], n_levels, qty, displacement)
        fee = taker_fee * proceeds
        cash += proceeds - fee
        inventory -= filled
        if filled > 0.0:
            fills += 1

        mid = (bpx[idx, 0] + apx[idx, 0]) * 0.5
        if filled > 0.0:
            dref = _side_total(bsz[idx], n_levels)
            if dref < LIQUIDITY_EPS:
                dref = LIQUIDITY_EPS
            displacement = displacement - impact_k * math.pow(filled / dref, size_exponent) * mid
        lim = 0.5 * mid
        if displacement < -lim:
            displacement = -lim
        elif displacement > lim:
            displacement = lim

        reward = ((proceeds - fee) - filled * arrival_mid) / notional0
        if j == steps - 1:
            final_mid = mid
            reward += (inventory * final_mid - inventory * arrival_mid) / notional0
            resid = inventory / initial_btc - target_fraction
            if resid > 0.0:
                reward -= inventory_penalty * resid
        cum_reward += reward

    return float(cash), float(inventory), fills, float(cum_reward), float(arrival_mid), float(final_mid)
