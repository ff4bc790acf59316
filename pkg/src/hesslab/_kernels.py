"""Scalar physics and the fixed-step episode loop.

Everything here is written in the numba-compatible subset: scalars, flat
float64 parameter vectors indexed by the module constants below, and
preallocated output arrays.  Public, typed wrappers live in the domain
modules (``plant``, ``storage``, ``aging``, ``ems``); this file is the
single implementation they all call.
"""

import math

import numpy as np

from ._jit import njit

# ---------------------------------------------------------------------------
# flat parameter vector layout
# ---------------------------------------------------------------------------
P_MASS = 0
P_MEFF = 1
P_RWHL = 2
P_GEAR = 3
P_C0 = 4
P_C1 = 5
P_C2 = 6
P_JV = 7
P_HCG = 8  # m
P_BW = 9  # m
P_BRAKE_DIST = 10
P_G = 11
P_TMAX = 12
P_TMIN = 13
P_PMAX = 14
P_KP = 15
P_KI = 16
P_FF_GEAR = 17  # torque ratio applied to the feedforward torque
P_ETA_ACDC = 18
P_ETA_DCDC = 19
P_DCDC_RATED = 20
P_DCDC_MAP = 21  # 1.0 -> use the dcdc map tables
P_BAT_QNOM = 22
P_BAT_SOC_MIN = 23
P_BAT_SOC_MAX = 24
P_BAT_TEMP = 25
P_CAP_C = 26
P_CAP_UMAX = 27
P_CAP_R = 28
P_CAP_SOV_MIN = 29
P_CAP_SOV_MAX = 30
P_AG_ALPHA = 31
P_AG_BETA = 32
P_AG_DELTA = 33
P_AG_Z = 34
P_AG_EA = 35
P_AG_RG = 36
P_AG_SOC_SCALE = 37  # 100 for percent, 1 for fraction
P_W_E = 38
P_BIAS = 39
P_EBAT_NORM = 40
P_ECAP_NORM = 41
P_SIGMA_NORM = 42
P_DT = 43
P_NSUB = 44
P_HAS_CAP = 45
P_H1_POWER_SCALE = 46
N_PARAMS = 47

# strategy codes
S_BASELINE = 0
S_THRESHOLD = 1
S_HEURISTIC1 = 2
S_HEURISTIC2 = 3
S_QLEARNING = 4

# state vector layout
X_V = 0
X_INTEG = 1
X_SOC = 2
X_AH = 3
X_QLOSS = 4
X_SOV = 5
X_DIST = 6
X_TIME = 7
N_STATE = 8

# trace columns
C_T = 0
C_VTGT = 1
C_V = 2
C_PEDAL_ACC = 3
C_PEDAL_BRK = 4
C_TEM = 5
C_WEM = 6
C_PEM = 7
C_PBAT = 8
C_PCAP = 9
C_PBAT_T = 10
C_PCAP_T = 11
C_IBAT = 12
C_UBAT = 13
C_ICAP = 14
C_UCAP = 15
C_SOC = 16
C_SOV = 17
C_SIGMA = 18
C_REWARD = 19
C_AH = 20
C_QLOSS = 21
C_EMECH = 22
C_ERES = 23
C_EFRIC = 24
C_DKE = 25
C_EREFUSED = 26
C_STATE = 27
C_ACTION = 28
C_DISCHG = 29
C_CHG = 30
C_EVENTS = 31
C_EBAT = 32
C_ECAP = 33
C_DIST = 34
C_PEM_PLANT = 35
N_COLS = 36

# event bits
EV_CAP_CLAMP = 1
EV_DCDC_REROUTE = 2
EV_DCDC_LIMIT = 4
EV_REGEN_REFUSED = 8
EV_BAT_DEPLETED = 16
EV_BAT_INFEASIBLE = 32
EV_CAP_INFEASIBLE = 64
EV_FRICTION = 128

# run status
RUN_OK = 0
RUN_STOPPED = 1


# ---------------------------------------------------------------------------
# interpolation
# ---------------------------------------------------------------------------
@njit
def interp1(xb, yb, x):
    n = xb.shape[0]
    if x <= xb[0]:
        return yb[0]
    if x >= xb[n - 1]:
        return yb[n - 1]
    i = np.searchsorted(xb, x) - 1
    t = (x - xb[i]) / (xb[i + 1] - xb[i])
    return yb[i] + t * (yb[i + 1] - yb[i])


@njit
def interp2(xb, yb, table, x, y):
    """Bilinear interpolation on a rectilinear grid, clamped at the edges."""
    nx = xb.shape[0]
    ny = yb.shape[0]
    if x < xb[0]:
        x = xb[0]
    elif x > xb[nx - 1]:
        x = xb[nx - 1]
    if y < yb[0]:
        y = yb[0]
    elif y > yb[ny - 1]:
        y = yb[ny - 1]
    i = np.searchsorted(xb, x) - 1
    if i < 0:
        i = 0
    elif i > nx - 2:
        i = nx - 2
    j = np.searchsorted(yb, y) - 1
    if j < 0:
        j = 0
    elif j > ny - 2:
        j = ny - 2
    tx = (x - xb[i]) / (xb[i + 1] - xb[i])
    ty = (y - yb[j]) / (yb[j + 1] - yb[j])
    return ((1.0 - tx) * (1.0 - ty) * table[i, j] + tx * (1.0 - ty) * table[i + 1, j]
            + (1.0 - tx) * ty * table[i, j + 1] + tx * ty * table[i + 1, j + 1])


# ---------------------------------------------------------------------------
# driver / electric machine / vehicle
# ---------------------------------------------------------------------------
@njit
def torque_max(w, tmax, pmax):
    aw = abs(w)
    if aw * tmax > pmax:
        return pmax / aw
    return tmax


@njit
def torque_min(w, tmin, pmax):
    aw = abs(w)
    if -aw * tmin > pmax:
        return -pmax / aw
    return tmin


@njit
def feedforward_torque(accel, v, grade, prm):
    r = prm[P_RWHL]
    road = prm[P_C0] + prm[P_C1] * v + prm[P_C2] * v * v
    road += prm[P_MASS] * prm[P_G] * math.sin(grade)
    return accel * prm[P_JV] / r + r * road


@njit
def feedforward(t1, t_hi, t_lo, prm):
    if t1 >= 0.0:
        return t1 / t_hi
    m = prm[P_MASS]
    w = (1.0 - prm[P_BRAKE_DIST]) - prm[P_HCG] / (m * prm[P_G] * prm[P_RWHL] * prm[P_BW])
    return w * t1 / (-t_lo)


@njit
def pedals(u):
    acc = 0.0
    brk = 0.0
    if u > 0.0:
        acc = min(1.0, u)
    elif u < 0.0:
        brk = min(1.0, -u)
    return acc, brk


@njit
def em_power(w, t, eta):
    p = w * t
    if p >= 0.0:
        return p / eta
    return p * eta


@njit
def em_eta(w, t, sp_bp, tq_bp, eta_tab):
    return interp2(sp_bp, tq_bp, eta_tab, abs(w), abs(t))


@njit
def resist_force(v, grade, prm):
    return (prm[P_C0] + prm[P_C1] * v + prm[P_C2] * v * v
            + prm[P_MASS] * prm[P_G] * math.sin(grade))


@njit
def vehicle_advance(v, pedal_acc, pedal_brk, grade, dt, nsub, prm, sp_bp, tq_bp, eta_tab):
    """Advance speed over one control step with ``nsub`` Euler sub-steps.

    Returns (v_new, mean EM torque, mean EM speed, electrical energy J,
    mechanical energy J, resistance energy J, friction energy J, dKE J).
    Mechanical and resistance work use the sub-step mid speed, which makes
    the work/kinetic-energy balance exact for the Euler update.
    """
    r = prm[P_RWHL]
    gear = prm[P_GEAR]
    meff = prm[P_MEFF]
    h = dt / nsub
    e_elec = 0.0
    e_mech = 0.0
    e_res = 0.0
    e_fric = 0.0
    t_sum = 0.0
    w_sum = 0.0
    v0 = v
    for _ in range(nsub):
        w = v / r * gear
        t_em = (pedal_acc * torque_max(w, prm[P_TMAX], prm[P_PMAX])
                + pedal_brk * torque_min(w, prm[P_TMIN], prm[P_PMAX]))
        f_trac = t_em * gear / r
        f_res = resist_force(v, grade, prm)
        if v <= 0.0 and f_trac <= f_res:
            # held at rest: static resistance balances traction
            t_sum += t_em
            continue
        v_new = v + (f_trac - f_res) / meff * h
        if v_new < 0.0:
            v_new = 0.0
        v_mid = 0.5 * (v + v_new)
        w_mid = v_mid / r * gear
        e_mech += f_trac * v_mid * h
        e_res += f_res * v_mid * h
        e_fric += (f_trac - f_res) * v_mid * h - 0.5 * meff * (v_new * v_new - v * v)
        eta = em_eta(w_mid, t_em, sp_bp, tq_bp, eta_tab)
        e_elec += em_power(w_mid, t_em, eta) * h
        t_sum += t_em
        w_sum += w_mid
        v = v_new
    dke = 0.5 * meff * (v * v - v0 * v0)
    return v, t_sum / nsub, w_sum / nsub, e_elec, e_mech, e_res, e_fric, dke


# ---------------------------------------------------------------------------
# storage
# ---------------------------------------------------------------------------
@njit
def solve_current(p, u_oc, r):
    """Physical root of r*i^2 - u_oc*i + p = 0; NaN when infeasible."""
    if p == 0.0:
        return 0.0
    disc = u_oc * u_oc - 4.0 * r * p
    if disc < 0.0:
        return math.nan
    # conjugate form of (u - sqrt(disc)) / 2r, stable for small r*p
    return 2.0 * p / (u_oc + math.sqrt(disc))


@njit
def power_at_current(i, u_oc, r):
    return u_oc * i - r * i * i


@njit
def bus_to_terminal(p, eff):
    if p >= 0.0:
        return p / eff
    return p * eff


@njit
def terminal_to_bus(p, eff):
    if p >= 0.0:
        return p * eff
    return p / eff


@njit
def discharge_limit(u_oc, r, frac, frac_min, charge_per_unit, dt):
    """Max terminal discharge power keeping the state above ``frac_min``."""
    if frac <= frac_min:
        return 0.0
    i_b = (frac - frac_min) * charge_per_unit / dt
    if r > 0.0:
        i_peak = u_oc / (2.0 * r)
        if i_b > i_peak:
            i_b = i_peak
    return power_at_current(i_b, u_oc, r)


@njit
def charge_limit(u_oc, r, frac, frac_max, charge_per_unit, dt):
    """Most negative terminal power keeping the state below ``frac_max``."""
    if frac >= frac_max:
        return 0.0
    i_b = (frac - frac_max) * charge_per_unit / dt
    return power_at_current(i_b, u_oc, r)


@njit
def dcdc_eta(p_bus, u_oc, prm, pw_bp, cur_bp, dcdc_tab):
    if prm[P_DCDC_MAP] > 0.5:
        ap = abs(p_bus)
        return interp2(pw_bp, cur_bp, dcdc_tab, ap, ap / u_oc)
    return prm[P_ETA_DCDC]


# ---------------------------------------------------------------------------
# aging
# ---------------------------------------------------------------------------
@njit
def severity(soc, i_c, temp_c, alpha, beta, delta, ea, rg):
    return (alpha * soc + beta) * math.exp((-ea + delta * i_c) / (rg * (273.15 + temp_c)))


@njit
def loss_increment(q_before, sigma, d_ah, z):
    if d_ah <= 0.0:
        return q_before
    ah_eq = 0.0
    if q_before > 0.0:
        ah_eq = (q_before / sigma) ** (1.0 / z)
    # the round trip through ah_eq can lose an ulp; loss never decreases
    return max(q_before, sigma * (ah_eq + d_ah) ** z)


# ---------------------------------------------------------------------------
# energy management
# ---------------------------------------------------------------------------
@njit
def split_threshold(p_em, dischg, chg):
    if p_em >= dischg:
        p_cap = p_em - dischg
    elif p_em <= chg:
        p_cap = p_em - chg
    else:
        p_cap = 0.0
    return p_em - p_cap, p_cap


@njit
def heuristic1(p_dmd, sov, coef, sov_min, sov_max, power_scale):
    x = p_dmd / power_scale
    if p_dmd >= 0.0 and sov > sov_min:
        k = coef[0] * sov + coef[1] * x + coef[2] * sov * x + coef[3]
        return k * p_dmd
    if p_dmd < 0.0 and sov < sov_max:
        k = coef[4] * sov + coef[5] * x + coef[6] * sov * x + coef[7]
        return k * p_dmd
    return 0.0


@njit
def heuristic2(p_dmd, sov, coef, sov_min, sov_max):
    # coef = (a_dischg, a_chg, a1_ratio, a2_ratio)
    if p_dmd > coef[0] and sov > sov_min:
        return coef[2] * p_dmd
    if p_dmd < coef[1] and sov < sov_max:
        return coef[3] * p_dmd
    return 0.0


@njit
def bin_index(x, lo, hi, n):
    if x <= lo:
        return 0
    if x >= hi:
        return n - 1
    k = int(math.floor((x - lo) / ((hi - lo) / n)))
    if k > n - 1:
        k = n - 1
    return k


@njit
def greedy_index(row):
    # np.argmax returns the first maximum: lowest flat index on ties
    return int(np.argmax(row))


@njit
def select_index(row, eps, u, rand_idx):
    if u < eps:
        return rand_idx
    return greedy_index(row)


@njit
def reward_value(e_bat, e_cap, sigma, w_e, e_bat_norm, e_cap_norm, sigma_norm, bias):
    return (-w_e * (e_bat + e_cap) / (e_bat_norm + e_cap_norm)
            - (1.0 - w_e) * sigma / sigma_norm + bias)


@njit
def q_update(q, s, a, r, s_next, mu, gamma):
    best = q[s_next, 0]
    for k in range(1, q.shape[1]):
        if q[s_next, k] > best:
            best = q[s_next, k]
    q[s, a] = (1.0 - mu) * q[s, a] + mu * (r + gamma * best)


@njit
def replay(q, states, actions, rewards, next_states, n, mu, gamma):
    for j in range(n):
        q_update(q, states[j], actions[j], rewards[j], next_states[j], mu, gamma)


# ---------------------------------------------------------------------------
# episode loop
# ---------------------------------------------------------------------------
@njit
def run_cycle(
    v_tgt, grade, prm,
    sp_bp, tq_bp, eta_tab,
    ocv_soc, ocv_v, rbat_soc, rbat_r,
    dcdc_pw, dcdc_cur, dcdc_tab,
    strategy, coef,
    qtab, grid, dis_vals, chg_vals, eps, explore_u, explore_a,
    state, trace, stop_soc,
):
    """Simulate one pass over a target-speed trace.

    ``state`` is updated in place.  ``trace`` must have at least
    ``len(v_tgt) - 1`` rows.  ``grid`` holds (p_lo, p_hi, n_p, sov_lo,
    sov_hi, n_sov).  Returns (steps completed, status).
    """
    dt = prm[P_DT]
    nsub = int(prm[P_NSUB])
    eff_ac = prm[P_ETA_ACDC]
    q_nom = prm[P_BAT_QNOM]
    c_cap = prm[P_CAP_C]
    u_max = prm[P_CAP_UMAX]
    r_cap = prm[P_CAP_R]
    sov_min = prm[P_CAP_SOV_MIN]
    sov_max = prm[P_CAP_SOV_MAX]
    has_cap = prm[P_HAS_CAP] > 0.5 and strategy != S_BASELINE
    n_p = int(grid[2])
    n_sov = int(grid[5])
    n_chg = chg_vals.shape[0]

    v = state[X_V]
    integ = state[X_INTEG]
    soc = state[X_SOC]
    ah = state[X_AH]
    qloss = state[X_QLOSS]
    sov = state[X_SOV]
    dist = state[X_DIST]
    time = state[X_TIME]

    n_steps = v_tgt.shape[0] - 1
    status = RUN_OK
    done = 0
    for k in range(n_steps):
        events = 0
        vt0 = v_tgt[k]
        vt1 = v_tgt[k + 1]
        beta = grade[k]

        # driver: feedforward on the target trace plus PI on the tracking error
        w = v / prm[P_RWHL] * prm[P_GEAR]
        t_hi = torque_max(w, prm[P_TMAX], prm[P_PMAX])
        t_lo = torque_min(w, prm[P_TMIN], prm[P_PMAX])
        t1 = feedforward_torque((vt1 - vt0) / dt, v, beta, prm) / prm[P_FF_GEAR]
        u_ff = feedforward(t1, t_hi, t_lo, prm)
        err = vt0 - v
        integ += err * dt
        u = u_ff + prm[P_KP] * err + prm[P_KI] * integ
        ped_a, ped_b = pedals(u)

        v_prev = v
        v, t_em, w_em, e_elec, e_mech, e_res, e_fric, dke = vehicle_advance(
            v, ped_a, ped_b, beta, dt, nsub, prm, sp_bp, tq_bp, eta_tab)
        if e_fric > 1e-9 * (abs(e_mech) + abs(e_res) + 1.0):
            events |= EV_FRICTION
        p_em_plant = e_elec / dt
        p_em = p_em_plant

        # device limits for this step, in bus terms
        u_bat = interp1(ocv_soc, ocv_v, soc)
        r_bat = interp1(rbat_soc, rbat_r, soc)
        eff_dc = dcdc_eta(p_em, u_bat, prm, dcdc_pw, dcdc_cur, dcdc_tab)
        eff_bat = eff_ac * eff_dc
        bat_chg_t = charge_limit(u_bat, r_bat, soc, prm[P_BAT_SOC_MAX], q_nom * 3600.0, dt)
        bat_lo = terminal_to_bus(bat_chg_t, eff_bat)
        bat_hi = terminal_to_bus(u_bat * u_bat / (4.0 * r_bat), eff_bat)
        u_cap = sov * u_max
        cap_lo = 0.0
        cap_hi = 0.0
        if has_cap:
            q_cap = c_cap * u_max
            cap_hi = terminal_to_bus(
                discharge_limit(u_cap, r_cap, sov, sov_min, q_cap, dt), eff_ac)
            cap_lo = terminal_to_bus(
                charge_limit(u_cap, r_cap, sov, sov_max, q_cap, dt), eff_ac)

        # strategy command
        s_idx = -1
        a_idx = -1
        dis_th = math.nan
        chg_th = math.nan
        if strategy == S_BASELINE:
            p_cap = 0.0
        elif strategy == S_THRESHOLD:
            dis_th = coef[0]
            chg_th = coef[1]
            _, p_cap = split_threshold(p_em, dis_th, chg_th)
        elif strategy == S_HEURISTIC1:
            p_cap = heuristic1(p_em, sov, coef, sov_min, sov_max, prm[P_H1_POWER_SCALE])
        elif strategy == S_HEURISTIC2:
            p_cap = heuristic2(p_em, sov, coef, sov_min, sov_max)
        else:
            ip = bin_index(p_em, grid[0], grid[1], n_p)
            isv = bin_index(sov, grid[3], grid[4], n_sov)
            s_idx = ip * n_sov + isv
            a_idx = select_index(qtab[s_idx], eps, explore_u[k], explore_a[k])
            dis_th = dis_vals[a_idx // n_chg]
            chg_th = chg_vals[a_idx % n_chg]
            _, p_cap = split_threshold(p_em, dis_th, chg_th)

        # feasibility: DC/DC rating first (reroute to the ultracapacitor),
        # then device windows with the residual on the battery
        if has_cap:
            p_bat = p_em - p_cap
            if p_bat > prm[P_DCDC_RATED]:
                p_cap += p_bat - prm[P_DCDC_RATED]
                events |= EV_DCDC_REROUTE
            elif p_bat < -prm[P_DCDC_RATED]:
                p_cap += p_bat + prm[P_DCDC_RATED]
                events |= EV_DCDC_REROUTE
            if p_cap > cap_hi:
                p_cap = cap_hi
                events |= EV_CAP_CLAMP
            elif p_cap < cap_lo:
                p_cap = cap_lo
                events |= EV_CAP_CLAMP
        else:
            p_cap = 0.0
        p_bat = p_em - p_cap
        if p_bat < bat_lo:
            # battery full: try the ultracapacitor, then friction brakes
            spare = cap_lo - p_cap
            need = p_bat - bat_lo
            if has_cap and spare < 0.0:
                take = max(need, spare)
                p_cap += take
                p_bat -= take
            if p_bat < bat_lo:
                p_em -= p_bat - bat_lo
                p_bat = bat_lo
                events |= EV_REGEN_REFUSED
        if p_bat > bat_hi:
            p_bat = bat_hi
            p_em = p_bat + p_cap
            events |= EV_BAT_INFEASIBLE
        if abs(p_bat) > prm[P_DCDC_RATED]:
            events |= EV_DCDC_LIMIT
        # delivered bus power is by definition the sum of the two shares
        p_em = p_bat + p_cap
        e_refused = (p_em_plant - p_em) * dt

        # converter chain and device updates
        p_bat_t = bus_to_terminal(p_bat, eff_bat)
        i_bat = solve_current(p_bat_t, u_bat, r_bat)
        if math.isnan(i_bat):
            i_bat = u_bat / (2.0 * r_bat)
            events |= EV_BAT_INFEASIBLE
        soc_start = soc
        soc -= i_bat * dt / (3600.0 * q_nom)
        d_ah = abs(i_bat) * dt / 3600.0
        ah += d_ah
        u_bat_t = u_bat - i_bat * r_bat

        p_cap_t = bus_to_terminal(p_cap, eff_ac)
        i_cap = 0.0
        if p_cap_t != 0.0:
            i_cap = solve_current(p_cap_t, u_cap, r_cap)
            if math.isnan(i_cap):
                i_cap = u_cap / (2.0 * r_cap)
                events |= EV_CAP_INFEASIBLE
        sov -= i_cap * dt / (c_cap * u_max)
        if sov < 0.0:
            sov = 0.0
        elif sov > 1.0:
            sov = 1.0
        u_cap_t = u_cap - i_cap * r_cap

        # aging at the step's starting SOC and this step's C-rate
        i_c = abs(i_bat) / q_nom
        sigma = severity(soc_start * prm[P_AG_SOC_SCALE], i_c, prm[P_BAT_TEMP],
                         prm[P_AG_ALPHA], prm[P_AG_BETA], prm[P_AG_DELTA],
                         prm[P_AG_EA], prm[P_AG_RG])
        qloss = loss_increment(qloss, sigma, d_ah, prm[P_AG_Z])

        # energy drawn from each store (open-circuit voltage times charge)
        e_bat = u_bat * i_bat * dt
        e_cap = u_cap * i_cap * dt
        rew = reward_value(e_bat, e_cap, sigma, prm[P_W_E], prm[P_EBAT_NORM],
                           prm[P_ECAP_NORM], prm[P_SIGMA_NORM], prm[P_BIAS])

        dist += 0.5 * (v_prev + v) * dt
        time += dt

        if soc < prm[P_BAT_SOC_MIN]:
            events |= EV_BAT_DEPLETED

        row = trace[k]
        row[C_T] = time
        row[C_VTGT] = vt1
        row[C_V] = v
        row[C_PEDAL_ACC] = ped_a * 100.0
        row[C_PEDAL_BRK] = ped_b * 100.0
        row[C_TEM] = t_em
        row[C_WEM] = w_em
        row[C_PEM] = p_em
        row[C_PBAT] = p_bat
        row[C_PCAP] = p_cap
        row[C_PBAT_T] = p_bat_t
        row[C_PCAP_T] = p_cap_t
        row[C_IBAT] = i_bat
        row[C_UBAT] = u_bat_t
        row[C_ICAP] = i_cap
        row[C_UCAP] = u_cap_t
        row[C_SOC] = soc
        row[C_SOV] = sov
        row[C_SIGMA] = sigma
        row[C_REWARD] = rew
        row[C_AH] = ah
        row[C_QLOSS] = qloss
        row[C_EMECH] = e_mech
        row[C_ERES] = e_res
        row[C_EFRIC] = e_fric
        row[C_DKE] = dke
        row[C_EREFUSED] = e_refused
        row[C_STATE] = s_idx
        row[C_ACTION] = a_idx
        row[C_DISCHG] = dis_th
        row[C_CHG] = chg_th
        row[C_EVENTS] = events
        row[C_EBAT] = e_bat
        row[C_ECAP] = e_cap
        row[C_DIST] = dist
        row[C_PEM_PLANT] = p_em_plant

        done = k + 1
        if soc <= stop_soc:
            status = RUN_STOPPED
            break

    state[X_V] = v
    state[X_INTEG] = integ
    state[X_SOC] = soc
    state[X_AH] = ah
    state[X_QLOSS] = qloss
    state[X_SOV] = sov
    state[X_DIST] = dist
    state[X_TIME] = time
    return done, status
