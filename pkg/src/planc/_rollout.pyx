# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled rollout kernel.

A line-by-line port of ``planc._rollout_py``: every floating-point expression
is evaluated in the same order with the same libm calls, so both kernels
produce identical traces.
"""

import numpy as np

from libc.math cimport INFINITY, NAN, atan2, copysign, cosh, exp, fabs, isfinite, isnan, log, pow, sinh, sqrt

# parameter vector layout, kept in sync with planc._layout.PARAM_FIELDS
cdef enum:
    PZ0 = 0
    PG = 1
    PEPS = 2
    PESTAR = 3
    PW = 4
    PTMIN = 5
    PTMAX = 6
    PCLEAR = 7
    PBLEND = 8
    PMARGIN = 9
    PCENTER = 10
    PDT = 11
    PREACH = 12
    PFALLH = 13
    PLATFALL = 14
    PINITP = 15
    PINITE = 16
    PFIXT = 17
    PFIXU = 18
    PC = 19
    PALPHA = 20
    PMAXROWS = 21
    NROW = 36
    NIMP = 22
    EV_IMPACT = 1
    EV_REPLAN = 2
    EV_DISTURBANCE = 4
    EV_SUCCESS = 8
    EV_MISS = 16
    EV_FALL = 32
    EV_DIVERGED = 64

cdef double GUARD_TOL = 1e-9
cdef double REPLAN_TOL = 1e-9

cdef double[5] BINOM4 = [1.0, 4.0, 6.0, 4.0, 1.0]
cdef double[6] BINOM5 = [1.0, 5.0, 10.0, 10.0, 5.0, 1.0]
cdef double[6] BEZ_H = [0.0, 0.0, 0.0, 1.0, 1.0, 1.0]


cdef struct Cfg:
    double z0, g, lam, eps, e_star, w, t_min, t_max, clearance, blend, margin, centering
    int has_fixed_T, has_fixed_u
    double fixed_T, fixed_u


cdef struct Rom:
    double t, p, L, py, Ly, z, zd, elapsed, side, fx, fy, fz
    double swx, swy, swz
    double st_p, st_L, st_py, st_Ly, st_z, st_zd, st_swx, st_swy, st_swz
    int idx


cdef struct Plan:
    double T_s, elapsed, phase, l_des, h_des, w_des, heading, u_des
    double sx[4]
    double sy[4]
    double sz[4]
    double bv[6]
    double lift_x, lift_y
    double ox, oy, oz


cdef inline double pmax(double a, double b) nogil:
    # Python max(a, b): b only when strictly greater
    return b if b > a else a


cdef inline double pmin(double a, double b) nogil:
    return b if b < a else a


cdef inline void flow(double p, double L, double lam, double z0, double t, double* po, double* Lo) nogil:
    cdef double c = cosh(lam * t)
    cdef double s = sinh(lam * t)
    po[0] = c * p + s * L / (lam * z0)
    Lo[0] = z0 * lam * s * p + c * L


cdef double time_to_target(double p0, double L0, double lam, double z0, double target, double lo, double hi) nogil:
    cdef double a, b, c, apb, disc, sq, q, u, raw
    cdef double r[2]
    cdef int nr = 0, i, found = 0
    if p0 == target:
        raw = 0.0
    else:
        a = p0
        b = L0 / (lam * z0)
        c = target
        apb = a + b
        if apb == 0.0:
            if c != 0.0:
                r[0] = a / c
                nr = 1
        else:
            disc = c * c - a * a + b * b
            if disc < 0.0:
                return hi
            sq = sqrt(disc)
            q = c + copysign(sq, c) if c != 0.0 else sq
            if q != 0.0:
                r[0] = q / apb
                r[1] = (a - b) / q
                nr = 2
            else:
                r[0] = c / apb
                nr = 1
        u = 0.0
        for i in range(nr):
            if r[i] >= 1.0 - 4e-16:
                if not found or r[i] < u:
                    u = r[i]
                found = 1
        if found:
            raw = pmax(0.0, log(u)) / lam
        elif p0 > target and L0 > 0.0:
            raw = 0.0
        else:
            return hi
    return pmin(pmax(raw, lo), hi)


cdef inline void com_spline(double p0, double v0, double p1, double v1, double T, double* out) nogil:
    cdef double m0 = v0 * T
    cdef double m1 = v1 * T
    cdef double dp = p1 - p0
    out[0] = p0
    out[1] = m0
    out[2] = 3.0 * dp - 2.0 * m0 - m1
    out[3] = -2.0 * dp + m0 + m1


cdef inline void eval_spline(const double* c, double s, double T, double* pos, double* vel) nogil:
    if not (0.0 <= s <= 1.0):
        s = pmin(pmax(s, 0.0), 1.0)
    pos[0] = c[0] + s * (c[1] + s * (c[2] + s * c[3]))
    vel[0] = (c[1] + s * (2.0 * c[2] + s * 3.0 * c[3])) / T


cdef inline void bezier_eval(const double* cf, double s, double* val, double* der) nogil:
    cdef double t = 1.0 - s
    cdef double v = 0.0, d = 0.0
    cdef int k
    for k in range(6):
        v += BINOM5[k] * pow(s, <double>k) * pow(t, <double>(5 - k)) * cf[k]
    for k in range(5):
        d += BINOM4[k] * pow(s, <double>k) * pow(t, <double>(4 - k)) * (cf[k + 1] - cf[k])
    val[0] = v
    der[0] = 5.0 * d


cdef double apex_control_height(double z_start, double z_end, double apex) nogil:
    cdef double best = INFINITY, s, t, b0, mid, tail, c
    cdef int j
    for j in range(1, 32):
        s = j / 32.0
        t = 1.0 - s
        b0 = pow(t, 5.0)
        mid = 5.0 * s * pow(t, 4.0) + 10.0 * pow(s, 2.0) * pow(t, 3.0) + 10.0 * pow(s, 3.0) * pow(t, 2.0)
        tail = 5.0 * pow(s, 4.0) * t + pow(s, 5.0)
        c = (apex - z_start * b0 - z_end * tail) / mid
        if c < best:
            best = c
    return best


cdef void ref_vectors(const Plan* pl, double s, double* pos, double* vel) nogil:
    cdef double T = pl.T_s
    cdef double xp, xv, yp, yv, zp, zv, bh, dbh, bvv, dbv, x0, y0
    eval_spline(pl.sx, s, T, &xp, &xv)
    eval_spline(pl.sy, s, T, &yp, &yv)
    eval_spline(pl.sz, s, T, &zp, &zv)
    bezier_eval(BEZ_H, s, &bh, &dbh)
    bezier_eval(pl.bv, s, &bvv, &dbv)
    x0 = pl.lift_x
    y0 = pl.lift_y
    pos[0] = pl.ox + xp
    pos[1] = pl.oy + yp
    pos[2] = zp
    pos[3] = pl.ox + ((1.0 - bh) * x0 + bh * pl.l_des)
    pos[4] = pl.oy + ((1.0 - bh) * y0 + bh * pl.w_des)
    pos[5] = pl.oz + bvv
    pos[6] = pl.heading
    pos[7] = pl.heading
    vel[0] = xv
    vel[1] = yv
    vel[2] = zv
    vel[3] = dbh * (pl.l_des - x0) / T
    vel[4] = dbh * (pl.w_des - y0) / T
    vel[5] = dbv / T
    vel[6] = 0.0
    vel[7] = 0.0


cdef int plan_step(const Rom* r, const double[:, ::1] st, const Cfg* cf, Plan* pl) nogil:
    """Fill ``pl`` for the stance stone ``r.idx``; nonzero on a planning failure."""
    cdef int i = r.idx
    cdef int ip = i - 1 if i > 0 else i
    cdef double z0 = cf.z0, lam = cf.lam
    cdef double fx = r.fx, fy = r.fy, fz = r.fz, elapsed = r.elapsed
    cdef double ncx = st[i + 1, 0], ncy = st[i + 1, 1], ntop = st[i + 1, 2], nw = st[i + 1, 4]
    cdef double l_des, h_des, remaining, lo, hi, T_s
    cdef double hp, hL, slope, z_end, total, sb, wb, xdot, pp, L_des, u_des
    cdef double lp, lL, drift, c, s, u_orb, a11, a12, a21, det, p_orb, L_orb, rho, k1, k2, k3, w_des
    cdef double half, y_lo, y_hi, zmax

    l_des = ncx - fx
    h_des = ntop - fz
    if not l_des > 0:
        return 1
    pl.heading = atan2(ncy - st[i, 1], ncx - st[i, 0])

    if cf.has_fixed_T:
        remaining = pmax(cf.fixed_T - elapsed, 0.0)
    else:
        lo = pmax(cf.t_min - elapsed, 0.0)
        hi = cf.t_max - elapsed
        if hi <= lo:
            remaining = pmax(hi, 0.0)
        else:
            if not isfinite(cf.eps * l_des):
                return 1
            remaining = time_to_target(r.p, r.L, lam, z0, cf.eps * l_des, lo, hi)
    if not isfinite(remaining):
        return 1
    if remaining <= GUARD_TOL and elapsed > 0.0:
        remaining = 0.0
    T_s = elapsed + remaining
    if not T_s > 0:
        return 1
    pl.T_s = T_s
    pl.elapsed = elapsed
    pl.phase = elapsed / T_s
    pl.l_des = l_des
    pl.h_des = h_des

    flow(r.p, r.L, lam, z0, remaining, &hp, &hL)
    if not (isfinite(hp) and isfinite(hL)):
        return 1
    slope = h_des / l_des
    z_end = fz + z0 + slope * hp

    # pre-impact estimate
    total = elapsed + remaining
    sb = elapsed / total if total > 0 else 0.0
    wb = pow(sb, cf.blend)
    xdot = wb * (hL / z0) + (1.0 - wb) * (r.L / z0)

    pp = hp - l_des
    L_des = z0 * sqrt(cf.e_star + cf.g / z0 * pp * pp)
    if cf.has_fixed_u:
        u_des = cf.fixed_u
    else:
        u_des = (L_des - hL + h_des * xdot) / l_des
    pl.u_des = u_des

    com_spline(r.st_p, r.st_L / z0, hp, hL / z0, T_s, pl.sx)
    com_spline(r.st_z, r.st_zd, z_end, u_des, T_s, pl.sz)

    flow(r.py, r.Ly, lam, z0, remaining, &lp, &lL)
    if not (isfinite(lp) and isfinite(lL)):
        return 1
    drift = fy - (ncy + r.side * 0.5 * cf.w)
    c = cosh(lam * T_s)
    s = sinh(lam * T_s)
    u_orb = -r.side * cf.w
    a11 = c
    a12 = s / (lam * z0)
    a21 = z0 * lam * s
    det = (a11 + 1.0) * (a11 + 1.0) - a12 * a21
    p_orb = ((a11 + 1.0) * a11 - a12 * a21) / det * u_orb
    L_orb = (-a21 * a11 + (a11 + 1.0) * a21) / det * u_orb
    if not (isfinite(p_orb) and isfinite(L_orb)):
        return 1
    rho = 1.0 - cf.centering
    k1 = (2.0 * c - 1.0 - rho) / (2.0 * (c - 1.0))
    k2 = (2.0 * c + 1.0 - rho) / (2.0 * lam * z0 * s)
    k3 = (1.0 - rho) / (2.0 * (c - 1.0))
    w_des = u_orb + k1 * (lp - p_orb) + k2 * (lL - L_orb) + k3 * drift
    half = 0.5 * nw - cf.margin
    y_lo = ncy - half - fy
    y_hi = ncy + half - fy
    pl.w_des = pmin(pmax(w_des, y_lo), y_hi)
    com_spline(r.st_py, r.st_Ly / z0, lp, lL / z0, T_s, pl.sy)

    pl.lift_x = r.st_swx - fx
    pl.lift_y = r.st_swy - fy
    zmax = pmax(pmax(st[ip, 2], st[i, 2]), ntop) - fz + cf.clearance
    c = apex_control_height(r.st_swz - fz, h_des, zmax)
    pl.bv[0] = r.st_swz - fz
    pl.bv[1] = c
    pl.bv[2] = c
    pl.bv[3] = c
    pl.bv[4] = h_des
    pl.bv[5] = h_des
    pl.ox = fx
    pl.oy = fy
    pl.oz = fz
    return 0


cdef inline void track(Rom* r, const Plan* pl, double* phase) nogil:
    cdef double pos[8]
    cdef double vel[8]
    ref_vectors(pl, pl.phase, pos, vel)
    r.z = pos[2]
    r.zd = vel[2]
    r.swx = pos[3]
    r.swy = pos[4]
    r.swz = pos[5]
    phase[0] = pl.phase


cdef double row_values(const Rom* r, const Plan* pl, const Cfg* cf, const double[:, ::1] rows_clf,
                       double c, double alpha, double V_prev, double t_prev, int first, double* out) nogil:
    cdef double pos[8]
    cdef double vel[8]
    cdef double act_pos[8]
    cdef double act_vel[8]
    cdef double z0 = cf.z0, V = 0.0, e, d, com_x, com_y, vx, vy, margin, v
    cdef int i, n = rows_clf.shape[0]
    ref_vectors(pl, pl.phase, pos, vel)
    com_x = r.fx + r.p
    com_y = r.fy + r.py
    vx = r.L / z0
    vy = r.Ly / z0
    act_pos[0] = com_x
    act_pos[1] = com_y
    act_pos[2] = r.z
    act_pos[3] = r.swx
    act_pos[4] = r.swy
    act_pos[5] = r.swz
    act_pos[6] = pl.heading
    act_pos[7] = pl.heading
    act_vel[0] = vx
    act_vel[1] = vy
    act_vel[2] = r.zd
    act_vel[3] = vel[3]
    act_vel[4] = vel[4]
    act_vel[5] = vel[5]
    act_vel[6] = 0.0
    act_vel[7] = 0.0
    for i in range(n):
        e = act_pos[i] - pos[i]
        d = act_vel[i] - vel[i]
        V += rows_clf[i, 0] * e * e + 2.0 * rows_clf[i, 1] * e * d + rows_clf[i, 2] * d * d
    V = 0.5 * V
    if first:
        margin = c * V
    else:
        margin = (V - V_prev) / (r.t - t_prev) + c * V
    v = r.L / z0
    out[0] = r.t
    out[1] = pl.phase
    out[2] = <double>r.idx
    out[3] = com_x
    out[4] = com_y
    out[5] = r.z
    out[6] = vx
    out[7] = vy
    out[8] = r.zd
    out[9] = r.swx
    out[10] = r.swy
    out[11] = r.swz
    out[12] = r.p
    out[13] = r.L
    out[14] = v * v - cf.lam * cf.lam * r.p * r.p
    out[15] = pl.T_s
    out[16] = pl.u_des
    out[17] = V
    out[18] = margin
    out[19] = exp(-alpha * V)
    out[20] = r.py
    out[21] = r.Ly
    out[22] = r.elapsed
    out[23] = r.side
    out[24] = r.fx
    out[25] = r.fy
    out[26] = r.fz
    out[27] = r.st_p
    out[28] = r.st_L
    out[29] = r.st_py
    out[30] = r.st_Ly
    out[31] = r.st_z
    out[32] = r.st_zd
    out[33] = r.st_swx
    out[34] = r.st_swy
    out[35] = r.st_swz
    return V


cdef inline double window_fraction(double t0, double dur, double a, double b) nogil:
    cdef double lo, hi
    if dur <= 0.0:
        return 1.0 if (a < t0 and t0 <= b) else 0.0
    lo = pmax(a, t0)
    hi = pmin(b, t0 + dur)
    return (hi - lo) / dur if hi > lo else 0.0


cdef int apply_disturbance(Rom* r, const double[:, ::1] dist, double a, double b, double z0) nogil:
    cdef int k, hit = 0
    cdef double f
    for k in range(dist.shape[0]):
        f = window_fraction(dist[k, 0], dist[k, 3], a, b)
        if f > 0.0:
            r.L += z0 * dist[k, 1] * f
            r.Ly += z0 * dist[k, 2] * f
            hit = 1
    return hit


cdef class _Buffer:
    """Growable row store for the trace."""

    cdef public object rows
    cdef public object events
    cdef double[:, ::1] rv
    cdef long long[::1] ev
    cdef Py_ssize_t n

    def __init__(self, Py_ssize_t cap):
        cap = max(cap, 16)
        self.rows = np.empty((cap, NROW), dtype=np.float64)
        self.events = np.empty(cap, dtype=np.int64)
        self.rv = self.rows
        self.ev = self.events
        self.n = 0

    cdef void push(self, const double* row, long long bits):
        cdef Py_ssize_t j, cap = self.rv.shape[0]
        if self.n == cap:
            self.rows = np.concatenate([self.rows, np.empty((cap, NROW), dtype=np.float64)])
            self.events = np.concatenate([self.events, np.empty(cap, dtype=np.int64)])
            self.rv = self.rows
            self.ev = self.events
        for j in range(NROW):
            self.rv[self.n, j] = row[j]
        self.ev[self.n] = bits
        self.n += 1

    cdef void mark_last(self, long long bits):
        if self.n > 0:
            self.ev[self.n - 1] |= bits

    def result(self):
        return self.rows[: self.n].copy(), self.events[: self.n].copy()


cdef inline bint replan_changed(double a, double b):
    return fabs(a - b) > REPLAN_TOL


def run_rollout(stones, params, clf_rows, noise_land, noise_vz, dist, bint record):
    """Run one rollout; returns ``(rows, events, impacts, outcome, failed, v_min, v_max)``."""
    cdef const double[:, ::1] st = np.ascontiguousarray(stones, dtype=np.float64)
    cdef const double[::1] pv = np.ascontiguousarray(params, dtype=np.float64)
    cdef const double[:, ::1] rc = np.ascontiguousarray(clf_rows, dtype=np.float64)
    cdef const double[:, ::1] nl = np.ascontiguousarray(noise_land, dtype=np.float64).reshape(-1, 2)
    cdef const double[::1] nv = np.ascontiguousarray(noise_vz, dtype=np.float64)
    cdef const double[:, ::1] ds = np.ascontiguousarray(dist, dtype=np.float64).reshape(-1, 4)
    cdef int n = st.shape[0]
    cdef Cfg cf
    cdef Rom r, post
    cdef Plan pl, nw
    cdef double row[NROW]
    cdef double imp[NIMP]
    cdef double pos[8]
    cdef double vel[8]
    cdef double dt, reach, fall_h, lat_fall, c, alpha, init_p, half, z
    cdef double v_min = INFINITY, v_max = -INFINITY, V, V_prev = 0.0, t_row_prev = 0.0, t_prev, phase = 0.0
    cdef double h, tx, ty, tz, cx, lx, ly, lz, pdot, zdot, x_sw, z_sw, L_plus, ex, ey
    cdef int first = 1, outcome = -1, failed = -1, k = 0, guard, stone, missed, j
    cdef long long ev, pending = 0
    cdef list impacts = []
    cdef _Buffer buf = _Buffer(<Py_ssize_t>pv[PMAXROWS] if record else 0)

    cf.z0 = pv[PZ0]
    cf.g = pv[PG]
    cf.lam = sqrt(cf.g / cf.z0)
    cf.eps = pv[PEPS]
    cf.e_star = pv[PESTAR]
    cf.w = pv[PW]
    cf.t_min = pv[PTMIN]
    cf.t_max = pv[PTMAX]
    cf.clearance = pv[PCLEAR]
    cf.blend = pv[PBLEND]
    cf.margin = pv[PMARGIN]
    cf.centering = pv[PCENTER]
    cf.has_fixed_T = not isnan(pv[PFIXT])
    cf.fixed_T = pv[PFIXT]
    cf.has_fixed_u = not isnan(pv[PFIXU])
    cf.fixed_u = pv[PFIXU]
    dt = pv[PDT]
    reach = pv[PREACH]
    fall_h = pv[PFALLH]
    lat_fall = pv[PLATFALL]
    c = pv[PC]
    alpha = pv[PALPHA]

    # initial state: left foot at +w/2, lateral channel on the first step's orbit
    init_p = pv[PINITP]
    if isnan(init_p):
        init_p = -(1.0 - cf.eps) * (st[1, 0] - st[0, 0])
    half = 0.5 * cf.w
    z = st[0, 2] + cf.z0
    r.t = 0.0
    r.p = init_p
    r.L = cf.z0 * sqrt(pv[PINITE] + cf.g / cf.z0 * init_p * init_p)
    r.z = z
    r.zd = 0.0
    r.elapsed = 0.0
    r.side = 1.0
    r.fx = st[0, 0]
    r.fy = st[0, 1] + half
    r.fz = st[0, 2]
    r.swx = st[0, 0]
    r.swy = st[0, 1] - half
    r.swz = st[0, 2]
    r.st_p = r.p
    r.st_L = r.L
    r.st_z = z
    r.st_zd = 0.0
    r.st_swx = r.swx
    r.st_swy = r.swy
    r.st_swz = r.swz
    r.idx = 0
    r.py = -half
    r.Ly = 0.0
    r.st_py = r.py
    r.st_Ly = r.Ly
    if not (isfinite(r.L) and isfinite(r.p)) or plan_step(&r, st, &cf, &pl):
        return _pack(buf, impacts, 3, 0, v_min, v_max)
    r.py, r.Ly = _orbit_start(&pl, &cf)
    r.st_py = r.py
    r.st_Ly = r.Ly

    if plan_step(&r, st, &cf, &pl):
        return _pack(buf, impacts, 3, 0, v_min, v_max)
    track(&r, &pl, &phase)
    t_prev = -INFINITY

    while True:
        ev = pending
        pending = 0
        if apply_disturbance(&r, ds, t_prev, r.t, cf.z0):
            ev |= EV_DISTURBANCE
            if plan_step(&r, st, &cf, &nw):
                outcome = 3
                failed = r.idx
                ev |= EV_DIVERGED
                V = row_values(&r, &pl, &cf, rc, c, alpha, V_prev, t_row_prev, first, row)
                if record:
                    buf.push(row, ev)
                if V < v_min:
                    v_min = V
                if V > v_max:
                    v_max = V
                break
            if replan_changed(nw.T_s, pl.T_s):
                ev |= EV_REPLAN
            pl = nw
            track(&r, &pl, &phase)

        guard = phase >= 1.0
        if guard:
            tx = r.fx + pl.l_des
            ty = r.fy + pl.w_des
            tz = r.fz + pl.h_des
            cx = r.fx + r.p
            lx = pmin(pmax(tx + nl[k, 0], cx - reach), cx + reach)
            ly = ty + nl[k, 1]
            lz = tz
            pdot = r.L / cf.z0
            zdot = r.zd + nv[k]

        V = row_values(&r, &pl, &cf, rc, c, alpha, V_prev, t_row_prev, first, row)
        first = 0
        if V < v_min:
            v_min = V
        if V > v_max:
            v_max = V
        V_prev = V
        t_row_prev = r.t

        if guard:
            stone = r.idx + 1
            x_sw = lx - r.fx
            z_sw = lz - r.fz
            L_plus = r.L + x_sw * zdot - z_sw * pdot
            ex = lx - tx
            ey = ly - ty
            missed = not (fabs(lx - st[stone, 0]) <= 0.5 * st[stone, 3]
                          and fabs(ly - st[stone, 1]) <= 0.5 * st[stone, 4])
            imp[0] = r.t
            imp[1] = <double>stone
            imp[2] = lx
            imp[3] = ly
            imp[4] = lz
            imp[5] = tx
            imp[6] = ty
            imp[7] = tz
            imp[8] = r.p
            imp[9] = r.L
            imp[10] = pdot
            imp[11] = zdot
            imp[12] = x_sw
            imp[13] = ly - r.fy
            imp[14] = z_sw
            imp[15] = L_plus
            imp[16] = r.p - x_sw
            imp[17] = r.py - (ly - r.fy)
            imp[18] = r.Ly
            pdot = L_plus / cf.z0
            imp[19] = pdot * pdot - cf.lam * cf.lam * imp[16] * imp[16]
            imp[20] = sqrt(ex * ex + ey * ey)
            imp[21] = 1.0 if missed else 0.0
            impacts.append([imp[j] for j in range(NIMP)])
            ev |= EV_IMPACT
            k += 1
            if missed:
                ev |= EV_MISS
                outcome = 1
                failed = k - 1
            elif stone == n - 1:
                ev |= EV_SUCCESS
                outcome = 0
            if record:
                buf.push(row, ev)
            if outcome >= 0:
                break
            # contact switch
            post = r
            post.st_p = imp[16]
            post.st_L = L_plus
            post.st_py = imp[17]
            post.st_Ly = r.Ly
            post.st_z = r.z
            post.st_zd = zdot
            post.st_swx = r.fx
            post.st_swy = r.fy
            post.st_swz = r.fz
            post.p = imp[16]
            post.L = L_plus
            post.py = imp[17]
            post.zd = zdot
            post.elapsed = 0.0
            post.side = -r.side
            post.fx = lx
            post.fy = ly
            post.fz = lz
            post.swx = r.fx
            post.swy = r.fy
            post.swz = r.fz
            post.idx = stone
            r = post
            phase = 0.0
            if plan_step(&r, st, &cf, &pl):
                outcome = 3
                failed = r.idx
                if record:
                    buf.mark_last(EV_DIVERGED)
                break
            track(&r, &pl, &phase)
        else:
            if not (isfinite(r.p) and isfinite(r.L) and isfinite(r.py) and isfinite(r.Ly)
                    and isfinite(r.z) and isfinite(r.zd) and isfinite(V)):
                ev |= EV_DIVERGED
                outcome = 3
                failed = r.idx
            elif r.z < st[r.idx, 2] + fall_h or fabs(r.py) > lat_fall:
                ev |= EV_FALL
                outcome = 2
                failed = r.idx
            if record:
                buf.push(row, ev)
            if outcome >= 0:
                break

        h = pmin(dt, pl.T_s - r.elapsed)
        t_prev = r.t
        r.elapsed = r.elapsed + h
        flow(r.p, r.L, cf.lam, cf.z0, h, &r.p, &r.L)
        flow(r.py, r.Ly, cf.lam, cf.z0, h, &r.py, &r.Ly)
        r.t = r.t + h
        if not (isfinite(r.p) and isfinite(r.L) and isfinite(r.py) and isfinite(r.Ly)) \
                or plan_step(&r, st, &cf, &nw):
            outcome = 3
            failed = r.idx
            # the reference kernel rows the untracked state: actuated channels
            # at the advanced phase of the old plan
            ref_vectors(&pl, pmin(r.elapsed / pl.T_s, 1.0), pos, vel)
            r.z = pos[2]
            r.zd = vel[2]
            r.swx = pos[3]
            r.swy = pos[4]
            r.swz = pos[5]
            V = row_values(&r, &pl, &cf, rc, c, alpha, V_prev, t_row_prev, first, row)
            if record:
                buf.push(row, EV_DIVERGED)
            break
        if replan_changed(nw.T_s, pl.T_s):
            pending |= EV_REPLAN
        pl = nw
        track(&r, &pl, &phase)

    return _pack(buf, impacts, outcome, failed, v_min, v_max)


cdef tuple _orbit_start(const Plan* pl, const Cfg* cf):
    # (p*, -L*) of the period-2 orbit for the planned step duration
    cdef double lam = cf.lam, z0 = cf.z0, T_s = pl.T_s
    cdef double c = cosh(lam * T_s)
    cdef double s = sinh(lam * T_s)
    cdef double u_orb = -1.0 * cf.w
    cdef double a11 = c, a12 = s / (lam * z0), a21 = z0 * lam * s
    cdef double det = (a11 + 1.0) * (a11 + 1.0) - a12 * a21
    cdef double p_orb = ((a11 + 1.0) * a11 - a12 * a21) / det * u_orb
    cdef double L_orb = (-a21 * a11 + (a11 + 1.0) * a21) / det * u_orb
    return p_orb, -L_orb


cdef tuple _pack(_Buffer buf, list impacts, int outcome, int failed, double v_min, double v_max):
    rows, events = buf.result()
    imp = np.array(impacts, dtype=np.float64).reshape(-1, NIMP)
    return rows, events, imp, outcome, failed, v_min, v_max
