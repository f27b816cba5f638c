# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True
"""Compiled kernels, bit-compatible with `_fallback`.

Every arithmetic statement mirrors the pure-Python fallback in the
same order on the same IEEE-754 doubles; transcendentals call the same
platform libm that CPython's math module wraps.  The parity test suite
asserts equality of every public entry point on both backends, so any
edit here must be made in `_fallback.py` too (and vice versa).
"""

import numpy as np

from libc.math cimport atan2, cos, exp, fabs, fmod, log, pow, sin, sqrt
from libc.stdint cimport int8_t, int32_t, uint64_t

cdef double TWO_PI = 6.283185307179586
cdef double PI = 3.141592653589793
cdef uint64_t GOLDEN = <uint64_t>0x9E3779B97F4A7C15
cdef uint64_t SALT_SA_RESTART = <uint64_t>0x7361
cdef uint64_t SALT_GD_STEP = <uint64_t>0x6764
cdef double U53 = 1.0 / 9007199254740992.0


cdef inline uint64_t _mix64(uint64_t z) nogil:
    z = (z ^ (z >> 30)) * <uint64_t>0xBF58476D1CE4E5B9
    z = (z ^ (z >> 27)) * <uint64_t>0x94D049BB133111EB
    return z ^ (z >> 31)


cdef inline uint64_t _next(uint64_t* s) nogil:
    s[0] = s[0] + GOLDEN
    return _mix64(s[0])


cdef inline double _uniform(uint64_t* s) nogil:
    return <double>(_next(s) >> 11) * U53


cdef inline void _gauss_pair(uint64_t* s, double* g1, double* g2) nogil:
    cdef double u1 = _uniform(s)
    cdef double u2 = _uniform(s)
    cdef double r = sqrt(-2.0 * log(1.0 - u1))
    cdef double a = TWO_PI * u2
    g1[0] = r * cos(a)
    g2[0] = r * sin(a)


cdef inline uint64_t _derive2(uint64_t seed, uint64_t s1, uint64_t s2) nogil:
    cdef uint64_t x = _mix64(seed)
    x = _mix64(x ^ _mix64(s1 + GOLDEN))
    x = _mix64(x ^ _mix64(s2 + GOLDEN))
    return x


def qubo_pair_sum(ii, jj, vv, spins):
    cdef const int32_t[:] iv = ii
    cdef const int32_t[:] jv = jj
    cdef const double[:] vval = vv
    cdef const int8_t[:] s = spins
    cdef Py_ssize_t k
    cdef double acc = 0.0
    for k in range(iv.shape[0]):
        acc += vval[k] * (s[iv[k]] * s[jv[k]])
    return acc


def qco_pair_sum(ii, jj, vv, phases):
    cdef const int32_t[:] iv = ii
    cdef const int32_t[:] jv = jj
    cdef const double[:] vval = vv
    cdef const double[:] th = phases
    cdef Py_ssize_t k
    cdef double acc = 0.0
    for k in range(iv.shape[0]):
        acc += vval[k] * cos(th[iv[k]] - th[jv[k]])
    return acc


cdef double _field(const int32_t[:] ptr, const int32_t[:] nb, const double[:] w,
                   const int8_t[:] s, int k) nogil:
    cdef double h = 0.0
    cdef int p
    for p in range(ptr[k], ptr[k + 1]):
        h += w[p] * s[nb[p]]
    return h


cdef void _polish_qubo(int n, const int32_t[:] ptr, const int32_t[:] nb,
                       const double[:] w, int8_t[:] s) nogil:
    cdef double best_gain, g
    cdef int best_k, k
    while True:
        best_gain = 0.0
        best_k = -1
        for k in range(n):
            g = -4.0 * s[k] * _field(ptr, nb, w, s, k)
            if g > best_gain:
                best_gain = g
                best_k = k
        if best_k < 0:
            break
        s[best_k] = -s[best_k]


def greedy_polish_qubo(n, indptr, nbr, w, spins):
    cdef const int32_t[:] ptr = indptr
    cdef const int32_t[:] nb = nbr
    cdef const double[:] wv = w
    cdef int8_t[:] s = spins
    _polish_qubo(n, ptr, nb, wv, s)


cdef void _polish_qco(int n, const int32_t[:] ptr, const int32_t[:] nb,
                      const double[:] w, double[:] th, int max_cycles, double tol) nogil:
    cdef int cyc, i, p
    cdef double maxd, a, b, t, tn, d
    for cyc in range(max_cycles):
        maxd = 0.0
        for i in range(n):
            a = 0.0
            b = 0.0
            for p in range(ptr[i], ptr[i + 1]):
                t = th[nb[p]]
                a += w[p] * sin(t)
                b += w[p] * cos(t)
            if a == 0.0 and b == 0.0:
                continue
            tn = atan2(a, b)
            if tn < 0.0:
                tn += TWO_PI
            d = tn - th[i]
            while d > PI:
                d -= TWO_PI
            while d < -PI:
                d += TWO_PI
            th[i] = tn
            if d < 0.0:
                d = -d
            if d > maxd:
                maxd = d
        if maxd < tol:
            break


def cd_polish_qco(n, indptr, nbr, w, phases, max_cycles, tol):
    cdef const int32_t[:] ptr = indptr
    cdef const int32_t[:] nb = nbr
    cdef const double[:] wv = w
    cdef double[:] th = phases
    _polish_qco(n, ptr, nb, wv, th, max_cycles, tol)


cdef double _flat_qubo(const int32_t[:] ii, const int32_t[:] jj, const double[:] vv,
                       const int8_t[:] s) nogil:
    cdef double acc = 0.0
    cdef Py_ssize_t t
    for t in range(ii.shape[0]):
        acc += vv[t] * (s[ii[t]] * s[jj[t]])
    return acc


def brute_force_qubo(n, indptr, nbr, w, ii, jj, vv):
    cdef const int32_t[:] ptr = indptr
    cdef const int32_t[:] nb = nbr
    cdef const double[:] wv = w
    cdef const int32_t[:] iv = ii
    cdef const int32_t[:] jv = jj
    cdef const double[:] vval = vv
    cdef int cn = n

    s_arr = np.full(cn, -1, dtype=np.int8)
    best_arr = np.full(cn, -1, dtype=np.int8)
    cdef int8_t[:] s = s_arr
    cdef int8_t[:] best_s = best_arr

    cdef double best = _flat_qubo(iv, jv, vval, s)
    cdef uint64_t best_key = 0
    cdef uint64_t key = 0
    cdef double run = best
    cdef double h, exact
    cdef uint64_t c, total = (<uint64_t>1) << (cn - 1)
    cdef int u, t, i
    for c in range(1, total):
        t = 0
        while not ((c >> t) & 1):
            t += 1
        u = t + 1
        h = _field(ptr, nb, wv, s, u)
        run += -2.0 * s[u] * h
        s[u] = -s[u]
        key ^= (<uint64_t>1) << (cn - 1 - u)
        if run >= best - 1e-7 * (1.0 + fabs(best)):
            exact = _flat_qubo(iv, jv, vval, s)
            run = exact
            if exact > best or (exact == best and key < best_key):
                best = exact
                best_key = key
                for i in range(cn):
                    best_s[i] = s[i]
    return best_arr, best


def grid_search_qco(k, nlev, lev_ptr, lev_nbr, lev_w, suffix):
    cdef const int32_t[:] ptr = lev_ptr
    cdef const int32_t[:] nb = lev_nbr
    cdef const double[:] wv = lev_w
    cdef const double[:] suf = suffix
    cdef int ck = k
    cdef int cn = nlev

    costab_arr = np.empty(ck, dtype=np.float64)
    cdef double[:] costab = costab_arr
    cdef int d
    for d in range(ck):
        costab[d] = cos((TWO_PI * d) / ck)

    digits_arr = np.zeros(cn, dtype=np.int32)
    best_arr = np.zeros(cn, dtype=np.int32)
    trial_arr = np.zeros(cn, dtype=np.int32)
    s_arr = np.zeros(cn + 1, dtype=np.float64)
    cdef int32_t[:] digits = digits_arr
    cdef int32_t[:] best_digits = best_arr
    cdef int32_t[:] trial = trial_arr
    cdef double[:] S = s_arr

    cdef double best = -np.inf
    cdef double acc
    cdef int lev, p, diff, i

    if cn == 1:
        return best_arr, 0.0
    lev = 1
    trial[1] = 0
    S[1] = 0.0
    while lev >= 1:
        if trial[lev] < ck:
            d = trial[lev]
            trial[lev] += 1
            acc = S[lev]
            for p in range(ptr[lev], ptr[lev + 1]):
                diff = digits[nb[p]] - d
                if diff < 0:
                    diff += ck
                acc += wv[p] * costab[diff]
            digits[lev] = d
            if lev + 1 == cn:
                if acc > best:
                    best = acc
                    for i in range(cn):
                        best_digits[i] = digits[i]
            else:
                if acc + suf[lev + 1] > best:
                    lev += 1
                    S[lev] = acc
                    trial[lev] = 0
        else:
            lev -= 1
    return best_arr, best


cdef double _obj_qubo(double trace, const int32_t[:] ii, const int32_t[:] jj,
                      const double[:] vv, const int8_t[:] s) nogil:
    return trace + 2.0 * _flat_qubo(ii, jj, vv, s)


def sa_qubo_run(n, indptr, nbr, w, ii, jj, vv, trace, sweeps, t_hi, t_lo, restarts, seed):
    cdef const int32_t[:] ptr = indptr
    cdef const int32_t[:] nb = nbr
    cdef const double[:] wv = w
    cdef const int32_t[:] iv = ii
    cdef const int32_t[:] jv = jj
    cdef const double[:] vval = vv
    cdef int cn = n
    cdef double ctrace = trace
    cdef long csweeps = sweeps
    cdef double cthi = t_hi
    cdef double ctlo = t_lo
    cdef int crestarts = restarts
    cdef uint64_t cseed = seed

    cdef double ratio = ctlo / cthi
    cdef long nseg = csweeps // 16

    s_arr = np.empty(cn, dtype=np.int8)
    cand_arr = np.empty(cn, dtype=np.int8)
    best_arr = np.empty(cn, dtype=np.int8)
    cdef int8_t[:] s = s_arr
    cdef int8_t[:] cand = cand_arr
    cdef int8_t[:] bs = best_arr

    cdef double best_val = -np.inf
    cdef double val, temp, dd, u1
    cdef uint64_t g
    cdef int r, i, sw, k2
    cdef long seg
    for r in range(crestarts):
        g = _derive2(cseed, SALT_SA_RESTART, <uint64_t>r)
        for i in range(cn):
            s[i] = 1 if (_next(&g) >> 63) else -1
        for i in range(cn):
            cand[i] = s[i]
        _polish_qubo(cn, ptr, nb, wv, cand)
        val = _obj_qubo(ctrace, iv, jv, vval, cand)
        if val > best_val:
            best_val = val
            for i in range(cn):
                bs[i] = cand[i]
        for seg in range(nseg):
            for i in range(cn):
                s[i] = 1 if (_next(&g) >> 63) else -1
            for sw in range(16):
                temp = cthi * pow(ratio, sw / 15.0)
                for k2 in range(cn):
                    dd = -4.0 * s[k2] * _field(ptr, nb, wv, s, k2)
                    if dd >= 0.0:
                        s[k2] = -s[k2]
                    else:
                        u1 = _uniform(&g)
                        if u1 < exp(dd / temp):
                            s[k2] = -s[k2]
            for i in range(cn):
                cand[i] = s[i]
            _polish_qubo(cn, ptr, nb, wv, cand)
            val = _obj_qubo(ctrace, iv, jv, vval, cand)
            if val > best_val:
                best_val = val
                for i in range(cn):
                    bs[i] = cand[i]
    return best_arr, best_val


cdef double _flat_qco(const int32_t[:] ii, const int32_t[:] jj, const double[:] vv,
                      const double[:] th) nogil:
    cdef double acc = 0.0
    cdef Py_ssize_t t
    for t in range(ii.shape[0]):
        acc += vv[t] * cos(th[ii[t]] - th[jj[t]])
    return acc


def sa_qco_run(n, indptr, nbr, w, ii, jj, vv, trace, sweeps, t_hi, t_lo, restarts, seed):
    cdef const int32_t[:] ptr = indptr
    cdef const int32_t[:] nb = nbr
    cdef const double[:] wv = w
    cdef const int32_t[:] iv = ii
    cdef const int32_t[:] jv = jj
    cdef const double[:] vval = vv
    cdef int cn = n
    cdef double ctrace = trace
    cdef long csweeps = sweeps
    cdef double cthi = t_hi
    cdef double ctlo = t_lo
    cdef int crestarts = restarts
    cdef uint64_t cseed = seed

    cdef double ratio = ctlo / cthi
    cdef long nseg = csweeps // 16

    th_arr = np.empty(cn, dtype=np.float64)
    cand_arr = np.empty(cn, dtype=np.float64)
    best_arr = np.empty(cn, dtype=np.float64)
    cdef double[:] th = th_arr
    cdef double[:] cand = cand_arr
    cdef double[:] bth = best_arr

    cdef double best_val = -np.inf
    cdef double val, temp, width, dd, u1, g1, g2, old, prop, t2
    cdef uint64_t g
    cdef int r, i, sw, k2, p
    cdef long seg
    for r in range(crestarts):
        g = _derive2(cseed, SALT_SA_RESTART, <uint64_t>r)
        for i in range(cn):
            th[i] = TWO_PI * _uniform(&g)
        for i in range(cn):
            cand[i] = th[i]
        _polish_qco(cn, ptr, nb, wv, cand, 100, 1e-10)
        val = ctrace + 2.0 * _flat_qco(iv, jv, vval, cand)
        if val > best_val:
            best_val = val
            for i in range(cn):
                bth[i] = cand[i]
        for seg in range(nseg):
            for i in range(cn):
                th[i] = TWO_PI * _uniform(&g)
            for sw in range(16):
                temp = cthi * pow(ratio, sw / 15.0)
                width = PI * sqrt(temp / cthi)
                for k2 in range(cn):
                    _gauss_pair(&g, &g1, &g2)
                    old = th[k2]
                    prop = fmod(old + width * g1, TWO_PI)
                    if prop != 0.0:
                        if prop < 0.0:
                            prop += TWO_PI
                    else:
                        prop = 0.0
                    dd = 0.0
                    for p in range(ptr[k2], ptr[k2 + 1]):
                        t2 = th[nb[p]]
                        dd += wv[p] * (cos(prop - t2) - cos(old - t2))
                    dd = 2.0 * dd
                    if dd >= 0.0:
                        th[k2] = prop
                    else:
                        u1 = _uniform(&g)
                        if u1 < exp(dd / temp):
                            th[k2] = prop
            for i in range(cn):
                cand[i] = th[i]
            _polish_qco(cn, ptr, nb, wv, cand, 100, 1e-10)
            val = ctrace + 2.0 * _flat_qco(iv, jv, vval, cand)
            if val > best_val:
                best_val = val
                for i in range(cn):
                    bth[i] = cand[i]
    return best_arr, best_val


def gd_run(n, indptr, nbr, w, re, im, gamma, v, sigma, u_int, ramp, fb_gain, dt,
           noise_rho, noise_theta, density_tol, phase_rate_tol, max_steps, seed,
           step0, stop_on_conv):
    cdef const int32_t[:] ptr = indptr
    cdef const int32_t[:] nb = nbr
    cdef const double[:] wv = w
    cdef double[:] rel = re
    cdef double[:] iml = im
    cdef double[:] gml = gamma
    cdef const double[:] vl = v
    cdef int cn = n
    cdef double csigma = sigma
    cdef double cu = u_int
    cdef double cramp = ramp
    cdef double cfb = fb_gain
    cdef double cdt = dt
    cdef double cnr = noise_rho
    cdef double cnt = noise_theta
    cdef double cdtol = density_tol
    cdef double cptol = phase_rate_tol
    cdef long cmax = max_steps
    cdef uint64_t cseed = seed
    cdef long cstep0 = step0
    cdef bint cstop = stop_on_conv

    cdef bint noisy = cnr != 0.0 or cnt != 0.0
    cdef double sqdt = sqrt(cdt)

    nre_arr = np.zeros(cn, dtype=np.float64)
    nim_arr = np.zeros(cn, dtype=np.float64)
    rho_arr = np.zeros(cn, dtype=np.float64)
    cdef double[:] nre = nre_arr
    cdef double[:] nim = nim_arr
    cdef double[:] rho = rho_arr

    cdef long steps_done = 0
    cdef bint converged = False
    cdef double mu = 0.0
    cdef double resid = np.inf
    cdef double spread = np.inf
    cdef double rho_sum, rho_mean, gam_sum, gam_mean, cre, cim, a, b
    cdef double g1, g2, decay, nrho_sum, maxrd, tdmin, tdmax, tdsum, nrho, rd, td
    cdef double nrho_mean
    cdef bint formed
    cdef uint64_t g = 0
    cdef long t_idx
    cdef int i, p
    for t_idx in range(cmax):
        if noisy:
            g = _derive2(cseed, SALT_GD_STEP, <uint64_t>(cstep0 + t_idx))
        rho_sum = 0.0
        for i in range(cn):
            rho[i] = rel[i] * rel[i] + iml[i] * iml[i]
            rho_sum += rho[i]
        rho_mean = rho_sum / cn
        gam_sum = 0.0
        for i in range(cn):
            gam_sum += gml[i]
        gam_mean = gam_sum / cn
        for i in range(cn):
            cre = 0.0
            cim = 0.0
            for p in range(ptr[i], ptr[i + 1]):
                cre += wv[p] * rel[nb[p]]
                cim += wv[p] * iml[nb[p]]
            a = gml[i] - csigma * rho[i]
            b = -(vl[i] + cu * rho[i])
            nre[i] = rel[i] + cdt * (a * rel[i] - b * iml[i] + cre)
            nim[i] = iml[i] + cdt * (a * iml[i] + b * rel[i] + cim)
            if noisy:
                _gauss_pair(&g, &g1, &g2)
                if gml[i] > 0.0:
                    decay = 1.0 - csigma * rho[i] / gml[i]
                    if decay < 0.0:
                        decay = 0.0
                else:
                    decay = 1.0
                nre[i] += sqdt * cnr * decay * g1
                nim[i] += sqdt * cnt * decay * g2
        for i in range(cn):
            gml[i] += cdt * (cramp - cfb * (rho[i] - rho_mean))
        nrho_sum = 0.0
        maxrd = 0.0
        tdmin = np.inf
        tdmax = -np.inf
        tdsum = 0.0
        for i in range(cn):
            nrho = nre[i] * nre[i] + nim[i] * nim[i]
            nrho_sum += nrho
            rd = (nrho - rho[i]) / cdt
            if rd < 0.0:
                rd = -rd
            if rd > maxrd:
                maxrd = rd
            td = atan2(nim[i] * rel[i] - nre[i] * iml[i], nre[i] * rel[i] + nim[i] * iml[i]) / cdt
            if td < tdmin:
                tdmin = td
            if td > tdmax:
                tdmax = td
            tdsum += td
            rel[i] = nre[i]
            iml[i] = nim[i]
        steps_done = t_idx + 1
        nrho_mean = nrho_sum / cn
        mu = tdsum / cn
        resid = maxrd
        spread = tdmax - tdmin
        formed = gam_mean > 0.0 and nrho_mean * csigma > 0.25 * gam_mean
        converged = formed and maxrd < cdtol * nrho_mean and spread < cptol
        if converged and cstop:
            break
    return steps_done, bool(converged), mu, resid, spread
