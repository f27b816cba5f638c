"""Pure-Python kernels, bit-compatible with the compiled backend.

Consensus depends on every node computing identical doubles, so these
loops are written as scalar IEEE-754 operations in a frozen order and
the compiled extension mirrors them statement for statement.  Do not
"vectorize" anything here: numpy reductions use pairwise summation and
would diverge from the C loops by ulps, which is enough to fork a
chain.  numpy appears only as a container at the call boundary.

Transcendentals (exp, log, cos, sin, atan2, pow) go through the same
platform libm in both backends, so they agree on a given host.
"""

import math

import numpy as np

from ..rng import SALT_GD_STEP, SALT_SA_RESTART, TWO_PI, SplitMix64, derive_seed

PI = 3.141592653589793

# annealing protocol constants (consensus-frozen, see baselines docs)
SEG_SWEEPS = 16
CD_CYCLES = 100
CD_TOL = 1e-10


def qubo_pair_sum(ii, jj, vv, spins) -> float:
    """Sum of v_ij * s_i * s_j over stored pairs, in storage order."""
    iil = ii.tolist()
    jjl = jj.tolist()
    vvl = vv.tolist()
    s = spins.tolist()
    acc = 0.0
    for k in range(len(iil)):
        acc += vvl[k] * (s[iil[k]] * s[jjl[k]])
    return acc


def qco_pair_sum(ii, jj, vv, phases) -> float:
    """Sum of v_ij * cos(theta_i - theta_j) over stored pairs."""
    iil = ii.tolist()
    jjl = jj.tolist()
    vvl = vv.tolist()
    th = phases.tolist()
    acc = 0.0
    for k in range(len(iil)):
        acc += vvl[k] * math.cos(th[iil[k]] - th[jjl[k]])
    return acc


def _local_field(indptr, nbr, w, s, k):
    h = 0.0
    for p in range(indptr[k], indptr[k + 1]):
        h += w[p] * s[nbr[p]]
    return h


def greedy_polish_qubo(n, indptr, nbr, w, spins) -> None:
    """Best-improvement single-flip ascent to a local maximum, in place.

    Flip gain on the objective is -4*s_k*h_k; ties go to the lowest
    node index, so the endpoint is deterministic.
    """
    ptr = indptr.tolist()
    nb = nbr.tolist()
    wl = w.tolist()
    s = spins.tolist()
    while True:
        best_gain = 0.0
        best_k = -1
        for k in range(n):
            g = -4.0 * s[k] * _local_field(ptr, nb, wl, s, k)
            if g > best_gain:
                best_gain = g
                best_k = k
        if best_k < 0:
            break
        s[best_k] = -s[best_k]
    spins[:] = s


def cd_polish_qco(n, indptr, nbr, w, phases, max_cycles, tol) -> None:
    """Coordinate-wise phase alignment (Gauss-Seidel), in place.

    Each update sets theta_i = atan2(sum w sin theta_j, sum w cos theta_j),
    the exact maximizer of node i's local objective, so the pair sum is
    non-decreasing and the sweep converges.
    """
    ptr = indptr.tolist()
    nb = nbr.tolist()
    wl = w.tolist()
    th = phases.tolist()
    for _ in range(max_cycles):
        maxd = 0.0
        for i in range(n):
            a = 0.0
            b = 0.0
            for p in range(ptr[i], ptr[i + 1]):
                t = th[nb[p]]
                a += wl[p] * math.sin(t)
                b += wl[p] * math.cos(t)
            if a == 0.0 and b == 0.0:
                continue
            tn = math.atan2(a, b)
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
    phases[:] = th


def brute_force_qubo(n, indptr, nbr, w, ii, jj, vv):
    """Exact QUBO pair-sum maximization by Gray-code enumeration.

    Spin 0 is pinned to -1 (the objective is invariant under global
    flip), halving the walk and making the returned configuration the
    lexicographically smaller of each complement pair.  Ties between
    distinct optima go to the lexicographically smallest configuration
    (-1 sorting before +1).  Returns (spins, pair_sum) with pair_sum
    recomputed exactly on the winner.
    """
    ptr = indptr.tolist()
    nb = nbr.tolist()
    wl = w.tolist()
    iil = ii.tolist()
    jjl = jj.tolist()
    vvl = vv.tolist()

    def flat(s):
        acc = 0.0
        for t in range(len(iil)):
            acc += vvl[t] * (s[iil[t]] * s[jjl[t]])
        return acc

    def lexkey(s):
        key = 0
        for i in range(n):
            if s[i] > 0:
                key |= 1 << (n - 1 - i)
        return key

    s = [-1] * n
    best = flat(s)
    run = best  # incremental pair sum, re-synced exactly at every guard hit
    best_key = lexkey(s)
    best_s = s[:]
    key = best_key
    for c in range(1, 1 << (n - 1)):
        u = (c & -c).bit_length()  # node = 1 + ctz(c)
        h = _local_field(ptr, nb, wl, s, u)
        run += -2.0 * s[u] * h
        s[u] = -s[u]
        key ^= 1 << (n - 1 - u)
        if run >= best - 1e-7 * (1.0 + abs(best)):
            exact = flat(s)
            run = exact
            if exact > best or (exact == best and key < best_key):
                best = exact
                best_key = key
                best_s = s[:]
    return np.array(best_s, dtype=np.int8), best


def grid_search_qco(k, nlev, lev_ptr, lev_nbr, lev_w, suffix):
    """Branch-and-bound over the k-point phase grid.

    Nodes were re-labelled into placement levels by the caller; level 0
    is pinned to digit 0 (global rotation symmetry).  `suffix[l]` bounds
    the total weight of edges not yet placed at level l.  Returns the
    digit vector of the first-found maximizer and its path sum.
    """
    ptr = lev_ptr.tolist()
    nb = lev_nbr.tolist()
    wl = lev_w.tolist()
    suf = suffix.tolist()
    costab = [math.cos((TWO_PI * d) / k) for d in range(k)]

    digits = [0] * nlev
    best_digits = [0] * nlev
    best = [-math.inf]

    def descend(lev, partial):
        if lev == nlev:
            if partial > best[0]:
                best[0] = partial
                best_digits[:] = digits
            return
        if partial + suf[lev] <= best[0]:
            return
        for d in range(k):
            acc = partial
            for p in range(ptr[lev], ptr[lev + 1]):
                diff = digits[nb[p]] - d
                if diff < 0:
                    diff += k
                acc += wl[p] * costab[diff]
            digits[lev] = d
            descend(lev + 1, acc)
        digits[lev] = 0

    # level 0 has no placed neighbours, digit fixed at 0
    descend(1, 0.0)
    return np.array(best_digits, dtype=np.int32), best[0]


def _obj_qubo(trace, iil, jjl, vvl, s):
    acc = 0.0
    for t in range(len(iil)):
        acc += vvl[t] * (s[iil[t]] * s[jjl[t]])
    return trace + 2.0 * acc


def sa_qubo_run(n, indptr, nbr, w, ii, jj, vv, trace, sweeps, t_hi, t_lo, restarts, seed):
    """Segmented simulated annealing on spins.

    Budget semantics: one polished random start, then floor(sweeps/16)
    independent 16-sweep geometric anneals (t_hi -> t_lo), each greedily
    polished.  Larger budgets extend the same derived RNG stream, so the
    candidate pool under budget 2B contains the pool under B and the
    returned value is monotone in the budget for a fixed seed.
    """
    ptr = indptr.tolist()
    nb = nbr.tolist()
    wl = w.tolist()
    iil = ii.tolist()
    jjl = jj.tolist()
    vvl = vv.tolist()
    ratio = t_lo / t_hi
    nseg = sweeps // SEG_SWEEPS

    best_val = -math.inf
    best_s = None
    for r in range(restarts):
        g = SplitMix64(derive_seed(seed, SALT_SA_RESTART, r))

        def rand_spins():
            return [1 if (g.next_u64() >> 63) else -1 for _ in range(n)]

        def polish_and_score(s):
            arr = np.array(s, dtype=np.int8)
            greedy_polish_qubo(n, indptr, nbr, w, arr)
            sl = arr.tolist()
            return sl, _obj_qubo(trace, iil, jjl, vvl, sl)

        cand, val = polish_and_score(rand_spins())
        if val > best_val:
            best_val = val
            best_s = cand
        for _seg in range(nseg):
            s = rand_spins()
            for sw in range(SEG_SWEEPS):
                temp = t_hi * ratio ** (sw / 15.0)
                for k2 in range(n):
                    d = -4.0 * s[k2] * _local_field(ptr, nb, wl, s, k2)
                    if d >= 0.0 or g.uniform() < math.exp(d / temp):
                        s[k2] = -s[k2]
            cand, val = polish_and_score(s)
            if val > best_val:
                best_val = val
                best_s = cand
    return np.array(best_s, dtype=np.int8), best_val


def _obj_qco(trace, iil, jjl, vvl, th):
    acc = 0.0
    for t in range(len(iil)):
        acc += vvl[t] * math.cos(th[iil[t]] - th[jjl[t]])
    return trace + 2.0 * acc


def sa_qco_run(n, indptr, nbr, w, ii, jj, vv, trace, sweeps, t_hi, t_lo, restarts, seed):
    """Segmented simulated annealing on phases; see sa_qubo_run.

    Moves are Gaussian phase kicks with width pi*sqrt(T/t_hi); polishing
    is coordinate-wise alignment.
    """
    ptr = indptr.tolist()
    nb = nbr.tolist()
    wl = w.tolist()
    iil = ii.tolist()
    jjl = jj.tolist()
    vvl = vv.tolist()
    ratio = t_lo / t_hi
    nseg = sweeps // SEG_SWEEPS

    best_val = -math.inf
    best_th = None
    for r in range(restarts):
        g = SplitMix64(derive_seed(seed, SALT_SA_RESTART, r))

        def rand_phases():
            return [TWO_PI * g.uniform() for _ in range(n)]

        def polish_and_score(th):
            arr = np.array(th, dtype=np.float64)
            cd_polish_qco(n, indptr, nbr, w, arr, CD_CYCLES, CD_TOL)
            tl = arr.tolist()
            return tl, _obj_qco(trace, iil, jjl, vvl, tl)

        cand, val = polish_and_score(rand_phases())
        if val > best_val:
            best_val = val
            best_th = cand
        for _seg in range(nseg):
            th = rand_phases()
            for sw in range(SEG_SWEEPS):
                temp = t_hi * ratio ** (sw / 15.0)
                width = PI * math.sqrt(temp / t_hi)
                for k2 in range(n):
                    g1, _ = g.gauss_pair()
                    old = th[k2]
                    prop = (old + width * g1) % TWO_PI
                    d = 0.0
                    for p in range(ptr[k2], ptr[k2 + 1]):
                        t2 = th[nb[p]]
                        d += wl[p] * (math.cos(prop - t2) - math.cos(old - t2))
                    d = 2.0 * d
                    if d >= 0.0 or g.uniform() < math.exp(d / temp):
                        th[k2] = prop
            cand, val = polish_and_score(th)
            if val > best_val:
                best_val = val
                best_th = cand
    return np.array(best_th, dtype=np.float64), best_val


def gd_run(
    n,
    indptr,
    nbr,
    w,
    re,
    im,
    gamma,
    v,
    sigma,
    u_int,
    ramp,
    fb_gain,
    dt,
    noise_rho,
    noise_theta,
    density_tol,
    phase_rate_tol,
    max_steps,
    seed,
    step0,
    stop_on_conv,
):
    """Euler-Maruyama integration of the gain-dissipative network.

    Advances psi (split into re/im) and the per-node gains in place for
    up to max_steps steps.  The noise stream for global step s is derived
    from (seed, s), so trajectories do not depend on how the integration
    is chunked.  Returns (steps_done, converged, mu, density_resid,
    phase_spread) where mu is the mean phase velocity at the last step.
    """
    ptr = indptr.tolist()
    nb = nbr.tolist()
    wl = w.tolist()
    rel = re.tolist()
    iml = im.tolist()
    gml = gamma.tolist()
    vl = v.tolist()
    noisy = noise_rho != 0.0 or noise_theta != 0.0
    sqdt = math.sqrt(dt)

    steps_done = 0
    converged = False
    mu = 0.0
    resid = math.inf
    spread = math.inf
    nre = [0.0] * n
    nim = [0.0] * n
    rho = [0.0] * n
    for t_idx in range(max_steps):
        g = SplitMix64(derive_seed(seed, SALT_GD_STEP, step0 + t_idx)) if noisy else None
        rho_sum = 0.0
        for i in range(n):
            rho[i] = rel[i] * rel[i] + iml[i] * iml[i]
            rho_sum += rho[i]
        rho_mean = rho_sum / n
        gam_sum = 0.0
        for i in range(n):
            gam_sum += gml[i]
        gam_mean = gam_sum / n
        for i in range(n):
            cre = 0.0
            cim = 0.0
            for p in range(ptr[i], ptr[i + 1]):
                cre += wl[p] * rel[nb[p]]
                cim += wl[p] * iml[nb[p]]
            a = gml[i] - sigma * rho[i]
            b = -(vl[i] + u_int * rho[i])
            nre[i] = rel[i] + dt * (a * rel[i] - b * iml[i] + cre)
            nim[i] = iml[i] + dt * (a * iml[i] + b * rel[i] + cim)
            if noisy:
                g1, g2 = g.gauss_pair()
                if gml[i] > 0.0:
                    decay = 1.0 - sigma * rho[i] / gml[i]
                    if decay < 0.0:
                        decay = 0.0
                else:
                    decay = 1.0
                nre[i] += sqdt * noise_rho * decay * g1
                nim[i] += sqdt * noise_theta * decay * g2
        for i in range(n):
            gml[i] += dt * (ramp - fb_gain * (rho[i] - rho_mean))
        nrho_sum = 0.0
        maxrd = 0.0
        tdmin = math.inf
        tdmax = -math.inf
        tdsum = 0.0
        for i in range(n):
            nrho = nre[i] * nre[i] + nim[i] * nim[i]
            nrho_sum += nrho
            rd = (nrho - rho[i]) / dt
            if rd < 0.0:
                rd = -rd
            if rd > maxrd:
                maxrd = rd
            td = math.atan2(nim[i] * rel[i] - nre[i] * iml[i], nre[i] * rel[i] + nim[i] * iml[i]) / dt
            if td < tdmin:
                tdmin = td
            if td > tdmax:
                tdmax = td
            tdsum += td
            rel[i] = nre[i]
            iml[i] = nim[i]
        steps_done = t_idx + 1
        nrho_mean = nrho_sum / n
        mu = tdsum / n
        resid = maxrd
        spread = tdmax - tdmin
        formed = gam_mean > 0.0 and nrho_mean * sigma > 0.25 * gam_mean
        converged = formed and maxrd < density_tol * nrho_mean and spread < phase_rate_tol
        if converged and stop_on_conv:
            break
    re[:] = rel
    im[:] = iml
    gamma[:] = gml
    return steps_done, converged, mu, resid, spread
