"""Numerical kernels shared by the numba and pure-numpy backends.

Everything here is written in numba-compatible numpy.  With the numba backend
active the functions are jitted; with ``TOPM_DISABLE_NUMBA=1`` the identical
source runs as plain numpy.  One source for both paths is what makes backend
equivalence a testable property rather than a hope.

No ``fastmath`` anywhere: the harness promises bit-identical trial outputs for
a fixed seed regardless of backend and worker count, which needs strict IEEE
semantics.  Reductions go through matmul (BLAS on both paths) or elementwise
ops, never ``np.sum``, whose summation order differs between backends.
"""

from __future__ import annotations

import math

import numpy as np

from ._jit import njit

# trial_chunk status codes
STOPPED = 0
TRUNCATED = 1
NEED_DRAWS = 2
TRACE_FULL = 3

# istate slots
IS_T = 0        # samples taken so far
IS_UPD = 1      # rank-one updates since the last dense recompute
IS_POS = 2      # next unread slot of the noise buffer
IS_VFOUND = 3   # 1 once a concentration violation has been seen
IS_VT = 4       # round of the first violation
IS_VI = 5
IS_VJ = 6
ISTATE_LEN = 7

# threshold kinds
THR_HEURISTIC = 0
THR_THEORETICAL = 1
THR_CLASSICAL = 2

# rule codes
J_TOP_M_EMPIRICAL = 0
J_MIN_MAX_INDEX = 1
B_MAX_OVER_OUTSIDE = 0
B_MAX_OVER_MTH = 1
SEL_LARGEST_VARIANCE = 0
SEL_GREEDY = 1
SEL_OPTIMIZED = 2
SEL_BOTH_ARMS = 3
STOP_LUCB = 0
STOP_UGAPE = 1

LAW_GAUSSIAN = 0
LAW_TABLE = 1


@njit(cache=True, nogil=True)
def threshold_value(kind, t, delta, n_dim, feat_bound, param_bound, lam, sigma, k_arms):
    """Confidence scale C_{delta,t} for round t >= 1.

    heuristic:    sqrt(2 ln((ln t + 1)/delta)), clamped at 0.
    theoretical:  sqrt(2 ln(1/delta) + N ln(1 + t L^2/(lam N))) + sqrt(lam) S / sigma.
    classical:    sqrt(beta(t, delta)/2)/sigma with beta = ln(5 K t^4 / (4 delta)),
                  so that C * sigma / sqrt(N_a) is the LUCB1 width sqrt(beta/(2 N_a)).
    """
    tf = 1.0 * t
    if kind == THR_HEURISTIC:
        v = 2.0 * math.log((math.log(tf) + 1.0) / delta)
        if v < 0.0:
            v = 0.0
        return math.sqrt(v)
    if kind == THR_THEORETICAL:
        core = 2.0 * math.log(1.0 / delta) + n_dim * math.log(
            1.0 + tf * feat_bound * feat_bound / (lam * n_dim)
        )
        return math.sqrt(core) + math.sqrt(lam) * param_bound / sigma
    beta = math.log(5.0 * k_arms * tf ** 4 / (4.0 * delta))
    if beta < 0.0:
        beta = 0.0
    return math.sqrt(beta / 2.0) / sigma


@njit(cache=True, nogil=True)
def symmetrize(mat):
    tmp = (mat + mat.T) * 0.5
    mat[:, :] = tmp


@njit(cache=True, nogil=True)
def sm_update(minv, x):
    """In-place Sherman-Morrison update of an inverse for A <- A + x x^T."""
    mx = minv @ x
    den = 1.0 + x @ mx
    minv -= mx.reshape(-1, 1) * (mx / den).reshape(1, -1)
    symmetrize(minv)


@njit(cache=True, nogil=True)
def quad_form_inv(minv, y):
    """y^T A^-1 y given the maintained inverse."""
    return y @ (minv @ y)


@njit(cache=True, nogil=True)
def round_quantities(xt, xmat, minv, bvec, level, sigma, paired):
    """Means, widths and gap indices for the current estimator state.

    xt is the (K, N) row-per-arm feature matrix and xmat its (N, K) transpose,
    both C-contiguous.  level is C_{delta,t}.  Returns (mu, W, B, G, T1) with
    G[i, j] = x_i^T A^-1 x_j and T1 = xt @ A^-1 kept for the greedy rule.
    """
    k = xt.shape[0]
    t1 = xt @ minv
    g = t1 @ xmat
    mu = t1 @ bvec
    d = np.empty(k)
    for i in range(k):
        q = g[i, i]
        if q < 0.0:
            q = 0.0
        d[i] = q
    if paired == 1:
        q2 = d.reshape(-1, 1) + d.reshape(1, -1) - 2.0 * g
        w = level * sigma * np.sqrt(np.maximum(q2, 0.0))
    else:
        root = np.sqrt(d)
        w = level * sigma * (root.reshape(-1, 1) + root.reshape(1, -1))
    b = mu.reshape(-1, 1) - mu.reshape(1, -1) + w
    return mu, w, b, g, t1


@njit(cache=True, nogil=True)
def topm_set(values, m, perm, smallest):
    """The m best arms by value; ties broken by smallest perm rank.

    smallest=1 selects the m smallest values instead of the m largest.
    Output order: best first.
    """
    k = values.shape[0]
    pr = np.argsort(perm, kind="mergesort")
    v = np.empty(k)
    for r in range(k):
        v[r] = values[pr[r]]
    if smallest == 1:
        order = np.argsort(v, kind="mergesort")
    else:
        order = np.argsort(-v, kind="mergesort")
    out = np.empty(m, np.int64)
    for i in range(m):
        out[i] = pr[order[i]]
    return out


@njit(cache=True, nogil=True)
def argbest(values, mask, perm, take_max):
    """Index of the max (or min) masked value, ties by smallest perm rank."""
    best = -1
    for a in range(values.shape[0]):
        if mask[a] == 0:
            continue
        if best < 0:
            best = a
        elif take_max == 1:
            if values[a] > values[best] or (
                values[a] == values[best] and perm[a] < perm[best]
            ):
                best = a
        else:
            if values[a] < values[best] or (
                values[a] == values[best] and perm[a] < perm[best]
            ):
                best = a
    return best


@njit(cache=True, nogil=True)
def mth_largest_excluding(col, j, m):
    """m-th largest of {col[i] : i != j}; needs m <= len(col) - 1."""
    k = col.shape[0]
    tmp = np.empty(k - 1)
    n = 0
    for i in range(k):
        if i != j:
            tmp[n] = col[i]
            n += 1
    tmp.sort()
    return tmp[k - 1 - m]


# ---------------------------------------------------------------------------
# dense two-phase simplex for the minimum-L1 design system
# ---------------------------------------------------------------------------

SIMPLEX_OK = 0
SIMPLEX_INFEASIBLE = 1
SIMPLEX_NUMERICAL = 2


@njit(cache=True, nogil=True)
def _pivot(tab, basis, row, col):
    piv = tab[row, col]
    tab[row, :] = tab[row, :] / piv
    tab[row, col] = 1.0
    nrows = tab.shape[0]
    for i in range(nrows):
        if i == row:
            continue
        f = tab[i, col]
        if f != 0.0:
            tab[i, :] = tab[i, :] - f * tab[row, :]
            tab[i, col] = 0.0
    basis[row] = col


@njit(cache=True, nogil=True)
def _simplex_iterate(tab, basis, active, n_rows, n_enter, tol, max_iter):
    """Bland-rule pivoting until optimal.  Entering columns are 0..n_enter-1.

    Returns SIMPLEX_OK on optimality, SIMPLEX_NUMERICAL if the iteration cap
    trips or no leaving row exists (cannot happen for feasible bounded L1
    programs; kept as a defensive status).
    """
    obj = tab.shape[0] - 1
    it = 0
    while True:
        it += 1
        if it > max_iter:
            return SIMPLEX_NUMERICAL
        enter = -1
        for j in range(n_enter):
            if tab[obj, j] < -tol:
                enter = j
                break
        if enter < 0:
            return SIMPLEX_OK
        leave = -1
        best_ratio = 0.0
        rhs_col = tab.shape[1] - 1
        for i in range(n_rows):
            if active[i] == 0:
                continue
            coef = tab[i, enter]
            if coef > tol:
                ratio = tab[i, rhs_col] / coef
                if leave < 0 or ratio < best_ratio or (
                    ratio == best_ratio and basis[i] < basis[leave]
                ):
                    leave = i
                    best_ratio = ratio
        if leave < 0:
            return SIMPLEX_NUMERICAL
        _pivot(tab, basis, leave, enter)


@njit(cache=True, nogil=True)
def simplex_l1(xmat, target, tol):
    """Minimum-L1 solution of X w = target by two-phase dense simplex.

    Split form: minimize sum(u) + sum(v) over u, v >= 0 subject to
    [X, -X](u; v) = target, with w = u - v.  Bland's rule in both phases, so
    the iteration cannot cycle.  Returns (status, w, l1).
    """
    n = xmat.shape[0]
    k = xmat.shape[1]
    nz = 2 * k
    ncols = nz + n + 1
    rhs_col = ncols - 1
    tab = np.zeros((n + 1, ncols))
    basis = np.empty(n, np.int64)
    active = np.ones(n, np.uint8)
    for i in range(n):
        s = 1.0
        if target[i] < 0.0:
            s = -1.0
        for j in range(k):
            tab[i, j] = s * xmat[i, j]
            tab[i, k + j] = -s * xmat[i, j]
        tab[i, nz + i] = 1.0
        tab[i, rhs_col] = s * target[i]
        basis[i] = nz + i
    # phase-1 objective: minimize the artificial mass
    for j in range(nz):
        acc = 0.0
        for i in range(n):
            acc += tab[i, j]
        tab[n, j] = -acc
    acc = 0.0
    for i in range(n):
        acc += tab[i, rhs_col]
    tab[n, rhs_col] = -acc

    max_iter = 200 * (n + k + 10)
    w = np.zeros(k)
    status = _simplex_iterate(tab, basis, active, n, nz, tol, max_iter)
    if status != SIMPLEX_OK:
        return SIMPLEX_NUMERICAL, w, 0.0
    if tab[n, rhs_col] < -tol:
        return SIMPLEX_INFEASIBLE, w, 0.0

    # drive artificials out of the basis; rows that cannot pivot on a real
    # column are redundant constraints and get deactivated
    for i in range(n):
        if basis[i] >= nz:
            enter = -1
            for j in range(nz):
                if abs(tab[i, j]) > tol:
                    enter = j
                    break
            if enter >= 0:
                _pivot(tab, basis, i, enter)
            else:
                active[i] = 0

    # phase-2 objective: all split variables cost 1
    for j in range(ncols):
        tab[n, j] = 0.0
    for j in range(nz):
        tab[n, j] = 1.0
    for i in range(n):
        if active[i] == 0:
            continue
        f = tab[n, basis[i]]
        if f != 0.0:
            tab[n, :] = tab[n, :] - f * tab[i, :]
            tab[n, basis[i]] = 0.0

    status = _simplex_iterate(tab, basis, active, n, nz, tol, max_iter)
    if status != SIMPLEX_OK:
        return SIMPLEX_NUMERICAL, w, 0.0

    for i in range(n):
        if active[i] == 0:
            continue
        col = basis[i]
        val = tab[i, rhs_col]
        if col < k:
            w[col] += val
        elif col < nz:
            w[col - k] -= val
    return SIMPLEX_OK, w, -tab[n, rhs_col]


@njit(cache=True, nogil=True)
def all_pair_designs(xmat, tol):
    """Min-L1 design weights for every unordered arm pair.

    Returns (wstar, wl1, wok): wstar[i, j] solves X w = x_i - x_j for i < j,
    wl1 the L1 values, wok a feasibility mask.
    """
    k = xmat.shape[1]
    n = xmat.shape[0]
    wstar = np.zeros((k, k, k))
    wl1 = np.zeros((k, k))
    wok = np.zeros((k, k), np.uint8)
    target = np.empty(n)
    for i in range(k):
        for j in range(i + 1, k):
            for r in range(n):
                target[r] = xmat[r, i] - xmat[r, j]
            status, w, l1 = simplex_l1(xmat, target, tol)
            if status == SIMPLEX_OK:
                wstar[i, j, :] = w
                wl1[i, j] = l1
                wok[i, j] = 1
    return wstar, wl1, wok


# ---------------------------------------------------------------------------
# the trial loop
# ---------------------------------------------------------------------------


@njit(cache=True, nogil=True)
def apply_pull(a, u, law_kind, mu_arms, table, table_len, sigma,
               xt, amat, minv, bvec, counts, istate, recompute_every):
    """Draw the reward for arm a from noise value u and update the estimator."""
    if law_kind == LAW_GAUSSIAN:
        r = mu_arms[a] + sigma * u
    else:
        idx = int(u * table_len[a])
        if idx >= table_len[a]:
            idx = table_len[a] - 1
        r = table[a, idx]
    x = xt[a]
    counts[a] += 1
    bvec += r * x
    amat += x.reshape(-1, 1) * x.reshape(1, -1)
    sm_update(minv, x)
    istate[IS_UPD] += 1
    if istate[IS_UPD] >= recompute_every:
        fresh = np.linalg.inv(amat)
        minv[:, :] = fresh
        symmetrize(minv)
        istate[IS_UPD] = 0
    istate[IS_T] += 1


@njit(cache=True, nogil=True)
def trial_chunk(
    m, epsilon, max_rounds,
    j_rule, b_rule, sel_rule, stop_rule, paired, literal_opt,
    thr_kind, delta, n_dim_f, feat_bound, param_bound, lam, sigma, k_arms_f,
    law_kind, mu_arms, table, table_len, noise_sigma,
    wstar, wl1, wok,
    monitor, mu_true,
    recompute_every,
    xt, xmat, amat, minv, bvec, counts, perm,
    istate, buf,
    trace_on, tr_t, tr_b, tr_c, tr_a1, tr_a2, tr_stat, tr_thr,
    tr_j, tr_mu, tr_w, tr_len,
    j_out, f_out,
):
    """Run gap-index rounds until stop/truncation or a buffer runs out.

    All state lives in the caller-owned arrays, so the loop is resumable: on
    NEED_DRAWS the caller refills ``buf`` (preserving the unread tail of the
    stream) and calls again; on TRACE_FULL it flushes the trace arrays.  The
    round in progress is recomputed from scratch on re-entry, which is safe
    because nothing was mutated yet.

    ``sigma`` here belongs to the threshold constant group and only enters
    the C formula; ``noise_sigma`` is the instance noise scale used for
    confidence widths and reward generation (zero for noiseless runs).
    """
    k = xt.shape[0]
    buf_len = buf.shape[0]
    while True:
        if trace_on == 1 and tr_len[0] >= tr_t.shape[0]:
            return TRACE_FULL
        if istate[IS_POS] + 2 > buf_len:
            return NEED_DRAWS

        t = istate[IS_T]
        t_round = t
        if t_round < 1:
            t_round = 1
        level = threshold_value(
            thr_kind, t_round, delta, n_dim_f, feat_bound, param_bound,
            lam, sigma, k_arms_f,
        )
        mu, wmat, bmat, g, t1 = round_quantities(
            xt, xmat, minv, bvec, level, noise_sigma, paired
        )

        if monitor == 1 and istate[IS_VFOUND] == 0:
            done = False
            for i in range(k):
                if done:
                    break
                for j in range(k):
                    if i != j and mu_true[i] - mu_true[j] > bmat[i, j]:
                        istate[IS_VFOUND] = 1
                        istate[IS_VT] = t
                        istate[IS_VI] = i
                        istate[IS_VJ] = j
                        done = True
                        break

        # candidate set J(t)
        if j_rule == J_TOP_M_EMPIRICAL:
            jset = topm_set(mu, m, perm, 0)
        else:
            score = np.empty(k)
            for j in range(k):
                score[j] = mth_largest_excluding(bmat[:, j], j, m)
            jset = topm_set(score, m, perm, 1)
        in_j = np.zeros(k, np.uint8)
        for idx in range(m):
            in_j[jset[idx]] = 1
        out_j = np.empty(k, np.uint8)
        for a in range(k):
            out_j[a] = 1 - in_j[a]

        # anchor b_t
        bval = np.full(k, -np.inf)
        for j in range(k):
            if in_j[j] == 0:
                continue
            if b_rule == B_MAX_OVER_OUTSIDE:
                best = -np.inf
                for i in range(k):
                    if out_j[i] == 1 and bmat[i, j] > best:
                        best = bmat[i, j]
                bval[j] = best
            else:
                bval[j] = mth_largest_excluding(bmat[:, j], j, m)
        b_arm = argbest(bval, in_j, perm, 1)

        # challenger c_t
        c_arm = argbest(bmat[:, b_arm], out_j, perm, 1)

        if stop_rule == STOP_LUCB:
            stat = bmat[c_arm, b_arm]
        else:
            stat = -np.inf
            for j in range(k):
                if in_j[j] == 1:
                    v = mth_largest_excluding(bmat[:, j], j, m)
                    if v > stat:
                        stat = v

        stopped = stat <= epsilon
        truncated = (not stopped) and t >= max_rounds

        row = -1
        if trace_on == 1:
            row = tr_len[0]
            tr_t[row] = t
            tr_b[row] = b_arm
            tr_c[row] = c_arm
            tr_a1[row] = -1
            tr_a2[row] = -1
            tr_stat[row] = stat
            tr_thr[row] = level
            for idx in range(m):
                tr_j[row, idx] = jset[idx]
            tr_mu[row, :] = mu
            tr_w[row, :, :] = wmat
            tr_len[0] = row + 1

        if stopped or truncated:
            for idx in range(m):
                j_out[idx] = jset[idx]
            f_out[0] = stat
            f_out[1] = level
            if stopped:
                return STOPPED
            return TRUNCATED

        # selection rule
        a1 = -1
        a2 = -1
        if sel_rule == SEL_LARGEST_VARIANCE:
            gb = g[b_arm, b_arm]
            gc = g[c_arm, c_arm]
            if gb > gc or (gb == gc and perm[b_arm] < perm[c_arm]):
                a1 = b_arm
            else:
                a1 = c_arm
        elif sel_rule == SEL_BOTH_ARMS:
            a1 = b_arm
            a2 = c_arm
        else:
            use_greedy = sel_rule == SEL_GREEDY
            if sel_rule == SEL_OPTIMIZED:
                lo = b_arm
                hi = c_arm
                if lo > hi:
                    lo = c_arm
                    hi = b_arm
                if wok[lo, hi] == 1:
                    l1v = wl1[lo, hi]
                    best = -1
                    best_score = 0.0
                    for a in range(k):
                        wa = wstar[lo, hi, a]
                        if b_arm > c_arm:
                            wa = -wa
                        if literal_opt == 1:
                            if wa > 0.0:
                                sc = counts[a] * l1v / wa
                                if best < 0 or sc > best_score or (
                                    sc == best_score and perm[a] < perm[best]
                                ):
                                    best = a
                                    best_score = sc
                        else:
                            if wa != 0.0:
                                sc = counts[a] * l1v / abs(wa)
                                if best < 0 or sc < best_score or (
                                    sc == best_score and perm[a] < perm[best]
                                ):
                                    best = a
                                    best_score = sc
                    if best >= 0:
                        a1 = best
                    else:
                        use_greedy = True
                else:
                    use_greedy = True
            if use_greedy and a1 < 0:
                y = xt[b_arm] - xt[c_arm]
                vmv = g[b_arm, b_arm] + g[c_arm, c_arm] - 2.0 * g[b_arm, c_arm]
                proj = t1 @ y
                val = np.empty(k)
                for a in range(k):
                    val[a] = vmv - proj[a] * proj[a] / (1.0 + g[a, a])
                allmask = np.ones(k, np.uint8)
                a1 = argbest(val, allmask, perm, 0)

        if row >= 0:
            tr_a1[row] = a1
            tr_a2[row] = a2

        u = buf[istate[IS_POS]]
        istate[IS_POS] += 1
        apply_pull(a1, u, law_kind, mu_arms, table, table_len, noise_sigma,
                   xt, amat, minv, bvec, counts, istate, recompute_every)
        if a2 >= 0:
            u = buf[istate[IS_POS]]
            istate[IS_POS] += 1
            apply_pull(a2, u, law_kind, mu_arms, table, table_len, noise_sigma,
                       xt, amat, minv, bvec, counts, istate, recompute_every)
