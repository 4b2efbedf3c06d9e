"""Array kernels for the slot loop.

Everything here is written in the numba-compatible subset and compiled with
``@njit`` unless ``WSLSIM_DISABLE_JIT`` is set (see :mod:`wslsim._jit`).
Flow state lives in int64 matrices whose columns are named by the constants
below; :mod:`wslsim.engine` owns allocation and growth.
"""
import math

import numpy as np

from . import core
from ._jit import JIT_ENABLED, njit

# short-flow matrix columns
S_ID = 0
S_CHAN = 1
S_ARR = 2
S_RES = 3
S_SIZE = 4
S_MSRC = 5  # index of the M-flow source, -1 for ordinary S-flows
S_INJEND = 6  # last slot with injected bits, -1 when all bits arrived at once
S_INJMAX = 7
S_RATE = 8
S_RIDX = 9
S_LMAX = 10
S_RMAX = 11
S_SFLOW = 12  # 1 for S-flows: counted by the admission cap and delay stats
S_CLASS = 13
S_NCOLS = 14

# long-flow matrix columns
L_ID = 0
L_CHAN = 1
L_Q = 2
L_ACTIVE = 3
L_INJEND = 4
L_INJMAX = 5
L_SCHEME2 = 6
L_MSRC = 7
L_RATE = 8
L_SERVED = 9
L_HOLPTR = 10
L_NCOLS = 11

# counters
C_NSHORT = 0
C_NEXTID = 1
C_NSFLOW = 2
C_OFFERED = 3
C_BLOCKED = 4
C_ADMITTED = 5
C_DEPARTED = 6
C_BITS_IN = 7
C_BITS_OUT = 8
C_NEVENTS = 9
C_LAST_KIND = 10
C_LAST_FLOW = 11
C_LAST_BITS = 12
C_LAST_ADMIT = 13
C_LAST_BLOCK = 14
C_LAST_WEST = 15
C_LAST_WTRUE = 16
C_LAST_RHS = 17
C_LAST_EMISS = 18
C_LAST_WARR = 19
C_LAST_WDEC = 20
C_LAST_WEND = 21
C_LAST_BRANCH = 22
C_SLOT = 23
C_LAST_QSQ = 24
C_NCOUNTERS = 25

# post-warmup accumulators
A_DCOUNT = 0
A_DSUM = 1
A_DSUMSQ = 2
A_NSUM = 3
A_NSUM_ALL = 4
A_SLOTS = 5
A_SLOTS_ALL = 6
A_THIRD_SUM = 7  # 7, 8, 9
A_THIRD_N = 10  # 10, 11, 12
A_SHORTDEC = 13
A_EMISS = 14
A_OFFERED = 15
A_BLOCKED = 16
A_NACC = 17

# trace columns
T_SLOT = 0
T_BRANCH = 1
T_FLOW = 2
T_BITS = 3
T_WEST = 4
T_WTRUE = 5
T_RHS = 6
T_LYAP = 7
T_NSHORT = 8
T_BLOCKED = 9
T_NCOLS = 10

# random streams within a slot
STREAM_CHANNEL = 0
STREAM_INJECT = 1
STREAM_ARRIVAL = 2
STREAM_DECISION = 3

# policy codes
POL_WSLU = 0
POL_WSLO = 1
POL_WS = 2
POL_MAXWEIGHT = 3
POL_DELAY = 4

KIND_IDLE = 0
KIND_SHORT = 1
KIND_LONG = 2

NEVER = -(2**62)

if JIT_ENABLED:
    _G = np.uint64(core.GOLDEN)
    _GS = np.uint64(core.GOLDEN_STREAM)
    _MA = np.uint64(core.MIX_A)
    _MB = np.uint64(core.MIX_B)
    _S30 = np.uint64(30)
    _S27 = np.uint64(27)
    _S31 = np.uint64(31)
    _S11 = np.uint64(11)

    @njit
    def _mix64(z):
        z = (z ^ (z >> _S30)) * _MA
        z = (z ^ (z >> _S27)) * _MB
        return z ^ (z >> _S31)

    @njit
    def stream_key(seed, slot, stream):
        k = _mix64(_mix64(np.uint64(seed)) + np.uint64(slot + 1) * _G)
        return _mix64(k + np.uint64(stream + 1) * _GS)

    @njit
    def keyed_uniform(key, index):
        z = _mix64(key + np.uint64(index + 1) * _G)
        return float(z >> _S11) * core.UNIT

else:
    stream_key = core.stream_key
    keyed_uniform = core.keyed_uniform


@njit
def sample_level(u, cdf_row, n):
    for j in range(n - 1):
        if u < cdf_row[j]:
            return j
    return n - 1


@njit
def trunc_poisson(u, mean, cap):
    p = math.exp(-mean)
    cum = p
    k = 0
    while u >= cum and k < cap:
        k += 1
        p = p * mean / k
        cum += p
    return k


@njit
def trunc_exp_size(u, mean, cap):
    x = -mean * math.log(1.0 - u)
    if x > cap:
        x = float(cap)
    n = int(math.floor(x + 0.5))
    if n < 1:
        n = 1
    return n


@njit
def ceil_div(q, r):
    return (q + r - 1) // r


@njit
def long_rhs(L, nl):
    """max_l Q_l R_l over active long flows and the lowest-id argmax."""
    best = 0
    arg = -1
    for l in range(nl):
        if L[l, L_ACTIVE] == 0:
            continue
        v = L[l, L_Q] * L[l, L_RATE]
        if arg < 0 or v > best or (v == best and L[l, L_ID] < L[arg, L_ID]):
            best = v
            arg = l
    return best, arg


@njit
def short_workload(S, n, col):
    w = 0
    for i in range(n):
        q = S[i, S_RES]
        if q > 0:
            w += ceil_div(q, S[i, col])
    return w


@njit
def pick_short(S, n, best_col, oldest, tau_bar, t, u):
    """Short-branch choice: tie-break among eligible flows, else any flow.

    A flow is eligible when its current rate clears the residual or equals
    the reference best rate held in ``best_col``.  Flows with no residual
    bits are never candidates.  Returns the row index.
    """
    cnt = 0
    top = -1
    for i in range(n):
        q = S[i, S_RES]
        if q <= 0:
            continue
        r = S[i, S_RATE]
        if r >= q or r == S[i, best_col]:
            if oldest:
                tau = t - S[i, S_ARR]
                if tau > tau_bar:
                    tau = tau_bar
                if tau > top:
                    top = tau
                    cnt = 1
                elif tau == top:
                    cnt += 1
            else:
                cnt += 1
    if cnt > 0:
        k = int(u * cnt)
        if k >= cnt:
            k = cnt - 1
        for i in range(n):
            q = S[i, S_RES]
            if q <= 0:
                continue
            r = S[i, S_RATE]
            if r >= q or r == S[i, best_col]:
                if oldest:
                    tau = t - S[i, S_ARR]
                    if tau > tau_bar:
                        tau = tau_bar
                    if tau != top:
                        continue
                if k == 0:
                    return i
                k -= 1
    # no eligible flow: uniform over every flow with bits left
    cnt = 0
    for i in range(n):
        if S[i, S_RES] > 0:
            cnt += 1
    if cnt == 0:
        return -1
    k = int(u * cnt)
    if k >= cnt:
        k = cnt - 1
    for i in range(n):
        if S[i, S_RES] > 0:
            if k == 0:
                return i
            k -= 1
    return -1


@njit
def long_hol(L, ACUM, l, t):
    if L[l, L_Q] <= 0:
        return 0
    ptr = L[l, L_HOLPTR]
    served = L[l, L_SERVED]
    while ACUM[l, ptr] <= served:
        ptr += 1
    L[l, L_HOLPTR] = ptr
    return t - ptr + 1


@njit
def decide(pol, alpha, tau_bar, t, S, n, L, nl, ACUM, u):
    """Return ``(kind, row, branch, w_est, w_true, rhs)`` for this slot.

    ``branch`` is 1 when the workload test (or the chosen baseline flow)
    selects the short side, 2 for the long side and 0 when idle.
    """
    w_est = short_workload(S, n, S_LMAX)
    w_true = short_workload(S, n, S_RMAX)
    rhs, larg = long_rhs(L, nl)
    if pol == POL_WSLU or pol == POL_WSLO or pol == POL_WS:
        w = w_true if pol == POL_WS else w_est
        if alpha * w > rhs:
            best_col = S_RMAX if pol == POL_WS else S_LMAX
            i = pick_short(S, n, best_col, pol == POL_WSLO, tau_bar, t, u)
            return KIND_SHORT, i, 1, w_est, w_true, rhs
        if larg < 0 or rhs == 0:
            return KIND_IDLE, -1, 0, w_est, w_true, rhs
        return KIND_LONG, larg, 2, w_est, w_true, rhs

    # MaxWeight and Delay-based: one argmax over every flow, lowest id on ties
    best = 0
    kind = KIND_IDLE
    row = -1
    best_id = 0
    for l in range(nl):
        if L[l, L_ACTIVE] == 0:
            continue
        if pol == POL_MAXWEIGHT:
            v = L[l, L_Q] * L[l, L_RATE]
        else:
            v = long_hol(L, ACUM, l, t) * L[l, L_RATE]
        fid = L[l, L_ID]
        if v > 0 and (v > best or (v == best and fid < best_id)):
            best = v
            kind = KIND_LONG
            row = l
            best_id = fid
    for i in range(n):
        q = S[i, S_RES]
        if q <= 0:
            continue
        if pol == POL_MAXWEIGHT:
            v = q * S[i, S_RATE]
        else:
            v = (t - S[i, S_ARR] + 1) * S[i, S_RATE]
        fid = S[i, S_ID]
        if v > 0 and (v > best or (v == best and fid < best_id)):
            best = v
            kind = KIND_SHORT
            row = i
            best_id = fid
    return kind, row, kind, w_est, w_true, rhs


@njit
def run_slots(
    t0,
    t1,
    seed,
    warmup,
    horizon,
    pol,
    alpha,
    D,
    tau_bar,
    cap,
    ch_rates,
    ch_cdf,
    ch_n,
    sc_chan,
    sc_lam,
    sc_amax,
    sc_smean,
    sc_smax,
    S,
    S_injmean,
    LAST,
    L,
    L_injmean,
    ACUM,
    CTR,
    ACC,
    ACC_L,
    ACC_M,
    TRACE,
    trace_on,
    EVENTS,
):
    """Advance the simulation over slots ``[t0, t1)``.

    Returns the first slot not executed.  Stops early when the short-flow
    matrix might overflow during the next slot so the caller can grow it.
    """
    nl = L.shape[0]
    nclass = sc_chan.shape[0]
    ncap = S.shape[0]
    max_new = nl
    for k in range(nclass):
        max_new += sc_amax[k]
    CTR[C_NEVENTS] = 0
    span = horizon - warmup

    for t in range(t0, t1):
        n = CTR[C_NSHORT]
        if n + max_new > ncap:
            return t
        CTR[C_SLOT] = t

        # 1. channel states, keyed by flow id
        kch = stream_key(seed, t, STREAM_CHANNEL)
        for l in range(nl):
            if L[l, L_ACTIVE] == 0:
                continue
            c = L[l, L_CHAN]
            j = sample_level(keyed_uniform(kch, L[l, L_ID]), ch_cdf[c], ch_n[c])
            L[l, L_RATE] = ch_rates[c, j]
        for i in range(n):
            c = S[i, S_CHAN]
            j = sample_level(keyed_uniform(kch, S[i, S_ID]), ch_cdf[c], ch_n[c])
            S[i, S_RIDX] = j
            S[i, S_RATE] = ch_rates[c, j]

        # 2. bit injection for long flows and for M-flows held in the short set
        kin = stream_key(seed, t, STREAM_INJECT)
        w_arr = 0
        for l in range(nl):
            prev = ACUM[l, t - 1] if t > 0 else 0
            x = 0
            if L[l, L_ACTIVE] != 0 and (L[l, L_INJEND] < 0 or t <= L[l, L_INJEND]):
                x = trunc_poisson(keyed_uniform(kin, L[l, L_ID]), L_injmean[l], L[l, L_INJMAX])
                L[l, L_Q] += x
                CTR[C_BITS_IN] += x
            ACUM[l, t] = prev + x
        for i in range(n):
            if S[i, S_INJEND] >= t:
                x = trunc_poisson(keyed_uniform(kin, S[i, S_ID]), S_injmean[i], S[i, S_INJMAX])
                if x > 0:
                    before = ceil_div(S[i, S_RES], S[i, S_RMAX])
                    S[i, S_RES] += x
                    S[i, S_SIZE] += x
                    CTR[C_BITS_IN] += x
                    w_arr += ceil_div(S[i, S_RES], S[i, S_RMAX]) - before

        # 3. short-flow arrivals with optional admission cap
        kar = stream_key(seed, t, STREAM_ARRIVAL)
        ja = 0
        admitted = 0
        blocked = 0
        post = t >= warmup
        for k in range(nclass):
            cnt = trunc_poisson(keyed_uniform(kar, ja), sc_lam[k], sc_amax[k])
            ja += 1
            for a in range(cnt):
                size = trunc_exp_size(keyed_uniform(kar, ja), sc_smean[k], sc_smax[k])
                ja += 1
                CTR[C_OFFERED] += 1
                if post:
                    ACC[A_OFFERED] += 1.0
                if cap >= 0 and CTR[C_NSFLOW] >= cap:
                    CTR[C_BLOCKED] += 1
                    blocked += 1
                    if post:
                        ACC[A_BLOCKED] += 1.0
                    continue
                c = sc_chan[k]
                fid = CTR[C_NEXTID]
                CTR[C_NEXTID] += 1
                S[n, S_ID] = fid
                S[n, S_CHAN] = c
                S[n, S_ARR] = t
                S[n, S_RES] = size
                S[n, S_SIZE] = size
                S[n, S_MSRC] = -1
                S[n, S_INJEND] = -1
                S[n, S_INJMAX] = 0
                S[n, S_RMAX] = ch_rates[c, ch_n[c] - 1]
                S[n, S_SFLOW] = 1
                S[n, S_CLASS] = k
                S_injmean[n] = 0.0
                for lev in range(LAST.shape[1]):
                    LAST[n, lev] = NEVER
                j = sample_level(keyed_uniform(kch, fid), ch_cdf[c], ch_n[c])
                S[n, S_RIDX] = j
                S[n, S_RATE] = ch_rates[c, j]
                n += 1
                CTR[C_NSFLOW] += 1
                CTR[C_ADMITTED] += 1
                CTR[C_BITS_IN] += size
                admitted += 1
                w_arr += ceil_div(size, S[n - 1, S_RMAX])
        CTR[C_NSHORT] = n

        # 4. learning: largest rate level seen within [t - D, t]
        lo = t - D if D >= 0 else NEVER + 1
        for i in range(n):
            LAST[i, S[i, S_RIDX]] = t
            c = S[i, S_CHAN]
            lev = ch_n[c] - 1
            while LAST[i, lev] < lo:
                lev -= 1
            S[i, S_LMAX] = ch_rates[c, lev]

        # 5. decision
        u = keyed_uniform(stream_key(seed, t, STREAM_DECISION), 0)
        kind, row, branch, w_est, w_true, rhs = decide(
            pol, alpha, tau_bar, t, S, n, L, nl, ACUM, u
        )
        qsq = 0
        for l in range(nl):
            if L[l, L_ACTIVE] != 0:
                qsq += L[l, L_Q] * L[l, L_Q]
        lyap = alpha * w_true * w_true + qsq

        # 6. transmission
        bits = 0
        served_id = -1
        w_dec = 0
        emiss = 0
        if kind == KIND_SHORT:
            q = S[row, S_RES]
            r = S[row, S_RATE]
            bits = r if r < q else q
            rm = S[row, S_RMAX]
            w_dec = ceil_div(q, rm) - ceil_div(q - bits, rm)
            S[row, S_RES] = q - bits
            served_id = S[row, S_ID]
            if branch == 1 and pol <= POL_WS:
                if S[row, S_LMAX] != rm:
                    emiss = 1
                if post:
                    ACC[A_SHORTDEC] += 1.0
                    ACC[A_EMISS] += emiss
        elif kind == KIND_LONG:
            q = L[row, L_Q]
            r = L[row, L_RATE]
            bits = r if r < q else q
            L[row, L_Q] = q - bits
            L[row, L_SERVED] += bits
            served_id = L[row, L_ID]
        CTR[C_BITS_OUT] += bits

        # 7. departures, compacting rows in place
        w = 0
        for i in range(n):
            gone = S[i, S_RES] == 0 and (S[i, S_INJEND] < 0 or t >= S[i, S_INJEND])
            if gone:
                if S[i, S_SFLOW] == 1:
                    delay = t - S[i, S_ARR] + 1
                    CTR[C_DEPARTED] += 1
                    CTR[C_NSFLOW] -= 1
                    if post:
                        ACC[A_DCOUNT] += 1.0
                        ACC[A_DSUM] += delay
                        ACC[A_DSUMSQ] += float(delay) * float(delay)
                    ne = CTR[C_NEVENTS]
                    if ne < EVENTS.shape[0]:
                        EVENTS[ne, 0] = S[i, S_ID]
                        EVENTS[ne, 1] = delay
                        CTR[C_NEVENTS] = ne + 1
                continue
            if w != i:
                for col in range(S_NCOLS):
                    S[w, col] = S[i, col]
                for lev in range(LAST.shape[1]):
                    LAST[w, lev] = LAST[i, lev]
                S_injmean[w] = S_injmean[i]
            w += 1
        n = w

        # 8. M-flows leave the long set once their last bit has arrived
        for l in range(nl):
            if L[l, L_ACTIVE] != 0 and L[l, L_SCHEME2] != 0 and L[l, L_INJEND] == t:
                L[l, L_ACTIVE] = 0
                q = L[l, L_Q]
                L[l, L_Q] = 0
                if q > 0:
                    c = L[l, L_CHAN]
                    S[n, S_ID] = L[l, L_ID]
                    S[n, S_CHAN] = c
                    S[n, S_ARR] = t + 1
                    S[n, S_RES] = q
                    S[n, S_SIZE] = q
                    S[n, S_MSRC] = L[l, L_MSRC]
                    S[n, S_INJEND] = -1
                    S[n, S_INJMAX] = 0
                    S[n, S_RATE] = 0
                    S[n, S_RIDX] = 0
                    S[n, S_LMAX] = 0
                    S[n, S_RMAX] = ch_rates[c, ch_n[c] - 1]
                    S[n, S_SFLOW] = 0
                    S[n, S_CLASS] = -1
                    S_injmean[n] = 0.0
                    for lev in range(LAST.shape[1]):
                        LAST[n, lev] = NEVER
                    n += 1
        CTR[C_NSHORT] = n

        # 9. end-of-slot statistics
        w_end = short_workload(S, n, S_RMAX)
        nsf = CTR[C_NSFLOW]
        ACC[A_NSUM_ALL] += nsf
        ACC[A_SLOTS_ALL] += 1.0
        if post:
            ACC[A_NSUM] += nsf
            ACC[A_SLOTS] += 1.0
            third = (t - warmup) * 3 // span
            ACC[A_THIRD_SUM + third] += nsf
            ACC[A_THIRD_N + third] += 1.0
            for l in range(nl):
                if L[l, L_ACTIVE] != 0:
                    ACC_L[l] += L[l, L_Q]
                    if L[l, L_MSRC] >= 0:
                        ACC_M[L[l, L_MSRC]] += L[l, L_Q]
            for i in range(n):
                if S[i, S_MSRC] >= 0:
                    ACC_M[S[i, S_MSRC]] += S[i, S_RES]

        CTR[C_LAST_KIND] = kind
        CTR[C_LAST_FLOW] = served_id
        CTR[C_LAST_BITS] = bits
        CTR[C_LAST_ADMIT] = admitted
        CTR[C_LAST_BLOCK] = blocked
        CTR[C_LAST_WEST] = w_est
        CTR[C_LAST_WTRUE] = w_true
        CTR[C_LAST_RHS] = rhs
        CTR[C_LAST_EMISS] = emiss
        CTR[C_LAST_WARR] = w_arr
        CTR[C_LAST_WDEC] = w_dec
        CTR[C_LAST_WEND] = w_end
        CTR[C_LAST_BRANCH] = branch
        CTR[C_LAST_QSQ] = qsq

        if trace_on:
            TRACE[t, T_SLOT] = t
            TRACE[t, T_BRANCH] = branch
            TRACE[t, T_FLOW] = served_id
            TRACE[t, T_BITS] = bits
            TRACE[t, T_WEST] = w_est
            TRACE[t, T_WTRUE] = w_true
            TRACE[t, T_RHS] = rhs
            TRACE[t, T_LYAP] = lyap
            TRACE[t, T_NSHORT] = n
            TRACE[t, T_BLOCKED] = CTR[C_BLOCKED]
    return t1
