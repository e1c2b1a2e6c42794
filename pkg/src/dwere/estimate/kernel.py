"""Jitted Monte Carlo core.

Each trial's environment is never materialized: cookies are hashed on
demand from the trial seed, exactly as :func:`dwere.env.sample_environment`
would draw them, with an optional table of pinned cookies on top.  Visit
counts live in a dense buffer centred on the origin that doubles when the
walk strays outside it and is cleared over the visited range between
trials.  Per-trial results go into a row of an int64 array, so the outcome
of a run does not depend on how chunks are scheduled.
"""

from concurrent.futures import ThreadPoolExecutor

import numba as nb
import numpy as np

from dwere import _rng

# result columns
REASON, STEPS, X_HORIZON, T_HIT, T_NEG, ZEROS, MIN_POS, MAX_POS, PERIOD, CERT_TIME = range(10)
NFIELDS = 10

# stop reasons
R_HORIZON, R_LOOPED, R_HIT, R_NEGATIVE, R_OUT_OF_WINDOW = range(5)

NEVER = -1
UNDECIDED = -2
NO_POSITION = np.iinfo(np.int64).min
FREE = -(1 << 30)

CHUNK = 4096


@nb.njit(cache=True, nogil=True)
def _cookie(seed, j, z, cdf, L, patch_lo, patch_idx, patch_vals):
    r = z - patch_lo
    if 0 <= r < patch_idx.shape[0]:
        row = patch_idx[r]
        if row >= 0:
            v = patch_vals[row, j]
            if v != FREE:
                return v
    return _rng.hashed_cookie(seed, j, z, cdf, L)


@nb.njit(cache=True, nogil=True)
def _grow(buf, off, need):
    radius = off
    while need > radius:
        radius *= 2
    nbuf = np.zeros(2 * radius + 1, dtype=np.int32)
    nbuf[radius - off : radius + off + 1] = buf
    return nbuf, radius


@nb.njit(cache=True, nogil=True)
def _simulate(seed, cdf, L, M, patch_lo, patch_idx, patch_vals, horizon, threshold,
              stop_on_hit, stop_on_negative, win_lo, win_hi, buf, off, out):
    x = 0
    t = 0
    last_fresh = 0 if M >= 2 else -1
    distinct = 1
    lo = 0
    hi = 0
    zeros = 0
    t_hit = UNDECIDED
    t_neg = UNDECIDED
    reason = R_HORIZON
    period = 0
    cert = -1
    x_hor = NO_POSITION
    while True:
        if x == 0:
            zeros += 1
        if t_hit == UNDECIDED and x >= threshold:
            t_hit = t
            if stop_on_hit:
                reason = R_HIT
                break
        if t_neg == UNDECIDED and x < 0:
            t_neg = t
            if stop_on_negative:
                reason = R_NEGATIVE
                break
        if t - last_fresh > distinct:
            # certified loop: the current position is on the cycle of the clamped map
            reason = R_LOOPED
            cert = t
            y = x
            has_zero = False
            while True:
                y += _cookie(seed, M - 1, y, cdf, L, patch_lo, patch_idx, patch_vals)
                period += 1
                if y == 0:
                    has_zero = True
                if y == x:
                    break
            if has_zero:
                zeros = -1
            if t <= horizon:
                y = x
                for _ in range((horizon - t) % period):
                    y += _cookie(seed, M - 1, y, cdf, L, patch_lo, patch_idx, patch_vals)
                x_hor = y
            if t_hit == UNDECIDED:
                t_hit = NEVER
            if t_neg == UNDECIDED:
                t_neg = NEVER
            break
        if t >= horizon:
            x_hor = x
            break
        k = buf[x + off]
        jm = k if k < M - 1 else M - 1
        y = x + _cookie(seed, jm, x, cdf, L, patch_lo, patch_idx, patch_vals)
        if y < win_lo or y > win_hi:
            reason = R_OUT_OF_WINDOW
            t += 1
            x = y
            break
        buf[x + off] = k + 1 if k < 32000 else k
        t += 1
        x = y
        if x < lo:
            lo = x
        if x > hi:
            hi = x
        if abs(x) > off:
            buf, off = _grow(buf, off, abs(x))
        ky = buf[x + off]
        if ky == 0:
            distinct += 1
        if ky < M - 1:
            last_fresh = t
    out[REASON] = reason
    out[STEPS] = t
    out[X_HORIZON] = x_hor
    out[T_HIT] = t_hit
    out[T_NEG] = t_neg
    out[ZEROS] = zeros
    out[MIN_POS] = lo
    out[MAX_POS] = hi
    out[PERIOD] = period
    out[CERT_TIME] = cert
    a = lo if lo > -off else -off
    b = hi if hi < off else off
    buf[a + off : b + off + 1] = 0
    return buf, off


@nb.njit(cache=True, nogil=True)
def run_chunk(master, start, count, cdf, L, M, patch_lo, patch_idx, patch_vals, horizon,
              threshold, stop_on_hit, stop_on_negative, win_lo, win_hi, res):
    off = 1024
    buf = np.zeros(2 * off + 1, dtype=np.int32)
    for i in range(count):
        seed = _rng.derive_seed(master, start + i)
        buf, off = _simulate(seed, cdf, L, M, patch_lo, patch_idx, patch_vals, horizon,
                             threshold, stop_on_hit, stop_on_negative, win_lo, win_hi,
                             buf, off, res[i])


@nb.njit(cache=True, nogil=True)
def plain_positions(seed, cdf, L, M, patch_lo, patch_idx, patch_vals, steps):
    """Positions ``X_0..X_steps`` with no loop detection (oracle)."""
    counts = nb.typed.Dict.empty(key_type=nb.int64, value_type=nb.int64)
    out = np.empty(steps + 1, dtype=np.int64)
    x = 0
    out[0] = 0
    for t in range(steps):
        k = 0
        if x in counts:
            k = counts[x]
        counts[x] = k + 1
        jm = min(k, M - 1)
        x += _cookie(seed, jm, x, cdf, L, patch_lo, patch_idx, patch_vals)
        out[t + 1] = x
    return out


def patch_table(patches, M):
    """Pack ``{site: stack spec}`` into the arrays the kernel reads.

    Stack specs follow :class:`dwere.constructions.PatchSet`: the last entry
    repeats upward and ``None`` leaves the hashed cookie in place.
    """
    if not patches:
        return 0, np.full(0, -1, dtype=np.int64), np.zeros((0, M), dtype=np.int64)
    sites = sorted(patches)
    lo = sites[0]
    idx = np.full(sites[-1] - lo + 1, -1, dtype=np.int64)
    vals = np.full((len(sites), M), FREE, dtype=np.int64)
    for row, z in enumerate(sites):
        spec = tuple(patches[z])
        idx[z - lo] = row
        for j in range(M):
            v = spec[min(j, len(spec) - 1)]
            if v is not None:
                vals[row, j] = v
    return lo, idx, vals


def simulate_trials(dist, M, master_seed, trials, horizon, threshold=None, patches=None,
                    stop_on_hit=False, stop_on_negative=False, window=None, workers=1,
                    first_trial=0):
    """Run ``trials`` independent walks; row ``i`` uses seed ``derive(master, first_trial+i)``."""
    L = dist.max_jump
    if threshold is None:
        threshold = np.iinfo(np.int64).max
    if window is None:
        lim = L * max(int(horizon), 1)
        window = (-lim, lim)
    plo, pidx, pvals = patch_table(patches, M)
    cdf = dist.cdf
    master = _rng.as_seed(master_seed)
    res = np.empty((trials, NFIELDS), dtype=np.int64)

    def job(start):
        n = min(CHUNK, trials - start)
        run_chunk(master, np.int64(first_trial + start), n, cdf, L, M, np.int64(plo), pidx, pvals,
                  np.int64(horizon), np.int64(threshold), stop_on_hit, stop_on_negative,
                  np.int64(window[0]), np.int64(window[1]), res[start:start + n])

    starts = range(0, trials, CHUNK)
    if workers <= 1:
        for s in starts:
            job(s)
    else:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            list(pool.map(job, starts))
    return res
