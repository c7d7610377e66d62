"""Numba kernels for the jump-chain simulators.

Every kernel owns a xoshiro256** state passed in as a length-4 uint64 array,
so a sample's random stream depends only on its seed words.
"""
import numpy as np
import numba as nb

_U64 = nb.uint64
_INV53 = 1.0 / 9007199254740992.0


@nb.njit(inline="always")
def _rotl(x, k):
    return (x << _U64(k)) | (x >> _U64(64 - k))


@nb.njit(inline="always")
def next_u64(s):
    result = _rotl(s[1] * _U64(5), 7) * _U64(9)
    t = s[1] << _U64(17)
    s[2] ^= s[0]
    s[3] ^= s[1]
    s[1] ^= s[2]
    s[0] ^= s[3]
    s[2] ^= t
    s[3] = _rotl(s[3], 45)
    return result


@nb.njit(inline="always")
def uniform(s):
    """Uniform on [0, 1) with 53 random bits."""
    return (next_u64(s) >> _U64(11)) * _INV53


@nb.njit(inline="always")
def uniform_open(s):
    """Uniform on (0, 1]."""
    return ((next_u64(s) >> _U64(11)) + 1) * _INV53


@nb.njit(inline="always")
def exponential(s, rate):
    return -np.log(uniform_open(s)) / rate


@nb.njit(inline="always")
def geometric_trials(s, stay):
    """Number of trials up to and including the first exit when each trial stays w.p. ``stay``."""
    if stay <= 0.0:
        return 1
    return 1 + np.int64(np.floor(np.log(uniform_open(s)) / np.log(stay)))


@nb.njit(inline="always")
def _alias_draw(s, lo, hi, indices, prob, alias):
    deg = hi - lo
    x = uniform(s) * deg
    j = np.int64(x)
    if j >= deg:
        j = deg - 1
    frac = x - j
    if frac < prob[lo + j]:
        return indices[lo + j]
    return alias[lo + j]


# generic networks -------------------------------------------------------------------


@nb.njit(nogil=True, cache=True)
def cover_counts(indptr, indices, prob, alias, start, target, state):
    """Run the jump chain until every vertex with ``target`` set is visited.

    Returns departures per vertex; the final arrival is not a departure.
    """
    n = indptr.shape[0] - 1
    visits = np.zeros(n, dtype=np.int64)
    seen = np.zeros(n, dtype=np.bool_)
    remaining = 0
    for i in range(n):
        if target[i]:
            remaining += 1
    v = start
    seen[v] = True
    if target[v]:
        remaining -= 1
    while remaining > 0:
        visits[v] += 1
        v = _alias_draw(state, indptr[v], indptr[v + 1], indices, prob, alias)
        if not seen[v]:
            seen[v] = True
            if target[v]:
                remaining -= 1
    return visits


STOP_HIT = 0
STOP_COVER = 1
STOP_HORIZON = 2


@nb.njit(nogil=True, cache=True)
def event_path(indptr, indices, prob, alias, rates, start, kind, target, horizon, max_events, state):
    """Per-event simulation with exponential holdings.

    Returns ``(vertices, holdings)``; the last event is the state in which the
    run stopped, with its holding truncated at the stopping time.
    """
    cap = 1024
    vs = np.empty(cap, dtype=np.int64)
    hs = np.empty(cap, dtype=np.float64)
    m = 0
    n = indptr.shape[0] - 1
    seen = np.zeros(n, dtype=np.bool_)
    remaining = 0
    if kind == STOP_COVER:
        for i in range(n):
            if target[i]:
                remaining += 1
    v = start
    t = 0.0
    seen[v] = True
    if kind == STOP_COVER and target[v]:
        remaining -= 1
    while True:
        if m + 1 >= cap:
            cap *= 2
            vs2 = np.empty(cap, dtype=np.int64)
            hs2 = np.empty(cap, dtype=np.float64)
            vs2[:m] = vs[:m]
            hs2[:m] = hs[:m]
            vs, hs = vs2, hs2
        if kind == STOP_HIT and target[v]:
            break
        if kind == STOP_COVER and remaining == 0:
            break
        if m >= max_events:
            break
        hold = exponential(state, rates[v])
        if kind == STOP_HORIZON and t + hold >= horizon:
            vs[m] = v
            hs[m] = horizon - t
            m += 1
            return vs[:m], hs[:m]
        vs[m] = v
        hs[m] = hold
        m += 1
        t += hold
        v = _alias_draw(state, indptr[v], indptr[v + 1], indices, prob, alias)
        if not seen[v]:
            seen[v] = True
            if kind == STOP_COVER and target[v]:
                remaining -= 1
    vs[m] = v
    hs[m] = 0.0
    m += 1
    return vs[:m], hs[:m]


# the canonical tree ------------------------------------------------------------------


@nb.njit(cache=True)
def excursion_table(p_up, h, length, tol):
    """Law of the number of steps a walk started at the root of a height-``h``
    subtree needs to step above it.

    Only the depth of the walk matters, so a birth-death chain on ``0..h``
    suffices. Returns the CDF (index ``k`` is ``P(R <= k+1)``) truncated once the
    tail drops below ``tol`` or ``length`` entries are used, and the law of the
    depth conditioned on survival at the truncation point.
    """
    mass = np.zeros(h + 1)
    nxt = np.zeros(h + 1)
    mass[0] = 1.0
    cdf = np.empty(length)
    acc = 0.0
    k = 0
    while k < length:
        absorbed = mass[0] * (p_up if h > 0 else 1.0)
        nxt[:] = 0.0
        for d in range(h + 1):
            md = mass[d]
            if md == 0.0:
                continue
            if d == h:
                if d > 0:
                    nxt[d - 1] += md
            else:
                if d > 0:
                    nxt[d - 1] += md * p_up
                nxt[d + 1] += md * (1.0 - p_up)
        tmp = mass
        mass = nxt
        nxt = tmp
        acc += absorbed
        cdf[k] = acc
        k += 1
        if 1.0 - acc < tol:
            break
    tail = mass.copy()
    s = tail.sum()
    if s > 0:
        tail /= s
    return cdf[:k].copy(), tail


@nb.njit(nogil=True, cache=True)
def _tail_excursion(state, p_up, h, tail, start_steps):
    # depth after the tabulated steps, then plain simulation until absorption
    u = uniform(state)
    d = 0
    acc = tail[0]
    while u >= acc and d < h:
        d += 1
        acc += tail[d]
    steps = start_steps
    while d >= 0:
        steps += 1
        if d == h:
            d -= 1
        elif uniform(state) < p_up:
            d -= 1
        else:
            d += 1
    return steps


@nb.njit(inline="always")
def _sample_excursion(state, p_up, h, cdfs, offsets, lengths, tails):
    u = uniform(state)
    off = offsets[h]
    L = lengths[h]
    if u < cdfs[off + L - 1]:
        return np.searchsorted(cdfs[off:off + L], u, side="right") + 1
    return _tail_excursion(state, p_up, h, tails[h], L)


@nb.njit(nogil=True, cache=True)
def tree_cover_counts(n, p_up, max_h, bar_low, cdfs, offsets, lengths, tails, state):
    """Jump count of the biased walk on ``T_n`` from the root until cover.

    Excursions into a fully visited subtree of height ``<= max_h`` whose root
    lies at depth ``>= bar_low`` are replaced by one draw of their length.
    Returns ``(K, K_in)`` with ``K_in`` the departures from depth ``>= bar_low``.
    """
    size = (1 << (n + 1))
    first_leaf = 1 << n
    count = np.zeros(size, dtype=np.int32)
    full = np.zeros(size, dtype=np.int32)
    for m in range(n + 1):
        for i in range(1 << m, 1 << (m + 1)):
            full[i] = (1 << (n - m + 1)) - 1
    seen = np.zeros(size, dtype=np.bool_)
    v = 1
    depth = 0
    seen[1] = True
    count[1] = 1
    remaining = size - 2
    K = np.int64(0)
    K_in = np.int64(0)
    while remaining > 0:
        inside = 1 if depth >= bar_low else 0
        if v == 1:
            c = 2 if uniform(state) < 0.5 else 3
        elif v >= first_leaf:
            c = -1
        else:
            u = uniform(state)
            if u < p_up:
                c = -1
            elif (u - p_up) < 0.5 * (1.0 - p_up):
                c = 2 * v
            else:
                c = 2 * v + 1
        if c < 0:
            K += 1
            K_in += inside
            v >>= 1
            depth -= 1
        else:
            cdepth = depth + 1
            h = n - cdepth
            if count[c] == full[c] and h <= max_h and cdepth >= bar_low:
                r = _sample_excursion(state, p_up, h, cdfs, offsets, lengths, tails)
                K += 1 + r
                K_in += inside + r
                continue
            K += 1
            K_in += inside
            v = c
            depth = cdepth
        if not seen[v]:
            seen[v] = True
            remaining -= 1
            a = v
            while a >= 1:
                count[a] += 1
                a >>= 1
    return K, K_in


# symmetric chains on the leaves ------------------------------------------------------


@nb.njit(nogil=True, cache=True)
def leaf_chain_cover(n, level_cum, start, ladder_out, state):
    """Cover of the ``2**n`` leaves by a chain whose jump law depends only on the
    depth of the common ancestor.

    ``level_cum[j]`` is the cumulative probability of jumping to a leaf whose
    common ancestor with the current one has depth ``<= j``. Once every leaf
    under the ancestor of height ``h`` has been seen, the jumps spent there are
    drawn in one go (a geometric number of trials). ``ladder_out[m]`` receives the
    jump count at which every leaf ending in ``n-m`` zeros has been seen.
    Returns the total jump count.
    """
    nleaf = 1 << n
    size = 2 * nleaf
    count = np.zeros(size, dtype=np.int32)
    seen = np.zeros(nleaf, dtype=np.bool_)
    rep = np.zeros(n + 1, dtype=np.int64)
    for m in range(n + 1):
        ladder_out[m] = -1
    J = np.int64(0)

    x = start
    seen[x] = True
    a = nleaf + x
    while a >= 1:
        count[a] += 1
        a >>= 1
    tz = n
    if x != 0:
        tz = 0
        while (x >> tz) & 1 == 0:
            tz += 1
    for m in range(n - tz, n + 1):
        rep[m] += 1
        if rep[m] == (1 << m):
            ladder_out[m] = 0
    remaining = nleaf - 1
    total = level_cum[n - 1]
    while remaining > 0:
        # height of the largest fully seen block containing x
        h = 0
        a = (nleaf + x) >> 1
        while h < n - 1 and count[a] == (1 << (h + 1)):
            h += 1
            a >>= 1
        exit_mass = level_cum[n - h - 1]
        stay = 1.0 - exit_mass / total
        if stay < 0.0:
            stay = 0.0
        J += geometric_trials(state, stay)
        u = uniform(state) * exit_mass
        j = 0
        while j < n - h - 1 and u >= level_cum[j]:
            j += 1
        shift = n - j - 1
        high = (x >> (shift + 1)) << (shift + 1)
        flip = (((x >> shift) & 1) ^ 1) << shift
        low = 0
        if shift > 0:
            low = np.int64(next_u64(state) >> _U64(64 - shift))
        x = high | flip | low
        if not seen[x]:
            seen[x] = True
            remaining -= 1
            a = nleaf + x
            while a >= 1:
                count[a] += 1
                a >>= 1
            tz = n
            if x != 0:
                tz = 0
                while (x >> tz) & 1 == 0:
                    tz += 1
            for m in range(n - tz, n + 1):
                rep[m] += 1
                if rep[m] == (1 << m):
                    ladder_out[m] = J
    return J


@nb.njit(cache=True)
def build_alias(indptr, weights):
    """Vose alias tables for each CSR row of nonnegative ``weights``."""
    nnz = weights.shape[0]
    prob = np.ones(nnz)
    alias_pos = np.arange(nnz)
    small = np.empty(nnz, dtype=np.int64)
    large = np.empty(nnz, dtype=np.int64)
    for r in range(indptr.shape[0] - 1):
        lo = indptr[r]
        hi = indptr[r + 1]
        deg = hi - lo
        if deg == 0:
            continue
        tot = 0.0
        for k in range(lo, hi):
            tot += weights[k]
        ns = 0
        nl = 0
        for k in range(lo, hi):
            prob[k] = weights[k] * deg / tot
            if prob[k] < 1.0:
                small[ns] = k
                ns += 1
            else:
                large[nl] = k
                nl += 1
        while ns > 0 and nl > 0:
            ns -= 1
            s = small[ns]
            g = large[nl - 1]
            alias_pos[s] = g
            prob[g] = (prob[g] + prob[s]) - 1.0
            if prob[g] < 1.0:
                nl -= 1
                small[ns] = g
                ns += 1
        while nl > 0:
            nl -= 1
            prob[large[nl]] = 1.0
        while ns > 0:
            ns -= 1
            prob[small[ns]] = 1.0
    return prob, alias_pos
